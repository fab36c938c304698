//! IR export, DOT output and static counts checked against independent
//! readings of the serialized document.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use aog_forge::analyzer::{analyze, count_flops, count_params};
use aog_forge::assembler::{preset, PRESET_NAMES};
use aog_forge::grammar::build_block_graph;
use aog_forge::ir::{export_json, graph_to_dot, ir_to_dot, parse_json, Shape};
use aog_forge::{assemble_network, NetworkSpec};
use proptest::prelude::*;
use serde_json::Value;

fn field(v: &Value, name: &str) -> u64 {
    v[name]
        .as_u64()
        .unwrap_or_else(|| panic!("missing `{name}` in {v}"))
}

/// Parameters and MACs summed straight from the exported JSON.
fn spreadsheet(doc: &Value) -> (u64, u64) {
    let mut params = 0;
    let mut macs = 0;
    for op in doc["operators"].as_array().unwrap() {
        let kind = &op["op"];
        let out = &op["shape"];
        let numel = field(out, "channels") * field(out, "height") * field(out, "width");
        match kind["kind"].as_str().unwrap() {
            "conv" => {
                let taps =
                    field(kind, "in_channels") * field(kind, "kernel") * field(kind, "kernel");
                params += taps * field(kind, "out_channels");
                macs += taps * numel;
            }
            "norm" => params += 2 * field(kind, "channels"),
            "linear" => {
                let (i, o) = (field(kind, "in_features"), field(kind, "out_features"));
                params += i * o + o;
                macs += i * o;
            }
            "scale" if kind["lambda"]["policy"] == "learnable" => params += 1,
            _ => {}
        }
    }
    (params, macs)
}

fn check_spreadsheet(spec: &NetworkSpec) {
    let ir = assemble_network(spec).unwrap();
    let doc: Value = serde_json::from_slice(&export_json(&ir)).unwrap();
    let (params, macs) = spreadsheet(&doc);
    assert_eq!(count_params(&ir).total, params);
    assert_eq!(count_flops(&ir, ir.input_shape()).unwrap().macs, macs);
}

#[test]
fn counts_match_spreadsheet_for_presets() {
    for name in PRESET_NAMES {
        check_spreadsheet(&preset(name).unwrap());
    }
}

#[test]
fn twelve_m_against_published_size() {
    let ir = assemble_network(&preset("aognet-12m").unwrap()).unwrap();
    let r = analyze(&ir, Shape::new(3, 224, 224)).unwrap();
    let reference = r.reference.expect("published comparison at 224");
    assert!(
        reference.params_deviation.abs() <= 0.15,
        "{}",
        reference.params_deviation
    );
    assert!(
        reference.flops_deviation.abs() <= 0.15,
        "{}",
        reference.flops_deviation
    );
    assert!(!reference.note.is_empty());
}

#[test]
fn stage_breakdowns_sum_to_totals() {
    for name in PRESET_NAMES {
        let ir = assemble_network(&preset(name).unwrap()).unwrap();
        let p = count_params(&ir);
        assert_eq!(p.by_stage.values().sum::<u64>(), p.total);
        assert_eq!(p.by_kind.values().sum::<u64>(), p.total);
        let f = count_flops(&ir, ir.input_shape()).unwrap();
        assert_eq!(f.macs_by_stage.values().sum::<u64>(), f.macs);
    }
}

#[test]
fn analysis_json_has_expected_rows() {
    let ir = assemble_network(&preset("aognet-12m").unwrap()).unwrap();
    let r = analyze(&ir, ir.input_shape()).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["params"]["total"].as_u64().unwrap(), r.params.total);
    assert_eq!(v["flops"]["flops_2mac"].as_u64().unwrap(), 2 * r.flops.macs);
    assert_eq!(v["blocks"].as_array().unwrap().len(), 7);
    assert!(v["reference"]["params_deviation"].is_f64());
}

#[test]
fn export_is_byte_stable() {
    for name in PRESET_NAMES {
        let spec = preset(name).unwrap();
        let a = export_json(&assemble_network(&spec).unwrap());
        let b = export_json(&assemble_network(&spec).unwrap());
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn presets_roundtrip() {
    for name in PRESET_NAMES {
        let ir = assemble_network(&preset(name).unwrap()).unwrap();
        let bytes = export_json(&ir);
        let back = parse_json(&bytes).unwrap();
        assert_eq!(back, ir);
        assert_eq!(export_json(&back), bytes);
    }
}

#[derive(Debug, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Sym(char),
    Arrow,
}

/// Minimal DOT lexer: identifiers, quoted strings, `->` and punctuation.
fn lex(text: &str) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut it = text.chars().peekable();
    while let Some(c) = it.next() {
        match c {
            c if c.is_whitespace() => {}
            '"' => {
                let mut s = String::new();
                while let Some(c) = it.next() {
                    match c {
                        '\\' => s.push(it.next().expect("escape")),
                        '"' => break,
                        c => s.push(c),
                    }
                }
                out.push(Tok::Str(s));
            }
            '-' if it.peek() == Some(&'>') => {
                it.next();
                out.push(Tok::Arrow);
            }
            c if c.is_alphanumeric() || c == '_' || c == '.' => {
                let mut s = c.to_string();
                while let Some(&n) = it.peek() {
                    if n.is_alphanumeric() || n == '_' || n == '.' {
                        s.push(n);
                        it.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Ident(s));
            }
            c => out.push(Tok::Sym(c)),
        }
    }
    out
}

/// Statements of a `digraph NAME { ... }` body as (declared nodes, edges).
fn parse_dot(
    text: &str,
) -> (
    BTreeMap<String, BTreeMap<String, String>>,
    Vec<(String, String, bool)>,
) {
    let toks = lex(text);
    assert_eq!(toks[0], Tok::Ident("digraph".into()));
    assert_eq!(toks[2], Tok::Sym('{'));
    assert_eq!(*toks.last().unwrap(), Tok::Sym('}'));
    let body = &toks[3..toks.len() - 1];
    let mut nodes = BTreeMap::new();
    let mut edges = Vec::new();
    for stmt in body
        .split(|t| *t == Tok::Sym(';'))
        .filter(|s| !s.is_empty())
    {
        let attrs = |rest: &[Tok]| -> BTreeMap<String, String> {
            let mut m = BTreeMap::new();
            if rest.is_empty() {
                return m;
            }
            assert_eq!(rest[0], Tok::Sym('['));
            assert_eq!(*rest.last().unwrap(), Tok::Sym(']'));
            for kv in rest[1..rest.len() - 1].split(|t| *t == Tok::Sym(',')) {
                match kv {
                    [Tok::Ident(k), Tok::Sym('='), Tok::Ident(v) | Tok::Str(v)] => {
                        m.insert(k.clone(), v.clone());
                    }
                    other => panic!("bad attribute {other:?}"),
                }
            }
            m
        };
        match stmt {
            [Tok::Ident(k), Tok::Sym('='), _] if k == "rankdir" => {}
            [Tok::Ident(a), Tok::Arrow, Tok::Ident(b), rest @ ..] => {
                let lateral = attrs(rest).get("style").map(String::as_str) == Some("dashed");
                edges.push((a.clone(), b.clone(), lateral));
            }
            [Tok::Ident(id), rest @ ..] => {
                assert!(
                    nodes.insert(id.clone(), attrs(rest)).is_none(),
                    "node {id} declared twice"
                );
            }
            other => panic!("unexpected statement {other:?}"),
        }
    }
    (nodes, edges)
}

#[test]
fn block_dot_is_well_formed() {
    for n in 1..=6 {
        for prune in [false, true] {
            let g = build_block_graph(n, prune, Some(Default::default())).unwrap();
            let (nodes, edges) = parse_dot(&graph_to_dot(&g));
            assert_eq!(nodes.len(), g.node_count());
            assert_eq!(edges.len(), g.edges().len());
            let labels: BTreeSet<&str> = nodes.values().map(|a| a["label"].as_str()).collect();
            let keys: Vec<String> = g.keys().iter().map(|k| k.to_string()).collect();
            assert_eq!(labels, keys.iter().map(String::as_str).collect());
            for (a, b, _) in &edges {
                assert!(nodes.contains_key(a) && nodes.contains_key(b));
            }
            let dashed = edges.iter().filter(|e| e.2).count();
            assert_eq!(dashed, g.lateral_edges().count());
            for (id, attrs) in &nodes {
                let idx: usize = id[1..].parse().unwrap();
                let want = match g.key(idx).kind {
                    aog_forge::grammar::NodeKind::Terminal => "box",
                    aog_forge::grammar::NodeKind::And => "ellipse",
                    aog_forge::grammar::NodeKind::Or => "doublecircle",
                };
                assert_eq!(attrs["shape"], want);
            }
        }
    }
}

#[test]
fn ir_dot_is_well_formed() {
    let ir = assemble_network(&preset("tiny-cifar").unwrap()).unwrap();
    let (nodes, edges) = parse_dot(&ir_to_dot(&ir));
    assert_eq!(nodes.len(), ir.operators.len());
    let want: usize = ir.operators.iter().map(|o| o.inputs.len()).sum();
    assert_eq!(edges.len(), want);
    assert_eq!(ir_to_dot(&ir), ir_to_dot(&ir));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn random_specs_roundtrip(seed in any::<u64>()) {
        let spec = common::random_spec(seed);
        let ir = assemble_network(&spec).unwrap();
        let bytes = export_json(&ir);
        let back = parse_json(&bytes).unwrap();
        prop_assert_eq!(&back, &ir);
        prop_assert_eq!(export_json(&back), bytes);
    }

    #[test]
    fn random_specs_match_spreadsheet(seed in any::<u64>()) {
        check_spreadsheet(&common::random_spec(seed));
    }

    #[test]
    fn laterals_never_change_params(seed in any::<u64>()) {
        let spec = common::random_spec(seed);
        let on = NetworkSpec { laterals: true, ..spec.clone() };
        let off = NetworkSpec { laterals: false, ..spec };
        let p_on = count_params(&assemble_network(&on).unwrap()).total;
        let p_off = count_params(&assemble_network(&off).unwrap()).total;
        if on.lambda_policy == aog_forge::assembler::LambdaPolicy::PathRatio {
            prop_assert_eq!(p_on, p_off);
        } else {
            prop_assert!(p_on >= p_off);
        }
    }
}
