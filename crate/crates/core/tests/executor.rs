//! Reference executor against hand computations and analytic oracles.

mod common;

use aog_forge::assembler::{LambdaPolicy, StageSpec, Stem};
use aog_forge::checks::{jitter_affine, sample_input};
use aog_forge::executor::{
    backward, dump_weights, finite_diff_gradcheck, forward, init_weights, ExecOptions,
    GradcheckOptions, Loss, Tensor, WeightStore, BETA, BIAS, GAMMA, WEIGHT,
};
use aog_forge::grammar::{count_paths, evaluation_order, NodeKey, NodeKind};
use aog_forge::ir::{NodeRole, OpKind, Section};
use aog_forge::{assemble_network, preset, NetworkIr, NetworkSpec};

/// Cifar stem and a single block of primitive size `n` with equal in/out width.
fn single_block(n: usize, word: usize, prune: bool, laterals: bool) -> NetworkSpec {
    NetworkSpec {
        name: None,
        stages: vec![StageSpec {
            primitive_size: n,
            blocks: 1,
            drop_rate: 0.0,
        }],
        channels: vec![n * word, n * word],
        stem: Stem::Cifar,
        class_count: 3,
        input_size: 4,
        prune,
        laterals,
        lambda_policy: LambdaPolicy::PathRatio,
        ..preset("tiny-cifar").unwrap()
    }
}

/// Stem emits `offsets[c]` everywhere: scale 0, positive offset.
fn constant_stem(ir: &NetworkIr, w: &mut WeightStore, offsets: &[f64]) {
    let norm = ir
        .operators
        .iter()
        .find(|o| o.provenance.section == Section::Stem && matches!(o.op, OpKind::Norm { .. }))
        .unwrap()
        .id;
    w.get_mut(norm, GAMMA)
        .unwrap()
        .iter_mut()
        .for_each(|g| *g = 0.0);
    w.get_mut(norm, BETA).unwrap().copy_from_slice(offsets);
}

fn node_output(ir: &NetworkIr, key: NodeKey) -> usize {
    ir.operators
        .iter()
        .filter(|o| o.provenance.node == Some(key) && o.provenance.role == Some(NodeRole::Output))
        .filter(|o| matches!(o.op, OpKind::Relu))
        .map(|o| o.id)
        .next_back()
        .unwrap()
}

#[test]
fn zero_branch_two_word_block_by_hand() {
    // With every residual branch at zero: t(0,0)=b[0..2], t(1,1)=b[2..4],
    // t(0,1)=b, A(0,1;0)=concat(O(0,0), O(1,1))=b, root = t(0,1) + A = 2b.
    for laterals in [false, true] {
        let ir = assemble_network(&single_block(2, 2, true, laterals)).unwrap();
        let mut w = init_weights(&ir, 9);
        let b = [0.5, 1.0, 1.5, 2.0];
        constant_stem(&ir, &mut w, &b);
        let x = sample_input(&ir, 1, 1);
        let y = forward(&ir, &w, &x, &ExecOptions::default()).unwrap();
        let head = ir.output().id;
        let wt = w.get(head, WEIGHT).unwrap();
        let bias = w.get(head, BIAS).unwrap();
        for (o, &got) in y.data().iter().enumerate() {
            let want: f64 = bias[o] + (0..4).map(|i| wt[o * 4 + i] * 2.0 * b[i]).sum::<f64>();
            assert!(
                (got - want).abs() < 1e-12,
                "laterals={laterals} class {o}: {got} vs {want}"
            );
        }
    }
}

/// Gradient of every node output implied by the combination rules alone:
/// each child receives `n(parent)/n(child)` times its parent's gradient over
/// the channels it occupies, and a non-sibling lateral source likewise.
fn gain_oracle(
    ir: &NetworkIr,
    root_grad: &[f64],
    plane: usize,
    word: usize,
) -> Vec<(NodeKey, Vec<f64>)> {
    let g = &ir.blocks[0].graph;
    let paths = count_paths(g).unwrap();
    let width = |v: usize| g.key(v).len() * word * plane;
    let mut grad: Vec<Vec<f64>> = (0..g.node_count()).map(|v| vec![0.0; width(v)]).collect();
    grad[g.root()] = root_grad.to_vec();
    for &v in evaluation_order(g).unwrap().iter().rev() {
        let gv = grad[v].clone();
        let mut add = |c: usize, offset: usize| {
            let lambda = paths[v] as f64 / paths[c] as f64;
            let n = width(c);
            for (dst, src) in grad[c].iter_mut().zip(&gv[offset..offset + n]) {
                *dst += lambda * src;
            }
        };
        match g.key(v).kind {
            NodeKind::Terminal => {}
            NodeKind::Or => g.children(v).iter().for_each(|&c| add(c, 0)),
            NodeKind::And => {
                let kids = g.children(v);
                add(kids[0], 0);
                add(kids[1], width(kids[0]));
            }
        }
        if let Some(l) = g.lateral_source(v).filter(|&l| !g.share_parent(v, l)) {
            add(l, 0);
        }
    }
    g.keys().iter().copied().zip(grad).collect()
}

fn check_gains(n: usize, prune: bool, laterals: bool) {
    let word = 2;
    let ir = assemble_network(&single_block(n, word, prune, laterals)).unwrap();
    let mut w = init_weights(&ir, 4);
    let offsets: Vec<f64> = (0..n * word).map(|c| 1.0 + c as f64 / 8.0).collect();
    constant_stem(&ir, &mut w, &offsets);
    let x = sample_input(&ir, 1, 2);
    let r = backward(&ir, &w, &x, Loss::HalfSquares, &ExecOptions::default()).unwrap();
    let root = ir.blocks[0].output;
    let root_grad = &r.value_grads[root];
    assert!(root_grad.iter().any(|&v| v != 0.0));
    let s = ir.operators[root].shape;
    let plane = s.height * s.width;
    for (key, want) in gain_oracle(&ir, root_grad, plane, word) {
        let got = &r.value_grads[node_output(&ir, key)];
        let start = key.start * word * plane;
        for (i, (&a, &b)) in got.iter().zip(&want).enumerate() {
            assert!(
                (a - b).abs() <= 1e-9 * b.abs().max(1.0),
                "N={n} {key} element {i}: {a} vs {b}"
            );
        }
        if !laterals {
            // Unit gain: each node sees exactly the root gradient over its span.
            let span = &root_grad[start..start + got.len()];
            for (&a, &b) in got.iter().zip(span) {
                assert!(
                    (a - b).abs() <= 1e-9 * b.abs().max(1.0),
                    "N={n} {key}: gain differs from 1"
                );
            }
        }
    }
}

#[test]
fn path_ratio_gives_unit_gain_without_laterals() {
    for n in 1..=5 {
        for prune in [false, true] {
            check_gains(n, prune, false);
        }
    }
}

#[test]
fn lateral_gains_match_oracle() {
    for n in 2..=5 {
        for prune in [false, true] {
            check_gains(n, prune, true);
        }
    }
}

#[test]
fn forward_deterministic_across_runs_and_workers() {
    let ir = assemble_network(&preset("tiny-cifar").unwrap()).unwrap();
    let mut w = init_weights(&ir, 12);
    jitter_affine(&ir, &mut w, 13);
    let x = sample_input(&ir, 3, 14);
    let base = forward(&ir, &w, &x, &ExecOptions { workers: 1 }).unwrap();
    for workers in [1, 2, 4] {
        let y = forward(&ir, &w, &x, &ExecOptions { workers }).unwrap();
        let a: Vec<u64> = base.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b, "workers={workers}");
    }
    assert_eq!(
        dump_weights(&init_weights(&ir, 12)),
        dump_weights(&init_weights(&ir, 12))
    );
}

#[test]
fn batch_rows_are_independent() {
    let ir = assemble_network(&preset("tiny-cifar").unwrap()).unwrap();
    let mut w = init_weights(&ir, 1);
    jitter_affine(&ir, &mut w, 2);
    let x = sample_input(&ir, 2, 3);
    let both = forward(&ir, &w, &x, &ExecOptions::default()).unwrap();
    let per = x.len() / 2;
    for b in 0..2 {
        let shape = x.shape()[1..].to_vec();
        let one = Tensor::new(shape, x.data()[b * per..(b + 1) * per].to_vec()).unwrap();
        let y = forward(&ir, &w, &one, &ExecOptions::default()).unwrap();
        assert_eq!(y.data(), &both.data()[b * 10..(b + 1) * 10]);
    }
}

#[test]
fn single_precision_tracks_double() {
    let ir = assemble_network(&preset("tiny-cifar").unwrap()).unwrap();
    let mut w = init_weights(&ir, 5);
    jitter_affine(&ir, &mut w, 6);
    let x = sample_input(&ir, 1, 7);
    let y64 = forward(&ir, &w, &x, &ExecOptions::default()).unwrap();
    let y32 = forward(&ir, &w, &x.map(|v| v as f32), &ExecOptions::default()).unwrap();
    for (a, b) in y64.data().iter().zip(y32.data()) {
        assert!((a - f64::from(*b)).abs() < 1e-4, "{a} vs {b}");
    }
}

#[test]
fn resolution_other_than_nominal() {
    let ir = assemble_network(&preset("tiny-cifar").unwrap()).unwrap();
    let w = init_weights(&ir, 5);
    let x = Tensor::filled(vec![3, 16, 16], 0.25f64);
    assert_eq!(
        forward(&ir, &w, &x, &ExecOptions::default())
            .unwrap()
            .shape(),
        &[10]
    );
}

fn gradcheck_spec(spec: &NetworkSpec, seed: u64) -> f64 {
    let ir = assemble_network(spec).unwrap();
    let mut w = init_weights(&ir, seed);
    jitter_affine(&ir, &mut w, seed + 1);
    // Non-trivial statistics exercise the normalization path too.
    for op in &ir.operators {
        if let OpKind::Norm { channels, .. } = op.op {
            let mean = (0..channels).map(|c| 0.05 * c as f64).collect();
            let var = (0..channels).map(|c| 0.5 + 0.1 * c as f64).collect();
            w.set_statistics(op.id, mean, var);
        }
    }
    let x = sample_input(&ir, 1, seed + 2);
    let opts = GradcheckOptions {
        max_samples: 300,
        loss: Loss::HalfSquares,
        seed,
        ..Default::default()
    };
    let r = finite_diff_gradcheck(&ir, &w, &x, &opts).unwrap();
    assert!(r.checked > 0);
    r.max_rel_error
}

#[test]
fn gradcheck_covers_learnable_and_ratio_lambdas() {
    for policy in [LambdaPolicy::PathRatio, LambdaPolicy::Learnable] {
        let spec = NetworkSpec {
            lambda_policy: policy,
            ..single_block(4, 2, true, true)
        };
        let err = gradcheck_spec(&spec, 21);
        assert!(err < 1e-4, "{policy:?}: {err}");
    }
}

#[test]
fn gradcheck_random_specs() {
    for seed in 0..6 {
        let spec = common::random_spec(seed);
        let err = gradcheck_spec(&spec, seed);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}
