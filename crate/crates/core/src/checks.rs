//! Self-checks run by `aog-forge check`: structural invariants on the full
//! network, numeric ones on a downscaled copy.

use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analyzer::{count_flops, count_params};
use crate::assembler::{assemble_network, NetworkSpec, Stem};
use crate::executor::{
    calibrate_norms, finite_diff_gradcheck, forward, init_weights, ExecOptions, GradcheckOptions,
    Tensor, WeightStore, BETA, GAMMA,
};
use crate::grammar::{build_block_graph, count_paths, evaluation_order, prune_symmetric, NodeKind};
use crate::ir::{export_json, parse_json, NetworkIr, OpKind};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Same topology with small widths, at most two blocks per stage and the
/// smallest input that still reaches a `1x1` final feature map.
pub fn downscale(spec: &NetworkSpec) -> NetworkSpec {
    let sizes: Vec<usize> = spec.stages.iter().map(|s| s.primitive_size).collect();
    let channels = (0..spec.channels.len())
        .map(|i| {
            let mut base = 1usize;
            if i == 0 && spec.stem == Stem::Imagenet {
                base = 2;
            }
            if i > 0 {
                base = base.lcm(&sizes[i - 1]);
            }
            if i < sizes.len() {
                base = base.lcm(&sizes[i]);
            }
            base * 8usize.div_ceil(base)
        })
        .collect();
    let stem_reduction = match spec.stem {
        Stem::Imagenet => 4,
        Stem::Cifar => 1,
    };
    let mut stages = spec.stages.clone();
    for s in &mut stages {
        s.blocks = s.blocks.min(2);
    }
    NetworkSpec {
        name: spec.name.as_ref().map(|n| format!("{n}-downscaled")),
        stages,
        channels,
        class_count: spec.class_count.min(10),
        input_size: stem_reduction << (spec.stages.len() - 1),
        ..spec.clone()
    }
}

/// Draw every norm scale and offset away from its initial value so that
/// residual branches carry signal.
pub fn jitter_affine(ir: &NetworkIr, w: &mut WeightStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for op in &ir.operators {
        if let OpKind::Norm { .. } = op.op {
            for v in w.get_mut(op.id, GAMMA).expect("norm has a scale") {
                *v = rng.gen_range(0.5..1.5);
            }
            for v in w.get_mut(op.id, BETA).expect("norm has an offset") {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
    }
}

/// Deterministic pseudo-random input of the network's nominal shape.
pub fn sample_input(ir: &NetworkIr, batch: usize, seed: u64) -> Tensor<f64> {
    let s = ir.input_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = batch * s.numel();
    Tensor::new(
        vec![batch, s.channels, s.height, s.width],
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("sized to match")
}

fn outcome(name: &'static str, r: Result<String, String>) -> CheckOutcome {
    match r {
        Ok(detail) => CheckOutcome {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckOutcome {
            name,
            passed: false,
            detail,
        },
    }
}

fn check_grammar(spec: &NetworkSpec) -> Result<String, String> {
    let mut sizes: Vec<usize> = spec.stages.iter().map(|s| s.primitive_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for &n in &sizes {
        let full = build_block_graph(n, false, None).map_err(|e| e.to_string())?;
        let (t, a, o) = (
            full.count_kind(NodeKind::Terminal),
            full.count_kind(NodeKind::And),
            full.count_kind(NodeKind::Or),
        );
        let want = (n * (n + 1) / 2, (n * n * n - n) / 6, n * (n + 1) / 2);
        if (t, a, o) != want {
            return Err(format!(
                "N={n}: counts {t}/{a}/{o}, expected {}/{}/{}",
                want.0, want.1, want.2
            ));
        }
        let block = build_block_graph(n, spec.prune, spec.laterals.then_some(spec.lateral_start))
            .map_err(|e| e.to_string())?;
        evaluation_order(&block).map_err(|e| format!("N={n}: {e}"))?;
        let paths = count_paths(&block).map_err(|e| format!("N={n}: {e}"))?;
        if paths.contains(&0) {
            return Err(format!("N={n}: a node is unreachable from the root"));
        }
        let pruned = prune_symmetric(&full).map_err(|e| e.to_string())?;
        if prune_symmetric(&pruned).map_err(|e| e.to_string())? != pruned {
            return Err(format!("N={n}: pruning is not idempotent"));
        }
    }
    Ok(format!("primitive sizes {sizes:?}"))
}

fn check_ir(ir: &NetworkIr) -> Result<String, String> {
    ir.validate().map_err(|e| e.to_string())?;
    let bytes = export_json(ir);
    let back = parse_json(&bytes).map_err(|e| e.to_string())?;
    if back != *ir || export_json(&back) != bytes {
        return Err("JSON round trip changed the IR".into());
    }
    Ok(format!(
        "{} operators, {} bytes",
        ir.operators.len(),
        bytes.len()
    ))
}

fn check_params(spec: &NetworkSpec, ir: &NetworkIr, seed: u64) -> Result<String, String> {
    let counted = count_params(ir).total;
    let w = init_weights(ir, seed);
    w.check_against(ir).map_err(|e| e.to_string())?;
    if w.scalar_count() != counted {
        return Err(format!(
            "analyzer counts {counted}, initializer creates {}",
            w.scalar_count()
        ));
    }
    let toggled = NetworkSpec {
        laterals: !spec.laterals,
        ..spec.clone()
    };
    let other = count_params(&assemble_network(&toggled).map_err(|e| e.to_string())?).total;
    if other != counted {
        return Err(format!(
            "lateral toggle changes parameter count {counted} -> {other}"
        ));
    }
    Ok(format!("{counted} parameters"))
}

fn check_flops(ir: &NetworkIr) -> Result<String, String> {
    let f = count_flops(ir, ir.input_shape()).map_err(|e| e.to_string())?;
    let staged: u64 = f.macs_by_stage.values().sum();
    if staged != f.macs
        || f.flops_2mac != 2 * f.macs
        || f.total_ops != f.flops_2mac + f.elementwise_ops
    {
        return Err("FLOP breakdown does not add up".into());
    }
    Ok(format!("{} MACs", f.macs))
}

fn check_forward(ir: &NetworkIr, seed: u64) -> Result<String, String> {
    let mut w = init_weights(ir, seed);
    jitter_affine(ir, &mut w, seed ^ 0x5eed);
    let x = sample_input(ir, 2, seed);
    let a = forward(ir, &w, &x, &ExecOptions { workers: 1 }).map_err(|e| e.to_string())?;
    let b = forward(ir, &w, &x, &ExecOptions { workers: 2 }).map_err(|e| e.to_string())?;
    if a != b {
        return Err("outputs differ between 1 and 2 workers".into());
    }
    Ok(format!("output shape {:?}", a.shape()))
}

fn check_gradients(ir: &NetworkIr, seed: u64) -> Result<String, String> {
    let mut w = init_weights(ir, seed);
    jitter_affine(ir, &mut w, seed ^ 0x5eed);
    calibrate_norms(ir, &mut w, &sample_input(ir, 4, seed ^ 0xca1)).map_err(|e| e.to_string())?;
    let x = sample_input(ir, 1, seed);
    let r = finite_diff_gradcheck(
        ir,
        &w,
        &x,
        &GradcheckOptions {
            seed,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let summary = format!(
        "max relative error {:.3e} over {} probes ({} skipped at kinks)",
        r.max_rel_error, r.checked, r.skipped_kinks
    );
    if r.checked == 0 || r.max_rel_error >= GRADCHECK_TOLERANCE {
        Err(summary)
    } else {
        Ok(summary)
    }
}

/// Run every check; failures are reported, not returned as errors.
pub fn run_checks(spec: &NetworkSpec, seed: u64) -> CheckReport {
    let mut checks = vec![outcome("grammar", check_grammar(spec))];
    match assemble_network(spec) {
        Ok(ir) => {
            checks.push(outcome("ir", check_ir(&ir)));
            checks.push(outcome("params", check_params(spec, &ir, seed)));
            checks.push(outcome("flops", check_flops(&ir)));
        }
        Err(e) => checks.push(outcome("assemble", Err(e.to_string()))),
    }
    let small = downscale(spec);
    match assemble_network(&small) {
        Ok(ir) => {
            checks.push(outcome("forward", check_forward(&ir, seed)));
            checks.push(outcome("gradcheck", check_gradients(&ir, seed)));
        }
        Err(e) => checks.push(outcome("downscale", Err(e.to_string()))),
    }
    CheckReport { seed, checks }
}
