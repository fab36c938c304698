#![allow(dead_code)]

pub mod oracles;

use aog_forge::assembler::{LambdaPolicy, StageSpec, Stem};
use aog_forge::grammar::LateralStart;
use aog_forge::NetworkSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Small valid network spec drawn from `seed`. Widths are multiples of the
/// primitive sizes they feed; the input is large enough for every stride.
pub fn random_spec(seed: u64) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stage_count = rng.gen_range(1..=3);
    let stages: Vec<StageSpec> = (0..stage_count)
        .map(|_| StageSpec {
            primitive_size: rng.gen_range(1..=4),
            blocks: rng.gen_range(1..=2),
            drop_rate: if rng.gen_bool(0.3) { 0.1 } else { 0.0 },
        })
        .collect();
    let stem = if rng.gen_bool(0.5) {
        Stem::Cifar
    } else {
        Stem::Imagenet
    };
    let channels = (0..=stage_count)
        .map(|i| {
            let mut base = if i == 0 && stem == Stem::Imagenet {
                2
            } else {
                1
            };
            if i > 0 {
                base = lcm(base, stages[i - 1].primitive_size);
            }
            if i < stage_count {
                base = lcm(base, stages[i].primitive_size);
            }
            base * rng.gen_range(1..=3)
        })
        .collect();
    let reduction = if stem == Stem::Imagenet { 4 } else { 1 } << (stage_count - 1);
    NetworkSpec {
        name: None,
        stages,
        channels,
        stem,
        head: Default::default(),
        class_count: rng.gen_range(1..=5),
        input_channels: rng.gen_range(1..=3),
        input_size: reduction * rng.gen_range(1..=2),
        prune: rng.gen_bool(0.5),
        laterals: rng.gen_bool(0.5),
        lateral_start: if rng.gen_bool(0.5) {
            LateralStart::LeftToRight
        } else {
            LateralStart::RightToLeft
        },
        lambda_policy: if rng.gen_bool(0.5) {
            LambdaPolicy::PathRatio
        } else {
            LambdaPolicy::Learnable
        },
        bottleneck_ratio: rng.gen_range(1..=4),
        kernel: if rng.gen_bool(0.8) { 3 } else { 1 },
    }
}
