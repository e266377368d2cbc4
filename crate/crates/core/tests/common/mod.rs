//! Shared helpers for the integration suites.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use orbsplit::calibration::CalibrationInput;
use orbsplit::scenario::{
    LayerProfile, LinkSpec, OptimizerKnobs, SatelliteSpec, ScenarioSpec, WorkloadSpec,
};

/// A randomized small scenario; occasionally memory- or accuracy-infeasible
/// on purpose.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> ScenarioSpec {
    let k: usize = rng.random_range(1..=4);
    let l: usize = rng.random_range(k..=12);

    let mut satellites = vec![SatelliteSpec {
        id: 0,
        flops_per_sec: 1.0,
        mem_capacity_bytes: 1,
    }];
    for s in 1..=k {
        let mem = if rng.random_bool(0.85) {
            1u64 << 40
        } else {
            rng.random_range((1u64 << 24)..(1u64 << 28))
        };
        satellites.push(SatelliteSpec {
            id: s,
            flops_per_sec: rng.random_range(0.5e9..5e9),
            mem_capacity_bytes: mem,
        });
    }

    let layers: Vec<LayerProfile> = (0..l)
        .map(|_| LayerProfile {
            flops: rng.random_range(1e8..1e10),
            mem_bytes: rng.random_range(1..(1u64 << 26)),
            act_elements: rng.random_range(0..4000),
        })
        .collect();

    let acc_min = if rng.random_bool(0.15) {
        0.999
    } else {
        rng.random_range(0.90..0.99)
    };
    let mut acc_points = vec![(0.0, rng.random_range(0.90..0.97))];
    let extra = rng.random_range(1..=3);
    for i in 0..extra {
        let q = (i + 1) as f64 / (extra + 1) as f64;
        acc_points.push((q, rng.random_range(0.90..1.0)));
    }
    acc_points.push((1.0, rng.random_range(0.95..1.0)));

    ScenarioSpec {
        satellites,
        links: LinkSpec {
            isl_rate_bps: rng.random_range(1e6..1e9),
            s2g_rate_bps: rng.random_range(1e7..1e10),
            s2g_profile: vec![],
        },
        workload: WorkloadSpec {
            layers,
            batch_size: rng.random_range(1..=8),
            num_batches: rng.random_range(1..=6),
            pixels: rng.random_range(100..=10_000),
            classes: rng.random_range(2..=10),
            bytes_per_element_raw: 4,
            pixel_bits: 8,
            logit_bits: 32,
        },
        optimizer: OptimizerKnobs {
            grid_resolution: rng.random_range(1..=4),
            acc_min,
            brute_force_cap: 10_000_000,
        },
        calibration: CalibrationInput {
            acc_points,
            mem_base_bytes: rng.random_range(0..(1u64 << 20)),
            codec_points: vec![],
        },
        ground_flops_per_sec: Some(rng.random_range(1e10..1e13)),
    }
}
