//! Scenario definition: the satellite chain, link rates, model workload and
//! optimization knobs, loaded from a single JSON document.
//!
//! Satellite id 0 is the sensing satellite (data source only); ids 1..=K are
//! the compute satellites hosting sub-models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationInput;
use crate::error::{Error, Result};

/// One satellite in the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteSpec {
    /// 0 = sensing satellite, 1..=K = compute satellites.
    pub id: usize,
    /// Computing capability f_k in FLOPs/s.
    pub flops_per_sec: f64,
    /// Onboard memory budget in bytes.
    pub mem_capacity_bytes: u64,
}

/// Piecewise-constant satellite-to-ground rate segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSegment {
    pub start_time_s: f64,
    pub rate_bps: f64,
}

/// Link rates for the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    /// Inter-satellite link rate r_sat, bits/s.
    pub isl_rate_bps: f64,
    /// Satellite-to-ground rate r_gs, bits/s.
    pub s2g_rate_bps: f64,
    /// Optional piecewise-constant override of the S2G rate over time.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s2g_profile: Vec<RateSegment>,
}

impl LinkSpec {
    /// S2G rate in effect at time `t` (seconds). Uses the profile segment
    /// containing `t` when a profile is present, else the flat rate.
    pub fn s2g_rate_at(&self, t: f64) -> f64 {
        let mut rate = self.s2g_rate_bps;
        for seg in &self.s2g_profile {
            if seg.start_time_s <= t {
                rate = seg.rate_bps;
            } else {
                break;
            }
        }
        rate
    }
}

/// Per-layer cost profile (per mini-batch of `batch_size` samples for flops).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    /// FLOPs to execute this layer for one mini-batch.
    pub flops: f64,
    /// Parameter + working memory contribution in bytes.
    pub mem_bytes: u64,
    /// Elements of this layer's output activation per sample (S·D).
    pub act_elements: u64,
}

fn default_pixel_bits() -> u32 {
    8
}
fn default_logit_bits() -> u32 {
    32
}
fn default_bytes_per_element() -> u32 {
    4
}

/// The model workload pushed through the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub layers: Vec<LayerProfile>,
    /// Samples per mini-batch (N).
    pub batch_size: u64,
    /// Pipelined mini-batches (B).
    pub num_batches: u64,
    /// Pixels per input sample (P).
    pub pixels: u64,
    /// Output categories (E).
    pub classes: u64,
    /// Width of one uncompressed activation element, bytes.
    #[serde(default = "default_bytes_per_element")]
    pub bytes_per_element_raw: u32,
    /// Bits per input pixel.
    #[serde(default = "default_pixel_bits")]
    pub pixel_bits: u32,
    /// Bits per output logit.
    #[serde(default = "default_logit_bits")]
    pub logit_bits: u32,
}

impl WorkloadSpec {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn total_flops(&self) -> f64 {
        self.layers.iter().map(|l| l.flops).sum()
    }

    pub fn total_mem_bytes(&self) -> u64 {
        self.layers.iter().map(|l| l.mem_bytes).sum()
    }

    /// Generates a transformer-like uniform profile: every block costs
    /// 12·N·S·D² FLOPs, holds 12·D² parameters at 4 bytes each, and emits an
    /// S·D activation. Stand-in for unavailable per-layer measurements.
    #[allow(clippy::too_many_arguments)]
    pub fn transformer_like(
        num_layers: usize,
        seq_len: u64,
        hidden_dim: u64,
        batch_size: u64,
        num_batches: u64,
        pixels: u64,
        classes: u64,
    ) -> WorkloadSpec {
        let flops = 12.0 * batch_size as f64 * seq_len as f64 * (hidden_dim as f64).powi(2);
        let mem = 12 * hidden_dim * hidden_dim * 4;
        let layer = LayerProfile {
            flops,
            mem_bytes: mem,
            act_elements: seq_len * hidden_dim,
        };
        WorkloadSpec {
            layers: vec![layer; num_layers],
            batch_size,
            num_batches,
            pixels,
            classes,
            bytes_per_element_raw: default_bytes_per_element(),
            pixel_bits: default_pixel_bits(),
            logit_bits: default_logit_bits(),
        }
    }
}

/// Optimization knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerKnobs {
    /// Grid resolution N: compression ratios are drawn from {0, 1/N, .., 1}.
    pub grid_resolution: u32,
    /// Minimum acceptable per-stage accuracy Acc_min.
    pub acc_min: f64,
    /// Refuse brute-force enumeration beyond this many candidate evaluations.
    #[serde(default = "default_brute_force_cap")]
    pub brute_force_cap: u64,
}

fn default_brute_force_cap() -> u64 {
    10_000_000
}

/// The full input universe for one planning/simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Sensing satellite (id 0) plus K compute satellites (ids 1..=K).
    pub satellites: Vec<SatelliteSpec>,
    pub links: LinkSpec,
    pub workload: WorkloadSpec,
    pub optimizer: OptimizerKnobs,
    pub calibration: CalibrationInput,
    /// Ground-station compute capability, FLOPs/s; required by the
    /// ground-only baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_flops_per_sec: Option<f64>,
}

impl ScenarioSpec {
    /// Number of compute satellites K.
    pub fn num_compute(&self) -> usize {
        self.satellites.len().saturating_sub(1)
    }

    /// Compute satellite for stage k (1-based stage index).
    pub fn compute_sat(&self, stage: usize) -> &SatelliteSpec {
        &self.satellites[stage]
    }

    pub fn validate(&self) -> Result<()> {
        if self.satellites.len() < 2 {
            return Err(Error::validation(
                "satellites",
                "need the sensing satellite plus at least one compute satellite",
            ));
        }
        for (i, sat) in self.satellites.iter().enumerate() {
            let p = format!("satellites[{i}]");
            if sat.id != i {
                return Err(Error::validation(
                    format!("{p}.id"),
                    format!(
                        "ids must be contiguous from 0; expected {i}, got {}",
                        sat.id
                    ),
                ));
            }
            if !sat.flops_per_sec.is_finite() || sat.flops_per_sec <= 0.0 {
                return Err(Error::validation(
                    format!("{p}.flops_per_sec"),
                    "must be finite and > 0",
                ));
            }
            if sat.mem_capacity_bytes == 0 {
                return Err(Error::validation(
                    format!("{p}.mem_capacity_bytes"),
                    "must be > 0",
                ));
            }
        }
        if !self.links.isl_rate_bps.is_finite() || self.links.isl_rate_bps <= 0.0 {
            return Err(Error::validation(
                "links.isl_rate_bps",
                "must be finite and > 0",
            ));
        }
        if !self.links.s2g_rate_bps.is_finite() || self.links.s2g_rate_bps <= 0.0 {
            return Err(Error::validation(
                "links.s2g_rate_bps",
                "must be finite and > 0",
            ));
        }
        let mut prev_start = f64::NEG_INFINITY;
        for (i, seg) in self.links.s2g_profile.iter().enumerate() {
            let p = format!("links.s2g_profile[{i}]");
            if !seg.rate_bps.is_finite() || seg.rate_bps <= 0.0 {
                return Err(Error::validation(
                    format!("{p}.rate_bps"),
                    "must be finite and > 0",
                ));
            }
            if seg.start_time_s <= prev_start {
                return Err(Error::validation(
                    format!("{p}.start_time_s"),
                    "segment start times must be strictly increasing",
                ));
            }
            prev_start = seg.start_time_s;
        }
        let w = &self.workload;
        if w.layers.is_empty() {
            return Err(Error::validation("workload.layers", "must be nonempty"));
        }
        for (i, layer) in w.layers.iter().enumerate() {
            let p = format!("workload.layers[{i}]");
            if !layer.flops.is_finite() || layer.flops < 0.0 {
                return Err(Error::validation(
                    format!("{p}.flops"),
                    "must be finite and >= 0",
                ));
            }
        }
        for (path, v) in [
            ("workload.batch_size", w.batch_size),
            ("workload.num_batches", w.num_batches),
            ("workload.pixels", w.pixels),
            ("workload.classes", w.classes),
        ] {
            if v == 0 {
                return Err(Error::validation(path, "must be >= 1"));
            }
        }
        for (path, v) in [
            ("workload.bytes_per_element_raw", w.bytes_per_element_raw),
            ("workload.pixel_bits", w.pixel_bits),
            ("workload.logit_bits", w.logit_bits),
        ] {
            if v == 0 {
                return Err(Error::validation(path, "must be >= 1"));
            }
        }
        if self.optimizer.grid_resolution < 1 {
            return Err(Error::validation(
                "optimizer.grid_resolution",
                "must be >= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.optimizer.acc_min) {
            return Err(Error::validation("optimizer.acc_min", "must lie in [0, 1]"));
        }
        if let Some(g) = self.ground_flops_per_sec {
            if !g.is_finite() || g <= 0.0 {
                return Err(Error::validation(
                    "ground_flops_per_sec",
                    "must be finite and > 0",
                ));
            }
        }
        self.calibration.validate("calibration")?;
        Ok(())
    }
}

/// Loads and validates a scenario from a JSON file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

/// Parses and validates a scenario from a JSON string.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let scn: ScenarioSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    scn.validate()?;
    Ok(scn)
}

/// Writes a scenario as pretty-printed JSON.
pub fn write_scenario(scn: &ScenarioSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(scn).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Data sizes crossing the three link kinds for a split right after
/// `stage_boundary_layer` (0-based layer index).
///
/// Returns (input_bits, act_bits, output_bits):
///   input  = N · P · pixel_bits
///   act    = N · act_elements(boundary) · 8 · bytes_per_element_raw
///   output = N · E · logit_bits
pub fn data_sizes(w: &WorkloadSpec, stage_boundary_layer: usize) -> Result<(u64, u64, u64)> {
    if stage_boundary_layer >= w.layers.len() {
        return Err(Error::Domain(format!(
            "stage_boundary_layer {} out of range (L = {})",
            stage_boundary_layer,
            w.layers.len()
        )));
    }
    let input = w.batch_size * w.pixels * w.pixel_bits as u64;
    let act = w.batch_size
        * w.layers[stage_boundary_layer].act_elements
        * 8
        * w.bytes_per_element_raw as u64;
    let output = w.batch_size * w.classes * w.logit_bits as u64;
    Ok((input, act, output))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::CalibrationInput;

    pub(crate) fn demo_calibration() -> CalibrationInput {
        CalibrationInput {
            acc_points: vec![(0.2, 0.980), (1.0, 0.985)],
            mem_base_bytes: 0,
            codec_points: vec![],
        }
    }

    fn demo_scenario() -> ScenarioSpec {
        ScenarioSpec {
            satellites: vec![
                SatelliteSpec {
                    id: 0,
                    flops_per_sec: 1.0,
                    mem_capacity_bytes: 1,
                },
                SatelliteSpec {
                    id: 1,
                    flops_per_sec: 5e12,
                    mem_capacity_bytes: 8 << 30,
                },
                SatelliteSpec {
                    id: 2,
                    flops_per_sec: 10e12,
                    mem_capacity_bytes: 8 << 30,
                },
            ],
            links: LinkSpec {
                isl_rate_bps: 0.5e9,
                s2g_rate_bps: 6e9,
                s2g_profile: vec![],
            },
            workload: WorkloadSpec::transformer_like(12, 197, 768, 64, 4, 224 * 224, 10),
            optimizer: OptimizerKnobs {
                grid_resolution: 4,
                acc_min: 0.9,
                brute_force_cap: default_brute_force_cap(),
            },
            calibration: demo_calibration(),
            ground_flops_per_sec: Some(40e12),
        }
    }

    #[test]
    fn roundtrip_through_json() {
        let scn = demo_scenario();
        let text = serde_json::to_string(&scn).unwrap();
        let back = parse_scenario(&text).unwrap();
        assert_eq!(scn, back);
    }

    #[test]
    fn table_ii_values_echoed() {
        let mut scn = demo_scenario();
        scn.satellites.push(SatelliteSpec {
            id: 3,
            flops_per_sec: 1e12,
            mem_capacity_bytes: 8 << 30,
        });
        scn.satellites.push(SatelliteSpec {
            id: 4,
            flops_per_sec: 1e12,
            mem_capacity_bytes: 8 << 30,
        });
        let text = serde_json::to_string(&scn).unwrap();
        let back = parse_scenario(&text).unwrap();
        assert_eq!(back.satellites.len(), 5);
        assert_eq!(back.links.isl_rate_bps, 0.5e9);
        assert_eq!(back.links.s2g_rate_bps, 6e9);
        assert_eq!(back.workload.batch_size, 64);
    }

    #[test]
    fn zero_flops_rejected_with_path() {
        let mut scn = demo_scenario();
        scn.satellites[1].flops_per_sec = 0.0;
        let text = serde_json::to_string(&scn).unwrap();
        let err = parse_scenario(&text).unwrap_err();
        match err {
            Error::Validation { path, .. } => assert_eq!(path, "satellites[1].flops_per_sec"),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn vit_g_analog_48_layers() {
        let mut scn = demo_scenario();
        // 48 layers totaling ~12 GB.
        let per_layer = (12u64 << 30) / 48;
        scn.workload.layers = vec![
            LayerProfile {
                flops: 1e12,
                mem_bytes: per_layer,
                act_elements: 197 * 1664
            };
            48
        ];
        let text = serde_json::to_string(&scn).unwrap();
        let back = parse_scenario(&text).unwrap();
        assert_eq!(back.workload.num_layers(), 48);
    }

    #[test]
    fn data_sizes_examples() {
        let mut w = WorkloadSpec::transformer_like(2, 197, 768, 1, 1, 4096, 10);
        // N=1, P=4096, 8-bit pixels.
        let (input, _, output) = data_sizes(&w, 0).unwrap();
        assert_eq!(input, 32768);
        // N=1, E=10, 32-bit logits.
        assert_eq!(output, 320);
        // N=64, S·D = 197·768, 32-bit elements.
        w.batch_size = 64;
        let (_, act, _) = data_sizes(&w, 0).unwrap();
        assert_eq!(act, 64 * 197 * 768 * 32);
    }

    #[test]
    fn data_sizes_index_out_of_range() {
        let w = WorkloadSpec::transformer_like(2, 4, 4, 1, 1, 16, 2);
        assert!(data_sizes(&w, 2).is_err());
    }

    #[test]
    fn profile_rate_lookup() {
        let link = LinkSpec {
            isl_rate_bps: 1.0,
            s2g_rate_bps: 5.0,
            s2g_profile: vec![
                RateSegment {
                    start_time_s: 0.0,
                    rate_bps: 2.0,
                },
                RateSegment {
                    start_time_s: 15.0,
                    rate_bps: 3.0,
                },
            ],
        };
        assert_eq!(link.s2g_rate_at(0.0), 2.0);
        assert_eq!(link.s2g_rate_at(14.9), 2.0);
        assert_eq!(link.s2g_rate_at(15.0), 3.0);
        let flat = LinkSpec {
            isl_rate_bps: 1.0,
            s2g_rate_bps: 5.0,
            s2g_profile: vec![],
        };
        assert_eq!(flat.s2g_rate_at(100.0), 5.0);
    }

    #[test]
    fn profile_must_be_strictly_increasing() {
        let mut scn = demo_scenario();
        scn.links.s2g_profile = vec![
            RateSegment {
                start_time_s: 0.0,
                rate_bps: 1.0,
            },
            RateSegment {
                start_time_s: 0.0,
                rate_bps: 2.0,
            },
        ];
        assert!(scn.validate().is_err());
    }
}
