//! Accuracy-vs-compression and memory-vs-layers calibration.
//!
//! The accuracy curve Acc(q) is fitted with pool-adjacent-violators isotonic
//! regression over offline (q, acc) pairs, then evaluated by piecewise-linear
//! interpolation with endpoint clamping.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::WorkloadSpec;

/// One measured codec operating point from the offline sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecPoint {
    /// Fraction of activation elements the mask keeps.
    pub keep_fraction: f64,
    /// Quantization bit width.
    pub bit_width: u32,
    /// Achieved size multiplier q (compressed bits / raw bits).
    pub achieved_q: f64,
    pub measured_acc: f64,
}

/// Raw calibration data carried inside the scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInput {
    /// Offline (q, accuracy) pairs; q values must be distinct.
    pub acc_points: Vec<(f64, f64)>,
    /// Memory used by a stage before any layer is assigned (runtime, buffers).
    pub mem_base_bytes: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub codec_points: Vec<CodecPoint>,
}

impl CalibrationInput {
    pub fn validate(&self, json_path: &str) -> Result<()> {
        if self.acc_points.is_empty() {
            return Err(Error::validation(
                format!("{json_path}.acc_points"),
                "must be nonempty",
            ));
        }
        for (i, &(q, acc)) in self.acc_points.iter().enumerate() {
            let p = format!("{json_path}.acc_points[{i}]");
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::validation(p, "q must lie in [0, 1]"));
            }
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::validation(p, "acc must lie in [0, 1]"));
            }
        }
        let mut qs: Vec<f64> = self.acc_points.iter().map(|p| p.0).collect();
        qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if qs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation(
                format!("{json_path}.acc_points"),
                "q values must be distinct",
            ));
        }
        Ok(())
    }
}

/// Fitted monotone accuracy curve plus the affine memory model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    /// Interpolation knots (q, acc), sorted by q, acc non-decreasing.
    pub knots: Vec<(f64, f64)>,
    pub mem_base_bytes: u64,
}

/// Weighted pool-adjacent-violators projection onto non-decreasing sequences.
fn pava(values: &[f64]) -> Vec<f64> {
    // Blocks of (mean, weight, run length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1.0, 1));
        while blocks.len() >= 2 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.0 <= last.0 {
                break;
            }
            let w = prev.1 + last.1;
            let mean = (prev.0 * prev.1 + last.0 * last.1) / w;
            blocks.pop();
            blocks.pop();
            blocks.push((mean, w, prev.2 + last.2));
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (mean, _, len) in blocks {
        out.extend(std::iter::repeat_n(mean, len));
    }
    out
}

/// Fits the monotone Acc(q) curve from calibration pairs.
pub fn fit(ci: &CalibrationInput) -> Result<CalibrationModel> {
    if ci.acc_points.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 accuracy points, got {}",
            ci.acc_points.len()
        )));
    }
    let mut pts = ci.acc_points.clone();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let accs: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let iso = pava(&accs);
    let knots = pts.iter().zip(iso).map(|(&(q, _), acc)| (q, acc)).collect();
    Ok(CalibrationModel {
        knots,
        mem_base_bytes: ci.mem_base_bytes,
    })
}

impl CalibrationModel {
    /// Evaluates the fitted curve at `q`; extrapolation clamps to the
    /// endpoint values.
    pub fn acc_at(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!("q = {q} out of [0, 1]")));
        }
        let first = self.knots.first().expect("fitted model has knots");
        let last = self.knots.last().unwrap();
        if q <= first.0 {
            return Ok(first.1);
        }
        if q >= last.0 {
            return Ok(last.1);
        }
        for w in self.knots.windows(2) {
            let (q0, a0) = w[0];
            let (q1, a1) = w[1];
            if q <= q1 {
                let t = (q - q0) / (q1 - q0);
                return Ok(a0 + t * (a1 - a0));
            }
        }
        unreachable!()
    }

    /// Smallest q on the curve with acc_at(q) >= acc_min, or None when even
    /// q = 1 fails. Piecewise-linear inversion over the monotone knots.
    pub fn min_feasible_q(&self, acc_min: f64) -> Option<f64> {
        let last = self.knots.last().unwrap();
        if last.1 < acc_min {
            return None;
        }
        let first = self.knots.first().unwrap();
        if first.1 >= acc_min {
            // Curve is clamped left of the first knot.
            return Some(0.0);
        }
        for w in self.knots.windows(2) {
            let (q0, a0) = w[0];
            let (q1, a1) = w[1];
            if a1 >= acc_min {
                if a1 == a0 {
                    return Some(q1);
                }
                let t = (acc_min - a0) / (a1 - a0);
                return Some(q0 + t * (q1 - q0));
            }
        }
        None
    }

    /// Memory footprint of a stage hosting `layer_range` of the workload:
    /// base bytes plus the per-layer contributions.
    pub fn mem_usage(&self, w: &WorkloadSpec, layer_range: Range<usize>) -> Result<u64> {
        if layer_range.end > w.layers.len() || layer_range.start > layer_range.end {
            return Err(Error::Domain(format!(
                "layer range {layer_range:?} out of bounds (L = {})",
                w.layers.len()
            )));
        }
        Ok(self.mem_base_bytes
            + w.layers[layer_range]
                .iter()
                .map(|l| l.mem_bytes)
                .sum::<u64>())
    }
}
