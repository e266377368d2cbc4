//! Closed-form pipeline delay model: computation, communication, overlap,
//! startup, steady-state bottleneck and total delay for a given plan.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{data_sizes, ScenarioSpec};

/// A layer assignment plus inter-stage compression ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// l_k for stages 1..=K; positive, sums to L.
    pub layer_counts: Vec<usize>,
    /// q_k in [0,1] for the K-1 inter-satellite transfers.
    pub compression_ratios: Vec<f64>,
    /// Steady-state bottleneck; filled by evaluation/optimization.
    pub theta: f64,
}

impl Plan {
    pub fn new(layer_counts: Vec<usize>, compression_ratios: Vec<f64>) -> Plan {
        Plan {
            layer_counts,
            compression_ratios,
            theta: 0.0,
        }
    }

    pub fn validate(&self, scn: &ScenarioSpec) -> Result<()> {
        let k = scn.num_compute();
        let l = scn.workload.num_layers();
        if self.layer_counts.len() != k {
            return Err(Error::Domain(format!(
                "plan has {} stages, scenario has {k}",
                self.layer_counts.len()
            )));
        }
        if self.layer_counts.contains(&0) {
            return Err(Error::Domain(
                "every stage must hold at least one layer".into(),
            ));
        }
        let total: usize = self.layer_counts.iter().sum();
        if total != l {
            return Err(Error::Domain(format!(
                "layer counts sum to {total}, expected {l}"
            )));
        }
        if self.compression_ratios.len() != k.saturating_sub(1) {
            return Err(Error::Domain(format!(
                "expected {} compression ratios, got {}",
                k - 1,
                self.compression_ratios.len()
            )));
        }
        if self
            .compression_ratios
            .iter()
            .any(|&q| !(0.0..=1.0).contains(&q))
        {
            return Err(Error::Domain(
                "compression ratios must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// 0-based index of the last layer hosted by `stage` (1-based).
    pub fn boundary_layer(&self, stage: usize) -> usize {
        self.layer_counts[..stage].iter().sum::<usize>() - 1
    }
}

/// Every delay component for one evaluated plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    /// Uplink of the raw input batch, seconds.
    pub t0_comm: f64,
    /// Per-stage compute delays, stages 1..=K.
    pub per_stage_comp: Vec<f64>,
    /// Per-stage outgoing transfer delays; index K-1 is the downlink.
    pub per_stage_comm: Vec<f64>,
    /// Per-stage effective (steady-state) delays.
    pub per_stage_eff: Vec<f64>,
    pub startup: f64,
    /// Bottleneck: max over per_stage_eff.
    pub steady: f64,
    pub total: f64,
}

impl DelayBreakdown {
    /// 1-based stage index of the bottleneck.
    pub fn bottleneck_stage(&self) -> usize {
        let mut best = 0;
        for (i, &e) in self.per_stage_eff.iter().enumerate() {
            if e > self.per_stage_eff[best] {
                best = i;
            }
        }
        best + 1
    }
}

/// Computation delay: FLOPs over capability.
pub fn comp_delay(flops_assigned: f64, flops_per_sec: f64) -> Result<f64> {
    if !(flops_per_sec.is_finite() && flops_per_sec > 0.0) {
        return Err(Error::Domain(format!(
            "nonpositive compute rate {flops_per_sec}"
        )));
    }
    if flops_assigned < 0.0 {
        return Err(Error::Domain(format!("negative workload {flops_assigned}")));
    }
    Ok(flops_assigned / flops_per_sec)
}

/// Transfer delay of `bits` compressed by `q` over `rate`. The uplink and
/// downlink hops use q = 1.
pub fn comm_delay(bits: f64, rate: f64, q: f64) -> Result<f64> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Domain(format!("nonpositive link rate {rate}")));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!(
            "compression ratio {q} out of [0, 1]"
        )));
    }
    Ok(q * bits / rate)
}

/// Effective per-stage delay after overlapping compute with the incoming
/// transfer: comp + comm - min(comp, prev_comm).
pub fn effective_delay(comp: f64, comm: f64, prev_comm: f64) -> f64 {
    comp + comm - comp.min(prev_comm)
}

/// Evaluates the full delay breakdown of a plan.
///
/// Stage K's outgoing transfer is the uncompressed downlink; stages 1..K-1
/// send q_k-compressed activations over the ISL. The uplink overlaps stage
/// 1's compute in the effective-delay term.
pub fn evaluate_plan(scn: &ScenarioSpec, plan: &Plan) -> Result<DelayBreakdown> {
    plan.validate(scn)?;
    let k = scn.num_compute();
    let w = &scn.workload;
    let b = w.num_batches;

    let (input_bits, _, output_bits) = data_sizes(w, 0)?;
    let t0_comm = comm_delay(input_bits as f64, scn.links.s2g_rate_at(0.0), 1.0)?;

    let mut per_stage_comp = Vec::with_capacity(k);
    let mut per_stage_comm = Vec::with_capacity(k);
    let mut layer_cursor = 0usize;
    for stage in 1..=k {
        let count = plan.layer_counts[stage - 1];
        let flops: f64 = w.layers[layer_cursor..layer_cursor + count]
            .iter()
            .map(|l| l.flops)
            .sum();
        layer_cursor += count;
        per_stage_comp.push(comp_delay(flops, scn.compute_sat(stage).flops_per_sec)?);
        if stage < k {
            let (_, act_bits, _) = data_sizes(w, layer_cursor - 1)?;
            per_stage_comm.push(comm_delay(
                act_bits as f64,
                scn.links.isl_rate_bps,
                plan.compression_ratios[stage - 1],
            )?);
        } else {
            per_stage_comm.push(comm_delay(output_bits as f64, scn.links.s2g_rate_bps, 1.0)?);
        }
    }

    let mut per_stage_eff = Vec::with_capacity(k);
    for stage in 0..k {
        let prev_comm = if stage == 0 {
            t0_comm
        } else {
            per_stage_comm[stage - 1]
        };
        per_stage_eff.push(effective_delay(
            per_stage_comp[stage],
            per_stage_comm[stage],
            prev_comm,
        ));
    }

    let startup: f64 = per_stage_comp
        .iter()
        .zip(&per_stage_comm)
        .map(|(c, m)| c + m)
        .sum();
    let steady = per_stage_eff.iter().cloned().fold(0.0, f64::max);
    let total = t0_comm + startup + (b - 1) as f64 * steady;

    Ok(DelayBreakdown {
        t0_comm,
        per_stage_comp,
        per_stage_comm,
        per_stage_eff,
        startup,
        steady,
        total,
    })
}
