//! Deterministic discrete-event simulator of the pipelined execution.
//!
//! Independent oracle for the analytic delay model. Execution rules:
//! - R1: a stage starts computing batch t once batch t is fully received and
//!   its own compute of batch t-1 has finished (one compute unit per
//!   satellite, in order).
//! - R2: a stage starts transmitting batch t once its compute is done and the
//!   outgoing link is free (one transfer at a time per link, in order).
//! - R3: inter-stage buffers are unbounded by default; a bounded-buffer mode
//!   exists for sensitivity studies.
//! - R4: the sensing satellite streams batches continuously; uplink of batch
//!   t+1 overlaps everything downstream.
//!
//! The analytic model stays normative for optimization; simulated and
//! analytic totals are compared and any gap beyond 1e-9 relative is flagged,
//! never silently reconciled.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::delay::{evaluate_plan, Plan};
use crate::error::{Error, Result};
use crate::scenario::{data_sizes, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ComputeDone,
    TransferDone,
}

/// One simulator event. For transfers, `stage` is the source: 0 is the
/// uplink (sensing satellite to stage 1), k in 1..K the ISL out of stage k,
/// and K the downlink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub stage: usize,
    pub batch: usize,
}

/// Timestamps of one batch at one compute stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// 1-based compute stage.
    pub stage: usize,
    pub batch: usize,
    pub arrival: f64,
    pub start_compute: f64,
    pub end_compute: f64,
    pub start_tx: f64,
    pub end_tx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub events: Vec<Event>,
    pub rows: Vec<TraceRow>,
    /// Time each batch's result reaches the ground.
    pub completions: Vec<f64>,
    /// Completion of the last batch.
    pub total: f64,
}

impl SimTrace {
    pub fn row(&self, stage: usize, batch: usize) -> &TraceRow {
        let b = self.completions.len();
        &self.rows[(stage - 1) * b + batch]
    }

    /// 1-based stage with the greatest combined compute + transmit busy time
    /// (ties go to the earlier stage).
    pub fn bottleneck_stage(&self) -> usize {
        let stages = self.rows.iter().map(|r| r.stage).max().unwrap_or(1);
        let mut best = (1usize, f64::NEG_INFINITY);
        for k in 1..=stages {
            let busy: f64 = self
                .rows
                .iter()
                .filter(|r| r.stage == k)
                .map(|r| (r.end_compute - r.start_compute) + (r.end_tx - r.start_tx))
                .sum();
            if busy > best.1 {
                best = (k, busy);
            }
        }
        best.0
    }

    /// Causality and work-conservation audit over the recorded timestamps
    /// (valid for the unbounded-buffer mode).
    pub fn check_invariants(&self) -> Result<()> {
        let b = self.completions.len();
        let stages = self.rows.iter().map(|r| r.stage).max().unwrap_or(0);
        let eps = 1e-9;
        for r in &self.rows {
            if r.start_compute + eps < r.arrival {
                return Err(Error::Domain(format!(
                    "causality violation: stage {} computes batch {} before reception",
                    r.stage, r.batch
                )));
            }
            if r.start_tx + eps < r.end_compute {
                return Err(Error::Domain(format!(
                    "causality violation: stage {} transmits batch {} before compute ends",
                    r.stage, r.batch
                )));
            }
        }
        for k in 1..=stages {
            for t in 0..b {
                let r = self.row(k, t);
                // Work conservation: compute starts the instant both R1
                // conditions hold; transmit starts the instant both R2
                // conditions hold.
                let prev_comp_end = if t == 0 {
                    0.0
                } else {
                    self.row(k, t - 1).end_compute
                };
                let expect_start = r.arrival.max(prev_comp_end);
                if (r.start_compute - expect_start).abs() > eps {
                    return Err(Error::Domain(format!(
                        "work-conservation violation: stage {k} batch {t} compute start {} != {expect_start}",
                        r.start_compute
                    )));
                }
                let prev_tx_end = if t == 0 {
                    0.0
                } else {
                    self.row(k, t - 1).end_tx
                };
                let expect_tx = r.end_compute.max(prev_tx_end);
                if (r.start_tx - expect_tx).abs() > eps {
                    return Err(Error::Domain(format!(
                        "work-conservation violation: stage {k} batch {t} tx start {} != {expect_tx}",
                        r.start_tx
                    )));
                }
                // One transfer per link: in-order transfers must not overlap.
                if t > 0 && r.start_tx + eps < self.row(k, t - 1).end_tx {
                    return Err(Error::Domain(format!(
                        "link sharing violation on the link out of stage {k} at batch {t}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Comparison of the analytic model against the DES oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub analytic_total: f64,
    pub sim_total: f64,
    pub rel_diff: f64,
    /// True when the analytic formula and the DES disagree beyond 1e-9
    /// relative; reported, never reconciled.
    pub mismatch: bool,
    pub bottleneck_stage_analytic: usize,
    pub bottleneck_stage_sim: usize,
}

// Min-heap entry; FIFO on equal time for determinism.
struct Pending {
    time: f64,
    seq: u64,
    ev: Event,
}
impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .time
            .partial_cmp(&self.time)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Simulates with unbounded buffers (the default rules R1-R4).
pub fn simulate(scn: &ScenarioSpec, plan: &Plan) -> Result<SimTrace> {
    let trace = simulate_with(scn, plan, None)?;
    trace.check_invariants()?;
    Ok(trace)
}

/// Simulates with an optional bound on received-but-unstarted batches per
/// stage; `None` means unbounded (R3).
pub fn simulate_with(
    scn: &ScenarioSpec,
    plan: &Plan,
    buffer_capacity: Option<usize>,
) -> Result<SimTrace> {
    plan.validate(scn)?;
    let k_stages = scn.num_compute();
    let b = scn.workload.num_batches as usize;
    let w = &scn.workload;
    let (input_bits, _, output_bits) = data_sizes(w, 0)?;

    // Per-stage compute delay and outgoing transfer delay.
    let mut comp = Vec::with_capacity(k_stages);
    let mut comm = Vec::with_capacity(k_stages);
    let mut cursor = 0usize;
    for stage in 1..=k_stages {
        let count = plan.layer_counts[stage - 1];
        let flops: f64 = w.layers[cursor..cursor + count]
            .iter()
            .map(|l| l.flops)
            .sum();
        cursor += count;
        comp.push(flops / scn.compute_sat(stage).flops_per_sec);
        if stage < k_stages {
            let (_, act_bits, _) = data_sizes(w, cursor - 1)?;
            comm.push(
                plan.compression_ratios[stage - 1] * act_bits as f64 / scn.links.isl_rate_bps,
            );
        } else {
            comm.push(output_bits as f64 / scn.links.s2g_rate_bps);
        }
    }

    let nan = f64::NAN;
    // Indexed [stage-1][batch].
    let mut arrival = vec![vec![nan; b]; k_stages];
    let mut comp_start = vec![vec![nan; b]; k_stages];
    let mut comp_end = vec![vec![nan; b]; k_stages];
    let mut tx_start = vec![vec![nan; b]; k_stages];
    let mut tx_end = vec![vec![nan; b]; k_stages];
    let mut completions = vec![nan; b];

    // Link state: link 0 = uplink, link k = out of stage k. A link carries
    // batches strictly in order, so `link_next[l]` is the next batch eligible
    // to depart and `link_busy[l]` whether a transfer is in flight.
    let num_links = k_stages + 1;
    let mut link_busy = vec![false; num_links];
    let mut link_next = vec![0usize; num_links];
    // Source readiness: uplink batches are all ready at t=0; stage batches
    // become ready at compute end.
    let mut source_ready = vec![vec![false; b]; num_links];
    source_ready[0].fill(true);
    // Next batch each stage will compute (R1 in-order service).
    let mut stage_next_compute = vec![0usize; k_stages];
    let mut stage_busy = vec![false; k_stages];
    // Batches received downstream but not yet compute-started, per stage.
    let mut backlog = vec![0usize; k_stages];

    let mut heap: BinaryHeap<Pending> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut events: Vec<Event> = Vec::new();

    // `push` registers a future completion event.
    macro_rules! push {
        ($time:expr, $kind:expr, $stage:expr, $batch:expr) => {{
            seq += 1;
            heap.push(Pending {
                time: $time,
                seq,
                ev: Event {
                    time: $time,
                    kind: $kind,
                    stage: $stage,
                    batch: $batch,
                },
            });
        }};
    }

    // Destination-stage space check for the bounded-buffer mode.
    let has_space = |link: usize, backlog: &[usize]| -> bool {
        match buffer_capacity {
            None => true,
            Some(cap) => {
                if link >= k_stages {
                    true // the ground sink is never full
                } else {
                    backlog[link] < cap
                }
            }
        }
    };

    // Try to start the next transfer on `link` at time `now`.
    let start_transfer = |link: usize,
                          now: f64,
                          link_busy: &mut [bool],
                          link_next: &[usize],
                          source_ready: &[Vec<bool>],
                          backlog: &[usize],
                          tx_start: &mut [Vec<f64>],
                          heap_push: &mut dyn FnMut(f64, usize, usize)| {
        let t = link_next[link];
        if link_busy[link] || t >= b || !source_ready[link][t] || !has_space(link, backlog) {
            return;
        }
        link_busy[link] = true;
        let dur = if link == 0 {
            input_bits as f64 / scn.links.s2g_rate_at(now)
        } else {
            comm[link - 1]
        };
        if link > 0 {
            tx_start[link - 1][t] = now;
        }
        heap_push(now + dur, link, t);
    };

    // Try to start compute at `stage` (0-based) at time `now`.
    let start_compute = |stage: usize,
                         now: f64,
                         stage_busy: &mut [bool],
                         stage_next: &[usize],
                         arrival: &[Vec<f64>],
                         backlog: &mut [usize],
                         comp_start: &mut [Vec<f64>],
                         heap_push: &mut dyn FnMut(f64, usize, usize)| {
        let t = stage_next[stage];
        if stage_busy[stage] || t >= b || arrival[stage][t].is_nan() {
            return;
        }
        stage_busy[stage] = true;
        backlog[stage] -= 1;
        comp_start[stage][t] = now;
        heap_push(now + comp[stage], stage, t);
    };

    // Kick off the first uplink transfer.
    {
        let mut push_tx = |time: f64, link: usize, batch: usize| {
            push!(time, EventKind::TransferDone, link, batch)
        };
        start_transfer(
            0,
            0.0,
            &mut link_busy,
            &link_next,
            &source_ready,
            &backlog,
            &mut tx_start,
            &mut push_tx,
        );
    }

    while let Some(p) = heap.pop() {
        let ev = p.ev;
        events.push(ev);
        let now = ev.time;
        match ev.kind {
            EventKind::TransferDone => {
                let link = ev.stage;
                let t = ev.batch;
                link_busy[link] = false;
                link_next[link] = t + 1;
                if link > 0 {
                    tx_end[link - 1][t] = now;
                }
                if link < k_stages {
                    // Batch received at stage link+1 (0-based index `link`).
                    arrival[link][t] = now;
                    backlog[link] += 1;
                    let mut push_comp = |time: f64, stage: usize, batch: usize| {
                        push!(time, EventKind::ComputeDone, stage + 1, batch)
                    };
                    start_compute(
                        link,
                        now,
                        &mut stage_busy,
                        &stage_next_compute,
                        &arrival,
                        &mut backlog,
                        &mut comp_start,
                        &mut push_comp,
                    );
                } else {
                    completions[t] = now;
                }
                // The link is free again; in bounded mode upstream space may
                // also have opened elsewhere, so retry every link.
                let mut push_tx = |time: f64, l: usize, batch: usize| {
                    push!(time, EventKind::TransferDone, l, batch)
                };
                for l in 0..num_links {
                    start_transfer(
                        l,
                        now,
                        &mut link_busy,
                        &link_next,
                        &source_ready,
                        &backlog,
                        &mut tx_start,
                        &mut push_tx,
                    );
                }
            }
            EventKind::ComputeDone => {
                let stage = ev.stage - 1; // 0-based
                let t = ev.batch;
                stage_busy[stage] = false;
                stage_next_compute[stage] = t + 1;
                comp_end[stage][t] = now;
                source_ready[stage + 1][t] = true;
                // Start the next compute first: it may free buffer space the
                // link retries below depend on in bounded mode.
                let mut push_comp = |time: f64, s: usize, batch: usize| {
                    push!(time, EventKind::ComputeDone, s + 1, batch)
                };
                start_compute(
                    stage,
                    now,
                    &mut stage_busy,
                    &stage_next_compute,
                    &arrival,
                    &mut backlog,
                    &mut comp_start,
                    &mut push_comp,
                );
                let mut push_tx = |time: f64, l: usize, batch: usize| {
                    push!(time, EventKind::TransferDone, l, batch)
                };
                for l in 0..num_links {
                    start_transfer(
                        l,
                        now,
                        &mut link_busy,
                        &link_next,
                        &source_ready,
                        &backlog,
                        &mut tx_start,
                        &mut push_tx,
                    );
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(k_stages * b);
    for k in 0..k_stages {
        for t in 0..b {
            rows.push(TraceRow {
                stage: k + 1,
                batch: t,
                arrival: arrival[k][t],
                start_compute: comp_start[k][t],
                end_compute: comp_end[k][t],
                start_tx: tx_start[k][t],
                end_tx: tx_end[k][t],
            });
        }
    }
    if completions.iter().any(|c| c.is_nan()) {
        return Err(Error::Domain(
            "simulation ended with undelivered batches".into(),
        ));
    }
    let total = completions[b - 1];
    Ok(SimTrace {
        events,
        rows,
        completions,
        total,
    })
}

/// Runs both the analytic model and the DES and reports the gap.
pub fn compare(scn: &ScenarioSpec, plan: &Plan) -> Result<CompareReport> {
    let analytic = evaluate_plan(scn, plan)?;
    let trace = simulate(scn, plan)?;
    let denom = analytic.total.abs().max(1e-300);
    let rel_diff = (trace.total - analytic.total).abs() / denom;
    Ok(CompareReport {
        analytic_total: analytic.total,
        sim_total: trace.total,
        rel_diff,
        mismatch: rel_diff > 1e-9,
        bottleneck_stage_analytic: analytic.bottleneck_stage(),
        bottleneck_stage_sim: trace.bottleneck_stage(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::tests::golden_scenario;
    use approx::assert_relative_eq;

    #[test]
    fn golden_example_matches_analytic() {
        let (scn, plan) = golden_scenario();
        let trace = simulate(&scn, &plan).unwrap();
        assert_relative_eq!(trace.total, 10.5, epsilon = 1e-12);
        let rep = compare(&scn, &plan).unwrap();
        assert!(!rep.mismatch, "rel_diff = {}", rep.rel_diff);
        assert_eq!(rep.bottleneck_stage_analytic, 1);
        assert_eq!(rep.bottleneck_stage_sim, 1);
    }

    #[test]
    fn b1_equals_analytic_exactly() {
        let (mut scn, plan) = golden_scenario();
        scn.workload.num_batches = 1;
        let rep = compare(&scn, &plan).unwrap();
        assert_eq!(rep.analytic_total, rep.sim_total);
    }

    #[test]
    fn zero_comm_classic_pipeline_identity() {
        let (mut scn, plan) = golden_scenario();
        scn.links.isl_rate_bps = 1e300;
        scn.links.s2g_rate_bps = 1e300;
        scn.links.s2g_profile.clear();
        let trace = simulate(&scn, &plan).unwrap();
        let comp_max = 2.0; // both stages: 16 FLOPs / 8 FLOPs/s
        let startup = 4.0;
        let b = scn.workload.num_batches as f64;
        assert_relative_eq!(trace.total, startup + (b - 1.0) * comp_max, epsilon = 1e-9);
    }

    #[test]
    fn trace_timestamps_follow_the_rules() {
        let (scn, plan) = golden_scenario();
        let trace = simulate(&scn, &plan).unwrap();
        trace.check_invariants().unwrap();
        // Uplink streams: batch t received at stage 1 at (t+1)*T0.
        for t in 0..3 {
            assert_relative_eq!(trace.row(1, t).arrival, (t as f64 + 1.0) * 1.0);
        }
        // Stage 1 computes back-to-back: done at 3, 5, 7.
        for t in 0..3 {
            assert_relative_eq!(trace.row(1, t).end_compute, 3.0 + 2.0 * t as f64);
        }
        // Completions at 6.5, 8.5, 10.5.
        assert_relative_eq!(trace.completions[0], 6.5);
        assert_relative_eq!(trace.completions[2], 10.5);
    }

    #[test]
    fn determinism_identical_traces() {
        let (scn, plan) = golden_scenario();
        let a = simulate(&scn, &plan).unwrap();
        let b = simulate(&scn, &plan).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn startup_lower_bound() {
        let (scn, plan) = golden_scenario();
        let trace = simulate(&scn, &plan).unwrap();
        let bd = evaluate_plan(&scn, &plan).unwrap();
        assert!(trace.total >= bd.t0_comm + bd.startup - 1e-12);
        assert!(trace.completions[0] >= bd.t0_comm + bd.startup - 1e-12);
    }

    #[test]
    fn bounded_buffers_never_faster() {
        let (scn, plan) = golden_scenario();
        let unbounded = simulate_with(&scn, &plan, None).unwrap();
        let tight = simulate_with(&scn, &plan, Some(1)).unwrap();
        assert!(tight.total >= unbounded.total - 1e-12);
    }

    #[test]
    fn uplink_bound_regime_gap_is_reported_not_hidden() {
        // Slow the uplink so the pipeline period is T0-bound, a regime the
        // analytic steady-state term does not model. The comparison must
        // flag the gap.
        let (mut scn, plan) = golden_scenario();
        scn.links.s2g_profile[0].rate_bps = 512.0 / 4.0; // T0 = 4 s
        let rep = compare(&scn, &plan).unwrap();
        assert!(rep.sim_total > rep.analytic_total);
        assert!(rep.mismatch);
    }
}
