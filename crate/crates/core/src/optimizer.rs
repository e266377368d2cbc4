//! Joint layer-split and compression-ratio optimization.
//!
//! The split search runs A* over the DAG of (layers assigned, stage) nodes;
//! every expansion re-solves the compression subproblem for the current
//! layer prefix by exhaustive grid search (memoized per prefix). A brute
//! force enumerator over all contiguous partitions serves as the optimality
//! oracle, and the classic baselines (uniform, capacity-proportional,
//! single-satellite, ground-only) share the same evaluation path.
//!
//! The search objective is the total delay minus the uplink constant
//! T_0^comm: the uplink cannot change the argmin and is added back into the
//! reported breakdown.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::calibration::{fit, CalibrationModel};
use crate::delay::{effective_delay, evaluate_plan, DelayBreakdown, Plan};
use crate::error::{Error, Result};
use crate::scenario::{data_sizes, ScenarioSpec};

/// Which baseline planner to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Uniform,
    Proportional,
    SingleSatellite,
    GroundOnly,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<BaselineKind> {
        match s {
            "uniform" => Ok(BaselineKind::Uniform),
            "proportional" => Ok(BaselineKind::Proportional),
            "single_satellite" => Ok(BaselineKind::SingleSatellite),
            "ground_only" => Ok(BaselineKind::GroundOnly),
            other => Err(Error::Parse(format!("unknown baseline kind `{other}`"))),
        }
    }
}

/// Output of any planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerResult {
    pub feasible: bool,
    pub plan: Option<Plan>,
    pub breakdown: Option<DelayBreakdown>,
    /// Search objective: startup + (B-1)·theta, excluding the uplink.
    pub objective: Option<f64>,
    /// Nodes popped from the A* queue (0 for non-search planners).
    pub expansions: u64,
}

impl OptimizerResult {
    pub fn infeasible() -> OptimizerResult {
        OptimizerResult {
            feasible: false,
            plan: None,
            breakdown: None,
            objective: None,
            expansions: 0,
        }
    }

    fn from_plan(scn: &ScenarioSpec, plan: Plan, expansions: u64) -> Result<OptimizerResult> {
        let breakdown = evaluate_plan(scn, &plan)?;
        let objective = breakdown.total - breakdown.t0_comm;
        Ok(OptimizerResult {
            feasible: true,
            plan: Some(plan),
            breakdown: Some(breakdown),
            objective: Some(objective),
            expansions,
        })
    }

    /// Flat JSON per the documented plan schema.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "feasible": self.feasible,
            "layer_counts": self.plan.as_ref().map(|p| p.layer_counts.clone()),
            "q": self.plan.as_ref().map(|p| p.compression_ratios.clone()),
            "theta": self.plan.as_ref().map(|p| p.theta),
            "objective": self.objective,
            "breakdown": self.breakdown,
            "expansions": self.expansions,
        })
    }
}

/// Per-stage compute delays and outgoing activation sizes for a (possibly
/// partial) layer assignment.
struct ChainCosts {
    comp: Vec<f64>,
    /// Uncompressed outgoing activation bits per stage boundary.
    act_bits: Vec<f64>,
    t0: f64,
    downlink: f64,
}

fn chain_costs(scn: &ScenarioSpec, counts: &[usize]) -> Result<ChainCosts> {
    let w = &scn.workload;
    let (input_bits, _, output_bits) = data_sizes(w, 0)?;
    let t0 = input_bits as f64 / scn.links.s2g_rate_at(0.0);
    let downlink = output_bits as f64 / scn.links.s2g_rate_bps;
    let mut comp = Vec::with_capacity(counts.len());
    let mut act_bits = Vec::with_capacity(counts.len());
    let mut cursor = 0usize;
    for (i, &count) in counts.iter().enumerate() {
        let flops: f64 = w.layers[cursor..cursor + count]
            .iter()
            .map(|l| l.flops)
            .sum();
        cursor += count;
        comp.push(flops / scn.compute_sat(i + 1).flops_per_sec);
        let (_, bits, _) = data_sizes(w, cursor - 1)?;
        act_bits.push(bits as f64);
    }
    Ok(ChainCosts {
        comp,
        act_bits,
        t0,
        downlink,
    })
}

/// Startup + (B-1)·theta for a chain of (comp, outgoing comm) stages.
/// Returns (cost, theta).
fn chain_objective(comp: &[f64], comm: &[f64], t0: f64, b: u64) -> (f64, f64) {
    let mut startup = 0.0;
    let mut theta = 0.0f64;
    let mut prev_comm = t0;
    for (&c, &m) in comp.iter().zip(comm) {
        startup += c + m;
        theta = theta.max(effective_delay(c, m, prev_comm));
        prev_comm = m;
    }
    (startup + (b - 1) as f64 * theta, theta)
}

/// Best grid assignment for one prefix/plan: ratios, theta, cost.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub ratios: Vec<f64>,
    pub theta: f64,
    pub cost: f64,
}

/// Exhaustive compression-ratio search over the grid {0, 1/N, .., 1}.
///
/// With `complete` the chain covers all K stages and the last transfer is
/// the uncompressed downlink, so K-1 ratios are searched; for a prefix of
/// k < K stages the outgoing transfer of every stage including the last is
/// an ISL hop, so k ratios are searched.
///
/// Ties in cost are broken toward the lexicographically largest ratio
/// vector (least compression at equal delay).
fn grid_search_chain(
    scn: &ScenarioSpec,
    cal: &CalibrationModel,
    counts: &[usize],
    complete: bool,
) -> Result<Option<GridSolution>> {
    let costs = chain_costs(scn, counts)?;
    let k = counts.len();
    let num_q = if complete { k - 1 } else { k };
    let n = scn.optimizer.grid_resolution;

    // Grid values passing the accuracy constraint, ascending.
    let mut feasible_q = Vec::new();
    for i in 0..=n {
        let q = i as f64 / n as f64;
        if cal.acc_at(q)? >= scn.optimizer.acc_min {
            feasible_q.push(q);
        }
    }
    if num_q > 0 && feasible_q.is_empty() {
        return Ok(None);
    }

    let mut comm = vec![0.0; k];
    if complete {
        comm[k - 1] = costs.downlink;
    }
    let mut best: Option<GridSolution> = None;
    let mut idx = vec![0usize; num_q];
    loop {
        for (j, &gi) in idx.iter().enumerate() {
            comm[j] = feasible_q[gi] * costs.act_bits[j] / scn.links.isl_rate_bps;
        }
        let (cost, theta) = chain_objective(&costs.comp, &comm, costs.t0, scn.workload.num_batches);
        let ratios: Vec<f64> = idx.iter().map(|&gi| feasible_q[gi]).collect();
        let take = match &best {
            None => true,
            Some(b) => cost < b.cost || (cost == b.cost && lex_greater(&ratios, &b.ratios)),
        };
        if take {
            best = Some(GridSolution {
                ratios,
                theta,
                cost,
            });
        }
        // Next grid point (odometer).
        let mut pos = num_q;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < feasible_q.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return true;
        }
        if x < y {
            return false;
        }
    }
    false
}

/// Earlier split points first: lexicographically smaller layer counts.
fn lex_smaller_counts(a: &[usize], b: &[usize]) -> bool {
    a < b
}

/// Public entry for the compression subproblem on a complete layer
/// assignment (Algorithm 1 semantics): returns None when no grid point
/// satisfies the accuracy constraint.
pub fn grid_search_q(
    scn: &ScenarioSpec,
    cal: &CalibrationModel,
    layer_counts: &[usize],
) -> Result<Option<GridSolution>> {
    if layer_counts.iter().sum::<usize>() != scn.workload.num_layers() {
        return Err(Error::Domain("layer counts must cover every layer".into()));
    }
    if layer_counts.len() != scn.num_compute() {
        return Err(Error::Domain(
            "layer counts must cover every satellite".into(),
        ));
    }
    grid_search_chain(scn, cal, layer_counts, true)
}

fn mem_feasible(
    scn: &ScenarioSpec,
    cal: &CalibrationModel,
    stage: usize,
    layer_range: std::ops::Range<usize>,
) -> Result<bool> {
    let need = cal.mem_usage(&scn.workload, layer_range)?;
    Ok(need <= scn.compute_sat(stage).mem_capacity_bytes)
}

struct SearchNode {
    layers_assigned: usize,
    stage: usize,
    counts: Vec<usize>,
    f: f64,
    seq: u64,
}

impl PartialEq for SearchNode {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.seq == other.seq
    }
}
impl Eq for SearchNode {}
impl PartialOrd for SearchNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SearchNode {
    // Reversed: BinaryHeap is a max-heap, we want lowest f first, FIFO on
    // equal f.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .partial_cmp(&self.f)
            .unwrap_or(Ordering::Equal)
            .then(other.seq.cmp(&self.seq))
    }
}

/// A* search over split points with the per-prefix compression subproblem.
pub fn astar_split(scn: &ScenarioSpec) -> Result<OptimizerResult> {
    let cal = fit(&scn.calibration)?;
    astar_split_with(scn, &cal)
}

pub fn astar_split_with(scn: &ScenarioSpec, cal: &CalibrationModel) -> Result<OptimizerResult> {
    let k_total = scn.num_compute();
    let l_total = scn.workload.num_layers();
    if l_total < k_total {
        return Err(Error::Domain(format!(
            "need at least as many layers ({l_total}) as compute satellites ({k_total})"
        )));
    }

    // Suffix FLOPs sums and fastest-remaining-satellite table for h(v).
    let layer_flops: Vec<f64> = scn.workload.layers.iter().map(|l| l.flops).collect();
    let mut suffix_flops = vec![0.0; l_total + 1];
    for i in (0..l_total).rev() {
        suffix_flops[i] = suffix_flops[i + 1] + layer_flops[i];
    }
    // f_max over stages > k (1-based stage indices k+1..=K).
    let mut suffix_fmax = vec![0.0f64; k_total + 2];
    for stage in (1..=k_total).rev() {
        suffix_fmax[stage] = suffix_fmax[stage + 1].max(scn.compute_sat(stage).flops_per_sec);
    }
    let heuristic = |layers_assigned: usize, stage: usize| -> f64 {
        if stage >= k_total {
            0.0
        } else {
            suffix_flops[layers_assigned] / suffix_fmax[stage + 1]
        }
    };

    let mut memo: HashMap<Vec<usize>, Option<GridSolution>> = HashMap::new();
    let mut solve =
        |scn: &ScenarioSpec, counts: &[usize], complete: bool| -> Result<Option<GridSolution>> {
            if let Some(hit) = memo.get(counts) {
                return Ok(hit.clone());
            }
            let sol = grid_search_chain(scn, cal, counts, complete)?;
            memo.insert(counts.to_vec(), sol.clone());
            Ok(sol)
        };

    let mut heap: BinaryHeap<SearchNode> = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(SearchNode {
        layers_assigned: 0,
        stage: 0,
        counts: vec![],
        f: 0.0,
        seq,
    });
    let mut expansions = 0u64;

    while let Some(node) = heap.pop() {
        expansions += 1;
        if node.layers_assigned == l_total && node.stage == k_total {
            let sol = solve(scn, &node.counts, true)?.expect("goal node carries a solution");
            let mut plan = Plan::new(node.counts, sol.ratios);
            plan.theta = sol.theta;
            revalidate(scn, cal, &plan)?;
            let mut result = OptimizerResult::from_plan(scn, plan, expansions)?;
            result.expansions = expansions;
            return Ok(result);
        }
        let next_stage = node.stage + 1;
        let remaining_after = k_total - next_stage;
        let min_l = node.layers_assigned + 1;
        let max_l = l_total - remaining_after;
        for l_next in min_l..=max_l {
            if next_stage == k_total && l_next != l_total {
                continue;
            }
            if !mem_feasible(scn, cal, next_stage, node.layers_assigned..l_next)? {
                continue;
            }
            let mut counts = node.counts.clone();
            counts.push(l_next - node.layers_assigned);
            let complete = next_stage == k_total;
            let Some(sol) = solve(scn, &counts, complete)? else {
                continue;
            };
            let f = sol.cost + heuristic(l_next, next_stage);
            seq += 1;
            heap.push(SearchNode {
                layers_assigned: l_next,
                stage: next_stage,
                counts,
                f,
                seq,
            });
        }
    }
    Ok(OptimizerResult {
        expansions,
        ..OptimizerResult::infeasible()
    })
}

/// Exhaustive enumeration over every contiguous partition and grid vector;
/// the optimality oracle.
pub fn brute_force(scn: &ScenarioSpec) -> Result<OptimizerResult> {
    let cal = fit(&scn.calibration)?;
    brute_force_with(scn, &cal)
}

pub fn brute_force_with(scn: &ScenarioSpec, cal: &CalibrationModel) -> Result<OptimizerResult> {
    let k = scn.num_compute();
    let l = scn.workload.num_layers();
    if l < k {
        return Err(Error::Domain(format!(
            "need at least as many layers ({l}) as compute satellites ({k})"
        )));
    }
    let partitions = binomial((l - 1) as u128, (k - 1) as u128);
    let grid = (scn.optimizer.grid_resolution as u128 + 1).pow(k.saturating_sub(1) as u32);
    let size = partitions.saturating_mul(grid);
    let cap = scn.optimizer.brute_force_cap as u128;
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }

    let mut best: Option<(f64, Plan)> = None;
    let mut counts = vec![1usize; k];
    counts[k - 1] = l - (k - 1);
    loop {
        if partition_mem_ok(scn, cal, &counts)? {
            if let Some(sol) = grid_search_chain(scn, cal, &counts, true)? {
                let replace = match &best {
                    None => true,
                    Some((cost, plan)) => {
                        sol.cost < *cost
                            || (sol.cost == *cost
                                && (lex_greater(&sol.ratios, &plan.compression_ratios)
                                    || (sol.ratios == plan.compression_ratios
                                        && lex_smaller_counts(&counts, &plan.layer_counts))))
                    }
                };
                if replace {
                    let mut plan = Plan::new(counts.clone(), sol.ratios);
                    plan.theta = sol.theta;
                    best = Some((sol.cost, plan));
                }
            }
        }
        if !next_composition(&mut counts, l) {
            break;
        }
    }
    match best {
        Some((_, plan)) => {
            revalidate(scn, cal, &plan)?;
            OptimizerResult::from_plan(scn, plan, 0)
        }
        None => Ok(OptimizerResult::infeasible()),
    }
}

fn partition_mem_ok(scn: &ScenarioSpec, cal: &CalibrationModel, counts: &[usize]) -> Result<bool> {
    let mut cursor = 0;
    for (i, &c) in counts.iter().enumerate() {
        if !mem_feasible(scn, cal, i + 1, cursor..cursor + c)? {
            return Ok(false);
        }
        cursor += c;
    }
    Ok(true)
}

/// Advances to the next composition of `l` into positive parts, lexicographic
/// order. Returns false after the last one.
fn next_composition(counts: &mut [usize], l: usize) -> bool {
    let k = counts.len();
    if k == 1 {
        return false;
    }
    // Find rightmost index (except last) we can increment.
    for i in (0..k - 1).rev() {
        let tail_min = k - 1 - i; // one layer per following stage
        let used: usize = counts[..=i].iter().sum();
        if l - used > tail_min {
            counts[i] += 1;
            counts[i + 1..k - 1].fill(1);
            let used: usize = counts[..k - 1].iter().sum();
            counts[k - 1] = l - used;
            return true;
        }
    }
    false
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Post-search feasibility audit, independent of the search bookkeeping.
fn revalidate(scn: &ScenarioSpec, cal: &CalibrationModel, plan: &Plan) -> Result<()> {
    plan.validate(scn)?;
    if !partition_mem_ok(scn, cal, &plan.layer_counts)? {
        return Err(Error::Domain(
            "returned plan violates a memory bound".into(),
        ));
    }
    for &q in &plan.compression_ratios {
        if cal.acc_at(q)? < scn.optimizer.acc_min {
            return Err(Error::Domain(format!(
                "returned plan violates the accuracy constraint at q = {q}"
            )));
        }
    }
    Ok(())
}

/// Baseline planners from the evaluation section.
pub fn baseline_plan(scn: &ScenarioSpec, kind: BaselineKind) -> Result<OptimizerResult> {
    let cal = fit(&scn.calibration)?;
    baseline_plan_with(scn, &cal, kind)
}

pub fn baseline_plan_with(
    scn: &ScenarioSpec,
    cal: &CalibrationModel,
    kind: BaselineKind,
) -> Result<OptimizerResult> {
    match kind {
        BaselineKind::Uniform => fixed_split(scn, cal, uniform_counts(scn)),
        BaselineKind::Proportional => fixed_split(scn, cal, proportional_counts(scn)),
        BaselineKind::SingleSatellite => single_satellite(scn, cal),
        BaselineKind::GroundOnly => ground_only(scn),
    }
}

fn uniform_counts(scn: &ScenarioSpec) -> Vec<usize> {
    let k = scn.num_compute();
    let l = scn.workload.num_layers();
    let base = l / k;
    let rem = l % k;
    (0..k).map(|i| base + usize::from(i < rem)).collect()
}

fn proportional_counts(scn: &ScenarioSpec) -> Vec<usize> {
    let k = scn.num_compute();
    let l = scn.workload.num_layers();
    let f_sum: f64 = (1..=k).map(|s| scn.compute_sat(s).flops_per_sec).sum();
    let quotas: Vec<f64> = (1..=k)
        .map(|s| l as f64 * scn.compute_sat(s).flops_per_sec / f_sum)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|&q| q.floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    // Largest remainder, ties to the earlier stage.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut it = order.iter().cycle();
    while assigned < l {
        counts[*it.next().unwrap()] += 1;
        assigned += 1;
    }
    // Every stage hosts at least one layer; steal from the largest stage.
    for i in 0..k {
        while counts[i] == 0 {
            let donor = (0..k).max_by_key(|&j| counts[j]).unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    counts
}

fn fixed_split(
    scn: &ScenarioSpec,
    cal: &CalibrationModel,
    counts: Vec<usize>,
) -> Result<OptimizerResult> {
    if scn.workload.num_layers() < scn.num_compute() {
        return Err(Error::Domain("fewer layers than satellites".into()));
    }
    if !partition_mem_ok(scn, cal, &counts)? {
        return Ok(OptimizerResult::infeasible());
    }
    match grid_search_chain(scn, cal, &counts, true)? {
        Some(sol) => {
            let mut plan = Plan::new(counts, sol.ratios);
            plan.theta = sol.theta;
            OptimizerResult::from_plan(scn, plan, 0)
        }
        None => Ok(OptimizerResult::infeasible()),
    }
}

fn single_satellite(scn: &ScenarioSpec, cal: &CalibrationModel) -> Result<OptimizerResult> {
    let l = scn.workload.num_layers();
    let need = cal.mem_usage(&scn.workload, 0..l)?;
    // Fastest compute satellite whose memory fits the whole model.
    let host = (1..=scn.num_compute())
        .filter(|&s| scn.compute_sat(s).mem_capacity_bytes >= need)
        .max_by(|&a, &b| {
            scn.compute_sat(a)
                .flops_per_sec
                .partial_cmp(&scn.compute_sat(b).flops_per_sec)
                .unwrap()
                .then(b.cmp(&a))
        });
    let Some(host) = host else {
        return Ok(OptimizerResult::infeasible());
    };
    let (input_bits, _, output_bits) = data_sizes(&scn.workload, 0)?;
    let t0 = input_bits as f64 / scn.links.s2g_rate_at(0.0);
    let comp = scn.workload.total_flops() / scn.compute_sat(host).flops_per_sec;
    let down = output_bits as f64 / scn.links.s2g_rate_bps;
    let b = scn.workload.num_batches;
    let (cost, theta) = chain_objective(&[comp], &[down], t0, b);
    let breakdown = DelayBreakdown {
        t0_comm: t0,
        per_stage_comp: vec![comp],
        per_stage_comm: vec![down],
        per_stage_eff: vec![effective_delay(comp, down, t0)],
        startup: comp + down,
        steady: theta,
        total: t0 + cost,
    };
    let mut plan = Plan::new(vec![l], vec![]);
    plan.theta = theta;
    Ok(OptimizerResult {
        feasible: true,
        plan: Some(plan),
        breakdown: Some(breakdown),
        objective: Some(cost),
        expansions: 0,
    })
}

fn ground_only(scn: &ScenarioSpec) -> Result<OptimizerResult> {
    let Some(f_ground) = scn.ground_flops_per_sec else {
        return Err(Error::Domain(
            "ground_only baseline requires the ground_flops_per_sec scenario field".into(),
        ));
    };
    let k = scn.num_compute();
    let (input_bits, _, _) = data_sizes(&scn.workload, 0)?;
    let t0 = input_bits as f64 / scn.links.s2g_rate_at(0.0);
    // K relay stages forwarding the raw images, then the ground compute
    // stage. Relays 1..K-1 forward over the ISL; relay K downlinks.
    let mut comp = vec![0.0; k];
    let mut comm: Vec<f64> = (1..=k)
        .map(|s| {
            if s < k {
                input_bits as f64 / scn.links.isl_rate_bps
            } else {
                input_bits as f64 / scn.links.s2g_rate_bps
            }
        })
        .collect();
    comp.push(scn.workload.total_flops() / f_ground);
    comm.push(0.0);
    let b = scn.workload.num_batches;
    let (cost, theta) = chain_objective(&comp, &comm, t0, b);
    let mut per_stage_eff = Vec::new();
    let mut prev = t0;
    for (&c, &m) in comp.iter().zip(&comm) {
        per_stage_eff.push(effective_delay(c, m, prev));
        prev = m;
    }
    let startup: f64 = comp.iter().zip(&comm).map(|(c, m)| c + m).sum();
    let breakdown = DelayBreakdown {
        t0_comm: t0,
        per_stage_comp: comp,
        per_stage_comm: comm,
        per_stage_eff,
        startup,
        steady: theta,
        total: t0 + cost,
    };
    Ok(OptimizerResult {
        feasible: true,
        plan: None,
        breakdown: Some(breakdown),
        objective: Some(cost),
        expansions: 0,
    })
}
