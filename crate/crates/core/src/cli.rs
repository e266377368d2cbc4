//! Command-line surface: optimize, sweep, codec-bench, train-mask, compare,
//! simulate.
//!
//! Exit-code contract: 0 success, 1 operational error, 2 model
//! infeasibility. All outputs are byte-deterministic for a fixed seed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibration::fit;
use crate::codec::{encode, ActivationBlock, BinaryMask};
use crate::delay::Plan;
use crate::error::{Error, Result};
use crate::mask::{load_mask, make_toy_task, save_mask, train_toy, MaskParams};
use crate::optimizer::{astar_split, baseline_plan_with, BaselineKind, OptimizerResult};
use crate::report;
use crate::scenario::{data_sizes, load_scenario, SatelliteSpec, ScenarioSpec};
use crate::sim::{compare, simulate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
    fn svg(self) -> bool {
        matches!(self, Format::Svg | Format::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParameter {
    /// Satellite-to-ground rate in bits/s.
    S2gRate,
    /// Input pixels per sample; activation sizes scale proportionally.
    Resolution,
    /// Number of compute satellites (existing specs are cycled).
    NumSatellites,
    /// Multiplier on per-layer FLOPs, memory, and activation size.
    ModelScale,
    /// Number of pipelined batches B.
    BatchCount,
}

#[derive(Debug, Parser)]
#[command(
    name = "orbsplit",
    version,
    about = "Planner and simulator for pipelined inference over a satellite chain"
)]
pub struct Cli {
    /// RNG seed for anything stochastic.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Which artifact kinds to write.
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finds the optimal layer split and compression ratios for a scenario.
    Optimize {
        /// Scenario JSON file.
        scenario: PathBuf,
    },
    /// Sweeps one scenario parameter and tabulates delay per method.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        parameter: SweepParameter,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Planner methods to evaluate.
        #[arg(long, value_delimiter = ',', default_values_t = [
            "astar".to_string(), "uniform".to_string(), "proportional".to_string()
        ])]
        methods: Vec<String>,
    },
    /// Benchmarks the activation codec on synthetic Gaussian tensors.
    CodecBench {
        /// Batch dimension n of the synthetic block.
        #[arg(long, default_value_t = 64)]
        batch: usize,
        /// Sequence dimension s.
        #[arg(long, default_value_t = 32)]
        seq: usize,
        /// Feature dimension d.
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Fixed keep fraction for the mask (ignored with --mask-file).
        #[arg(long, default_value_t = 0.2)]
        keep: f64,
        /// Trained mask file (from train-mask) to use instead of --keep.
        #[arg(long)]
        mask_file: Option<PathBuf>,
        /// Quantization bit width.
        #[arg(long, default_value_t = 8)]
        bits: u32,
    },
    /// Trains a Gumbel-sigmoid mask on a synthetic task.
    TrainMask {
        /// Mask rows s.
        #[arg(long, default_value_t = 4)]
        s: usize,
        /// Mask columns d.
        #[arg(long, default_value_t = 16)]
        d: usize,
        /// Fraction of informative features in the synthetic task.
        #[arg(long, default_value_t = 0.2)]
        informative_frac: f64,
        /// Sparsity-loss weight.
        #[arg(long, default_value_t = 0.02)]
        lambda: f64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        /// Initial temperature.
        #[arg(long, default_value_t = 5.0)]
        tau0: f64,
        /// Temperature floor.
        #[arg(long, default_value_t = 0.5)]
        tau_min: f64,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
    },
    /// Compares the analytic delay model against the discrete-event
    /// simulation.
    Compare {
        scenario: PathBuf,
        /// Plan JSON (as written by optimize); defaults to re-optimizing.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Runs the discrete-event simulation and exports the trace.
    Simulate {
        scenario: PathBuf,
        /// Plan JSON (as written by optimize); defaults to re-optimizing.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    std::fs::create_dir_all(&cli.out).map_err(|source| Error::Io {
        path: cli.out.clone(),
        source,
    })?;
    match &cli.command {
        Command::Optimize { scenario } => cmd_optimize(cli, scenario),
        Command::Sweep {
            scenario,
            parameter,
            values,
            methods,
        } => cmd_sweep(cli, scenario, *parameter, values, methods),
        Command::CodecBench {
            batch,
            seq,
            dim,
            keep,
            mask_file,
            bits,
        } => cmd_codec_bench(cli, *batch, *seq, *dim, *keep, mask_file.as_deref(), *bits),
        Command::TrainMask {
            s,
            d,
            informative_frac,
            lambda,
            epochs,
            lr,
            tau0,
            tau_min,
            samples,
            classes,
        } => cmd_train_mask(
            cli,
            *s,
            *d,
            *informative_frac,
            *lambda,
            *epochs,
            *lr,
            *tau0,
            *tau_min,
            *samples,
            *classes,
        ),
        Command::Compare { scenario, plan } => cmd_compare(cli, scenario, plan.as_deref()),
        Command::Simulate { scenario, plan } => cmd_simulate(cli, scenario, plan.as_deref()),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_optimize(cli: &Cli, scenario: &Path) -> Result<i32> {
    let scn = load_scenario(scenario)?;
    let result = astar_split(&scn)?;
    let json =
        serde_json::to_string_pretty(&result.to_json()).map_err(|e| Error::Parse(e.to_string()))?;
    write_file(&cli.out.join("plan.json"), &(json + "\n"))?;
    match (&result.plan, &result.breakdown) {
        (Some(plan), Some(bd)) => {
            println!("feasible: true");
            println!("layer_counts: {:?}", plan.layer_counts);
            println!("q: {:?}", plan.compression_ratios);
            println!("theta_s: {}", plan.theta);
            println!("startup_s: {}", bd.startup);
            println!("total_s: {}", bd.total);
            println!("expansions: {}", result.expansions);
            Ok(0)
        }
        _ => {
            println!("feasible: false");
            println!("expansions: {}", result.expansions);
            Ok(2)
        }
    }
}

/// Applies one sweep point to a copy of the base scenario.
fn apply_sweep(base: &ScenarioSpec, parameter: SweepParameter, value: f64) -> Result<ScenarioSpec> {
    let mut scn = base.clone();
    match parameter {
        SweepParameter::S2gRate => {
            scn.links.s2g_rate_bps = value;
            scn.links.s2g_profile.clear();
        }
        SweepParameter::Resolution => {
            let factor = value / base.workload.pixels as f64;
            scn.workload.pixels = value.round() as u64;
            for layer in &mut scn.workload.layers {
                layer.act_elements = (layer.act_elements as f64 * factor).round() as u64;
            }
        }
        SweepParameter::NumSatellites => {
            let k = value.round() as usize;
            if k < 1 {
                return Err(Error::Domain("satellite count must be >= 1".into()));
            }
            let pool: Vec<SatelliteSpec> = base.satellites[1..].to_vec();
            scn.satellites.truncate(1);
            for i in 0..k {
                let mut sat = pool[i % pool.len()].clone();
                sat.id = i + 1;
                scn.satellites.push(sat);
            }
        }
        SweepParameter::ModelScale => {
            for layer in &mut scn.workload.layers {
                layer.flops *= value;
                layer.mem_bytes = (layer.mem_bytes as f64 * value).round() as u64;
                layer.act_elements = (layer.act_elements as f64 * value).round() as u64;
            }
        }
        SweepParameter::BatchCount => {
            scn.workload.num_batches = value.round() as u64;
        }
    }
    scn.validate()?;
    Ok(scn)
}

/// Total bits crossing any link over the whole run, for the composition the
/// result describes (chain plan, single satellite, or ground relay).
fn comm_overhead_bits(scn: &ScenarioSpec, result: &OptimizerResult) -> Result<f64> {
    let b = scn.workload.num_batches as f64;
    let (input_bits, _, output_bits) = data_sizes(&scn.workload, 0)?;
    let per_batch = match &result.plan {
        Some(plan) if plan.layer_counts.len() == scn.num_compute() => {
            let mut bits = input_bits as f64 + output_bits as f64;
            let mut cursor = 0usize;
            for (k, &count) in plan.layer_counts.iter().enumerate() {
                cursor += count;
                if k + 1 < plan.layer_counts.len() {
                    let (_, act_bits, _) = data_sizes(&scn.workload, cursor - 1)?;
                    bits += plan.compression_ratios[k] * act_bits as f64;
                }
            }
            bits
        }
        // Single satellite: uplink + downlink only.
        Some(_) => input_bits as f64 + output_bits as f64,
        // Ground relay: uplink, K-1 ISL hops, downlink — all raw input.
        None => (scn.num_compute() + 1) as f64 * input_bits as f64,
    };
    Ok(b * per_batch)
}

fn run_method(scn: &ScenarioSpec, method: &str) -> Result<OptimizerResult> {
    if method == "astar" {
        astar_split(scn)
    } else {
        let kind: BaselineKind = method.parse()?;
        let cal = fit(&scn.calibration)?;
        baseline_plan_with(scn, &cal, kind)
    }
}

fn cmd_sweep(
    cli: &Cli,
    scenario: &Path,
    parameter: SweepParameter,
    values: &[f64],
    methods: &[String],
) -> Result<i32> {
    if values.is_empty() {
        return Err(Error::validation("sweep.values", "must be nonempty"));
    }
    if methods.is_empty() {
        return Err(Error::validation("sweep.methods", "must be nonempty"));
    }
    let base = load_scenario(scenario)?;
    let mut rows = Vec::new();
    for &value in values {
        let scn = apply_sweep(&base, parameter, value)?;
        for method in methods {
            let result = run_method(&scn, method)?;
            let (delay, comm) = match &result.breakdown {
                Some(bd) => (bd.total, comm_overhead_bits(&scn, &result)?),
                None => (f64::NAN, f64::NAN),
            };
            rows.push(report::SweepRow {
                sweep_value: value,
                method: method.clone(),
                total_delay_s: delay,
                comm_overhead_bits: comm,
            });
        }
    }
    let tag = match parameter {
        SweepParameter::S2gRate => "s2g_rate",
        SweepParameter::Resolution => "resolution",
        SweepParameter::NumSatellites => "num_satellites",
        SweepParameter::ModelScale => "model_scale",
        SweepParameter::BatchCount => "batch_count",
    };
    if cli.format.csv() {
        write_file(
            &cli.out.join(format!("sweep_{tag}.csv")),
            &report::sweep_csv(&rows),
        )?;
    }
    if cli.format.svg() {
        let series: Vec<(String, Vec<(f64, f64)>)> = methods
            .iter()
            .map(|m| {
                let pts = rows
                    .iter()
                    .filter(|r| &r.method == m && r.total_delay_s.is_finite())
                    .map(|r| (r.sweep_value, r.total_delay_s))
                    .collect();
                (m.clone(), pts)
            })
            .collect();
        let svg = report::line_chart_svg(
            &format!("Total delay vs {tag}"),
            tag,
            "total delay (s)",
            &series,
        );
        write_file(&cli.out.join(format!("sweep_{tag}.svg")), &svg)?;
    }
    println!(
        "sweep {tag}: {} points x {} methods",
        values.len(),
        methods.len()
    );
    Ok(0)
}

fn cmd_codec_bench(
    cli: &Cli,
    batch: usize,
    seq: usize,
    dim: usize,
    keep: f64,
    mask_file: Option<&Path>,
    bits: u32,
) -> Result<i32> {
    let mask = match mask_file {
        Some(path) => {
            let params = load_mask(path)?;
            if params.s != seq || params.d != dim {
                return Err(Error::Domain(format!(
                    "mask shape {}x{} does not match --seq {seq} --dim {dim}",
                    params.s, params.d
                )));
            }
            params.deterministic_mask()
        }
        None => {
            if !(0.0..=1.0).contains(&keep) {
                return Err(Error::Domain(format!("keep fraction {keep} out of [0, 1]")));
            }
            let active = ((seq * dim) as f64 * keep).round() as usize;
            let bits_vec = (0..seq * dim).map(|i| i < active).collect();
            BinaryMask::new(seq, dim, bits_vec)?
        }
    };

    // Synthetic standard-Gaussian activations (Box-Muller).
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut gauss = move || {
        let u1: f64 = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        let u2: f64 = rng.random();
        ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
    };
    let values: Vec<f32> = (0..batch * seq * dim).map(|_| gauss()).collect();
    let block = ActivationBlock::new(batch, seq, dim, values)?;

    const RAW_BITS: u32 = 32;
    let blob = encode(&block, &mask, bits)?;
    let active = mask.bits.iter().filter(|&&b| b).count();
    if active == 0 {
        return Err(Error::Domain(
            "mask keeps no elements; nothing to benchmark".into(),
        ));
    }
    // Accounting identities for the first two stages; the full pipeline is
    // measured on the serialized blob.
    let sparsify = (seq * dim) as f64 / active as f64;
    let plus_quant = sparsify * RAW_BITS as f64 / bits as f64;
    let end_to_end = blob.achieved_ratio(RAW_BITS);
    let stages = [
        ("sparsify", sparsify),
        ("sparsify+quantize", plus_quant),
        ("sparsify+quantize+entropy", end_to_end),
    ];

    if cli.format.csv() {
        write_file(
            &cli.out.join("codec_bench.csv"),
            &report::codec_bench_csv(&stages),
        )?;
    }
    if cli.format.svg() {
        let bars: Vec<(String, f64)> = stages.iter().map(|(n, v)| (n.to_string(), *v)).collect();
        let svg = report::bar_chart_svg("Compression ratio by codec stage", "ratio (x)", &bars);
        write_file(&cli.out.join("codec_bench.svg"), &svg)?;
    }
    for (name, ratio) in &stages {
        println!("{name}: {ratio:.4}x");
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_mask(
    cli: &Cli,
    s: usize,
    d: usize,
    informative_frac: f64,
    lambda: f64,
    epochs: usize,
    lr: f64,
    tau0: f64,
    tau_min: f64,
    samples: usize,
    classes: usize,
) -> Result<i32> {
    let dim = s * d;
    let informative = ((dim as f64) * informative_frac).round().max(1.0) as usize;
    let task = make_toy_task(dim, informative, classes, samples, cli.seed);
    let params = MaskParams::new(s, d, tau0, tau_min, epochs.max(1), lambda)?;
    let (trained, history) = train_toy(&task, &params, epochs, lr, cli.seed)?;
    save_mask(&trained, cli.out.join("mask.gmsk"))?;
    if cli.format.csv() {
        write_file(&cli.out.join("history.csv"), &report::history_csv(&history))?;
    }
    if cli.format.svg() {
        let keep: Vec<(f64, f64)> = history
            .iter()
            .map(|r| (r.epoch as f64, r.keep_fraction))
            .collect();
        let acc: Vec<(f64, f64)> = history
            .iter()
            .map(|r| (r.epoch as f64, r.accuracy))
            .collect();
        let svg = report::line_chart_svg(
            "Mask training convergence",
            "epoch",
            "keep fraction / accuracy",
            &[("keep_fraction".into(), keep), ("accuracy".into(), acc)],
        );
        write_file(&cli.out.join("history.svg"), &svg)?;
    }
    let last = history.last().expect("history has the initial row");
    println!(
        "final_keep_fraction: {}",
        trained.deterministic_mask().keep_fraction()
    );
    println!("final_accuracy: {}", last.accuracy);
    println!("epochs: {}", history.len() - 1);
    Ok(0)
}

/// Reads a plan from the flat JSON written by `optimize` (accepts either the
/// `q` or the `compression_ratios` key).
fn load_plan(path: &Path) -> Result<Plan> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let counts = v
        .get("layer_counts")
        .and_then(|c| c.as_array())
        .ok_or_else(|| Error::Parse(format!("{}: missing layer_counts", path.display())))?
        .iter()
        .map(|x| x.as_u64().map(|u| u as usize))
        .collect::<Option<Vec<usize>>>()
        .ok_or_else(|| Error::Parse(format!("{}: bad layer_counts", path.display())))?;
    let q = v
        .get("q")
        .or_else(|| v.get("compression_ratios"))
        .and_then(|c| c.as_array())
        .ok_or_else(|| Error::Parse(format!("{}: missing q", path.display())))?
        .iter()
        .map(|x| x.as_f64())
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::Parse(format!("{}: bad q", path.display())))?;
    Ok(Plan::new(counts, q))
}

fn resolve_plan(scn: &ScenarioSpec, plan_path: Option<&Path>) -> Result<Plan> {
    match plan_path {
        Some(path) => load_plan(path),
        None => {
            let result = astar_split(scn)?;
            result
                .plan
                .ok_or_else(|| Error::Domain("scenario is infeasible; no plan to use".into()))
        }
    }
}

fn cmd_compare(cli: &Cli, scenario: &Path, plan_path: Option<&Path>) -> Result<i32> {
    let scn = load_scenario(scenario)?;
    let plan = resolve_plan(&scn, plan_path)?;
    let rep = compare(&scn, &plan)?;
    println!("analytic_total_s: {}", rep.analytic_total);
    println!("sim_total_s: {}", rep.sim_total);
    println!("rel_diff: {}", rep.rel_diff);
    println!("mismatch: {}", rep.mismatch);
    println!(
        "bottleneck_stage_analytic: {}",
        rep.bottleneck_stage_analytic
    );
    println!("bottleneck_stage_sim: {}", rep.bottleneck_stage_sim);
    let json = serde_json::to_string_pretty(&rep).map_err(|e| Error::Parse(e.to_string()))?;
    write_file(&cli.out.join("compare.json"), &(json + "\n"))?;
    Ok(0)
}

fn cmd_simulate(cli: &Cli, scenario: &Path, plan_path: Option<&Path>) -> Result<i32> {
    let scn = load_scenario(scenario)?;
    let plan = resolve_plan(&scn, plan_path)?;
    let trace = simulate(&scn, &plan)?;
    if cli.format.csv() {
        write_file(&cli.out.join("trace.csv"), &report::trace_csv(&trace))?;
    }
    if cli.format.svg() {
        write_file(&cli.out.join("gantt.svg"), &report::gantt_svg(&trace))?;
    }
    println!("sim_total_s: {}", trace.total);
    println!("batches: {}", trace.completions.len());
    Ok(0)
}
