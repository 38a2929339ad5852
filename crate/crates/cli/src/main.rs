//! Command-line harness tying generation, transpilation, simulation, metrics
//! and cost estimation into reproducible experiment pipelines.

mod pipeline;
mod verify;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hhl_core::circuit::{gen_family, Circuit, Family};
use hhl_core::hhl::{build_hhl, run_hhl, Backend, HHLLayout, SfaBackend, SvBackend};
use hhl_core::metrics::{
    dem_predict, format_duration_s, quantum_volume_with, render_csv, render_markdown,
    supremacy_table, xeb, GateCounts, QvOptions, TableRow, XebInput,
};
use hhl_core::qstate::{StateDump, StateVector};
use hhl_core::sim::{
    estimate_costs, noisy_run, plan_cut, qpu_sampling_seconds, sample, schrodinger_run, sfa_run,
    CircuitStats, MachineSpec, NoiseModel,
};
use hhl_core::transpile::{depth_study, load_topology, route, StudyRow};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "hhlsim",
    about = "Hybrid HHL linear-system toolkit: generate, transpile, simulate, benchmark",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (also honors HHL_THREADS / RAYON_NUM_THREADS).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a TP1/TP2/NTP unitary circuit with its exact spectrum.
    Gen(GenArgs),
    /// Route circuits onto device topologies.
    #[command(subcommand)]
    Transpile(TranspileCmd),
    /// Execute circuits on the simulation backends.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Build and run HHL circuits.
    #[command(subcommand)]
    Hhl(HhlCmd),
    /// Fidelity metrics: XEB, DEM, quantum volume, comparison table.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Evaluate the classical-cost formulas.
    Estimate(EstimateArgs),
    /// Run a configured experiment pipeline writing file artifacts.
    Pipeline(PipelineArgs),
    /// Run the built-in verification checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Family: tp1 | tp2 | ntp
    #[arg(long)]
    family: String,
    /// Vector-register width.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Circuit JSON output path.
    #[arg(long)]
    out: PathBuf,
    /// Spectrum JSON output path.
    #[arg(long)]
    spectrum_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TranspileCmd {
    /// Route one circuit onto a coupling map.
    Route(RouteArgs),
    /// Depth/CNOT study over families and widths.
    Study(StudyArgs),
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long)]
    circuit: PathBuf,
    /// Topology name or file: all_to_all(n), line(n), melbourne15,
    /// johannesburg20, rochester53, sycamore53, or a JSON path.
    #[arg(long)]
    map: String,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Comma-separated families, e.g. tp1,tp2,ntp
    #[arg(long, default_value = "tp1,tp2,ntp")]
    families: String,
    /// Width range `lo..hi` (inclusive) or comma-separated list.
    #[arg(long, default_value = "5..12")]
    widths: String,
    #[arg(long)]
    map: String,
    #[arg(long, default_value_t = 140)]
    instances: usize,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SimCmd {
    /// Run a circuit and emit the final state or outcome distribution.
    Run(SimRunArgs),
}

#[derive(Args)]
struct SimRunArgs {
    #[arg(long)]
    circuit: PathBuf,
    /// Backend: sv | sfa
    #[arg(long, default_value = "sv")]
    backend: String,
    /// Noise rates `e1,e2,er`; enables Monte-Carlo mode.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, default_value_t = 2000)]
    trajectories: u64,
    /// Number of measurement shots (0 = exact distribution).
    #[arg(long, default_value_t = 0)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dump the final state vector (noiseless backends only).
    #[arg(long)]
    dump_state: Option<PathBuf>,
    /// Result JSON path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum HhlCmd {
    /// Assemble an HHL circuit for a generated unitary.
    Build(HhlBuildArgs),
    /// Run an HHL circuit and compare against the classical oracle.
    Run(HhlRunArgs),
}

#[derive(Args)]
struct HhlBuildArgs {
    #[arg(long)]
    family: String,
    /// Vector-register width.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Phase-grid bits.
    #[arg(long, default_value_t = 3)]
    p: usize,
    #[arg(long)]
    hybrid: bool,
    #[arg(long)]
    out_circuit: PathBuf,
    #[arg(long)]
    out_layout: PathBuf,
    /// Also write the underlying unitary circuit.
    #[arg(long)]
    out_unitary: Option<PathBuf>,
}

#[derive(Args)]
struct HhlRunArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    layout: PathBuf,
    /// Circuit JSON of the unitary the HHL circuit was built from.
    #[arg(long)]
    unitary: PathBuf,
    #[arg(long, default_value = "sv")]
    backend: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Cross-entropy benchmarking fidelity from (measured, ideal) pairs.
    Xeb(XebArgs),
    /// Digital-error-model fidelity prediction.
    Dem(DemArgs),
    /// Heavy-output quantum-volume protocol.
    Qv(QvArgs),
    /// Cost/fidelity comparison table.
    Table(TableArgs),
}

#[derive(Args)]
struct XebArgs {
    /// JSON file: {"pairs": [[measured, ideal], ...]}
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct DemArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    sq: usize,
    #[arg(long)]
    cnots: usize,
    #[arg(long, default_value_t = 0.0)]
    e1: f64,
    #[arg(long, default_value_t = 0.0)]
    e2: f64,
    #[arg(long, default_value_t = 0.0)]
    er: f64,
}

#[derive(Args)]
struct QvArgs {
    #[arg(long)]
    map: String,
    #[arg(long, default_value_t = 4)]
    max_width: usize,
    #[arg(long, default_value_t = 0.0)]
    e1: f64,
    #[arg(long, default_value_t = 0.0)]
    e2: f64,
    #[arg(long, default_value_t = 0.0)]
    er: f64,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 400)]
    trajectories: u64,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TableArgs {
    /// Table config JSON; defaults to the shipped large-device rows.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output format: md | csv | json
    #[arg(long, default_value = "md")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Total circuit width.
    #[arg(long)]
    n: usize,
    /// Schrödinger scaling constant in seconds.
    #[arg(long, default_value_t = 5e-9)]
    c: f64,
    /// Smaller-side width of the cut.
    #[arg(long, default_value_t = 0)]
    ntilde: usize,
    /// CNOTs crossing the cut.
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long, default_value_t = 47)]
    ram_qubits: usize,
    #[arg(long)]
    fidelity: Option<f64>,
    #[arg(long, default_value_t = 0)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    gates: usize,
}

#[derive(Args)]
struct PipelineArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Reduced widths and seed counts (finishes in under a minute).
    #[arg(long)]
    quick: bool,
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit<T: serde::Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

pub(crate) fn parse_families(s: &str) -> Result<Vec<Family>> {
    s.split(',')
        .map(|f| f.trim().parse::<Family>().map_err(Into::into))
        .collect()
}

pub(crate) fn parse_widths(s: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse()?;
        let hi: usize = hi.trim().parse()?;
        if hi < lo {
            bail!("empty width range {s}");
        }
        Ok((lo..=hi).collect())
    } else {
        s.split(',')
            .map(|w| w.trim().parse::<usize>().map_err(Into::into))
            .collect()
    }
}

fn parse_noise(s: &str, seed: u64) -> Result<NoiseModel> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()?;
    if parts.len() != 3 {
        bail!("noise must be e1,e2,er");
    }
    let nm = NoiseModel {
        e1: parts[0],
        e2: parts[1],
        er: parts[2],
        seed,
    };
    nm.validate()?;
    Ok(nm)
}

fn backend_by_name(name: &str) -> Result<Box<dyn Backend>> {
    match name {
        "sv" => Ok(Box::new(SvBackend)),
        "sfa" => Ok(Box::new(SfaBackend)),
        other => bail!("unknown backend `{other}` (expected sv or sfa)"),
    }
}

pub(crate) fn study_csv(rows: &[StudyRow], map: &str, config_hash: &str) -> String {
    let mut out = format!("# schema=depth_study_v1 map={map} config_hash={config_hash}\n");
    out.push_str(
        "family,width,instances,mean_depth,stderr_depth,mean_cnots,stderr_cnots,mean_sq\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            r.family.name(),
            r.width,
            r.instances,
            r.mean_depth,
            r.stderr_depth,
            r.mean_cnots,
            r.stderr_cnots,
            r.mean_sq
        ));
    }
    out
}

/// Default comparison-table rows for the large-device estimates.
const DEFAULT_TABLE: &str = include_str!("../data/table_large_devices.json");

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = cli
        .jobs
        .or_else(|| std::env::var("HHL_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok();
    }
    match cli.command {
        Command::Gen(args) => {
            let family: Family = args.family.parse()?;
            let (circuit, spectrum) = gen_family(family, args.n, args.seed)?;
            write_json(&args.out, &circuit)?;
            if let Some(sp) = &args.spectrum_out {
                write_json(sp, &spectrum)?;
            }
            eprintln!(
                "generated {} n={} seed={}: {} gates ({} sq, {} cnot), spectrum {:?}",
                family.name(),
                args.n,
                args.seed,
                circuit.gates.len(),
                circuit.sq_count(),
                circuit.cnot_count(),
                spectrum.phases()
            );
            Ok(())
        }
        Command::Transpile(TranspileCmd::Route(args)) => {
            let circuit: Circuit = read_json(&args.circuit)?;
            let map = load_topology(&args.map)?;
            let report = route(&circuit, &map, args.restarts, args.seed)?;
            eprintln!(
                "routed onto {}: depth {}, {} cnots, {} sq",
                map.name, report.depth, report.cnot_count, report.sq_count
            );
            emit(&args.out, &report)
        }
        Command::Transpile(TranspileCmd::Study(args)) => {
            let families = parse_families(&args.families)?;
            let widths = parse_widths(&args.widths)?;
            let map = load_topology(&args.map)?;
            let rows = depth_study(
                &families,
                &widths,
                &map,
                args.instances,
                args.restarts,
                args.seed,
            )?;
            let csv = study_csv(&rows, &map.name, "-");
            match &args.out {
                Some(p) => {
                    if let Some(dir) = p.parent() {
                        fs::create_dir_all(dir)?;
                    }
                    fs::write(p, csv)?;
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Sim(SimCmd::Run(args)) => {
            let circuit: Circuit = read_json(&args.circuit)?;
            let initial = StateVector::zero(circuit.n_qubits);
            let result = if let Some(noise_arg) = &args.noise {
                let noise = parse_noise(noise_arg, args.seed)?;
                let dist = noisy_run(&circuit, &initial, &noise, args.trajectories)?;
                serde_json::json!({
                    "mode": "noisy",
                    "trajectories": args.trajectories,
                    "noise": noise,
                    "probs": dist,
                    "seed": args.seed,
                })
            } else {
                let state = match args.backend.as_str() {
                    "sv" => schrodinger_run(&circuit, &initial)?,
                    "sfa" => {
                        let plan = plan_cut(&circuit)?;
                        eprintln!(
                            "sfa cut: sides {}/{}, k = {} ({} branches)",
                            plan.side_a.len(),
                            plan.side_b.len(),
                            plan.k,
                            plan.branches()
                        );
                        sfa_run(&circuit, &plan, &initial)?
                    }
                    other => bail!("unknown backend `{other}`"),
                };
                if let Some(dump) = &args.dump_state {
                    write_json(dump, &StateDump::from(&state))?;
                }
                if args.shots > 0 {
                    let dist = sample(&state, args.shots, args.seed, None)?;
                    serde_json::json!({
                        "mode": "sampled",
                        "backend": args.backend,
                        "shots": args.shots,
                        "seed": args.seed,
                        "probs": dist,
                    })
                } else {
                    serde_json::json!({
                        "mode": "exact",
                        "backend": args.backend,
                        "probs": state.probabilities(),
                    })
                }
            };
            emit(&args.out, &result)
        }
        Command::Hhl(HhlCmd::Build(args)) => {
            let family: Family = args.family.parse()?;
            let (ucirc, spectrum) = gen_family(family, args.n, args.seed)?;
            let (circuit, layout) = build_hhl(&ucirc, &spectrum, args.p, args.hybrid)?;
            write_json(&args.out_circuit, &circuit)?;
            write_json(&args.out_layout, &layout)?;
            if let Some(up) = &args.out_unitary {
                write_json(up, &ucirc)?;
            }
            eprintln!(
                "built {} hhl circuit: {} qubits, {} gates, p = {} ({}), fixed bits {:?}",
                family.name(),
                layout.total_qubits(),
                circuit.gates.len(),
                layout.p,
                if args.hybrid { "hybrid" } else { "full" },
                layout.fixed_bits
            );
            Ok(())
        }
        Command::Hhl(HhlCmd::Run(args)) => {
            let circuit: Circuit = read_json(&args.circuit)?;
            let layout: HHLLayout = read_json(&args.layout)?;
            let ucirc: Circuit = read_json(&args.unitary)?;
            let backend = backend_by_name(&args.backend)?;
            let report = run_hhl(&circuit, &layout, &ucirc, backend.as_ref())?;
            eprintln!(
                "fidelity vs oracle: {:.12}, success probability {:.6}",
                report.fidelity, report.success_prob
            );
            emit(&args.out, &report)
        }
        Command::Metrics(MetricsCmd::Xeb(args)) => {
            let input: XebInput = read_json(&args.input)?;
            let f = xeb(&input)?;
            println!(
                "{}",
                serde_json::json!({ "f_xeb": f, "circuits": input.pairs.len() })
            );
            Ok(())
        }
        Command::Metrics(MetricsCmd::Dem(args)) => {
            let counts = GateCounts {
                n: args.n,
                sq_gates: args.sq,
                cnots: args.cnots,
            };
            let rates = NoiseModel {
                e1: args.e1,
                e2: args.e2,
                er: args.er,
                seed: 0,
            };
            rates.validate()?;
            println!(
                "{}",
                serde_json::to_string_pretty(&dem_predict(&counts, &rates))?
            );
            Ok(())
        }
        Command::Metrics(MetricsCmd::Qv(args)) => {
            let map = load_topology(&args.map)?;
            let rates = NoiseModel {
                e1: args.e1,
                e2: args.e2,
                er: args.er,
                seed: args.seed,
            };
            let opts = QvOptions {
                trials: args.trials,
                trajectories: args.trajectories,
                restarts: args.restarts,
                seed: args.seed,
            };
            let vq = quantum_volume_with(&map, &rates, args.max_width, &opts)?;
            println!(
                "{}",
                serde_json::json!({ "map": map.name, "v_q": vq, "max_width": args.max_width })
            );
            Ok(())
        }
        Command::Metrics(MetricsCmd::Table(args)) => {
            let rows: Vec<TableRow> = match &args.config {
                Some(p) => read_json(p)?,
                None => serde_json::from_str(DEFAULT_TABLE)?,
            };
            let out_rows = supremacy_table(&rows);
            let text = match args.format.as_str() {
                "md" => render_markdown(&out_rows),
                "csv" => render_csv(&out_rows),
                "json" => serde_json::to_string_pretty(&out_rows)?,
                other => bail!("unknown format `{other}`"),
            };
            match &args.out {
                Some(p) => fs::write(p, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Estimate(args) => {
            let stats = CircuitStats {
                n: args.n,
                depth: args.depth,
                gate_count: args.gates,
            };
            let machine = MachineSpec {
                c_family_s: args.c,
                ram_qubits: args.ram_qubits,
            };
            let est = estimate_costs(&stats, args.ntilde, args.k, &machine, args.fidelity)?;
            let mut value = serde_json::to_value(est)?;
            value["t_sa_human"] = serde_json::json!(format_duration_s(est.t_sa_s));
            value["t_sfa_human"] = serde_json::json!(format_duration_s(est.t_sfa_s));
            if let Some(tf) = est.t_f_s {
                value["t_f_human"] = serde_json::json!(format_duration_s(tf));
            }
            value["qpu_sampling_s"] = serde_json::json!(qpu_sampling_seconds(args.n));
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(())
        }
        Command::Pipeline(args) => pipeline::run(&args.config),
        Command::Verify(args) => verify::run(args.quick),
    }
}
