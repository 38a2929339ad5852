//! Configured experiment pipelines with file-based artifacts.
//!
//! Every artifact embeds the config hash and the seeds that produced it, so
//! a run replays byte-identically from the same config.

use anyhow::{bail, Context, Result};
use hhl_core::circuit::{gen_family, Family};
use hhl_core::hhl::build_hhl;
use hhl_core::metrics::{dem_predict, filter_ancilla, xeb, GateCounts, XebInput};
use hhl_core::qstate::StateVector;
use hhl_core::sim::{noisy_run, sample_dist, schrodinger_run, NoiseModel};
use hhl_core::transpile::{depth_study, load_topology};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

const SCHEMA_VERSION: &str = "1";
const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseRates {
    pub e1: f64,
    pub e2: f64,
    pub er: f64,
}

fn default_instances() -> usize {
    140
}
fn default_restarts() -> usize {
    20
}
fn default_shots() -> u64 {
    100_000
}
fn default_trajectories() -> u64 {
    2_000
}

/// Experiment description consumed by `pipeline`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// "fig2" (depth/CNOT sweep) or "fig4" (measured vs predicted XEB).
    pub study: String,
    pub families: Vec<String>,
    /// Width range "lo..hi" or comma-separated list of total widths.
    pub widths: String,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default)]
    pub noise: Option<NoiseRates>,
    #[serde(default = "default_trajectories")]
    pub trajectories: u64,
    #[serde(default)]
    pub topology: Option<String>,
    pub out_dir: String,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            bail!("instances must be >= 1");
        }
        if !matches!(self.study.as_str(), "fig2" | "fig4") {
            bail!("study must be fig2 or fig4");
        }
        Ok(())
    }
}

/// Canonical hash of the config: parse, re-serialize with sorted keys, SHA-256.
fn config_hash(text: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let canon = serde_json::to_string(&value)?;
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: &'a str,
    tool_version: &'a str,
    config_hash: &'a str,
    study: &'a str,
    seed: u64,
    rows: serde_json::Value,
}

pub fn run(config_path: &Path) -> Result<()> {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let config: ExperimentConfig = serde_json::from_str(&text).context("parsing config")?;
    config.validate()?;
    let hash = config_hash(&text)?;
    let out_dir = Path::new(&config.out_dir);
    fs::create_dir_all(out_dir.join("circuits"))?;
    fs::create_dir_all(out_dir.join("reports"))?;

    let result = match config.study.as_str() {
        "fig2" => run_fig2(&config, &hash, out_dir),
        "fig4" => run_fig4(&config, &hash, out_dir),
        _ => unreachable!(),
    };
    if let Err(e) = &result {
        let err = serde_json::json!({
            "error": format!("{e:#}"),
            "config_hash": hash,
        });
        let _ = fs::write(
            out_dir.join("error.json"),
            serde_json::to_string_pretty(&err)?,
        );
    }
    result
}

fn families_of(config: &ExperimentConfig) -> Result<Vec<Family>> {
    config
        .families
        .iter()
        .map(|f| f.parse::<Family>().map_err(Into::into))
        .collect()
}

fn run_fig2(config: &ExperimentConfig, hash: &str, out_dir: &Path) -> Result<()> {
    let families = families_of(config)?;
    let widths = crate::parse_widths(&config.widths)?;
    let topology = config
        .topology
        .clone()
        .unwrap_or_else(|| "all_to_all(24)".into());
    let map = load_topology(&topology)?;
    let rows = depth_study(
        &families,
        &widths,
        &map,
        config.instances,
        config.restarts,
        config.seed,
    )?;
    // example circuit per cell for inspection
    for &family in &families {
        for &width in &widths {
            if width < family.min_vector_qubits() + 3 {
                continue;
            }
            let (circ, _) = gen_family(family, width - 3, config.seed)?;
            crate::write_json(
                &out_dir.join(format!("circuits/{}_w{}.json", family.name(), width)),
                &circ,
            )?;
        }
    }
    fs::write(
        out_dir.join("metrics.csv"),
        crate::study_csv(&rows, &map.name, hash),
    )?;
    crate::write_json(&out_dir.join("reports/depth_study.json"), &rows)?;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        config_hash: hash,
        study: "fig2",
        seed: config.seed,
        rows: serde_json::to_value(&rows)?,
    };
    crate::write_json(&out_dir.join("summary.json"), &summary)?;
    eprintln!(
        "fig2 study done: {} rows -> {}",
        rows.len(),
        out_dir.display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Fig4Row {
    family: String,
    width: usize,
    instances: usize,
    f_xeb_measured: f64,
    f_xeb_dem: f64,
    mean_sq_gates: f64,
    mean_cnots: f64,
}

fn run_fig4(config: &ExperimentConfig, hash: &str, out_dir: &Path) -> Result<()> {
    let families = families_of(config)?;
    let widths = crate::parse_widths(&config.widths)?;
    let rates = config.noise.clone().unwrap_or(NoiseRates {
        e1: 1e-3,
        e2: 5e-3,
        er: 1e-3,
    });
    let mut rows: Vec<Fig4Row> = Vec::new();
    for &family in &families {
        for &width in &widths {
            if width < family.min_vector_qubits() + 3 {
                continue;
            }
            let n_vec = width - 3;
            let mut pairs = Vec::with_capacity(config.instances);
            let mut sq_sum = 0usize;
            let mut cnot_sum = 0usize;
            for i in 0..config.instances {
                let seed = config
                    .seed
                    .wrapping_mul(0x9e37_79b9)
                    .wrapping_add(((family as u64) << 40) | ((width as u64) << 20) | i as u64);
                let (ucirc, spectrum) = gen_family(family, n_vec, seed)?;
                let (hhl, layout) = build_hhl(&ucirc, &spectrum, 3, true)?;
                if i == 0 {
                    crate::write_json(
                        &out_dir.join(format!("circuits/{}_w{}_hhl.json", family.name(), width)),
                        &hhl,
                    )?;
                }
                sq_sum += hhl.sq_count();
                cnot_sum += hhl.cnot_count();
                let init = StateVector::zero(layout.total_qubits());
                let ideal = schrodinger_run(&hhl, &init)?.probabilities();
                let p_t = filter_ancilla(&ideal, &layout)?;
                let noise = NoiseModel {
                    e1: rates.e1,
                    e2: rates.e2,
                    er: rates.er,
                    seed,
                };
                let noisy = noisy_run(&hhl, &init, &noise, config.trajectories)?;
                let mut p_e = filter_ancilla(&noisy, &layout)?;
                if config.shots > 0 {
                    p_e = sample_dist(&p_e, config.shots, seed)?;
                }
                pairs.push((p_e, p_t));
            }
            let measured = xeb(&XebInput { pairs })?;
            let counts = GateCounts {
                n: width,
                sq_gates: sq_sum / config.instances,
                cnots: cnot_sum / config.instances,
            };
            let dem = dem_predict(
                &counts,
                &NoiseModel {
                    e1: rates.e1,
                    e2: rates.e2,
                    er: rates.er,
                    seed: 0,
                },
            );
            rows.push(Fig4Row {
                family: family.name().into(),
                width,
                instances: config.instances,
                f_xeb_measured: measured,
                f_xeb_dem: dem.f_xeb,
                mean_sq_gates: counts.sq_gates as f64,
                mean_cnots: counts.cnots as f64,
            });
            eprintln!(
                "fig4 {} w={}: measured {:.4e}, dem {:.4e}",
                family.name(),
                width,
                measured,
                dem.f_xeb
            );
        }
    }
    let mut csv = format!("# schema=fig4_v{SCHEMA_VERSION} config_hash={hash}\n");
    csv.push_str("family,width,instances,f_xeb_measured,f_xeb_dem,mean_sq_gates,mean_cnots\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:e},{:e},{},{}\n",
            r.family,
            r.width,
            r.instances,
            r.f_xeb_measured,
            r.f_xeb_dem,
            r.mean_sq_gates,
            r.mean_cnots
        ));
    }
    fs::write(out_dir.join("metrics.csv"), csv)?;
    crate::write_json(&out_dir.join("reports/xeb_vs_dem.json"), &rows)?;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        config_hash: hash,
        study: "fig4",
        seed: config.seed,
        rows: serde_json::to_value(&rows)?,
    };
    crate::write_json(&out_dir.join("summary.json"), &summary)?;
    eprintln!("fig4 study done -> {}", out_dir.display());
    Ok(())
}
