//! Built-in verification suite: fast equivalence and sanity checks printed
//! as a pass/fail table. Exit code 1 on any failure.

use anyhow::{anyhow, Result};
use hhl_core::circuit::{gen_family, unitary_of, Family};
use hhl_core::hhl::{build_hhl, classical_solve, run_hhl, SvBackend};
use hhl_core::metrics::{filter_ancilla, xeb, XebInput};
use hhl_core::qstate::{ProbDist, StateVector};
use hhl_core::sim::{
    estimate_costs, plan_cut, sample_dist, schrodinger_run, sfa_run, CircuitStats, MachineSpec,
};
use hhl_core::transpile::load_topology;

struct Check {
    name: &'static str,
    result: Result<String>,
}

pub fn run(quick: bool) -> Result<()> {
    let max_nvec = if quick { 2 } else { 4 };
    let seeds: u64 = if quick { 2 } else { 5 };
    let mut checks: Vec<Check> = Vec::new();

    checks.push(Check {
        name: "topology-load",
        result: (|| {
            for name in ["melbourne15", "johannesburg20", "rochester53", "sycamore53"] {
                let map = load_topology(name)?;
                map.validate()?;
            }
            // fault injection: corrupted topology must fail with a named error
            let bad = tempfile_with(r#"{"name":"bad","n":3,"edges":[[0,1]]}"#)?;
            match load_topology(&bad) {
                Err(hhl_core::Error::Topology(_)) => Ok("4 devices + fault injection".into()),
                other => Err(anyhow!("corrupt topology not rejected: {other:?}")),
            }
        })(),
    });

    checks.push(Check {
        name: "oracle-equivalence",
        result: (|| {
            let mut count = 0;
            for family in [Family::Tp1, Family::Tp2, Family::Ntp] {
                for n in family.min_vector_qubits()..=max_nvec {
                    for seed in 0..seeds {
                        let (circ, spec) = gen_family(family, n, seed)?;
                        let (hhl, layout) = build_hhl(&circ, &spec, 3, true)?;
                        let report = run_hhl(&hhl, &layout, &circ, &SvBackend)?;
                        if report.fidelity < 1.0 - 1e-9 {
                            return Err(anyhow!(
                                "{family:?} n={n} seed={seed}: fidelity {}",
                                report.fidelity
                            ));
                        }
                        count += 1;
                    }
                }
            }
            Ok(format!("{count} instances at fidelity ≥ 1-1e-9"))
        })(),
    });

    checks.push(Check {
        name: "hybrid-equivalence",
        result: (|| {
            let mut count = 0;
            for family in [Family::Tp1, Family::Tp2, Family::Ntp] {
                for n in family.min_vector_qubits()..=max_nvec {
                    let (circ, spec) = gen_family(family, n, 7)?;
                    let (full, lf) = build_hhl(&circ, &spec, 3, false)?;
                    let (hyb, lh) = build_hhl(&circ, &spec, 3, true)?;
                    let rf = run_hhl(&full, &lf, &circ, &SvBackend)?;
                    let rh = run_hhl(&hyb, &lh, &circ, &SvBackend)?;
                    let fid = rf.solution_state.overlap_sqr(&rh.solution_state)?;
                    if fid < 1.0 - 1e-9 {
                        return Err(anyhow!("{family:?} n={n}: hybrid/full fidelity {fid}"));
                    }
                    let qf = lf.sections.qpe.1 - lf.sections.qpe.0;
                    let qh = lh.sections.qpe.1 - lh.sections.qpe.0;
                    if qh >= qf {
                        return Err(anyhow!("{family:?} n={n}: hybrid QPE not smaller"));
                    }
                    count += 1;
                }
            }
            Ok(format!("{count} instances, hybrid ≡ full, smaller QPE"))
        })(),
    });

    checks.push(Check {
        name: "backend-equivalence",
        result: (|| {
            let width = if quick { 8 } else { 10 };
            let (circ, _) = gen_family(Family::Ntp, width, 3)?;
            let plan = plan_cut(&circ)?;
            let init = StateVector::zero(width);
            let sv = schrodinger_run(&circ, &init)?;
            let sfa = sfa_run(&circ, &plan, &init)?;
            let diff = sv.max_amp_diff(&sfa);
            if diff > 1e-10 {
                return Err(anyhow!("max amplitude diff {diff}"));
            }
            Ok(format!("width {width}, k={}, diff {diff:.1e}", plan.k))
        })(),
    });

    checks.push(Check {
        name: "xeb-sanity",
        result: (|| {
            let m = if quick { 6 } else { 10 };
            let shots = if quick { 20_000 } else { 50_000 };
            let mut pairs = Vec::new();
            let mut uniform_pairs = Vec::new();
            for i in 0..m {
                let (circ, spec) = gen_family(Family::Ntp, 3, 100 + i)?;
                let (hhl, layout) = build_hhl(&circ, &spec, 3, true)?;
                let ideal = schrodinger_run(&hhl, &StateVector::zero(layout.total_qubits()))?
                    .probabilities();
                let p_t = filter_ancilla(&ideal, &layout)?;
                let p_e = sample_dist(&p_t, shots, i)?;
                uniform_pairs.push((ProbDist::uniform(p_t.dim), p_t.clone()));
                pairs.push((p_e, p_t));
            }
            let f = xeb(&XebInput { pairs })?;
            if (f - 1.0).abs() > 0.1 {
                return Err(anyhow!("noiseless sampled XEB {f}"));
            }
            let f0 = xeb(&XebInput {
                pairs: uniform_pairs,
            })?;
            if f0.abs() > 1e-9 {
                return Err(anyhow!("uniform sampler XEB {f0}"));
            }
            Ok(format!("sampled {f:.3}, uniform {f0:.1e}"))
        })(),
    });

    checks.push(Check {
        name: "cost-arithmetic",
        result: (|| {
            let est = estimate_costs(
                &CircuitStats {
                    n: 20,
                    depth: 1,
                    gate_count: 1,
                },
                6,
                0,
                &MachineSpec {
                    c_family_s: 5e-9,
                    ram_qubits: 47,
                },
                None,
            )?;
            if (est.t_sa_s - 0.105).abs() > 1e-3 {
                return Err(anyhow!("T_SA = {}", est.t_sa_s));
            }
            let est2 = estimate_costs(
                &CircuitStats {
                    n: 53,
                    depth: 1,
                    gate_count: 1,
                },
                6,
                12,
                &MachineSpec {
                    c_family_s: 1e-12,
                    ram_qubits: 47,
                },
                Some(1.1e-4),
            )?;
            let tf = est2.t_f_s.unwrap();
            if tf != est2.t_sfa_s * 1.1e-4 {
                return Err(anyhow!("T_f identity broken"));
            }
            Ok(format!(
                "T_SA(20) = {:.4} s, T_f(53) = {:.0} s",
                est.t_sa_s, tf
            ))
        })(),
    });

    checks.push(Check {
        name: "classical-oracle-routes",
        result: (|| {
            let (circ, spec) = gen_family(Family::Tp1, 3, 11)?;
            let dense = classical_solve(&unitary_of(&circ)?, &StateVector::zero(3))?;
            let spectral =
                hhl_core::hhl::classical_solve_from_spectrum(&circ, &spec, &StateVector::zero(3))?;
            let fid = dense.overlap_sqr(&spectral)?;
            if fid < 1.0 - 1e-9 {
                return Err(anyhow!("dense vs spectral oracle fidelity {fid}"));
            }
            Ok(format!("two oracle routes agree ({fid:.12})"))
        })(),
    });

    let mut failed = 0;
    println!("{:<26} {:<6} detail", "check", "status");
    println!("{}", "-".repeat(72));
    for c in &checks {
        match &c.result {
            Ok(detail) => println!("{:<26} PASS   {detail}", c.name),
            Err(e) => {
                failed += 1;
                println!("{:<26} FAIL   {e:#}", c.name);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
    println!("{}", "-".repeat(72));
    println!("all {} checks passed", checks.len());
    Ok(())
}

fn tempfile_with(content: &str) -> Result<String> {
    let dir = std::env::temp_dir().join("hhlsim-verify");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("bad_topology.json");
    std::fs::write(&path, content)?;
    Ok(path.to_string_lossy().into_owned())
}
