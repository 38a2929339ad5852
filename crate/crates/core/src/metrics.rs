//! Fidelity metrics and estimators: cross-entropy benchmarking, the digital
//! error model, linear-inversion state tomography, the quantum-volume
//! protocol, and the cost/fidelity comparison table.

use crate::circuit::{sub_rng, Circuit, Gate};
use crate::error::{Error, Result};
use crate::hhl::HHLLayout;
use crate::linalg::{c64, hermitian_eigen, CMat, Mat2};
use crate::qstate::{DensityMatrix, ProbDist};
use crate::sim::{noisy_run, schrodinger_run, NoiseModel};
use crate::transpile::{route, CouplingMap};
use crate::qstate::StateVector;
use rand::prelude::*;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Ancilla filtering and XEB
// ---------------------------------------------------------------------------

/// Keep the outcomes where `ancilla` reads 1, drop that bit, renormalize.
pub fn filter_ancilla_qubit(raw: &ProbDist, ancilla: usize) -> Result<ProbDist> {
    let n_bits = raw.dim.trailing_zeros() as usize;
    if raw.dim != 1 << n_bits || ancilla >= n_bits {
        return Err(Error::QubitOutOfRange {
            index: ancilla,
            n_qubits: n_bits,
        });
    }
    let mask = 1usize << ancilla;
    let low = mask - 1;
    let mut probs = vec![0.0; raw.dim / 2];
    for (i, p) in raw.probs.iter().enumerate() {
        if i & mask != 0 {
            probs[(i & low) | ((i >> 1) & !low)] += p;
        }
    }
    let mut out = ProbDist::new(probs);
    if out.total() < 1e-12 {
        return Err(Error::EmptyFilter);
    }
    out.normalize()?;
    Ok(out)
}

/// Layout-aware version of [`filter_ancilla_qubit`].
pub fn filter_ancilla(raw: &ProbDist, layout: &HHLLayout) -> Result<ProbDist> {
    filter_ancilla_qubit(raw, layout.ancilla)
}

/// Per-circuit (measured, ideal) distribution pairs entering the XEB score.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct XebInput {
    pub pairs: Vec<(ProbDist, ProbDist)>,
}

impl XebInput {
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::InvalidArgument("xeb needs at least one pair".into()));
        }
        let dim = self.pairs[0].0.dim;
        for (pe, pt) in &self.pairs {
            if pe.dim != dim || pt.dim != dim {
                return Err(Error::DimensionMismatch(
                    "xeb distributions differ in dimension".into(),
                ));
            }
            for (name, d) in [("measured", pe), ("ideal", pt)] {
                if (d.total() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "{name} distribution not normalized (sum {})",
                        d.total()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Cross-entropy benchmarking fidelity:
/// `Σ_j (p_e_j − p_c, p_t_j) / Σ_j (p_t_j − p_c, p_t_j)` with `p_c` uniform.
pub fn xeb(input: &XebInput) -> Result<f64> {
    input.validate()?;
    let dim = input.pairs[0].0.dim;
    let uniform = 1.0 / dim as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (pe, pt) in &input.pairs {
        for i in 0..dim {
            num += (pe.probs[i] - uniform) * pt.probs[i];
            den += (pt.probs[i] - uniform) * pt.probs[i];
        }
    }
    if den.abs() < 1e-15 {
        return Err(Error::DegenerateXeb);
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Digital error model
// ---------------------------------------------------------------------------

/// Gate and qubit counts feeding the digital error model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GateCounts {
    pub n: usize,
    pub sq_gates: usize,
    pub cnots: usize,
}

impl GateCounts {
    pub fn of_circuit(c: &Circuit) -> Self {
        GateCounts {
            n: c.n_qubits,
            sq_gates: c.sq_count(),
            cnots: c.cnot_count(),
        }
    }
}

/// Fidelity prediction as a product of readout, single-qubit-gate and
/// two-qubit-gate fidelities.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DemFidelity {
    pub f_r: f64,
    pub f_1qg: f64,
    pub f_2qg: f64,
    pub f_xeb: f64,
    pub counts: GateCounts,
}

/// `f_r = (1−er)^n`, `f_1qg = (1−e1)^{sq}`, `f_2qg = (1−e2)^{cnots}`,
/// multiplied into the predicted XEB fidelity.
pub fn dem_predict(counts: &GateCounts, rates: &NoiseModel) -> DemFidelity {
    let f_r = (1.0 - rates.er).powi(counts.n as i32);
    let f_1qg = (1.0 - rates.e1).powi(counts.sq_gates as i32);
    let f_2qg = (1.0 - rates.e2).powi(counts.cnots as i32);
    DemFidelity {
        f_r,
        f_1qg,
        f_2qg,
        f_xeb: f_r * f_1qg * f_2qg,
        counts: *counts,
    }
}

// ---------------------------------------------------------------------------
// State tomography
// ---------------------------------------------------------------------------

/// Measurement basis per qubit for one tomography setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    /// Gate rotating this basis onto the computational (Z) basis.
    pub fn rotation(&self) -> Option<Mat2> {
        match self {
            Basis::X => Some(Mat2::hadamard()),
            // measure Y: apply S† then H
            Basis::Y => Some(Mat2::hadamard().mul(&Mat2::p(-std::f64::consts::FRAC_PI_2))),
            Basis::Z => None,
        }
    }
}

const SETTING_BASES: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

/// All 3^m measurement settings for an m-qubit register, in a fixed order.
pub fn tomography_settings(m: usize) -> Vec<Vec<Basis>> {
    let mut out = Vec::with_capacity(3usize.pow(m as u32));
    let mut idx = vec![0usize; m];
    loop {
        out.push(idx.iter().map(|&i| SETTING_BASES[i]).collect());
        let mut q = 0;
        loop {
            if q == m {
                return out;
            }
            idx[q] += 1;
            if idx[q] < 3 {
                break;
            }
            idx[q] = 0;
            q += 1;
        }
    }
}

fn pauli_mat(basis: Basis) -> Mat2 {
    match basis {
        Basis::X => Mat2::x(),
        Basis::Y => Mat2::y(),
        Basis::Z => Mat2::z(),
    }
}

/// Linear-inversion state tomography of an m-qubit register.
///
/// `measure` returns the Z-basis outcome distribution after rotating each
/// qubit by the requested basis; it is called once per Pauli setting
/// (3^m settings). The reconstruction `ρ = 2^{-m} Σ_P <P> P` is projected to
/// the nearest PSD matrix by eigenvalue clipping.
pub fn tomography<F>(mut measure: F, m: usize) -> Result<DensityMatrix>
where
    F: FnMut(&[Basis]) -> Result<ProbDist>,
{
    if m == 0 || m > 5 {
        return Err(Error::InvalidArgument(format!(
            "tomography register size {m} outside 1..=5"
        )));
    }
    let dim = 1usize << m;
    // expectation of every Pauli string from the setting matching its support
    let settings = tomography_settings(m);
    let mut dists = Vec::with_capacity(settings.len());
    for s in &settings {
        let d = measure(s)?;
        if d.dim != dim {
            return Err(Error::DimensionMismatch(format!(
                "oracle returned dim {} for a {m}-qubit register",
                d.dim
            )));
        }
        if (d.total() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(
                "oracle distribution not normalized: not enough shots?".into(),
            ));
        }
        dists.push(d);
    }
    let mut rho = CMat::zeros(dim);
    // identity string contributes I / 2^m
    for i in 0..dim {
        rho.set(i, i, c64(1.0 / dim as f64, 0.0));
    }
    // every non-identity Pauli string, its expectation averaged over all
    // compatible settings (those matching the string on its support)
    for code in 1..4usize.pow(m as u32) {
        let mut string: Vec<Option<Basis>> = Vec::with_capacity(m);
        let mut support = 0usize;
        let mut c = code;
        for q in 0..m {
            let digit = c % 4;
            c /= 4;
            match digit {
                0 => string.push(None),
                1 => {
                    string.push(Some(Basis::X));
                    support |= 1 << q;
                }
                2 => {
                    string.push(Some(Basis::Y));
                    support |= 1 << q;
                }
                _ => {
                    string.push(Some(Basis::Z));
                    support |= 1 << q;
                }
            }
        }
        let mut expect = 0.0;
        let mut n_compatible = 0usize;
        for (s_idx, setting) in settings.iter().enumerate() {
            let compatible = string
                .iter()
                .zip(setting.iter())
                .all(|(want, have)| want.map_or(true, |w| w == *have));
            if !compatible {
                continue;
            }
            n_compatible += 1;
            let dist = &dists[s_idx];
            for (z, p) in dist.probs.iter().enumerate() {
                let parity = (z & support).count_ones() & 1;
                expect += if parity == 0 { *p } else { -*p };
            }
        }
        let expect = expect / n_compatible as f64;
        // accumulate expect * P / 2^m
        let mut pauli = CMat::identity(1);
        let mut c = code;
        let mut mats: Vec<CMat> = Vec::with_capacity(m);
        for _ in 0..m {
            let digit = c % 4;
            c /= 4;
            mats.push(match digit {
                0 => CMat::identity(2),
                1 => CMat::from_mat2(&pauli_mat(Basis::X)),
                2 => CMat::from_mat2(&pauli_mat(Basis::Y)),
                _ => CMat::from_mat2(&pauli_mat(Basis::Z)),
            });
        }
        // qubit 0 is the least-significant factor: kron highest-first
        for mq in mats.iter().rev() {
            pauli = pauli.kron(mq);
        }
        let w = expect / dim as f64;
        for i in 0..dim * dim {
            rho.data[i] += pauli.data[i] * w;
        }
    }

    // Project to the nearest unit-trace PSD matrix: zero each negative
    // eigenvalue and spread its deficit over the remaining ones (the
    // standard trace-preserving projection; plain clip-and-rescale costs
    // noticeably more fidelity at realistic shot counts).
    let (eigs, v) = hermitian_eigen(&rho)?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigs[b].partial_cmp(&eigs[a]).unwrap());
    let mut lambda: Vec<f64> = order.iter().map(|&i| eigs[i]).collect();
    let mut deficit = 0.0f64;
    let mut keep = dim;
    while keep > 0 && lambda[keep - 1] + deficit / (keep as f64) < 0.0 {
        deficit += lambda[keep - 1];
        lambda[keep - 1] = 0.0;
        keep -= 1;
    }
    if keep == 0 {
        return Err(Error::DegenerateNorm { norm: 0.0 });
    }
    for l in lambda.iter_mut().take(keep) {
        *l += deficit / keep as f64;
    }
    let mut d = CMat::zeros(dim);
    for (rank, &i) in order.iter().enumerate() {
        d.set(i, i, c64(lambda[rank], 0.0));
    }
    let projected = v.mul(&d).mul(&v.adjoint());
    DensityMatrix::from_elements(m, projected)
}

// ---------------------------------------------------------------------------
// Quantum volume
// ---------------------------------------------------------------------------

/// Tunables of the heavy-output quantum-volume protocol.
#[derive(Clone, Copy, Debug)]
pub struct QvOptions {
    pub trials: usize,
    pub trajectories: u64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for QvOptions {
    fn default() -> Self {
        QvOptions {
            trials: 20,
            trajectories: 400,
            restarts: 4,
            seed: 0,
        }
    }
}

fn haar_like_sq(rng: &mut rand_chacha::ChaCha8Rng) -> Mat2 {
    let u: f64 = rng.gen();
    let theta = 2.0 * u.sqrt().asin();
    let phi = rng.gen::<f64>() * std::f64::consts::TAU;
    let lam = rng.gen::<f64>() * std::f64::consts::TAU;
    crate::linalg::u3_matrix(theta, phi, lam, 0.0)
}

/// Square random circuit (width = depth = m): each layer pairs the qubits at
/// random and applies a 3-CNOT two-qubit block with random rotations.
pub fn qv_circuit(m: usize, seed: u64) -> Circuit {
    let mut rng = sub_rng(seed, 0x9601_aa11);
    let mut c = Circuit::new(m);
    for _layer in 0..m {
        let mut qubits: Vec<usize> = (0..m).collect();
        qubits.shuffle(&mut rng);
        while qubits.len() >= 2 {
            let a = qubits.pop().unwrap();
            let b = qubits.pop().unwrap();
            for _ in 0..3 {
                c.push(Gate::sq(a, &haar_like_sq(&mut rng)));
                c.push(Gate::sq(b, &haar_like_sq(&mut rng)));
                c.push(Gate::cnot(a, b));
            }
            c.push(Gate::sq(a, &haar_like_sq(&mut rng)));
            c.push(Gate::sq(b, &haar_like_sq(&mut rng)));
        }
    }
    c
}

/// Relabel a routed circuit onto its active qubits only, so simulation cost
/// tracks the circuit rather than the device size.
pub fn compact_circuit(c: &Circuit) -> Circuit {
    let mut used: Vec<usize> = c.gates.iter().flat_map(|g| g.qubits()).collect();
    used.sort_unstable();
    used.dedup();
    let mut map = std::collections::HashMap::new();
    for (i, &q) in used.iter().enumerate() {
        map.insert(q, i);
    }
    let mut out = Circuit::new(used.len().max(1));
    out.tags = c.tags.clone();
    for g in &c.gates {
        match g {
            Gate::SQ { target, .. } => out.push(Gate::sq(map[target], &g.matrix().unwrap())),
            Gate::CNOT { control, target } => out.push(Gate::cnot(map[control], map[target])),
        }
    }
    out
}

/// Heavy-output probability of `noisy` against the heavy set of `ideal`.
pub fn heavy_output_prob(ideal: &ProbDist, noisy: &ProbDist) -> f64 {
    let mut sorted = ideal.probs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 0 {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    } else {
        sorted[sorted.len() / 2]
    };
    ideal
        .probs
        .iter()
        .zip(noisy.probs.iter())
        .filter(|(ip, _)| **ip > median)
        .map(|(_, np)| *np)
        .sum()
}

/// Heavy-output quantum-volume protocol.
///
/// For each width m ≤ `max_width`, square random circuits are routed onto the
/// map and executed under the noise model; the width passes when the mean
/// heavy-output probability exceeds 2/3 with one-sided 2σ confidence.
/// Returns `V_Q = 2^{m*}` for the largest consecutive passing width.
pub fn quantum_volume(map: &CouplingMap, rates: &NoiseModel, max_width: usize) -> Result<u64> {
    quantum_volume_with(map, rates, max_width, &QvOptions::default())
}

pub fn quantum_volume_with(
    map: &CouplingMap,
    rates: &NoiseModel,
    max_width: usize,
    opts: &QvOptions,
) -> Result<u64> {
    if max_width > 8 {
        return Err(Error::WidthExceeded {
            width: max_width,
            limit: 8,
            context: "quantum_volume",
        });
    }
    rates.validate()?;
    let mut m_star = 1usize;
    for m in 2..=max_width {
        if m > map.n {
            break;
        }
        let hops: Vec<f64> = (0..opts.trials)
            .map(|t| -> Result<f64> {
                let seed = opts.seed
                    .wrapping_mul(0x9e37_79b9)
                    .wrapping_add((m as u64) << 24 | t as u64);
                let circ = qv_circuit(m, seed);
                let routed = compact_circuit(&route(&circ, map, opts.restarts, seed)?.routed);
                let ideal = schrodinger_run(&routed, &StateVector::zero(routed.n_qubits))?
                    .probabilities();
                let mut noise = *rates;
                noise.seed = seed;
                let noisy = noisy_run(
                    &routed,
                    &StateVector::zero(routed.n_qubits),
                    &noise,
                    opts.trajectories,
                )?;
                Ok(heavy_output_prob(&ideal, &noisy))
            })
            .collect::<Result<Vec<f64>>>()?;
        let n = hops.len() as f64;
        let mean = hops.iter().sum::<f64>() / n;
        let var = hops.iter().map(|h| (h - mean) * (h - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let lower = mean - 2.0 * (var / n).sqrt();
        if lower > 2.0 / 3.0 {
            m_star = m;
        } else {
            break;
        }
    }
    Ok(1u64 << m_star)
}

// ---------------------------------------------------------------------------
// Cost/fidelity comparison table
// ---------------------------------------------------------------------------

/// Fidelity input for one table row: either the three printed factors or
/// gate counts plus error rates.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowFidelity {
    Factors { f_r: f64, f_1qg: f64, f_2qg: f64 },
    CountsRates { counts: GateCounts, e1: f64, e2: f64, er: f64 },
}

/// One requested table row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableRow {
    pub family: String,
    pub n: usize,
    pub qpu: String,
    pub fidelity: RowFidelity,
    /// Classical verification time in seconds.
    pub t_sfa_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_q: Option<u64>,
}

/// One computed table row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableOutRow {
    pub family: String,
    pub n: usize,
    pub qpu: String,
    pub f_r: f64,
    pub f_1qg: f64,
    pub f_2qg: f64,
    pub f_xeb: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_q: Option<u64>,
    pub t_sfa_s: f64,
    pub t_f_s: f64,
    pub t_sfa_human: String,
    pub t_f_human: String,
}

/// Evaluate `f_xeb = f_r · f_1qg · f_2qg` and `T_f = T_SFA · f_xeb` per row.
pub fn supremacy_table(rows: &[TableRow]) -> Vec<TableOutRow> {
    rows.iter()
        .map(|r| {
            let (f_r, f_1qg, f_2qg) = match &r.fidelity {
                RowFidelity::Factors { f_r, f_1qg, f_2qg } => (*f_r, *f_1qg, *f_2qg),
                RowFidelity::CountsRates { counts, e1, e2, er } => {
                    let dem = dem_predict(
                        counts,
                        &NoiseModel {
                            e1: *e1,
                            e2: *e2,
                            er: *er,
                            seed: 0,
                        },
                    );
                    (dem.f_r, dem.f_1qg, dem.f_2qg)
                }
            };
            let f_xeb = f_r * f_1qg * f_2qg;
            let t_f_s = r.t_sfa_s * f_xeb;
            TableOutRow {
                family: r.family.clone(),
                n: r.n,
                qpu: r.qpu.clone(),
                f_r,
                f_1qg,
                f_2qg,
                f_xeb,
                v_q: r.v_q,
                t_sfa_s: r.t_sfa_s,
                t_f_s,
                t_sfa_human: format_duration_s(r.t_sfa_s),
                t_f_human: format_duration_s(t_f_s),
            }
        })
        .collect()
}

/// Human-friendly duration, months/years for the long scales.
pub fn format_duration_s(s: f64) -> String {
    const MIN: f64 = 60.0;
    const HOUR: f64 = 3600.0;
    const DAY: f64 = 86400.0;
    const MONTH: f64 = 30.44 * DAY;
    const YEAR: f64 = 365.25 * DAY;
    if !s.is_finite() {
        return "n/a".into();
    }
    if s < MIN {
        format!("{s:.3e} s")
    } else if s < HOUR {
        format!("{:.1} min", s / MIN)
    } else if s < DAY {
        format!("{:.1} hours", s / HOUR)
    } else if s < 3.0 * MONTH {
        format!("{:.1} days", s / DAY)
    } else if s < 2.0 * YEAR {
        format!("{:.1} months", s / MONTH)
    } else {
        format!("{:.3e} years", s / YEAR)
    }
}

pub fn render_markdown(rows: &[TableOutRow]) -> String {
    let mut out = String::from(
        "| Type | n | QPU | F_r | F_1QG | F_2QG | F_XEB | V_Q | T_SFA | T_f |\n|---|---|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {:.1e} | {:.1e} | {:.1e} | {:.2e} | {} | {} | {} |\n",
            r.family,
            r.n,
            r.qpu,
            r.f_r,
            r.f_1qg,
            r.f_2qg,
            r.f_xeb,
            r.v_q.map_or("-".into(), |v| v.to_string()),
            r.t_sfa_human,
            r.t_f_human
        ));
    }
    out
}

pub fn render_csv(rows: &[TableOutRow]) -> String {
    let mut out =
        String::from("family,n,qpu,f_r,f_1qg,f_2qg,f_xeb,v_q,t_sfa_s,t_f_s\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:e},{:e},{:e},{:e},{},{:e},{:e}\n",
            r.family,
            r.n,
            r.qpu,
            r.f_r,
            r.f_1qg,
            r.f_2qg,
            r.f_xeb,
            r.v_q.map_or(String::new(), |v| v.to_string()),
            r.t_sfa_s,
            r.t_f_s
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::state_fidelity;
    use crate::linalg::C64;
    use crate::sim::apply_sq;

    #[test]
    fn filter_ancilla_identity_when_mass_on_one() {
        // 2 qubits, ancilla = 1: mass only on outcomes with bit1 = 1
        let raw = ProbDist::new(vec![0.0, 0.0, 0.3, 0.7]);
        let f = filter_ancilla_qubit(&raw, 1).unwrap();
        assert!((f.probs[0] - 0.3).abs() < 1e-12 && (f.probs[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn filter_ancilla_uniform_stays_uniform() {
        let raw = ProbDist::uniform(8);
        let f = filter_ancilla_qubit(&raw, 2).unwrap();
        for p in &f.probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn filter_ancilla_empty_mass_is_error() {
        let raw = ProbDist::new(vec![0.5, 0.5, 0.0, 0.0]);
        assert!(matches!(
            filter_ancilla_qubit(&raw, 1),
            Err(Error::EmptyFilter)
        ));
    }

    fn random_dist(dim: usize, seed: u64) -> ProbDist {
        let mut rng = sub_rng(seed, 0xd15f);
        let mut probs: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let t: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= t;
        }
        ProbDist::new(probs)
    }

    #[test]
    fn xeb_identical_distributions_give_one() {
        let pairs = (0..5).map(|i| {
            let d = random_dist(16, i);
            (d.clone(), d)
        });
        let f = xeb(&XebInput {
            pairs: pairs.collect(),
        })
        .unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn xeb_uniform_measured_gives_zero() {
        let pairs = (0..5)
            .map(|i| (ProbDist::uniform(16), random_dist(16, i + 50)))
            .collect();
        let f = xeb(&XebInput { pairs }).unwrap();
        assert!(f.abs() < 1e-12);
    }

    #[test]
    fn xeb_mixture_recovers_alpha() {
        for &alpha in &[0.0, 0.25, 0.5, 0.9, 1.0] {
            let pairs = (0..4)
                .map(|i| {
                    let pt = random_dist(32, i + 7);
                    let unif = 1.0 / 32.0;
                    let pe = ProbDist::new(
                        pt.probs
                            .iter()
                            .map(|p| alpha * p + (1.0 - alpha) * unif)
                            .collect(),
                    );
                    (pe, pt)
                })
                .collect();
            let f = xeb(&XebInput { pairs }).unwrap();
            assert!((f - alpha).abs() < 1e-9, "alpha {alpha}: got {f}");
        }
    }

    #[test]
    fn xeb_invariant_under_common_permutation() {
        let pe = random_dist(16, 1);
        let pt = random_dist(16, 2);
        let f1 = xeb(&XebInput {
            pairs: vec![(pe.clone(), pt.clone())],
        })
        .unwrap();
        let perm: Vec<usize> = (0..16).rev().collect();
        let permute = |d: &ProbDist| ProbDist::new(perm.iter().map(|&i| d.probs[i]).collect());
        let f2 = xeb(&XebInput {
            pairs: vec![(permute(&pe), permute(&pt))],
        })
        .unwrap();
        assert!((f1 - f2).abs() < 1e-12);
    }

    #[test]
    fn xeb_degenerate_uniform_target() {
        let pairs = vec![(random_dist(8, 3), ProbDist::uniform(8))];
        assert!(matches!(xeb(&XebInput { pairs }), Err(Error::DegenerateXeb)));
    }

    #[test]
    fn dem_zero_rates() {
        let counts = GateCounts {
            n: 10,
            sq_gates: 50,
            cnots: 20,
        };
        let dem = dem_predict(&counts, &NoiseModel::noiseless(0));
        assert_eq!(dem.f_xeb, 1.0);
    }

    #[test]
    fn dem_factors_multiply_exactly() {
        let counts = GateCounts {
            n: 8,
            sq_gates: 30,
            cnots: 12,
        };
        let rates = NoiseModel {
            e1: 1e-3,
            e2: 5e-3,
            er: 2e-3,
            seed: 0,
        };
        let dem = dem_predict(&counts, &rates);
        assert_eq!(dem.f_xeb, dem.f_r * dem.f_1qg * dem.f_2qg);
        // log f_xeb linear in counts: doubling cnots squares f_2qg
        let double = GateCounts {
            cnots: 24,
            ..counts
        };
        let dem2 = dem_predict(&double, &rates);
        assert!((dem2.f_2qg - dem.f_2qg * dem.f_2qg).abs() < 1e-12);
    }

    /// Exact-expectation oracle for a pure state.
    fn exact_oracle(state: &StateVector) -> impl FnMut(&[Basis]) -> Result<ProbDist> + '_ {
        move |bases: &[Basis]| {
            let mut amps = state.amps().to_vec();
            for (q, b) in bases.iter().enumerate() {
                if let Some(rot) = b.rotation() {
                    apply_sq(&mut amps, q, &rot);
                }
            }
            Ok(ProbDist::new(amps.iter().map(|a| a.norm_sqr()).collect()))
        }
    }

    #[test]
    fn tomography_reconstructs_basis_state() {
        let zero = StateVector::zero(1);
        let rho = tomography(exact_oracle(&zero), 1).unwrap();
        assert!((rho.elements().at(0, 0).re - 1.0).abs() < 1e-9);
        assert!(rho.elements().at(1, 1).norm() < 1e-9);
    }

    #[test]
    fn tomography_exact_expectations_reproduce_rho() {
        for m in 1..=3usize {
            for seed in 0..3u64 {
                let mut rng = sub_rng(seed, 0x707 + m as u64);
                let mut amps: Vec<C64> = (0..1usize << m)
                    .map(|_| c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect();
                let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                for a in &mut amps {
                    *a /= norm;
                }
                let state = StateVector::from_amps(m, amps).unwrap();
                let rho = tomography(exact_oracle(&state), m).unwrap();
                let f = state_fidelity(&state, &rho).unwrap();
                assert!(f > 1.0 - 1e-9, "m={m} seed={seed}: fidelity {f}");
            }
        }
    }

    #[test]
    fn tomography_depolarized_input() {
        // oracle returning uniform outcomes in every basis = maximally mixed
        let rho = tomography(|_: &[Basis]| Ok(ProbDist::uniform(4)), 2).unwrap();
        for i in 0..4 {
            assert!((rho.elements().at(i, i).re - 0.25).abs() < 1e-9);
            for j in 0..4 {
                if i != j {
                    assert!(rho.elements().at(i, j).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn heavy_output_noiseless_above_two_thirds() {
        for m in 2..=4usize {
            for seed in 0..5u64 {
                let c = qv_circuit(m, seed);
                let ideal = schrodinger_run(&c, &StateVector::zero(m))
                    .unwrap()
                    .probabilities();
                let hop = heavy_output_prob(&ideal, &ideal);
                assert!(hop > 2.0 / 3.0, "m={m} seed={seed}: hop {hop}");
            }
        }
    }

    #[test]
    fn quantum_volume_noiseless_small() {
        let map = CouplingMap::all_to_all(3);
        let opts = QvOptions {
            trials: 10,
            trajectories: 1,
            restarts: 2,
            seed: 3,
        };
        let vq =
            quantum_volume_with(&map, &NoiseModel::noiseless(0), 3, &opts).unwrap();
        assert_eq!(vq, 8);
    }

    #[test]
    fn quantum_volume_heavy_readout_noise_fails_early() {
        let map = CouplingMap::all_to_all(3);
        let opts = QvOptions {
            trials: 10,
            trajectories: 50,
            restarts: 2,
            seed: 4,
        };
        let noise = NoiseModel {
            e1: 0.0,
            e2: 0.0,
            er: 0.499,
            seed: 0,
        };
        let vq = quantum_volume_with(&map, &noise, 3, &opts).unwrap();
        assert!(vq <= 2, "V_Q = {vq}");
    }

    #[test]
    fn table_reproduces_tf_product() {
        let rows = vec![TableRow {
            family: "tp1".into(),
            n: 53,
            qpu: "sycamore".into(),
            fidelity: RowFidelity::Factors {
                f_r: 1.4e-1,
                f_1qg: 1.3e-1,
                f_2qg: 7e-3,
            },
            t_sfa_s: 10.0 * 30.44 * 86400.0,
            v_q: Some(32),
        }];
        let out = supremacy_table(&rows);
        assert!((out[0].f_xeb - 1.274e-4).abs() < 1e-7);
        assert_eq!(out[0].t_f_s, out[0].t_sfa_s * out[0].f_xeb);
        // ≈ 1 hour
        assert!(out[0].t_f_s > 1800.0 && out[0].t_f_s < 7200.0);
        let md = render_markdown(&out);
        assert!(md.contains("tp1"));
        let csv = render_csv(&out);
        assert!(csv.lines().count() == 2);
    }

    #[test]
    fn perfect_fidelity_keeps_tsfa() {
        let rows = vec![TableRow {
            family: "ntp".into(),
            n: 10,
            qpu: "x".into(),
            fidelity: RowFidelity::Factors {
                f_r: 1.0,
                f_1qg: 1.0,
                f_2qg: 1.0,
            },
            t_sfa_s: 1234.0,
            v_q: None,
        }];
        let out = supremacy_table(&rows);
        assert_eq!(out[0].t_f_s, 1234.0);
    }
}
