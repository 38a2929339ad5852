//! Circuit execution engines and classical-cost estimators.
//!
//! Two exact backends: a dense Schrödinger engine (stride iteration, no
//! matrix build) and a Schrödinger–Feynman engine that cuts the qubit set in
//! two and sums `2^k` Schmidt branches, one per CNOT crossing the cut.
//! Monte-Carlo Pauli noise and shot sampling sit on top of the Schrödinger
//! engine.

use crate::circuit::{sub_rng, Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::{Mat2, C64, ZERO};
use crate::qstate::{ProbDist, StateVector};
use rand::prelude::*;
use serde::{Deserialize, Serialize};

/// Default RAM cap (qubits) for dense simulation at desk scale.
pub const DEFAULT_RAM_QUBITS: usize = 26;
/// Default cap on CNOTs crossing an SFA cut.
pub const DEFAULT_BRANCH_CAP: usize = 12;
/// Width above which single-qubit kernels parallelize over amplitude blocks.
const PARALLEL_THRESHOLD: usize = 18;

/// RAM width cap; override with the `HHL_RAM_QUBITS` environment variable.
pub fn ram_qubit_cap() -> usize {
    std::env::var("HHL_RAM_QUBITS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_RAM_QUBITS)
}

// ---------------------------------------------------------------------------
// Gate kernels
// ---------------------------------------------------------------------------

pub(crate) fn apply_sq(amps: &mut [C64], target: usize, m: &Mat2) {
    let (a, b, c, d) = (m.0[0], m.0[1], m.0[2], m.0[3]);
    let stride = 1usize << target;
    let block = stride << 1;
    let kernel = |chunk: &mut [C64]| {
        let (lo, hi) = chunk.split_at_mut(stride);
        for (x0, x1) in lo.iter_mut().zip(hi.iter_mut()) {
            let v0 = *x0;
            let v1 = *x1;
            *x0 = a * v0 + b * v1;
            *x1 = c * v0 + d * v1;
        }
    };
    if amps.len() >= 1 << PARALLEL_THRESHOLD && block <= amps.len() / 2 {
        use rayon::prelude::*;
        amps.par_chunks_mut(block).for_each(kernel);
    } else {
        amps.chunks_mut(block).for_each(kernel);
    }
}

pub(crate) fn apply_cnot(amps: &mut [C64], control: usize, target: usize) {
    let cmask = 1usize << control;
    let tmask = 1usize << target;
    for i in 0..amps.len() {
        if i & cmask != 0 && i & tmask == 0 {
            amps.swap(i, i | tmask);
        }
    }
}

pub(crate) fn apply_gate(amps: &mut [C64], gate: &Gate) {
    match gate {
        Gate::SQ { target, .. } => apply_sq(amps, *target, &gate.matrix().unwrap()),
        Gate::CNOT { control, target } => apply_cnot(amps, *control, *target),
    }
}

/// Exact dense simulation: applies each gate in `O(2^n)` by stride iteration.
pub fn schrodinger_run(circuit: &Circuit, initial: &StateVector) -> Result<StateVector> {
    let cap = ram_qubit_cap();
    if circuit.n_qubits > cap {
        return Err(Error::WidthExceeded {
            width: circuit.n_qubits,
            limit: cap,
            context: "schrodinger_run",
        });
    }
    if initial.n_qubits() != circuit.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} qubits, circuit {}",
            initial.n_qubits(),
            circuit.n_qubits
        )));
    }
    circuit.validate()?;
    let mut state = initial.clone();
    for gate in &circuit.gates {
        apply_gate(state.amps_mut(), gate);
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Schrödinger–Feynman backend
// ---------------------------------------------------------------------------

/// A qubit bipartition with the CNOTs crossing it.
///
/// `side_b` is the smaller side (`ñ` qubits); `cross_gates` indexes into the
/// circuit's gate list; `k = cross_gates.len()` so the branch count is `2^k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutPlan {
    pub side_a: Vec<usize>,
    pub side_b: Vec<usize>,
    pub cross_gates: Vec<usize>,
    pub k: usize,
}

impl CutPlan {
    /// Build a plan for a given smaller-side qubit set.
    pub fn new(circuit: &Circuit, side_b: &[usize]) -> Result<CutPlan> {
        let n = circuit.n_qubits;
        let mut side_b: Vec<usize> = side_b.to_vec();
        side_b.sort_unstable();
        side_b.dedup();
        for &q in &side_b {
            if q >= n {
                return Err(Error::QubitOutOfRange {
                    index: q,
                    n_qubits: n,
                });
            }
        }
        let side_a: Vec<usize> = (0..n).filter(|q| !side_b.contains(q)).collect();
        if side_b.len() > side_a.len() {
            return Err(Error::InvalidArgument(
                "side_b must be the smaller side of the cut".into(),
            ));
        }
        if side_a.is_empty() || side_b.is_empty() {
            return Err(Error::InvalidArgument("cut must split the qubits".into()));
        }
        let in_b = |q: usize| side_b.binary_search(&q).is_ok();
        let cross_gates: Vec<usize> = circuit
            .gates
            .iter()
            .enumerate()
            .filter_map(|(i, g)| match g {
                Gate::CNOT { control, target } if in_b(*control) != in_b(*target) => Some(i),
                _ => None,
            })
            .collect();
        let k = cross_gates.len();
        Ok(CutPlan {
            side_a,
            side_b,
            cross_gates,
            k,
        })
    }

    pub fn branches(&self) -> usize {
        1usize << self.k
    }
}

/// Pick a balanced cut minimizing the crossing-CNOT count: exhaustive over
/// all balanced bipartitions up to 12 qubits, greedy over contiguous windows
/// above.
pub fn plan_cut(circuit: &Circuit) -> Result<CutPlan> {
    let n = circuit.n_qubits;
    if n < 2 {
        return Err(Error::InvalidArgument("cannot cut a 1-qubit circuit".into()));
    }
    let nb = n / 2;
    let mut best: Option<CutPlan> = None;
    let consider = |side_b: Vec<usize>, best: &mut Option<CutPlan>| -> Result<()> {
        let plan = CutPlan::new(circuit, &side_b)?;
        if best.as_ref().map_or(true, |b| plan.k < b.k) {
            *best = Some(plan);
        }
        Ok(())
    };
    if n <= 12 {
        // all subsets of size nb, ascending mask order for determinism
        for mask in 0usize..1 << n {
            if mask.count_ones() as usize == nb {
                consider((0..n).filter(|q| mask >> q & 1 == 1).collect(), &mut best)?;
            }
        }
    } else {
        for start in 0..=(n - nb) {
            consider((start..start + nb).collect(), &mut best)?;
        }
    }
    Ok(best.unwrap())
}

struct SideMap {
    /// local index -> bits spread into the full index
    spread: Vec<usize>,
    /// full qubit -> local qubit
    local: Vec<Option<usize>>,
}

fn side_map(n: usize, qubits: &[usize]) -> SideMap {
    let mut local = vec![None; n];
    for (pos, &q) in qubits.iter().enumerate() {
        local[q] = Some(pos);
    }
    let dim = 1usize << qubits.len();
    let spread = (0..dim)
        .map(|i| {
            qubits
                .iter()
                .enumerate()
                .fold(0usize, |acc, (pos, &q)| acc | (((i >> pos) & 1) << q))
        })
        .collect();
    SideMap { spread, local }
}

/// Zero out the amplitudes where `qubit` differs from `keep` (an
/// unnormalized projector, as the Schmidt-branch sum requires).
fn project(amps: &mut [C64], qubit: usize, keep: u8) {
    let mask = 1usize << qubit;
    let want = (keep as usize) << qubit;
    for (i, a) in amps.iter_mut().enumerate() {
        if i & mask != want {
            *a = ZERO;
        }
    }
}

enum LocalGate {
    SqA(usize, Mat2),
    SqB(usize, Mat2),
    CnotA(usize, usize),
    CnotB(usize, usize),
    /// (control on side A, local control, local target, branch bit index)
    Cross(bool, usize, usize, usize),
}

/// Schrödinger–Feynman simulation: replaces each CNOT crossing the cut by
/// the two terms of `CNOT = |0><0|⊗I + |1><1|⊗X` and sums the `2^k` branch
/// contributions, each branch running two independent dense simulations.
pub fn sfa_run(circuit: &Circuit, plan: &CutPlan, initial: &StateVector) -> Result<StateVector> {
    let n = circuit.n_qubits;
    let cap = ram_qubit_cap();
    if n > cap {
        return Err(Error::WidthExceeded {
            width: n,
            limit: cap,
            context: "sfa_run",
        });
    }
    let branch_cap = std::env::var("HHL_SFA_BRANCH_CAP")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_BRANCH_CAP);
    if plan.k > branch_cap {
        return Err(Error::BranchCapExceeded {
            k: plan.k,
            cap: branch_cap,
        });
    }
    if initial.n_qubits() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} qubits, circuit {}",
            initial.n_qubits(),
            n
        )));
    }
    circuit.validate()?;
    let map_a = side_map(n, &plan.side_a);
    let map_b = side_map(n, &plan.side_b);
    let (da, db) = (map_a.spread.len(), map_b.spread.len());

    // Factor the initial state across the cut.
    let mut m = vec![ZERO; da * db];
    for ia in 0..da {
        for ib in 0..db {
            m[ia * db + ib] = initial.amps()[map_a.spread[ia] | map_b.spread[ib]];
        }
    }
    let (mut pivot, mut pa, mut pb) = (0.0f64, 0usize, 0usize);
    for ia in 0..da {
        for ib in 0..db {
            let v = m[ia * db + ib].norm();
            if v > pivot {
                pivot = v;
                pa = ia;
                pb = ib;
            }
        }
    }
    if pivot == 0.0 {
        return Err(Error::DegenerateNorm { norm: 0.0 });
    }
    let psi_a: Vec<C64> = (0..da).map(|ia| m[ia * db + pb]).collect();
    let psi_b: Vec<C64> = (0..db).map(|ib| m[pa * db + ib] / m[pa * db + pb]).collect();
    for ia in 0..da {
        for ib in 0..db {
            if (m[ia * db + ib] - psi_a[ia] * psi_b[ib]).norm() > 1e-10 {
                return Err(Error::NonProductInitial);
            }
        }
    }

    // Map each gate onto (side, local indices) once.
    let mut locals: Vec<LocalGate> = Vec::with_capacity(circuit.gates.len());
    let mut cross_rank = 0usize;
    for (i, g) in circuit.gates.iter().enumerate() {
        match g {
            Gate::SQ { target, .. } => {
                let mat = g.matrix().unwrap();
                match map_a.local[*target] {
                    Some(l) => locals.push(LocalGate::SqA(l, mat)),
                    None => locals.push(LocalGate::SqB(map_b.local[*target].unwrap(), mat)),
                }
            }
            Gate::CNOT { control, target } => {
                let ca = map_a.local[*control];
                let ta = map_a.local[*target];
                match (ca, ta) {
                    (Some(c), Some(t)) => locals.push(LocalGate::CnotA(c, t)),
                    (None, None) => locals.push(LocalGate::CnotB(
                        map_b.local[*control].unwrap(),
                        map_b.local[*target].unwrap(),
                    )),
                    (Some(c), None) => {
                        if plan.cross_gates.get(cross_rank) != Some(&i) {
                            return Err(Error::InvalidArgument(
                                "cut plan does not match the circuit".into(),
                            ));
                        }
                        locals.push(LocalGate::Cross(
                            true,
                            c,
                            map_b.local[*target].unwrap(),
                            cross_rank,
                        ));
                        cross_rank += 1;
                    }
                    (None, Some(t)) => {
                        if plan.cross_gates.get(cross_rank) != Some(&i) {
                            return Err(Error::InvalidArgument(
                                "cut plan does not match the circuit".into(),
                            ));
                        }
                        locals.push(LocalGate::Cross(
                            false,
                            map_b.local[*control].unwrap(),
                            t,
                            cross_rank,
                        ));
                        cross_rank += 1;
                    }
                }
            }
        }
    }
    if cross_rank != plan.k {
        return Err(Error::InvalidArgument(
            "cut plan does not match the circuit's crossing gates".into(),
        ));
    }

    let x = Mat2::x();
    let run_branch = |branch: usize| -> Vec<C64> {
        let mut a = psi_a.clone();
        let mut b = psi_b.clone();
        for lg in &locals {
            match lg {
                LocalGate::SqA(t, m) => apply_sq(&mut a, *t, m),
                LocalGate::SqB(t, m) => apply_sq(&mut b, *t, m),
                LocalGate::CnotA(c, t) => apply_cnot(&mut a, *c, *t),
                LocalGate::CnotB(c, t) => apply_cnot(&mut b, *c, *t),
                LocalGate::Cross(ctrl_in_a, c, t, rank) => {
                    let bit = ((branch >> rank) & 1) as u8;
                    if *ctrl_in_a {
                        project(&mut a, *c, bit);
                        if bit == 1 {
                            apply_sq(&mut b, *t, &x);
                        }
                    } else {
                        project(&mut b, *c, bit);
                        if bit == 1 {
                            apply_sq(&mut a, *t, &x);
                        }
                    }
                }
            }
        }
        let mut full = vec![ZERO; 1 << n];
        for (ia, va) in a.iter().enumerate() {
            if *va == ZERO {
                continue;
            }
            let base = map_a.spread[ia];
            for (ib, vb) in b.iter().enumerate() {
                full[base | map_b.spread[ib]] += va * vb;
            }
        }
        full
    };

    // Pairwise tree sum over branch ranges: reduction order is fixed by the
    // range splits, so the result is reproducible under any thread schedule.
    fn tree_sum(lo: usize, hi: usize, f: &(dyn Fn(usize) -> Vec<C64> + Sync)) -> Vec<C64> {
        if hi - lo == 1 {
            return f(lo);
        }
        let mid = lo + (hi - lo) / 2;
        let (mut left, right) = rayon::join(|| tree_sum(lo, mid, f), || tree_sum(mid, hi, f));
        for (l, r) in left.iter_mut().zip(right.iter()) {
            *l += r;
        }
        left
    }
    let amps = tree_sum(0, plan.branches(), &run_branch);
    StateVector::from_amps(n, amps)
}

// ---------------------------------------------------------------------------
// Sampling and Monte-Carlo noise
// ---------------------------------------------------------------------------

/// Digital error model parameters: per-gate Pauli error probabilities and a
/// per-qubit readout flip probability.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NoiseModel {
    pub e1: f64,
    pub e2: f64,
    pub er: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless(seed: u64) -> Self {
        NoiseModel {
            e1: 0.0,
            e2: 0.0,
            er: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("e1", self.e1), ("e2", self.e2), ("er", self.er)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {p} outside [0,1)"
                )));
            }
        }
        Ok(())
    }
}

/// Multinomial shot sampling from `|amps|²`; with a noise model, each
/// measured bit flips independently with probability `er`.
pub fn sample(
    state: &StateVector,
    shots: u64,
    seed: u64,
    noise: Option<&NoiseModel>,
) -> Result<ProbDist> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let probs = state.probabilities();
    let mut cdf = Vec::with_capacity(probs.dim);
    let mut acc = 0.0;
    for p in &probs.probs {
        acc += p;
        cdf.push(acc);
    }
    let er = noise.map_or(0.0, |n| n.er);
    let mut rng = sub_rng(seed, 0x5a3f_11e7);
    let mut counts = vec![0u64; probs.dim];
    let n_bits = state.n_qubits();
    for _ in 0..shots {
        let u: f64 = rng.gen::<f64>() * acc;
        let mut idx = cdf.partition_point(|&c| c < u);
        if idx >= counts.len() {
            idx = counts.len() - 1;
        }
        if er > 0.0 {
            for bit in 0..n_bits {
                if rng.gen::<f64>() < er {
                    idx ^= 1 << bit;
                }
            }
        }
        counts[idx] += 1;
    }
    Ok(ProbDist::new(
        counts.iter().map(|&c| c as f64 / shots as f64).collect(),
    ))
}

/// Multinomial shot sampling from an explicit outcome distribution.
pub fn sample_dist(dist: &ProbDist, shots: u64, seed: u64) -> Result<ProbDist> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let mut cdf = Vec::with_capacity(dist.dim);
    let mut acc = 0.0;
    for p in &dist.probs {
        acc += p;
        cdf.push(acc);
    }
    if acc <= 0.0 {
        return Err(Error::DegenerateNorm { norm: acc });
    }
    let mut rng = sub_rng(seed, 0xd117_55aa);
    let mut counts = vec![0u64; dist.dim];
    for _ in 0..shots {
        let u: f64 = rng.gen::<f64>() * acc;
        let idx = cdf.partition_point(|&c| c < u).min(counts.len() - 1);
        counts[idx] += 1;
    }
    Ok(ProbDist::new(
        counts.iter().map(|&c| c as f64 / shots as f64).collect(),
    ))
}

/// Apply the independent per-bit readout-flip channel to an exact outcome
/// distribution.
pub fn readout_channel(dist: &ProbDist, n_qubits: usize, er: f64) -> ProbDist {
    let mut probs = dist.probs.clone();
    if er > 0.0 {
        for bit in 0..n_qubits {
            let mask = 1usize << bit;
            for i in 0..probs.len() {
                if i & mask == 0 {
                    let j = i | mask;
                    let (p0, p1) = (probs[i], probs[j]);
                    probs[i] = (1.0 - er) * p0 + er * p1;
                    probs[j] = (1.0 - er) * p1 + er * p0;
                }
            }
        }
    }
    ProbDist::new(probs)
}

const PAULIS: [fn() -> Mat2; 3] = [Mat2::x, Mat2::y, Mat2::z];

/// Monte-Carlo digital-error-model simulation.
///
/// Each trajectory inserts a uniformly random non-identity Pauli after every
/// single-qubit gate with probability `e1` and a uniformly random
/// non-identity two-qubit Pauli after every CNOT with probability `e2`.
/// Trajectory RNG streams derive from `(noise.seed, trajectory index)`.
/// Returns the averaged outcome distribution with the readout channel
/// applied.
pub fn noisy_run(
    circuit: &Circuit,
    initial: &StateVector,
    noise: &NoiseModel,
    trajectories: u64,
) -> Result<ProbDist> {
    noise.validate()?;
    if trajectories == 0 {
        return Err(Error::InvalidArgument("trajectories must be >= 1".into()));
    }
    let cap = ram_qubit_cap();
    if circuit.n_qubits > cap {
        return Err(Error::WidthExceeded {
            width: circuit.n_qubits,
            limit: cap,
            context: "noisy_run",
        });
    }
    if initial.n_qubits() != circuit.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} qubits, circuit {}",
            initial.n_qubits(),
            circuit.n_qubits
        )));
    }
    circuit.validate()?;

    let one_trajectory = |t: usize| -> Vec<f64> {
        let mut rng = sub_rng(noise.seed, 0x70ea_0000 ^ t as u64);
        let mut amps = initial.amps().to_vec();
        for gate in &circuit.gates {
            apply_gate(&mut amps, gate);
            match gate {
                Gate::SQ { target, .. } => {
                    if noise.e1 > 0.0 && rng.gen::<f64>() < noise.e1 {
                        let p = rng.gen_range(0..3);
                        apply_sq(&mut amps, *target, &PAULIS[p]());
                    }
                }
                Gate::CNOT { control, target } => {
                    if noise.e2 > 0.0 && rng.gen::<f64>() < noise.e2 {
                        // uniform over the 15 non-identity two-qubit Paulis
                        let p = rng.gen_range(1..16usize);
                        let (pc, pt) = (p / 4, p % 4);
                        if pc > 0 {
                            apply_sq(&mut amps, *control, &PAULIS[pc - 1]());
                        }
                        if pt > 0 {
                            apply_sq(&mut amps, *target, &PAULIS[pt - 1]());
                        }
                    }
                }
            }
        }
        amps.iter().map(|a| a.norm_sqr()).collect()
    };

    fn tree_sum(lo: usize, hi: usize, f: &(dyn Fn(usize) -> Vec<f64> + Sync)) -> Vec<f64> {
        if hi - lo == 1 {
            return f(lo);
        }
        let mid = lo + (hi - lo) / 2;
        let (mut left, right) = rayon::join(|| tree_sum(lo, mid, f), || tree_sum(mid, hi, f));
        for (l, r) in left.iter_mut().zip(right.iter()) {
            *l += r;
        }
        left
    }
    let mut sum = tree_sum(0, trajectories as usize, &one_trajectory);
    for p in &mut sum {
        *p /= trajectories as f64;
    }
    Ok(readout_channel(
        &ProbDist::new(sum),
        circuit.n_qubits,
        noise.er,
    ))
}

// ---------------------------------------------------------------------------
// Classical-cost estimation
// ---------------------------------------------------------------------------

/// Circuit statistics consumed by the cost model.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CircuitStats {
    pub n: usize,
    pub depth: usize,
    pub gate_count: usize,
}

/// Hardware the estimate targets: the per-amplitude Schrödinger constant (in
/// seconds) and the widest state the RAM holds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MachineSpec {
    pub c_family_s: f64,
    pub ram_qubits: usize,
}

/// Runtime estimates for the three classical simulation routes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CostEstimate {
    /// Schrödinger: C · n · 2^n
    pub t_sa_s: f64,
    /// Schrödinger–Feynman: C · (n−ñ) · 2^{n−ñ} · 2^k
    pub t_sfa_s: f64,
    /// Tensor-network runtime exponent in O(n · e^exponent).
    pub t_tn_exponent: f64,
    /// Equal-fidelity runtime T_f = T_SFA · fidelity, when a fidelity is given.
    pub t_f_s: Option<f64>,
    pub c_family_s: f64,
}

/// Evaluate the Schrödinger / Schrödinger–Feynman / tensor-network cost
/// formulas. Pure arithmetic: identical inputs give identical outputs.
pub fn estimate_costs(
    stats: &CircuitStats,
    n_tilde: usize,
    k: usize,
    machine: &MachineSpec,
    fidelity: Option<f64>,
) -> Result<CostEstimate> {
    let n = stats.n;
    if n_tilde > n / 2 {
        return Err(Error::InvalidArgument(format!(
            "ñ = {n_tilde} exceeds half the width {n}"
        )));
    }
    let big = n - n_tilde;
    if big > machine.ram_qubits {
        return Err(Error::WidthExceeded {
            width: big,
            limit: machine.ram_qubits,
            context: "estimate_costs: circuit half exceeds RAM",
        });
    }
    let c = machine.c_family_s;
    let t_sa_s = c * n as f64 * (n as f64).exp2();
    let t_sfa_s = c * big as f64 * (big as f64).exp2() * (k as f64).exp2();
    Ok(CostEstimate {
        t_sa_s,
        t_sfa_s,
        t_tn_exponent: n as f64,
        t_f_s: fidelity.map(|f| t_sfa_s * f),
        c_family_s: c,
    })
}

/// Reference QPU wall-time to sample an n-qubit circuit one million times.
pub fn qpu_sampling_seconds(n: usize) -> f64 {
    2.0 + 1.5 * n as f64
}
