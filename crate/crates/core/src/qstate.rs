//! Dense state vectors, density matrices and probability distributions.
//!
//! Qubit index 0 is the least-significant bit of the basis-state integer;
//! every module in the crate shares this convention.

use crate::error::{Error, Result};
use crate::linalg::{c64, C64, CMat, ZERO};
use serde::{Deserialize, Serialize};

/// Norm below which renormalization is treated as an error rather than
/// silently rescaling.
pub const NORM_FLOOR: f64 = 1e-12;

/// Dense complex amplitudes of an n-qubit pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// |0...0> on n qubits.
    pub fn zero(n_qubits: usize) -> Self {
        assert!(n_qubits >= 1, "state needs at least one qubit");
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = c64(1.0, 0.0);
        StateVector { n_qubits, amps }
    }

    /// Computational basis state |index>.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut s = StateVector::zero(n_qubits);
        s.amps[0] = ZERO;
        s.amps[index] = c64(1.0, 0.0);
        s
    }

    pub fn from_amps(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1 << n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "expected {} amplitudes for {} qubits, got {}",
                1usize << n_qubits,
                n_qubits,
                amps.len()
            )));
        }
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Rescale to unit norm. Degenerate norms are an error, never a silent fix.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n < NORM_FLOOR {
            return Err(Error::DegenerateNorm { norm: n });
        }
        let inv = 1.0 / n;
        for a in &mut self.amps {
            *a *= inv;
        }
        Ok(())
    }

    /// |<a|b>|^2
    pub fn overlap_sqr(&self, other: &StateVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "overlap of dim {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let ip: C64 = self
            .amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(ip.norm_sqr())
    }

    /// Probability of measuring `outcome` on `qubit`.
    pub fn marginal_prob(&self, qubit: usize, outcome: u8) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitOutOfRange {
                index: qubit,
                n_qubits: self.n_qubits,
            });
        }
        let mask = 1usize << qubit;
        let want = (outcome as usize) << qubit;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == want)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Measurement distribution |amps|^2.
    pub fn probabilities(&self) -> ProbDist {
        ProbDist::new(self.amps.iter().map(|a| a.norm_sqr()).collect())
    }

    /// Kronecker product: `self` holds the high-order qubits of the result.
    pub fn kron(&self, low: &StateVector) -> StateVector {
        let n = self.n_qubits + low.n_qubits;
        let mut amps = vec![ZERO; 1 << n];
        let ld = low.dim();
        for (i, a) in self.amps.iter().enumerate() {
            if *a == ZERO {
                continue;
            }
            for (j, b) in low.amps.iter().enumerate() {
                amps[i * ld + j] = a * b;
            }
        }
        StateVector { n_qubits: n, amps }
    }

    pub fn max_amp_diff(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Serialize for StateVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateDump::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let dump = StateDump::deserialize(d)?;
        StateVector::try_from(dump).map_err(serde::de::Error::custom)
    }
}

/// JSON dump format used by the CLI `--dump-state`: `n_qubits` plus an array
/// of `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
pub struct StateDump {
    pub n_qubits: usize,
    pub amps: Vec<[f64; 2]>,
}

impl From<&StateVector> for StateDump {
    fn from(s: &StateVector) -> Self {
        StateDump {
            n_qubits: s.n_qubits,
            amps: s.amps.iter().map(|a| [a.re, a.im]).collect(),
        }
    }
}

impl TryFrom<StateDump> for StateVector {
    type Error = Error;
    fn try_from(d: StateDump) -> Result<StateVector> {
        StateVector::from_amps(d.n_qubits, d.amps.iter().map(|p| c64(p[0], p[1])).collect())
    }
}

/// Dense density matrix on n qubits.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    n_qubits: usize,
    elements: CMat,
}

impl DensityMatrix {
    pub fn from_pure(state: &StateVector) -> Self {
        let dim = state.dim();
        let mut m = CMat::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.set(i, j, state.amps[i] * state.amps[j].conj());
            }
        }
        DensityMatrix {
            n_qubits: state.n_qubits,
            elements: m,
        }
    }

    pub fn from_elements(n_qubits: usize, elements: CMat) -> Result<Self> {
        if elements.dim != 1 << n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "density matrix dim {} vs {} qubits",
                elements.dim, n_qubits
            )));
        }
        Ok(DensityMatrix { n_qubits, elements })
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let mut m = CMat::zeros(dim);
        for i in 0..dim {
            m.set(i, i, c64(1.0 / dim as f64, 0.0));
        }
        DensityMatrix {
            n_qubits,
            elements: m,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.elements.dim
    }

    pub fn elements(&self) -> &CMat {
        &self.elements
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.elements.at(i, i)).sum()
    }

    /// Max deviation from Hermitian symmetry.
    pub fn hermiticity_deviation(&self) -> f64 {
        let mut dev = 0.0f64;
        for i in 0..self.dim() {
            for j in i..self.dim() {
                dev = dev.max((self.elements.at(i, j) - self.elements.at(j, i).conj()).norm());
            }
        }
        dev
    }
}

/// Tomography fidelity <psi| rho |psi>, clamped to [0, 1].
pub fn state_fidelity(pure: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    if pure.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state dim {} vs density matrix dim {}",
            pure.dim(),
            rho.dim()
        )));
    }
    let rv = rho.elements.apply(pure.amps());
    let f: C64 = pure
        .amps
        .iter()
        .zip(rv.iter())
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(f.re.clamp(0.0, 1.0))
}

/// Trace out every qubit not in `keep`, producing the reduced density matrix
/// on the kept qubits (kept indices are compacted in ascending order, the
/// lowest kept qubit becoming bit 0 of the result).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::EmptySubset);
    }
    let n = rho.n_qubits();
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    for &q in &keep_sorted {
        if q >= n {
            return Err(Error::QubitOutOfRange {
                index: q,
                n_qubits: n,
            });
        }
    }
    let trace_out: Vec<usize> = (0..n).filter(|q| !keep_sorted.contains(q)).collect();
    let kd = 1usize << keep_sorted.len();
    let td = 1usize << trace_out.len();
    let expand = |kept_bits: usize, traced_bits: usize| -> usize {
        let mut idx = 0usize;
        for (pos, &q) in keep_sorted.iter().enumerate() {
            idx |= ((kept_bits >> pos) & 1) << q;
        }
        for (pos, &q) in trace_out.iter().enumerate() {
            idx |= ((traced_bits >> pos) & 1) << q;
        }
        idx
    };
    let mut out = CMat::zeros(kd);
    for a in 0..kd {
        for b in 0..kd {
            let mut acc = ZERO;
            for t in 0..td {
                acc += rho.elements.at(expand(a, t), expand(b, t));
            }
            out.set(a, b, acc);
        }
    }
    DensityMatrix::from_elements(keep_sorted.len(), out)
}

/// Project onto `qubit = outcome`, drop the qubit, renormalize.
///
/// Returns the reduced state and the pre-selection probability of the branch.
/// A zero-probability branch is an explicit error, never a NaN state.
pub fn postselect(state: &StateVector, qubit: usize, outcome: u8) -> Result<(StateVector, f64)> {
    if qubit >= state.n_qubits() {
        return Err(Error::QubitOutOfRange {
            index: qubit,
            n_qubits: state.n_qubits(),
        });
    }
    let prob = state.marginal_prob(qubit, outcome)?;
    if prob < NORM_FLOOR * NORM_FLOOR {
        return Err(Error::ZeroProbability { qubit, outcome });
    }
    let low_mask = (1usize << qubit) - 1;
    let want = (outcome as usize) << qubit;
    let mask = 1usize << qubit;
    let mut amps = vec![ZERO; state.dim() / 2];
    for (i, a) in state.amps().iter().enumerate() {
        if i & mask == want {
            let reduced = (i & low_mask) | ((i >> 1) & !low_mask);
            amps[reduced] = *a;
        }
    }
    let mut out = StateVector {
        n_qubits: state.n_qubits() - 1,
        amps,
    };
    out.normalize()?;
    Ok((out, prob))
}

/// Probability distribution over computational-basis outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbDist {
    pub dim: usize,
    pub probs: Vec<f64>,
}

impl ProbDist {
    pub fn new(probs: Vec<f64>) -> Self {
        ProbDist {
            dim: probs.len(),
            probs,
        }
    }

    pub fn uniform(dim: usize) -> Self {
        ProbDist {
            dim,
            probs: vec![1.0 / dim as f64; dim],
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let t = self.total();
        if t < NORM_FLOOR {
            return Err(Error::DegenerateNorm { norm: t });
        }
        for p in &mut self.probs {
            *p /= t;
        }
        Ok(())
    }

    pub fn dot(&self, other: &ProbDist) -> f64 {
        self.probs
            .iter()
            .zip(other.probs.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Total-variation distance.
    pub fn tv_distance(&self, other: &ProbDist) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(other.probs.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::phase;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_state(n: usize, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut amps: Vec<C64> = (0..1usize << n)
            .map(|_| c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        StateVector::from_amps(n, amps).unwrap()
    }

    fn plus_state() -> StateVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::from_amps(1, vec![c64(s, 0.0), c64(s, 0.0)]).unwrap()
    }

    #[test]
    fn fidelity_identity_case() {
        let zero = StateVector::zero(1);
        let rho = DensityMatrix::from_pure(&zero);
        assert!((state_fidelity(&zero, &rho).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fidelity_orthogonal_states() {
        let zero = StateVector::zero(1);
        let one = StateVector::basis(1, 1);
        let rho = DensityMatrix::from_pure(&one);
        assert!(state_fidelity(&zero, &rho).unwrap() < 1e-15);
    }

    #[test]
    fn fidelity_plus_vs_maximally_mixed() {
        // direct matrix arithmetic: <+| I/2 |+> = 1/2
        let rho = DensityMatrix::maximally_mixed(1);
        assert!((state_fidelity(&plus_state(), &rho).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fidelity_self_is_one() {
        for seed in 0..10 {
            let s = random_state(3, seed);
            let rho = DensityMatrix::from_pure(&s);
            assert!((state_fidelity(&s, &rho).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelity_dimension_mismatch() {
        let s = StateVector::zero(2);
        let rho = DensityMatrix::maximally_mixed(1);
        assert!(state_fidelity(&s, &rho).is_err());
    }

    #[test]
    fn partial_trace_product_state() {
        // |00><00|, keep qubit 0 -> |0><0|
        let rho = DensityMatrix::from_pure(&StateVector::zero(2));
        let red = partial_trace(&rho, &[0]).unwrap();
        assert!((red.elements().at(0, 0) - c64(1.0, 0.0)).norm() < 1e-14);
        assert!(red.elements().at(1, 1).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_bell_is_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell =
            StateVector::from_amps(2, vec![c64(s, 0.0), ZERO, ZERO, c64(s, 0.0)]).unwrap();
        let rho = DensityMatrix::from_pure(&bell);
        for keep in [0usize, 1] {
            let red = partial_trace(&rho, &[keep]).unwrap();
            assert!((red.elements().at(0, 0).re - 0.5).abs() < 1e-14);
            assert!((red.elements().at(1, 1).re - 0.5).abs() < 1e-14);
            assert!(red.elements().at(0, 1).norm() < 1e-14);
        }
    }

    #[test]
    fn partial_trace_preserves_trace_and_hermiticity() {
        for seed in 0..5 {
            let s = random_state(3, seed);
            let rho = DensityMatrix::from_pure(&s);
            let red = partial_trace(&rho, &[0]).unwrap();
            assert!((red.trace() - c64(1.0, 0.0)).norm() < 1e-12);
            assert!(red.hermiticity_deviation() < 1e-12);
        }
    }

    /// Brute-force oracle: reduced matrix element as an explicit double sum
    /// over traced-out bit patterns, written independently of partial_trace.
    fn partial_trace_brute(state: &StateVector, keep: &[usize]) -> CMat {
        let n = state.n_qubits();
        let kd = 1usize << keep.len();
        let mut out = CMat::zeros(kd);
        for i in 0..state.dim() {
            for j in 0..state.dim() {
                // indices must agree on all non-kept qubits
                let mut same = true;
                for q in 0..n {
                    if !keep.contains(&q) && ((i >> q) & 1) != ((j >> q) & 1) {
                        same = false;
                        break;
                    }
                }
                if !same {
                    continue;
                }
                let mut a = 0usize;
                let mut b = 0usize;
                for (pos, &q) in keep.iter().enumerate() {
                    a |= ((i >> q) & 1) << pos;
                    b |= ((j >> q) & 1) << pos;
                }
                let v = out.at(a, b) + state.amps()[i] * state.amps()[j].conj();
                out.set(a, b, v);
            }
        }
        out
    }

    #[test]
    fn partial_trace_matches_brute_force() {
        for seed in 0..4 {
            let s = random_state(4, seed + 100);
            let rho = DensityMatrix::from_pure(&s);
            for keep in [vec![0], vec![2], vec![0, 3], vec![1, 2], vec![0, 1, 2]] {
                let red = partial_trace(&rho, &keep).unwrap();
                let brute = partial_trace_brute(&s, &keep);
                assert!(red.elements().max_diff(&brute) < 1e-12);
            }
        }
    }

    #[test]
    fn partial_trace_commutes_with_relabeling() {
        // Swapping qubits 0<->1 of the state then keeping {0} equals keeping {1}.
        for seed in 0..4 {
            let s = random_state(4, seed + 40);
            let mut swapped = s.clone();
            let amps = swapped.amps_mut();
            for i in 0..amps.len() {
                let j = (i & !0b11) | ((i & 1) << 1) | ((i >> 1) & 1);
                if j > i {
                    amps.swap(i, j);
                }
            }
            let a = partial_trace(&DensityMatrix::from_pure(&s), &[1]).unwrap();
            let b = partial_trace(&DensityMatrix::from_pure(&swapped), &[0]).unwrap();
            assert!(a.elements().max_diff(b.elements()) < 1e-12);
        }
    }

    #[test]
    fn partial_trace_rejects_bad_input() {
        let rho = DensityMatrix::from_pure(&StateVector::zero(2));
        assert!(matches!(partial_trace(&rho, &[]), Err(Error::EmptySubset)));
        assert!(matches!(
            partial_trace(&rho, &[5]),
            Err(Error::QubitOutOfRange { .. })
        ));
    }

    #[test]
    fn postselect_basis_state() {
        // |10>: qubit 1 is the MSB. Select qubit 1 = 1 -> |0>, prob 1.
        let s = StateVector::basis(2, 0b10);
        let (out, p) = postselect(&s, 1, 1).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
        assert!((out.amps()[0] - c64(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn postselect_bell() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell =
            StateVector::from_amps(2, vec![c64(s, 0.0), ZERO, ZERO, c64(s, 0.0)]).unwrap();
        let (out, p) = postselect(&bell, 0, 1).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!((out.amps()[1] - c64(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn postselect_zero_probability_is_error() {
        let s = StateVector::zero(2);
        assert!(matches!(
            postselect(&s, 0, 1),
            Err(Error::ZeroProbability { .. })
        ));
    }

    #[test]
    fn postselect_probs_sum_to_one() {
        for seed in 0..8 {
            let s = random_state(3, seed + 7);
            for q in 0..3 {
                let p0 = s.marginal_prob(q, 0).unwrap();
                let p1 = s.marginal_prob(q, 1).unwrap();
                assert!((p0 + p1 - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut s = StateVector::from_amps(1, vec![c64(3.0, 0.0), c64(0.0, 4.0)]).unwrap();
        s.normalize().unwrap();
        let first = s.clone();
        s.normalize().unwrap();
        assert!(s.max_amp_diff(&first) < 1e-15);
        assert!((s.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normalize_degenerate_is_error() {
        let mut s = StateVector::from_amps(1, vec![ZERO, c64(1e-14, 0.0)]).unwrap();
        assert!(matches!(s.normalize(), Err(Error::DegenerateNorm { .. })));
    }

    #[test]
    fn state_dump_round_trip() {
        let s = random_state(2, 5);
        let dump = StateDump::from(&s);
        let txt = serde_json::to_string(&dump).unwrap();
        let back: StateDump = serde_json::from_str(&txt).unwrap();
        let s2 = StateVector::try_from(back).unwrap();
        assert!(s.max_amp_diff(&s2) < 1e-15);
    }

    #[test]
    fn probdist_normalized_flag() {
        let mut p = ProbDist::new(vec![0.2, 0.2]);
        p.normalize().unwrap();
        assert!((p.total() - 1.0).abs() < 1e-9);
        let _ = phase(0.0); // keep import used
    }
}
