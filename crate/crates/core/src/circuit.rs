//! Gate and circuit data model, generators for the TP1/TP2/NTP unitary
//! families, and the controlled-power construction used by phase estimation.
//!
//! Family circuits realize `U = U_c ⊗ R` (up to a recorded entangling
//! conjugation) where `R` squares to ±identity and the correcting gate `U_c`
//! pins the full spectrum to dyadic eighths. Consequences used everywhere
//! downstream:
//!
//! - `U^{2s} = U_c^{2s} ⊗ I`, so high controlled powers collapse onto two
//!   qubits;
//! - every non-correcting single-qubit gate is a Hermitian involution, so its
//!   controlled version costs exactly one CNOT;
//! - eigenphases live on the 3-bit dyadic grid {1/8, 3/8, 5/8, 7/8}, whose
//!   least-significant bit is constant — the hook for the hybrid reduction.

use crate::error::{Error, Result};
use crate::linalg::{c64, mat2_hermitian_eigen, phase, u3_angles, u3_matrix, CMat, Mat2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};

/// Memory guard for dense matrix construction (2^14 x 2^14 complex).
pub const UNITARY_OF_MAX_QUBITS: usize = 14;

// ---------------------------------------------------------------------------
// Gates and circuits
// ---------------------------------------------------------------------------

/// A gate in the {single-qubit, CNOT} gate set.
///
/// Single-qubit gates store U3-style Euler angles plus a global phase, so an
/// arbitrary 2x2 unitary is exactly one gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "GateJson", try_from = "GateJson")]
pub enum Gate {
    SQ {
        target: usize,
        theta: f64,
        phi: f64,
        lambda_angle: f64,
        global: f64,
    },
    CNOT {
        control: usize,
        target: usize,
    },
}

#[derive(Serialize, Deserialize, Clone)]
struct GateJson {
    kind: String,
    targets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<f64>,
}

impl From<Gate> for GateJson {
    fn from(g: Gate) -> GateJson {
        match g {
            Gate::SQ {
                target,
                theta,
                phi,
                lambda_angle,
                global,
            } => GateJson {
                kind: "sq".into(),
                targets: vec![target],
                params: vec![theta, phi, lambda_angle, global],
            },
            Gate::CNOT { control, target } => GateJson {
                kind: "cnot".into(),
                targets: vec![control, target],
                params: vec![],
            },
        }
    }
}

impl TryFrom<GateJson> for Gate {
    type Error = String;
    fn try_from(j: GateJson) -> std::result::Result<Gate, String> {
        match j.kind.as_str() {
            "sq" => {
                if j.targets.len() != 1 || j.params.len() != 4 {
                    return Err("sq gate needs 1 target and 4 params".into());
                }
                Ok(Gate::SQ {
                    target: j.targets[0],
                    theta: j.params[0],
                    phi: j.params[1],
                    lambda_angle: j.params[2],
                    global: j.params[3],
                })
            }
            "cnot" => {
                if j.targets.len() != 2 {
                    return Err("cnot gate needs 2 targets".into());
                }
                if j.targets[0] == j.targets[1] {
                    return Err("cnot control equals target".into());
                }
                Ok(Gate::CNOT {
                    control: j.targets[0],
                    target: j.targets[1],
                })
            }
            k => Err(format!("unknown gate kind `{k}`")),
        }
    }
}

impl Gate {
    /// Single-qubit gate from an explicit 2x2 unitary.
    pub fn sq(target: usize, m: &Mat2) -> Gate {
        debug_assert!(m.unitarity_deviation() < 1e-10, "gate must be unitary");
        let (theta, phi, lambda_angle, global) = u3_angles(m);
        Gate::SQ {
            target,
            theta,
            phi,
            lambda_angle,
            global,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Gate {
        assert_ne!(control, target, "cnot control equals target");
        Gate::CNOT { control, target }
    }

    pub fn matrix(&self) -> Option<Mat2> {
        match self {
            Gate::SQ {
                theta,
                phi,
                lambda_angle,
                global,
                ..
            } => Some(u3_matrix(*theta, *phi, *lambda_angle, *global)),
            Gate::CNOT { .. } => None,
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::SQ { target, .. } => vec![*target],
            Gate::CNOT { control, target } => vec![*control, *target],
        }
    }

    pub fn is_cnot(&self) -> bool {
        matches!(self, Gate::CNOT { .. })
    }
}

/// Ordered gate list over `n_qubits` wires plus free-form metadata tags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub n_qubits: usize,
    pub gates: Vec<Gate>,
    pub tags: BTreeMap<String, serde_json::Value>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            gates: Vec::new(),
            tags: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, gate: Gate) {
        debug_assert!(
            gate.qubits().iter().all(|&q| q < self.n_qubits),
            "gate qubit out of range"
        );
        self.gates.push(gate);
    }

    pub fn extend(&mut self, gates: impl IntoIterator<Item = Gate>) {
        for g in gates {
            self.push(g);
        }
    }

    pub fn sq_count(&self) -> usize {
        self.gates.iter().filter(|g| !g.is_cnot()).count()
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_cnot()).count()
    }

    /// Number of layers when gates on disjoint qubits co-schedule; every gate
    /// costs one layer.
    pub fn depth(&self) -> usize {
        let mut frontier = vec![0usize; self.n_qubits];
        let mut depth = 0;
        for g in &self.gates {
            let qs = g.qubits();
            let layer = qs.iter().map(|&q| frontier[q]).max().unwrap_or(0) + 1;
            for q in qs {
                frontier[q] = layer;
            }
            depth = depth.max(layer);
        }
        depth
    }

    pub fn validate(&self) -> Result<()> {
        for g in &self.gates {
            for q in g.qubits() {
                if q >= self.n_qubits {
                    return Err(Error::QubitOutOfRange {
                        index: q,
                        n_qubits: self.n_qubits,
                    });
                }
            }
            if let Gate::CNOT { control, target } = g {
                if control == target {
                    return Err(Error::InvalidArgument("cnot control equals target".into()));
                }
            }
        }
        Ok(())
    }

    /// Generator metadata, if this circuit was produced by `gen_family`.
    pub fn family_meta(&self) -> Result<FamilyMeta> {
        let v = self
            .tags
            .get("generator")
            .ok_or(Error::MissingFamilyMeta("controlled_power"))?;
        serde_json::from_value(v.clone())
            .map_err(|_| Error::MissingFamilyMeta("controlled_power"))
    }
}

/// Dense unitary of the whole circuit: the brute-force oracle used by tests.
///
/// Builds the ordered gate product by Kronecker-block row mixing on an
/// explicit matrix; deliberately shares no code with the state-vector engine.
pub fn unitary_of(circuit: &Circuit) -> Result<CMat> {
    let n = circuit.n_qubits;
    if n > UNITARY_OF_MAX_QUBITS {
        return Err(Error::WidthExceeded {
            width: n,
            limit: UNITARY_OF_MAX_QUBITS,
            context: "unitary_of",
        });
    }
    circuit.validate()?;
    let dim = 1usize << n;
    let mut m = CMat::identity(dim);
    for gate in &circuit.gates {
        match gate {
            Gate::SQ { target, .. } => {
                let g = gate.matrix().unwrap();
                let (a, b, c, d) = (g.0[0], g.0[1], g.0[2], g.0[3]);
                let mask = 1usize << target;
                for r0 in 0..dim {
                    if r0 & mask != 0 {
                        continue;
                    }
                    let r1 = r0 | mask;
                    for j in 0..dim {
                        let x0 = m.at(r0, j);
                        let x1 = m.at(r1, j);
                        m.set(r0, j, a * x0 + b * x1);
                        m.set(r1, j, c * x0 + d * x1);
                    }
                }
            }
            Gate::CNOT { control, target } => {
                let cmask = 1usize << control;
                let tmask = 1usize << target;
                for r in 0..dim {
                    if r & cmask != 0 && r & tmask == 0 {
                        let r2 = r | tmask;
                        for j in 0..dim {
                            let tmp = m.at(r, j);
                            m.set(r, j, m.at(r2, j));
                            m.set(r2, j, tmp);
                        }
                    }
                }
            }
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Family generation
// ---------------------------------------------------------------------------

/// The three structured unitary families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tp1,
    Tp2,
    Ntp,
}

impl Family {
    pub fn min_vector_qubits(&self) -> usize {
        match self {
            Family::Tp1 => 1,
            Family::Tp2 | Family::Ntp => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Tp1 => "tp1",
            Family::Tp2 => "tp2",
            Family::Ntp => "ntp",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Family> {
        match s.to_ascii_lowercase().as_str() {
            "tp1" => Ok(Family::Tp1),
            "tp2" => Ok(Family::Tp2),
            "ntp" => Ok(Family::Ntp),
            other => Err(Error::InvalidArgument(format!("unknown family `{other}`"))),
        }
    }
}

/// Serializable 2x2 unitary (U3 angles + global phase).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub theta: f64,
    pub phi: f64,
    pub lambda_angle: f64,
    pub global: f64,
}

impl GateParams {
    pub fn from_mat(m: &Mat2) -> Self {
        let (theta, phi, lambda_angle, global) = u3_angles(m);
        GateParams {
            theta,
            phi,
            lambda_angle,
            global,
        }
    }

    pub fn matrix(&self) -> Mat2 {
        u3_matrix(self.theta, self.phi, self.lambda_angle, self.global)
    }
}

/// Per-qubit spectral factor of a generated family unitary.
///
/// `eigvec` columns are the factor's eigenvectors (in the basis before the
/// entangling conjugation); `phases_eighths[b]` is the eigenphase of column
/// `b` in units of 1/8 turns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Factor {
    pub qubit: usize,
    pub eigvec: GateParams,
    pub phases_eighths: [u8; 2],
}

/// Metadata a family generator attaches to its circuit, enough to rebuild
/// eigenvectors and controlled powers without re-running the generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyMeta {
    pub family: Family,
    pub n_vector_qubits: usize,
    pub seed: u64,
    /// Qubit carrying the correcting gate.
    pub uc_qubit: usize,
    /// Index of the correcting gate in the gate list.
    pub uc_gate_index: usize,
    /// Correcting gate whose powers reproduce `U^{2s}` on `uc_qubit`
    /// (absorbs the ±i bookkeeping of quarter-turn factors).
    pub uc_reported: GateParams,
    pub factors: Vec<Factor>,
    /// Entangling CNOTs to apply (in order) to a product of factor
    /// eigenvectors to obtain an eigenvector of the full unitary.
    pub entangler_suffix: Vec<(usize, usize)>,
}

/// Dyadic eigenphase set of a generated unitary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Bits needed to represent every eigenphase exactly.
    pub p_full: u32,
    pub entries: Vec<SpectrumEntry>,
}

/// One distinct eigenphase `numer / 2^p_full` with a representative
/// eigenvector label (one character per qubit, highest qubit first).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub numer: u64,
    pub label: String,
}

impl Spectrum {
    pub fn denom(&self) -> u64 {
        1u64 << self.p_full
    }

    pub fn phases(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.numer as f64 / self.denom() as f64)
            .collect()
    }

    pub fn min_phase(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.numer)
            .min()
            .map(|n| n as f64 / self.denom() as f64)
            .unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if e.numer == 0 || e.numer >= self.denom() {
                return Err(Error::InvalidArgument(format!(
                    "eigenphase {}/{} outside (0,1)",
                    e.numer,
                    self.denom()
                )));
            }
        }
        Ok(())
    }

    /// Bit positions (0 = least significant) whose value is identical across
    /// all eigenphase numerators, with that shared value.
    pub fn constant_bits(&self) -> Vec<(u32, u8)> {
        let mut out = Vec::new();
        for pos in 0..self.p_full {
            let first = (self.entries[0].numer >> pos) & 1;
            if self
                .entries
                .iter()
                .all(|e| (e.numer >> pos) & 1 == first)
            {
                out.push((pos, first as u8));
            }
        }
        out
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Deterministic sub-stream RNG for (seed, salt) pairs.
pub(crate) fn sub_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(salt)))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; fine for generator-quality randomness.
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Haar-random SU(2).
fn haar_su2(rng: &mut ChaCha8Rng) -> Mat2 {
    let q: Vec<f64> = (0..4).map(|_| gaussian(rng)).collect();
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (a, b) = (c64(q[0] / n, q[1] / n), c64(q[2] / n, q[3] / n));
    Mat2([a, -b.conj(), b, a.conj()])
}

fn random_unit_vec3(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [gaussian(rng), gaussian(rng), gaussian(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn orthogonal_unit_vec3(rng: &mut ChaCha8Rng, a: [f64; 3]) -> [f64; 3] {
    loop {
        let r = random_unit_vec3(rng);
        let dot = a[0] * r[0] + a[1] * r[1] + a[2] * r[2];
        let v = [r[0] - dot * a[0], r[1] - dot * a[1], r[2] - dot * a[2]];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Correcting-gate core: diag(e^{2πi/8}, e^{2πi·3/8}).
fn uc_core() -> Mat2 {
    Mat2::diag(phase(FRAC_PI_4), phase(3.0 * FRAC_PI_4))
}

struct FactorEmit {
    gates: Vec<Mat2>,
    eigvec: Mat2,
    phases_eighths: [u8; 2],
    /// Whether the factor operator squares to -I (a quarter-turn factor).
    quarter: bool,
}

/// Hermitian involution V X V† emitted as one gate.
fn reflection_factor(rng: &mut ChaCha8Rng) -> FactorEmit {
    let v = haar_su2(rng);
    let s = v.mul(&Mat2::x()).mul(&v.adjoint());
    // eigenvectors: V|+>, V|-> with eigenvalues +1, -1
    let w = v.mul(&Mat2::hadamard());
    FactorEmit {
        gates: vec![s],
        eigvec: w,
        phases_eighths: [0, 4],
        quarter: false,
    }
}

/// Two perpendicular reflections A, B; the emitted pair realizes M = B·A
/// with M² = −I and eigenphases {1/4, 3/4}.
fn quarter_factor(rng: &mut ChaCha8Rng) -> FactorEmit {
    let a_axis = random_unit_vec3(rng);
    let b_axis = orthogonal_unit_vec3(rng, a_axis);
    let a = Mat2::axis_reflection(a_axis);
    let b = Mat2::axis_reflection(b_axis);
    let m = b.mul(&a);
    // M = i (b̂ × â)·σ ; eigenvectors of the Hermitian part.
    let herm = m.scale(c64(0.0, -1.0));
    let (eigs, w) = mat2_hermitian_eigen(&herm);
    // column order: ascending Hermitian eigenvalue. Map to M's phases:
    // herm eig -1 -> M eig -i -> 3/4 turn (6 eighths); +1 -> +i -> 2 eighths.
    debug_assert!((eigs[0] + 1.0).abs() < 1e-9 && (eigs[1] - 1.0).abs() < 1e-9);
    FactorEmit {
        gates: vec![a, b],
        eigvec: w,
        phases_eighths: [6, 2],
        quarter: true,
    }
}

/// Generate a family unitary circuit and its exact spectrum.
///
/// Deterministic in `(family, n_vector_qubits, seed)`. Single-qubit gate
/// counts are n, 2n−1 and 2n−2 for TP1, TP2 and NTP.
pub fn gen_family(family: Family, n_vector_qubits: usize, seed: u64) -> Result<(Circuit, Spectrum)> {
    let n = n_vector_qubits;
    if n < family.min_vector_qubits() {
        return Err(Error::FamilyTooSmall {
            family: family.name(),
            min: family.min_vector_qubits(),
            got: n,
        });
    }
    let mut rng = sub_rng(seed, family as u64 + 1);
    let uc_qubit = n - 1;

    // Per-qubit factors (qubits 0..n-1 except uc_qubit).
    let mut factor_emits: Vec<(usize, FactorEmit)> = Vec::new();
    match family {
        Family::Tp1 => {
            for q in 0..n - 1 {
                factor_emits.push((q, reflection_factor(&mut rng)));
            }
        }
        Family::Tp2 => {
            for q in 0..n - 1 {
                factor_emits.push((q, quarter_factor(&mut rng)));
            }
        }
        Family::Ntp => {
            factor_emits.push((0, reflection_factor(&mut rng)));
            for q in 1..n - 1 {
                factor_emits.push((q, quarter_factor(&mut rng)));
            }
        }
    }
    let quarters = factor_emits.iter().filter(|(_, f)| f.quarter).count();

    // Correcting gate: random eigenbasis for the tensor-product families; the
    // computational basis for NTP so ladder CNOTs controlled on uc_qubit
    // commute with its even powers.
    let v_c = match family {
        Family::Ntp => Mat2::IDENTITY,
        _ => haar_su2(&mut rng),
    };
    let uc_gate = v_c.mul(&uc_core()).mul(&v_c.adjoint());
    // Quarter factors flip the sign of R², absorbed into the reported U_c.
    let uc_reported = if quarters % 2 == 1 {
        uc_gate.scale(c64(0.0, 1.0))
    } else {
        uc_gate
    };

    // Assemble the gate list.
    let mut circ = Circuit::new(n);
    let mut suffix: Vec<(usize, usize)> = Vec::new();
    let uc_gate_index;
    match family {
        Family::Tp1 => {
            for (q, f) in &factor_emits {
                for g in &f.gates {
                    circ.push(Gate::sq(*q, g));
                }
            }
            uc_gate_index = circ.gates.len();
            circ.push(Gate::sq(uc_qubit, &uc_gate));
        }
        Family::Tp2 => {
            // Pair up the non-correcting qubits: (0,1), (2,3), ...
            let mut q = 0usize;
            while q + 1 < n - 1 {
                circ.push(Gate::cnot(q, q + 1));
                for (fq, f) in factor_emits.iter().filter(|(fq, _)| *fq == q || *fq == q + 1)
                {
                    for g in &f.gates {
                        circ.push(Gate::sq(*fq, g));
                    }
                }
                circ.push(Gate::cnot(q, q + 1));
                suffix.push((q, q + 1));
                q += 2;
            }
            if q < n - 1 {
                // lone qubit, no cluster partner
                let f = &factor_emits.iter().find(|(fq, _)| *fq == q).unwrap().1;
                for g in &f.gates {
                    circ.push(Gate::sq(q, g));
                }
            }
            uc_gate_index = circ.gates.len();
            circ.push(Gate::sq(uc_qubit, &uc_gate));
        }
        Family::Ntp => {
            // U = E (D ⊗ factors) E†, E a CNOT ladder chaining every qubit.
            let mut ladder: Vec<(usize, usize)> = vec![(uc_qubit, 0)];
            for q in 0..n.saturating_sub(2) {
                ladder.push((q, q + 1));
            }
            for &(c, t) in ladder.iter().rev() {
                circ.push(Gate::cnot(c, t));
            }
            uc_gate_index = circ.gates.len();
            circ.push(Gate::sq(uc_qubit, &uc_gate));
            for (q, f) in &factor_emits {
                for g in &f.gates {
                    circ.push(Gate::sq(*q, g));
                }
            }
            for &(c, t) in &ladder {
                circ.push(Gate::cnot(c, t));
            }
            suffix = ladder;
        }
    }

    // Spectrum: every eigenphase is (uc phase + Σ factor phases) mod 1 on the
    // 1/8 grid. DP keeps the lexicographically-first label per residue.
    let mut factors_meta: Vec<Factor> = factor_emits
        .iter()
        .map(|(q, f)| Factor {
            qubit: *q,
            eigvec: GateParams::from_mat(&f.eigvec),
            phases_eighths: f.phases_eighths,
        })
        .collect();
    factors_meta.push(Factor {
        qubit: uc_qubit,
        eigvec: GateParams::from_mat(&v_c),
        phases_eighths: [1, 3],
    });
    factors_meta.sort_by_key(|f| f.qubit);

    let mut reps: BTreeMap<u8, Vec<u8>> = BTreeMap::new();
    reps.insert(0, Vec::new());
    for f in &factors_meta {
        let mut next: BTreeMap<u8, Vec<u8>> = BTreeMap::new();
        for (res, bits) in &reps {
            for b in 0..2u8 {
                let nr = (res + f.phases_eighths[b as usize]) % 8;
                let mut nb = bits.clone();
                nb.push(b);
                next.entry(nr).or_insert(nb);
            }
        }
        reps = next;
    }
    let entries: Vec<SpectrumEntry> = reps
        .iter()
        .map(|(res, bits)| {
            // label: highest qubit first
            let label: String = bits
                .iter()
                .rev()
                .map(|b| if *b == 1 { '1' } else { '0' })
                .collect();
            SpectrumEntry {
                numer: *res as u64,
                label,
            }
        })
        .collect();
    let spectrum = Spectrum { p_full: 3, entries };
    spectrum.validate()?;

    let meta = FamilyMeta {
        family,
        n_vector_qubits: n,
        seed,
        uc_qubit,
        uc_gate_index,
        uc_reported: GateParams::from_mat(&uc_reported),
        factors: factors_meta,
        entangler_suffix: suffix,
    };
    circ.tags
        .insert("family".into(), serde_json::json!(family.name()));
    circ.tags.insert("seed".into(), serde_json::json!(seed));
    circ.tags
        .insert("n_vector_qubits".into(), serde_json::json!(n));
    circ.tags
        .insert("generator".into(), serde_json::to_value(&meta).unwrap());
    Ok((circ, spectrum))
}

// ---------------------------------------------------------------------------
// Controlled gates and controlled powers
// ---------------------------------------------------------------------------

/// T gate angle helpers for the Toffoli decomposition.
fn t_gate() -> Mat2 {
    Mat2::p(FRAC_PI_4)
}
fn t_dagger() -> Mat2 {
    Mat2::p(-FRAC_PI_4)
}

/// Controlled version of a Hermitian involution `u = V X V†`:
/// exactly one CNOT conjugated by V on the target.
fn controlled_involution(control: usize, target: usize, u: &Mat2) -> Vec<Gate> {
    let (eigs, w) = mat2_hermitian_eigen(u);
    debug_assert!((eigs[0] + 1.0).abs() < 1e-9 && (eigs[1] - 1.0).abs() < 1e-9);
    // Columns ascending: [v-, v+]. With V = [v+ v-]·H we get V X V† = u,
    // so conjugating CNOT's target by V controls the involution exactly.
    let v = Mat2([w.0[1], w.0[0], w.0[3], w.0[2]]).mul(&Mat2::hadamard());
    vec![
        Gate::sq(target, &v.adjoint()),
        Gate::cnot(control, target),
        Gate::sq(target, &v),
    ]
}

/// Exact controlled version of an arbitrary 2x2 unitary: two CNOTs plus
/// single-qubit corrections (ZYZ split), with the determinant phase kicked
/// onto the control.
pub fn controlled_unitary(control: usize, target: usize, u: &Mat2) -> Vec<Gate> {
    let alpha = u.det().arg() / 2.0;
    let su = u.scale(phase(-alpha));
    // su = Rz(beta) Ry(gamma) Rz(delta)
    let gamma = 2.0 * su.0[2].norm().atan2(su.0[0].norm());
    let (beta, delta) = if su.0[2].norm() < 1e-12 {
        let s = -2.0 * su.0[0].arg();
        (s / 2.0, s / 2.0)
    } else if su.0[0].norm() < 1e-12 {
        let d = 2.0 * su.0[2].arg();
        (d / 2.0, -d / 2.0)
    } else {
        let sum = -2.0 * su.0[0].arg();
        let diff = 2.0 * su.0[2].arg();
        ((sum + diff) / 2.0, (sum - diff) / 2.0)
    };
    let a = Mat2::rz(beta).mul(&Mat2::ry(gamma / 2.0));
    let b = Mat2::ry(-gamma / 2.0).mul(&Mat2::rz(-(delta + beta) / 2.0));
    let c = Mat2::rz((delta - beta) / 2.0);
    let mut gates = Vec::new();
    if c.max_diff(&Mat2::IDENTITY) > 1e-14 {
        gates.push(Gate::sq(target, &c));
    }
    gates.push(Gate::cnot(control, target));
    gates.push(Gate::sq(target, &b));
    gates.push(Gate::cnot(control, target));
    gates.push(Gate::sq(target, &a));
    if alpha.abs() > 1e-14 {
        gates.push(Gate::sq(control, &Mat2::p(alpha)));
    }
    gates
}

/// Standard 6-CNOT Toffoli decomposition.
fn toffoli(c1: usize, c2: usize, t: usize) -> Vec<Gate> {
    let h = Mat2::hadamard();
    vec![
        Gate::sq(t, &h),
        Gate::cnot(c2, t),
        Gate::sq(t, &t_dagger()),
        Gate::cnot(c1, t),
        Gate::sq(t, &t_gate()),
        Gate::cnot(c2, t),
        Gate::sq(t, &t_dagger()),
        Gate::cnot(c1, t),
        Gate::sq(c2, &t_gate()),
        Gate::sq(t, &t_gate()),
        Gate::sq(t, &h),
        Gate::cnot(c1, c2),
        Gate::sq(c1, &t_gate()),
        Gate::sq(c2, &t_dagger()),
        Gate::cnot(c1, c2),
    ]
}

/// Controlled power C-(U^{2^s_exp}) of a generated family circuit.
///
/// `s_exp = 0` controls the whole circuit gate by gate: involutions cost one
/// CNOT each, the correcting gate two, and each CNOT becomes a 6-CNOT
/// Toffoli. `s_exp >= 1` collapses to the two-qubit C-(U_c^{2^s}), touching
/// only the control and the correcting-gate qubit.
pub fn controlled_power(circuit: &Circuit, s_exp: u32, control: usize) -> Result<Circuit> {
    let meta = circuit.family_meta()?;
    if control < circuit.n_qubits {
        return Err(Error::ControlOverlap(control));
    }
    let width = control + 1;
    let mut out = Circuit::new(width);
    out.tags
        .insert("derived".into(), serde_json::json!("controlled_power"));
    out.tags.insert("s_exp".into(), serde_json::json!(s_exp));
    if s_exp == 0 {
        for (i, g) in circuit.gates.iter().enumerate() {
            match g {
                Gate::SQ { target, .. } => {
                    let m = g.matrix().unwrap();
                    if i == meta.uc_gate_index {
                        out.extend(controlled_unitary(control, *target, &m));
                    } else {
                        out.extend(controlled_involution(control, *target, &m));
                    }
                }
                Gate::CNOT {
                    control: a,
                    target: b,
                } => {
                    out.extend(toffoli(control, *a, *b));
                }
            }
        }
    } else {
        let mut w = meta.uc_reported.matrix();
        for _ in 0..s_exp {
            w = w.mul(&w);
        }
        out.extend(controlled_unitary(control, meta.uc_qubit, &w));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;

    fn phases_of(u: &CMat) -> Vec<f64> {
        let (eig, _) = crate::linalg::unitary_eigen(u).unwrap();
        let mut ph: Vec<f64> = eig
            .iter()
            .map(|e| {
                let mut p = e.arg() / (2.0 * PI);
                if p <= 1e-12 {
                    p += 1.0;
                }
                p
            })
            .collect();
        ph.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ph.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        ph
    }

    /// Literal Kronecker-product check of the matrix builder at small n.
    #[test]
    fn unitary_of_matches_literal_kron() {
        let mut rng = sub_rng(11, 0);
        for _ in 0..5 {
            let g0 = haar_su2(&mut rng);
            let g1 = haar_su2(&mut rng);
            let mut c = Circuit::new(3);
            c.push(Gate::sq(0, &g0));
            c.push(Gate::cnot(0, 2));
            c.push(Gate::sq(1, &g1));
            let u = unitary_of(&c).unwrap();
            // by hand: U = (I ⊗ g1 ⊗ I) * CNOT(0,2) * (I ⊗ I ⊗ g0)
            let i2 = CMat::identity(2);
            let m0 = i2.kron(&i2).kron(&CMat::from_mat2(&g0));
            let m1 = i2.kron(&CMat::from_mat2(&g1)).kron(&i2);
            let mut cx = CMat::zeros(8);
            for i in 0..8 {
                let j = if i & 1 != 0 { i ^ 4 } else { i };
                cx.set(j, i, c64(1.0, 0.0));
            }
            let want = m1.mul(&cx).mul(&m0);
            assert!(u.max_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn unitary_of_empty_is_identity() {
        let c = Circuit::new(2);
        assert!(unitary_of(&c).unwrap().max_diff(&CMat::identity(4)) < 1e-15);
    }

    #[test]
    fn unitary_of_single_cnot() {
        let mut c = Circuit::new(2);
        c.push(Gate::cnot(0, 1));
        let u = unitary_of(&c).unwrap();
        // control = qubit 0 (LSB): |01> -> |11>, |11> -> |01>
        let mut want = CMat::zeros(4);
        want.set(0, 0, c64(1.0, 0.0));
        want.set(3, 1, c64(1.0, 0.0));
        want.set(2, 2, c64(1.0, 0.0));
        want.set(1, 3, c64(1.0, 0.0));
        assert!(u.max_diff(&want) < 1e-15);
    }

    #[test]
    fn unitary_of_width_guard() {
        let c = Circuit::new(UNITARY_OF_MAX_QUBITS + 1);
        assert!(matches!(
            unitary_of(&c),
            Err(Error::WidthExceeded { .. })
        ));
    }

    #[test]
    fn tp1_n1_is_uc_alone_with_expected_spectrum() {
        let (c, s) = gen_family(Family::Tp1, 1, 42).unwrap();
        assert_eq!(c.gates.len(), 1);
        assert_eq!(c.sq_count(), 1);
        let numers: Vec<u64> = s.entries.iter().map(|e| e.numer).collect();
        assert_eq!(numers, vec![1, 3]);
        assert_eq!(s.p_full, 3);
        // verify by eigendecomposition
        let u = unitary_of(&c).unwrap();
        let ph = phases_of(&u);
        assert!((ph[0] - 0.125).abs() < 1e-10 && (ph[1] - 0.375).abs() < 1e-10);
    }

    #[test]
    fn tp1_is_exact_kron_of_factors() {
        for seed in [0u64, 7, 99] {
            let (c, _) = gen_family(Family::Tp1, 3, seed).unwrap();
            assert_eq!(c.sq_count(), 3);
            assert_eq!(c.cnot_count(), 0);
            let u = unitary_of(&c).unwrap();
            // kron oracle: highest qubit leftmost
            let mats: Vec<Mat2> = c.gates.iter().map(|g| g.matrix().unwrap()).collect();
            let per_qubit: Vec<&Mat2> = (0..3)
                .map(|q| {
                    c.gates
                        .iter()
                        .position(|g| g.qubits() == vec![q])
                        .map(|i| &mats[i])
                        .unwrap()
                })
                .collect();
            let want = CMat::from_mat2(per_qubit[2])
                .kron(&CMat::from_mat2(per_qubit[1]))
                .kron(&CMat::from_mat2(per_qubit[0]));
            assert!(u.max_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn sq_gate_counts_per_family() {
        for n in 2..=6 {
            let (c1, _) = gen_family(Family::Tp1, n, 5).unwrap();
            assert_eq!(c1.sq_count(), n, "tp1 n={n}");
            let (c2, _) = gen_family(Family::Tp2, n, 5).unwrap();
            assert_eq!(c2.sq_count(), 2 * n - 1, "tp2 n={n}");
            let (c3, _) = gen_family(Family::Ntp, n, 5).unwrap();
            assert_eq!(c3.sq_count(), 2 * n - 2, "ntp n={n}");
        }
    }

    #[test]
    fn families_too_small() {
        assert!(gen_family(Family::Tp2, 1, 0).is_err());
        assert!(gen_family(Family::Ntp, 1, 0).is_err());
    }

    #[test]
    fn spectrum_exactness_all_families() {
        for family in [Family::Tp1, Family::Tp2, Family::Ntp] {
            for n in family.min_vector_qubits()..=5 {
                for seed in [1u64, 2] {
                    let (c, s) = gen_family(family, n, seed).unwrap();
                    let u = unitary_of(&c).unwrap();
                    let got = phases_of(&u);
                    let want: Vec<f64> = s.phases();
                    assert_eq!(got.len(), want.len(), "{family:?} n={n}");
                    for (g, w) in got.iter().zip(want.iter()) {
                        assert!(
                            (g - w).abs() < 1e-10,
                            "{family:?} n={n} seed={seed}: {got:?} vs {want:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn power_collapse_all_families() {
        for family in [Family::Tp1, Family::Tp2, Family::Ntp] {
            for n in family.min_vector_qubits()..=5 {
                let (c, _) = gen_family(family, n, 3).unwrap();
                let meta = c.family_meta().unwrap();
                let u = unitary_of(&c).unwrap();
                let u2 = u.mul(&u);
                let uc2 = {
                    let m = meta.uc_reported.matrix();
                    m.mul(&m)
                };
                let want = CMat::from_mat2(&uc2).kron(&CMat::identity(1 << (n - 1)));
                assert!(
                    u2.max_diff(&want) < 1e-10,
                    "{family:?} n={n}: collapse failed"
                );
            }
        }
    }

    #[test]
    fn deterministic_generation() {
        for family in [Family::Tp1, Family::Tp2, Family::Ntp] {
            let (a, sa) = gen_family(family, 4, 123).unwrap();
            let (b, sb) = gen_family(family, 4, 123).unwrap();
            assert_eq!(a, b);
            assert_eq!(sa, sb);
            let (c, _) = gen_family(family, 4, 124).unwrap();
            assert_ne!(a.gates, c.gates);
        }
    }

    /// Operator Schmidt rank across the (low half | high half) cut via the
    /// realigned Gram matrix.
    fn operator_schmidt_rank(u: &CMat, low_qubits: usize) -> usize {
        let n = (u.dim as f64).log2() as usize;
        let high = n - low_qubits;
        let (dl, dh) = (1usize << low_qubits, 1usize << high);
        // realign: R[(hi_pair),(lo_pair)] = U[(h i_l),(h' j_l)]
        let mut r = vec![ZERO; dh * dh * dl * dl];
        for hi in 0..dh {
            for hj in 0..dh {
                for li in 0..dl {
                    for lj in 0..dl {
                        let row = hi * dh + hj;
                        let col = li * dl + lj;
                        r[row * dl * dl + col] = u.at(hi * dl + li, hj * dl + lj);
                    }
                }
            }
        }
        // Gram matrix on the smaller side
        let rows = dh * dh;
        let cols = dl * dl;
        let g_dim = cols.min(rows);
        let mut g = CMat::zeros(g_dim);
        if cols <= rows {
            for a in 0..cols {
                for b in 0..cols {
                    let mut acc = ZERO;
                    for k in 0..rows {
                        acc += r[k * cols + a].conj() * r[k * cols + b];
                    }
                    g.set(a, b, acc);
                }
            }
        } else {
            for a in 0..rows {
                for b in 0..rows {
                    let mut acc = ZERO;
                    for k in 0..cols {
                        acc += r[a * cols + k] * r[b * cols + k].conj();
                    }
                    g.set(a, b, acc);
                }
            }
        }
        let (eigs, _) = crate::linalg::hermitian_eigen(&g).unwrap();
        eigs.iter().filter(|&&e| e > 1e-9).count()
    }

    #[test]
    fn ntp_n2_is_entangling() {
        for seed in 0..5u64 {
            let (c, _) = gen_family(Family::Ntp, 2, seed).unwrap();
            assert!(c.cnot_count() >= 1);
            let u = unitary_of(&c).unwrap();
            assert!(
                operator_schmidt_rank(&u, 1) > 1,
                "ntp n=2 seed={seed} is a product"
            );
        }
    }

    #[test]
    fn ntp_entangles_every_qubit() {
        // rank > 1 across every (single qubit | rest) cut after moving the
        // probed qubit to the bottom by relabeling
        for n in [3usize, 4] {
            let (c, _) = gen_family(Family::Ntp, n, 9).unwrap();
            let u = unitary_of(&c).unwrap();
            for q in 0..n {
                // permute qubit q to position 0
                let dim = 1 << n;
                let perm = |i: usize| -> usize {
                    let bit_q = (i >> q) & 1;
                    let bit_0 = i & 1;
                    (i & !(1 | (1 << q))) | (bit_q) | (bit_0 << q)
                };
                let mut pu = CMat::zeros(dim);
                for i in 0..dim {
                    for j in 0..dim {
                        pu.set(perm(i), perm(j), u.at(i, j));
                    }
                }
                assert!(
                    operator_schmidt_rank(&pu, 1) > 1,
                    "ntp n={n} qubit {q} unentangled"
                );
            }
        }
    }

    #[test]
    fn tp2_blocks_entangle_pairs() {
        // n=5: qubits (0,1) and (2,3) are clusters, qubit 4 carries U_c.
        let (c, _) = gen_family(Family::Tp2, 5, 21).unwrap();
        let u = unitary_of(&c).unwrap();
        // cut between qubit 1 and 2 separates whole clusters: product across it
        assert_eq!(operator_schmidt_rank(&u, 2), 1);
        // cut inside cluster (0,1): entangled
        assert!(operator_schmidt_rank(&u, 1) > 1);
    }

    #[test]
    fn controlled_power_block_structure() {
        // unitary_of(controlled_power(C,0)) == block-diag(I, unitary_of(C))
        // with the control as the highest qubit.
        for family in [Family::Tp1, Family::Tp2, Family::Ntp] {
            let n = family.min_vector_qubits().max(2);
            let (c, _) = gen_family(family, n, 17).unwrap();
            let u = unitary_of(&c).unwrap();
            let cp = controlled_power(&c, 0, n).unwrap();
            let ucp = unitary_of(&cp).unwrap();
            let dim = u.dim;
            let mut want = CMat::identity(2 * dim);
            for i in 0..dim {
                for j in 0..dim {
                    want.set(dim + i, dim + j, u.at(i, j));
                }
            }
            for i in 0..dim {
                want.set(dim + i, dim + i, u.at(i, i));
            }
            assert!(
                ucp.max_diff(&want) < 1e-10,
                "{family:?}: controlled circuit is not block-diag"
            );
        }
    }

    #[test]
    fn controlled_power_collapsed_touches_two_qubits() {
        for family in [Family::Tp1, Family::Tp2, Family::Ntp] {
            let n = 4;
            let (c, _) = gen_family(family, n, 8).unwrap();
            let meta = c.family_meta().unwrap();
            for s_exp in 1..=2u32 {
                let cp = controlled_power(&c, s_exp, n).unwrap();
                let mut touched: Vec<usize> = cp.gates.iter().flat_map(|g| g.qubits()).collect();
                touched.sort_unstable();
                touched.dedup();
                assert!(
                    touched
                        .iter()
                        .all(|&q| q == n || q == meta.uc_qubit),
                    "{family:?} s={s_exp}: collapsed circuit touches {touched:?}"
                );
                // and it equals block-diag(I, U^{2^s})
                let u = unitary_of(&c).unwrap();
                let mut upow = u.clone();
                for _ in 0..s_exp {
                    upow = upow.mul(&upow);
                }
                let ucp = unitary_of(&cp).unwrap();
                let dim = u.dim;
                let mut want = CMat::identity(2 * dim);
                for i in 0..dim {
                    for j in 0..dim {
                        want.set(dim + i, dim + j, upow.at(i, j));
                    }
                }
                assert!(ucp.max_diff(&want) < 1e-9, "{family:?} s={s_exp}");
            }
        }
    }

    #[test]
    fn controlled_power_cnot_accounting_tp1() {
        // n-1 involutions cost one CNOT each; the correcting gate costs two.
        for n in [1usize, 3, 5] {
            let (c, _) = gen_family(Family::Tp1, n, 2).unwrap();
            let cp = controlled_power(&c, 0, n).unwrap();
            assert_eq!(cp.cnot_count(), n + 1, "tp1 n={n}");
        }
    }

    #[test]
    fn controlled_power_control_overlap_is_error() {
        let (c, _) = gen_family(Family::Tp1, 2, 0).unwrap();
        assert!(matches!(
            controlled_power(&c, 0, 1),
            Err(Error::ControlOverlap(1))
        ));
    }

    #[test]
    fn controlled_power_requires_meta() {
        let mut c = Circuit::new(1);
        c.push(Gate::sq(0, &Mat2::hadamard()));
        assert!(matches!(
            controlled_power(&c, 0, 1),
            Err(Error::MissingFamilyMeta(_))
        ));
    }

    #[test]
    fn controlled_unitary_matches_block_diag() {
        let mut rng = sub_rng(31, 9);
        for _ in 0..20 {
            let u = haar_su2(&mut rng).mul(&Mat2::p(rng.gen::<f64>() * 2.0 * PI));
            let mut c = Circuit::new(2);
            c.extend(controlled_unitary(1, 0, &u));
            let got = unitary_of(&c).unwrap();
            let mut want = CMat::identity(4);
            want.set(2, 2, u.0[0]);
            want.set(2, 3, u.0[1]);
            want.set(3, 2, u.0[2]);
            want.set(3, 3, u.0[3]);
            assert!(got.max_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn toffoli_is_ccx() {
        let mut c = Circuit::new(3);
        c.extend(toffoli(2, 1, 0));
        let got = unitary_of(&c).unwrap();
        let mut want = CMat::zeros(8);
        for i in 0..8usize {
            let j = if i & 0b110 == 0b110 { i ^ 1 } else { i };
            want.set(j, i, c64(1.0, 0.0));
        }
        assert!(got.max_diff(&want) < 1e-12);
    }

    #[test]
    fn circuit_json_stable_golden() {
        let mut c = Circuit::new(2);
        c.push(Gate::cnot(0, 1));
        c.tags.insert("family".into(), serde_json::json!("tp1"));
        let txt = serde_json::to_string(&c).unwrap();
        assert_eq!(
            txt,
            r#"{"n_qubits":2,"gates":[{"kind":"cnot","targets":[0,1]}],"tags":{"family":"tp1"}}"#
        );
    }

    #[test]
    fn circuit_json_round_trip() {
        let (c, _) = gen_family(Family::Ntp, 3, 77).unwrap();
        let txt = serde_json::to_string(&c).unwrap();
        let back: Circuit = serde_json::from_str(&txt).unwrap();
        assert_eq!(c, back);
        // meta survives the round trip
        let m = back.family_meta().unwrap();
        assert_eq!(m.family, Family::Ntp);
    }

    #[test]
    fn depth_of_nonempty_circuit() {
        let (c, _) = gen_family(Family::Tp2, 4, 0).unwrap();
        assert!(c.depth() >= 1);
        let mut layered = Circuit::new(2);
        layered.push(Gate::sq(0, &Mat2::hadamard()));
        layered.push(Gate::sq(1, &Mat2::hadamard()));
        layered.push(Gate::cnot(0, 1));
        assert_eq!(layered.depth(), 2);
    }

    #[test]
    fn inverse_circuit_composes_to_identity() {
        let (c, _) = gen_family(Family::Tp1, 3, 4).unwrap();
        let mut inv = Circuit::new(3);
        for g in c.gates.iter().rev() {
            match g {
                Gate::SQ { target, .. } => {
                    inv.push(Gate::sq(*target, &g.matrix().unwrap().adjoint()))
                }
                Gate::CNOT { control, target } => inv.push(Gate::cnot(*control, *target)),
            }
        }
        let mut both = c.clone();
        both.extend(inv.gates);
        let u = unitary_of(&both).unwrap();
        assert!(u.max_diff(&CMat::identity(8)) < 1e-10);
    }
}
