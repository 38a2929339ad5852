//! Small dense complex linear algebra used across the crate.
//!
//! Everything here is sized for desk-scale work (matrices up to a few
//! thousand rows). The eigensolver is a cyclic Jacobi iteration for complex
//! Hermitian matrices; unitary matrices are diagonalized through a random
//! Hermitian pencil sharing their eigenvectors.

use crate::error::{Error, Result};
use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = Complex64::new(0.0, 0.0);
pub const ONE: C64 = Complex64::new(1.0, 0.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

/// e^{i angle}
#[inline]
pub fn phase(angle: f64) -> C64 {
    Complex64::from_polar(1.0, angle)
}

// ---------------------------------------------------------------------------
// 2x2 complex matrices
// ---------------------------------------------------------------------------

/// Row-major 2x2 complex matrix `[a b; c d]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [C64; 4]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([ONE, ZERO, ZERO, ONE]);

    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([a, b, c, d])
    }

    pub fn x() -> Self {
        Mat2([ZERO, ONE, ONE, ZERO])
    }

    pub fn y() -> Self {
        Mat2([ZERO, c64(0.0, -1.0), c64(0.0, 1.0), ZERO])
    }

    pub fn z() -> Self {
        Mat2([ONE, ZERO, ZERO, -ONE])
    }

    pub fn hadamard() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Mat2([c64(s, 0.0), c64(s, 0.0), c64(s, 0.0), c64(-s, 0.0)])
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Mat2([a, ZERO, ZERO, d])
    }

    /// Phase gate diag(1, e^{i angle}).
    pub fn p(angle: f64) -> Self {
        Mat2::diag(ONE, phase(angle))
    }

    pub fn ry(angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        Mat2([c64(c, 0.0), c64(-s, 0.0), c64(s, 0.0), c64(c, 0.0)])
    }

    pub fn rz(angle: f64) -> Self {
        Mat2::diag(phase(-angle / 2.0), phase(angle / 2.0))
    }

    /// n̂·σ for a unit Bloch vector: a traceless Hermitian involution.
    pub fn axis_reflection(n: [f64; 3]) -> Self {
        Mat2([
            c64(n[2], 0.0),
            c64(n[0], -n[1]),
            c64(n[0], n[1]),
            c64(-n[2], 0.0),
        ])
    }

    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }

    pub fn adjoint(&self) -> Mat2 {
        let a = &self.0;
        Mat2([a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()])
    }

    pub fn scale(&self, k: C64) -> Mat2 {
        Mat2([self.0[0] * k, self.0[1] * k, self.0[2] * k, self.0[3] * k])
    }

    pub fn det(&self) -> C64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    pub fn max_diff(&self, rhs: &Mat2) -> f64 {
        self.0
            .iter()
            .zip(rhs.0.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    pub fn unitarity_deviation(&self) -> f64 {
        self.adjoint().mul(self).max_diff(&Mat2::IDENTITY)
    }

    /// Columns of the matrix as 2-vectors.
    pub fn col(&self, j: usize) -> [C64; 2] {
        [self.0[j], self.0[2 + j]]
    }
}

/// Recover U3-style angles `(theta, phi, lambda, global)` from a 2x2 unitary:
/// `U = e^{i global} [cos(t/2), -e^{i l} sin(t/2); e^{i p} sin(t/2), e^{i(p+l)} cos(t/2)]`.
pub fn u3_angles(m: &Mat2) -> (f64, f64, f64, f64) {
    let a = m.0[0];
    let c = m.0[2];
    let theta = 2.0 * c.norm().atan2(a.norm());
    let eps = 1e-12;
    if c.norm() < eps {
        // diagonal
        let global = a.arg();
        let lam = (m.0[3] * phase(-global)).arg();
        (0.0, 0.0, lam, global)
    } else if a.norm() < eps {
        // anti-diagonal
        let global = (-m.0[1]).arg();
        let phi = (c * phase(-global)).arg();
        (std::f64::consts::PI, phi, 0.0, global)
    } else {
        let global = a.arg();
        let phi = (c * phase(-global)).arg();
        let lam = (-m.0[1] * phase(-global)).arg();
        (theta, phi, lam, global)
    }
}

/// Rebuild the 2x2 unitary from U3-style angles.
pub fn u3_matrix(theta: f64, phi: f64, lam: f64, global: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    let g = phase(global);
    Mat2([
        g * c,
        -g * phase(lam) * s,
        g * phase(phi) * s,
        g * phase(phi + lam) * c,
    ])
}

/// Eigendecomposition of a 2x2 Hermitian matrix.
/// Returns (eigenvalues ascending, matrix whose columns are the eigenvectors).
pub fn mat2_hermitian_eigen(m: &Mat2) -> ([f64; 2], Mat2) {
    let a = m.0[0].re;
    let d = m.0[3].re;
    let b = m.0[1];
    let tr = a + d;
    let gap = ((a - d) * (a - d) + 4.0 * b.norm_sqr()).sqrt();
    let lo = (tr - gap) / 2.0;
    let hi = (tr + gap) / 2.0;
    if b.norm() < 1e-14 {
        if a <= d {
            return ([a, d], Mat2::IDENTITY);
        }
        return ([d, a], Mat2([ZERO, ONE, ONE, ZERO]));
    }
    // Eigenvector for eigenvalue mu: (b, mu - a), normalized.
    let mk = |mu: f64| -> [C64; 2] {
        let v = [b, c64(mu - a, 0.0)];
        let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        [v[0] / n, v[1] / n]
    };
    let v0 = mk(lo);
    let v1 = mk(hi);
    ([lo, hi], Mat2([v0[0], v1[0], v0[1], v1[1]]))
}

// ---------------------------------------------------------------------------
// Dense complex matrices
// ---------------------------------------------------------------------------

/// Dense row-major square complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    pub dim: usize,
    pub data: Vec<C64>,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        CMat {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CMat::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn from_mat2(m: &Mat2) -> Self {
        CMat {
            dim: 2,
            data: m.0.to_vec(),
        }
    }

    pub fn mul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.at(i, k);
                if aik == ZERO {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, r) in orow.iter_mut().zip(row.iter()) {
                    *o += aik * r;
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMat {
        let n = self.dim;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(j, i, self.at(i, j).conj());
            }
        }
        out
    }

    pub fn kron(&self, rhs: &CMat) -> CMat {
        let (a, b) = (self.dim, rhs.dim);
        let mut out = CMat::zeros(a * b);
        for i in 0..a {
            for j in 0..a {
                let v = self.at(i, j);
                if v == ZERO {
                    continue;
                }
                for k in 0..b {
                    for l in 0..b {
                        out.set(i * b + k, j * b + l, v * rhs.at(k, l));
                    }
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.dim, v.len());
        let n = self.dim;
        let mut out = vec![ZERO; n];
        for i in 0..n {
            let mut acc = ZERO;
            let row = &self.data[i * n..(i + 1) * n];
            for (m, x) in row.iter().zip(v.iter()) {
                acc += m * x;
            }
            out[i] = acc;
        }
        out
    }

    pub fn max_diff(&self, rhs: &CMat) -> f64 {
        self.data
            .iter()
            .zip(rhs.data.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    pub fn unitarity_deviation(&self) -> f64 {
        self.adjoint().mul(self).max_diff(&CMat::identity(self.dim))
    }

    /// Largest |entry| off the diagonal.
    pub fn max_offdiag(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j {
                    m = m.max(self.at(i, j).norm());
                }
            }
        }
        m
    }
}

// ---------------------------------------------------------------------------
// Eigensolvers
// ---------------------------------------------------------------------------

/// Cyclic Jacobi eigendecomposition of a complex Hermitian matrix.
///
/// Returns `(eigenvalues, V)` with `V` unitary and `V† A V = diag(eigenvalues)`
/// (columns of `V` are eigenvectors). Eigenvalues come out unsorted.
pub fn hermitian_eigen(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = a.dim;
    let mut m = a.clone();
    let mut v = CMat::identity(n);
    if n == 1 {
        return Ok((vec![m.at(0, 0).re], v));
    }
    let scale: f64 = m
        .data
        .iter()
        .map(|x| x.norm_sqr())
        .sum::<f64>()
        .sqrt()
        .max(1e-300);
    let tol = 1e-14 * scale;
    let max_sweeps = 120;
    for _sweep in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.at(p, q).norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            let eig = (0..n).map(|i| m.at(i, i).re).collect();
            return Ok((eig, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.at(p, q);
                let r = apq.norm();
                if r <= tol * 1e-2 / (n as f64) {
                    continue;
                }
                let app = m.at(p, p).re;
                let aqq = m.at(q, q).re;
                let phi = apq.arg();
                // Rotate so the (p,q) block becomes real, then annihilate it.
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // R = P*G with P = diag(1, e^{-i phi}) on (p,q) and
                // G = [[c, s], [-s, c]] chosen so G^T (P† A P) G kills the pivot.
                let rpp = c64(c, 0.0);
                let rpq = c64(s, 0.0);
                let rqp = phase(-phi) * (-s);
                let rqq = phase(-phi) * c;
                // A <- R† A R ; columns first.
                for i in 0..n {
                    let aip = m.at(i, p);
                    let aiq = m.at(i, q);
                    m.set(i, p, aip * rpp + aiq * rqp);
                    m.set(i, q, aip * rpq + aiq * rqq);
                }
                for j in 0..n {
                    let apj = m.at(p, j);
                    let aqj = m.at(q, j);
                    m.set(p, j, rpp.conj() * apj + rqp.conj() * aqj);
                    m.set(q, j, rpq.conj() * apj + rqq.conj() * aqj);
                }
                // Clean up accumulated asymmetry on the pivot pair.
                let mean = (m.at(p, q) + m.at(q, p).conj()) * 0.5;
                m.set(p, q, mean);
                m.set(q, p, mean.conj());
                for i in 0..n {
                    let vip = v.at(i, p);
                    let viq = v.at(i, q);
                    v.set(i, p, vip * rpp + viq * rqp);
                    v.set(i, q, vip * rpq + viq * rqq);
                }
            }
        }
    }
    Err(Error::EigenNoConvergence(max_sweeps))
}

/// Eigendecomposition of a unitary matrix.
///
/// Diagonalizes the Hermitian pencil `cos(t)(U+U†)/2 + sin(t)(U-U†)/(2i)`,
/// which shares eigenvectors with `U` for generic `t`, then reads the unitary
/// eigenvalues off `V† U V`. Retries with a different pencil angle if the
/// first choice fails to split a degeneracy.
///
/// Returns `(eigenvalues on the unit circle, V)` with columns of `V` the
/// eigenvectors.
pub fn unitary_eigen(u: &CMat) -> Result<(Vec<C64>, CMat)> {
    let dev = u.unitarity_deviation();
    if dev > 1e-8 {
        return Err(Error::NotUnitary { dev });
    }
    let n = u.dim;
    let uh = u.adjoint();
    let mut herm_cos = CMat::zeros(n);
    let mut herm_sin = CMat::zeros(n);
    for i in 0..n * n {
        herm_cos.data[i] = (u.data[i] + uh.data[i]) * 0.5;
        herm_sin.data[i] = (u.data[i] - uh.data[i]) * c64(0.0, -0.5);
    }
    // Irrational-ish mixing angles so distinct unit-circle eigenvalues map to
    // distinct real pencil eigenvalues.
    for &t in &[0.578_223_4f64, 1.234_567_9, 2.718_281_8, 0.111_111_1] {
        let (ct, st) = (t.cos(), t.sin());
        let mut pencil = CMat::zeros(n);
        for i in 0..n * n {
            pencil.data[i] = herm_cos.data[i] * ct + herm_sin.data[i] * st;
        }
        let (_, v) = hermitian_eigen(&pencil)?;
        let d = v.adjoint().mul(u).mul(&v);
        if d.max_offdiag() < 1e-9 {
            let eig = (0..n).map(|i| d.at(i, i)).collect();
            return Ok((eig, v));
        }
    }
    Err(Error::EigenNoConvergence(0))
}
