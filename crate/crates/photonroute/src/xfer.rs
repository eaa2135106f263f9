//! Complex transfer-matrix arithmetic for directional couplers, phase
//! shifters, single MZIs and their composition.
//!
//! Beamsplitter convention: a coupler with power cross-coupling ratio `r`
//! has real bar amplitude `t = sqrt(1 - r)` and imaginary cross amplitude
//! `i * k` with `k = sqrt(r)`:
//!
//! ```text
//! C(r) = [ t    i*k ]
//!        [ i*k  t   ]
//! ```
//!
//! An MZI is `C(r2) * diag(e^{i phi}, 1) * C(r1)`, which puts the bar state
//! (all power staying on its input side) at `phi = pi` and the cross state
//! at `phi = 0`. The external phase shifter only contributes an output
//! phase and never changes port powers; it is carried separately by the
//! mesh module.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{lit, wrap_angle, Real};

/// Directional coupler described by its power cross-coupling ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplerSpec<T: Real> {
    r: T,
}

impl<T: Real> CouplerSpec<T> {
    /// `r` must lie strictly inside (0, 1); `r = 0.5` is the ideal 50/50 coupler.
    pub fn new(r: T) -> Result<Self> {
        if !(r > T::zero() && r < T::one()) || !r.is_finite() {
            return Err(Error::Domain(format!(
                "coupler ratio r must lie in (0, 1), got {r}"
            )));
        }
        Ok(Self { r })
    }

    pub fn ideal() -> Self {
        Self { r: lit(0.5) }
    }

    pub fn r(&self) -> T {
        self.r
    }

    /// Bar amplitude t = sqrt(1 - r).
    pub fn t(&self) -> T {
        (T::one() - self.r).sqrt()
    }

    /// Cross amplitude magnitude k = sqrt(r).
    pub fn k(&self) -> T {
        self.r.sqrt()
    }

    /// The observationally equivalent coupler with t and k exchanged.
    pub fn flipped(&self) -> Self {
        Self { r: T::one() - self.r }
    }
}

/// Internal MZI phase, stored reduced to [0, 2*pi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSetting<T: Real> {
    phi: T,
}

impl<T: Real> PhaseSetting<T> {
    pub fn new(phi: T) -> Self {
        Self { phi: wrap_angle(phi) }
    }

    pub fn phi(&self) -> T {
        self.phi
    }
}

/// Dense N x N complex amplitude matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix<T: Real> {
    dim: usize,
    entries: Vec<Complex<T>>,
}

impl<T: Real> TransferMatrix<T> {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![Complex::new(T::zero(), T::zero()); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex::new(T::one(), T::zero());
        }
        Self { dim, entries }
    }

    pub fn from_entries(dim: usize, entries: Vec<Complex<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("matrix dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::Domain(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.entries[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: Complex<T>) {
        self.entries[row * self.dim + col] = v;
    }

    pub fn entries(&self) -> &[Complex<T>] {
        &self.entries
    }

    /// Matrix product self * rhs.
    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix product");
        let n = self.dim;
        let mut out = vec![Complex::new(T::zero(), T::zero()); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a.norm_sqr() == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] = out[i * n + j] + a * rhs.entries[k * n + j];
                }
            }
        }
        Self { dim: n, entries: out }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = vec![Complex::new(T::zero(), T::zero()); n * n];
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = self.entries[i * n + j].conj();
            }
        }
        Self { dim: n, entries: out }
    }

    /// Scale every entry by a complex factor.
    pub fn scale(&self, factor: Complex<T>) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|e| *e * factor).collect(),
        }
    }

    /// Max-norm of U'U - I.
    pub fn unitarity_deviation(&self) -> T {
        let prod = self.adjoint().mul(self);
        let n = self.dim;
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { T::one() } else { T::zero() };
                let d = (prod.entries[i * n + j] - Complex::new(expect, T::zero())).norm();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Frobenius norm of self - rhs.
    pub fn frobenius_distance(&self, rhs: &Self) -> T {
        assert_eq!(self.dim, rhs.dim);
        self.entries
            .iter()
            .zip(rhs.entries.iter())
            .map(|(a, b)| (*a - *b).norm_sqr())
            .sum::<T>()
            .sqrt()
    }

    /// Largest singular value, by power iteration on U'U.
    ///
    /// Deterministic start vector; enough for the small dense matrices used
    /// here. Used to check the "no gain" invariant of lossy networks.
    pub fn spectral_norm(&self) -> T {
        let n = self.dim;
        let gram = self.adjoint().mul(self);
        // Start from an all-ones vector perturbed per index so it is never
        // orthogonal to the dominant eigenvector in practice.
        let mut v: Vec<Complex<T>> = (0..n)
            .map(|i| Complex::new(T::one() + lit::<T>(1e-3) * lit::<T>(i as f64), lit(1e-4)))
            .collect();
        let mut lambda = T::zero();
        for _ in 0..200 {
            let mut w = vec![Complex::new(T::zero(), T::zero()); n];
            for i in 0..n {
                for j in 0..n {
                    w[i] = w[i] + gram.entries[i * n + j] * v[j];
                }
            }
            let norm = w.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt();
            if norm == T::zero() {
                return T::zero();
            }
            for c in w.iter_mut() {
                *c = *c / norm;
            }
            let prev = lambda;
            lambda = norm;
            v = w;
            if (lambda - prev).abs() <= lit::<T>(1e-16) * lambda.max(T::one()) {
                break;
            }
        }
        lambda.sqrt()
    }
}

/// 2x2 coupler matrix [[t, i k], [i k, t]].
pub fn coupler_matrix<T: Real>(c: &CouplerSpec<T>) -> TransferMatrix<T> {
    let t = Complex::new(c.t(), T::zero());
    let ik = Complex::new(T::zero(), c.k());
    TransferMatrix {
        dim: 2,
        entries: vec![t, ik, ik, t],
    }
}

/// 2x2 diagonal phase matrix diag(e^{i phi}, 1) (phase on the top arm).
pub fn internal_phase_matrix<T: Real>(phi: T) -> TransferMatrix<T> {
    TransferMatrix {
        dim: 2,
        entries: vec![
            Complex::from_polar(T::one(), phi),
            Complex::new(T::zero(), T::zero()),
            Complex::new(T::zero(), T::zero()),
            Complex::new(T::one(), T::zero()),
        ],
    }
}

/// Full MZI: C(r2) * diag(e^{i phi}, 1) * C(r1).
pub fn mzi_matrix<T: Real>(
    c1: &CouplerSpec<T>,
    c2: &CouplerSpec<T>,
    phi: PhaseSetting<T>,
) -> TransferMatrix<T> {
    coupler_matrix(c2)
        .mul(&internal_phase_matrix(phi.phi()))
        .mul(&coupler_matrix(c1))
}

/// Scale a transfer matrix by sqrt(L) so output powers are scaled by exactly L.
pub fn apply_loss<T: Real>(u: &TransferMatrix<T>, loss: T) -> Result<TransferMatrix<T>> {
    if !(loss > T::zero() && loss <= T::one()) || !loss.is_finite() {
        return Err(Error::Domain(format!(
            "transmission L must lie in (0, 1], got {loss}"
        )));
    }
    Ok(u.scale(Complex::new(loss.sqrt(), T::zero())))
}

/// Output powers |U[j, input]|^2 for a unit-amplitude input on one port.
pub fn port_powers<T: Real>(u: &TransferMatrix<T>, input_port: usize) -> Result<Vec<T>> {
    if input_port >= u.dim() {
        return Err(Error::Domain(format!(
            "input port {input_port} out of range for a {}-mode network",
            u.dim()
        )));
    }
    Ok((0..u.dim()).map(|j| u.get(j, input_port).norm_sqr()).collect())
}

/// Closed-form port-1 power of a lossless MZI:
/// P1(phi) = (t1 t2)^2 + (k1 k2)^2 - 2 t1 t2 k1 k2 cos(phi).
pub fn p1_of_phi<T: Real>(c1: &CouplerSpec<T>, c2: &CouplerSpec<T>, phi: T) -> T {
    let x = c1.t() * c2.t();
    let y = c1.k() * c2.k();
    x * x + y * y - lit::<T>(2.0) * x * y * phi.cos()
}

/// Closed-form port-2 power: P2(phi) = (t1 k2)^2 + (k1 t2)^2 + 2 t1 k2 k1 t2 cos(phi).
pub fn p2_of_phi<T: Real>(c1: &CouplerSpec<T>, c2: &CouplerSpec<T>, phi: T) -> T {
    let u = c1.t() * c2.k();
    let v = c1.k() * c2.t();
    u * u + v * v + lit::<T>(2.0) * u * v * phi.cos()
}

/// The calibrated device: two couplers, the current-to-phase map and the
/// flat insertion loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitModel<T: Real> {
    pub c1: CouplerSpec<T>,
    pub c2: CouplerSpec<T>,
    pub calib: crate::calib::PhaseCalibration<T>,
    loss: T,
}

impl<T: Real> CircuitModel<T> {
    pub fn new(
        c1: CouplerSpec<T>,
        c2: CouplerSpec<T>,
        calib: crate::calib::PhaseCalibration<T>,
        loss: T,
    ) -> Result<Self> {
        if !(loss > T::zero() && loss <= T::one()) || !loss.is_finite() {
            return Err(Error::Domain(format!(
                "total transmission must lie in (0, 1], got {loss}"
            )));
        }
        Ok(Self { c1, c2, calib, loss })
    }

    pub fn loss(&self) -> T {
        self.loss
    }

    /// Lossless port powers at an internal phase; P1 + P2 = 1.
    pub fn port_powers_at_phase(&self, phi: T) -> (T, T) {
        (p1_of_phi(&self.c1, &self.c2, phi), p2_of_phi(&self.c1, &self.c2, phi))
    }

    /// Absolute transmissions at a heater current: loss * (P1, P2).
    pub fn transmissions_at_current(&self, current_ma: T) -> Result<(T, T)> {
        let phi = self.calib.phase_at(current_ma)?;
        let (p1, p2) = self.port_powers_at_phase(phi);
        Ok((self.loss * p1, self.loss * p2))
    }

    /// Lossless port fractions P_i / (P1 + P2) at a heater current.
    pub fn fractions_at_current(&self, current_ma: T) -> Result<(T, T)> {
        let phi = self.calib.phase_at(current_ma)?;
        let (p1, p2) = self.port_powers_at_phase(phi);
        let total = p1 + p2;
        Ok((p1 / total, p2 / total))
    }

    /// Lossy 2x2 transfer matrix at a heater current.
    pub fn matrix_at_current(&self, current_ma: T) -> Result<TransferMatrix<T>> {
        let phi = self.calib.phase_at(current_ma)?;
        apply_loss(&mzi_matrix(&self.c1, &self.c2, PhaseSetting::new(phi)), self.loss)
    }
}
