//! Synthesis and verification of N x N rectangular MZI meshes.
//!
//! The mesh element on adjacent modes (m, m+1) is a full MZI in the same
//! convention as [`crate::xfer`], preceded by an external phase shifter on
//! mode m:
//!
//! ```text
//! T(theta, phi) = C(1/2) diag(e^{i theta}, 1) C(1/2) diag(e^{i phi}, 1)
//!               = i e^{i theta/2} [ e^{i phi} sin(theta/2)   cos(theta/2) ]
//!                                 [ e^{i phi} cos(theta/2)  -sin(theta/2) ]
//! ```
//!
//! so the bar state sits at theta = pi and the cross state at theta = 0.
//! A program holds the settings in application order (index 0 acts on the
//! input first), followed by a diagonal of per-mode output phases.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{lit, wrap_angle, Real};
use crate::xfer::TransferMatrix;

/// One MZI of the mesh: mesh layer, lower mode of the adjacent pair,
/// internal phase theta and external phase phi_ext (both in [0, 2*pi)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MziSetting<T: Real> {
    pub layer: usize,
    pub mode_a: usize,
    pub theta: T,
    pub phi_ext: T,
}

impl<T: Real> MziSetting<T> {
    /// Upper mode of the pair.
    pub fn mode_b(&self) -> usize {
        self.mode_a + 1
    }
}

/// A programmed rectangular mesh: n modes, n(n-1)/2 MZI settings in
/// application order, and one output phase per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshProgram<T: Real> {
    pub n: usize,
    pub settings: Vec<MziSetting<T>>,
    pub output_phases: Vec<T>,
}

/// 2x2 block entries of T(theta, phi).
#[inline]
fn block<T: Real>(theta: T, phi_ext: T) -> [Complex<T>; 4] {
    let half = lit::<T>(0.5);
    let s = (theta * half).sin();
    let c = (theta * half).cos();
    let pref = Complex::from_polar(T::one(), theta * half + lit::<T>(std::f64::consts::FRAC_PI_2));
    let eip = Complex::from_polar(T::one(), phi_ext);
    [pref * eip * s, pref * c, pref * eip * c, -pref * s]
}

/// In-place left multiplication by the block on rows (m, m+1).
fn apply_left<T: Real>(w: &mut TransferMatrix<T>, m: usize, b: &[Complex<T>; 4]) {
    let n = w.dim();
    for col in 0..n {
        let top = w.get(m, col);
        let bot = w.get(m + 1, col);
        w.set(m, col, b[0] * top + b[1] * bot);
        w.set(m + 1, col, b[2] * top + b[3] * bot);
    }
}

/// In-place right multiplication by the block adjoint on columns (m, m+1).
fn apply_right_adjoint<T: Real>(w: &mut TransferMatrix<T>, m: usize, b: &[Complex<T>; 4]) {
    let n = w.dim();
    for row in 0..n {
        let left = w.get(row, m);
        let right = w.get(row, m + 1);
        w.set(row, m, left * b[0].conj() + right * b[1].conj());
        w.set(row, m + 1, left * b[2].conj() + right * b[3].conj());
    }
}

/// Decompose a unitary into a rectangular mesh program.
///
/// Null rotations are kept, so the settings count is always n(n-1)/2.
pub fn clements_decompose<T: Real>(
    u: &TransferMatrix<T>,
    n: usize,
) -> Result<MeshProgram<T>> {
    if n < 1 {
        return Err(Error::Domain("mode count must be at least 1".into()));
    }
    if u.dim() != n {
        return Err(Error::Domain(format!(
            "matrix dimension {} does not match mode count {n}",
            u.dim()
        )));
    }
    let tol = lit::<T>(1e-10);
    let dev = u.unitarity_deviation();
    if dev > tol {
        return Err(Error::NonUnitary {
            deviation: dev.to_f64().unwrap_or(f64::NAN),
            tolerance: 1e-10,
        });
    }

    let mut w = u.clone();
    // (mode, theta, phi) in application order of the elimination.
    let mut right_ops: Vec<(usize, T, T)> = Vec::new();
    let mut left_ops: Vec<(usize, T, T)> = Vec::new();
    let pi = lit::<T>(std::f64::consts::PI);

    for i in 0..n.saturating_sub(1) {
        if i % 2 == 0 {
            // Null W[n-1-j, i-j] by mixing columns (i-j, i-j+1) from the right.
            for j in 0..=i {
                let row = n - 1 - j;
                let m = i - j;
                let a = w.get(row, m);
                let b_ = w.get(row, m + 1);
                // Both entries already zero: keep the null rotation in the
                // bar state.
                let theta = if a.norm() == T::zero() && b_.norm() == T::zero() {
                    pi
                } else {
                    lit::<T>(2.0) * b_.norm().atan2(a.norm())
                };
                let phi = if a.norm() > T::zero() && b_.norm() > T::zero() {
                    a.arg() - b_.arg() - pi
                } else {
                    T::zero()
                };
                let blk = block(theta, phi);
                apply_right_adjoint(&mut w, m, &blk);
                right_ops.push((m, theta, phi));
            }
        } else {
            // Null W[n-1-i+j, j] by mixing rows from the left.
            for j in 0..=i {
                let row = n - 1 - i + j;
                let col = j;
                let m = row - 1;
                let top = w.get(m, col);
                let bot = w.get(row, col);
                let theta = if top.norm() == T::zero() && bot.norm() == T::zero() {
                    pi
                } else {
                    lit::<T>(2.0) * top.norm().atan2(bot.norm())
                };
                let phi = if top.norm() > T::zero() && bot.norm() > T::zero() {
                    bot.arg() - top.arg()
                } else {
                    T::zero()
                };
                let blk = block(theta, phi);
                apply_left(&mut w, m, &blk);
                left_ops.push((m, theta, phi));
            }
        }
    }

    // W is now diagonal: L ... L U Rinv ... Rinv = D, so
    // U = Linv... D R..., and each Linv is commuted through D:
    // T^{-1}(theta, phi) D(a, b) = D(b - phi - theta - pi, b - theta - pi)
    //                              T(theta, a - b).
    let mut diag: Vec<T> = (0..n).map(|i| w.get(i, i).arg()).collect();
    let mut commuted: Vec<(usize, T, T)> = Vec::with_capacity(left_ops.len());
    for &(m, theta, phi) in left_ops.iter().rev() {
        let a = diag[m];
        let b = diag[m + 1];
        let phi_new = a - b;
        diag[m] = b - phi - theta - pi;
        diag[m + 1] = b - theta - pi;
        commuted.push((m, theta, phi_new));
    }

    // Application order: the right-elimination ops first (in elimination
    // order), then the commuted left ops (innermost first).
    let ordered = right_ops.into_iter().chain(commuted);

    // Greedy layer assignment in application order.
    let mut last_layer = vec![-1isize; n];
    let mut settings = Vec::with_capacity(n * (n - 1) / 2);
    for (m, theta, phi) in ordered {
        let layer = (last_layer[m].max(last_layer[m + 1]) + 1) as usize;
        last_layer[m] = layer as isize;
        last_layer[m + 1] = layer as isize;
        settings.push(MziSetting {
            layer,
            mode_a: m,
            theta: wrap_angle(theta),
            phi_ext: wrap_angle(phi),
        });
    }

    Ok(MeshProgram {
        n,
        settings,
        output_phases: diag.into_iter().map(wrap_angle).collect(),
    })
}

fn validate_program<T: Real>(p: &MeshProgram<T>) -> Result<()> {
    if p.n < 1 {
        return Err(Error::Domain("mesh must have at least one mode".into()));
    }
    if p.output_phases.len() != p.n {
        return Err(Error::Validation(format!(
            "expected {} output phases, got {}",
            p.n,
            p.output_phases.len()
        )));
    }
    let mut used: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for s in &p.settings {
        if s.mode_b() >= p.n {
            return Err(Error::Validation(format!(
                "mode pair ({}, {}) out of range for {} modes",
                s.mode_a,
                s.mode_b(),
                p.n
            )));
        }
        let layer_modes = used.entry(s.layer).or_default();
        if layer_modes.contains(&s.mode_a) || layer_modes.contains(&s.mode_b()) {
            return Err(Error::Validation(format!(
                "overlapping mode pairs in layer {}",
                s.layer
            )));
        }
        layer_modes.push(s.mode_a);
        layer_modes.push(s.mode_b());
    }
    Ok(())
}

/// Forward product of a program: output phase diagonal times the MZI
/// blocks in reverse application order.
pub fn mesh_reconstruct<T: Real>(p: &MeshProgram<T>) -> Result<TransferMatrix<T>> {
    degrade_mesh(p, &vec![(T::zero(), T::zero()); p.settings.len()])
}

/// Reconstruct with per-MZI coupler imperfections: MZI k uses couplers
/// r = 0.5 + delta for its two directional couplers. Zero offsets give the
/// exact [`mesh_reconstruct`] result.
pub fn degrade_mesh<T: Real>(
    p: &MeshProgram<T>,
    coupler_offsets: &[(T, T)],
) -> Result<TransferMatrix<T>> {
    validate_program(p)?;
    if coupler_offsets.len() != p.settings.len() {
        return Err(Error::Validation(format!(
            "expected {} coupler offset pairs, got {}",
            p.settings.len(),
            coupler_offsets.len()
        )));
    }
    let half = lit::<T>(0.5);
    let mut m = TransferMatrix::identity(p.n);
    for (s, &(d1, d2)) in p.settings.iter().zip(coupler_offsets.iter()) {
        let c1 = crate::xfer::CouplerSpec::new(half + d1)?;
        let c2 = crate::xfer::CouplerSpec::new(half + d2)?;
        let mzi = crate::xfer::mzi_matrix(&c1, &c2, crate::xfer::PhaseSetting::new(s.theta));
        let eip = Complex::from_polar(T::one(), s.phi_ext);
        let blk = [
            mzi.get(0, 0) * eip,
            mzi.get(0, 1),
            mzi.get(1, 0) * eip,
            mzi.get(1, 1),
        ];
        apply_left(&mut m, s.mode_a, &blk);
    }
    for (i, &phase) in p.output_phases.iter().enumerate() {
        let f = Complex::from_polar(T::one(), phase);
        for col in 0..p.n {
            let v = m.get(i, col);
            m.set(i, col, v * f);
        }
    }
    Ok(m)
}

/// Program a mesh that routes input j to output perm[j] (up to phases).
pub fn synthesize_switch<T: Real>(perm: &[usize]) -> Result<MeshProgram<T>> {
    let n = perm.len();
    let mut seen = vec![false; n];
    for &t in perm {
        if t >= n || seen[t] {
            return Err(Error::Domain(format!(
                "not a permutation of 0..{n}: {perm:?}"
            )));
        }
        seen[t] = true;
    }
    let mut u = TransferMatrix::identity(n);
    for (j, &t) in perm.iter().enumerate() {
        for row in 0..n {
            let v = if row == t { T::one() } else { T::zero() };
            u.set(row, j, Complex::new(v, T::zero()));
        }
    }
    clements_decompose(&u, n)
}

/// Worst-case routed power over the target outputs of a permutation.
pub fn routing_fidelity<T: Real>(u: &TransferMatrix<T>, perm: &[usize]) -> T {
    perm.iter()
        .enumerate()
        .map(|(j, &t)| u.get(t, j).norm_sqr())
        .fold(T::infinity(), T::min)
}

/// Haar-random unitary from Gram-Schmidt orthonormalization of a complex
/// Gaussian matrix (positive-diagonal R makes the draw Haar-distributed).
pub fn haar_unitary<R: Rng>(n: usize, rng: &mut R) -> TransferMatrix<f64> {
    let mut cols: Vec<Vec<Complex<f64>>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    Complex::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
                })
                .collect()
        })
        .collect();
    for j in 0..n {
        for k in 0..j {
            let proj: Complex<f64> = (0..n).map(|i| cols[k][i].conj() * cols[j][i]).sum();
            for i in 0..n {
                let correction = proj * cols[k][i];
                cols[j][i] -= correction;
            }
        }
        let norm: f64 = cols[j].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for c in cols[j].iter_mut() {
            *c /= norm;
        }
    }
    let mut m = TransferMatrix::identity(n);
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m.set(i, j, *v);
        }
    }
    m
}
