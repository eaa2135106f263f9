//! Recovery of the device's hidden parameters from published anchors:
//! coupler ratios from extinction ratios, the current-to-phase map from
//! operating-point anchors, and model transmission sweeps.
//!
//! The thermo-optic map is `phi(I) = phi0 - c * I^2` (phase linear in
//! heater power). Heating reduces the phase from `phi0`, so with
//! `phi0 = pi` the device starts at the port-1 maximum and moves toward
//! the cross state as current increases.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::xfer::{p1_of_phi, p2_of_phi, CouplerSpec};

/// Current-to-phase calibration: phi(I) = phi0 - c * I^2 on [0, i_max].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseCalibration<T: Real> {
    phi0: T,
    c: T,
    i_max: T,
}

impl<T: Real> PhaseCalibration<T> {
    pub fn new(phi0: T, c: T, i_max: T) -> Result<Self> {
        if c < T::zero() || !c.is_finite() {
            return Err(Error::Domain(format!(
                "thermo-optic coefficient must be >= 0, got {c}"
            )));
        }
        if !(i_max > T::zero()) || !i_max.is_finite() {
            return Err(Error::Domain(format!(
                "heater current limit must be positive, got {i_max}"
            )));
        }
        Ok(Self { phi0, c, i_max })
    }

    pub fn phi0(&self) -> T {
        self.phi0
    }

    /// Thermo-optic coefficient in rad/mA^2.
    pub fn coefficient(&self) -> T {
        self.c
    }

    pub fn i_max(&self) -> T {
        self.i_max
    }

    /// Phase at a heater current; errors above the heater limit.
    pub fn phase_at(&self, current_ma: T) -> Result<T> {
        if current_ma < T::zero() || current_ma > self.i_max {
            return Err(Error::Domain(format!(
                "current {current_ma} mA outside heater range [0, {}] mA",
                self.i_max
            )));
        }
        Ok(self.phi0 - self.c * current_ma * current_ma)
    }
}

/// What was observed at a given heater current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnchorObservable<T: Real> {
    /// Port 1 sits at its maximum transmission.
    Port1Max,
    /// Port 2 is near (but not necessarily at) its maximum; used only as a
    /// post-fit consistency check, never in the least-squares objective.
    Port2NearMax,
    /// The two ports transmit equally.
    Split5050,
    /// A measured lossless port fraction P_port / (P1 + P2).
    PortFraction { port: u8, value: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor<T: Real> {
    pub current_ma: T,
    pub observable: AnchorObservable<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet<T: Real>(pub Vec<Anchor<T>>);

/// Model transmission sweep: absolute (p1, p2) per heater current.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<T: Real> {
    pub current_ma: T,
    pub p1: T,
    pub p2: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve<T: Real> {
    pub points: Vec<SweepPoint<T>>,
}

/// Diagnostics from the phase-calibration fit.
#[derive(Debug, Clone)]
pub struct PhaseFitReport<T: Real> {
    /// Sum of squared residuals over the anchors in the objective.
    pub residual_ss: T,
    /// Per-anchor residuals, in anchor order (near-max anchors report 0).
    pub residuals: Vec<T>,
    /// For each near-max anchor: (current, achieved fraction, fringe maximum).
    pub near_max_checks: Vec<(T, T, T)>,
}

/// Port-1 extinction ratio in dB for a coupler pair:
/// 10 log10 [(t1 t2 + k1 k2)^2 / (t1 t2 - k1 k2)^2]. Infinite when balanced.
pub fn port1_extinction_db<T: Real>(c1: &CouplerSpec<T>, c2: &CouplerSpec<T>) -> T {
    let x = c1.t() * c2.t();
    let y = c1.k() * c2.k();
    ratio_db(x, y)
}

/// Port-2 extinction ratio in dB: 10 log10 [(t1 k2 + k1 t2)^2 / (t1 k2 - k1 t2)^2].
pub fn port2_extinction_db<T: Real>(c1: &CouplerSpec<T>, c2: &CouplerSpec<T>) -> T {
    let u = c1.t() * c2.k();
    let v = c1.k() * c2.t();
    ratio_db(u, v)
}

fn ratio_db<T: Real>(a: T, b: T) -> T {
    let num = (a + b) * (a + b);
    let den = (a - b) * (a - b);
    if den == T::zero() {
        return T::infinity();
    }
    lit::<T>(10.0) * (num / den).log10()
}

/// Fit the two coupler cross-coupling ratios from the per-port extinction
/// ratios, by coarse grid search plus derivative-free pattern refinement.
///
/// The solution set is 4-fold degenerate (coupler swap and global t/k
/// exchange); the canonical representative returned has `r1 <= 0.5` and
/// `r1 <= r2`, taking the candidate with r1 closest to the ideal 0.5 when
/// two of the four satisfy both constraints.
pub fn fit_couplers_from_extinction<T: Real>(
    er1_db: T,
    er2_db: T,
) -> Result<(CouplerSpec<T>, CouplerSpec<T>)> {
    if er1_db.is_nan() || er2_db.is_nan() || er1_db <= T::zero() || er2_db <= T::zero() {
        return Err(Error::Domain(format!(
            "extinction ratios must be positive, got ({er1_db}, {er2_db}) dB"
        )));
    }
    match (er1_db.is_infinite(), er2_db.is_infinite()) {
        (true, true) => {
            return Ok((CouplerSpec::ideal(), CouplerSpec::ideal()));
        }
        (true, false) | (false, true) => {
            return Err(Error::Infeasible(
                "a single infinite extinction ratio does not determine the couplers".into(),
            ));
        }
        (false, false) => {}
    }

    let objective = |r1: T, r2: T| -> T {
        let c1 = CouplerSpec::new(r1).unwrap();
        let c2 = CouplerSpec::new(r2).unwrap();
        let e1 = port1_extinction_db(&c1, &c2);
        let e2 = port2_extinction_db(&c1, &c2);
        if e1.is_infinite() || e2.is_infinite() {
            return T::max_value();
        }
        let d1 = e1 - er1_db;
        let d2 = e2 - er2_db;
        d1 * d1 + d2 * d2
    };

    // Coarse grid.
    let step = lit::<T>(5e-3);
    let mut best = (lit::<T>(0.25), lit::<T>(0.25));
    let mut best_f = T::max_value();
    let n_steps = 199usize;
    for i in 1..n_steps {
        for j in 1..n_steps {
            let r1 = step * lit::<T>(i as f64);
            let r2 = step * lit::<T>(j as f64);
            let f = objective(r1, r2);
            if f < best_f {
                best_f = f;
                best = (r1, r2);
            }
        }
    }

    // Compass-search refinement with halving steps.
    let (mut r1, mut r2) = best;
    let mut h = step;
    let floor = lit::<T>(1e-14);
    let eps = lit::<T>(1e-12);
    while h > floor {
        let mut improved = false;
        for (d1, d2) in [(h, T::zero()), (-h, T::zero()), (T::zero(), h), (T::zero(), -h)] {
            let (n1, n2) = (r1 + d1, r2 + d2);
            if n1 <= eps || n1 >= T::one() - eps || n2 <= eps || n2 >= T::one() - eps {
                continue;
            }
            let f = objective(n1, n2);
            if f < best_f {
                best_f = f;
                r1 = n1;
                r2 = n2;
                improved = true;
            }
        }
        if !improved {
            h = h * lit::<T>(0.5);
        }
    }

    // Pick the canonical member of the degenerate solution set.
    let candidates = [
        (r1, r2),
        (r2, r1),
        (T::one() - r1, T::one() - r2),
        (T::one() - r2, T::one() - r1),
    ];
    let half = lit::<T>(0.5);
    let tol = lit::<T>(1e-9);
    let canonical = candidates
        .iter()
        .copied()
        .filter(|&(a, b)| a <= half + tol && a <= b + tol)
        .fold(None::<(T, T)>, |acc, cand| match acc {
            Some(cur) if cur.0 >= cand.0 => Some(cur),
            _ => Some(cand),
        })
        .expect("degenerate solution set always has a canonical member");

    let c1 = CouplerSpec::new(canonical.0)?;
    let c2 = CouplerSpec::new(canonical.1)?;

    // Forward consistency gate.
    let e1 = port1_extinction_db(&c1, &c2);
    let e2 = port2_extinction_db(&c1, &c2);
    let db_tol = lit::<T>(1e-6);
    if (e1 - er1_db).abs() > db_tol || (e2 - er2_db).abs() > db_tol {
        return Err(Error::Infeasible(format!(
            "no coupler pair reproduces ({er1_db}, {er2_db}) dB; best found ({e1}, {e2}) dB"
        )));
    }
    Ok((c1, c2))
}

fn fraction_port1<T: Real>(c1: &CouplerSpec<T>, c2: &CouplerSpec<T>, phi: T) -> T {
    let p1 = p1_of_phi(c1, c2, phi);
    let p2 = p2_of_phi(c1, c2, phi);
    p1 / (p1 + p2)
}

/// Maximum lossless port-1 fraction over the fringe: (t1 t2 + k1 k2)^2.
fn max_fraction_port1<T: Real>(c1: &CouplerSpec<T>, c2: &CouplerSpec<T>) -> T {
    let s = c1.t() * c2.t() + c1.k() * c2.k();
    s * s
}

/// Maximum lossless port-2 fraction over the fringe: (t1 k2 + k1 t2)^2.
fn max_fraction_port2<T: Real>(c1: &CouplerSpec<T>, c2: &CouplerSpec<T>) -> T {
    let s = c1.t() * c2.k() + c1.k() * c2.t();
    s * s
}

fn anchor_residual<T: Real>(
    anchor: &Anchor<T>,
    couplers: &(CouplerSpec<T>, CouplerSpec<T>),
    phi0: T,
    c: T,
) -> Option<T> {
    let phi = phi0 - c * anchor.current_ma * anchor.current_ma;
    let f1 = fraction_port1(&couplers.0, &couplers.1, phi);
    match anchor.observable {
        AnchorObservable::Port1Max => Some(f1 - max_fraction_port1(&couplers.0, &couplers.1)),
        AnchorObservable::Split5050 => Some(f1 - lit::<T>(0.5)),
        AnchorObservable::PortFraction { port, value } => {
            let f = if port == 1 { f1 } else { T::one() - f1 };
            Some(f - value)
        }
        AnchorObservable::Port2NearMax => None,
    }
}

/// Fit (phi0, c) of the thermo-optic map to a set of anchors, by least
/// squares on the lossless port fractions.
///
/// A `Port1Max` anchor at 0 mA pins `phi0 = pi` exactly (the residual-
/// minimizing value); the remaining coefficient is then a 1-D fit. Among
/// the periodic family of coefficients consistent with the anchors, the
/// smallest is returned. `Port2NearMax` anchors are excluded from the
/// objective and reported as consistency checks.
pub fn fit_phase_calibration<T: Real>(
    anchors: &AnchorSet<T>,
    couplers: (CouplerSpec<T>, CouplerSpec<T>),
    i_max: T,
) -> Result<(PhaseCalibration<T>, PhaseFitReport<T>)> {
    let pi = lit::<T>(std::f64::consts::PI);
    if anchors.0.is_empty() {
        return Err(Error::Validation("anchor set is empty".into()));
    }
    for a in &anchors.0 {
        if a.current_ma < T::zero() || a.current_ma > i_max {
            return Err(Error::Validation(format!(
                "anchor current {} mA outside [0, {i_max}] mA",
                a.current_ma
            )));
        }
    }

    let informative: Vec<&Anchor<T>> = anchors
        .0
        .iter()
        .filter(|a| !matches!(a.observable, AnchorObservable::Port2NearMax))
        .collect();

    let phi0_pinned = informative
        .iter()
        .any(|a| matches!(a.observable, AnchorObservable::Port1Max) && a.current_ma == T::zero());

    let n_nonzero_current = informative
        .iter()
        .filter(|a| a.current_ma > T::zero())
        .count();
    let distinct_currents = {
        let mut cs: Vec<T> = informative.iter().map(|a| a.current_ma).collect();
        cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cs.dedup_by(|a, b| *a == *b);
        cs.len()
    };
    if phi0_pinned {
        if n_nonzero_current < 1 {
            return Err(Error::Validation(
                "under-determined fit: no informative anchor away from 0 mA".into(),
            ));
        }
    } else if distinct_currents < 2 {
        return Err(Error::Validation(
            "under-determined fit: need informative anchors at two distinct currents".into(),
        ));
    }

    let objective = |phi0: T, c: T| -> T {
        informative
            .iter()
            .filter_map(|a| anchor_residual(a, &couplers, phi0, c))
            .map(|r| r * r)
            .sum()
    };

    // Compass refinement of (phi0, c) from a grid seed. A zero initial
    // phi0 step keeps phi0 fixed (the pinned case).
    let refine = |seed_phi0: T, seed_c: T, hp0: T, hc0: T| -> (T, T, T) {
        let (mut phi0, mut c) = (seed_phi0, seed_c);
        let mut best_f = objective(phi0, c);
        let (mut hp, mut hc) = (hp0, hc0);
        while hp > lit::<T>(1e-15) || hc > lit::<T>(1e-16) {
            let mut improved = false;
            for (d_p, d_c) in [
                (hp, T::zero()),
                (-hp, T::zero()),
                (T::zero(), hc),
                (T::zero(), -hc),
            ] {
                let (np_, nc_) = (phi0 + d_p, c + d_c);
                if nc_ < T::zero() {
                    continue;
                }
                let f = objective(np_, nc_);
                if f < best_f {
                    best_f = f;
                    phi0 = np_;
                    c = nc_;
                    improved = true;
                }
            }
            if !improved {
                hp = hp * lit::<T>(0.5);
                hc = hc * lit::<T>(0.5);
            }
        }
        (phi0, c, best_f)
    };

    // The objective is periodic in c (fractions depend on cos phi), so
    // several coefficients can fit the anchors equally well. Refine every
    // local minimum of the coarse scan and keep the smallest coefficient
    // among the candidates within noise of the best fit.
    let select = |candidates: Vec<(T, T, T)>| -> (T, T) {
        let best_f = candidates
            .iter()
            .map(|&(_, _, f)| f)
            .fold(T::infinity(), T::min);
        let tol = best_f + lit::<T>(1e-12);
        candidates
            .into_iter()
            .filter(|&(_, _, f)| f <= tol)
            .map(|(p, cc, _)| (cc, p))
            .min_by(|a, b| a.partial_cmp(b).unwrap())
            .map(|(cc, p)| (p, cc))
            .expect("coarse scan always yields at least one local minimum")
    };

    // Coefficient range: up to two full fringes across the heater span.
    let c_max = lit::<T>(4.0) * pi / (i_max * i_max);
    let (phi0, c);
    if phi0_pinned {
        let n = 2000usize;
        let dc = c_max / lit::<T>(n as f64);
        let grid: Vec<T> = (0..=n)
            .map(|i| objective(pi, dc * lit::<T>(i as f64)))
            .collect();
        let mut candidates = Vec::new();
        for i in 0..=n {
            let here = grid[i];
            let left_ok = i == 0 || grid[i - 1] >= here;
            let right_ok = i == n || grid[i + 1] >= here;
            if left_ok && right_ok {
                candidates.push(refine(pi, dc * lit::<T>(i as f64), T::zero(), dc));
            }
        }
        (phi0, c) = select(candidates);
    } else {
        let np = 128usize;
        let nc = 256usize;
        let tau = lit::<T>(std::f64::consts::TAU);
        let dp = tau / lit::<T>(np as f64);
        let dc = c_max / lit::<T>(nc as f64);
        let grid: Vec<Vec<T>> = (0..np)
            .map(|i| {
                (0..=nc)
                    .map(|j| objective(dp * lit::<T>(i as f64), dc * lit::<T>(j as f64)))
                    .collect()
            })
            .collect();
        let mut candidates = Vec::new();
        for i in 0..np {
            for j in 0..=nc {
                let here = grid[i][j];
                // phi0 wraps around; c does not.
                let is_local_min = grid[(i + np - 1) % np][j] >= here
                    && grid[(i + 1) % np][j] >= here
                    && (j == 0 || grid[i][j - 1] >= here)
                    && (j == nc || grid[i][j + 1] >= here);
                if is_local_min {
                    candidates.push(refine(
                        dp * lit::<T>(i as f64),
                        dc * lit::<T>(j as f64),
                        dp,
                        dc,
                    ));
                }
            }
        }
        (phi0, c) = select(candidates);
    }

    if !phi0.is_finite() || !c.is_finite() {
        return Err(Error::Infeasible(format!(
            "phase-calibration refinement diverged: phi0 = {phi0}, c = {c}"
        )));
    }

    let residuals: Vec<T> = anchors
        .0
        .iter()
        .map(|a| anchor_residual(a, &couplers, phi0, c).unwrap_or(T::zero()))
        .collect();
    let residual_ss = residuals.iter().map(|r| *r * *r).sum();
    let near_max_checks = anchors
        .0
        .iter()
        .filter(|a| matches!(a.observable, AnchorObservable::Port2NearMax))
        .map(|a| {
            let phi = phi0 - c * a.current_ma * a.current_ma;
            (
                a.current_ma,
                T::one() - fraction_port1(&couplers.0, &couplers.1, phi),
                max_fraction_port2(&couplers.0, &couplers.1),
            )
        })
        .collect();

    Ok((
        PhaseCalibration::new(phi0, c, i_max)?,
        PhaseFitReport {
            residual_ss,
            residuals,
            near_max_checks,
        },
    ))
}

/// Evaluate the fitted model over a list of heater currents.
pub fn predict_sweep<T: Real>(
    model: &crate::xfer::CircuitModel<T>,
    currents: &[T],
) -> Result<SweepCurve<T>> {
    if currents.is_empty() {
        return Err(Error::Validation("current list is empty".into()));
    }
    let mut points = Vec::with_capacity(currents.len());
    for &i in currents {
        let (p1, p2) = model.transmissions_at_current(i)?;
        points.push(SweepPoint { current_ma: i, p1, p2 });
    }
    Ok(SweepCurve { points })
}

/// Per-port extinction ratios of a sweep: 10 log10(max / min); +inf when
/// a port reaches exactly zero, 0 dB for a constant curve.
pub fn extinction_ratios<T: Real>(curve: &SweepCurve<T>) -> Result<(T, T)> {
    if curve.points.is_empty() {
        return Err(Error::Validation("sweep curve is empty".into()));
    }
    let er = |values: Vec<T>| -> T {
        let max = values.iter().copied().fold(T::neg_infinity(), T::max);
        let min = values.iter().copied().fold(T::infinity(), T::min);
        if min == T::zero() {
            T::infinity()
        } else {
            lit::<T>(10.0) * (max / min).log10()
        }
    };
    Ok((
        er(curve.points.iter().map(|p| p.p1).collect()),
        er(curve.points.iter().map(|p| p.p2).collect()),
    ))
}

/// Evenly spaced currents from 0 to i_max inclusive. The grid is built
/// from integer multiples of the step (not accumulation) so the endpoint
/// is never duplicated by rounding.
pub fn dense_currents<T: Real>(i_max: T, step: T) -> Vec<T> {
    let ratio = i_max / step;
    let near = ratio.round();
    let n = if (ratio - near).abs() < lit::<T>(1e-9) {
        near
    } else {
        ratio.floor()
    }
    .to_f64()
    .map(|v| v as usize)
    .unwrap_or(0);
    let mut out: Vec<T> = (0..n).map(|i| step * lit::<T>(i as f64)).collect();
    out.push(i_max);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xfer::CircuitModel;
    use rand::{Rng, SeedableRng};

    const PI: f64 = std::f64::consts::PI;

    /// Independent closed-form solution of the extinction equations.
    ///
    /// With m_i = sqrt(10^(er_i/10)), alpha = (m1-1)/(m1+1) and
    /// beta = (m2-1)/(m2+1), the odds p = r1/(1-r1), q = r2/(1-r2) satisfy
    /// p*q = alpha^(+-2) and p/q = beta^(+-2); the four sign choices are the
    /// degenerate solution set.
    fn couplers_closed_form(er1_db: f64, er2_db: f64) -> Vec<(f64, f64)> {
        let m1 = 10f64.powf(er1_db / 10.0).sqrt();
        let m2 = 10f64.powf(er2_db / 10.0).sqrt();
        let alpha = (m1 - 1.0) / (m1 + 1.0);
        let beta = (m2 - 1.0) / (m2 + 1.0);
        let ps = [
            alpha * beta,
            1.0 / (alpha * beta),
            alpha / beta,
            beta / alpha,
        ];
        let qs = [
            alpha / beta,
            beta / alpha,
            alpha * beta,
            1.0 / (alpha * beta),
        ];
        ps.iter()
            .zip(qs.iter())
            .map(|(&p, &q)| (p / (1.0 + p), q / (1.0 + q)))
            .collect()
    }

    #[test]
    fn fit_couplers_paper_anchors() {
        let (c1, c2) = fit_couplers_from_extinction(10.2, 7.6).unwrap();
        // Oracle: algebraic closed form, canonicalized the same way.
        let mut candidates: Vec<(f64, f64)> = couplers_closed_form(10.2, 7.6)
            .into_iter()
            .filter(|&(a, b)| a <= 0.5 + 1e-9 && a <= b + 1e-9)
            .collect();
        candidates.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        let expect = candidates[0];
        assert!((c1.r() - expect.0).abs() < 1e-9, "r1 = {}", c1.r());
        assert!((c2.r() - expect.1).abs() < 1e-9, "r2 = {}", c2.r());
        // Matches the coarse published values.
        assert!((c1.r() - 0.438).abs() < 5e-4);
        assert!((c2.r() - 0.822).abs() < 5e-4);
        // Forward consistency within 0.01 dB (tight: 1e-6 dB).
        assert!((port1_extinction_db(&c1, &c2) - 10.2).abs() < 1e-6);
        assert!((port2_extinction_db(&c1, &c2) - 7.6).abs() < 1e-6);
    }

    #[test]
    fn fit_couplers_edge_cases() {
        let (c1, c2) =
            fit_couplers_from_extinction(f64::INFINITY, f64::INFINITY).unwrap();
        assert_eq!(c1.r(), 0.5);
        assert_eq!(c2.r(), 0.5);
        assert!(matches!(
            fit_couplers_from_extinction(f64::INFINITY, 7.6),
            Err(Error::Infeasible(_))
        ));
        assert!(fit_couplers_from_extinction(-1.0, 7.6).is_err());
        assert!(fit_couplers_from_extinction(0.0, 7.6).is_err());
        assert!(fit_couplers_from_extinction(f64::NAN, 7.6).is_err());
    }

    #[test]
    fn fit_couplers_forward_round_trip_region() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let er1: f64 = rng.gen_range(2.0..25.0);
            let er2: f64 = rng.gen_range(2.0..25.0);
            let (c1, c2) = fit_couplers_from_extinction(er1, er2).unwrap();
            assert!((port1_extinction_db(&c1, &c2) - er1).abs() < 0.01);
            assert!((port2_extinction_db(&c1, &c2) - er2).abs() < 0.01);
            assert!(c1.r() <= 0.5 + 1e-9 && c1.r() <= c2.r() + 1e-9);
        }
    }

    #[test]
    fn degenerate_solutions_share_fringes() {
        let (c1, c2) = fit_couplers_from_extinction(10.2, 7.6).unwrap();
        let variants = [
            (c2, c1),
            (c1.flipped(), c2.flipped()),
            (c2.flipped(), c1.flipped()),
        ];
        let mut phi = 0.0;
        while phi < 2.0 * PI {
            let p1 = p1_of_phi(&c1, &c2, phi);
            let p2 = p2_of_phi(&c1, &c2, phi);
            for (a, b) in &variants {
                assert!((p1_of_phi(a, b, phi) - p1).abs() < 1e-12);
                assert!((p2_of_phi(a, b, phi) - p2).abs() < 1e-12);
            }
            phi += 0.01;
        }
    }

    fn paper_anchors() -> AnchorSet<f64> {
        AnchorSet(vec![
            Anchor { current_ma: 0.0, observable: AnchorObservable::Port1Max },
            Anchor { current_ma: 11.05, observable: AnchorObservable::Split5050 },
            Anchor { current_ma: 16.6, observable: AnchorObservable::Port2NearMax },
        ])
    }

    /// 1-D bisection oracle: the coefficient that balances the ports at
    /// 11.05 mA with phi0 = pi.
    fn oracle_coefficient(c1: &CouplerSpec<f64>, c2: &CouplerSpec<f64>) -> f64 {
        let i2 = 11.05f64 * 11.05;
        let f = |c: f64| {
            let phi = PI - c * i2;
            p1_of_phi(c1, c2, phi) - p2_of_phi(c1, c2, phi)
        };
        let (mut lo, mut hi) = (0.0, PI / i2);
        assert!(f(lo) > 0.0 && f(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn fit_phase_calibration_paper_anchors() {
        let (c1, c2) = fit_couplers_from_extinction(10.2, 7.6).unwrap();
        let (calib, report) =
            fit_phase_calibration(&paper_anchors(), (c1, c2), 16.6).unwrap();
        assert!((calib.phi0() - PI).abs() < 1e-12);
        let oracle_c = oracle_coefficient(&c1, &c2);
        assert!((oracle_c - 0.0120).abs() < 1e-4, "oracle c = {oracle_c}");
        assert!((calib.coefficient() - oracle_c).abs() < 1e-9);
        assert!(report.residual_ss < 1e-18);

        // Consistency: port-2 fraction at the heater limit is near but below
        // the fringe maximum.
        let (_, f2, f2_max) = report.near_max_checks[0];
        assert!((f2 - 0.914).abs() < 1e-3, "f2 = {f2}");
        assert!(f2 < f2_max);
        assert!((f2_max - 0.9196).abs() < 5e-4);
    }

    #[test]
    fn fit_phase_calibration_round_trip() {
        // Generate anchors from known parameters, fit, compare.
        let couplers = (CouplerSpec::ideal(), CouplerSpec::ideal());
        let truth = PhaseCalibration::new(PI, 0.010, 16.6).unwrap();
        let mut anchors = vec![Anchor {
            current_ma: 0.0,
            observable: AnchorObservable::Port1Max,
        }];
        for i in [5.0, 9.0, 13.0] {
            let phi = truth.phase_at(i).unwrap();
            let f1 = p1_of_phi(&couplers.0, &couplers.1, phi);
            anchors.push(Anchor {
                current_ma: i,
                observable: AnchorObservable::PortFraction { port: 1, value: f1 },
            });
        }
        let (calib, _) =
            fit_phase_calibration(&AnchorSet(anchors), couplers, 16.6).unwrap();
        assert!((calib.phi0() - PI).abs() < 1e-6);
        assert!((calib.coefficient() - 0.010).abs() < 1e-6);
    }

    #[test]
    fn fit_phase_calibration_flat_response() {
        let couplers = (CouplerSpec::ideal(), CouplerSpec::ideal());
        // Same fraction at three currents: only c = 0 fits.
        let v: f64 = 0.73;
        let anchors = AnchorSet(
            [2.0, 7.0, 12.0]
                .iter()
                .map(|&i| Anchor {
                    current_ma: i,
                    observable: AnchorObservable::PortFraction { port: 1, value: v },
                })
                .collect(),
        );
        let (calib, report) = fit_phase_calibration(&anchors, couplers, 16.6).unwrap();
        assert!(calib.coefficient().abs() < 1e-7, "c = {}", calib.coefficient());
        let f = p1_of_phi(&couplers.0, &couplers.1, calib.phi0());
        assert!((f - v).abs() < 1e-7);
        assert!(report.residual_ss < 1e-12);
    }

    #[test]
    fn fit_phase_calibration_under_determined() {
        let couplers = (CouplerSpec::ideal(), CouplerSpec::ideal());
        let single = AnchorSet(vec![Anchor {
            current_ma: 11.05,
            observable: AnchorObservable::Split5050,
        }]);
        assert!(matches!(
            fit_phase_calibration(&single, couplers, 16.6),
            Err(Error::Validation(_))
        ));
        // Port1Max at 0 alone pins phi0 but not c.
        let pinned_only = AnchorSet(vec![Anchor {
            current_ma: 0.0,
            observable: AnchorObservable::Port1Max,
        }]);
        assert!(fit_phase_calibration(&pinned_only, couplers, 16.6).is_err());
        // Out-of-range anchor current.
        let out_of_range = AnchorSet(vec![Anchor {
            current_ma: 20.0,
            observable: AnchorObservable::Split5050,
        }]);
        assert!(fit_phase_calibration(&out_of_range, couplers, 16.6).is_err());
    }

    #[test]
    fn fit_stability_under_anchor_perturbation() {
        let (c1, c2) = fit_couplers_from_extinction(10.2, 7.6).unwrap();
        let baseline = fit_phase_calibration(&paper_anchors(), (c1, c2), 16.6)
            .unwrap()
            .0
            .coefficient();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let jitter = 1.0 + rng.gen_range(-0.01..0.01);
            let anchors = AnchorSet(vec![
                Anchor { current_ma: 0.0, observable: AnchorObservable::Port1Max },
                Anchor {
                    current_ma: 11.05 * jitter,
                    observable: AnchorObservable::Split5050,
                },
            ]);
            let c = fit_phase_calibration(&anchors, (c1, c2), 16.6)
                .unwrap()
                .0
                .coefficient();
            // Continuous response, no branch jump: c scales like 1/I^2.
            assert!((c - baseline).abs() < 0.05 * baseline, "c = {c}");
        }
    }

    fn fitted_model() -> CircuitModel<f64> {
        let (c1, c2) = fit_couplers_from_extinction(10.2, 7.6).unwrap();
        let (calib, _) = fit_phase_calibration(&paper_anchors(), (c1, c2), 16.6).unwrap();
        CircuitModel::new(c1, c2, calib, 0.31).unwrap()
    }

    #[test]
    fn predict_sweep_operating_points() {
        let model = fitted_model();
        let curve = predict_sweep(&model, &[0.0, 11.05, 16.6]).unwrap();

        // 0 mA: port-1 maximum implied by the 10.2 dB extinction.
        assert!((curve.points[0].p1 - 0.31 * 0.8396).abs() < 2e-4);
        assert!((curve.points[0].p2 - 0.31 * 0.1604).abs() < 2e-4);

        // 11.05 mA: exactly balanced.
        assert!((curve.points[1].p1 - curve.points[1].p2).abs() < 1e-9);
        assert!((curve.points[1].p1 - 0.155).abs() < 1e-4);

        // 16.6 mA: port-2 fraction near 0.914.
        let total = curve.points[2].p1 + curve.points[2].p2;
        assert!((curve.points[2].p2 / total - 0.914).abs() < 1e-3);

        // Flat total transmission everywhere.
        for p in &curve.points {
            assert!((p.p1 + p.p2 - 0.31).abs() < 1e-12);
        }

        assert!(predict_sweep(&model, &[17.0]).is_err());
        assert!(predict_sweep(&model, &[]).is_err());
    }

    #[test]
    fn extinction_ratios_of_model_sweep() {
        let model = fitted_model();
        let currents = dense_currents(16.6, 0.005);
        let curve = predict_sweep(&model, &currents).unwrap();
        let (er1, er2) = extinction_ratios(&curve).unwrap();
        assert!((er1 - 10.2).abs() < 0.1, "er1 = {er1}");
        assert!((er2 - 7.6).abs() < 0.1, "er2 = {er2}");
    }

    #[test]
    fn extinction_ratios_trivial_curves() {
        // Ideal lossless MZI over a full fringe: both ports reach zero.
        let c = CouplerSpec::ideal();
        let points: Vec<SweepPoint<f64>> = (0..=628)
            .map(|i| {
                // Grid hits both fringe zeros (phi = 0 and phi = pi) exactly.
                let phi = PI * i as f64 / 314.0;
                SweepPoint {
                    current_ma: i as f64,
                    p1: p1_of_phi(&c, &c, phi),
                    p2: p2_of_phi(&c, &c, phi),
                }
            })
            .collect();
        let (er1, er2) = extinction_ratios(&SweepCurve { points }).unwrap();
        assert!(er1.is_infinite() && er2.is_infinite());

        let flat = SweepCurve {
            points: vec![
                SweepPoint { current_ma: 0.0, p1: 0.2, p2: 0.1 },
                SweepPoint { current_ma: 1.0, p1: 0.2, p2: 0.1 },
            ],
        };
        let (er1, er2) = extinction_ratios(&flat).unwrap();
        assert_eq!(er1, 0.0);
        assert_eq!(er2, 0.0);
    }

    #[test]
    fn phase_calibration_monotone() {
        let calib = PhaseCalibration::new(PI, 0.012, 16.6).unwrap();
        let mut prev = calib.phase_at(0.0).unwrap();
        let mut i = 0.1;
        while i <= 16.6 {
            let phi = calib.phase_at(i).unwrap();
            assert!(phi < prev);
            prev = phi;
            i += 0.1;
        }
        assert!(calib.phase_at(-1.0).is_err());
        assert!(calib.phase_at(16.7).is_err());
        assert!(PhaseCalibration::new(PI, -0.1, 16.6).is_err());
        assert!(PhaseCalibration::new(PI, 0.1, 0.0).is_err());
    }
}
