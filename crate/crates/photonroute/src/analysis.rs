//! The count-analysis pipeline: binning, background subtraction, window
//! selection, photon areas with shot-noise propagation, and
//! efficiency-corrected splitting ratios compared against the model curve.

use crate::error::{Error, Result};
use crate::source::TimeTagStream;
use crate::xfer::CircuitModel;

/// Binned counts with per-bin variance. Counts are raw Poisson counts
/// after [`bin_events`]; background subtraction produces real-valued bins
/// and inflated variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width_ns: f64,
    pub t_start_ns: f64,
    pub counts: Vec<f64>,
    pub variance: Vec<f64>,
}

impl Histogram {
    pub fn span_ns(&self) -> f64 {
        self.t_start_ns + self.counts.len() as f64 * self.bin_width_ns
    }

    pub fn total_counts(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Sum of counts in [start, start + width), on the bin grid.
    fn window_counts(&self, start_ns: f64, width_ns: f64) -> f64 {
        let first = ((start_ns - self.t_start_ns) / self.bin_width_ns).round() as isize;
        let nbins = (width_ns / self.bin_width_ns).round() as isize;
        (first..first + nbins)
            .filter(|&k| k >= 0 && (k as usize) < self.counts.len())
            .map(|k| self.counts[k as usize])
            .sum()
    }
}

/// Counting window on the bin grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountWindow {
    pub start_ns: f64,
    pub width_ns: f64,
}

impl CountWindow {
    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.width_ns
    }
}

/// Background-subtracted counts in the window, with 1-sigma shot noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonArea {
    pub area: f64,
    pub sigma: f64,
}

/// Efficiency-corrected two-port splitting fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingEstimate {
    pub s1: f64,
    pub s2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub eff_ratio_used: f64,
}

/// Bin one channel of a stream over the attempt period.
pub fn bin_events(
    stream: &TimeTagStream,
    channel: u8,
    bin_width_ns: f64,
    period_ns: f64,
) -> Result<Histogram> {
    if !(bin_width_ns > 0.0) {
        return Err(Error::Domain(format!(
            "bin width must be positive, got {bin_width_ns}"
        )));
    }
    let nbins = (period_ns / bin_width_ns).ceil() as usize;
    let mut counts = vec![0.0; nbins];
    for e in stream.events.iter().filter(|e| e.channel == channel) {
        let k = (e.t_ns / bin_width_ns) as usize;
        if k < nbins {
            counts[k] += 1.0;
        }
    }
    let variance = counts.clone();
    Ok(Histogram {
        bin_width_ns,
        t_start_ns: 0.0,
        counts,
        variance,
    })
}

/// Estimate a flat background rate (per ns) from the given regions.
/// Returns (rate, variance of the rate). The regions must not intersect
/// the signal window.
pub fn estimate_background(
    h: &Histogram,
    bg_regions: &[(f64, f64)],
    signal: &CountWindow,
) -> Result<(f64, f64)> {
    if bg_regions.is_empty() {
        return Err(Error::Validation("background region is empty".into()));
    }
    let mut n_bg = 0.0;
    let mut span = 0.0;
    for &(start, end) in bg_regions {
        if end <= start {
            return Err(Error::Validation(format!(
                "degenerate background region [{start}, {end})"
            )));
        }
        if start < signal.end_ns() && end > signal.start_ns {
            return Err(Error::Validation(format!(
                "background region [{start}, {end}) overlaps the signal window"
            )));
        }
        n_bg += h.window_counts(start, end - start);
        span += end - start;
    }
    if span <= 0.0 {
        return Err(Error::Validation("background region has zero span".into()));
    }
    Ok((n_bg / span, n_bg / (span * span)))
}

/// Default background regions: everything outside the window padded by a
/// guard on both sides, clipped to the histogram span.
pub fn default_background_regions(
    h: &Histogram,
    signal: &CountWindow,
    guard_ns: f64,
) -> Vec<(f64, f64)> {
    let mut regions = Vec::new();
    let lo = signal.start_ns - guard_ns;
    let hi = signal.end_ns() + guard_ns;
    if lo > h.t_start_ns {
        regions.push((h.t_start_ns, lo));
    }
    if hi < h.span_ns() {
        regions.push((hi, h.span_ns()));
    }
    regions
}

/// Place a window of the given width on the bin grid of a reference
/// histogram, maximizing captured counts (earliest start wins ties).
/// Returns the window and the captured fraction of total counts.
pub fn select_window(reference: &Histogram, width_ns: f64) -> Result<(CountWindow, f64)> {
    let nbins = (width_ns / reference.bin_width_ns).round() as usize;
    if nbins == 0 || nbins > reference.counts.len() {
        return Err(Error::Validation(format!(
            "window width {width_ns} ns does not fit the histogram span"
        )));
    }
    let total = reference.total_counts();
    if total <= 0.0 {
        return Err(Error::Validation(
            "reference histogram has no counts".into(),
        ));
    }
    let mut acc: f64 = reference.counts[..nbins].iter().sum();
    let mut best = acc;
    let mut best_start = 0usize;
    for k in nbins..reference.counts.len() {
        acc += reference.counts[k] - reference.counts[k - nbins];
        if acc > best {
            best = acc;
            best_start = k - nbins + 1;
        }
    }
    Ok((
        CountWindow {
            start_ns: reference.t_start_ns + best_start as f64 * reference.bin_width_ns,
            width_ns: nbins as f64 * reference.bin_width_ns,
        },
        best / total,
    ))
}

/// Background-subtracted photon area in the window:
/// area = N_win - rate * width, sigma^2 = N_win + var(rate) * width^2.
/// Negative areas are legitimate noise fluctuations and are kept.
pub fn photon_area(h: &Histogram, win: &CountWindow, bg: (f64, f64)) -> Result<PhotonArea> {
    if win.start_ns < h.t_start_ns || win.end_ns() > h.span_ns() + 1e-9 {
        return Err(Error::Validation(format!(
            "window [{}, {}) outside histogram span",
            win.start_ns,
            win.end_ns()
        )));
    }
    let n_win = h.window_counts(win.start_ns, win.width_ns);
    let (rate, rate_var) = bg;
    Ok(PhotonArea {
        area: n_win - rate * win.width_ns,
        sigma: (n_win + rate_var * win.width_ns * win.width_ns).sqrt(),
    })
}

/// Efficiency-corrected splitting fractions with first-order error
/// propagation:
///
/// s1 = A1 / (A1 + rho A2),
/// sigma_s1^2 = [(rho A2)^2 s1'^2 + (rho A1)^2 s2'^2 + (A1 A2)^2 srho^2]
///              / (A1 + rho A2)^4.
///
/// rho = eta1/eta2 deflates port 1's relative weight (detector 1 is the
/// more efficient one). Worked example: raw areas (113, 100) with
/// rho = 1.13 correct to s1 = 113 / (113 + 113) = 0.5.
pub fn splitting_ratio(
    a1: &PhotonArea,
    a2: &PhotonArea,
    eff_ratio: f64,
    eff_ratio_sigma: f64,
) -> Result<SplittingEstimate> {
    if !(eff_ratio > 0.0) || eff_ratio_sigma < 0.0 {
        return Err(Error::Domain(format!(
            "efficiency ratio must be positive (got {eff_ratio}), its sigma non-negative"
        )));
    }
    let denom = a1.area + eff_ratio * a2.area;
    if denom <= 0.0 {
        return Err(Error::Validation(
            "no signal: corrected total area is non-positive".into(),
        ));
    }
    let s1 = a1.area / denom;
    let var = ((eff_ratio * a2.area * a1.sigma).powi(2)
        + (eff_ratio * a1.area * a2.sigma).powi(2)
        + (a1.area * a2.area * eff_ratio_sigma).powi(2))
        / denom.powi(4);
    let sigma = var.sqrt();
    Ok(SplittingEstimate {
        s1,
        s2: 1.0 - s1,
        sigma1: sigma,
        sigma2: sigma,
        eff_ratio_used: eff_ratio,
    })
}

/// Pull of one measured splitting against the classical-laser model curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PullPoint {
    pub current_ma: f64,
    pub measured_s1: f64,
    pub model_s1: f64,
    pub pull: f64,
}

/// Compare measured splitting estimates against the model fractions at the
/// same currents: pull = (s_measured - s_model) / sigma.
pub fn compare_to_classical(
    estimates: &[(f64, SplittingEstimate)],
    model: &CircuitModel<f64>,
) -> Result<Vec<PullPoint>> {
    if estimates.is_empty() {
        return Err(Error::Validation("no estimates to compare".into()));
    }
    estimates
        .iter()
        .map(|&(current_ma, est)| {
            let (f1, _) = model.fractions_at_current(current_ma)?;
            let pull = if est.sigma1 > 0.0 {
                (est.s1 - f1) / est.sigma1
            } else if est.s1 == f1 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(PullPoint {
                current_ma,
                measured_s1: est.s1,
                model_s1: f1,
                pull,
            })
        })
        .collect()
}
