//! Monte Carlo simulation of the end-to-end experiment: attempt-cycled
//! single-photon emission, conversion and circuit losses, per-port
//! detection with efficiency mismatch, dark counts, and a reference
//! channel recording the unconverted temporal shape.
//!
//! Determinism contract: every attempt draws from its own counter-based
//! RNG substream derived from the master seed, so the output stream is
//! identical for a given (seed, config, attempts) regardless of how the
//! attempts are batched across threads.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::xfer::CircuitModel;

/// Detection channels of the time-tag stream.
pub const CHANNEL_REFERENCE: u8 = 0;
pub const CHANNEL_PORT1: u8 = 1;
pub const CHANNEL_PORT2: u8 = 2;

/// Timing partition of one photon-production attempt, in nanoseconds.
/// cool + pump + wait + excite must equal the repetition period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptCycle {
    pub rep_rate_hz: f64,
    pub cool_ns: f64,
    pub pump_ns: f64,
    pub wait_ns: f64,
    pub excite_ns: f64,
}

impl AttemptCycle {
    /// Default partition: 780.64 kHz repetition, 320 ns dark wait, and the
    /// excitation segment filling the rest of the period.
    pub fn default_cycle() -> Self {
        let rep_rate_hz = 780.64e3;
        let period = 1e9 / rep_rate_hz;
        let (cool_ns, pump_ns, wait_ns) = (300.0, 60.0, 320.0);
        AttemptCycle {
            rep_rate_hz,
            cool_ns,
            pump_ns,
            wait_ns,
            excite_ns: period - cool_ns - pump_ns - wait_ns,
        }
    }

    pub fn period_ns(&self) -> f64 {
        1e9 / self.rep_rate_hz
    }

    /// Start of the excitation segment: cool, pump, dark wait, excite.
    pub fn excite_start_ns(&self) -> f64 {
        self.cool_ns + self.pump_ns + self.wait_ns
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate_hz > 0.0) {
            return Err(Error::Validation("repetition rate must be positive".into()));
        }
        for (name, v) in [
            ("cool_ns", self.cool_ns),
            ("pump_ns", self.pump_ns),
            ("wait_ns", self.wait_ns),
            ("excite_ns", self.excite_ns),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        let sum = self.cool_ns + self.pump_ns + self.wait_ns + self.excite_ns;
        if (sum - self.period_ns()).abs() > 1.0 {
            return Err(Error::Validation(format!(
                "cycle segments sum to {sum} ns but the period is {} ns",
                self.period_ns()
            )));
        }
        Ok(())
    }
}

/// Temporal density of the emitted photon within the attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmissionShape {
    /// t0 + Exp(tau).
    Exponential { tau_ns: f64, t0_ns: f64 },
    /// t0 + Exp(rise) + Exp(tau): exponential rise convolved with decay.
    RiseDecay { rise_ns: f64, tau_ns: f64, t0_ns: f64 },
}

impl EmissionShape {
    /// Decay constant for which a 32 ns window captures exactly 75% of an
    /// exponential pulse: 32 / ln 4.
    pub fn default_tau_ns() -> f64 {
        32.0 / 4f64.ln()
    }

    pub fn t0_ns(&self) -> f64 {
        match *self {
            EmissionShape::Exponential { t0_ns, .. } => t0_ns,
            EmissionShape::RiseDecay { t0_ns, .. } => t0_ns,
        }
    }

    /// Probability mass inside [0, horizon_ns); closed form.
    pub fn mass_within(&self, horizon_ns: f64) -> f64 {
        match *self {
            EmissionShape::Exponential { tau_ns, t0_ns } => {
                let span = horizon_ns - t0_ns;
                if span <= 0.0 {
                    0.0
                } else {
                    1.0 - (-span / tau_ns).exp()
                }
            }
            EmissionShape::RiseDecay { rise_ns, tau_ns, t0_ns } => {
                let span = horizon_ns - t0_ns;
                if span <= 0.0 {
                    0.0
                } else if (tau_ns - rise_ns).abs() < 1e-12 {
                    // Gamma(2, tau) limit.
                    1.0 - (1.0 + span / tau_ns) * (-span / tau_ns).exp()
                } else {
                    1.0 - (tau_ns * (-span / tau_ns).exp() - rise_ns * (-span / rise_ns).exp())
                        / (tau_ns - rise_ns)
                }
            }
        }
    }

    /// Normalized density at offset t from the trigger.
    pub fn density(&self, t_ns: f64) -> f64 {
        match *self {
            EmissionShape::Exponential { tau_ns, t0_ns } => {
                let dt = t_ns - t0_ns;
                if dt < 0.0 {
                    0.0
                } else {
                    (-dt / tau_ns).exp() / tau_ns
                }
            }
            EmissionShape::RiseDecay { rise_ns, tau_ns, t0_ns } => {
                let dt = t_ns - t0_ns;
                if dt < 0.0 {
                    0.0
                } else if (tau_ns - rise_ns).abs() < 1e-12 {
                    dt * (-dt / tau_ns).exp() / (tau_ns * tau_ns)
                } else {
                    ((-dt / tau_ns).exp() - (-dt / rise_ns).exp()) / (tau_ns - rise_ns)
                }
            }
        }
    }

    pub fn validate(&self, period_ns: f64) -> Result<()> {
        let (tau, rise, t0) = match *self {
            EmissionShape::Exponential { tau_ns, t0_ns } => (tau_ns, f64::NAN, t0_ns),
            EmissionShape::RiseDecay { rise_ns, tau_ns, t0_ns } => (tau_ns, rise_ns, t0_ns),
        };
        if !(tau > 0.0) {
            return Err(Error::Validation(format!("tau_ns must be > 0, got {tau}")));
        }
        if !rise.is_nan() && !(rise > 0.0) {
            return Err(Error::Validation(format!("rise_ns must be > 0, got {rise}")));
        }
        if t0 < 0.0 || t0 >= period_ns {
            return Err(Error::Validation(format!(
                "emission onset {t0} ns outside the {period_ns} ns period"
            )));
        }
        let mass = self.mass_within(period_ns);
        if 1.0 - mass > 1e-9 {
            return Err(Error::Validation(format!(
                "emission density leaves {:.3e} of its mass beyond the attempt period",
                1.0 - mass
            )));
        }
        Ok(())
    }
}

/// Draw an emission time from the shape, truncated to the attempt period.
pub fn sample_emission_time<R: Rng>(shape: &EmissionShape, period_ns: f64, rng: &mut R) -> f64 {
    loop {
        let t = match *shape {
            EmissionShape::Exponential { tau_ns, t0_ns } => {
                t0_ns + tau_ns * -(1.0 - rng.gen::<f64>()).ln()
            }
            EmissionShape::RiseDecay { rise_ns, tau_ns, t0_ns } => {
                t0_ns
                    + rise_ns * -(1.0 - rng.gen::<f64>()).ln()
                    + tau_ns * -(1.0 - rng.gen::<f64>()).ln()
            }
        };
        if t < period_ns {
            return t;
        }
    }
}

/// Multiplicative probability budget of the photon pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineBudget {
    /// Photon emitted AND collected/polarized into the conversion path,
    /// per attempt. Not published; free absolute-rate knob.
    pub p_emit_collect: f64,
    /// Collection probability of the back-window reference branch.
    pub p_ref_collect: f64,
    /// First-stage frequency conversion efficiency (493 -> 780 nm).
    pub qfc1: f64,
    /// Second-stage efficiency (780 -> 1534 nm), filter and etalon included.
    pub qfc2: f64,
    /// Detector efficiencies at ports 1 and 2 (eta1/eta2 = 1.13 nominal).
    pub eta1: f64,
    pub eta2: f64,
    /// Dark-count rate per channel (reference, port 1, port 2), in Hz.
    pub dark_rate_hz: [f64; 3],
}

impl Default for PipelineBudget {
    fn default() -> Self {
        PipelineBudget {
            p_emit_collect: 0.1,
            p_ref_collect: 0.05,
            qfc1: 0.20,
            qfc2: 0.25,
            eta1: 0.9,
            eta2: 0.9 / 1.13,
            dark_rate_hz: [50.0, 10.0, 10.0],
        }
    }
}

impl PipelineBudget {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("qfc1", self.qfc1),
            ("qfc2", self.qfc2),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Validation(format!(
                    "{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        for (name, v) in [
            ("p_emit_collect", self.p_emit_collect),
            ("p_ref_collect", self.p_ref_collect),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        for r in self.dark_rate_hz {
            if r < 0.0 || !r.is_finite() {
                return Err(Error::Validation(format!(
                    "dark rate must be >= 0, got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// One detection event, timed relative to the attempt trigger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeTagEvent {
    pub channel: u8,
    pub attempt: u64,
    pub t_ns: f64,
}

/// Deterministic simulated detection record.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    pub events: Vec<TimeTagEvent>,
    pub seed: u64,
    pub attempts: u64,
    pub config_sha256: String,
}

/// Per-attempt click probability for the two output ports:
/// p_i = p_emit_collect * qfc1 * qfc2 * L * fraction_i * eta_i.
pub fn per_port_click_probability(
    budget: &PipelineBudget,
    model: &CircuitModel<f64>,
    current_ma: f64,
) -> Result<(f64, f64)> {
    budget.validate()?;
    let (f1, f2) = model.fractions_at_current(current_ma)?;
    let base = budget.p_emit_collect * budget.qfc1 * budget.qfc2 * model.loss();
    let p1 = base * f1 * budget.eta1;
    let p2 = base * f2 * budget.eta2;
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!(
                "click probability {p} outside [0, 1]"
            )));
        }
    }
    Ok((p1, p2))
}

/// Expected counts per second on (reference, port 1, port 2), dark rates
/// included. Closed-form companion of the Monte Carlo.
pub fn expected_rates(
    cycle: &AttemptCycle,
    budget: &PipelineBudget,
    model: &CircuitModel<f64>,
    current_ma: f64,
) -> Result<[f64; 3]> {
    let (p1, p2) = per_port_click_probability(budget, model, current_ma)?;
    let p_ref = budget.p_emit_collect * budget.p_ref_collect;
    Ok([
        cycle.rep_rate_hz * p_ref + budget.dark_rate_hz[0],
        cycle.rep_rate_hz * p1 + budget.dark_rate_hz[1],
        cycle.rep_rate_hz * p2 + budget.dark_rate_hz[2],
    ])
}

/// Everything the simulator needs for one run at a fixed heater current.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub cycle: AttemptCycle,
    pub shape: EmissionShape,
    pub budget: PipelineBudget,
    pub model: CircuitModel<f64>,
    pub current_ma: f64,
}

impl SimSetup {
    pub fn validate(&self) -> Result<()> {
        self.cycle.validate()?;
        self.shape.validate(self.cycle.period_ns())?;
        self.budget.validate()?;
        self.model.fractions_at_current(self.current_ma)?;
        Ok(())
    }
}

/// Run the attempt-cycled Monte Carlo.
///
/// Per attempt: Bernoulli emission-and-collection; one shared emission
/// time; the reference branch clicks with its own collection probability;
/// the converted branch survives both conversion stages and the circuit
/// loss, routes to exactly one port with the circuit fractions, and is
/// detected with the port's efficiency. Dark counts are a homogeneous
/// Poisson process per channel over the full period.
pub fn run_experiment(
    setup: &SimSetup,
    master_seed: u64,
    n_attempts: u64,
    config_sha256: &str,
) -> Result<TimeTagStream> {
    setup.validate()?;
    let period = setup.cycle.period_ns();
    let (f1, _f2) = setup.model.fractions_at_current(setup.current_ma)?;
    let budget = &setup.budget;
    let p_emit = budget.p_emit_collect;
    let p_survive = budget.qfc1 * budget.qfc2 * setup.model.loss();
    let dark_mean: Vec<f64> = budget
        .dark_rate_hz
        .iter()
        .map(|r| r * period * 1e-9)
        .collect();
    let dark_dists: Vec<Option<Poisson<f64>>> = dark_mean
        .iter()
        .map(|&m| if m > 0.0 { Some(Poisson::new(m).unwrap()) } else { None })
        .collect();

    let base_rng = ChaCha8Rng::seed_from_u64(master_seed);

    let simulate_attempt = |attempt: u64| -> Vec<TimeTagEvent> {
        let mut rng = base_rng.clone();
        rng.set_stream(attempt.wrapping_add(1));
        let mut events: Vec<TimeTagEvent> = Vec::new();

        if p_emit > 0.0 && rng.gen::<f64>() < p_emit {
            let t_emit = sample_emission_time(&setup.shape, period, &mut rng);
            if budget.p_ref_collect > 0.0 && rng.gen::<f64>() < budget.p_ref_collect {
                events.push(TimeTagEvent { channel: CHANNEL_REFERENCE, attempt, t_ns: t_emit });
            }
            if rng.gen::<f64>() < p_survive {
                // Route to exactly one port, then detect.
                let (channel, eta) = if rng.gen::<f64>() < f1 {
                    (CHANNEL_PORT1, budget.eta1)
                } else {
                    (CHANNEL_PORT2, budget.eta2)
                };
                if rng.gen::<f64>() < eta {
                    events.push(TimeTagEvent { channel, attempt, t_ns: t_emit });
                }
            }
        }

        for (ch, dist) in dark_dists.iter().enumerate() {
            if let Some(d) = dist {
                let n = d.sample(&mut rng) as u64;
                for _ in 0..n {
                    events.push(TimeTagEvent {
                        channel: ch as u8,
                        attempt,
                        t_ns: rng.gen::<f64>() * period,
                    });
                }
            }
        }

        events.sort_by(|a, b| {
            a.t_ns
                .total_cmp(&b.t_ns)
                .then(a.channel.cmp(&b.channel))
        });
        events
    };

    let events: Vec<TimeTagEvent> = (0..n_attempts)
        .into_par_iter()
        .map(simulate_attempt)
        .flatten_iter()
        .collect();

    Ok(TimeTagStream {
        events,
        seed: master_seed,
        attempts: n_attempts,
        config_sha256: config_sha256.to_string(),
    })
}
