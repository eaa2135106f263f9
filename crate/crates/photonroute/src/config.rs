//! Run configuration (TOML), content hashing, and run manifests.
//!
//! One config file drives every command; CLI flags override individual
//! keys. The config hash is the SHA-256 of the canonical JSON rendering
//! of the validated config, so it is stable across whitespace, comments,
//! and key order in the TOML source.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calib::{
    fit_couplers_from_extinction, fit_phase_calibration, Anchor, AnchorObservable, AnchorSet,
    PhaseCalibration, PhaseFitReport,
};
use crate::error::{Error, Result};
use crate::source::{AttemptCycle, EmissionShape, PipelineBudget, SimSetup};
use crate::xfer::{CircuitModel, CouplerSpec};

/// Calibration anchor as written in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "observable", rename_all = "snake_case")]
pub enum AnchorConfig {
    Port1Max { current_ma: f64 },
    Port2NearMax { current_ma: f64 },
    Split5050 { current_ma: f64 },
    PortFraction { current_ma: f64, port: u8, value: f64 },
}

impl AnchorConfig {
    fn to_anchor(self) -> Result<Anchor<f64>> {
        Ok(match self {
            AnchorConfig::Port1Max { current_ma } => Anchor {
                current_ma,
                observable: AnchorObservable::Port1Max,
            },
            AnchorConfig::Port2NearMax { current_ma } => Anchor {
                current_ma,
                observable: AnchorObservable::Port2NearMax,
            },
            AnchorConfig::Split5050 { current_ma } => Anchor {
                current_ma,
                observable: AnchorObservable::Split5050,
            },
            AnchorConfig::PortFraction { current_ma, port, value } => {
                if port != 1 && port != 2 {
                    return Err(Error::Validation(format!(
                        "anchor port must be 1 or 2, got {port}"
                    )));
                }
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::Validation(format!(
                        "anchor fraction must lie in [0, 1], got {value}"
                    )));
                }
                Anchor {
                    current_ma,
                    observable: AnchorObservable::PortFraction { port, value },
                }
            }
        })
    }
}

/// Device section: either direct coupler ratios or extinction-ratio
/// anchors to fit them from, plus the phase-calibration anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceConfig {
    /// Direct cross-coupling ratios; take precedence over extinction fits.
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    /// Port extinction ratios in dB, used when r1/r2 are absent.
    pub extinction1_db: Option<f64>,
    pub extinction2_db: Option<f64>,
    pub anchors: Vec<AnchorConfig>,
    /// End-to-end circuit transmission at the operating wavelength.
    pub loss: f64,
    /// Largest heater current the calibration is valid for, in mA.
    pub i_max_ma: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            r1: None,
            r2: None,
            extinction1_db: Some(10.2),
            extinction2_db: Some(7.6),
            anchors: vec![
                AnchorConfig::Port1Max { current_ma: 0.0 },
                AnchorConfig::Split5050 { current_ma: 11.05 },
                AnchorConfig::Port2NearMax { current_ma: 16.6 },
            ],
            loss: 0.31,
            i_max_ma: 16.6,
        }
    }
}

/// Source section: attempt timing, emission shape, and the loss/detection
/// budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceConfig {
    pub cycle: AttemptCycle,
    pub shape: EmissionShape,
    pub budget: PipelineBudget,
}

impl Default for SourceConfig {
    fn default() -> Self {
        let cycle = AttemptCycle::default_cycle();
        SourceConfig {
            cycle,
            shape: EmissionShape::Exponential {
                tau_ns: EmissionShape::default_tau_ns(),
                t0_ns: cycle.excite_start_ns(),
            },
            budget: PipelineBudget::default(),
        }
    }
}

/// Analysis section: binning, window width, background placement, and the
/// detector-efficiency correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub bin_width_ns: f64,
    pub window_width_ns: f64,
    /// Guard stripped around the window before background estimation.
    pub background_guard_ns: f64,
    /// Detector efficiency ratio eta1/eta2 applied in splitting_ratio.
    pub eff_ratio: f64,
    /// Its systematic uncertainty; 0 keeps the error bars shot-noise only.
    pub eff_ratio_sigma: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            bin_width_ns: 1.6,
            window_width_ns: 32.0,
            background_guard_ns: 50.0,
            eff_ratio: 1.13,
            eff_ratio_sigma: 0.0,
        }
    }
}

/// Sweep section: heater currents to evaluate, in mA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub currents_ma: Vec<f64>,
    /// Step used when currents_ma is empty: 0 to i_max in this increment.
    pub step_ma: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { currents_ma: Vec::new(), step_ma: 0.1 }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub device: DeviceConfig,
    pub source: SourceConfig,
    pub analysis: AnalysisConfig,
    pub sweep: SweepConfig,
    pub seed: u64,
    pub n_attempts: u64,
    /// Heater current for single-point commands, in mA.
    pub current_ma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            device: DeviceConfig::default(),
            source: SourceConfig::default(),
            analysis: AnalysisConfig::default(),
            sweep: SweepConfig::default(),
            seed: 1,
            n_attempts: 1_000_000,
            current_ma: 0.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.device;
        match (d.r1, d.r2, d.extinction1_db, d.extinction2_db) {
            (Some(r1), Some(r2), _, _) => {
                CouplerSpec::new(r1)?;
                CouplerSpec::new(r2)?;
            }
            (None, None, Some(e1), Some(e2)) => {
                if e1 < 0.0 || e2 < 0.0 {
                    return Err(Error::Validation(format!(
                        "extinction ratios must be non-negative dB, got {e1}, {e2}"
                    )));
                }
            }
            _ => {
                return Err(Error::Validation(
                    "device needs either both r1 and r2 or both extinction ratios".into(),
                ))
            }
        }
        if !(d.loss > 0.0 && d.loss <= 1.0) {
            return Err(Error::Validation(format!(
                "loss must lie in (0, 1], got {}",
                d.loss
            )));
        }
        if !(d.i_max_ma > 0.0) {
            return Err(Error::Validation(format!(
                "i_max_ma must be positive, got {}",
                d.i_max_ma
            )));
        }
        for a in &d.anchors {
            a.to_anchor()?;
        }
        self.source.cycle.validate()?;
        self.source.shape.validate(self.source.cycle.period_ns())?;
        self.source.budget.validate()?;
        let an = &self.analysis;
        if !(an.bin_width_ns > 0.0) || !(an.window_width_ns > 0.0) {
            return Err(Error::Validation(
                "bin and window widths must be positive".into(),
            ));
        }
        if an.background_guard_ns < 0.0 {
            return Err(Error::Validation("background guard must be >= 0".into()));
        }
        if !(an.eff_ratio > 0.0) || an.eff_ratio_sigma < 0.0 {
            return Err(Error::Validation(format!(
                "eff_ratio must be positive (got {}), its sigma non-negative",
                an.eff_ratio
            )));
        }
        if !(self.sweep.step_ma > 0.0) {
            return Err(Error::Validation("sweep step must be positive".into()));
        }
        for &i in &self.sweep.currents_ma {
            if i < 0.0 || i > d.i_max_ma {
                return Err(Error::Validation(format!(
                    "sweep current {i} mA outside [0, {}]",
                    d.i_max_ma
                )));
            }
        }
        if self.current_ma < 0.0 || self.current_ma > d.i_max_ma {
            return Err(Error::Validation(format!(
                "current {} mA outside [0, {}]",
                self.current_ma, d.i_max_ma
            )));
        }
        if self.n_attempts == 0 {
            return Err(Error::Validation("n_attempts must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON rendering; stable across TOML
    /// formatting differences.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }

    /// Fit the coupler pair from the device section.
    pub fn couplers(&self) -> Result<(CouplerSpec<f64>, CouplerSpec<f64>)> {
        let d = &self.device;
        match (d.r1, d.r2) {
            (Some(r1), Some(r2)) => Ok((CouplerSpec::new(r1)?, CouplerSpec::new(r2)?)),
            _ => fit_couplers_from_extinction(
                d.extinction1_db.ok_or_else(|| {
                    Error::Validation("device is missing coupler parameters".into())
                })?,
                d.extinction2_db.ok_or_else(|| {
                    Error::Validation("device is missing coupler parameters".into())
                })?,
            ),
        }
    }

    /// Fit the full circuit model from the device section.
    pub fn fit_model(&self) -> Result<(CircuitModel<f64>, PhaseFitReport<f64>)> {
        let (c1, c2) = self.couplers()?;
        let anchors = AnchorSet(
            self.device
                .anchors
                .iter()
                .map(|a| a.to_anchor())
                .collect::<Result<Vec<_>>>()?,
        );
        let (calib, report) = fit_phase_calibration(&anchors, (c1, c2), self.device.i_max_ma)?;
        Ok((CircuitModel::new(c1, c2, calib, self.device.loss)?, report))
    }

    /// Assemble the simulation setup at the configured current.
    pub fn sim_setup(&self) -> Result<SimSetup> {
        let (model, _) = self.fit_model()?;
        let setup = SimSetup {
            cycle: self.source.cycle,
            shape: self.source.shape,
            budget: self.source.budget,
            model,
            current_ma: self.current_ma,
        };
        setup.validate()?;
        Ok(setup)
    }

    /// Sweep currents: the explicit list, or the dense default grid.
    pub fn sweep_currents(&self) -> Vec<f64> {
        if self.sweep.currents_ma.is_empty() {
            crate::calib::dense_currents(self.device.i_max_ma, self.sweep.step_ma)
        } else {
            self.sweep.currents_ma.clone()
        }
    }
}

/// Fitted model parameters in file form (`fit` output, `sweep`/`simulate`
/// input when present).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub r1: f64,
    pub r2: f64,
    pub phi0_rad: f64,
    pub coefficient_rad_per_ma2: f64,
    pub i_max_ma: f64,
    pub loss: f64,
    pub residual_ss: f64,
}

impl ModelFile {
    pub fn from_model(model: &CircuitModel<f64>, residual_ss: f64) -> Self {
        ModelFile {
            r1: model.c1.r(),
            r2: model.c2.r(),
            phi0_rad: model.calib.phi0(),
            coefficient_rad_per_ma2: model.calib.coefficient(),
            i_max_ma: model.calib.i_max(),
            loss: model.loss(),
        residual_ss,
        }
    }

    pub fn to_model(&self) -> Result<CircuitModel<f64>> {
        CircuitModel::new(
            CouplerSpec::new(self.r1)?,
            CouplerSpec::new(self.r2)?,
            PhaseCalibration::new(self.phi0_rad, self.coefficient_rad_per_ma2, self.i_max_ma)?,
            self.loss,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse { line: 0, message: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, toml::to_string_pretty(self).expect("model serializes"))?;
        Ok(())
    }
}

/// Output file entry of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

/// Record of one run: enough to reproduce its outputs byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            config_sha256: config.content_hash(),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        }
    }

    /// Hash a freshly written output file and record it.
    pub fn record(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.outputs.push(ManifestEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("manifest serializes"))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: 0, message: e.to_string() })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(digest: &[u8]) -> String {
    let mut s = String::with_capacity(digest.len() * 2);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
