//! TOML campaign configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, PropagationModel, RxGrid, SynthConfig};
use crate::features::{AodSelection, IsolationWindow};
use crate::geometry::ScenePlan;
use crate::positioning::{ResidualWeights, ScenarioId, SolverSettings};
use crate::sage::SageConfig;
use crate::{Error, Result};

/// The shipped default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub bs_elements: usize,
    pub ris_elements: usize,
    /// RX grid spacing [m]; [`RxGrid::for_carrier`] when absent.
    #[serde(default)]
    pub rx_spacing: Option<f64>,
    pub snr_db: f64,
    #[serde(default)]
    pub ue_array_orientation: f64,
    /// Static BS pointing while each RIS sweeps [deg].
    pub ris_bs_pointing: Vec<f64>,
    pub propagation: PropagationModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSection {
    #[serde(default)]
    pub isolation: IsolationWindow,
    #[serde(default)]
    pub selection: AodSelection,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverSection {
    #[serde(default, flatten)]
    pub settings: SolverSettings,
    #[serde(default)]
    pub weights: ResidualWeights,
}

/// Campaign configuration. The scene is given inline (`[scene]`) or by a
/// `scene_file` path relative to the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub scenarios: Vec<String>,
    #[serde(default)]
    pub scene: Option<ScenePlan>,
    #[serde(default)]
    pub scene_file: Option<PathBuf>,
    pub synth: SynthSection,
    #[serde(default)]
    pub sage: SageConfig,
    #[serde(default)]
    pub features: FeatureSection,
    #[serde(default)]
    pub solver: SolverSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl CampaignConfig {
    /// The built-in default campaign.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CONFIG, None).expect("shipped default config is valid")
    }

    /// Parses and validates a configuration; `base` resolves `scene_file`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: CampaignConfig = toml::from_str(text)?;
        match (&cfg.scene, &cfg.scene_file) {
            (Some(_), Some(_)) => {
                return Err(Error::config("give either [scene] or scene_file, not both"))
            }
            (None, None) => return Err(Error::config("missing [scene] or scene_file")),
            (None, Some(file)) => {
                let path = base.map_or_else(|| file.clone(), |b| b.join(file));
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::config(format!("scene file {}: {e}", path.display())))?;
                cfg.scene = Some(toml::from_str(&text)?);
            }
            (Some(_), None) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    pub fn scene(&self) -> &ScenePlan {
        self.scene.as_ref().expect("scene resolved at parse time")
    }

    pub fn scenario_ids(&self) -> Result<Vec<ScenarioId>> {
        self.scenarios.iter().map(|s| s.parse()).collect()
    }

    pub fn synth_config(&self) -> SynthConfig {
        let carrier = self.scene().band.carrier;
        let s = &self.synth;
        SynthConfig {
            bs_array: ArrayGeometry::half_wavelength(s.bs_elements, carrier),
            ris_array: ArrayGeometry::half_wavelength(s.ris_elements, carrier),
            rx_grid: s.rx_spacing.map_or_else(
                || RxGrid::for_carrier(carrier),
                |spacing| RxGrid { spacing },
            ),
            propagation: s.propagation,
            snr_db: s.snr_db,
            ue_array_orientation: s.ue_array_orientation,
            ris_bs_pointing: s.ris_bs_pointing.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scene = self
            .scene
            .as_ref()
            .ok_or_else(|| Error::config("scene not resolved"))?;
        scene.validate()?;
        let ids = self.scenario_ids()?;
        if ids.is_empty() {
            return Err(Error::config("empty scenario list"));
        }
        if self.synth.ris_bs_pointing.len() != scene.ris.len() {
            return Err(Error::config(format!(
                "{} static BS pointings for {} RIS",
                self.synth.ris_bs_pointing.len(),
                scene.ris.len()
            )));
        }
        if self.synth.ris_bs_pointing.iter().any(|p| !(p.abs() < 90.0)) {
            return Err(Error::config("static BS pointing must lie in (-90, 90)"));
        }
        if !self.synth.snr_db.is_finite() {
            return Err(Error::config("snr_db must be finite"));
        }
        let p = &self.synth.propagation;
        let amplitudes = [
            p.dp_gain,
            p.ris_gain,
            p.clutter_gain,
            p.clutter_decay,
            p.clutter_jitter_db,
        ];
        if amplitudes.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config(
                "propagation parameters must be finite and >= 0",
            ));
        }
        let synth = self.synth_config();
        synth.bs_array.validate()?;
        synth.ris_array.validate()?;
        if !(synth.rx_grid.spacing > 0.0) {
            return Err(Error::config("rx_spacing must be positive"));
        }
        self.sage.validate()?;
        if scene
            .band
            .index_range(self.sage.subband.0, self.sage.subband.1)
            .is_none()
        {
            return Err(Error::config("SAGE sub-band outside the measured band"));
        }
        let w = &self.features.isolation;
        if !(w.distance > 0.0 && w.angle > 0.0) {
            return Err(Error::config("isolation window must be positive"));
        }
        let s = &self.solver.settings;
        if s.max_iters == 0 || s.starts == 0 || !(s.step_tol > 0.0) || !(s.fd_step > 0.0) {
            return Err(Error::config("solver settings must be positive"));
        }
        let w = &self.solver.weights;
        if !(w.angle > 0.0 && w.distance > 0.0) {
            return Err(Error::config("residual weights must be positive"));
        }
        Ok(())
    }
}
