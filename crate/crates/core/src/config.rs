//! Declarative run configuration shared by all subcommands.
//!
//! A config is a TOML document: plant, weights, initial law, a list of
//! designs and the campaign knobs. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mat_from_rows, Mat, SymMat};
use crate::lmi::Formulation;
use crate::lqr::LqrWeights;
use crate::sdp::SdpOptions;
use crate::simulator::{CampaignConfig, CampaignDesign, ControlLaw, Plant, PlantKind};
use crate::sysid::{Centering, LinearModel};

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub kind: PlantKind,
    pub a: Rows,
    pub b: Rows,
    pub w: Rows,
    #[serde(default)]
    pub theta: f64,
}

/// `q` and `r` default to identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
    pub v: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialLawConfig {
    pub k: Rows,
    /// Exploration covariance; defaults to the design `v`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignEntry {
    pub label: String,
    pub formulation: Formulation,
}

/// Layout of figure exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    /// Phase-1 and phase-2 state clouds per design.
    Scatter,
    /// `x1` over time: the experiment plus one series per design.
    Series,
}

fn default_horizon() -> usize {
    2000
}
fn default_threshold() -> f64 {
    50.0
}
fn default_attempts() -> usize {
    1000
}
fn default_tol() -> f64 {
    SdpOptions::default().tol
}
fn default_reps() -> usize {
    1
}
fn is_default<T: Default + PartialEq>(t: &T) -> bool {
    *t == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_threshold")]
    pub stability_threshold: f64,
    #[serde(default = "default_attempts")]
    pub max_phase1_attempts: usize,
    #[serde(default, skip_serializing_if = "is_default")]
    pub centering: Centering,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Repetitions whose trajectories a campaign writes as CSV.
    #[serde(default, skip_serializing_if = "is_default")]
    pub dump_trajectories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure: Option<FigureKind>,
    pub plant: PlantConfig,
    pub weights: WeightsConfig,
    pub initial_law: InitialLawConfig,
    pub designs: Vec<DesignEntry>,
}

fn sym(rows: &Rows, what: &str) -> Result<SymMat> {
    let m = mat_from_rows(rows).map_err(|e| Error::InvalidParameter(format!("{what}: {e}")))?;
    SymMat::new(m).map_err(|e| Error::InvalidParameter(format!("{what}: {e}")))
}

fn mat(rows: &Rows, what: &str) -> Result<Mat> {
    mat_from_rows(rows).map_err(|e| Error::InvalidParameter(format!("{what}: {e}")))
}

impl RunConfig {
    /// Parse and validate.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Canonical TOML form.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidParameter("solver_tol must be positive".into()));
        }
        for d in &self.designs {
            d.formulation.validate()?;
        }
        let mut labels: Vec<&str> = self.designs.iter().map(|d| d.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("design labels must be unique".into()));
        }
        self.campaign()?.validate()
    }

    pub fn model(&self) -> Result<LinearModel> {
        let p = &self.plant;
        LinearModel::new(mat(&p.a, "plant.a")?, mat(&p.b, "plant.b")?, sym(&p.w, "plant.w")?)
    }

    pub fn plant(&self) -> Result<Plant> {
        Plant::new(self.plant.kind, self.model()?, self.plant.theta)
    }

    pub fn weights(&self) -> Result<LqrWeights> {
        let model = self.model()?;
        let w = &self.weights;
        let q = match &w.q {
            Some(q) => sym(q, "weights.q")?,
            None => SymMat::identity(model.state_dim()),
        };
        let r = match &w.r {
            Some(r) => sym(r, "weights.r")?,
            None => SymMat::identity(model.input_dim()),
        };
        LqrWeights::new(q, r, sym(&w.v, "weights.v")?)
    }

    pub fn initial_law(&self) -> Result<ControlLaw> {
        let v = self.initial_law.v.as_ref().unwrap_or(&self.weights.v);
        ControlLaw::new(mat(&self.initial_law.k, "initial_law.k")?, sym(v, "initial_law.v")?)
    }

    pub fn solver_options(&self) -> SdpOptions {
        SdpOptions { tol: self.solver_tol, ..SdpOptions::default() }
    }

    pub fn campaign(&self) -> Result<CampaignConfig> {
        Ok(CampaignConfig {
            plant: self.plant()?,
            initial_law: self.initial_law()?,
            horizon: self.horizon,
            weights: self.weights()?,
            designs: self
                .designs
                .iter()
                .map(|d| CampaignDesign { label: d.label.clone(), formulation: d.formulation })
                .collect(),
            repetitions: self.repetitions,
            stability_threshold: self.stability_threshold,
            master_seed: self.seed,
            solver: self.solver_options(),
            max_phase1_attempts: self.max_phase1_attempts,
            centering: self.centering,
        })
    }
}
