//! JSON run configurations mirroring the engine's flow configuration.

use anyhow::{bail, Context, Result};
use g2core::flow::{FlowConfig, FlowGauge, PARABOLIC_LAMBDA, PARABOLIC_MU};
use g2core::lattice::{random_exact_3form, FormField, LatticeSpec, TAU};
use g2core::pform::standard_phi;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatticeFile {
    pub active_axes: Vec<u8>,
    pub n: usize,
    /// One period per active axis; defaults to 2 pi everywhere.
    #[serde(default)]
    pub periods: Option<Vec<f64>>,
}

impl LatticeFile {
    pub fn build(&self) -> Result<LatticeSpec> {
        let periods = match &self.periods {
            Some(p) => p.clone(),
            None => vec![TAU; self.active_axes.len()],
        };
        LatticeSpec::new(&self.active_axes, self.n, &periods)
            .map_err(|e| anyhow::anyhow!("lattice: {e}"))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialData {
    /// The standard structure plus a seeded random exact perturbation.
    PhiPlusExact {
        epsilon: f64,
        max_mode: i32,
        seed: u64,
    },
    /// A binary snapshot file.
    File { path: String },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GaugeSpec {
    Plain,
    Deturck { lambda: f64, mu: f64 },
}

impl Default for GaugeSpec {
    fn default() -> Self {
        GaugeSpec::Deturck {
            lambda: PARABOLIC_LAMBDA,
            mu: PARABOLIC_MU,
        }
    }
}

fn default_dt_safety() -> f64 {
    0.1
}

fn default_snapshot_every() -> usize {
    1
}

fn default_record_stages() -> bool {
    true
}

/// On-disk flow configuration. `a_constant: null` calibrates on the fly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowFile {
    pub lattice: LatticeFile,
    pub initial: InitialData,
    #[serde(default = "default_dt_safety")]
    pub dt_safety: f64,
    pub t_end: f64,
    #[serde(default)]
    pub gauge: GaugeSpec,
    #[serde(default)]
    pub a_constant: Option<f64>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default = "default_record_stages")]
    pub record_stages: bool,
}

impl FlowFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: FlowFile = serde_json::from_str(&text).context("parsing config JSON")?;
        if cfg.t_end <= 0.0 {
            bail!("t_end must be positive");
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        match &self.initial {
            InitialData::PhiPlusExact { seed, .. } => *seed,
            InitialData::File { .. } => 0,
        }
    }

    pub fn initial_field(&self, spec: &LatticeSpec) -> Result<FormField> {
        match &self.initial {
            InitialData::PhiPlusExact {
                epsilon,
                max_mode,
                seed,
            } => {
                let theta = random_exact_3form(spec, *epsilon, *max_mode, *seed)
                    .map_err(|e| anyhow::anyhow!("initial data: {e}"))?;
                Ok(FormField::constant(spec, &standard_phi()).add(&theta))
            }
            InitialData::File { path } => {
                let field = crate::formats::read_field(Path::new(path))?;
                if field.spec != *spec {
                    bail!("snapshot lattice does not match the configured lattice");
                }
                Ok(field)
            }
        }
    }

    /// Resolve into an engine configuration; calibrates the divergence
    /// constant when none was given.
    pub fn build(&self) -> Result<(FlowConfig, f64)> {
        let spec = self.lattice.build()?;
        let sigma0 = self.initial_field(&spec)?;
        let a = match self.a_constant {
            Some(a) => a,
            None => {
                let rep = g2core::torsion::calibrate_divergence_constant(&spec, 1, 4)
                    .map_err(|e| anyhow::anyhow!("calibration: {e}"))?;
                rep.a
            }
        };
        let gauge = match self.gauge {
            GaugeSpec::Plain => FlowGauge::Plain,
            GaugeSpec::Deturck { lambda, mu } => FlowGauge::DeTurck { lambda, mu },
        };
        Ok((
            FlowConfig {
                sigma0,
                dt_safety: self.dt_safety,
                t_end: self.t_end,
                gauge,
                a_constant: a,
                snapshot_every: self.snapshot_every,
                record_stages: self.record_stages,
            },
            a,
        ))
    }
}
