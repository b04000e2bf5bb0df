//! Project configuration (TOML) and the bundled presets.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::from_rows;
use crate::lowgain::default_pole_constants;
use crate::lti::{ExogenousSignal, Harmonic, StateSpaceModel};
use crate::servo::Exosystem;

const FOUR_TANK: &str = include_str!("../presets/four_tank.toml");
const FOUR_TANK_TIME_SCALED: &str = include_str!("../presets/four_tank_time_scaled.toml");

/// Names accepted by [`ProjectConfig::preset`] and `plant.preset`.
pub const PRESETS: [&str; 2] = ["four-tank", "four-tank-time-scaled"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub name: String,
    pub plant: PlantSpec,
    pub exosystem: ExosystemSpec,
    pub disturbance: DisturbanceSpec,
    pub design: DesignSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub davison: Option<DavisonSpec>,
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlantSpec {
    Preset {
        preset: String,
    },
    Matrices {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bd: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dd: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExosystemSpec {
    pub frequencies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub constant: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub harmonics: Vec<HarmonicSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSpec {
    pub omega: f64,
    pub sin: Vec<f64>,
    pub cos: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Analytic,
    Identified,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl EpsGrid {
    /// Parses `start:stop:points`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("eps grid `{text}` is not start:stop:points")));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{s}` in eps grid")))
        };
        let points = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("bad point count `{}` in eps grid", parts[2])))?;
        let grid = EpsGrid {
            start: num(parts[0])?,
            stop: num(parts[1])?,
            points,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Config("eps grid is empty".into()));
        }
        if !(self.start > 0.0) || !(self.stop >= self.start) || !self.stop.is_finite() {
            return Err(Error::Config(format!(
                "eps grid needs 0 < start <= stop, got {}:{}",
                self.start, self.stop
            )));
        }
        Ok(())
    }

    /// Log-spaced values from `start` to `stop` inclusive.
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let (a, b) = (self.start.ln(), self.stop.ln());
        (0..self.points)
            .map(|i| {
                // endpoints are returned exactly
                if i == 0 {
                    self.start
                } else if i + 1 == self.points {
                    self.stop
                } else {
                    (a + (b - a) * i as f64 / (self.points - 1) as f64).exp()
                }
            })
            .collect()
    }
}

fn default_points() -> usize {
    crate::lowgain::DEFAULT_GRID_POINTS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    pub eps: f64,
    #[serde(default)]
    pub source: DataSource,
    #[serde(default = "default_points")]
    pub certificate_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<EpsGrid>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DavisonSpec {
    pub eps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0_variant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning_grid: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: "out".into() }
    }
}

fn preset_text(name: &str) -> Result<&'static str> {
    match name {
        "four-tank" => Ok(FOUR_TANK),
        "four-tank-time-scaled" => Ok(FOUR_TANK_TIME_SCALED),
        _ => Err(Error::Config(format!(
            "unknown preset `{name}` (available: {})",
            PRESETS.join(", ")
        ))),
    }
}

impl ProjectConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ProjectConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Loads a bundled preset when `spec` is `preset:<name>`, a file
    /// otherwise.
    pub fn load_spec(spec: &str) -> Result<Self> {
        match spec.strip_prefix("preset:") {
            Some(name) => Self::preset(name),
            None => Self::load(Path::new(spec)),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_toml(preset_text(name)?)
    }

    /// Checks every reference and dimension without running any numerics
    /// beyond the plant stability test.
    pub fn validate(&self) -> Result<()> {
        let plant = self.plant()?;
        let exo = self.exosystem()?;
        self.signal(&plant)?;
        let l = exo.harmonic_count();
        if let Some(k) = &self.design.k {
            if k.len() != l + 1 || k.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("design.k must hold {} positive values", l + 1)));
            }
        }
        if !(self.design.eps > 0.0) || !self.design.eps.is_finite() {
            return Err(Error::Config("design.eps must be positive".into()));
        }
        if self.design.certificate_points < 8 {
            return Err(Error::Config("design.certificate_points must be at least 8".into()));
        }
        if let Some(g) = &self.design.eps_grid {
            g.validate()?;
        }
        if let Some(dv) = &self.davison {
            if dv.eps.len() != l + 1 || dv.eps.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("davison.eps must hold {} positive values", l + 1)));
            }
            if dv.eps0_variant.is_some_and(|v| !(v > 0.0)) {
                return Err(Error::Config("davison.eps0_variant must be positive".into()));
            }
            if let Some(grid) = &dv.tuning_grid {
                if grid.is_empty() || grid.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::Config("davison.tuning_grid must hold positive values".into()));
                }
            }
        }
        let sim = self.simulation;
        if !(sim.dt > 0.0) || !(sim.horizon >= sim.dt) || !sim.horizon.is_finite() {
            return Err(Error::Config(format!(
                "simulation needs 0 < dt <= horizon, got dt = {} horizon = {}",
                sim.dt, sim.horizon
            )));
        }
        Ok(())
    }

    /// The plant, with presets resolved.
    pub fn plant(&self) -> Result<StateSpaceModel> {
        let as_config = |e: Error| match e {
            Error::PlantNotStable { .. } => e,
            other => Error::Config(format!("plant: {other}")),
        };
        match &self.plant {
            PlantSpec::Preset { preset } => {
                let base: ProjectConfig =
                    toml::from_str(preset_text(preset)?).map_err(|e| Error::Config(e.to_string()))?;
                if matches!(base.plant, PlantSpec::Preset { .. }) {
                    return Err(Error::Config(format!("preset `{preset}` refers to another preset")));
                }
                base.plant()
            }
            PlantSpec::Matrices { a, b, c, d, bd, dd } => {
                let a = from_rows(a).map_err(as_config)?;
                let n = a.nrows();
                let mut model = StateSpaceModel::new_stable(
                    a,
                    from_rows(b).map_err(as_config)?,
                    from_rows(c).map_err(as_config)?,
                    from_rows(d).map_err(as_config)?,
                )
                .map_err(as_config)?;
                if bd.is_some() || dd.is_some() {
                    let r = model.r();
                    let bd = match bd {
                        Some(rows) => from_rows(rows).map_err(as_config)?,
                        None => nalgebra::DMatrix::zeros(n, dd.as_ref().map_or(0, |x| x.first().map_or(0, Vec::len))),
                    };
                    let dd = match dd {
                        Some(rows) => from_rows(rows).map_err(as_config)?,
                        None => nalgebra::DMatrix::zeros(r, bd.ncols()),
                    };
                    model = model.with_disturbance(bd, dd).map_err(as_config)?;
                }
                Ok(model)
            }
        }
    }

    pub fn exosystem(&self) -> Result<Exosystem> {
        Exosystem::new(self.exosystem.frequencies.clone())
            .map_err(|e| Error::Config(format!("exosystem: {e}")))
    }

    /// Pole constants, unit by default.
    pub fn pole_constants(&self) -> Result<Vec<f64>> {
        Ok(match &self.design.k {
            Some(k) => k.clone(),
            None => default_pole_constants(&self.exosystem()?),
        })
    }

    pub fn signal(&self, plant: &StateSpaceModel) -> Result<ExogenousSignal> {
        let spec = &self.disturbance;
        if spec.constant.len() != plant.nd() {
            return Err(Error::Config(format!(
                "disturbance has {} channels but the plant takes {}",
                spec.constant.len(),
                plant.nd()
            )));
        }
        let harmonics = spec
            .harmonics
            .iter()
            .map(|h| Harmonic {
                omega: h.omega,
                cos_amp: DVector::from_vec(h.cos.clone()),
                sin_amp: DVector::from_vec(h.sin.clone()),
            })
            .collect();
        ExogenousSignal::new(DVector::from_vec(spec.constant.clone()), harmonics)
            .map_err(|e| Error::Config(format!("disturbance: {e}")))
    }
}
