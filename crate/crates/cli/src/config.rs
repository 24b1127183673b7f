//! TOML run-configuration schema shared by every subcommand.

use eb_core::error::{Error, Result};
use eb_core::grid::SphereGrid;
use eb_core::model::{Divisor, ModelParams};
use eb_core::ode::ChmyOptions;
use eb_core::pde::{BranchOptions, NewtonOptions, VolumeOptions};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;

/// Full run configuration. Sections carry defaults; `[model]` and the
/// schedule kind a subcommand asks for are the only hard requirements.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub divisor: Option<Divisor>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub ode: OdeSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub checkpoint: CheckpointSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.schedule.kinds() > 1 {
            return Err(Error::Config(
                "schedule must hold exactly one of lambda_list, volume_list, b_list, c, chmy"
                    .into(),
            ));
        }
        for f in &self.output.formats {
            if !matches!(f.as_str(), "json" | "csv" | "checkpoint") {
                return Err(Error::Config(format!(
                    "unknown output format {f:?}; use json, csv, checkpoint"
                )));
            }
        }
        if self.checkpoint.path.is_empty() {
            return Err(Error::Config("checkpoint.path must not be empty".into()));
        }
        if let Some(chmy) = &self.schedule.chmy {
            if !(chmy.s_min < chmy.s_max) {
                return Err(Error::Config("schedule.chmy needs s_min < s_max".into()));
            }
        }
        if !(self.ode.step > 0.0 && self.ode.t_max > 0.0) {
            return Err(Error::Config("ode.step and ode.t_max must be positive".into()));
        }
        Ok(())
    }
}

/// Model regime and scales; the coupling strength alpha is always derived.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub mode: ModeName,
    pub tau: Option<f64>,
    pub n: u32,
    pub a: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Compact,
    Planar,
}

impl ModelSection {
    pub fn params(&self) -> Result<ModelParams> {
        match self.mode {
            ModeName::Compact => {
                if self.a.is_some() {
                    return Err(Error::Config(
                        "model.a belongs to planar mode; remove it in compact mode".into(),
                    ));
                }
                ModelParams::compact(self.tau.unwrap_or(1.0), self.n)
            }
            ModeName::Planar => {
                if self.tau.is_some() {
                    return Err(Error::Config("model.tau is fixed in planar mode".into()));
                }
                let a = self
                    .a
                    .ok_or_else(|| Error::Config("planar mode needs model.a".into()))?;
                ModelParams::planar(a, self.n)
            }
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub resolution: usize,
    pub chart_radius: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { resolution: 64, chart_radius: 1.2 }
    }
}

impl GridSection {
    pub fn build(&self) -> Result<SphereGrid> {
        SphereGrid::build(self.resolution, self.chart_radius)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Backtracking halvings allowed per Newton step.
    pub damping: usize,
    pub substep_depth: usize,
    pub lambda_c_fraction: f64,
    pub volume_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let newton = NewtonOptions::default();
        let branch = BranchOptions::default();
        let volume = VolumeOptions::default();
        SolverSection {
            newton_tol: newton.tol,
            max_iter: newton.max_iter,
            damping: newton.max_backtrack,
            substep_depth: branch.substep_depth,
            lambda_c_fraction: branch.lambda_c_fraction,
            volume_tol: volume.volume_tol,
        }
    }
}

impl SolverSection {
    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.newton_tol,
            max_iter: self.max_iter,
            max_backtrack: self.damping,
        }
    }

    pub fn branch(&self) -> BranchOptions {
        BranchOptions {
            newton: self.newton(),
            substep_depth: self.substep_depth,
            lambda_c_fraction: self.lambda_c_fraction,
        }
    }

    pub fn volume(&self) -> VolumeOptions {
        VolumeOptions {
            newton: self.newton(),
            volume_tol: self.volume_tol,
            ..VolumeOptions::default()
        }
    }
}

/// Exactly one field may be set; which one a command needs depends on the
/// subcommand.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub lambda_list: Option<Vec<f64>>,
    pub volume_list: Option<Vec<f64>>,
    pub b_list: Option<Vec<f64>>,
    pub c: Option<f64>,
    pub chmy: Option<ChmySection>,
}

impl ScheduleSection {
    fn kinds(&self) -> usize {
        usize::from(self.lambda_list.is_some())
            + usize::from(self.volume_list.is_some())
            + usize::from(self.b_list.is_some())
            + usize::from(self.c.is_some())
            + usize::from(self.chmy.is_some())
    }

    fn nonempty<'a>(list: &'a Option<Vec<f64>>, name: &str) -> Result<&'a [f64]> {
        match list {
            Some(l) if !l.is_empty() => Ok(l),
            Some(_) => Err(Error::Config(format!("schedule.{name} must not be empty"))),
            None => Err(Error::Config(format!("this command needs schedule.{name}"))),
        }
    }

    pub fn lambda_list(&self) -> Result<&[f64]> {
        Self::nonempty(&self.lambda_list, "lambda_list")
    }

    pub fn volume_list(&self) -> Result<&[f64]> {
        Self::nonempty(&self.volume_list, "volume_list")
    }

    pub fn b_list(&self) -> Result<&[f64]> {
        Self::nonempty(&self.b_list, "b_list")
    }

    pub fn anchor(&self) -> Result<f64> {
        self.c
            .ok_or_else(|| Error::Config("this command needs schedule.c".into()))
    }

    pub fn chmy(&self) -> Result<&ChmySection> {
        self.chmy
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [schedule.chmy] table".into()))
    }

    pub fn echo(&self) -> serde_json::Value {
        if let Some(l) = &self.lambda_list {
            json!({ "lambda_list": l })
        } else if let Some(l) = &self.volume_list {
            json!({ "volume_list": l })
        } else if let Some(l) = &self.b_list {
            json!({ "b_list": l })
        } else if let Some(c) = &self.c {
            json!({ "c": c })
        } else if let Some(ch) = &self.chmy {
            json!({ "chmy": ch })
        } else {
            json!({})
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChmySection {
    pub lambda: f64,
    pub r0: f64,
    pub r_max: f64,
    /// Step in the logarithmic radial coordinate.
    pub step: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl Default for ChmySection {
    fn default() -> Self {
        let o = ChmyOptions::default();
        ChmySection {
            lambda: o.lambda,
            r0: o.r0,
            r_max: o.r_max,
            step: o.step,
            s_min: o.bracket.0,
            s_max: o.bracket.1,
        }
    }
}

impl ChmySection {
    pub fn options(&self) -> ChmyOptions {
        ChmyOptions {
            lambda: self.lambda,
            r0: self.r0,
            r_max: self.r_max,
            step: self.step,
            bracket: (self.s_min, self.s_max),
            ..ChmyOptions::default()
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OdeSection {
    pub step: f64,
    pub t_max: f64,
}

impl Default for OdeSection {
    fn default() -> Self {
        OdeSection { step: 1e-3, t_max: 12.0 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: Option<String>,
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: None,
            formats: vec!["json".into(), "csv".into(), "checkpoint".into()],
        }
    }
}

impl OutputSection {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckpointSection {
    pub path: String,
    pub resume: bool,
}

impl Default for CheckpointSection {
    fn default() -> Self {
        CheckpointSection { path: "state.ebck".into(), resume: false }
    }
}

/// Serializable image of the configuration after every derived quantity is
/// resolved; embedded verbatim in each JSON summary.
pub fn resolved_echo(
    cfg: &RunConfig,
    params: &ModelParams,
    outdir: &Path,
    resume: bool,
) -> serde_json::Value {
    json!({
        "model": {
            "mode": match cfg.model.mode { ModeName::Compact => "compact", ModeName::Planar => "planar" },
            "tau": params.tau,
            "n": params.n,
            "alpha": params.alpha,
            "a": cfg.model.a,
        },
        "divisor": cfg.divisor,
        "grid": { "resolution": cfg.grid.resolution, "chart_radius": cfg.grid.chart_radius },
        "solver": cfg.solver,
        "schedule": cfg.schedule.echo(),
        "ode": cfg.ode,
        "output": {
            "directory": outdir.display().to_string(),
            "formats": cfg.output.formats,
        },
        "checkpoint": { "path": cfg.checkpoint.path, "resume": resume },
    })
}
