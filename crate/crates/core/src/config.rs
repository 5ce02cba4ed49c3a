//! Run configuration read from TOML. Every section except `[case]` may be
//! omitted; the resolved configuration (defaults included) is echoed into
//! the report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorConstants, EstimatorId};
use crate::solver::time::JAMESON_RK5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    Tgv2d,
    Tgv3d,
    BumpChannel,
    CustomGridFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub adapt: AdaptConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub kind: CaseKind,
    /// Reynolds number; `nu = u_ref * l_ref / re` with unit references.
    pub re: f64,
    /// Base grid size; defaults depend on the case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 3]>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_file: Option<PathBuf>,
    #[serde(default)]
    pub channel: ChannelConfig,
}

fn default_seed() -> u64 {
    1
}

/// Geometry and forcing of the channel cases. Lengths are in units of the
/// channel height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub length: f64,
    pub height: f64,
    pub span: f64,
    pub bump_height: f64,
    pub bump_center: f64,
    pub bump_width: f64,
    pub stretch: f64,
    pub u_bulk: f64,
    pub noise: f64,
    pub relaxation: f64,
    /// `[y_min, y_max]` band used to check where refinement lands.
    pub band: [f64; 2],
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            length: 4.0,
            height: 1.0,
            span: 0.5,
            bump_height: 0.3,
            bump_center: 1.0,
            bump_width: 1.0,
            stretch: 1.0,
            u_bulk: 1.0,
            noise: 0.1,
            relaxation: 1.0,
            band: [0.0, 0.5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgsChoice {
    None,
    Wale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub kappa2: f64,
    pub kappa4: f64,
    pub cfl: f64,
    pub ac_speed: f64,
    pub rk_alpha: [f64; 5],
    pub sgs: SgsChoice,
    pub c_w: f64,
    pub c_filter: f64,
    pub rho: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            kappa2: 0.0,
            kappa4: 1.0 / 64.0,
            cfl: 1.5,
            ac_speed: 5.0,
            rk_alpha: JAMESON_RK5,
            sgs: SgsChoice::Wale,
            c_w: crate::sgs::C_W,
            c_filter: 1.0,
            rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Root (coarsest-level) steps of the first run.
    pub steps: usize,
    /// Finest-level step; chosen from the CFL limit when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Root steps between stored snapshots.
    pub sample_every: usize,
    /// Abort with a divergence error when max |u| exceeds this multiple of
    /// the initial maximum.
    pub divergence_factor: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            steps: 200,
            dt: None,
            sample_every: 1,
            divergence_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    /// Trailing part of the run over which statistics are gathered.
    pub window_fraction: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { window_fraction: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub id: EstimatorId,
    pub constants: EstimatorConstants,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            id: "iq_k_tke".parse().expect("builtin estimator name"),
            constants: EstimatorConstants::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub fraction: f64,
    /// Root steps on the adapted grid; defaults to `run.steps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rerun_steps: Option<usize>,
    pub cycles: usize,
    /// Allows `cycles > 1`.
    pub experimental_multi_cycle: bool,
    /// Recompute statistics and estimators on the adapted grid.
    pub reassess: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            fraction: 0.05,
            rerun_steps: None,
            cycles: 1,
            experimental_multi_cycle: false,
            reassess: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub vtk: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            vtk: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let mut msg = e.message().to_string();
            if let Some(span) = e.span() {
                let line = text[..span.start].matches('\n').count() + 1;
                let near = text.get(span).unwrap_or("").trim();
                if !near.is_empty() && !msg.contains(near) {
                    msg = format!("{msg} `{near}`");
                }
                msg = format!("{msg} (line {line})");
            }
            Error::Config(msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate a config file. A relative `grid_file` or output
    /// directory is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(g) = &cfg.case.grid_file {
            if g.is_relative() {
                cfg.case.grid_file = Some(base.join(g));
            }
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    /// Resolved configuration as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn nu(&self) -> f64 {
        1.0 / self.case.re
    }

    pub fn dims(&self) -> [usize; 3] {
        self.case.dims.unwrap_or(match self.case.kind {
            CaseKind::Tgv2d => [32, 32, 1],
            CaseKind::Tgv3d => [16, 16, 16],
            CaseKind::BumpChannel => [64, 48, 8],
            CaseKind::CustomGridFile => [0, 0, 0],
        })
    }

    pub fn rerun_steps(&self) -> usize {
        self.adapt.rerun_steps.unwrap_or(self.run.steps)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.case;
        if !(c.re > 0.0) || !c.re.is_finite() {
            return Err(Error::Config(format!("case.re must be positive, got {}", c.re)));
        }
        match (c.kind, &c.grid_file) {
            (CaseKind::CustomGridFile, None) => {
                return Err(Error::Config("case.grid_file is required for custom_grid_file".into()))
            }
            (CaseKind::CustomGridFile, Some(_)) => {
                if c.dims.is_some() {
                    return Err(Error::Config("case.dims comes from the grid file for custom_grid_file".into()));
                }
            }
            (_, Some(_)) => return Err(Error::Config("case.grid_file only applies to custom_grid_file".into())),
            _ => {}
        }
        if c.kind != CaseKind::CustomGridFile {
            let d = self.dims();
            let ok = match c.kind {
                CaseKind::Tgv2d => d[2] == 1 && d[0] >= 2 && d[1] >= 2,
                _ => d.iter().all(|n| *n >= 2),
            };
            if !ok {
                return Err(Error::Config(format!("case.dims {d:?} do not fit case {:?}", c.kind)));
            }
        }
        let ch = &c.channel;
        for (name, v) in [
            ("length", ch.length),
            ("height", ch.height),
            ("span", ch.span),
            ("bump_width", ch.bump_width),
            ("relaxation", ch.relaxation),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("case.channel.{name} must be positive, got {v}")));
            }
        }
        if !(ch.bump_height >= 0.0) || ch.bump_height >= ch.height || !(ch.stretch >= 0.0) || !(ch.noise >= 0.0) {
            return Err(Error::Config(
                "case.channel needs 0 <= bump_height < height, stretch >= 0 and noise >= 0".into(),
            ));
        }
        if !(ch.band[0] < ch.band[1]) {
            return Err(Error::Config("case.channel.band must be an increasing pair".into()));
        }
        let s = &self.scheme;
        if !(s.c_filter >= 1.0) || !(s.rho > 0.0) || !(s.c_w > 0.0) {
            return Err(Error::Config("scheme needs c_filter >= 1, rho > 0 and c_w > 0".into()));
        }
        if s.rk_alpha.iter().any(|a| !(*a > 0.0)) || s.rk_alpha[4] != 1.0 {
            return Err(Error::Config("scheme.rk_alpha must be positive and end with 1".into()));
        }
        let r = &self.run;
        if r.steps == 0 || r.sample_every == 0 {
            return Err(Error::Config("run.steps and run.sample_every must be at least 1".into()));
        }
        if let Some(dt) = r.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("run.dt must be positive, got {dt}")));
            }
        }
        if !(r.divergence_factor > 1.0) {
            return Err(Error::Config("run.divergence_factor must exceed 1".into()));
        }
        let w = self.stats.window_fraction;
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::Config(format!("stats.window_fraction must lie in (0, 1], got {w}")));
        }
        self.estimator.constants.validate()?;
        let a = &self.adapt;
        if !(a.fraction > 0.0 && a.fraction <= 1.0) {
            return Err(Error::Config(format!("adapt.fraction must lie in (0, 1], got {}", a.fraction)));
        }
        if a.cycles == 0 {
            return Err(Error::Config("adapt.cycles must be at least 1".into()));
        }
        if a.cycles > 1 && !a.experimental_multi_cycle {
            return Err(Error::Config(
                "only one adaptation cycle is supported; set adapt.experimental_multi_cycle to override".into(),
            ));
        }
        Ok(())
    }
}
