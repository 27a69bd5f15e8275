//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cq::TimeGrid;
use crate::error::{Error, Result};
use crate::geometry::{load_mesh, make_icosphere, Point, SurfaceMesh};
use crate::incident::{PlaneWave, Signal, Window};
use crate::quadrature::QuadConfig;
use crate::transmission::{Materials, Probe, Side};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Laplace,
    Timedomain,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcosphereSpec {
    pub level: u32,
    #[serde(default = "one")]
    pub radius: f64,
}

fn one() -> f64 {
    1.0
}

/// Exactly one of `icosphere` and `path`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSource {
    pub icosphere: Option<IcosphereSpec>,
    pub path: Option<PathBuf>,
}

impl MeshSource {
    pub fn load(&self, base: &Path) -> Result<SurfaceMesh> {
        match (&self.icosphere, &self.path) {
            (Some(ico), None) => make_icosphere(ico.level, ico.radius, Point::zeros()),
            (None, Some(p)) => load_mesh(if p.is_absolute() { p.clone() } else { base.join(p) }),
            _ => Err(Error::Config("[mesh] needs exactly one of `icosphere` or `path`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    pub direction: [f64; 3],
    pub polarization: [f64; 3],
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default = "default_ramp")]
    pub ramp: f64,
    #[serde(default = "default_window")]
    pub window: Window,
}

fn default_ramp() -> f64 {
    2.0
}

fn default_window() -> Window {
    Window::C4
}

impl WaveConfig {
    pub fn direction(&self) -> Point {
        Point::from(self.direction)
    }

    pub fn polarization(&self) -> Point {
        Point::from(self.polarization)
    }

    pub fn signal(&self) -> Result<Signal> {
        Signal::new(self.omega, self.ramp, self.window)
    }

    pub fn plane_wave(&self, mesh: &SurfaceMesh, c_plus: f64) -> Result<PlaneWave> {
        PlaneWave::new(self.direction(), self.polarization(), self.signal()?, mesh, c_plus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceConfig {
    /// `[Re s, Im s]`
    pub s: [f64; 2],
}

impl LaplaceConfig {
    pub fn s(&self) -> C64 {
        C64::new(self.s[0], self.s[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub steps: usize,
    #[serde(default = "two")]
    pub order: u8,
    pub lambda_radius: Option<f64>,
}

fn two() -> u8 {
    2
}

impl TimeConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        if self.steps == 0 {
            return Err(Error::Config("[time] steps must be at least 1".into()));
        }
        let kappa = self.t_end / self.steps as f64;
        match self.lambda_radius {
            Some(r) => TimeGrid::with_radius(kappa, self.steps, self.order, r),
            None => TimeGrid::new(kappa, self.steps, self.order),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub x: [f64; 3],
    pub side: Side,
}

/// Parameters of the `verify` suites; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub levels: Vec<u32>,
    pub trials: usize,
    pub s: [f64; 2],
    pub sigma0: f64,
    pub omegas: Vec<f64>,
    pub steps: Vec<usize>,
    pub orders: Vec<u8>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            levels: vec![1, 2, 3],
            trials: 2,
            s: [1.0, 2.0],
            sigma0: 1.0,
            omegas: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            steps: vec![64, 128, 256],
            orders: vec![1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub mesh: MeshSource,
    pub materials: Materials,
    pub wave: WaveConfig,
    pub laplace: Option<LaplaceConfig>,
    pub time: Option<TimeConfig>,
    #[serde(default)]
    pub probes: Vec<ProbeConfig>,
    #[serde(default)]
    pub quadrature: QuadConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Parses and validates; TOML errors carry line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.materials.validate()?;
        self.quadrature.validate()?;
        self.wave.signal()?;
        match self.mode {
            Mode::Laplace if self.laplace.is_none() => return Err(Error::Config("mode = \"laplace\" requires a [laplace] table with `s`".into())),
            Mode::Timedomain if self.time.is_none() => return Err(Error::Config("mode = \"timedomain\" requires a [time] table".into())),
            _ => {}
        }
        if let Some(l) = &self.laplace {
            crate::operators::LaplaceParam::new(l.s())?;
        }
        if let Some(t) = &self.time {
            t.grid()?;
        }
        if self.mesh.icosphere.is_some() == self.mesh.path.is_some() {
            return Err(Error::Config("[mesh] needs exactly one of `icosphere` or `path`".into()));
        }
        Ok(())
    }

    pub fn probes(&self) -> Vec<Probe> {
        self.probes.iter().map(|p| Probe { x: Point::from(p.x), side: p.side }).collect()
    }

    /// Probes closer to the surface than `h/4`.
    pub fn close_probes(&self, mesh: &SurfaceMesh) -> Vec<usize> {
        let h = mesh.stats().h_max;
        self.probes.iter().enumerate().filter(|(_, p)| mesh.distance_to(&Point::from(p.x)) <= 0.25 * h).map(|(i, _)| i).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
mode = "laplace"

[mesh]
icosphere = { level = 0 }

[materials]
eps_plus = 1.0
mu_plus = 1.0
eps_minus = 4.0
mu_minus = 1.0

[wave]
direction = [0.0, 0.0, 1.0]
polarization = [1.0, 0.0, 0.0]

[laplace]
s = [1.0, 2.0]

[[probes]]
x = [0.0, 0.0, 3.0]
side = "exterior"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.mode, Mode::Laplace);
        assert_eq!(cfg.laplace.as_ref().unwrap().s(), C64::new(1.0, 2.0));
        assert_eq!(cfg.quadrature, QuadConfig::default());
        assert_eq!(cfg.probes()[0].side, Side::Exterior);
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn missing_materials_names_the_key() {
        let start = BASE.find("[materials]").unwrap();
        let end = BASE.find("[wave]").unwrap();
        let text = format!("{}{}", &BASE[..start], &BASE[end..]);
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("materials"), "{err}");
    }

    #[test]
    fn errors_report_lines() {
        let text = BASE.replace("eps_minus = 4.0", "eps_minus = \"four\"");
        let err = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn mode_requirements() {
        let text = BASE.replace("mode = \"laplace\"", "mode = \"timedomain\"");
        assert!(RunConfig::from_toml(&text).is_err());
        let text = format!("{text}\n[time]\nt_end = 4.0\nsteps = 32\n");
        let cfg = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.time.unwrap().grid().unwrap().n, 32);
        let bad = BASE.replace("icosphere = { level = 0 }", "");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml(&BASE.replace("s = [1.0, 2.0]", "s = [-1.0, 2.0]")).is_err());
        assert!(RunConfig::from_toml(&BASE.replace("eps_minus = 4.0", "eps_minus = -4.0")).is_err());
        assert!(RunConfig::from_toml(&BASE.replace("[laplace]", "[laplace]\nbogus = 1")).is_err());
    }
}
