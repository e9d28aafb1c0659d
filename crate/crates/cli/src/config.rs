//! Session configuration files shared by `gard run` and `gard serve`.
//!
//! ```toml
//! duration = 10.0          # s, batch runs only
//! seed = 1                 # sensor noise and random user force
//!
//! [map]                    # exactly one of pgm / implicit / inequalities
//! implicit = "sqrt(x^2 + y^2) - 250"
//! es = 2.0
//! resolution = 1.0         # mm per cell
//!
//! [session]                # any field of the session configuration
//! mode = "powered"
//! start = { x = 250.0, y = 0.0 }
//!
//! [user]                   # batch runs only
//! kind = "constant"
//! fx = 5.0
//! fy = 0.0
//!
//! [[edits]]                # batch runs only
//! at = 2.0
//! rect = [60.0, -40.0, 90.0, 40.0]
//! value = 0
//!
//! [service]                # `gard serve` only
//! decimation = 10
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gard_core::map::{ImplicitCurveSpec, Region, RegionInequalitySpec, PERMITTED, PROHIBITED};
use gard_core::session::{steps_for, Command, Scheduled, SessionConfig};
use gard_core::user::{ConstantForce, ForceSource, NoForce, PdUser, RandomForce, Target};
use gard_core::{pgm, GridGeometry, MotionRestrictionMap, Vec2};
use gard_service::ServiceConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub map: MapSource,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub user: UserSpec,
    #[serde(default)]
    pub edits: Vec<EditSpec>,
    #[serde(default)]
    pub service: ServiceSection,
}

fn default_duration() -> f64 {
    10.0
}

fn default_resolution() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSource {
    pub pgm: Option<PathBuf>,
    pub implicit: Option<String>,
    /// Half-width E_s of an implicit trajectory band (mm).
    pub es: Option<f64>,
    pub inequalities: Option<Vec<String>>,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UserSpec {
    #[default]
    None,
    Constant {
        fx: f64,
        fy: f64,
    },
    Random {
        magnitude: f64,
        hold_steps: u64,
    },
    /// PD hand chasing a point on a circle about the origin.
    Circle {
        radius: f64,
        angular_rate: f64,
        #[serde(default)]
        ramp: f64,
        kp: f64,
        kd: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditSpec {
    /// Time of the edit (s).
    pub at: f64,
    /// `[x0, y0, x1, y1]` in mm.
    pub rect: [f64; 4],
    pub value: u8,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub decimation: u32,
    pub force_cap: f64,
    pub watchdog_ms: u64,
    pub state_buffer: usize,
}

impl Default for ServiceSection {
    fn default() -> Self {
        let d = ServiceConfig::default();
        Self {
            decimation: d.decimation,
            force_cap: d.force_cap,
            watchdog_ms: d.watchdog_ms,
            state_buffer: d.state_buffer,
        }
    }
}

impl SessionFile {
    /// Reads a config; relative map paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: SessionFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(p) = &cfg.map.pgm {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.map.pgm = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    /// Session configuration with the file-level seed applied.
    pub fn session_config(&self) -> SessionConfig {
        let mut s = self.session.clone();
        s.sensor.seed = self.seed;
        s
    }

    pub fn service_config(&self) -> ServiceConfig {
        ServiceConfig {
            session: self.session_config(),
            decimation: self.service.decimation,
            force_cap: self.service.force_cap,
            watchdog_ms: self.service.watchdog_ms,
            state_buffer: self.service.state_buffer,
        }
    }

    pub fn steps(&self) -> u64 {
        steps_for(self.duration, self.session.timestep)
    }

    pub fn user(&self) -> Box<dyn ForceSource> {
        match self.user {
            UserSpec::None => Box::new(NoForce),
            UserSpec::Constant { fx, fy } => Box::new(ConstantForce(Vec2::new(fx, fy))),
            UserSpec::Random { magnitude, hold_steps } => Box::new(RandomForce::new(self.seed, magnitude, hold_steps)),
            UserSpec::Circle {
                radius,
                angular_rate,
                ramp,
                kp,
                kd,
            } => Box::new(PdUser::new(
                Target::Circle {
                    center: Vec2::ZERO,
                    radius,
                    angular_rate,
                    phase: 0.0,
                    ramp,
                },
                kp,
                kd,
            )),
        }
    }

    pub fn schedule(&self, geometry: &GridGeometry) -> Result<Vec<Scheduled>> {
        self.edits
            .iter()
            .map(|e| {
                if e.value != PERMITTED && e.value != PROHIBITED {
                    bail!("edit value must be 0 or 255, got {}", e.value);
                }
                let [x0, y0, x1, y1] = e.rect;
                Ok(Scheduled {
                    at: steps_for(e.at, self.session.timestep),
                    command: Command::EditMap {
                        region: Region::Rect {
                            a: geometry.cell_of(Vec2::new(x0, y0)),
                            b: geometry.cell_of(Vec2::new(x1, y1)),
                        },
                        value: e.value,
                    },
                })
            })
            .collect()
    }
}

impl MapSource {
    pub fn load(&self) -> Result<MotionRestrictionMap> {
        let chosen = [self.pgm.is_some(), self.implicit.is_some(), self.inequalities.is_some()];
        if chosen.iter().filter(|&&c| c).count() != 1 {
            bail!("[map] needs exactly one of pgm, implicit or inequalities");
        }
        if let Some(p) = &self.pgm {
            return Ok(pgm::load_pgm(p, self.resolution)?);
        }
        let geometry = GridGeometry::workspace(self.resolution)?;
        if let Some(expr) = &self.implicit {
            let es = self.es.context("[map] implicit needs es")?;
            let spec = ImplicitCurveSpec::from_expression(expr, es)?;
            return Ok(MotionRestrictionMap::from_implicit(&spec, geometry)?);
        }
        let exprs = self.inequalities.as_deref().unwrap_or_default();
        let spec = RegionInequalitySpec::from_expressions(exprs)?;
        Ok(MotionRestrictionMap::from_inequalities(&spec, geometry)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let cfg: SessionFile = toml::from_str(
            r#"
            duration = 2.0
            seed = 4
            [map]
            implicit = "x^2 + y^2 - 100^2"
            es = 400.0
            resolution = 2.0
            [session]
            mode = "aan_hard"
            start = { x = 100.0, y = 0.0 }
            [session.admittance]
            virtual_mass = 5.0
            [user]
            kind = "random"
            magnitude = 10.0
            hold_steps = 100
            [[edits]]
            at = 0.5
            rect = [0.0, 0.0, 10.0, 10.0]
            value = 0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.steps(), 2000);
        assert_eq!(cfg.session_config().sensor.seed, 4);
        assert_eq!(cfg.session.admittance.virtual_mass, 5.0);
        let map = cfg.map.load().unwrap();
        assert_eq!(map.geometry().width(), 325);
        assert!(map.is_permitted_world(Vec2::new(100.0, 0.0)));
        assert_eq!(cfg.schedule(map.geometry()).unwrap()[0].at, 500);
    }

    #[test]
    fn rejects_ambiguous_map_and_unknown_keys() {
        let cfg: SessionFile = toml::from_str("[map]\nimplicit = \"x\"\nes = 1.0\ninequalities = [\"y\"]\n").unwrap();
        assert!(cfg.map.load().is_err());
        assert!(toml::from_str::<SessionFile>("[map]\nimplicit = \"x\"\nbogus = 1\n").is_err());
    }
}
