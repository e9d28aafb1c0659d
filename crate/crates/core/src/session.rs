//! Operation modes composed into a deterministic, steppable control loop.
//!
//! Every mode reads the plant, turns the sampled force into a velocity
//! command and steps the plant once:
//!
//! - Powered: a velocity regulator drives along the permitted band at a set
//!   speed; handle force is ignored.
//! - Transparent / AanHard: force -> admittance -> IEVC on the raw map.
//! - AanSoft: force -> impedance -> admittance -> IEVC on the dilated map.
//! - GuidedImpedance: as AanSoft, but the spring pulls toward a leading point
//!   that marches along the band.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::admittance::{admittance_step, AdmittanceParams, AdmittanceState};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::ievc::{ievc_step, IevcConfig, IevcOutput, IevcParams, IevcStatus, KinematicState};
use crate::impedance::{
    build_spring_map, expand_map, impedance_step, ConvolutionKernel, ExpandedMap, ImpedanceParams, SpringForceMap,
};
use crate::map::{MotionRestrictionMap, Region};
use crate::metrics::nearest_permitted;
use crate::plant::{plant_step, shape_command, PlantParams, PlantState, SensorModel, SensorParams};
use crate::user::ForceSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Powered,
    #[default]
    Transparent,
    AanHard,
    AanSoft,
    GuidedImpedance,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Powered,
        Mode::Transparent,
        Mode::AanHard,
        Mode::AanSoft,
        Mode::GuidedImpedance,
    ];

    /// Whether the mode needs a dilated map and spring field.
    pub fn needs_soft_maps(self) -> bool {
        matches!(self, Mode::AanSoft | Mode::GuidedImpedance)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Powered => "powered",
            Mode::Transparent => "transparent",
            Mode::AanHard => "aan_hard",
            Mode::AanSoft => "aan_soft",
            Mode::GuidedImpedance => "guided_impedance",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub mode: Mode,
    /// Control period (s); overrides the admittance and plant timesteps.
    pub timestep: f64,
    /// Initial end-effector position (mm).
    pub start: Vec2,
    /// Powered-mode speed s_d (mm/s).
    pub powered_speed: f64,
    /// Powered-mode starting direction; defaults to +x, or toward the band
    /// when starting outside it.
    pub initial_heading: Option<Vec2>,
    /// Leading-point speed in guided mode (mm/s).
    pub leading_speed: f64,
    pub admittance: AdmittanceParams,
    pub impedance: ImpedanceParams,
    pub ievc: IevcParams,
    pub plant: PlantParams,
    pub sensor: SensorParams,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            timestep: 1e-3,
            start: Vec2::ZERO,
            powered_speed: 50.0,
            initial_heading: None,
            leading_speed: 30.0,
            admittance: AdmittanceParams::default(),
            impedance: ImpedanceParams::default(),
            ievc: IevcParams::default(),
            plant: PlantParams::default(),
            sensor: SensorParams::default(),
        }
    }
}

impl SessionConfig {
    /// Copy with the shared timestep pushed into every block.
    fn normalised(&self) -> Self {
        let mut c = self.clone();
        c.admittance.timestep = c.timestep;
        c.plant.timestep = c.timestep;
        c
    }

    pub fn validate(&self, resolution: f64) -> Result<()> {
        let c = self.normalised();
        if !(c.timestep.is_finite() && c.timestep > 0.0) {
            return Err(Error::InvalidParams(format!("timestep must be > 0, got {}", c.timestep)));
        }
        c.admittance.validate()?;
        c.plant.validate()?;
        SensorModel::new(c.sensor)?;
        IevcConfig::from_params(&c.ievc, resolution)?;
        for (name, s) in [("powered speed", c.powered_speed), ("leading speed", c.leading_speed)] {
            if !(s.is_finite() && (0.0..=c.plant.max_speed).contains(&s)) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be within [0, {}], got {s}",
                    c.plant.max_speed
                )));
            }
        }
        if !c.start.is_finite() {
            return Err(Error::InvalidParams("start position must be finite".into()));
        }
        if c.mode.needs_soft_maps() {
            c.impedance.validate(resolution)?;
        }
        Ok(())
    }
}

/// Dilated map and spring field derived from one raw map revision.
#[derive(Debug, Clone)]
pub struct SoftMaps {
    pub expanded: ExpandedMap,
    pub spring: SpringForceMap,
    /// Map IEVC restricts against in the soft modes; normally the dilated map.
    pub roam: MotionRestrictionMap,
}

impl SoftMaps {
    pub fn build(map: &MotionRestrictionMap, p: &ImpedanceParams) -> Result<Self> {
        let kernel = ConvolutionKernel::disk(p.kernel_radius);
        let expanded = expand_map(map, &kernel)?;
        let spring = build_spring_map(&expanded, &kernel, p)?;
        Ok(Self {
            roam: expanded.map.clone(),
            expanded,
            spring,
        })
    }

    /// Replaces the roaming map, e.g. to let the handle explore the whole
    /// spring zone.
    pub fn with_roam(mut self, roam: MotionRestrictionMap) -> Result<Self> {
        if roam.geometry() != self.spring.geometry() {
            return Err(Error::InvalidGeometry("roam map geometry differs from spring map".into()));
        }
        self.roam = roam;
        Ok(self)
    }

    pub fn source_revision(&self) -> u64 {
        self.spring.source_revision()
    }
}

/// Partial parameter update; `None` leaves a block unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamsUpdate {
    pub admittance: Option<AdmittanceParams>,
    pub impedance: Option<ImpedanceParams>,
    pub ievc: Option<IevcParams>,
    pub powered_speed: Option<f64>,
    pub leading_speed: Option<f64>,
    pub sensor_noise: Option<f64>,
}

/// External command applied between steps.
#[derive(Debug, Clone)]
pub enum Command {
    SetMode(Mode),
    SetParams(ParamsUpdate),
    EditMap { region: Region, value: u8 },
    /// Installs a new raw map, with soft maps prebuilt for it off the loop.
    ReplaceMaps {
        map: MotionRestrictionMap,
        soft: Option<SoftMaps>,
    },
    SetPaused(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    #[error("non-finite force sample rejected")]
    NonFiniteForce,
    #[error("no permitted cell within reach; steering toward the nearest one")]
    Stranded,
    #[error("spring map built from revision {spring} but map is at revision {map}")]
    StaleSpringMap { map: u64, spring: u64 },
    #[error("mode requires a spring map and none is loaded")]
    MissingSoftMaps,
}

impl Fault {
    /// Whether a batch run should stop on this fault.
    pub fn ends_run(self) -> bool {
        !matches!(self, Fault::Stranded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub t: f64,
    /// Measured position (mm) at the start of the step.
    pub position: Vec2,
    /// Measured velocity (mm/s) at the start of the step.
    pub velocity: Vec2,
    /// Velocity command sent to the plant (mm/s).
    pub command: Vec2,
    /// Sampled handle force (N).
    pub force: Vec2,
    /// Force after impedance composition (N); equals `force` outside the
    /// soft modes.
    pub assist: Vec2,
    pub revision: u64,
    pub mode: Mode,
    pub status: IevcStatus,
    pub fault: Option<Fault>,
    /// Guided-mode leading point (mm).
    pub leader: Option<Vec2>,
}

impl StepRecord {
    /// Fields that do not depend on the mode label or force channel.
    pub fn kinematics(&self) -> (u64, Vec2, Vec2, Vec2, u64) {
        (self.step, self.position, self.velocity, self.command, self.revision)
    }
}

/// Powered-mode velocity regulator: holds a heading and lets IEVC bend it
/// onto the band.
#[derive(Debug, Clone, Default)]
pub struct PoweredRegulator {
    heading: Option<Vec2>,
}

impl PoweredRegulator {
    pub fn new(initial_heading: Option<Vec2>) -> Self {
        Self {
            heading: initial_heading.and_then(Vec2::try_normalize),
        }
    }

    pub fn heading(&self) -> Option<Vec2> {
        self.heading
    }

    fn bootstrap(&self, position: Vec2, map: &MotionRestrictionMap) -> Vec2 {
        if let Some(h) = self.heading {
            return h;
        }
        if !map.is_permitted_world(position) {
            if let Some((cell, _)) = nearest_permitted(map, position) {
                if let Some(d) = (map.geometry().world(cell) - position).try_normalize() {
                    return d;
                }
            }
        }
        Vec2::new(1.0, 0.0)
    }

    /// Velocity command at `position` for speed `speed`.
    pub fn command(&mut self, position: Vec2, speed: f64, map: &MotionRestrictionMap, ievc: &IevcConfig) -> IevcOutput {
        let idle = IevcOutput {
            velocity: Vec2::ZERO,
            radius: 0,
            status: IevcStatus::Idle,
            target: None,
        };
        if !(speed > 0.0) {
            return idle;
        }
        let mut heading = self.bootstrap(position, map);
        let mut out = ievc_step(&KinematicState::new(position, heading * speed), map, ievc);
        if out.status == IevcStatus::Blocked {
            // Stall: try a quarter turn. Keeping the turned heading makes a
            // dead end reverse after two stalls.
            heading = heading.perp();
            out = ievc_step(&KinematicState::new(position, heading * speed), map, ievc);
        }
        if out.status == IevcStatus::Stranded {
            if let Some((cell, _)) = nearest_permitted(map, position) {
                if let Some(d) = (map.geometry().world(cell) - position).try_normalize() {
                    out.velocity = d * speed;
                }
            }
        }
        self.heading = Some(out.velocity.try_normalize().unwrap_or(heading));
        out
    }
}

#[derive(Debug, Clone)]
struct Leader {
    position: Vec2,
    velocity: Vec2,
    regulator: PoweredRegulator,
}

pub struct Session {
    cfg: SessionConfig,
    map: MotionRestrictionMap,
    soft: Option<SoftMaps>,
    ievc: IevcConfig,
    admittance: AdmittanceState,
    plant: PlantState,
    sensor: SensorModel,
    regulator: PoweredRegulator,
    leader: Leader,
    step: u64,
    paused: bool,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("mode", &self.cfg.mode)
            .field("step", &self.step)
            .field("plant", &self.plant)
            .field("map", &self.map)
            .finish_non_exhaustive()
    }
}

impl Session {
    /// Creates a session at `cfg.start`, building soft maps when the mode
    /// needs them.
    pub fn new(cfg: SessionConfig, map: MotionRestrictionMap) -> Result<Self> {
        let soft = if cfg.mode.needs_soft_maps() {
            Some(SoftMaps::build(&map, &cfg.impedance)?)
        } else {
            None
        };
        Self::with_soft_maps(cfg, map, soft)
    }

    pub fn with_soft_maps(cfg: SessionConfig, map: MotionRestrictionMap, soft: Option<SoftMaps>) -> Result<Self> {
        let resolution = map.geometry().resolution();
        cfg.validate(resolution)?;
        let cfg = cfg.normalised();
        if let Some(s) = &soft {
            check_soft(&map, s)?;
        }
        Ok(Self {
            ievc: IevcConfig::from_params(&cfg.ievc, resolution)?,
            sensor: SensorModel::new(cfg.sensor)?,
            admittance: AdmittanceState::at_rest(),
            plant: PlantState::at(cfg.start),
            regulator: PoweredRegulator::new(cfg.initial_heading),
            leader: Leader {
                position: cfg.start,
                velocity: Vec2::ZERO,
                regulator: PoweredRegulator::new(cfg.initial_heading),
            },
            step: 0,
            paused: false,
            map,
            soft,
            cfg,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.cfg.mode
    }

    pub fn map(&self) -> &MotionRestrictionMap {
        &self.map
    }

    pub fn soft_maps(&self) -> Option<&SoftMaps> {
        self.soft.as_ref()
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn admittance_state(&self) -> &AdmittanceState {
        &self.admittance
    }

    pub fn ievc(&self) -> &IevcConfig {
        &self.ievc
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.timestep
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// Map IEVC restricts against in the current mode.
    pub fn active_map(&self) -> &MotionRestrictionMap {
        match (&self.soft, self.cfg.mode.needs_soft_maps()) {
            (Some(s), true) => &s.roam,
            _ => &self.map,
        }
    }

    /// Applies a command. On error the session is left unchanged.
    pub fn apply(&mut self, cmd: Command) -> Result<()> {
        match cmd {
            Command::SetMode(mode) => {
                if mode == self.cfg.mode {
                    return Ok(());
                }
                if mode.needs_soft_maps() && self.soft.is_none() {
                    self.cfg.impedance.validate(self.map.geometry().resolution())?;
                    self.soft = Some(SoftMaps::build(&self.map, &self.cfg.impedance)?);
                }
                self.cfg.mode = mode;
                // Continue from the current motion rather than a stale state.
                let k_r = self.cfg.admittance.transmission_ratio;
                self.admittance = AdmittanceState {
                    last_force: Vec2::ZERO,
                    last_velocity: self.plant.velocity / (1000.0 * k_r),
                };
                self.regulator = PoweredRegulator::new(self.plant.velocity.try_normalize().or(self.cfg.initial_heading));
                self.leader = Leader {
                    position: self.plant.position,
                    velocity: Vec2::ZERO,
                    regulator: self.regulator.clone(),
                };
            }
            Command::SetParams(u) => self.set_params(u)?,
            Command::EditMap { region, value } => {
                let mut map = self.map.clone();
                map.edit_region(&region, value);
                let soft = match &self.soft {
                    Some(_) => Some(SoftMaps::build(&map, &self.cfg.impedance)?),
                    None => None,
                };
                self.map = map;
                self.soft = soft;
            }
            Command::ReplaceMaps { map, soft } => {
                if map.geometry() != self.map.geometry() {
                    return Err(Error::InvalidGeometry("replacement map geometry differs".into()));
                }
                if let Some(s) = &soft {
                    check_soft(&map, s)?;
                }
                let keep_soft = soft.is_some() || !self.cfg.mode.needs_soft_maps();
                let soft = if keep_soft { soft } else { Some(SoftMaps::build(&map, &self.cfg.impedance)?) };
                self.map = map;
                self.soft = soft;
            }
            Command::SetPaused(p) => {
                self.paused = p;
                if p {
                    self.admittance = AdmittanceState::at_rest();
                }
            }
        }
        Ok(())
    }

    fn set_params(&mut self, u: ParamsUpdate) -> Result<()> {
        let mut cfg = self.cfg.clone();
        if let Some(a) = u.admittance {
            cfg.admittance = a;
        }
        if let Some(i) = u.impedance {
            cfg.impedance = i;
        }
        if let Some(v) = u.ievc {
            cfg.ievc = v;
        }
        if let Some(s) = u.powered_speed {
            cfg.powered_speed = s;
        }
        if let Some(s) = u.leading_speed {
            cfg.leading_speed = s;
        }
        if let Some(n) = u.sensor_noise {
            cfg.sensor.noise = n;
        }
        let resolution = self.map.geometry().resolution();
        cfg.validate(resolution)?;
        let cfg = cfg.normalised();
        let rebuild = self.soft.is_some() && cfg.impedance.kernel_radius != self.cfg.impedance.kernel_radius;
        let soft = if rebuild {
            cfg.impedance.validate(resolution)?;
            Some(SoftMaps::build(&self.map, &cfg.impedance)?)
        } else {
            self.soft.take()
        };
        let ievc = IevcConfig::from_params(&cfg.ievc, resolution)?;
        let mut sensor = SensorModel::new(cfg.sensor)?;
        if cfg.sensor == self.cfg.sensor {
            sensor = self.sensor.clone();
        }
        // Keep the ring cache when only unrelated parameters changed.
        if ievc.transmission_gain != self.ievc.transmission_gain || ievc.min_radius != self.ievc.min_radius {
            self.ievc = ievc;
        } else {
            self.ievc.exact_continuation = cfg.ievc.exact_continuation;
            self.ievc.line_of_sight = cfg.ievc.line_of_sight;
        }
        self.sensor = sensor;
        self.soft = soft;
        self.cfg = cfg;
        Ok(())
    }

    /// Runs one control period with `user` supplying the true handle force.
    pub fn step(&mut self, user: &mut dyn ForceSource) -> StepRecord {
        let force = user.force(self.time(), &self.plant);
        self.step_with_force(force)
    }

    /// Runs one control period with a given true handle force.
    pub fn step_with_force(&mut self, true_force: Vec2) -> StepRecord {
        let t = self.time();
        let measured = self.plant;
        let force = self.sensor.read(true_force, self.step);
        let mut rec = StepRecord {
            step: self.step,
            t,
            position: measured.position,
            velocity: measured.velocity,
            command: Vec2::ZERO,
            force,
            assist: force,
            revision: self.map.revision(),
            mode: self.cfg.mode,
            status: IevcStatus::Idle,
            fault: None,
            leader: None,
        };

        if !self.paused {
            match self.cfg.mode {
                Mode::Powered => self.powered(&mut rec),
                Mode::Transparent | Mode::AanHard => self.admitted(&mut rec, force),
                Mode::AanSoft | Mode::GuidedImpedance => self.soft_step(&mut rec, force),
            }
        }

        let setpoint = shape_command(rec.command, &self.plant, &self.cfg.plant);
        self.plant = plant_step(setpoint, &self.plant, &self.cfg.plant);
        self.step += 1;
        rec
    }

    fn powered(&mut self, rec: &mut StepRecord) {
        let out = self
            .regulator
            .command(rec.position, self.cfg.powered_speed, &self.map, &self.ievc);
        rec.command = out.velocity;
        rec.status = out.status;
        if out.status == IevcStatus::Stranded {
            rec.fault = Some(Fault::Stranded);
        }
    }

    /// Admittance then IEVC on the active map, from force `f`.
    fn admitted(&mut self, rec: &mut StepRecord, f: Vec2) {
        let k_r = self.cfg.admittance.transmission_ratio;
        let v_d = match admittance_step(f, &mut self.admittance, &self.cfg.admittance) {
            Ok(v) => v,
            Err(_) => {
                rec.fault = Some(Fault::NonFiniteForce);
                self.admittance.last_velocity
            }
        };
        // Saturate before the restriction so the plant never distorts the
        // chosen direction and the look-ahead ring stays within reach.
        let desired = (v_d * (1000.0 * k_r)).clamp_norm(self.cfg.plant.max_speed);
        let out = ievc_step(&KinematicState::new(rec.position, desired), self.active_map(), &self.ievc);
        rec.command = out.velocity;
        rec.status = out.status;
        if out.status == IevcStatus::Stranded && rec.fault.is_none() {
            rec.fault = Some(Fault::Stranded);
        }
        // Momentum removed by the restriction is lost, as at a real wall.
        self.admittance.last_velocity = out.velocity / (1000.0 * k_r);
    }

    fn soft_step(&mut self, rec: &mut StepRecord, f: Vec2) {
        let Some(soft) = &self.soft else {
            rec.fault = Some(Fault::MissingSoftMaps);
            return;
        };
        if soft.source_revision() != self.map.revision() {
            rec.fault = Some(Fault::StaleSpringMap {
                map: self.map.revision(),
                spring: soft.source_revision(),
            });
            return;
        }
        if !f.is_finite() {
            rec.fault = Some(Fault::NonFiniteForce);
            rec.command = self.admittance.velocity_mm() * self.cfg.admittance.transmission_ratio;
            return;
        }
        let p = self.cfg.impedance;
        let v_last = self.admittance.velocity_mm() * self.cfg.admittance.transmission_ratio;
        let assist = match self.cfg.mode {
            Mode::GuidedImpedance => {
                let out = self
                    .leader
                    .regulator
                    .command(self.leader.position, self.cfg.leading_speed, &self.map, &self.ievc);
                self.leader.velocity = out.velocity;
                self.leader.position += out.velocity * self.cfg.timestep;
                rec.leader = Some(self.leader.position);
                let e = self.leader.position - rec.position;
                let dir = e.normalize_or_zero();
                f + dir * (p.stiffness * e.norm().min(p.zone_width))
                    + dir * (p.damper * (v_last - self.leader.velocity).dot(dir))
            }
            _ => impedance_step(f, v_last, rec.position, &soft.spring, &p),
        };
        rec.assist = assist;
        self.admitted(rec, assist);
    }
}

fn check_soft(map: &MotionRestrictionMap, soft: &SoftMaps) -> Result<()> {
    if soft.spring.geometry() != map.geometry() || soft.roam.geometry() != map.geometry() {
        return Err(Error::InvalidGeometry("soft map geometry differs from restriction map".into()));
    }
    if soft.source_revision() != map.revision() {
        return Err(Error::StaleMap(format!(
            "spring map built from revision {}, map is at {}",
            soft.source_revision(),
            map.revision()
        )));
    }
    Ok(())
}

/// A command to apply just before step `at`.
#[derive(Debug, Clone)]
pub struct Scheduled {
    pub at: u64,
    pub command: Command,
}

#[derive(Debug, Clone, Default)]
pub struct SessionTrace {
    pub timestep: f64,
    pub records: Vec<StepRecord>,
    /// First run-ending fault and the step it occurred at.
    pub fault: Option<(u64, Fault)>,
}

pub const TRACE_CSV_HEADER: &str = "t,px,py,vx,vy,cmdx,cmdy,fx,fy,fox,foy,rev";

impl SessionTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.records.iter().map(|r| r.position).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.position.x,
                r.position.y,
                r.velocity.x,
                r.velocity.y,
                r.command.x,
                r.command.y,
                r.force.x,
                r.force.y,
                r.assist.x,
                r.assist.y,
                r.revision
            )?;
        }
        Ok(())
    }
}

/// Steps `session` `steps` times, applying scheduled commands at their step
/// boundaries. Stops early on a run-ending fault or a rejected command.
pub fn run_session(
    session: &mut Session,
    steps: u64,
    user: &mut dyn ForceSource,
    schedule: impl IntoIterator<Item = Scheduled>,
) -> Result<SessionTrace> {
    let mut schedule: Vec<Scheduled> = schedule.into_iter().collect();
    schedule.sort_by_key(|s| s.at);
    let mut pending = schedule.into_iter().peekable();
    let mut trace = SessionTrace {
        timestep: session.cfg.timestep,
        records: Vec::with_capacity(steps.min(1 << 24) as usize),
        fault: None,
    };
    let first = session.step_index();
    for k in first..first + steps {
        while let Some(s) = pending.next_if(|s| s.at <= k) {
            session.apply(s.command)?;
        }
        let rec = session.step(user);
        trace.records.push(rec);
        if let Some(f) = rec.fault.filter(|f| f.ends_run()) {
            trace.fault = Some((rec.step, f));
            break;
        }
    }
    Ok(trace)
}

/// Number of steps covering `duration` seconds.
pub fn steps_for(duration: f64, timestep: f64) -> u64 {
    (duration / timestep).round().max(0.0) as u64
}
