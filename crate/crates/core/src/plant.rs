//! Simulated gantry: velocity-tracked, non-backdrivable axes and a noisy
//! force sensor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Inner velocity-loop model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityLoop {
    /// The axis tracks the command exactly, subject to the rate limit.
    #[default]
    RateLimited,
    /// The axis approaches the command with time constant `tau` (s).
    FirstOrderLag { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Per-axis speed limit (mm/s).
    pub max_speed: f64,
    /// Per-axis acceleration limit (mm/s^2).
    pub max_accel: f64,
    /// Lead screw pitch (mm/rev).
    pub screw_pitch: f64,
    pub timestep: f64,
    pub velocity_loop: VelocityLoop,
}

impl Default for PlantParams {
    fn default() -> Self {
        // 80 rev/s and 800 rev/s^2 on a 2 mm/rev screw.
        Self {
            max_speed: 160.0,
            max_accel: 1600.0,
            screw_pitch: 2.0,
            timestep: 1e-3,
            velocity_loop: VelocityLoop::RateLimited,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("max speed", self.max_speed),
            ("max acceleration", self.max_accel),
            ("screw pitch", self.screw_pitch),
            ("timestep", self.timestep),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if let VelocityLoop::FirstOrderLag { tau } = self.velocity_loop {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::InvalidParams(format!("lag time constant must be > 0, got {tau}")));
            }
        }
        Ok(())
    }

    /// Motor speed (rev/s) for an axis velocity (mm/s).
    pub fn motor_speed(&self, axis_velocity: f64) -> f64 {
        axis_velocity / self.screw_pitch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    /// End-effector position (mm).
    pub position: Vec2,
    /// End-effector velocity (mm/s).
    pub velocity: Vec2,
    /// Last velocity command (mm/s).
    pub command: Vec2,
}

impl PlantState {
    pub fn at(position: Vec2) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }
}

fn axis_step(v: f64, cmd: f64, p: &PlantParams) -> f64 {
    let cmd = if cmd.is_finite() { cmd.clamp(-p.max_speed, p.max_speed) } else { 0.0 };
    let dv_max = p.max_accel * p.timestep;
    let wanted = match p.velocity_loop {
        VelocityLoop::RateLimited => cmd - v,
        VelocityLoop::FirstOrderLag { tau } => (cmd - v) * (1.0 - (-p.timestep / tau).exp()),
    };
    v + wanted.clamp(-dv_max, dv_max)
}

/// Setpoint generator: moves the velocity setpoint from the current plant
/// velocity toward `command` by at most one step of the acceleration budget,
/// measured as a vector. The per-axis limits then never bind, so the plant
/// velocity always lies between its old value and the command.
pub fn shape_command(command: Vec2, state: &PlantState, p: &PlantParams) -> Vec2 {
    if !command.is_finite() {
        return command;
    }
    let target = command.clamp_norm(p.max_speed);
    state.velocity + (target - state.velocity).clamp_norm(p.max_accel * p.timestep)
}

/// Advances the plant one timestep toward `command`. A non-finite command
/// component is treated as a stop request on that axis.
pub fn plant_step(command: Vec2, state: &PlantState, p: &PlantParams) -> PlantState {
    let v = Vec2::new(
        axis_step(state.velocity.x, command.x, p),
        axis_step(state.velocity.y, command.y, p),
    );
    PlantState {
        position: state.position + (state.velocity + v) * (0.5 * p.timestep),
        velocity: v,
        command,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorParams {
    /// Per-axis uniform noise half-width (N).
    pub noise: f64,
    pub seed: u64,
}

/// Force sensor with reproducible additive noise.
#[derive(Debug, Clone)]
pub struct SensorModel {
    noise: f64,
    rng: ChaCha8Rng,
}

impl SensorModel {
    pub fn new(params: SensorParams) -> Result<Self> {
        if !(params.noise.is_finite() && params.noise >= 0.0) {
            return Err(Error::InvalidParams(format!("noise must be >= 0, got {}", params.noise)));
        }
        Ok(Self {
            noise: params.noise,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        })
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Sampled force at step `step`. The noise depends only on the seed and
    /// the step index, not on call history.
    pub fn read(&mut self, true_force: Vec2, step: u64) -> Vec2 {
        if self.noise == 0.0 {
            return true_force;
        }
        self.rng.set_word_pos(u128::from(step) * 4);
        let n = self.noise;
        true_force + Vec2::new(self.rng.random_range(-n..=n), self.rng.random_range(-n..=n))
    }
}
