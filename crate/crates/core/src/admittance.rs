//! Admittance virtual dynamics: measured force in, desired velocity out.
//!
//! The end-effector is made to behave like a virtual mass with viscous
//! damping and Coulomb friction. Internals are SI (N, kg, m/s); callers
//! working in millimetres convert at the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Gravitational acceleration used by the friction term.
pub const GRAVITY: f64 = 9.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmittanceParams {
    /// Virtual mass m_v (kg).
    pub virtual_mass: f64,
    /// Velocity-proportional damping coefficient (N·s/m).
    pub damping: f64,
    /// Coulomb friction coefficient μ.
    pub friction: f64,
    /// Motor-to-end-effector velocity ratio k_r.
    pub transmission_ratio: f64,
    /// Timestep T_s (s).
    pub timestep: f64,
}

impl Default for AdmittanceParams {
    fn default() -> Self {
        Self {
            virtual_mass: 10.0,
            damping: 0.0,
            friction: 0.02,
            transmission_ratio: 1.0,
            timestep: 1e-3,
        }
    }
}

impl AdmittanceParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.virtual_mass) && self.virtual_mass > 0.0) {
            return Err(Error::InvalidParams(format!("virtual mass must be > 0, got {}", self.virtual_mass)));
        }
        if !(ok(self.timestep) && self.timestep > 0.0) {
            return Err(Error::InvalidParams(format!("timestep must be > 0, got {}", self.timestep)));
        }
        if !(ok(self.transmission_ratio) && self.transmission_ratio > 0.0) {
            return Err(Error::InvalidParams(format!(
                "transmission ratio must be > 0, got {}",
                self.transmission_ratio
            )));
        }
        if !(ok(self.friction) && self.friction >= 0.0) {
            return Err(Error::InvalidParams(format!("friction must be >= 0, got {}", self.friction)));
        }
        if !(ok(self.damping) && self.damping >= 0.0) {
            return Err(Error::InvalidParams(format!("damping must be >= 0, got {}", self.damping)));
        }
        Ok(())
    }

    /// Mobility Y_m = T_s / (m_v k_r).
    pub fn mobility(&self) -> f64 {
        self.timestep / self.virtual_mass / self.transmission_ratio
    }
}

/// Previous force (N) and previous desired velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdmittanceState {
    pub last_force: Vec2,
    pub last_velocity: Vec2,
}

impl AdmittanceState {
    pub fn at_rest() -> Self {
        Self::default()
    }

    /// Desired velocity in mm/s.
    pub fn velocity_mm(&self) -> Vec2 {
        self.last_velocity * 1000.0
    }
}

/// Advances the virtual dynamics one step and returns the desired velocity
/// V_d in m/s.
///
/// A non-finite force leaves `state` untouched and returns an error.
pub fn admittance_step(force: Vec2, state: &mut AdmittanceState, p: &AdmittanceParams) -> Result<Vec2> {
    if !force.is_finite() {
        return Err(Error::NonFiniteForce { x: force.x, y: force.y });
    }
    let ym = p.mobility();
    let mut v = state.last_velocity * (1.0 - p.damping * ym);
    v += (force + state.last_force) * (0.5 * ym);

    let speed = v.norm();
    let slowed = (speed - p.virtual_mass * GRAVITY * p.friction * ym).max(0.0);
    let v_d = if speed > 0.0 { v * (slowed / speed) } else { Vec2::ZERO };

    state.last_force = force;
    state.last_velocity = v_d;
    Ok(v_d)
}
