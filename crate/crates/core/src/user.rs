//! Scripted force sources standing in for the person holding the handle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec2;
use crate::plant::PlantState;

/// Produces the true (noise-free) force on the handle at each step.
pub trait ForceSource: Send {
    fn force(&mut self, t: f64, state: &PlantState) -> Vec2;
}

impl<F> ForceSource for F
where
    F: FnMut(f64, &PlantState) -> Vec2 + Send,
{
    fn force(&mut self, t: f64, state: &PlantState) -> Vec2 {
        self(t, state)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoForce;

impl ForceSource for NoForce {
    fn force(&mut self, _: f64, _: &PlantState) -> Vec2 {
        Vec2::ZERO
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantForce(pub Vec2);

impl ForceSource for ConstantForce {
    fn force(&mut self, _: f64, _: &PlantState) -> Vec2 {
        self.0
    }
}

/// A moving point the scripted user tries to follow.
#[derive(Debug, Clone)]
pub enum Target {
    Fixed(Vec2),
    /// Counter-clockwise for positive `angular_rate`. The angular rate ramps
    /// up linearly over `ramp` seconds from a standstill.
    Circle {
        center: Vec2,
        radius: f64,
        angular_rate: f64,
        phase: f64,
        ramp: f64,
    },
    /// Constant-speed traversal of a polyline; wraps around when `closed`,
    /// otherwise stops at the last point.
    Polyline { points: Vec<Vec2>, speed: f64, closed: bool },
}

impl Target {
    /// Position and velocity of the target at time `t`.
    pub fn sample(&self, t: f64) -> (Vec2, Vec2) {
        match self {
            Target::Fixed(p) => (*p, Vec2::ZERO),
            &Target::Circle {
                center,
                radius,
                angular_rate,
                phase,
                ramp,
            } => {
                let (angle, rate) = if t < ramp {
                    (phase + angular_rate * t * t / (2.0 * ramp), angular_rate * t / ramp)
                } else {
                    (phase + angular_rate * (t - ramp / 2.0), angular_rate)
                };
                let radial = Vec2::from_polar(radius, angle);
                (center + radial, radial.perp() * rate)
            }
            Target::Polyline { points, speed, closed } => polyline_sample(points, *speed, *closed, t),
        }
    }
}

fn polyline_sample(points: &[Vec2], speed: f64, closed: bool, t: f64) -> (Vec2, Vec2) {
    match points {
        [] => (Vec2::ZERO, Vec2::ZERO),
        [p] => (*p, Vec2::ZERO),
        _ => {
            let mut segs: Vec<(Vec2, Vec2)> = points.windows(2).map(|w| (w[0], w[1])).collect();
            if closed {
                segs.push((points[points.len() - 1], points[0]));
            }
            let total: f64 = segs.iter().map(|(a, b)| a.distance(*b)).sum();
            if total <= 0.0 {
                return (points[0], Vec2::ZERO);
            }
            let mut s = speed * t;
            if closed {
                s = s.rem_euclid(total);
            } else if s >= total {
                return (*points.last().expect("non-empty"), Vec2::ZERO);
            }
            for (a, b) in &segs {
                let len = a.distance(*b);
                if s <= len && len > 0.0 {
                    let dir = (*b - *a) / len;
                    return (*a + dir * s, dir * speed);
                }
                s -= len;
            }
            (segs[segs.len() - 1].1, Vec2::ZERO)
        }
    }
}

/// Band-limited force wobble: a seeded sum of sinusoids per axis whose
/// peak never exceeds `amplitude`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tremor {
    amplitude: f64,
    /// (frequency Hz, phase rad) per component, x then y.
    components: [Vec<(f64, f64)>; 2],
}

impl Tremor {
    pub fn new(amplitude: f64, min_hz: f64, max_hz: f64, components: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut axis = || -> Vec<(f64, f64)> {
            (0..components.max(1))
                .map(|_| {
                    (
                        rng.random_range(min_hz..=max_hz),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect()
        };
        let x = axis();
        let y = axis();
        Self {
            amplitude,
            components: [x, y],
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn sample(&self, t: f64) -> Vec2 {
        let axis = |c: &[(f64, f64)]| {
            let sum: f64 = c.iter().map(|&(f, ph)| (std::f64::consts::TAU * f * t + ph).sin()).sum();
            self.amplitude * sum / c.len() as f64
        };
        Vec2::new(axis(&self.components[0]), axis(&self.components[1]))
    }
}

/// PD "hand" pulling the handle toward a moving target, saturated at a
/// strength cap. An optional integral term lets it hold a position against
/// a steady load.
#[derive(Debug, Clone)]
pub struct PdUser {
    pub target: Target,
    /// N/mm.
    pub kp: f64,
    /// N·s/mm.
    pub kd: f64,
    /// N.
    pub cap: f64,
    pub tremor: Option<Tremor>,
    /// N/(mm·s).
    pub ki: f64,
    integral: Vec2,
    last_t: Option<f64>,
}

impl PdUser {
    pub const DEFAULT_CAP: f64 = 30.0;

    pub fn new(target: Target, kp: f64, kd: f64) -> Self {
        Self {
            target,
            kp,
            kd,
            cap: Self::DEFAULT_CAP,
            tremor: None,
            ki: 0.0,
            integral: Vec2::ZERO,
            last_t: None,
        }
    }

    pub fn with_integral(mut self, ki: f64) -> Self {
        self.ki = ki;
        self
    }

    pub fn with_tremor(mut self, tremor: Tremor) -> Self {
        self.tremor = Some(tremor);
        self
    }
}

impl ForceSource for PdUser {
    fn force(&mut self, t: f64, state: &PlantState) -> Vec2 {
        let (p, v) = self.target.sample(t);
        let e = p - state.position;
        let dt = self.last_t.map_or(0.0, |last| (t - last).max(0.0));
        self.last_t = Some(t);
        let mut f = e * self.kp + (v - state.velocity) * self.kd + self.integral;
        if let Some(tr) = &self.tremor {
            f += tr.sample(t);
        }
        // No integration while saturated.
        if self.ki != 0.0 && f.norm() < self.cap {
            self.integral += e * (self.ki * dt);
        }
        f.clamp_norm(self.cap)
    }
}

/// Random force held piecewise constant, for confinement fuzzing.
#[derive(Debug, Clone)]
pub struct RandomForce {
    rng: ChaCha8Rng,
    magnitude: f64,
    hold_steps: u64,
    step: u64,
    current: Vec2,
}

impl RandomForce {
    pub fn new(seed: u64, magnitude: f64, hold_steps: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            magnitude,
            hold_steps: hold_steps.max(1),
            step: 0,
            current: Vec2::ZERO,
        }
    }
}

impl ForceSource for RandomForce {
    fn force(&mut self, _: f64, _: &PlantState) -> Vec2 {
        if self.step % self.hold_steps == 0 {
            let angle = self.rng.random_range(0.0..std::f64::consts::TAU);
            let mag = self.rng.random_range(0.0..=self.magnitude);
            self.current = Vec2::from_polar(mag, angle);
        }
        self.step += 1;
        self.current
    }
}
