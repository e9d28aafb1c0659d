//! Mode equivalence, force invariance and randomized confinement.

use gard_core::admittance::AdmittanceParams;
use gard_core::geometry::Vec2;
use gard_core::grid::GridGeometry;
use gard_core::metrics::distance_outside;
use gard_core::session::{Mode, Session, SessionConfig, StepRecord};
use gard_core::user::{ForceSource, NoForce, RandomForce};
use serde_json::json;

use super::Options;
use crate::report::{Bound, ExperimentReport};
use crate::trajectories::{self, Trajectory};
use crate::Result;

pub const FUZZ_FORCE: f64 = 30.0;
pub const FUZZ_HOLD_STEPS: u64 = 200;
const MAZE_CORRIDOR: f64 = 40.0;
const MAZE_WALL: f64 = 60.0;

fn fuzz_admittance() -> AdmittanceParams {
    AdmittanceParams::default()
}

fn config(mode: Mode, start: Vec2, heading: Option<Vec2>) -> SessionConfig {
    SessionConfig {
        mode,
        start,
        initial_heading: heading,
        admittance: fuzz_admittance(),
        ..SessionConfig::default()
    }
}

fn maze() -> Trajectory {
    let geom = GridGeometry::default_workspace();
    let map = trajectories::serpentine_maze(geom, MAZE_CORRIDOR, MAZE_WALL);
    let (lo, _) = geom.bounds();
    let start = lo + Vec2::new(MAZE_WALL / 2.0 + MAZE_CORRIDOR / 2.0, MAZE_WALL / 2.0 + MAZE_CORRIDOR / 2.0);
    Trajectory {
        name: "maze",
        map,
        start,
        heading: Vec2::new(1.0, 0.0),
        path: Vec::new(),
        closed: false,
    }
}

fn records(cfg: SessionConfig, t: &Trajectory, steps: u64, user: &mut dyn ForceSource) -> Result<Vec<StepRecord>> {
    let mut s = Session::new(cfg, t.map.clone())?;
    Ok((0..steps).map(|_| s.step(user)).collect())
}

fn bits(v: Vec2) -> (u64, u64) {
    (v.x.to_bits(), v.y.to_bits())
}

fn same_kinematics(a: &StepRecord, b: &StepRecord) -> bool {
    bits(a.position) == bits(b.position) && bits(a.velocity) == bits(b.velocity) && bits(a.command) == bits(b.command)
}

/// Transparent against hard-boundary assist, and powered with against
/// without handle force.
pub fn mode_equivalence(opts: &Options) -> Result<ExperimentReport> {
    const STEPS: u64 = 60_000;
    let geom = GridGeometry::default_workspace();
    let maps = [trajectories::circle(geom)?, maze(), trajectories::hand_drawn_loop(geom)];
    let mut report = ExperimentReport::new(
        "mode_equivalence",
        opts.seed,
        json!({ "steps": STEPS, "force_n": FUZZ_FORCE, "hold_steps": FUZZ_HOLD_STEPS }),
    );

    let mut differing = 0usize;
    for (i, t) in maps.iter().enumerate() {
        let seed = opts.seed.wrapping_add(i as u64);
        let a = records(config(Mode::Transparent, t.start, None), t, STEPS, &mut RandomForce::new(seed, FUZZ_FORCE, FUZZ_HOLD_STEPS))?;
        let b = records(config(Mode::AanHard, t.start, None), t, STEPS, &mut RandomForce::new(seed, FUZZ_FORCE, FUZZ_HOLD_STEPS))?;
        differing += a
            .iter()
            .zip(&b)
            .filter(|(x, y)| !same_kinematics(x, y) || bits(x.force) != bits(y.force))
            .count();
    }
    report.metric("transparent_vs_hard_differing_steps", differing as f64, "", Bound::AtMost(0.0));

    let mut variant = 0usize;
    for (i, t) in maps.iter().enumerate() {
        let cfg = config(Mode::Powered, t.start, Some(t.heading));
        let quiet = records(cfg.clone(), t, STEPS, &mut NoForce)?;
        let pushed = records(cfg, t, STEPS, &mut RandomForce::new(opts.seed ^ (i as u64 + 99), FUZZ_FORCE, FUZZ_HOLD_STEPS))?;
        variant += quiet.iter().zip(&pushed).filter(|(x, y)| !same_kinematics(x, y)).count();
    }
    report.metric("powered_force_variant_steps", variant as f64, "", Bound::AtMost(0.0));
    Ok(report)
}

/// Randomized-force runs in every mode, counting steps that end more than
/// one cell outside the active permitted area.
pub fn confinement(opts: &Options, steps: u64) -> Result<ExperimentReport> {
    let geom = GridGeometry::default_workspace();
    let circle = trajectories::circle(geom)?;
    let maze = maze();
    let mut report = ExperimentReport::new(
        "confinement",
        opts.seed,
        json!({
            "steps_per_mode": steps,
            "force_n": FUZZ_FORCE,
            "hold_steps": FUZZ_HOLD_STEPS,
            "maze": { "corridor_mm": MAZE_CORRIDOR, "wall_mm": MAZE_WALL },
        }),
    );
    let cases = [
        (Mode::Transparent, &maze),
        (Mode::AanHard, &maze),
        (Mode::AanSoft, &maze),
        (Mode::Transparent, &circle),
        (Mode::AanHard, &circle),
        (Mode::AanSoft, &circle),
        (Mode::Powered, &circle),
        (Mode::GuidedImpedance, &circle),
    ];
    for (i, (mode, t)) in cases.into_iter().enumerate() {
        let heading = (mode == Mode::Powered).then_some(t.heading);
        let mut s = Session::new(config(mode, t.start, heading), t.map.clone())?;
        let mut user = RandomForce::new(opts.seed.wrapping_add(1000 + i as u64), FUZZ_FORCE, FUZZ_HOLD_STEPS);
        let cell = geom.resolution();
        let mut violations = 0u64;
        let mut worst = 0.0f64;
        let mut travelled = 0.0;
        let mut last = s.plant().position;
        for _ in 0..steps {
            s.step(&mut user);
            let p = s.plant().position;
            travelled += p.distance(last);
            last = p;
            let d = distance_outside(s.active_map(), p);
            worst = worst.max(d);
            if d > cell {
                violations += 1;
            }
        }
        let label = format!("{mode}_{}", t.name);
        report.row(
            label.clone(),
            [
                ("violations", violations as f64),
                ("max_outside_mm", worst),
                ("travelled_mm", travelled),
            ],
        );
        report.metric(format!("{label}_violations"), violations as f64, "", Bound::AtMost(0.0));
    }
    Ok(report)
}
