//! Per-step cost against grid size and map complexity.

use std::hint::black_box;
use std::time::{Duration, Instant};

use gard_core::geometry::Vec2;
use gard_core::grid::{Cell, GridGeometry};
use gard_core::ievc::{circle_map, RingCache};
use gard_core::impedance::{impedance_step, ImpedanceParams};
use gard_core::map::{Region, PROHIBITED};
use gard_core::session::{Command, Mode, Session, SessionConfig, SoftMaps};
use gard_core::user::{ForceSource, PdUser, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::{linear_fit, Options};
use crate::report::{Bound, ExperimentReport};
use crate::trajectories::{self, CIRCLE_RADIUS};
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct ComplexityOptions {
    /// Long-edge cell counts; the short edge keeps the 2200:1700 aspect.
    pub sizes: Vec<usize>,
    pub warmup_steps: u64,
    pub timed_steps: u64,
    pub repeats: usize,
    pub impedance_lookups: usize,
}

impl Default for ComplexityOptions {
    fn default() -> Self {
        Self {
            sizes: vec![256, 512, 1024, 2200],
            warmup_steps: 1000,
            timed_steps: 20_000,
            repeats: 3,
            impedance_lookups: 400_000,
        }
    }
}

fn geometry_for(n: usize) -> Result<GridGeometry> {
    let h = ((n as f64) * 1700.0 / 2200.0).round() as usize;
    Ok(GridGeometry::centered(n, h, 650.0 / n as f64)?)
}

fn timed_steps(session: &mut Session, user: &mut dyn ForceSource, steps: u64) -> Duration {
    let start = Instant::now();
    for _ in 0..steps {
        black_box(session.step(user));
    }
    start.elapsed()
}

fn chaser() -> PdUser {
    PdUser::new(
        Target::Circle {
            center: Vec2::ZERO,
            radius: CIRCLE_RADIUS,
            angular_rate: 0.2,
            phase: 0.0,
            ramp: 0.5,
        },
        0.5,
        0.05,
    )
}

/// Soft-boundary session on the circle band at `geom`, warmed up.
fn soft_session(geom: GridGeometry, warmup: u64, user: &mut dyn ForceSource) -> Result<Session> {
    let t = trajectories::circle(geom)?;
    let cfg = SessionConfig {
        mode: Mode::AanSoft,
        start: t.start,
        impedance: ImpedanceParams::for_resolution(0.1, 0.0, 6, geom.resolution()),
        ..SessionConfig::default()
    };
    let mut s = Session::new(cfg, t.map)?;
    for _ in 0..warmup {
        s.step(user);
    }
    Ok(s)
}

pub fn complexity(opts: &Options, c: &ComplexityOptions) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("complexity", opts.seed, json!({ "options": c }));
    let mut points = Vec::new();
    let mut preset_mean = f64::NAN;
    for &n in &c.sizes {
        let geom = geometry_for(n)?;
        let mut user = chaser();
        let mut s = soft_session(geom, c.warmup_steps, &mut user)?;
        let from = s.plant().position;
        let best = (0..c.repeats.max(1))
            .map(|_| timed_steps(&mut s, &mut user, c.timed_steps))
            .min()
            .unwrap_or_default();
        let mean_us = best.as_secs_f64() * 1e6 / c.timed_steps as f64;
        report.row(
            format!("n{n}"),
            [
                ("long_edge_cells", n as f64),
                ("resolution_mm", geom.resolution()),
                ("mean_step_us", mean_us),
                ("displacement_mm", s.plant().position.distance(from)),
            ],
        );
        points.push(((n as f64).ln(), mean_us.ln()));
        if n == 2200 {
            preset_mean = mean_us;
        }
    }
    let (slope, _, _) = linear_fit(&points);
    report.metric("loglog_slope", slope, "", Bound::AtMost(1.15));
    report.metric("preset_mean_step", preset_mean, "us", Bound::AtMost(50.0)).reference = Some(10.0);

    ring_cache_timing(&mut report);
    edit_cost(&mut report, c)?;
    impedance_invariance(&mut report, c, opts.seed)?;
    Ok(report)
}

fn ring_cache_timing(report: &mut ExperimentReport) {
    let cache = RingCache::new();
    let radii: Vec<u32> = (20..60).collect();
    let cold = Instant::now();
    for &r in &radii {
        black_box(cache.get(r));
    }
    let cold = cold.elapsed();
    let warm = Instant::now();
    for &r in &radii {
        black_box(cache.get(r));
    }
    let warm = warm.elapsed();
    let direct = Instant::now();
    black_box(circle_map(59));
    report.metric(
        "ring_cache_cold_over_warm",
        cold.as_secs_f64() / warm.as_secs_f64().max(1e-9),
        "",
        Bound::None,
    );
    report.metric("ring_build_r59", direct.elapsed().as_secs_f64() * 1e6, "us", Bound::None);
}

/// Per-step cost before and after a batch of live map edits.
fn edit_cost(report: &mut ExperimentReport, c: &ComplexityOptions) -> Result<()> {
    let geom = geometry_for(2200)?;
    let t = trajectories::circle(geom)?;
    let cfg = SessionConfig {
        mode: Mode::AanHard,
        start: t.start,
        ..SessionConfig::default()
    };
    let mut user = chaser();
    let mut s = Session::new(cfg, t.map)?;
    timed_steps(&mut s, &mut user, c.warmup_steps);
    let before = timed_steps(&mut s, &mut user, c.timed_steps);
    for k in 0..50i64 {
        let a = Cell::new(10 + 20 * k, 10);
        s.apply(Command::EditMap {
            region: Region::Rect { a, b: a.offset(5, 5) },
            value: PROHIBITED,
        })?;
    }
    let after = timed_steps(&mut s, &mut user, c.timed_steps);
    report.metric(
        "step_cost_after_edits_ratio",
        after.as_secs_f64() / before.as_secs_f64(),
        "",
        Bound::None,
    );
    Ok(())
}

/// Impedance lookup time on a straight-line map vs a cluttered maze of the
/// same size, over the same positions.
fn impedance_invariance(report: &mut ExperimentReport, c: &ComplexityOptions, seed: u64) -> Result<()> {
    let geom = geometry_for(2200)?;
    let p = ImpedanceParams::for_resolution(0.1, -0.001, 6, geom.resolution());
    let mut line = gard_core::map::MotionRestrictionMap::new(geom);
    line.edit_region(
        &Region::Stroke {
            points: vec![Vec2::new(-300.0, 0.0), Vec2::new(300.0, 0.0)],
            width_cells: 3.0,
        },
        gard_core::map::PERMITTED,
    );
    let maze = trajectories::checker_clutter(geom, 9);
    let springs = [SoftMaps::build(&line, &p)?.spring, SoftMaps::build(&maze, &p)?.spring];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = geom.bounds();
    let positions: Vec<Vec2> = (0..c.impedance_lookups)
        .map(|_| Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y)))
        .collect();
    let mut best = [f64::INFINITY; 2];
    for _ in 0..5 {
        for (i, spr) in springs.iter().enumerate() {
            let start = Instant::now();
            let mut acc = Vec2::ZERO;
            for &pos in &positions {
                acc += impedance_step(Vec2::ZERO, Vec2::new(10.0, 0.0), pos, spr, &p);
            }
            black_box(acc);
            best[i] = best[i].min(start.elapsed().as_secs_f64());
        }
    }
    let per = |t: f64| t * 1e9 / c.impedance_lookups as f64;
    report.metric("impedance_lookup_line", per(best[0]), "ns", Bound::None);
    report.metric("impedance_lookup_maze", per(best[1]), "ns", Bound::None);
    report.metric("impedance_maze_over_line", best[1] / best[0], "", Bound::AtMost(1.2));
    report.metric("impedance_line_over_maze", best[0] / best[1], "", Bound::AtMost(1.2));
    Ok(())
}
