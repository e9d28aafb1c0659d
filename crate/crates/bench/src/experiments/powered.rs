//! Powered-mode trajectory following.

use std::time::Instant;

use gard_core::geometry::Vec2;
use gard_core::grid::GridGeometry;
use gard_core::metrics::{distance_outside, max_violation, mean_absolute_error};
use gard_core::plant::{plant_step, PlantParams, PlantState};
use gard_core::session::{steps_for, Mode, SessionConfig};
use gard_core::user::NoForce;
use serde_json::json;

use super::{keep_trace, simulate, Options};
use crate::report::{Bound, ExperimentReport};
use crate::trajectories::{self, Trajectory, CIRCLE_RADIUS};
use crate::Result;

const SPEED: f64 = 50.0;

fn powered_config(t: &Trajectory, speed: f64) -> SessionConfig {
    SessionConfig {
        mode: Mode::Powered,
        start: t.start,
        initial_heading: Some(t.heading),
        powered_speed: speed,
        ..SessionConfig::default()
    }
}

fn travelled(positions: &[Vec2]) -> f64 {
    positions.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Powered following on two equation-defined and two hand-drawn bands.
pub fn band_following(opts: &Options) -> Result<ExperimentReport> {
    let geom = GridGeometry::default_workspace();
    let trajs = [
        (trajectories::infinity(geom)?, 0.00823),
        (trajectories::circle(geom)?, 0.023),
        (trajectories::hand_drawn_loop(geom), 0.00878),
        (trajectories::hand_drawn_line(geom), 0.00763),
    ];
    let mut report = ExperimentReport::new(
        "fig6",
        opts.seed,
        json!({ "speed_mm_s": SPEED, "config": powered_config(&trajs[0].0, SPEED) }),
    );
    let mut maes = Vec::new();
    for (t, reference) in &trajs {
        // Three circuits of a closed band; an open line is walked end to end
        // and back twice.
        let laps = if t.closed { 3.0 } else { 4.0 };
        let duration = laps * t.path_length() / SPEED;
        let steps = steps_for(duration, 1e-3);
        let trace = simulate(powered_config(t, SPEED), t.map.clone(), None, steps, &mut NoForce)?;
        let pos = trace.positions();
        let mae = mean_absolute_error(&t.map, &pos);
        let worst = max_violation(&t.map, &pos);
        let dist = travelled(&pos);
        report.metric(format!("{}_mae", t.name), mae, "mm", Bound::AtMost(0.1)).reference = Some(*reference);
        report.metric(format!("{}_travel_fraction", t.name), dist / (SPEED * duration), "", Bound::AtLeast(0.5));
        report.row(
            t.name,
            [
                ("mae_mm", mae),
                ("max_mm", worst),
                ("travel_mm", dist),
                ("duration_s", duration),
            ],
        );
        keep_trace(opts, &mut report, t.name, &trace)?;
        maes.push(mae);
    }
    let mean = maes.iter().sum::<f64>() / maes.len() as f64;
    report.metric("average_mae", mean, "mm", Bound::AtMost(0.1)).reference = Some(0.012);

    let circle = &trajs[1].0;
    let still = simulate(powered_config(circle, 0.0), circle.map.clone(), None, 2000, &mut NoForce)?;
    let still_pos = still.positions();
    report.metric("zero_speed_mae", mean_absolute_error(&circle.map, &still_pos), "mm", Bound::AtMost(0.0));
    report.metric("zero_speed_travel", travelled(&still_pos), "mm", Bound::AtMost(0.0));
    Ok(report)
}

/// Radial drift of explicit tangent marching around the circle on the same
/// plant: command `s_d` along the local tangent every step.
pub fn tangent_marching_drift(laps: f64, speed: f64) -> (f64, f64) {
    let p = PlantParams::default();
    let mut s = PlantState::at(Vec2::new(CIRCLE_RADIUS, 0.0));
    let steps = steps_for(laps * std::f64::consts::TAU * CIRCLE_RADIUS / speed, p.timestep);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let tangent = s.position.perp().normalize_or_zero();
        s = plant_step(tangent * speed, &s, &p);
        worst = worst.max((s.position.norm() - CIRCLE_RADIUS).abs());
    }
    (worst, s.position.norm() - CIRCLE_RADIUS)
}

/// Ten powered laps: error must not grow lap over lap, while tangent
/// marching on the same plant drifts off.
pub fn non_accumulation(opts: &Options) -> Result<ExperimentReport> {
    let clock = Instant::now();
    let geom = GridGeometry::default_workspace();
    let t = trajectories::circle(geom)?;
    let cfg = powered_config(&t, SPEED);
    let mut report = ExperimentReport::new("non_accumulation", opts.seed, json!({ "laps": 10, "config": cfg }));
    let lap_steps = steps_for(std::f64::consts::TAU * CIRCLE_RADIUS / SPEED, cfg.timestep);
    let trace = simulate(cfg, t.map.clone(), None, 10 * lap_steps, &mut NoForce)?;
    let pos = trace.positions();
    report.metric("mae", mean_absolute_error(&t.map, &pos), "mm", Bound::AtMost(0.1)).reference = Some(0.023);

    let mut outside = Vec::new();
    for (k, lap) in pos.chunks(lap_steps as usize).take(10).enumerate() {
        let out = max_violation(&t.map, lap);
        let radial = lap
            .iter()
            .map(|p| (p.norm() - CIRCLE_RADIUS).abs())
            .fold(0.0, f64::max);
        report.row(format!("lap{}", k + 1), [("max_outside_mm", out), ("max_radial_mm", radial)]);
        outside.push(out);
    }
    let (first, last) = (outside[0], outside[outside.len() - 1]);
    report.metric("lap1_max_deviation", first, "mm", Bound::None);
    report.metric("lap10_minus_lap1_deviation", last - first, "mm", Bound::AtMost(0.05));

    let (drift, signed) = tangent_marching_drift(10.0, SPEED);
    report.metric("baseline_radial_drift", drift, "mm", Bound::Above(1.0));
    report.note(format!("baseline final radial offset {signed:+.3} mm"));
    keep_trace(opts, &mut report, "circle", &trace)?;
    report.metric("runtime", clock.elapsed().as_secs_f64(), "s", Bound::Below(30.0));
    Ok(report)
}

/// Start 10 mm off the circle moving tangentially; the distance to the band
/// must shrink geometrically per look-ahead interval.
pub fn reconvergence(opts: &Options) -> Result<ExperimentReport> {
    let geom = GridGeometry::default_workspace();
    let t = trajectories::circle(geom)?;
    let mut cfg = powered_config(&t, SPEED);
    cfg.start = Vec2::new(CIRCLE_RADIUS + 10.0, 0.0);
    cfg.ievc.lookahead = 0.3;
    let interval = steps_for(cfg.ievc.lookahead, cfg.timestep) as usize;
    let mut report = ExperimentReport::new("reconvergence", opts.seed, json!({ "config": cfg }));
    let trace = simulate(cfg, t.map.clone(), None, 20 * interval as u64, &mut NoForce)?;
    let d: Vec<f64> = trace
        .records
        .iter()
        .step_by(interval)
        .map(|r| distance_outside(&t.map, r.position))
        .collect();
    let d0 = d[0];
    let mut rate = 0.0f64;
    let mut reached = None;
    for (k, &dk) in d.iter().enumerate() {
        report.row(format!("k{k}"), [("distance_mm", dk)]);
        if dk < 0.2 {
            reached = reached.or(Some(k));
            continue;
        }
        if k > 0 && reached.is_none() {
            rate = rate.max((dk / d0).powf(1.0 / k as f64));
        }
    }
    report.metric("initial_distance", d0, "mm", Bound::AtLeast(5.0));
    report.metric("contraction_per_interval", rate, "", Bound::Below(0.95));
    report.metric(
        "intervals_to_0.2mm",
        reached.map_or(f64::INFINITY, |k| k as f64),
        "",
        Bound::Below(d.len() as f64),
    );
    keep_trace(opts, &mut report, "offset_start", &trace)?;
    Ok(report)
}
