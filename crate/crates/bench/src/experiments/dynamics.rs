//! Virtual dynamics: admittance ramp, mass sweep, noise robustness and the
//! spring characteristic.

use std::f64::consts::TAU;
use std::time::Instant;

use gard_core::admittance::{admittance_step, AdmittanceParams, AdmittanceState};
use gard_core::geometry::Vec2;
use gard_core::grid::GridGeometry;
use gard_core::impedance::{ImpedanceParams, SpringProfile1d};
use gard_core::map::{MotionRestrictionMap, PERMITTED};
use gard_core::metrics::mean_absolute_error;
use gard_core::session::{steps_for, Mode, SessionConfig, SoftMaps};
use gard_core::user::{NoForce, PdUser, Target, Tremor};
use serde_json::json;

use super::{keep_trace, linear_fit, simulate, Options};
use crate::report::{Bound, ExperimentReport};
use crate::trajectories;
use crate::Result;

/// One-dimensional spring profile of a permitted segment against its closed
/// form.
pub fn spring_profile_1d() -> Result<ExperimentReport> {
    let clock = Instant::now();
    let mut report = ExperimentReport::new(
        "fig5",
        0,
        json!({ "segment": [2.0, 6.0], "kernel_width": 1.0, "cell": 0.5 }),
    );
    let prof = SpringProfile1d {
        origin: 0.0,
        resolution: 0.5,
        permitted: (0..20).map(|i| (4..12).contains(&i)).collect(),
        kernel_width: 1.0,
        zone_width: 1.0,
    };
    let closed = |x: f64| -> f64 {
        if x <= 1.5 || x >= 6.5 {
            1.0
        } else if x < 2.5 {
            2.5 - x
        } else if x <= 5.5 {
            0.0
        } else {
            x - 5.5
        }
    };
    let mut err = 0.0f64;
    for i in 0..=10_000 {
        let x = 0.5 + 7.0 * i as f64 / 10_000.0;
        let d = prof.depth(x);
        err = err.max((d - closed(x)).abs());
        if i % 250 == 0 {
            report.row(format!("x{x:.3}"), [("x", x), ("depth", d), ("closed_form", closed(x))]);
        }
    }
    report.metric("max_abs_error", err, "", Bound::AtMost(1e-9));
    report.metric("runtime", clock.elapsed().as_secs_f64(), "s", Bound::Below(1.0));
    Ok(report)
}

/// Constant-force ramp and second-order convergence of the trapezoid update.
pub fn admittance_ramp() -> Result<ExperimentReport> {
    let p = AdmittanceParams {
        virtual_mass: 10.0,
        damping: 0.0,
        friction: 0.0,
        transmission_ratio: 1.0,
        timestep: 1e-3,
    };
    let mut report = ExperimentReport::new("admittance", 0, json!({ "params": p, "force_n": 10.0 }));
    let mut s = AdmittanceState::at_rest();
    let mut v = Vec2::ZERO;
    for _ in 0..1000 {
        v = admittance_step(Vec2::new(10.0, 0.0), &mut s, &p)?;
    }
    report.metric("velocity_after_1s", v.x, "m/s", Bound::None);
    report.metric("ramp_relative_error", (v.x - 1.0).abs(), "", Bound::AtMost(1e-3));

    let sine_error = |ts: f64| -> Result<f64> {
        let (m, f0, w) = (2.0, 5.0, TAU * 1.3);
        let p = AdmittanceParams {
            virtual_mass: m,
            timestep: ts,
            ..p
        };
        let mut s = AdmittanceState::at_rest();
        let n = (1.0 / ts).round() as usize;
        let mut v = Vec2::ZERO;
        for k in 1..=n {
            v = admittance_step(Vec2::new(f0 * (w * k as f64 * ts).sin(), 0.0), &mut s, &p)?;
        }
        Ok((v.x - f0 / m * (1.0 - w.cos()) / w).abs())
    };
    let errs = [sine_error(4e-3)?, sine_error(2e-3)?, sine_error(1e-3)?];
    for (ts, e) in [4e-3, 2e-3, 1e-3].iter().zip(errs) {
        report.row(format!("ts{ts}"), [("timestep_s", *ts), ("error_m_s", e)]);
    }
    report.metric("halving_ratio_4ms_2ms", errs[0] / errs[1], "", Bound::AtLeast(3.5));
    report.metric("halving_ratio_2ms_1ms", errs[1] / errs[2], "", Bound::AtLeast(3.5));
    Ok(report)
}

pub const MASS_SWEEP_MASSES: [f64; 6] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
const MASS_SWEEP_X: [f64; 6] = [2.45, 0.75, 0.41, 0.46, 0.37, 0.35];
const MASS_SWEEP_Y: [f64; 6] = [6.66, 1.0, 0.88, 0.68, 0.73, 0.56];
const MASS_SWEEP_FORCE: [f64; 6] = [2.08, 3.98, 6.04, 8.08, 9.87, 11.36];

/// Scripted user for the free circular task: PD pull toward a point going
/// round a 100 mm circle at 0.5 rad/s, plus a 1-4 Hz force wobble.
fn circle_chaser(seed: u64) -> PdUser {
    let target = Target::Circle {
        center: Vec2::ZERO,
        radius: 100.0,
        angular_rate: 0.5,
        phase: 0.0,
        ramp: 2.0,
    };
    PdUser::new(target, 0.5, 0.05).with_tremor(Tremor::new(10.0, 1.0, 4.0, 3, seed))
}

/// Desired-vs-measured velocity error when simulating different masses in
/// transparent mode.
pub fn mass_sweep(opts: &Options) -> Result<ExperimentReport> {
    let geom = GridGeometry::default_workspace();
    let map = MotionRestrictionMap::filled(geom, PERMITTED);
    let base = SessionConfig {
        mode: Mode::Transparent,
        start: Vec2::new(100.0, 0.0),
        ..SessionConfig::default()
    };
    let (duration, settle) = (30.0, 2.0);
    let mut report = ExperimentReport::new(
        "table2",
        opts.seed,
        json!({
            "config": base,
            "duration_s": duration,
            "settle_s": settle,
            "user": { "kp": 0.5, "kd": 0.05, "radius": 100.0, "rate": 0.5, "tremor_n": 10.0, "tremor_hz": [1.0, 4.0] }
        }),
    );
    let mut results = Vec::new();
    let masses = MASS_SWEEP_MASSES.iter().copied().chain([1e6]);
    for (i, m) in masses.enumerate() {
        let mut cfg = base.clone();
        cfg.admittance.virtual_mass = m;
        cfg.admittance.friction = 0.02;
        let trace = simulate(cfg, map.clone(), None, steps_for(duration, 1e-3), &mut circle_chaser(opts.seed))?;
        let recs = &trace.records[steps_for(settle, 1e-3) as usize..];
        let n = recs.len() as f64;
        let mae_x = recs.iter().map(|r| (r.command.x - r.velocity.x).abs()).sum::<f64>() / n;
        let mae_y = recs.iter().map(|r| (r.command.y - r.velocity.y).abs()).sum::<f64>() / n;
        let force = recs.iter().map(|r| r.force.norm()).sum::<f64>() / n;
        let speed = recs.iter().map(|r| r.velocity.norm()).sum::<f64>() / n;
        let budget = base.plant.max_accel * base.timestep;
        let limited = recs
            .windows(2)
            .filter(|w| (w[1].velocity - w[0].velocity).norm() >= budget - 1e-9)
            .count() as f64
            / n;
        let label = if m >= 1e5 { "limit".to_owned() } else { format!("{m}kg") };
        report.row(
            label.clone(),
            [
                ("mass_kg", m),
                ("mae_x_mm_s", mae_x),
                ("mae_y_mm_s", mae_y),
                ("mean_force_n", force),
                ("mean_speed_mm_s", speed),
                ("accel_limited_fraction", limited),
            ],
        );
        keep_trace(opts, &mut report, &label, &trace)?;
        if m >= 1e5 {
            report.metric("limit_mae_x", mae_x, "mm/s", Bound::AtMost(0.01));
            report.metric("limit_mae_y", mae_y, "mm/s", Bound::AtMost(0.01));
            continue;
        }
        let bound = if m >= 10.0 { Bound::AtMost(1.0) } else { Bound::None };
        report.metric(format!("mae_x_{m}kg"), mae_x, "mm/s", bound).reference = Some(MASS_SWEEP_X[i]);
        report.metric(format!("mae_y_{m}kg"), mae_y, "mm/s", bound).reference = Some(MASS_SWEEP_Y[i]);
        report.metric(format!("mean_force_{m}kg"), force, "N", Bound::None).reference = Some(MASS_SWEEP_FORCE[i]);
        results.push((mae_x, mae_y, limited));
    }
    report.check("mae_x_5kg_above_10kg", results[0].0 > results[1].0);
    report.check("mae_y_5kg_above_10kg", results[0].1 > results[1].1);
    report.metric("accel_limited_fraction_5kg", results[0].2, "", Bound::None);
    Ok(report)
}

const NOISE_LEVELS: [f64; 3] = [0.0, 3.8, 7.7];
const NOISE_MAE: [[f64; 3]; 2] = [[0.067, 0.061, 0.032], [0.134, 0.115, 0.113]];

/// Hard-boundary following under injected sensor noise.
pub fn noise_robustness(opts: &Options) -> Result<ExperimentReport> {
    let geom = GridGeometry::default_workspace();
    let trajs = [trajectories::circle(geom)?, trajectories::hand_drawn_loop(geom)];
    let speed = 50.0;
    let base = SessionConfig {
        mode: Mode::AanHard,
        ..SessionConfig::default()
    };
    let mut report = ExperimentReport::new(
        "table3",
        opts.seed,
        json!({ "config": base, "user": { "kp": 0.5, "kd": 0.05, "speed_mm_s": speed } }),
    );
    for (ti, t) in trajs.iter().enumerate() {
        let lap = t.path_length() / speed;
        for (ni, &noise) in NOISE_LEVELS.iter().enumerate() {
            let mut cfg = base.clone();
            cfg.start = t.start;
            cfg.sensor.noise = noise;
            cfg.sensor.seed = opts.seed;
            let target = Target::Polyline {
                points: t.path.clone(),
                speed,
                closed: t.closed,
            };
            let mut user = PdUser::new(target, 0.5, 0.05);
            let trace = simulate(cfg, t.map.clone(), None, steps_for(lap + 2.0, 1e-3), &mut user)?;
            let pos = trace.positions();
            let mae = mean_absolute_error(&t.map, &pos);
            let travel: f64 = pos.windows(2).map(|w| w[0].distance(w[1])).sum();
            let name = format!("{}_{}n", t.name, noise);
            report.metric(format!("{name}_mae"), mae, "mm", Bound::AtMost(0.3)).reference = Some(NOISE_MAE[ti][ni]);
            report.metric(format!("{name}_lap_fraction"), travel / t.path_length(), "", Bound::AtLeast(0.5));
            report.row(name.clone(), [("noise_n", noise), ("mae_mm", mae), ("travel_mm", travel)]);
            keep_trace(opts, &mut report, &name, &trace)?;
        }
    }
    let t = &trajs[0];
    let still = simulate(
        SessionConfig {
            start: t.start,
            ..base.clone()
        },
        t.map.clone(),
        None,
        2000,
        &mut NoForce,
    )?;
    report.metric("still_mae", mean_absolute_error(&t.map, &still.positions()), "mm", Bound::AtMost(0.0));
    report.note("reference errors fall as noise rises because the subject moved slower; not asserted here");
    Ok(report)
}

pub const CHARACTERISTIC_KERNEL_RADIUS: u32 = 70;
const CHARACTERISTIC_MASS: f64 = 10.0;

/// Hold the handle at a range of offsets from a point attractor and regress
/// the settled hand force against displacement.
pub fn spring_characteristic(opts: &Options) -> Result<ExperimentReport> {
    let geom = GridGeometry::centered(401, 401, 1.0)?;
    let imp = ImpedanceParams::for_resolution(0.1, 0.0, CHARACTERISTIC_KERNEL_RADIUS, 1.0);
    let map = trajectories::point_attractor(geom);
    // The handle must be free to explore the whole spring zone, beyond the
    // dilated map.
    let soft = SoftMaps::build(&map, &imp)?.with_roam(MotionRestrictionMap::filled(geom, PERMITTED))?;
    let zone = 2.0 * f64::from(CHARACTERISTIC_KERNEL_RADIUS);
    let base = SessionConfig {
        mode: Mode::AanSoft,
        impedance: imp,
        admittance: AdmittanceParams {
            virtual_mass: CHARACTERISTIC_MASS,
            friction: 0.0,
            ..AdmittanceParams::default()
        },
        ..SessionConfig::default()
    };
    let (lo, hi, n) = (0.2 * zone, 0.9 * zone, 12);
    let (kp, kd, ki, approach) = (2.0, 0.2, 4.0, 40.0);
    let mut report = ExperimentReport::new(
        "fig10",
        opts.seed,
        json!({ "config": base, "zone_radius_mm": zone, "fit_range_mm": [lo, hi], "holds": n, "user": { "kp": kp, "kd": kd, "ki": ki, "approach_mm_s": approach } }),
    );
    let hold = |target: Vec2| -> Result<(Vec2, Vec2)> {
        // The hand eases out to the hold point, then stays there.
        let path = Target::Polyline {
            points: vec![Vec2::ZERO, target],
            speed: approach,
            closed: false,
        };
        let steps = steps_for(target.norm() / approach + 4.0, 1e-3);
        let mut user = PdUser::new(path, kp, kd).with_integral(ki);
        let trace = simulate(base.clone(), map.clone(), Some(soft.clone()), steps, &mut user)?;
        let tail = &trace.records[trace.len() - 1000..];
        let k = tail.len() as f64;
        let f = tail.iter().fold(Vec2::ZERO, |a, r| a + r.force) / k;
        let p = tail.iter().fold(Vec2::ZERO, |a, r| a + r.position) / k;
        Ok((p, f))
    };
    let mut points = Vec::new();
    let mut worst_spring_error = 0.0f64;
    for i in 0..n {
        let r = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let angle = 0.37 * i as f64;
        let (p, f) = hold(Vec2::from_polar(r, angle))?;
        let spring = imp.stiffness * soft.spring.depth_at(geom.cell_of(p));
        worst_spring_error = worst_spring_error.max((f.norm() - spring).abs());
        report.row(
            format!("r{r:.1}"),
            [("target_mm", r), ("displacement_mm", p.norm()), ("force_n", f.norm()), ("spring_n", spring)],
        );
        points.push((p.norm(), f.norm()));
    }
    report.metric("hand_vs_spring_force", worst_spring_error, "N", Bound::AtMost(0.05));
    let (slope, intercept, r2) = linear_fit(&points);
    report.metric("slope", slope, "N/mm", Bound::None);
    report.metric("slope_relative_error", (slope / imp.stiffness - 1.0).abs(), "", Bound::AtMost(0.05));
    report.metric("r_squared", r2, "", Bound::AtLeast(0.99));
    report.metric("intercept", intercept, "N", Bound::None);

    let (_, f0) = hold(Vec2::ZERO)?;
    report.metric("zero_offset_force", f0.norm(), "N", Bound::AtMost(0.05));
    let beyond = geom.cell_of(Vec2::new(zone + 20.0, 0.0));
    let plateau = imp.stiffness * soft.spring.depth_at(beyond);
    report.metric(
        "plateau_spring_magnitude",
        plateau,
        "N",
        Bound::AtLeast(imp.stiffness * imp.zone_width - 1e-9),
    );
    report.note("beyond the zone the depth is flat, so the direction term and hence the force vanish");
    Ok(report)
}
