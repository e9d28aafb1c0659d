use gard_core::admittance::AdmittanceParams;
use gard_core::impedance::ImpedanceParams;
use gard_core::map::{ImplicitCurveSpec, Region, RegionInequalitySpec, PERMITTED, PROHIBITED};
use gard_core::metrics::{distance_outside, max_violation};
use gard_core::plant::SensorParams;
use gard_core::session::{
    run_session, steps_for, Command, Fault, Mode, Scheduled, Session, SessionConfig, SoftMaps, TRACE_CSV_HEADER,
};
use gard_core::user::{ConstantForce, NoForce, RandomForce};
use gard_core::{Cell, Error, GridGeometry, MotionRestrictionMap, Vec2};

fn circle_band() -> MotionRestrictionMap {
    let spec = ImplicitCurveSpec::new(|x, y| x.hypot(y) - 250.0, 2.0).unwrap();
    MotionRestrictionMap::from_implicit(&spec, GridGeometry::default_workspace()).unwrap()
}

fn horizontal_band(half_width: f64) -> MotionRestrictionMap {
    let spec = ImplicitCurveSpec::new(|_, y| y, half_width).unwrap();
    MotionRestrictionMap::from_implicit(&spec, GridGeometry::default_workspace()).unwrap()
}

fn open_area() -> MotionRestrictionMap {
    MotionRestrictionMap::filled(GridGeometry::default_workspace(), PERMITTED)
}

fn frictionless() -> AdmittanceParams {
    AdmittanceParams {
        friction: 0.0,
        ..AdmittanceParams::default()
    }
}

fn cfg(mode: Mode, start: Vec2) -> SessionConfig {
    SessionConfig {
        mode,
        start,
        ..SessionConfig::default()
    }
}

#[test]
fn ten_seconds_of_powered_circle_is_ten_thousand_records() {
    let c = cfg(Mode::Powered, Vec2::new(250.0, 0.0));
    let mut s = Session::new(c, circle_band()).unwrap();
    let steps = steps_for(10.0, 1e-3);
    let trace = run_session(&mut s, steps, &mut NoForce, []).unwrap();
    assert_eq!(trace.len(), 10_000);
    assert!(trace.fault.is_none());
    for w in trace.records.windows(2) {
        assert!((w[1].t - w[0].t - 1e-3).abs() < 1e-12);
    }
    assert!(max_violation(&circle_band(), &trace.positions()) < 1.0);
}

#[test]
fn same_seed_gives_identical_traces() {
    let run = || {
        let mut c = cfg(Mode::AanHard, Vec2::new(250.0, 0.0));
        c.sensor = SensorParams { noise: 3.0, seed: 7 };
        let mut s = Session::new(c, circle_band()).unwrap();
        run_session(&mut s, 5_000, &mut RandomForce::new(3, 20.0, 150), []).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.records, b.records);
}

#[test]
fn zero_powered_speed_holds_position() {
    let mut c = cfg(Mode::Powered, Vec2::new(250.0, 0.0));
    c.powered_speed = 0.0;
    let mut s = Session::new(c, circle_band()).unwrap();
    let trace = run_session(&mut s, 2_000, &mut ConstantForce(Vec2::new(20.0, 0.0)), []).unwrap();
    assert!(trace.records.iter().all(|r| r.position == Vec2::new(250.0, 0.0)));
}

#[test]
fn zero_force_at_rest_holds_position() {
    for mode in [Mode::Transparent, Mode::AanHard, Mode::AanSoft] {
        let mut s = Session::new(cfg(mode, Vec2::new(250.0, 0.0)), circle_band()).unwrap();
        let trace = run_session(&mut s, 1_000, &mut NoForce, []).unwrap();
        assert!(trace.records.iter().all(|r| r.position == Vec2::new(250.0, 0.0)), "{mode}");
    }
}

#[test]
fn constant_force_in_open_area_is_a_straight_ramp() {
    // 10 N on 10 kg without friction: 1 mm/s gained per 1 ms step.
    let mut c = cfg(Mode::Transparent, Vec2::ZERO);
    c.admittance = frictionless();
    let mut s = Session::new(c, open_area()).unwrap();
    let trace = run_session(&mut s, 120, &mut ConstantForce(Vec2::new(10.0, 0.0)), []).unwrap();
    for r in &trace.records {
        let k = r.step as f64 + 1.0;
        let expected = k - 0.5;
        assert!((r.command.x - expected).abs() <= 1e-3 * expected, "step {}: {}", r.step, r.command.x);
        assert_eq!(r.command.y, 0.0);
        assert_eq!(r.position.y, 0.0);
    }
}

#[test]
fn push_at_45_degrees_slides_along_wall() {
    let spec = RegionInequalitySpec::new().with(|_, y| y);
    let map = MotionRestrictionMap::from_inequalities(&spec, GridGeometry::default_workspace()).unwrap();
    let mut c = cfg(Mode::AanHard, Vec2::new(-100.0, -10.0));
    c.admittance = frictionless();
    let mut s = Session::new(c, map.clone()).unwrap();
    let f = Vec2::new(1.0, 1.0).normalize_or_zero() * 4.0;
    let trace = run_session(&mut s, 1_500, &mut ConstantForce(f), []).unwrap();
    assert!(max_violation(&map, &trace.positions()) <= 1.0);
    let last = trace.records.last().unwrap();
    assert!(last.position.y > -2.0 && last.position.y < 1.0, "{:?}", last.position);
    assert!(last.velocity.y.abs() < 1.0);
    assert!(last.velocity.x > 20.0);
    assert!(last.position.x > -90.0);
}

#[test]
fn push_into_wall_makes_no_normal_progress() {
    let spec = RegionInequalitySpec::new().with(|_, y| y);
    let map = MotionRestrictionMap::from_inequalities(&spec, GridGeometry::default_workspace()).unwrap();
    let mut s = Session::new(cfg(Mode::AanHard, Vec2::new(0.0, -10.0)), map.clone()).unwrap();
    let trace = run_session(&mut s, 3_000, &mut ConstantForce(Vec2::new(0.0, 10.0)), []).unwrap();
    let last = trace.records.last().unwrap();
    assert!(max_violation(&map, &trace.positions()) <= 1.0);
    assert_eq!(last.velocity, Vec2::ZERO);
    // A head-on approach is deflected sideways by at most the look-ahead reach.
    assert!(last.position.x.abs() < 60.0);
    let tail = &trace.records[2_000..];
    assert!(tail.iter().all(|r| r.position == last.position));
}

#[test]
fn mid_run_edit_block_is_respected() {
    let mut c = cfg(Mode::Transparent, Vec2::new(0.0, 0.0));
    c.admittance = frictionless();
    let mut s = Session::new(c, open_area()).unwrap();
    let g = *s.map().geometry();
    let (a, b) = (g.cell_of(Vec2::new(60.0, -40.0)), g.cell_of(Vec2::new(90.0, 40.0)));
    let edit = Scheduled {
        at: 100,
        command: Command::EditMap {
            region: Region::Rect { a, b },
            value: PROHIBITED,
        },
    };
    let trace = run_session(&mut s, 3_000, &mut ConstantForce(Vec2::new(5.0, 0.0)), [edit]).unwrap();
    let after: Vec<Vec2> = trace.records.iter().filter(|r| r.step >= 100).map(|r| r.position).collect();
    assert!(trace.records.iter().any(|r| r.revision == s.map().revision()));
    assert!(max_violation(s.map(), &after) <= 1.0);
    assert!(trace.records.last().unwrap().position.x > 50.0);
}

#[test]
fn soft_mode_returns_toward_band_after_release() {
    let band = horizontal_band(2.0);
    let mut c = cfg(Mode::AanSoft, Vec2::new(0.0, 7.0));
    c.admittance = frictionless();
    // Overdamped: K_sp 0.5 N/mm against 10 kg.
    c.impedance = ImpedanceParams::for_resolution(0.5, -0.2, 6, 1.0);
    let mut s = Session::new(c, band.clone()).unwrap();
    let trace = run_session(&mut s, 4_000, &mut NoForce, []).unwrap();
    let d: Vec<f64> = trace.records.iter().map(|r| distance_outside(&band, r.position)).collect();
    assert!(d[0] > 4.0);
    assert!(*d.last().unwrap() < 1.5, "final {}", d.last().unwrap());
    assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn guided_mode_tracks_leading_point() {
    let mut c = cfg(Mode::GuidedImpedance, Vec2::new(250.0, 0.0));
    c.admittance = AdmittanceParams {
        damping: 50.0,
        ..frictionless()
    };
    c.impedance = ImpedanceParams::for_resolution(5.0, 0.0, 6, 1.0);
    c.leading_speed = 20.0;
    let mut s = Session::new(c, circle_band()).unwrap();
    let trace = run_session(&mut s, 10_000, &mut NoForce, []).unwrap();
    let lag = trace
        .records
        .iter()
        .skip(3_000)
        .map(|r| r.leader.unwrap().distance(r.position))
        .fold(0.0, f64::max);
    assert!(lag < 2.0, "lag {lag}");
    let travelled = trace.records.first().unwrap().position.distance(trace.records.last().unwrap().position);
    assert!(travelled > 50.0);
}

#[test]
fn soft_mode_without_spring_map_faults() {
    let c = cfg(Mode::AanSoft, Vec2::new(250.0, 0.0));
    let mut s = Session::with_soft_maps(c, circle_band(), None).unwrap();
    let trace = run_session(&mut s, 100, &mut ConstantForce(Vec2::new(5.0, 0.0)), []).unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!(trace.fault, Some((0, Fault::MissingSoftMaps)));
    assert_eq!(trace.records[0].command, Vec2::ZERO);
}

#[test]
fn stale_spring_map_is_rejected() {
    let map = circle_band();
    let soft = SoftMaps::build(&map, &ImpedanceParams::default()).unwrap();
    let mut edited = map.clone();
    edited.edit_region(
        &Region::Rect {
            a: Cell::new(0, 0),
            b: Cell::new(5, 5),
        },
        PERMITTED,
    );
    let c = cfg(Mode::AanSoft, Vec2::new(250.0, 0.0));
    let err = Session::with_soft_maps(c.clone(), edited.clone(), Some(soft.clone())).unwrap_err();
    assert!(matches!(err, Error::StaleMap(_)), "{err}");

    let mut s = Session::new(c, map).unwrap();
    let before = s.map().revision();
    let err = s
        .apply(Command::ReplaceMaps {
            map: edited,
            soft: Some(soft),
        })
        .unwrap_err();
    assert!(matches!(err, Error::StaleMap(_)));
    assert_eq!(s.map().revision(), before);
}

#[test]
fn edits_in_soft_mode_rebuild_spring_map() {
    let mut s = Session::new(cfg(Mode::AanSoft, Vec2::new(250.0, 0.0)), circle_band()).unwrap();
    s.apply(Command::EditMap {
        region: Region::Rect {
            a: Cell::new(10, 10),
            b: Cell::new(30, 30),
        },
        value: PERMITTED,
    })
    .unwrap();
    assert_eq!(s.soft_maps().unwrap().source_revision(), s.map().revision());
    let rec = s.step_with_force(Vec2::ZERO);
    assert_eq!(rec.fault, None);
}

#[test]
fn pause_zeroes_command() {
    let mut s = Session::new(cfg(Mode::Transparent, Vec2::ZERO), open_area()).unwrap();
    for _ in 0..50 {
        s.step_with_force(Vec2::new(10.0, 0.0));
    }
    s.apply(Command::SetPaused(true)).unwrap();
    let rec = s.step_with_force(Vec2::new(10.0, 0.0));
    assert_eq!(rec.command, Vec2::ZERO);
}

#[test]
fn trace_csv_has_header_and_one_row_per_step() {
    let mut s = Session::new(cfg(Mode::Powered, Vec2::new(250.0, 0.0)), circle_band()).unwrap();
    let trace = run_session(&mut s, 25, &mut NoForce, []).unwrap();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], TRACE_CSV_HEADER);
    assert_eq!(lines.len(), 26);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 12));
    let t1: f64 = lines[2].split(',').next().unwrap().parse().unwrap();
    assert!((t1 - 1e-3).abs() < 1e-12);
}

#[test]
fn invalid_config_is_rejected() {
    let mut c = cfg(Mode::Powered, Vec2::new(250.0, 0.0));
    c.powered_speed = 1e4;
    assert!(Session::new(c, circle_band()).is_err());
    let mut c = cfg(Mode::Transparent, Vec2::ZERO);
    c.timestep = 0.0;
    assert!(Session::new(c, open_area()).is_err());
}
