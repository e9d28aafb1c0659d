//! Implicit Euler velocity control (IEVC): the motion restriction controller.
//!
//! Each step draws a ring of cells around the current position whose radius
//! grows with speed, keeps the ring cells lying in the permitted area, and
//! steers toward the one best aligned with the incoming velocity. The output
//! magnitude is the projection of the incoming velocity onto that direction,
//! so motion into a boundary loses momentum instead of crossing it. Because
//! the chasing target is always re-derived from the measured position,
//! tracking error does not accumulate.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::Cell;
use crate::map::MotionRestrictionMap;

/// Projection ties closer than this keep the earlier candidate.
const TIE_EPS: f64 = 1e-9;

/// Integer cell offsets approximating a circle of `radius` cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingTemplate {
    radius: u32,
    offsets: Vec<(i32, i32)>,
}

impl RingTemplate {
    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Builds the ring template for `radius`.
///
/// Scans the `(2R + 10)^2` box centred on the origin in row-major order and
/// keeps offsets with `|(dx/R)^2 + (dy/R)^2 - 1| < 2/R`, evaluated exactly as
/// `|dx^2 + dy^2 - R^2| < 2R`. A radius of 0 yields an empty template.
pub fn circle_map(radius: u32) -> RingTemplate {
    if radius == 0 {
        return RingTemplate {
            radius,
            offsets: Vec::new(),
        };
    }
    let r = i64::from(radius);
    let half = r + 5;
    let mut offsets = Vec::new();
    for dy in -half..half {
        for dx in -half..half {
            if (dx * dx + dy * dy - r * r).abs() < 2 * r {
                offsets.push((dx as i32, dy as i32));
            }
        }
    }
    RingTemplate { radius, offsets }
}

/// Radius-keyed cache of ring templates. Concurrent readers, single writer on
/// a miss.
#[derive(Debug, Default)]
pub struct RingCache {
    rings: RwLock<HashMap<u32, Arc<RingTemplate>>>,
}

impl RingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, radius: u32) -> Arc<RingTemplate> {
        if let Some(t) = self.rings.read().expect("ring cache poisoned").get(&radius) {
            return Arc::clone(t);
        }
        let mut w = self.rings.write().expect("ring cache poisoned");
        Arc::clone(w.entry(radius).or_insert_with(|| Arc::new(circle_map(radius))))
    }

    pub fn len(&self) -> usize {
        self.rings.read().expect("ring cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Every in-grid, permitted cell of the ring centred on `center`, in template
/// order.
pub fn find_intersections(map: &MotionRestrictionMap, template: &RingTemplate, center: Cell) -> Vec<Cell> {
    candidates(map, template, center).collect()
}

fn candidates<'a>(
    map: &'a MotionRestrictionMap,
    template: &'a RingTemplate,
    center: Cell,
) -> impl Iterator<Item = Cell> + 'a {
    template
        .offsets
        .iter()
        .map(move |&(dx, dy)| center.offset(i64::from(dx), i64::from(dy)))
        .filter(move |&c| map.is_permitted(c))
}

/// End-effector position (mm) and velocity (mm/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl KinematicState {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }
}

/// Serializable IEVC settings; see [`IevcConfig`] for the runtime form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IevcParams {
    /// Time horizon (s) covered by the ring: radius = lookahead * speed / resolution.
    pub lookahead: f64,
    pub min_radius: u32,
    /// Pass the incoming velocity through unchanged when the straight-ahead
    /// lookahead point and the segment to it are permitted.
    pub exact_continuation: bool,
    /// Prefer ring candidates reachable in a straight permitted line, so the
    /// end-effector does not cut inner corners.
    pub line_of_sight: bool,
}

impl Default for IevcParams {
    fn default() -> Self {
        Self {
            lookahead: 0.2,
            min_radius: 3,
            exact_continuation: true,
            line_of_sight: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IevcConfig {
    /// Ring radius in cells per mm/s of speed.
    pub transmission_gain: f64,
    pub min_radius: u32,
    pub exact_continuation: bool,
    pub line_of_sight: bool,
    cache: Arc<RingCache>,
}

impl IevcConfig {
    pub fn new(transmission_gain: f64, min_radius: u32) -> Result<Self> {
        if !(transmission_gain > 0.0 && transmission_gain.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "transmission gain must be positive, got {transmission_gain}"
            )));
        }
        if min_radius < 2 {
            return Err(Error::InvalidParams(format!("min radius must be >= 2, got {min_radius}")));
        }
        Ok(Self {
            transmission_gain,
            min_radius,
            exact_continuation: true,
            line_of_sight: true,
            cache: Arc::new(RingCache::new()),
        })
    }

    /// Gain such that the ring radius equals the distance covered in
    /// `lookahead` seconds, expressed in cells.
    pub fn from_lookahead(lookahead: f64, resolution: f64, min_radius: u32) -> Result<Self> {
        Self::new(lookahead / resolution, min_radius)
    }

    pub fn from_params(p: &IevcParams, resolution: f64) -> Result<Self> {
        Ok(Self::from_lookahead(p.lookahead, resolution, p.min_radius)?
            .with_exact_continuation(p.exact_continuation)
            .with_line_of_sight(p.line_of_sight))
    }

    /// Disables both refinements, leaving the plain ring search.
    pub fn literal(self) -> Self {
        self.with_exact_continuation(false).with_line_of_sight(false)
    }

    pub fn with_line_of_sight(mut self, on: bool) -> Self {
        self.line_of_sight = on;
        self
    }

    pub fn with_exact_continuation(mut self, on: bool) -> Self {
        self.exact_continuation = on;
        self
    }

    pub fn cache(&self) -> &RingCache {
        &self.cache
    }

    pub fn ring(&self, radius: u32) -> Arc<RingTemplate> {
        self.cache.get(radius)
    }

    /// `max(min_radius, round(G_v * speed))`, rounding half away from zero.
    pub fn radius_for_speed(&self, speed: f64) -> u32 {
        let r = (self.transmission_gain * speed).round();
        let r = if r.is_finite() { r.min(f64::from(u32::MAX / 4)) as u32 } else { 0 };
        r.max(self.min_radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IevcStatus {
    /// Zero incoming velocity.
    Idle,
    /// Straight-ahead continuation was permitted; velocity passed unchanged.
    Free,
    /// Steering toward a ring candidate with positive projection.
    Chasing,
    /// Candidates exist but none lies ahead; output is zero.
    Blocked,
    /// No permitted ring cell even at doubled radius; output is zero.
    Stranded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IevcOutput {
    pub velocity: Vec2,
    pub radius: u32,
    pub status: IevcStatus,
    pub target: Option<Cell>,
}

impl IevcOutput {
    fn zero(radius: u32, status: IevcStatus) -> Self {
        Self {
            velocity: Vec2::ZERO,
            radius,
            status,
            target: None,
        }
    }
}

/// One IEVC update: restricts `state.velocity` so motion heads into the
/// permitted area. `|output| <= |state.velocity|` always holds.
pub fn ievc_step(state: &KinematicState, map: &MotionRestrictionMap, cfg: &IevcConfig) -> IevcOutput {
    let v_in = state.velocity;
    let speed = v_in.norm();
    if !(speed > 0.0) || !speed.is_finite() || !state.position.is_finite() {
        return IevcOutput::zero(0, IevcStatus::Idle);
    }
    let radius = cfg.radius_for_speed(speed);

    if cfg.exact_continuation && continuation_is_clear(state, map, radius) {
        return IevcOutput {
            velocity: v_in,
            radius,
            status: IevcStatus::Free,
            target: None,
        };
    }

    let los = cfg.line_of_sight;
    match chase(state, map, &cfg.ring(radius), radius, los) {
        Some((out, true)) => out,
        Some((out, false)) => {
            // Nothing ahead is in plain view: look closer before cutting a corner.
            let mut r = radius / 2;
            while r >= cfg.min_radius {
                if let Some((near, true)) = chase(state, map, &cfg.ring(r), r, los) {
                    return near;
                }
                r /= 2;
            }
            out
        }
        None => {
            let wide = radius.saturating_mul(2);
            chase(state, map, &cfg.ring(wide), wide, los)
                .map_or(IevcOutput::zero(wide, IevcStatus::Stranded), |(out, _)| out)
        }
    }
}

/// Picks the best ring candidate, or `None` when the ring has no permitted
/// cell. The flag is false when candidates lie ahead but none is in plain
/// view, in which case the plain choice is returned.
fn chase(
    state: &KinematicState,
    map: &MotionRestrictionMap,
    ring: &RingTemplate,
    radius: u32,
    line_of_sight: bool,
) -> Option<(IevcOutput, bool)> {
    let geom = map.geometry();
    let center = geom.cell_of(state.position);
    let mut any = false;
    let mut best: Option<(f64, Vec2, Cell)> = None;
    let mut ahead = Vec::new();
    for c in candidates(map, ring, center) {
        any = true;
        let Some(dir) = (geom.world(c) - state.position).try_normalize() else {
            continue;
        };
        let proj = state.velocity.dot(dir);
        if best.is_none_or(|(max_proj, _, _)| proj > max_proj + TIE_EPS) {
            best = Some((proj, dir, c));
        }
        if line_of_sight && proj > 0.0 {
            ahead.push((proj, dir, c));
        }
    }
    if !any {
        return None;
    }
    if line_of_sight && !ahead.is_empty() {
        // Stable sort keeps template order among equal projections.
        ahead.sort_by(|a, b| b.0.total_cmp(&a.0));
        if let Some(&(proj, dir, cell)) = ahead
            .iter()
            .find(|(_, _, c)| segment_is_clear(map, state.position, geom.world(*c)))
        {
            return Some((
                IevcOutput {
                    velocity: dir * proj,
                    radius,
                    status: IevcStatus::Chasing,
                    target: Some(cell),
                },
                true,
            ));
        }
    }
    let in_view = ahead.is_empty();
    let out = match best {
        Some((proj, dir, cell)) if proj > 0.0 => IevcOutput {
            velocity: dir * proj,
            radius,
            status: IevcStatus::Chasing,
            target: Some(cell),
        },
        Some((_, _, cell)) => IevcOutput {
            velocity: Vec2::ZERO,
            radius,
            status: IevcStatus::Blocked,
            target: Some(cell),
        },
        None => IevcOutput::zero(radius, IevcStatus::Blocked),
    };
    Some((out, in_view))
}

/// True when the straight segment from the position to the lookahead point
/// `radius` cells ahead stays in permitted cells.
fn continuation_is_clear(state: &KinematicState, map: &MotionRestrictionMap, radius: u32) -> bool {
    let geom = map.geometry();
    let Some(dir) = state.velocity.try_normalize() else {
        return false;
    };
    let reach = f64::from(radius) * geom.resolution();
    segment_is_clear(map, state.position, state.position + dir * reach)
}

/// Samples `a..=b` at least twice per cell and checks every sample is permitted.
fn segment_is_clear(map: &MotionRestrictionMap, a: Vec2, b: Vec2) -> bool {
    let cells = a.distance(b) / map.geometry().resolution();
    let steps = (2.0 * cells).ceil().max(1.0) as usize;
    (0..=steps).all(|i| map.is_permitted_world(a + (b - a) * (i as f64 / steps as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;
    use crate::map::{Region, PERMITTED};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::HashSet;

    fn ring_oracle(r: u32) -> HashSet<(i32, i32)> {
        // Direct transcription of the normalised inCircle test over the
        // (2R + 10)^2 box.
        let rf = f64::from(r);
        let len = 2 * r as i32 + 10;
        let mut out = HashSet::new();
        for y in 0..len {
            for x in 0..len {
                let dx = x - r as i32 - 5;
                let dy = y - r as i32 - 5;
                let (ndx, ndy) = (f64::from(dx) / rf, f64::from(dy) / rf);
                let lhs = (ndx * ndx + ndy * ndy - 1.0).abs();
                // Exact ties on the strict bound are excluded; float rounding
                // would otherwise decide them arbitrarily.
                if lhs < 2.0 / rf - 1e-12 {
                    out.insert((dx, dy));
                }
            }
        }
        out
    }

    #[test]
    fn ring_radius_5_matches_enumeration() {
        let t = circle_map(5);
        let got: HashSet<_> = t.offsets().iter().copied().collect();
        assert_eq!(got.len(), t.len(), "offsets must be unique");
        assert_eq!(got, ring_oracle(5));
        for &(dx, dy) in t.offsets() {
            assert!((dx * dx + dy * dy - 25).abs() < 10);
        }
    }

    #[test]
    fn ring_radius_1_matches_enumeration() {
        let got: HashSet<_> = circle_map(1).offsets().iter().copied().collect();
        assert_eq!(got, ring_oracle(1));
        // |d^2 - 1| < 2 keeps d^2 in {0, 1, 2}.
        assert_eq!(got.len(), 9);
        assert!(got.contains(&(0, 0)) && got.contains(&(1, 0)) && got.contains(&(-1, -1)));
    }

    #[test]
    fn ring_matches_oracle_for_many_radii() {
        for r in 1..40 {
            let got: HashSet<_> = circle_map(r).offsets().iter().copied().collect();
            assert_eq!(got, ring_oracle(r), "radius {r}");
        }
    }

    #[test]
    fn zero_radius_is_empty() {
        assert!(circle_map(0).is_empty());
    }

    #[test]
    fn cache_returns_same_template() {
        let cache = RingCache::new();
        let a = cache.get(5);
        let b = cache.get(5);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.len(), 1);
    }

    fn line_map() -> MotionRestrictionMap {
        let geom = GridGeometry::centered(101, 101, 1.0).unwrap();
        let mut m = MotionRestrictionMap::new(geom);
        m.edit_region(
            &Region::Rect {
                a: Cell::new(0, 50),
                b: Cell::new(100, 50),
            },
            PERMITTED,
        );
        m
    }

    fn brute_candidates(map: &MotionRestrictionMap, r: u32, center: Cell) -> HashSet<Cell> {
        let r = i64::from(r);
        map.geometry()
            .cells()
            .filter(|c| {
                let (dx, dy) = (c.x - center.x, c.y - center.y);
                (dx * dx + dy * dy - r * r).abs() < 2 * r && map.is_permitted(*c)
            })
            .collect()
    }

    #[test]
    fn intersections_on_trivial_maps() {
        let geom = GridGeometry::centered(41, 41, 1.0).unwrap();
        let t = circle_map(6);
        let all = MotionRestrictionMap::filled(geom, PERMITTED);
        assert_eq!(find_intersections(&all, &t, Cell::new(20, 20)).len(), t.len());
        let none = MotionRestrictionMap::new(geom);
        assert!(find_intersections(&none, &t, Cell::new(20, 20)).is_empty());
    }

    #[test]
    fn intersections_on_line_cluster_at_radius() {
        let m = line_map();
        let center = Cell::new(50, 50);
        let got = find_intersections(&m, &circle_map(5), center);
        let as_set: HashSet<_> = got.iter().copied().collect();
        assert_eq!(as_set, brute_candidates(&m, 5, center));
        assert_eq!(as_set, [46, 45, 54, 55].iter().map(|&x| Cell::new(x, 50)).collect());
    }

    #[test]
    fn intersections_match_brute_force_on_random_cases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let w = rng.random_range(10..60);
            let h = rng.random_range(10..60);
            let geom = GridGeometry::centered(w, h, 1.0).unwrap();
            let density: f64 = rng.random_range(0.05..0.9);
            let cells = (0..w * h).map(|_| if rng.random_bool(density) { 255 } else { 0 }).collect();
            let m = MotionRestrictionMap::from_cells(geom, cells).unwrap();
            let r = rng.random_range(1..25);
            let center = Cell::new(rng.random_range(0..w as i64), rng.random_range(0..h as i64));
            let got: HashSet<_> = find_intersections(&m, &circle_map(r), center).into_iter().collect();
            assert_eq!(got, brute_candidates(&m, r, center));
        }
    }

    fn cfg(gain: f64, refined: bool) -> IevcConfig {
        let c = IevcConfig::new(gain, 3).unwrap();
        if refined { c } else { c.literal() }
    }

    #[test]
    fn config_validation() {
        assert!(IevcConfig::new(0.0, 3).is_err());
        assert!(IevcConfig::new(0.1, 1).is_err());
        let c = IevcConfig::from_lookahead(0.02, 1.0, 3).unwrap();
        assert_eq!(c.radius_for_speed(0.0), 3);
        assert_eq!(c.radius_for_speed(160.0), 3);
        assert_eq!(c.radius_for_speed(175.0), 4); // 3.5 rounds away from zero
        assert_eq!(c.radius_for_speed(1000.0), 20);
    }

    #[test]
    fn aligned_motion_passes_through() {
        let m = line_map();
        let s = KinematicState::new(Vec2::ZERO, Vec2::new(100.0, 0.0));
        for exact in [true, false] {
            let out = ievc_step(&s, &m, &cfg(0.05, exact));
            assert_eq!(out.velocity, Vec2::new(100.0, 0.0));
        }
    }

    #[test]
    fn perpendicular_motion_is_stopped() {
        let m = line_map();
        let s = KinematicState::new(Vec2::ZERO, Vec2::new(0.0, 100.0));
        for exact in [true, false] {
            let out = ievc_step(&s, &m, &cfg(0.05, exact));
            assert_eq!(out.velocity, Vec2::ZERO);
            assert_eq!(out.status, IevcStatus::Blocked);
        }
    }

    #[test]
    fn diagonal_motion_slides_along_line() {
        let m = line_map();
        let v = Vec2::new(100.0, 100.0);
        let s = KinematicState::new(Vec2::ZERO, v);
        let c = cfg(0.05, true);
        let out = ievc_step(&s, &m, &c);
        // Oracle: argmax of the projection over the brute-force candidate set.
        let geom = m.geometry();
        let r = c.radius_for_speed(v.norm());
        let mut best = (f64::NEG_INFINITY, Vec2::ZERO);
        for cand in brute_candidates(&m, r, geom.cell_of(s.position)) {
            let d = (geom.world(cand) - s.position).normalize_or_zero();
            if v.dot(d) > best.0 {
                best = (v.dot(d), d);
            }
        }
        let expected = best.1 * best.0.max(0.0);
        assert!((out.velocity - expected).norm() < 1e-9);
        let cos45 = v.norm() * std::f64::consts::FRAC_1_SQRT_2;
        assert!((out.velocity.norm() - cos45).abs() < 1e-9);
        assert!(out.velocity.y.abs() < 1e-9 && out.velocity.x > 0.0);
    }

    #[test]
    fn zero_velocity_or_empty_map_gives_zero() {
        let m = line_map();
        let out = ievc_step(&KinematicState::default(), &m, &cfg(0.05, true));
        assert_eq!((out.velocity, out.status), (Vec2::ZERO, IevcStatus::Idle));
        let empty = MotionRestrictionMap::new(*m.geometry());
        let s = KinematicState::new(Vec2::ZERO, Vec2::new(10.0, 5.0));
        let out = ievc_step(&s, &empty, &cfg(0.05, true));
        assert_eq!((out.velocity, out.status), (Vec2::ZERO, IevcStatus::Stranded));
    }

    #[test]
    fn doubled_radius_retry_recovers_nearby_band() {
        let m = line_map();
        // 8 cells off the line: radius 5 misses, radius 10 reaches it.
        let s = KinematicState::new(Vec2::new(0.0, 8.0), Vec2::new(100.0, 0.0));
        let out = ievc_step(&s, &m, &cfg(0.05, true));
        assert_eq!(out.radius, 10);
        assert_eq!(out.status, IevcStatus::Chasing);
        assert!(out.velocity.y < 0.0 && out.velocity.x > 0.0);
    }

    #[test]
    fn offset_start_converges_toward_line() {
        let m = line_map();
        let c = cfg(0.15, false); // radius 15 at 100 mm/s
        let mut s = KinematicState::new(Vec2::new(-40.0, 10.0), Vec2::new(100.0, 0.0));
        let dt = 0.001;
        let mut prev = s.position.y;
        for _ in 0..400 {
            let out = ievc_step(&s, &m, &c);
            s.position += out.velocity * dt;
            // Parallel motion commanded each step, as a velocity regulator would.
            assert!(s.position.y <= prev + 1e-12);
            prev = s.position.y;
        }
        assert!(prev < 1.0, "distance left {prev}");
    }

    #[test]
    fn line_of_sight_keeps_inner_corner() {
        let geom = GridGeometry::centered(61, 61, 1.0).unwrap();
        let mut m = MotionRestrictionMap::new(geom);
        m.edit_region(
            &Region::Stroke {
                points: vec![Vec2::new(-25.0, 0.0), Vec2::new(0.0, 0.0), Vec2::new(0.0, 25.0)],
                width_cells: 3.0,
            },
            PERMITTED,
        );
        let s = KinematicState::new(Vec2::new(-5.0, 0.0), Vec2::new(60.0, 80.0));
        let literal = ievc_step(&s, &m, &cfg(0.1, false));
        let cut = geom.world(literal.target.unwrap());
        assert!(!segment_is_clear(&m, s.position, cut), "literal target {cut:?} is in plain view");
        let refined = ievc_step(&s, &m, &cfg(0.1, true));
        assert_eq!(refined.status, IevcStatus::Chasing);
        assert!(segment_is_clear(&m, s.position, geom.world(refined.target.unwrap())));
    }

    #[test]
    fn repeated_calls_are_deterministic() {
        let geom = GridGeometry::centered(61, 61, 1.0).unwrap();
        let mut m = MotionRestrictionMap::new(geom);
        m.edit_region(
            &Region::Stroke {
                points: vec![Vec2::new(-20.0, -20.0), Vec2::new(20.0, 15.0)],
                width_cells: 3.0,
            },
            PERMITTED,
        );
        let s = KinematicState::new(Vec2::new(0.3, 1.7), Vec2::new(40.0, -70.0));
        let c = cfg(0.1, false);
        let a = ievc_step(&s, &m, &c);
        let b = ievc_step(&s, &m, &c.clone());
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn output_never_gains_speed(
            seed in any::<u64>(),
            px in -25.0f64..25.0, py in -25.0f64..25.0,
            vx in -200.0f64..200.0, vy in -200.0f64..200.0,
            gain in 0.01f64..0.2,
            exact in any::<bool>(),
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let geom = GridGeometry::centered(51, 51, 1.0).unwrap();
            let cells = (0..51 * 51).map(|_| if rng.random_bool(0.4) { 255 } else { 0 }).collect();
            let m = MotionRestrictionMap::from_cells(geom, cells).unwrap();
            let s = KinematicState::new(Vec2::new(px, py), Vec2::new(vx, vy));
            let out = ievc_step(&s, &m, &cfg(gain, exact));
            prop_assert!(out.velocity.norm() <= s.velocity.norm() * (1.0 + 1e-12));
        }
    }
}
