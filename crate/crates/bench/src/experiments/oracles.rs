//! Fast routines checked cell-for-cell against brute-force references.

use gard_core::geometry::Vec2;
use gard_core::grid::{Cell, GridGeometry};
use gard_core::ievc::{circle_map, find_intersections};
use gard_core::impedance::{expand_map, ConvolutionKernel};
use gard_core::map::{MotionRestrictionMap, PERMITTED, PROHIBITED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::report::{Bound, ExperimentReport};
use crate::Result;

pub const RING_CASES: usize = 50;
pub const DILATION_CASES: usize = 20;
pub const POLYGON_CASES: usize = 10;

fn random_map(rng: &mut ChaCha8Rng, geom: GridGeometry, density: f64) -> Result<MotionRestrictionMap> {
    let cells = (0..geom.len())
        .map(|_| if rng.random_bool(density) { PERMITTED } else { PROHIBITED })
        .collect();
    Ok(MotionRestrictionMap::from_cells(geom, cells)?)
}

fn brute_ring(map: &MotionRestrictionMap, center: Cell, r: i64) -> Vec<Cell> {
    let mut out: Vec<Cell> = map
        .geometry()
        .cells()
        .filter(|c| {
            let (dx, dy) = (c.x - center.x, c.y - center.y);
            (dx * dx + dy * dy - r * r).abs() < 2 * r && map.is_permitted(*c)
        })
        .collect();
    out.sort();
    out
}

fn brute_dilation(map: &MotionRestrictionMap, r: i64) -> Vec<u8> {
    let g = map.geometry();
    g.cells()
        .map(|c| {
            let hit = (-r..=r).any(|dy| {
                (-r..=r).any(|dx| dx * dx + dy * dy <= r * r && map.is_permitted(c.offset(dx, dy)))
            });
            if hit { PERMITTED } else { PROHIBITED }
        })
        .collect()
}

fn inside_convex(poly: &[Vec2], p: Vec2) -> bool {
    (0..poly.len()).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        (b - a).cross(p - a) >= 0.0
    })
}

pub fn oracle_equivalence(seed: u64) -> Result<ExperimentReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ExperimentReport::new(
        "oracles",
        seed,
        json!({ "ring_cases": RING_CASES, "dilation_cases": DILATION_CASES, "polygon_cases": POLYGON_CASES }),
    );

    let mut ring_mismatch = 0usize;
    for _ in 0..RING_CASES {
        let w = rng.random_range(20..90);
        let h = rng.random_range(20..90);
        let density = rng.random_range(0.05..0.9);
        let map = random_map(&mut rng, GridGeometry::centered(w, h, 1.0)?, density)?;
        let r = rng.random_range(3..40u32);
        let center = Cell::new(rng.random_range(-10..w as i64 + 10), rng.random_range(-10..h as i64 + 10));
        let mut fast = find_intersections(&map, &circle_map(r), center);
        fast.sort();
        if fast != brute_ring(&map, center, i64::from(r)) {
            ring_mismatch += 1;
        }
    }
    report.metric("ring_mismatched_cases", ring_mismatch as f64, "", Bound::AtMost(0.0));

    let mut dilation_mismatch = 0usize;
    for _ in 0..DILATION_CASES {
        let w = rng.random_range(30..80);
        let h = rng.random_range(30..80);
        let density = rng.random_range(0.002..0.05);
        let map = random_map(&mut rng, GridGeometry::centered(w, h, 1.0)?, density)?;
        let r = rng.random_range(1..(w.min(h) as u32 / 2));
        let fast = expand_map(&map, &ConvolutionKernel::disk(r))?;
        if fast.map.cells() != brute_dilation(&map, i64::from(r)).as_slice() {
            dilation_mismatch += 1;
        }
    }
    report.metric("dilation_mismatched_cases", dilation_mismatch as f64, "", Bound::AtMost(0.0));

    let mut polygon_mismatch = 0usize;
    let geom = GridGeometry::centered(120, 100, 1.0)?;
    for _ in 0..POLYGON_CASES {
        let n = rng.random_range(3..9);
        let center = Vec2::new(rng.random_range(-15.0..15.0), rng.random_range(-10.0..10.0));
        let (rx, ry) = (rng.random_range(10.0..45.0), rng.random_range(10.0..40.0));
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let poly: Vec<Vec2> = angles
            .iter()
            .map(|a| center + Vec2::new(rx * a.cos(), ry * a.sin()))
            .collect();
        let rom = MotionRestrictionMap::rom_from_trace(&poly, geom)?;
        let bad = geom
            .cells()
            .filter(|&c| rom.is_permitted(c) != inside_convex(&poly, geom.world(c)))
            .count();
        if bad > 0 {
            polygon_mismatch += 1;
        }
    }
    report.metric("polygon_mismatched_cases", polygon_mismatch as f64, "", Bound::AtMost(0.0));
    Ok(report)
}
