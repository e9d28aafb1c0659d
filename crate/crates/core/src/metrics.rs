//! Off-loop analysis of recorded end-effector positions.

use crate::geometry::Vec2;
use crate::grid::{Cell, GridGeometry};
use crate::map::MotionRestrictionMap;

/// Distance from `p` to the square of `cell` (0 inside it).
pub fn distance_to_cell(geom: &GridGeometry, cell: Cell, p: Vec2) -> f64 {
    let c = geom.world(cell);
    let half = geom.resolution() / 2.0;
    let dx = ((p.x - c.x).abs() - half).max(0.0);
    let dy = ((p.y - c.y).abs() - half).max(0.0);
    dx.hypot(dy)
}

/// Nearest permitted cell to `p` and the distance to its square, searching
/// square rings outward from the containing cell. `None` for an empty map.
pub fn nearest_permitted(map: &MotionRestrictionMap, p: Vec2) -> Option<(Cell, f64)> {
    let geom = map.geometry();
    let center = geom.cell_of(p);
    let rho = geom.resolution();
    let max_ring = {
        let w = geom.width() as i64;
        let h = geom.height() as i64;
        [center.x, w - 1 - center.x, center.y, h - 1 - center.y]
            .into_iter()
            .map(i64::abs)
            .max()
            .unwrap_or(0)
            .max(w.max(h))
    };
    let mut best: Option<(Cell, f64)> = None;
    for k in 0..=max_ring {
        // Every cell on ring k is at least (k - 1/2) cells from p's cell, and
        // p lies within half a cell of that cell's centre.
        if let Some((_, d)) = best {
            if (k as f64 - 1.0) * rho > d {
                break;
            }
        }
        for_ring(center, k, |c| {
            if map.is_permitted(c) {
                let d = distance_to_cell(geom, c, p);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((c, d));
                }
            }
        });
    }
    best
}

fn for_ring(center: Cell, k: i64, mut f: impl FnMut(Cell)) {
    if k == 0 {
        f(center);
        return;
    }
    for dx in -k..=k {
        f(center.offset(dx, -k));
        f(center.offset(dx, k));
    }
    for dy in -k + 1..k {
        f(center.offset(-k, dy));
        f(center.offset(k, dy));
    }
}

/// Distance from `p` to the permitted area; 0 when its cell is permitted.
/// Infinite when the map has no permitted cell.
pub fn distance_outside(map: &MotionRestrictionMap, p: Vec2) -> f64 {
    if map.is_permitted_world(p) {
        return 0.0;
    }
    nearest_permitted(map, p).map_or(f64::INFINITY, |(_, d)| d)
}

/// Mean of [`distance_outside`] over `positions`; 0 for an empty slice.
pub fn mean_absolute_error(map: &MotionRestrictionMap, positions: &[Vec2]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    positions.iter().map(|&p| distance_outside(map, p)).sum::<f64>() / positions.len() as f64
}

/// Largest [`distance_outside`] over `positions`.
pub fn max_violation(map: &MotionRestrictionMap, positions: &[Vec2]) -> f64 {
    positions.iter().map(|&p| distance_outside(map, p)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Region, PERMITTED, PROHIBITED};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn full_scan(map: &MotionRestrictionMap, p: Vec2) -> f64 {
        if map.is_permitted_world(p) {
            return 0.0;
        }
        map.permitted_cells()
            .map(|c| distance_to_cell(map.geometry(), c, p))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn distance_to_block() {
        let g = GridGeometry::centered(41, 41, 0.5).unwrap();
        let mut m = MotionRestrictionMap::new(g);
        m.edit_region(&Region::Rect { a: Cell::new(20, 20), b: Cell::new(24, 20) }, PERMITTED);
        // Block spans x in [-0.25, 2.25], y in [-0.25, 0.25].
        assert_eq!(distance_outside(&m, Vec2::new(1.0, 0.1)), 0.0);
        assert!((distance_outside(&m, Vec2::new(1.0, 3.25)) - 3.0).abs() < 1e-12);
        assert!((distance_outside(&m, Vec2::new(5.25, 4.25)) - 5.0).abs() < 1e-12);
        assert_eq!(distance_outside(&MotionRestrictionMap::new(g), Vec2::ZERO), f64::INFINITY);
    }

    #[test]
    fn mae_of_inside_points_is_zero() {
        let g = GridGeometry::centered(21, 21, 1.0).unwrap();
        let m = MotionRestrictionMap::filled(g, PERMITTED);
        assert_eq!(mean_absolute_error(&m, &[Vec2::ZERO, Vec2::new(3.0, -2.0)]), 0.0);
        assert_eq!(mean_absolute_error(&m, &[]), 0.0);
    }

    proptest! {
        #[test]
        fn windowed_search_matches_full_scan(
            seed in any::<u64>(),
            density in 0.001f64..0.2,
            px in -40.0f64..40.0, py in -30.0f64..30.0,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = GridGeometry::centered(61, 47, 1.3).unwrap();
            let cells = (0..g.len()).map(|_| if rng.random_bool(density) { PERMITTED } else { PROHIBITED }).collect();
            let m = MotionRestrictionMap::from_cells(g, cells).unwrap();
            let p = Vec2::new(px, py);
            let a = distance_outside(&m, p);
            let b = full_scan(&m, p);
            prop_assert!(a == b || (a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }
}
