//! Cell rasterisation of triangles, segments and stroked polylines.

use crate::geometry::Vec2;
use crate::grid::{Cell, GridGeometry};

/// Relative tolerance for the inclusive edge test, in squared-cell units.
const EDGE_EPS: f64 = 1e-9;

/// Calls `visit` for every in-grid cell whose centre lies inside or on the
/// closed triangle `abc`. Zero-area triangles fall back to their edges, so a
/// collinear triple still marks a thin line of cells.
pub fn fill_triangle(geom: &GridGeometry, a: Vec2, b: Vec2, c: Vec2, mut visit: impl FnMut(Cell)) {
    let (ga, gb, gc) = (geom.to_grid(a), geom.to_grid(b), geom.to_grid(c));
    let area2 = (gb - ga).cross(gc - ga);
    let span = (gb - ga).norm_squared().max((gc - ga).norm_squared()).max((gc - gb).norm_squared());
    if area2.abs() <= EDGE_EPS * span.max(1.0) {
        trace_segment(geom, a, b, &mut visit);
        trace_segment(geom, b, c, &mut visit);
        trace_segment(geom, a, c, &mut visit);
        return;
    }
    // Orient counter-clockwise so every edge function is >= 0 inside.
    let (ga, gb, gc) = if area2 > 0.0 { (ga, gb, gc) } else { (ga, gc, gb) };
    let tol = EDGE_EPS * span.max(1.0);

    let x0 = ga.x.min(gb.x).min(gc.x).ceil().max(0.0) as i64;
    let x1 = (ga.x.max(gb.x).max(gc.x).floor() as i64).min(geom.width() as i64 - 1);
    let y0 = ga.y.min(gb.y).min(gc.y).ceil().max(0.0) as i64;
    let y1 = (ga.y.max(gb.y).max(gc.y).floor() as i64).min(geom.height() as i64 - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Vec2::new(x as f64, y as f64);
            if (gb - ga).cross(p - ga) >= -tol
                && (gc - gb).cross(p - gb) >= -tol
                && (ga - gc).cross(p - gc) >= -tol
            {
                visit(Cell::new(x, y));
            }
        }
    }
}

/// Calls `visit` for the cells containing sample points spaced at most a
/// quarter cell apart along the segment `ab` (endpoints included). Cells may
/// be visited more than once.
pub fn trace_segment(geom: &GridGeometry, a: Vec2, b: Vec2, mut visit: impl FnMut(Cell)) {
    let len_cells = (geom.to_grid(b) - geom.to_grid(a)).norm();
    let steps = (len_cells * 4.0).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let p = a + (b - a) * (i as f64 / steps as f64);
        let c = geom.cell_of(p);
        if geom.contains(c) {
            visit(c);
        }
    }
}

/// Distance from `p` to the closed segment `ab`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Calls `visit` for every cell whose centre is within `width_cells / 2` cells
/// of the polyline. A single point strokes a disk.
pub fn stroke_polyline(geom: &GridGeometry, points: &[Vec2], width_cells: f64, mut visit: impl FnMut(Cell)) {
    let half = width_cells.max(0.0) / 2.0 * geom.resolution();
    let segments: Vec<(Vec2, Vec2)> = match points {
        [] => return,
        [p] => vec![(*p, *p)],
        _ => points.windows(2).map(|w| (w[0], w[1])).collect(),
    };
    let pad = half + geom.resolution();
    for (a, b) in segments {
        let lo = geom.cell_of(Vec2::new(a.x.min(b.x) - pad, a.y.min(b.y) - pad));
        let hi = geom.cell_of(Vec2::new(a.x.max(b.x) + pad, a.y.max(b.y) + pad));
        for y in lo.y.max(0)..=hi.y.min(geom.height() as i64 - 1) {
            for x in lo.x.max(0)..=hi.x.min(geom.width() as i64 - 1) {
                let c = Cell::new(x, y);
                if point_segment_distance(geom.world(c), a, b) <= half + 1e-9 {
                    visit(c);
                }
            }
        }
    }
}
