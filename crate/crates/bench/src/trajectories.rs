//! Trajectory and area maps used by the experiments.

use std::f64::consts::TAU;

use gard_core::geometry::Vec2;
use gard_core::grid::{Cell, GridGeometry};
use gard_core::map::{ImplicitCurveSpec, MotionRestrictionMap, Region, PERMITTED, PROHIBITED};
use gard_core::Result;

pub const CIRCLE_RADIUS: f64 = 250.0;

/// A band map plus a sensible place and direction to start on it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub name: &'static str,
    pub map: MotionRestrictionMap,
    pub start: Vec2,
    pub heading: Vec2,
    /// Points along the centre line, for scripted users and plots.
    pub path: Vec<Vec2>,
    pub closed: bool,
}

impl Trajectory {
    pub fn path_length(&self) -> f64 {
        let open: f64 = self.path.windows(2).map(|w| w[0].distance(w[1])).sum();
        match (self.closed, self.path.first(), self.path.last()) {
            (true, Some(a), Some(b)) => open + a.distance(*b),
            _ => open,
        }
    }
}

/// `x^2 + y^2 - 250^2` with band half-width 500 mm^2 (about 1 mm).
pub fn circle(geom: GridGeometry) -> Result<Trajectory> {
    let r = CIRCLE_RADIUS;
    let spec = ImplicitCurveSpec::new(move |x, y| x * x + y * y - r * r, 500.0)?;
    Ok(Trajectory {
        name: "circle",
        map: MotionRestrictionMap::from_implicit(&spec, geom)?,
        start: Vec2::new(r, 0.0),
        heading: Vec2::new(0.0, 1.0),
        path: (0..360).map(|i| Vec2::from_polar(r, TAU * i as f64 / 360.0)).collect(),
        closed: true,
    })
}

/// Lemniscate-like figure eight `(x/a)^4 - (x/a)^2 + (y/a)^2 = 0`, a = 250.
pub fn infinity(geom: GridGeometry) -> Result<Trajectory> {
    let a = 250.0;
    let spec = ImplicitCurveSpec::new(
        move |x, y| {
            let (u, v) = (x / a, y / a);
            u.powi(4) - u * u + v * v
        },
        0.004,
    )?;
    // x = a sin t, y = a sin t cos t traces the curve.
    let path = (0..720)
        .map(|i| {
            let t = TAU * i as f64 / 720.0;
            Vec2::new(a * t.sin(), a * t.sin() * t.cos())
        })
        .collect();
    Ok(Trajectory {
        name: "infinity",
        map: MotionRestrictionMap::from_implicit(&spec, geom)?,
        start: Vec2::new(0.0, 0.0),
        heading: Vec2::new(1.0, 1.0),
        path,
        closed: true,
    })
}

fn stroked(geom: GridGeometry, path: &[Vec2], closed: bool, width_cells: f64) -> MotionRestrictionMap {
    let mut pts = path.to_vec();
    if closed {
        pts.push(path[0]);
    }
    let mut map = MotionRestrictionMap::new(geom);
    map.edit_region(
        &Region::Stroke {
            points: pts,
            width_cells,
        },
        PERMITTED,
    );
    map
}

/// Wobbly closed loop, as if drawn freehand.
pub fn hand_drawn_loop(geom: GridGeometry) -> Trajectory {
    let path: Vec<Vec2> = (0..120)
        .map(|i| {
            let t = TAU * i as f64 / 120.0;
            let r = 200.0 + 25.0 * (3.0 * t).sin() + 12.0 * (5.0 * t + 0.7).cos();
            Vec2::new(1.1 * r * t.cos() + 10.0, 0.9 * r * t.sin() - 5.0)
        })
        .collect();
    let heading = (path[1] - path[0]).normalize_or_zero();
    Trajectory {
        name: "hand_drawn_a",
        map: stroked(geom, &path, true, 3.0),
        start: path[0],
        heading,
        path,
        closed: true,
    }
}

/// Wavy open line; powered motion reverses at its ends.
pub fn hand_drawn_line(geom: GridGeometry) -> Trajectory {
    let path: Vec<Vec2> = (0..=100)
        .map(|i| {
            let x = -260.0 + 5.2 * i as f64;
            Vec2::new(x, 70.0 * (x / 70.0).sin() + 20.0 * (x / 23.0 + 1.0).sin())
        })
        .collect();
    let heading = (path[1] - path[0]).normalize_or_zero();
    Trajectory {
        name: "hand_drawn_b",
        map: stroked(geom, &path, false, 3.0),
        start: path[0],
        heading,
        path,
        closed: false,
    }
}

/// Serpentine maze: horizontal corridors joined at alternating ends, with
/// walls much thicker than the controller's look-ahead ring.
pub fn serpentine_maze(geom: GridGeometry, corridor: f64, wall: f64) -> MotionRestrictionMap {
    let mut map = MotionRestrictionMap::new(geom);
    let (lo, hi) = geom.bounds();
    let margin = wall / 2.0;
    let pitch = corridor + wall;
    let (x0, x1) = (lo.x + margin, hi.x - margin);
    let rect = |map: &mut MotionRestrictionMap, a: Vec2, b: Vec2| {
        let ca = geom.cell_of(a);
        let cb = geom.cell_of(b);
        map.edit_region(&Region::Rect { a: ca, b: cb }, PERMITTED);
    };
    let mut y = lo.y + margin;
    let mut k = 0;
    while y + corridor <= hi.y - margin {
        rect(&mut map, Vec2::new(x0, y), Vec2::new(x1, y + corridor));
        let next = y + pitch;
        if next + corridor <= hi.y - margin {
            let (cx0, cx1) = if k % 2 == 0 { (x1 - corridor, x1) } else { (x0, x0 + corridor) };
            rect(&mut map, Vec2::new(cx0, y), Vec2::new(cx1, next + corridor));
        }
        y = next;
        k += 1;
    }
    map
}

/// Map with a single permitted cell nearest the origin.
pub fn point_attractor(geom: GridGeometry) -> MotionRestrictionMap {
    let mut map = MotionRestrictionMap::new(geom);
    let c = geom.cell_of(Vec2::ZERO);
    map.edit_region(&Region::Rect { a: c, b: c }, PERMITTED);
    map
}

/// Dense, irregular map of many small blocks, for map-complexity timing.
pub fn checker_clutter(geom: GridGeometry, block: i64) -> MotionRestrictionMap {
    let cells = geom
        .cells()
        .map(|Cell { x, y }| {
            let on = ((x / block) + (y / block) * 3 + (x * y / (block * block)) % 5) % 2 == 0;
            if on {
                PERMITTED
            } else {
                PROHIBITED
            }
        })
        .collect();
    MotionRestrictionMap::from_cells(geom, cells).expect("cell count matches geometry")
}
