//! Discretisation of the planar task space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Integer cell coordinate. `x` indexes columns, `y` indexes rows, with row 0
/// at the smallest world y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i64,
    pub y: i64,
}

impl Cell {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i64, dy: i64) -> Cell {
        Cell::new(self.x + dx, self.y + dy)
    }
}

/// Physical task space of the gantry (650 x 550 mm).
pub const WORKSPACE_MM: (f64, f64) = (650.0, 550.0);

/// Mapping between world millimetres and grid cells.
///
/// `origin` is the world position of the centre of cell `[0, 0]`; cell `[i, j]`
/// covers the square of side `resolution` centred on `origin + (i, j) * resolution`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Vec2,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Vec2) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGeometry(format!(
                "grid must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidGeometry("origin must be finite".into()));
        }
        width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidGeometry("grid dimensions overflow".into()))?;
        Ok(Self {
            width,
            height,
            resolution,
            origin,
        })
    }

    /// A `width x height` grid centred on the world origin.
    pub fn centered(width: usize, height: usize, resolution: f64) -> Result<Self> {
        let origin = Vec2::new(
            -((width as f64 - 1.0) * resolution) / 2.0,
            -((height as f64 - 1.0) * resolution) / 2.0,
        );
        Self::new(width, height, resolution, origin)
    }

    /// The full 650 x 550 mm workspace at `resolution` mm per cell, centred on
    /// the world origin.
    pub fn workspace(resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        let w = (WORKSPACE_MM.0 / resolution).round() as usize;
        let h = (WORKSPACE_MM.1 / resolution).round() as usize;
        Self::centered(w, h, resolution)
    }

    /// Default discretisation: 1 mm cells over the 650 x 550 mm workspace.
    pub fn default_workspace() -> Self {
        Self::workspace(1.0).expect("default workspace is valid")
    }

    /// The 2200 x 1700 benchmark discretisation, spanning the 650 mm axis.
    pub fn benchmark_preset() -> Self {
        Self::centered(2200, 1700, WORKSPACE_MM.0 / 2200.0).expect("preset is valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    /// Continuous cell coordinates of a world point (cell centres are integers).
    pub fn to_grid(&self, p: Vec2) -> Vec2 {
        (p - self.origin) / self.resolution
    }

    /// Cell whose square contains `p`.
    pub fn cell_of(&self, p: Vec2) -> Cell {
        let g = self.to_grid(p);
        Cell::new(g.x.round() as i64, g.y.round() as i64)
    }

    /// World position of a cell centre.
    pub fn world(&self, cell: Cell) -> Vec2 {
        self.origin + Vec2::new(cell.x as f64, cell.y as f64) * self.resolution
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && (cell.x as usize) < self.width && (cell.y as usize) < self.height
    }

    pub fn index(&self, cell: Cell) -> Option<usize> {
        self.contains(cell)
            .then(|| cell.y as usize * self.width + cell.x as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.width) as i64, (index / self.width) as i64)
    }

    /// Iterates over every cell in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height as i64).flat_map(move |y| (0..self.width as i64).map(move |x| Cell::new(x, y)))
    }

    /// World-space bounds `(min, max)` of the cell squares.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let half = Vec2::new(self.resolution, self.resolution) * 0.5;
        let max = self.world(Cell::new(self.width as i64 - 1, self.height as i64 - 1));
        (self.origin - half, max + half)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridGeometry::new(0, 5, 1.0, Vec2::ZERO).is_err());
        assert!(GridGeometry::new(5, 5, 0.0, Vec2::ZERO).is_err());
        assert!(GridGeometry::new(5, 5, -1.0, Vec2::ZERO).is_err());
    }

    #[test]
    fn default_workspace_spans_650_by_550() {
        let g = GridGeometry::default_workspace();
        assert_eq!((g.width(), g.height()), (650, 550));
        let (lo, hi) = g.bounds();
        assert!((hi.x - lo.x - 650.0).abs() < 1e-9);
        assert!((hi.y - lo.y - 550.0).abs() < 1e-9);
        assert!((lo.x + hi.x).abs() < 1e-9);
    }

    #[test]
    fn benchmark_preset_is_2200_by_1700() {
        let g = GridGeometry::benchmark_preset();
        assert_eq!((g.width(), g.height()), (2200, 1700));
        assert!((g.resolution() - 0.2954545).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn cell_world_round_trip(x in -300.0f64..300.0, y in -250.0f64..250.0, res in 0.2f64..3.0) {
            let g = GridGeometry::workspace(res).unwrap();
            let p = Vec2::new(x, y);
            let c = g.cell_of(p);
            prop_assume!(g.contains(c));
            let w = g.world(c);
            prop_assert!((w.x - p.x).abs() <= res / 2.0 + 1e-9);
            prop_assert!((w.y - p.y).abs() <= res / 2.0 + 1e-9);
            prop_assert_eq!(g.cell_of(w), c);
        }
    }
}
