//! Motion restriction maps: byte-valued occupancy grids over the task space.
//!
//! A cell value of 0 marks the prohibited area, any nonzero value the permitted
//! area. Queries outside the grid are answered as prohibited.

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{Cell, GridGeometry};
use crate::raster;

/// Value written for permitted cells by the generators.
pub const PERMITTED: u8 = 255;
pub const PROHIBITED: u8 = 0;

type ScalarField = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Trajectory restriction `|f(x, y)| < trajectory_width`.
pub struct ImplicitCurveSpec {
    f: ScalarField,
    trajectory_width: f64,
}

impl ImplicitCurveSpec {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, trajectory_width: f64) -> Result<Self> {
        if !(trajectory_width > 0.0) {
            return Err(Error::InvalidParams(format!(
                "trajectory width must be positive, got {trajectory_width}"
            )));
        }
        Ok(Self {
            f: Box::new(f),
            trajectory_width,
        })
    }

    pub fn trajectory_width(&self) -> f64 {
        self.trajectory_width
    }

    pub fn eval(&self, p: Vec2) -> f64 {
        (self.f)(p.x, p.y)
    }
}

impl fmt::Debug for ImplicitCurveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImplicitCurveSpec")
            .field("trajectory_width", &self.trajectory_width)
            .finish_non_exhaustive()
    }
}

/// Area restriction: permitted where every component is negative.
pub struct RegionInequalitySpec {
    components: Vec<ScalarField>,
}

impl RegionInequalitySpec {
    pub fn new() -> Self {
        Self { components: Vec::new() }
    }

    pub fn with(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.components.push(Box::new(f));
        self
    }

    pub fn push_boxed(&mut self, f: ScalarField) {
        self.components.push(f);
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

impl Default for RegionInequalitySpec {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for RegionInequalitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegionInequalitySpec")
            .field("components", &self.components.len())
            .finish()
    }
}

/// Region addressed by [`MotionRestrictionMap::edit_region`].
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    /// Inclusive cell rectangle; corners may be given in any order.
    Rect { a: Cell, b: Cell },
    /// Polyline in world millimetres stroked to `width_cells`.
    Stroke { points: Vec<Vec2>, width_cells: f64 },
}

#[derive(Clone, PartialEq)]
pub struct MotionRestrictionMap {
    geometry: GridGeometry,
    cells: Vec<u8>,
    revision: u64,
}

impl fmt::Debug for MotionRestrictionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MotionRestrictionMap")
            .field("geometry", &self.geometry)
            .field("revision", &self.revision)
            .field("permitted", &self.count_permitted())
            .finish()
    }
}

impl MotionRestrictionMap {
    /// All-prohibited map.
    pub fn new(geometry: GridGeometry) -> Self {
        Self::filled(geometry, PROHIBITED)
    }

    pub fn filled(geometry: GridGeometry, value: u8) -> Self {
        Self {
            cells: vec![value; geometry.len()],
            geometry,
            revision: 0,
        }
    }

    /// Wraps raw row-major cell values (row 0 = smallest y).
    pub fn from_cells(geometry: GridGeometry, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != geometry.len() {
            return Err(Error::InvalidGeometry(format!(
                "expected {} cells, got {}",
                geometry.len(),
                cells.len()
            )));
        }
        Ok(Self {
            geometry,
            cells,
            revision: 0,
        })
    }

    /// Marks cells where `|f| < E_s` at the cell centre.
    pub fn from_implicit(spec: &ImplicitCurveSpec, geometry: GridGeometry) -> Result<Self> {
        let mut map = Self::new(geometry);
        for (i, cell) in geometry.cells().enumerate() {
            let v = spec.eval(geometry.world(cell));
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { cell, value: v });
            }
            if v.abs() < spec.trajectory_width {
                map.cells[i] = PERMITTED;
            }
        }
        Ok(map)
    }

    /// Marks cells where every component of `F` is negative at the cell centre.
    pub fn from_inequalities(spec: &RegionInequalitySpec, geometry: GridGeometry) -> Result<Self> {
        let mut map = Self::new(geometry);
        for (i, cell) in geometry.cells().enumerate() {
            let p = geometry.world(cell);
            let mut inside = true;
            for f in &spec.components {
                let v = f(p.x, p.y);
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue { cell, value: v });
                }
                inside &= v < 0.0;
            }
            if inside {
                map.cells[i] = PERMITTED;
            }
        }
        Ok(map)
    }

    /// Range-of-motion map: the union of the triangles `(trace[0], trace[k],
    /// trace[k + 1])` swept by a recorded end-effector trace.
    pub fn rom_from_trace(trace: &[Vec2], geometry: GridGeometry) -> Result<Self> {
        if trace.len() < 3 {
            return Err(Error::TraceTooShort(trace.len()));
        }
        if let Some(p) = trace.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite trace point {p:?}")));
        }
        let mut map = Self::new(geometry);
        let start = trace[0];
        for w in trace[1..].windows(2) {
            raster::fill_triangle(&geometry, start, w[0], w[1], |c| map.set_unversioned(c, PERMITTED));
        }
        Ok(map)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    /// Cell value, 0 outside the grid.
    pub fn get(&self, cell: Cell) -> u8 {
        self.geometry.index(cell).map_or(PROHIBITED, |i| self.cells[i])
    }

    pub fn is_permitted(&self, cell: Cell) -> bool {
        self.get(cell) != PROHIBITED
    }

    pub fn is_permitted_world(&self, p: Vec2) -> bool {
        self.is_permitted(self.geometry.cell_of(p))
    }

    pub fn count_permitted(&self) -> usize {
        self.cells.iter().filter(|&&v| v != PROHIBITED).count()
    }

    pub fn permitted_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != PROHIBITED)
            .map(|(i, _)| self.geometry.cell_at(i))
    }

    /// 0/1 indicator of the permitted area in row-major order.
    pub fn indicator(&self) -> Vec<u8> {
        self.cells.iter().map(|&v| u8::from(v != PROHIBITED)).collect()
    }

    fn set_unversioned(&mut self, cell: Cell, value: u8) {
        if let Some(i) = self.geometry.index(cell) {
            self.cells[i] = value;
        }
    }

    /// Writes `value` into every cell of `region` (off-grid parts are ignored)
    /// and bumps the revision. Returns the number of cells written.
    pub fn edit_region(&mut self, region: &Region, value: u8) -> usize {
        let mut written = 0usize;
        match region {
            Region::Rect { a, b } => {
                let x0 = a.x.min(b.x).max(0);
                let x1 = a.x.max(b.x).min(self.geometry.width() as i64 - 1);
                let y0 = a.y.min(b.y).max(0);
                let y1 = a.y.max(b.y).min(self.geometry.height() as i64 - 1);
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        self.set_unversioned(Cell::new(x, y), value);
                        written += 1;
                    }
                }
            }
            Region::Stroke { points, width_cells } => {
                let geom = self.geometry;
                let mut touched = Vec::new();
                raster::stroke_polyline(&geom, points, *width_cells, |c| touched.push(c));
                touched.sort_unstable();
                touched.dedup();
                for c in touched {
                    self.set_unversioned(c, value);
                    written += 1;
                }
            }
        }
        self.revision += 1;
        written
    }

    /// Replaces the contents with `other` (same geometry required), bumping
    /// the revision past both.
    pub fn replace_with(&mut self, other: &MotionRestrictionMap) -> Result<()> {
        if other.geometry != self.geometry {
            return Err(Error::InvalidGeometry("replacement map geometry differs".into()));
        }
        self.cells.clone_from(&other.cells);
        self.revision = self.revision.max(other.revision) + 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GridGeometry {
        GridGeometry::centered(41, 31, 1.0).unwrap()
    }

    #[test]
    fn implicit_zero_function_permits_everything() {
        let spec = ImplicitCurveSpec::new(|_, _| 0.0, 0.5).unwrap();
        let m = MotionRestrictionMap::from_implicit(&spec, small()).unwrap();
        assert_eq!(m.count_permitted(), 41 * 31);
    }

    #[test]
    fn implicit_rejects_nonpositive_width() {
        assert!(ImplicitCurveSpec::new(|_, _| 0.0, 0.0).is_err());
    }

    #[test]
    fn implicit_non_finite_names_the_cell() {
        let spec = ImplicitCurveSpec::new(|x, y| if x > 5.0 && y > 5.0 { f64::NAN } else { 1.0 }, 0.5).unwrap();
        match MotionRestrictionMap::from_implicit(&spec, small()) {
            Err(Error::NonFiniteValue { cell, .. }) => assert_eq!(cell, small().cell_of(Vec2::new(6.0, 6.0))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn implicit_matches_inequality_exhaustively() {
        let geom = small();
        let f = |x: f64, y: f64| x * x + y * y - 10.0 * 10.0;
        let spec = ImplicitCurveSpec::new(f, 12.0).unwrap();
        let m = MotionRestrictionMap::from_implicit(&spec, geom).unwrap();
        for c in geom.cells() {
            let p = geom.world(c);
            assert_eq!(m.is_permitted(c), f(p.x, p.y).abs() < 12.0, "cell {c:?}");
        }
        assert!(m.count_permitted() > 0);
    }

    #[test]
    fn inequality_constant_fields() {
        let geom = small();
        let none = MotionRestrictionMap::from_inequalities(&RegionInequalitySpec::new().with(|_, _| 1.0), geom).unwrap();
        assert_eq!(none.count_permitted(), 0);
        let all = MotionRestrictionMap::from_inequalities(&RegionInequalitySpec::new().with(|_, _| -1.0), geom).unwrap();
        assert_eq!(all.count_permitted(), geom.len());
    }

    #[test]
    fn inequality_disk_radius_140() {
        let geom = GridGeometry::default_workspace();
        let spec = RegionInequalitySpec::new().with(|x, y| x * x + y * y - 140.0 * 140.0);
        let m = MotionRestrictionMap::from_inequalities(&spec, geom).unwrap();
        for c in m.permitted_cells() {
            assert!(geom.world(c).norm() < 140.0);
        }
        let area = m.count_permitted() as f64;
        let disk = std::f64::consts::PI * 140.0 * 140.0;
        assert!((area - disk).abs() / disk < 0.01, "area {area} vs {disk}");
    }

    #[test]
    fn out_of_bounds_is_prohibited() {
        let m = MotionRestrictionMap::filled(small(), PERMITTED);
        assert!(!m.is_permitted(Cell::new(-1, 0)));
        assert!(!m.is_permitted(Cell::new(41, 0)));
        assert!(!m.is_permitted(Cell::new(0, 31)));
        assert!(m.is_permitted(Cell::new(40, 30)));
    }

    #[test]
    fn rom_needs_three_points() {
        let pts = [Vec2::ZERO, Vec2::new(1.0, 0.0)];
        assert!(matches!(
            MotionRestrictionMap::rom_from_trace(&pts, small()),
            Err(Error::TraceTooShort(2))
        ));
    }

    #[test]
    fn rom_square_loop_fills_square() {
        let geom = small();
        let pts = [
            Vec2::new(-5.0, -5.0),
            Vec2::new(5.0, -5.0),
            Vec2::new(5.0, 5.0),
            Vec2::new(-5.0, 5.0),
            Vec2::new(-5.0, -5.0),
        ];
        let m = MotionRestrictionMap::rom_from_trace(&pts, geom).unwrap();
        assert_eq!(m.count_permitted(), 11 * 11);
        for c in m.permitted_cells() {
            let p = geom.world(c);
            assert!(p.x.abs() <= 5.0 + 1e-9 && p.y.abs() <= 5.0 + 1e-9);
        }
    }

    #[test]
    fn rom_collinear_trace_is_a_thin_line() {
        let geom = small();
        let pts = [Vec2::new(-10.0, 0.0), Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)];
        let m = MotionRestrictionMap::rom_from_trace(&pts, geom).unwrap();
        assert_eq!(m.count_permitted(), 21);
        assert!(m.permitted_cells().all(|c| geom.world(c).y == 0.0));
    }

    #[test]
    fn rect_edit_and_inverse() {
        let mut m = MotionRestrictionMap::new(small());
        let r = Region::Rect {
            a: Cell::new(12, 3),
            b: Cell::new(3, 12),
        };
        assert_eq!(m.edit_region(&r, PERMITTED), 100);
        assert_eq!(m.count_permitted(), 100);
        assert_eq!(m.revision(), 1);
        m.edit_region(&r, PROHIBITED);
        assert_eq!(m.count_permitted(), 0);
        assert_eq!(m.revision(), 2);
    }

    #[test]
    fn rect_edit_clips_to_grid() {
        let mut m = MotionRestrictionMap::new(small());
        let r = Region::Rect {
            a: Cell::new(-10, -10),
            b: Cell::new(1, 1),
        };
        assert_eq!(m.edit_region(&r, PERMITTED), 4);
        assert_eq!(m.count_permitted(), 4);
    }

    #[test]
    fn edit_touches_only_region() {
        let geom = small();
        let mut m = MotionRestrictionMap::new(geom);
        let pts = vec![Vec2::new(-12.0, -4.0), Vec2::new(3.0, 7.5), Vec2::new(14.0, -2.0)];
        m.edit_region(
            &Region::Stroke {
                points: pts.clone(),
                width_cells: 3.0,
            },
            PERMITTED,
        );
        for c in geom.cells() {
            let p = geom.world(c);
            let d = pts
                .windows(2)
                .map(|w| raster::point_segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(m.is_permitted(c), d <= 1.5 + 1e-9, "cell {c:?} d={d}");
        }
    }
}
