//! Spring force maps and the soft-boundary assistance force.
//!
//! The permitted area is first dilated by a disk kernel so the end-effector
//! may enter a transition zone around it. Convolving the dilated indicator
//! with the same normalised disk gives a field that is 1 well inside, 0 well
//! outside and ramps in between; `L_max * (1 - conv)` is the penetration
//! depth used as a spring displacement.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{Cell, GridGeometry};
use crate::map::{MotionRestrictionMap, PERMITTED, PROHIBITED};

/// Uniform disk kernel normalised to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionKernel {
    radius: u32,
    /// Half-width of the disk at each row offset `dy = -r..=r`.
    spans: Vec<u32>,
    count: u32,
}

impl ConvolutionKernel {
    /// Disk of cells with `dx^2 + dy^2 <= r^2`.
    pub fn disk(radius: u32) -> Self {
        let r = i64::from(radius);
        let spans: Vec<u32> = (-r..=r)
            .map(|dy| {
                let mut h = 0i64;
                while (h + 1) * (h + 1) + dy * dy <= r * r {
                    h += 1;
                }
                h as u32
            })
            .collect();
        let count = spans.iter().map(|&h| 2 * h + 1).sum();
        Self { radius, spans, count }
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Number of cells in the disk.
    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn weight(&self, dx: i64, dy: i64) -> f64 {
        let r = i64::from(self.radius);
        if dy.abs() > r {
            return 0.0;
        }
        let h = i64::from(self.spans[(dy + r) as usize]);
        if dx.abs() <= h {
            1.0 / f64::from(self.count)
        } else {
            0.0
        }
    }

    /// Dense `(2r + 1)^2` weight array, row-major from `(-r, -r)`.
    pub fn weights(&self) -> Vec<f64> {
        let r = i64::from(self.radius);
        (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).map(|(dx, dy)| self.weight(dx, dy)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpedanceParams {
    /// Spring stiffness K_sp (N/mm).
    pub stiffness: f64,
    /// Damper coefficient ζ_i (N·s/mm). Applied as `ζ_i (V·d) d` along the
    /// spring direction `d`, so a negative value opposes motion along it.
    pub damper: f64,
    /// Kernel radius r_k (cells).
    pub kernel_radius: u32,
    /// Impedance zone width L_max (mm); must equal `2 r_k ρ`.
    pub zone_width: f64,
}

impl Default for ImpedanceParams {
    fn default() -> Self {
        Self {
            stiffness: 0.1,
            damper: 0.0,
            kernel_radius: 6,
            zone_width: 12.0,
        }
    }
}

impl ImpedanceParams {
    /// Parameters with `L_max` derived from the kernel radius and resolution.
    pub fn for_resolution(stiffness: f64, damper: f64, kernel_radius: u32, resolution: f64) -> Self {
        Self {
            stiffness,
            damper,
            kernel_radius,
            zone_width: 2.0 * f64::from(kernel_radius) * resolution,
        }
    }

    pub fn validate(&self, resolution: f64) -> Result<()> {
        if !(self.stiffness.is_finite() && self.stiffness >= 0.0) {
            return Err(Error::InvalidParams(format!("stiffness must be >= 0, got {}", self.stiffness)));
        }
        if !self.damper.is_finite() {
            return Err(Error::InvalidParams("damper must be finite".into()));
        }
        if self.kernel_radius == 0 {
            return Err(Error::InvalidParams("kernel radius must be >= 1".into()));
        }
        let expected = 2.0 * f64::from(self.kernel_radius) * resolution;
        if !((self.zone_width - expected).abs() <= 1e-6 * expected.max(1.0)) {
            return Err(Error::InvalidParams(format!(
                "zone width {} mm does not match 2 * {} cells * {} mm",
                self.zone_width, self.kernel_radius, resolution
            )));
        }
        Ok(())
    }
}

/// A restriction map dilated by a disk, tagged with what it was built from.
#[derive(Debug, Clone)]
pub struct ExpandedMap {
    pub map: MotionRestrictionMap,
    pub source_revision: u64,
    pub kernel_radius: u32,
}

/// Number of indicator cells under the disk centred on every cell
/// (zero padding). Row spans are summed with per-row prefix sums, so the
/// cost is `O(W H r)`.
fn disk_counts(indicator: &[u8], width: usize, height: usize, kernel: &ConvolutionKernel) -> Vec<u32> {
    let stride = width + 1;
    let mut prefix = vec![0u32; stride * height];
    for y in 0..height {
        let row = &indicator[y * width..(y + 1) * width];
        let out = &mut prefix[y * stride..(y + 1) * stride];
        for x in 0..width {
            out[x + 1] = out[x] + u32::from(row[x]);
        }
    }
    let r = kernel.radius as i64;
    let (w, h) = (width as i64, height as i64);
    let mut counts = vec![0u32; width * height];
    for y in 0..h {
        for (k, &span) in kernel.spans.iter().enumerate() {
            let sy = y + k as i64 - r;
            if sy < 0 || sy >= h {
                continue;
            }
            let row = &prefix[sy as usize * stride..(sy as usize + 1) * stride];
            let span = i64::from(span);
            let out = &mut counts[y as usize * width..(y as usize + 1) * width];
            for x in 0..w {
                let lo = (x - span).clamp(0, w) as usize;
                let hi = (x + span + 1).clamp(0, w) as usize;
                out[x as usize] += row[hi] - row[lo];
            }
        }
    }
    counts
}

/// `indicator ⊗ kernel` with zero padding, exact up to one division.
pub fn convolve(map: &MotionRestrictionMap, kernel: &ConvolutionKernel) -> Vec<f64> {
    let g = map.geometry();
    let n = f64::from(kernel.count);
    disk_counts(&map.indicator(), g.width(), g.height(), kernel)
        .into_iter()
        .map(|c| f64::from(c) / n)
        .collect()
}

/// Reference convolution summing kernel weights cell by cell.
pub fn convolve_direct(map: &MotionRestrictionMap, kernel: &ConvolutionKernel) -> Vec<f64> {
    let g = map.geometry();
    let r = i64::from(kernel.radius);
    let weights = kernel.weights();
    let side = (2 * r + 1) as usize;
    g.cells()
        .map(|c| {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    if map.is_permitted(c.offset(dx, dy)) {
                        acc += weights[(dy + r) as usize * side + (dx + r) as usize];
                    }
                }
            }
            acc
        })
        .collect()
}

/// Dilates the permitted area by the kernel disk.
pub fn expand_map(map: &MotionRestrictionMap, kernel: &ConvolutionKernel) -> Result<ExpandedMap> {
    let g = *map.geometry();
    if 2 * kernel.radius as usize >= g.width().min(g.height()) {
        return Err(Error::InvalidParams(format!(
            "kernel radius {} too large for a {}x{} grid",
            kernel.radius,
            g.width(),
            g.height()
        )));
    }
    let cells = disk_counts(&map.indicator(), g.width(), g.height(), kernel)
        .into_iter()
        .map(|c| if c > 0 { PERMITTED } else { PROHIBITED })
        .collect();
    Ok(ExpandedMap {
        map: MotionRestrictionMap::from_cells(g, cells)?,
        source_revision: map.revision(),
        kernel_radius: kernel.radius,
    })
}

/// Penetration depth field (mm) over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpringForceMap {
    geometry: GridGeometry,
    depth: Vec<f64>,
    zone_width: f64,
    source_revision: u64,
}

/// Builds the depth field `L_max (1 - expanded ⊗ kernel)`.
pub fn build_spring_map(expanded: &ExpandedMap, kernel: &ConvolutionKernel, p: &ImpedanceParams) -> Result<SpringForceMap> {
    if expanded.kernel_radius != kernel.radius || p.kernel_radius != kernel.radius {
        return Err(Error::StaleMap(format!(
            "expanded map built with kernel radius {}, spring kernel {}, params {}",
            expanded.kernel_radius, kernel.radius, p.kernel_radius
        )));
    }
    let g = *expanded.map.geometry();
    p.validate(g.resolution())?;
    let depth = convolve(&expanded.map, kernel).into_iter().map(|c| p.zone_width * (1.0 - c)).collect();
    Ok(SpringForceMap {
        geometry: g,
        depth,
        zone_width: p.zone_width,
        source_revision: expanded.source_revision,
    })
}

impl SpringForceMap {
    pub fn from_depths(geometry: GridGeometry, zone_width: f64, depth: Vec<f64>, source_revision: u64) -> Result<Self> {
        if depth.len() != geometry.len() {
            return Err(Error::InvalidGeometry(format!(
                "expected {} depths, got {}",
                geometry.len(),
                depth.len()
            )));
        }
        Ok(Self {
            geometry,
            depth,
            zone_width,
            source_revision,
        })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn zone_width(&self) -> f64 {
        self.zone_width
    }

    /// Revision of the raw restriction map this field was derived from.
    pub fn source_revision(&self) -> u64 {
        self.source_revision
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    /// Depth at `cell`, clamping coordinates to the grid border.
    pub fn depth_at(&self, cell: Cell) -> f64 {
        let x = cell.x.clamp(0, self.geometry.width() as i64 - 1);
        let y = cell.y.clamp(0, self.geometry.height() as i64 - 1);
        self.depth[y as usize * self.geometry.width() + x as usize]
    }

    /// Unit spring direction at `cell` (down the depth gradient), or zero on
    /// flat ground.
    pub fn direction_at(&self, cell: Cell) -> Vec2 {
        let gx = self.depth_at(cell.offset(1, 0)) - self.depth_at(cell.offset(-1, 0));
        let gy = self.depth_at(cell.offset(0, 1)) - self.depth_at(cell.offset(0, -1));
        (-Vec2::new(gx, gy)).normalize_or_zero()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(16 + 4 * self.depth.len());
        buf.extend_from_slice(SPRING_MAGIC);
        buf.extend_from_slice(&(self.geometry.width() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.geometry.height() as u32).to_le_bytes());
        buf.extend_from_slice(&to_q16(self.zone_width).to_le_bytes());
        for &d in &self.depth {
            buf.extend_from_slice(&(d as f32).to_le_bytes());
        }
        w.write_all(&buf)
    }

    /// Reads a spring map file. The file carries no placement, so the
    /// geometry is supplied by the caller and must match the stored size.
    pub fn read_from(mut r: impl Read, geometry: GridGeometry) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::SpringFile(format!("read failed: {e}")))?;
        let (w, h, zone_width, depth) = decode_spring(&bytes)?;
        if (w, h) != (geometry.width(), geometry.height()) {
            return Err(Error::SpringFile(format!(
                "file is {w}x{h}, expected {}x{}",
                geometry.width(),
                geometry.height()
            )));
        }
        Self::from_depths(geometry, zone_width, depth, 0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, geometry: GridGeometry) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file), geometry)
    }
}

pub const SPRING_MAGIC: &[u8; 4] = b"GSPR";

fn to_q16(v: f64) -> u32 {
    (v * 65536.0).round().clamp(0.0, f64::from(u32::MAX)) as u32
}

fn decode_spring(bytes: &[u8]) -> Result<(usize, usize, f64, Vec<f64>)> {
    if bytes.len() < 16 {
        return Err(Error::SpringFile(format!("header needs 16 bytes, got {}", bytes.len())));
    }
    if &bytes[..4] != SPRING_MAGIC {
        return Err(Error::SpringFile("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4-byte slice"));
    let (w, h) = (word(4) as usize, word(8) as usize);
    let zone_width = f64::from(word(12)) / 65536.0;
    let n = w.checked_mul(h).ok_or_else(|| Error::SpringFile("dimensions overflow".into()))?;
    if bytes.len() != 16 + 4 * n {
        return Err(Error::SpringFile(format!(
            "expected {} payload bytes for {w}x{h}, got {}",
            4 * n,
            bytes.len() - 16
        )));
    }
    let depth = bytes[16..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk"))))
        .collect();
    Ok((w, h, zone_width, depth))
}

/// Composite force: user force plus spring and damper terms at `position`.
///
/// `velocity` is the last desired end-effector velocity in mm/s.
pub fn impedance_step(force: Vec2, velocity: Vec2, position: Vec2, spr: &SpringForceMap, p: &ImpedanceParams) -> Vec2 {
    let cell = spr.geometry.cell_of(position);
    let dir = spr.direction_at(cell);
    force + dir * (p.stiffness * spr.depth_at(cell)) + dir * (p.damper * velocity.dot(dir))
}

/// One-dimensional spring profile over a piecewise-constant permitted set.
///
/// The map is a row of cells of width `resolution` starting at `origin`; the
/// kernel is a unit-area box of width `kernel_width`. Depth is evaluated in
/// continuous space, so the ramps are exact.
#[derive(Debug, Clone)]
pub struct SpringProfile1d {
    pub origin: f64,
    pub resolution: f64,
    pub permitted: Vec<bool>,
    pub kernel_width: f64,
    pub zone_width: f64,
}

impl SpringProfile1d {
    pub fn conv(&self, x: f64) -> f64 {
        let (lo, hi) = (x - self.kernel_width / 2.0, x + self.kernel_width / 2.0);
        let covered: f64 = self
            .permitted
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| {
                let a = self.origin + i as f64 * self.resolution;
                let b = a + self.resolution;
                (hi.min(b) - lo.max(a)).max(0.0)
            })
            .sum();
        covered / self.kernel_width
    }

    pub fn depth(&self, x: f64) -> f64 {
        self.zone_width * (1.0 - self.conv(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Region;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn geom(n: usize) -> GridGeometry {
        GridGeometry::centered(n, n, 1.0).unwrap()
    }

    fn single_cell(n: usize) -> MotionRestrictionMap {
        let mut m = MotionRestrictionMap::new(geom(n));
        let c = (n / 2) as i64;
        m.edit_region(&Region::Rect { a: Cell::new(c, c), b: Cell::new(c, c) }, PERMITTED);
        m
    }

    #[test]
    fn kernel_is_symmetric_and_normalised() {
        for r in [1, 2, 6, 13] {
            let k = ConvolutionKernel::disk(r);
            let w = k.weights();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let ri = i64::from(r);
            for dy in -ri..=ri {
                for dx in -ri..=ri {
                    assert_eq!(k.weight(dx, dy), k.weight(-dx, dy));
                    assert_eq!(k.weight(dx, dy), k.weight(dy, dx));
                    assert_eq!(k.weight(dx, dy) > 0.0, dx * dx + dy * dy <= ri * ri);
                }
            }
        }
        assert_eq!(ConvolutionKernel::disk(1).count(), 5);
    }

    #[test]
    fn one_dimensional_profile_matches_closed_form() {
        // Cells of 0.5 on [0, 10); the permitted segment is [2, 6].
        let permitted = (0..20).map(|i| (4..12).contains(&i)).collect();
        let prof = SpringProfile1d {
            origin: 0.0,
            resolution: 0.5,
            permitted,
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
        let mut max_err = 0.0f64;
        for i in 0..=8000 {
            let x = 0.5 + i as f64 * 1e-3;
            max_err = max_err.max((prof.depth(x) - closed(x)).abs());
        }
        assert!(max_err <= 1e-9, "max error {max_err}");
    }

    #[test]
    fn single_cell_dilates_to_disk() {
        let m = single_cell(41);
        let e = expand_map(&m, &ConvolutionKernel::disk(6)).unwrap();
        for c in e.map.geometry().cells() {
            let (dx, dy) = (c.x - 20, c.y - 20);
            assert_eq!(e.map.is_permitted(c), dx * dx + dy * dy <= 36, "{c:?}");
        }
        assert_eq!(e.source_revision, m.revision());
    }

    #[test]
    fn trivial_maps_are_fixed_points() {
        let k = ConvolutionKernel::disk(4);
        let none = MotionRestrictionMap::new(geom(30));
        assert_eq!(expand_map(&none, &k).unwrap().map.cells(), none.cells());
        let all = MotionRestrictionMap::filled(geom(30), PERMITTED);
        assert_eq!(expand_map(&all, &k).unwrap().map.cells(), all.cells());
        assert!(expand_map(&all, &ConvolutionKernel::disk(15)).is_err());
    }

    fn random_map(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> MotionRestrictionMap {
        let g = GridGeometry::centered(w, h, 1.0).unwrap();
        let cells = (0..w * h).map(|_| if rng.random_bool(density) { PERMITTED } else { PROHIBITED }).collect();
        MotionRestrictionMap::from_cells(g, cells).unwrap()
    }

    #[test]
    fn dilation_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (w, h) = (rng.random_range(20..80), rng.random_range(20..80));
            let density = rng.random_range(0.002..0.05);
            let m = random_map(&mut rng, w, h, density);
            let r = rng.random_range(1..(w.min(h) as u32 / 2));
            let e = expand_map(&m, &ConvolutionKernel::disk(r)).unwrap();
            let ri = i64::from(r);
            let sources: Vec<Cell> = m.permitted_cells().collect();
            for c in m.geometry().cells() {
                let near = sources.iter().any(|s| (s.x - c.x).pow(2) + (s.y - c.y).pow(2) <= ri * ri);
                assert_eq!(e.map.is_permitted(c), near);
            }
        }
    }

    #[test]
    fn fast_convolution_matches_direct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..8 {
            let m = random_map(&mut rng, 50, 37, 0.4);
            let k = ConvolutionKernel::disk(rng.random_range(1..12));
            let fast = convolve(&m, &k);
            let direct = convolve_direct(&m, &k);
            for (a, b) in fast.iter().zip(&direct) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    fn spring_for(m: &MotionRestrictionMap, r: u32) -> (SpringForceMap, ImpedanceParams) {
        let k = ConvolutionKernel::disk(r);
        let p = ImpedanceParams::for_resolution(0.1, 0.0, r, 1.0);
        let e = expand_map(m, &k).unwrap();
        (build_spring_map(&e, &k, &p).unwrap(), p)
    }

    #[test]
    fn depth_bounds_and_plateaus() {
        let mut m = MotionRestrictionMap::new(geom(81));
        m.edit_region(&Region::Rect { a: Cell::new(20, 20), b: Cell::new(60, 60) }, PERMITTED);
        let (spr, p) = spring_for(&m, 6);
        assert!(spr.depths().iter().all(|&d| (0.0..=p.zone_width).contains(&d)));
        assert_eq!(spr.depth_at(Cell::new(40, 40)), 0.0);
        assert_eq!(spr.depth_at(Cell::new(2, 2)), p.zone_width);
        let f = Vec2::new(1.5, -2.0);
        assert_eq!(impedance_step(f, Vec2::new(3.0, 4.0), Vec2::ZERO, &spr, &p), f);
    }

    #[test]
    fn stale_kernel_is_rejected() {
        let m = single_cell(41);
        let e = expand_map(&m, &ConvolutionKernel::disk(6)).unwrap();
        let p = ImpedanceParams::for_resolution(0.1, 0.0, 5, 1.0);
        assert!(matches!(
            build_spring_map(&e, &ConvolutionKernel::disk(5), &p),
            Err(Error::StaleMap(_))
        ));
        let bad = ImpedanceParams { zone_width: 10.0, ..ImpedanceParams::default() };
        assert!(build_spring_map(&e, &ConvolutionKernel::disk(6), &bad).is_err());
    }

    #[test]
    fn hand_built_ramp_gives_expected_force() {
        // 7x7 depth field rising 1 mm per column to the right; centre depth 3.
        let g = geom(7);
        let depth = (0..49).map(|i| (i % 7) as f64).collect();
        let spr = SpringForceMap::from_depths(g, 12.0, depth, 0).unwrap();
        let p = ImpedanceParams { stiffness: 0.1, damper: 0.0, kernel_radius: 6, zone_width: 12.0 };
        let f_in = Vec2::new(0.7, 0.2);
        let f = impedance_step(f_in, Vec2::ZERO, Vec2::ZERO, &spr, &p);
        assert!((f - (f_in + Vec2::new(-0.3, 0.0))).norm() < 1e-12);
        // Damper acts along the spring direction only.
        let p = ImpedanceParams { damper: -0.01, ..p };
        let f = impedance_step(Vec2::ZERO, Vec2::new(-20.0, 5.0), Vec2::ZERO, &spr, &p);
        // Moving inward at 20 mm/s, the negative damper pushes back by 0.2 N.
        assert!((f - Vec2::new(-0.3 + 0.2, 0.0)).norm() < 1e-12);
        // Border cells clamp instead of reading out of range.
        let edge = impedance_step(Vec2::ZERO, Vec2::ZERO, Vec2::new(3.0, 3.0), &spr, &ImpedanceParams { damper: 0.0, ..p });
        assert!((edge - Vec2::new(-0.6, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn neighbour_depth_jumps_are_bounded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for r in [3u32, 6, 9] {
            let m = random_map(&mut rng, 60, 60, 0.01);
            let (spr, p) = spring_for(&m, r);
            let k = ConvolutionKernel::disk(r);
            let bound = p.zone_width * f64::from(2 * r + 1) / f64::from(k.count()) + 1e-9;
            for c in spr.geometry().cells() {
                for n in [c.offset(1, 0), c.offset(0, 1)] {
                    if spr.geometry().contains(n) {
                        assert!((spr.depth_at(c) - spr.depth_at(n)).abs() <= bound);
                    }
                }
            }
        }
    }

    #[test]
    fn point_attractor_is_radially_symmetric() {
        let r = 20u32;
        let m = single_cell(121);
        let (spr, _) = spring_for(&m, r);
        let zone = 2 * r as i64;
        for c in spr.geometry().cells() {
            let (dx, dy) = (c.x - 60, c.y - 60);
            let d2 = dx * dx + dy * dy;
            if d2 < 9 || d2 > (zone - 3).pow(2) {
                continue;
            }
            let dir = spr.direction_at(c);
            let inward = Vec2::new(-dx as f64, -dy as f64).normalize_or_zero();
            let angle = dir.dot(inward).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 5.0, "{c:?}: {angle} deg");
        }
        // Mirror cells agree exactly; the kernel is symmetric.
        assert_eq!(spr.depth_at(Cell::new(70, 60)), spr.depth_at(Cell::new(60, 50)));
        assert_eq!(spr.depth_at(Cell::new(73, 64)), spr.depth_at(Cell::new(47, 56)));
        assert_eq!(spr.depth_at(Cell::new(60 + zone + 2, 60)), spr.zone_width());
    }

    #[test]
    fn spring_file_round_trip() {
        let m = single_cell(31);
        let (spr, _) = spring_for(&m, 6);
        let mut buf = Vec::new();
        spr.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 4 * 31 * 31);
        assert_eq!(&buf[..4], SPRING_MAGIC);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 12 * 65536);
        let back = SpringForceMap::read_from(buf.as_slice(), *spr.geometry()).unwrap();
        assert_eq!(back.zone_width(), 12.0);
        for (a, b) in back.depths().iter().zip(spr.depths()) {
            assert_eq!(*a, f64::from(*b as f32));
        }
        assert!(SpringForceMap::read_from(&buf[..20], *spr.geometry()).is_err());
        assert!(SpringForceMap::read_from(buf.as_slice(), geom(30)).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(SpringForceMap::read_from(bad.as_slice(), *spr.geometry()).is_err());
    }

    proptest! {
        #[test]
        fn spring_points_downhill(px in -14.0f64..14.0, py in -14.0f64..14.0) {
            let m = single_cell(31);
            let (spr, p) = spring_for(&m, 6);
            let f = impedance_step(Vec2::ZERO, Vec2::ZERO, Vec2::new(px, py), &spr, &p);
            // Never pushes away from the attractor.
            prop_assert!(f.dot(Vec2::new(px, py)) <= 1e-12);
            prop_assert!(f.norm() <= p.stiffness * p.zone_width + 1e-12);
        }
    }
}
