//! Zygmund dilations, rectangles, dyadic lattices and the cone.
//!
//! Boxes are half-open `[a, a+l)` on the torus. A node belongs to a box when
//! its coordinate lies in that interval modulo the box extent.

use std::io::Write;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Grid3;

const NODE_EPS: f64 = 1e-9;
pub const ZYGMUND_TOL: f64 = 1e-10;

pub fn zygmund_dilate(x: [f64; 3], s: f64, t: f64) -> Result<[f64; 3]> {
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::Parameter(format!("dilation factors must be positive, got s={s}, t={t}")));
    }
    Ok([s * x[0], t * x[1], s * t * x[2]])
}

pub fn is_zygmund(sides: [f64; 3], tol: f64) -> Result<bool> {
    if sides.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Geometry(format!("nonpositive side in {sides:?}")));
    }
    Ok((sides[2] - sides[0] * sides[1]).abs() <= tol * sides[2])
}

/// Consecutive nodes `start, start+1, ...` (mod n) along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisSpan {
    pub start: usize,
    pub count: usize,
}

impl AxisSpan {
    pub fn iter(&self, n: usize) -> impl Iterator<Item = usize> {
        let s = self.start;
        (0..self.count).map(move |t| (s + t) % n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect3 {
    pub corner: [f64; 3],
    pub sides: [f64; 3],
}

impl Rect3 {
    pub fn new(corner: [f64; 3], sides: [f64; 3]) -> Result<Self> {
        if sides.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Geometry(format!("nonpositive side in {sides:?}")));
        }
        Ok(Rect3 { corner, sides })
    }

    pub fn volume(&self) -> f64 {
        self.sides.iter().product()
    }

    pub fn is_zygmund(&self) -> bool {
        (self.sides[2] - self.sides[0] * self.sides[1]).abs() <= ZYGMUND_TOL * self.sides[2]
    }

    pub fn contains(&self, x: [f64; 3]) -> bool {
        (0..3).all(|a| x[a] >= self.corner[a] && x[a] < self.corner[a] + self.sides[a])
    }

    /// Contains `other` (no wrap-around).
    pub fn encloses(&self, other: &Rect3) -> bool {
        (0..3).all(|a| {
            other.corner[a] >= self.corner[a] - 1e-12
                && other.corner[a] + other.sides[a] <= self.corner[a] + self.sides[a] + 1e-12
        })
    }

    /// Nodes of `grid` inside the box, per axis.
    pub fn spans(&self, grid: &Grid3) -> Result<[AxisSpan; 3]> {
        let h = grid.h();
        let mut out = [AxisSpan { start: 0, count: 0 }; 3];
        for a in 0..3 {
            let n = grid.counts[a];
            if self.sides[a] >= grid.extents[a] * (1.0 - 1e-12) {
                out[a] = AxisSpan { start: 0, count: n };
                continue;
            }
            let u = (self.corner[a] - grid.origin[a]) / h[a];
            let first = (u - NODE_EPS).ceil();
            let end = (u + self.sides[a] / h[a] - NODE_EPS).ceil();
            let count = ((end - first) as usize).min(n);
            out[a] = AxisSpan { start: (first as i64).rem_euclid(n as i64) as usize, count };
        }
        Ok(out)
    }

    pub fn node_count(&self, grid: &Grid3) -> Result<usize> {
        Ok(self.spans(grid)?.iter().map(|s| s.count).product())
    }

    /// Flat indices of the nodes inside the box.
    pub fn nodes(&self, grid: &Grid3) -> Result<Vec<usize>> {
        let sp = self.spans(grid)?;
        let n = grid.counts;
        let mut out = Vec::with_capacity(sp.iter().map(|s| s.count).product());
        for i0 in sp[0].iter(n[0]) {
            for i1 in sp[1].iter(n[1]) {
                for i2 in sp[2].iter(n[2]) {
                    out.push(grid.index([i0, i1, i2]));
                }
            }
        }
        Ok(out)
    }
}

/// A box with `l(S) = l(I) l(J)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Rect3", into = "Rect3")]
pub struct ZygmundRectangle(Rect3);

impl ZygmundRectangle {
    pub fn new(corner: [f64; 3], sides: [f64; 3]) -> Result<Self> {
        let r = Rect3::new(corner, sides)?;
        if !is_zygmund(sides, ZYGMUND_TOL)? {
            return Err(Error::Geometry(format!("sides {sides:?} violate l(S) = l(I) l(J)")));
        }
        Ok(ZygmundRectangle(r))
    }

    /// Sides `(l1, l2, l1*l2)`.
    pub fn from_base(corner: [f64; 3], l1: f64, l2: f64) -> Result<Self> {
        Self::new(corner, [l1, l2, l1 * l2])
    }

    pub fn rect(&self) -> &Rect3 {
        &self.0
    }
}

impl Deref for ZygmundRectangle {
    type Target = Rect3;
    fn deref(&self) -> &Rect3 {
        &self.0
    }
}

impl TryFrom<Rect3> for ZygmundRectangle {
    type Error = Error;
    fn try_from(r: Rect3) -> Result<Self> {
        Self::new(r.corner, r.sides)
    }
}

impl From<ZygmundRectangle> for Rect3 {
    fn from(z: ZygmundRectangle) -> Rect3 {
        z.0
    }
}

/// Where each lattice cell is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SamplePolicy {
    #[default]
    LowerLeft,
    Center,
    RandomFixed { seed: u64 },
}

/// Tiling of the box by dyadic Zygmund cells of sides
/// `(2^(j-N), 2^(k-N), 2^(j+k-2N))`, anchored at node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ZygLattice {
    pub j: i32,
    pub k: i32,
    pub n: u32,
    pub sides: [f64; 3],
    /// cells per axis
    pub cells_per_axis: [usize; 3],
    /// grid nodes per cell along each axis
    pub nodes_per_cell: [usize; 3],
    origin: [f64; 3],
}

pub fn build_lattice(grid: &Grid3, j: i32, k: i32, n: u32) -> Result<ZygLattice> {
    build_lattice_with_min(grid, j, k, n, 2)
}

pub fn build_lattice_with_min(grid: &Grid3, j: i32, k: i32, n: u32, min_nodes: usize) -> Result<ZygLattice> {
    let n_i = n as i32;
    let sides = [
        2f64.powi(j - n_i),
        2f64.powi(k - n_i),
        2f64.powi(j + k - 2 * n_i),
    ];
    let h = grid.h();
    let mut per = [0usize; 3];
    let mut nodes = [0usize; 3];
    for a in 0..3 {
        let q = grid.extents[a] / sides[a];
        if q < 1.0 - 1e-9 || (q - q.round()).abs() > 1e-9 {
            return Err(Error::Geometry(format!(
                "axis {}: cell side {} does not divide box side {}",
                a + 1,
                sides[a],
                grid.extents[a]
            )));
        }
        let m = sides[a] / h[a];
        if (m - m.round()).abs() > 1e-9 || (m.round() as usize) < min_nodes {
            return Err(Error::Resolution(format!(
                "axis {}: cell side {} spans {m} grid cells, need an integer >= {min_nodes}",
                a + 1,
                sides[a]
            )));
        }
        per[a] = q.round() as usize;
        nodes[a] = m.round() as usize;
    }
    Ok(ZygLattice { j, k, n, sides, cells_per_axis: per, nodes_per_cell: nodes, origin: grid.origin })
}

impl ZygLattice {
    pub fn len(&self) -> usize {
        self.cells_per_axis.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_coords(&self, c: usize) -> [usize; 3] {
        let p = self.cells_per_axis;
        [c / (p[1] * p[2]), (c / p[2]) % p[1], c % p[2]]
    }

    pub fn cell(&self, c: usize) -> ZygmundRectangle {
        let q = self.cell_coords(c);
        let corner = [0, 1, 2].map(|a| self.origin[a] + q[a] as f64 * self.sides[a]);
        ZygmundRectangle(Rect3 { corner, sides: self.sides })
    }

    pub fn cells(&self) -> impl Iterator<Item = ZygmundRectangle> + '_ {
        (0..self.len()).map(|c| self.cell(c))
    }

    /// Cell holding the node with grid index `i`.
    pub fn cell_of(&self, i: [usize; 3]) -> usize {
        let p = self.cells_per_axis;
        let q = [0, 1, 2].map(|a| i[a] / self.nodes_per_cell[a]);
        (q[0] * p[1] + q[1]) * p[2] + q[2]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "j,k,N,corner1,corner2,corner3,lI,lJ,lS")?;
        for r in self.cells() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                self.j, self.k, self.n, r.corner[0], r.corner[1], r.corner[2], r.sides[0], r.sides[1], r.sides[2]
            )?;
        }
        Ok(())
    }
}

/// `{(y, s, t): |x1-y1| < s, |x2-y2| < s, |x3-y3| < s t}` with vertex `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZygmundCone {
    pub vertex: [f64; 3],
}

impl ZygmundCone {
    pub fn new(vertex: [f64; 3]) -> Self {
        ZygmundCone { vertex }
    }

    pub fn half_widths(s: f64, t: f64) -> [f64; 3] {
        [s, s, s * t]
    }

    pub fn contains(&self, y: [f64; 3], s: f64, t: f64) -> bool {
        let w = Self::half_widths(s, t);
        (0..3).all(|a| (self.vertex[a] - y[a]).abs() < w[a])
    }
}

/// Slice of the cone at fixed `(s, t)`; a plain box, generally not Zygmund.
pub fn cone_section(cone: &ZygmundCone, s: f64, t: f64) -> Result<Rect3> {
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::Parameter(format!("cone parameters must be positive, got s={s}, t={t}")));
    }
    let w = ZygmundCone::half_widths(s, t);
    Rect3::new([0, 1, 2].map(|a| cone.vertex[a] - w[a]), w.map(|x| 2.0 * x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dilation_examples_and_group_law() {
        assert_eq!(zygmund_dilate([1.0, 1.0, 1.0], 2.0, 3.0).unwrap(), [2.0, 3.0, 6.0]);
        assert_eq!(zygmund_dilate([0.3, -1.0, 2.0], 1.0, 1.0).unwrap(), [0.3, -1.0, 2.0]);
        assert!(zygmund_dilate([1.0; 3], 0.0, 1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = [0; 3].map(|_| rng.random_range(-5.0..5.0));
            let (s, t, s2, t2) = (
                rng.random_range(0.1..4.0),
                rng.random_range(0.1..4.0),
                rng.random_range(0.1..4.0),
                rng.random_range(0.1..4.0),
            );
            let a = zygmund_dilate(zygmund_dilate(x, s2, t2).unwrap(), s, t).unwrap();
            let b = zygmund_dilate(x, s * s2, t * t2).unwrap();
            for i in 0..3 {
                assert!((a[i] - b[i]).abs() <= 1e-12 * b[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn zygmund_predicate() {
        assert!(is_zygmund([2.0, 3.0, 6.0], 1e-10).unwrap());
        assert!(!is_zygmund([1.0, 1.0, 2.0], 1e-10).unwrap());
        assert!(is_zygmund([0.0, 1.0, 1.0], 1e-10).is_err());
        for (j, k, n) in [(0, 0, 1), (3, -2, 2), (-1, 4, 0), (5, 5, 3)] {
            let s = [2f64.powi(j - n), 2f64.powi(k - n), 2f64.powi(j + k - 2 * n)];
            assert!(is_zygmund(s, 1e-10).unwrap());
        }
        // (lI, lJ) -> (c lI, lJ / c) keeps the constraint
        assert!(is_zygmund([2.0 * 3.0, 3.0 / 3.0, 6.0], 1e-10).unwrap());
    }

    #[test]
    fn unit_box_lattice() {
        let g = Grid3::cube(1.0, 16).unwrap();
        let lat = build_lattice(&g, 0, 0, 1).unwrap();
        assert_eq!(lat.len(), 16);
        assert_eq!(lat.sides, [0.5, 0.5, 0.25]);
        let vol: f64 = lat.cells().map(|c| c.volume()).sum();
        assert!((vol - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_errors() {
        let g = Grid3::new([3.5, 4.0, 4.0], [4, 4, 4]).unwrap();
        match build_lattice(&g, 0, 0, 0) {
            Err(Error::Geometry(m)) => assert!(m.contains("axis 1")),
            other => panic!("{other:?}"),
        }
        let g = Grid3::cube(1.0, 4).unwrap();
        assert!(matches!(build_lattice(&g, 0, 0, 2), Err(Error::Resolution(_))));
        assert!(build_lattice_with_min(&g, 0, 0, 1, 1).is_ok());
    }

    #[test]
    fn every_node_in_exactly_one_cell() {
        let g = Grid3::new([4.0, 4.0, 16.0], [16, 16, 32]).unwrap();
        let lat = build_lattice(&g, 1, 1, 1).unwrap();
        let mut hits = vec![0u32; g.len()];
        for r in lat.cells() {
            for i in r.nodes(&g).unwrap() {
                hits[i] += 1;
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
        for idx in (0..g.len()).step_by(37) {
            let i = g.unindex(idx);
            assert!(lat.cell(lat.cell_of(i)).contains(g.node(idx)));
        }
    }

    #[test]
    fn refinement_splits_into_sixteen() {
        let g = Grid3::new([4.0, 4.0, 16.0], [32, 32, 128]).unwrap();
        let coarse = build_lattice(&g, 1, 1, 0).unwrap();
        let fine = build_lattice(&g, 1, 1, 1).unwrap();
        assert_eq!(fine.len(), 16 * coarse.len());
        let mut children = vec![0usize; coarse.len()];
        for r in fine.cells() {
            let parents: Vec<usize> = (0..coarse.len())
                .filter(|&c| coarse.cell(c).encloses(&r))
                .collect();
            assert_eq!(parents.len(), 1);
            children[parents[0]] += 1;
        }
        assert!(children.iter().all(|&c| c == 16));
    }

    #[test]
    fn dilation_maps_lattices() {
        let g = Grid3::new([8.0, 8.0, 64.0], [16, 16, 32]).unwrap();
        let a = build_lattice(&g, 1, 1, 0).unwrap();
        let b = build_lattice(&g, 2, 3, 0).unwrap();
        for c in 0..b.len().min(40) {
            let r = b.cell(c);
            let x = zygmund_dilate(r.corner, 0.5, 0.25).unwrap();
            let side = zygmund_dilate(r.sides, 0.5, 0.25).unwrap();
            assert_eq!(side, a.sides);
            assert!((0..a.len()).any(|d| a.cell(d).corner == x));
        }
    }

    #[test]
    fn spans_wrap_and_cover() {
        let g = Grid3::cube(8.0, 8).unwrap();
        let r = Rect3::new([6.0, 0.0, 0.0], [4.0, 8.0, 1.0]).unwrap();
        let sp = r.spans(&g).unwrap();
        assert_eq!(sp[0], AxisSpan { start: 6, count: 4 });
        assert_eq!(sp[0].iter(8).collect::<Vec<_>>(), vec![6, 7, 0, 1]);
        assert_eq!(sp[1].count, 8);
        assert_eq!(sp[2].count, 1);
        let r = Rect3::new([-1.0, 0.0, 0.0], [20.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.spans(&g).unwrap()[0].count, 8);
    }

    #[test]
    fn cone_sections() {
        let cone = ZygmundCone::new([0.0; 3]);
        let r = cone_section(&cone, 1.0, 1.0).unwrap();
        assert_eq!(r.corner, [-1.0; 3]);
        assert_eq!(r.sides, [2.0; 3]);
        let (s, t) = (0.7, 2.5);
        let r = cone_section(&cone, s, t).unwrap();
        assert!((r.volume() - 8.0 * s * s * s * t).abs() < 1e-12);
        assert!(!r.is_zygmund());
        let wider = cone_section(&cone, 2.0 * s, t).unwrap();
        assert!(wider.encloses(&r));
        let y = [0.5, -0.6, 1.0];
        assert!(cone.contains(y, s, t));
        assert!(cone.contains(y, 2.0 * s, t) && cone.contains(y, s, 2.0 * t));
        assert!(cone_section(&cone, -1.0, 1.0).is_err());
    }

    #[test]
    fn lattice_csv_has_one_row_per_cell() {
        let g = Grid3::cube(1.0, 16).unwrap();
        let lat = build_lattice(&g, 0, 0, 1).unwrap();
        let mut out = Vec::new();
        lat.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 17);
    }
}
