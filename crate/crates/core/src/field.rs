//! Periodic grids, real fields and their spectra.
//!
//! Node `i` along an axis sits at `origin + i*h`. Flat indices are row-major,
//! `(i0*n1 + i1)*n2 + i2`. Spectra use the unscaled forward DFT; frequency
//! index `m` stands for `xi = m'/L` with `m' = m` below `n/2` and `m - n` above.

use std::io::{Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::geometry::Rect3;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub extents: [f64; 3],
    pub counts: [usize; 3],
    pub origin: [f64; 3],
}

impl Grid3 {
    pub fn new(extents: [f64; 3], counts: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if !(extents[a] > 0.0 && extents[a].is_finite()) {
                return Err(Error::Parameter(format!("extent {a} must be positive, got {}", extents[a])));
            }
            if !counts[a].is_power_of_two() {
                return Err(Error::Parameter(format!("count {a} must be a power of two, got {}", counts[a])));
            }
        }
        Ok(Grid3 { extents, counts, origin: [0.0; 3] })
    }

    pub fn cube(side: f64, n: usize) -> Result<Self> {
        Self::new([side; 3], [n; 3])
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    /// Nodes at cell midpoints of the box `[0, L)`.
    pub fn cell_centered(self) -> Self {
        let h = self.h();
        self.with_origin([h[0] / 2.0, h[1] / 2.0, h[2] / 2.0])
    }

    pub fn h(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.extents[a] / self.counts[a] as f64)
    }

    pub fn cellvol(&self) -> f64 {
        self.h().iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.counts[1] + i[1]) * self.counts[2] + i[2]
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let n12 = self.counts[1] * self.counts[2];
        [idx / n12, (idx / self.counts[2]) % self.counts[1], idx % self.counts[2]]
    }

    pub fn node(&self, idx: usize) -> [f64; 3] {
        let i = self.unindex(idx);
        let h = self.h();
        [0, 1, 2].map(|a| self.origin[a] + i[a] as f64 * h[a])
    }

    /// Centered displacement represented by index `i` on axis `a`, in `[-L/2, L/2)`.
    #[inline]
    pub fn disp(&self, a: usize, i: usize) -> f64 {
        let n = self.counts[a];
        let m = if i < n / 2 { i as isize } else { i as isize - n as isize };
        m as f64 * self.extents[a] / n as f64
    }

    #[inline]
    pub fn freq(&self, a: usize, m: usize) -> f64 {
        let n = self.counts[a];
        let s = if m < n / 2 { m as isize } else { m as isize - n as isize };
        s as f64 / self.extents[a]
    }

    pub fn freqs(&self, a: usize) -> Vec<f64> {
        (0..self.counts[a]).map(|m| self.freq(a, m)).collect()
    }

    pub fn nyquist(&self, a: usize) -> f64 {
        self.counts[a] as f64 / (2.0 * self.extents[a])
    }

    pub fn same(&self, other: &Grid3) -> bool {
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
        self.counts == other.counts
            && (0..3).all(|a| close(self.extents[a], other.extents[a]) && close(self.origin[a], other.origin[a]))
    }

    pub fn check_same(&self, other: &Grid3) -> Result<()> {
        if self.same(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!("grid {:?}/{:?} vs {:?}/{:?}", self.counts, self.extents, other.counts, other.extents)))
        }
    }
}

/// Real samples on a [`Grid3`]. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3 {
    grid: Grid3,
    values: Vec<f64>,
}

impl ScalarField3 {
    pub fn new(grid: Grid3, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!("{} values for a grid of {}", values.len(), grid.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at index {i}")));
        }
        Ok(ScalarField3 { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid3, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField3 { grid, values }
    }

    pub fn zeros(grid: Grid3) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid3, c: f64) -> Self {
        ScalarField3 { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at the node coordinates.
    pub fn from_fn<F>(grid: Grid3, f: F) -> Result<Self>
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        Self::new(grid, par::map_range(grid.len(), |i| f(grid.node(i))))
    }

    /// Samples `f` at the centered displacements (for kernels and atoms).
    pub fn from_disp_fn<F>(grid: Grid3, f: F) -> Result<Self>
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        Self::new(
            grid,
            par::map_range(grid.len(), |idx| {
                let i = grid.unindex(idx);
                f([grid.disp(0, i[0]), grid.disp(1, i[1]), grid.disp(2, i[2])])
            }),
        )
    }

    /// Discrete delta of unit mass at node `i`.
    pub fn delta(grid: Grid3, i: [usize; 3]) -> Self {
        let mut v = vec![0.0; grid.len()];
        v[grid.index(i)] = 1.0 / grid.cellvol();
        ScalarField3 { grid, values: v }
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: [usize; 3]) -> f64 {
        self.values[self.grid.index(i)]
    }

    pub fn map<F: Fn(f64) -> f64 + Sync + Send>(&self, f: F) -> Result<Self> {
        Self::new(self.grid, par::map_slice(&self.values, |&v| f(v)))
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64 + Sync + Send>(&self, other: &Self, f: F) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let (a, b) = (&self.values, &other.values);
        Self::new(self.grid, par::map_range(a.len(), |i| f(a[i], b[i])))
    }

    pub fn scale(&self, c: f64) -> Self {
        ScalarField3 { grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `sum f g * cellvol`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let (a, b) = (&self.values, &other.values);
        Ok(par::sum_range(a.len(), |i| a[i] * b[i]) * self.grid.cellvol())
    }

    pub fn norm2(&self) -> f64 {
        let v = &self.values;
        (par::sum_range(v.len(), |i| v[i] * v[i]) * self.grid.cellvol()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn spectrum(&self) -> SpectralField3 {
        SpectralField3::forward(self)
    }

    /// Applies a real Fourier multiplier given on the frequency lattice.
    pub fn apply_multiplier(&self, m: &[f64]) -> Result<Self> {
        self.spectrum().multiply(m)?.to_real()
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for n in self.grid.counts {
            out.write_all(&(n as u64).to_le_bytes())?;
        }
        for l in self.grid.extents {
            out.write_all(&l.to_le_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 48 || (bytes.len() - 48) % 8 != 0 {
            return Err(Error::Data(format!("{}: truncated field file", path.display())));
        }
        let word = |k: usize| <[u8; 8]>::try_from(&bytes[8 * k..8 * k + 8]).unwrap();
        let counts = [0, 1, 2].map(|k| u64::from_le_bytes(word(k)) as usize);
        let extents = [3, 4, 5].map(|k| f64::from_le_bytes(word(k)));
        let grid = Grid3::new(extents, counts)?;
        let values = (6..bytes.len() / 8).map(|k| f64::from_le_bytes(word(k))).collect();
        Self::new(grid, values)
    }

    /// `i0,i1,i2,x1,x2,x3,value` rows; meant for small grids.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i0,i1,i2,x1,x2,x3,value")?;
        for idx in 0..self.grid.len() {
            let i = self.grid.unindex(idx);
            let x = self.grid.node(idx);
            writeln!(w, "{},{},{},{},{},{},{:e}", i[0], i[1], i[2], x[0], x[1], x[2], self.values[idx])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField3 {
    grid: Grid3,
    coeffs: Vec<Complex64>,
}

impl SpectralField3 {
    pub fn forward(f: &ScalarField3) -> Self {
        let mut c: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::forward3(&mut c, f.grid.counts);
        SpectralField3 { grid: f.grid, coeffs: c }
    }

    pub fn from_coeffs(grid: Grid3, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::Dimension(format!("{} coefficients for a grid of {}", coeffs.len(), grid.len())));
        }
        Ok(SpectralField3 { grid, coeffs })
    }

    /// Lattice of values `sym(xi)` for every frequency.
    pub fn symbol<F>(grid: &Grid3, sym: F) -> Vec<f64>
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        let fr = [grid.freqs(0), grid.freqs(1), grid.freqs(2)];
        par::map_range(grid.len(), |idx| {
            let m = grid.unindex(idx);
            sym([fr[0][m[0]], fr[1][m[1]], fr[2][m[2]]])
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn multiply(&self, m: &[f64]) -> Result<Self> {
        if m.len() != self.coeffs.len() {
            return Err(Error::Dimension(format!("multiplier of length {} for {}", m.len(), self.coeffs.len())));
        }
        let c = &self.coeffs;
        Ok(SpectralField3 { grid: self.grid, coeffs: par::map_range(c.len(), |i| c[i] * m[i]) })
    }

    pub fn multiply_complex(&self, m: &[Complex64]) -> Result<Self> {
        if m.len() != self.coeffs.len() {
            return Err(Error::Dimension(format!("multiplier of length {} for {}", m.len(), self.coeffs.len())));
        }
        let c = &self.coeffs;
        Ok(SpectralField3 { grid: self.grid, coeffs: par::map_range(c.len(), |i| c[i] * m[i]) })
    }

    pub fn inverse(&self) -> Vec<Complex64> {
        let mut c = self.coeffs.clone();
        fft::inverse3(&mut c, self.grid.counts);
        c
    }

    /// Inverse transform keeping the real part.
    pub fn to_real(&self) -> Result<ScalarField3> {
        ScalarField3::new(self.grid, self.inverse().into_iter().map(|z| z.re).collect())
    }
}

/// Periodic convolution with Riemann measure: `IFFT(F G) * cellvol`.
pub fn fft_convolve(f: &ScalarField3, g: &ScalarField3) -> Result<ScalarField3> {
    f.grid.check_same(&g.grid)?;
    let a = f.spectrum();
    let b = g.spectrum();
    let dv = f.grid.cellvol();
    let prod: Vec<Complex64> = par::map_range(a.coeffs.len(), |i| a.coeffs[i] * b.coeffs[i] * dv);
    SpectralField3 { grid: f.grid, coeffs: prod }.to_real()
}

/// `(sum |f|^p w cellvol)^(1/p)`, with `w = 1` when absent.
pub fn lp_norm(f: &ScalarField3, p: f64, w: Option<&ScalarField3>) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Parameter(format!("p must be a finite number >= 1, got {p}")));
    }
    let v = &f.values;
    let s = match w {
        Some(w) => {
            f.grid.check_same(&w.grid)?;
            if let Some(i) = w.values.iter().position(|&x| !(x > 0.0)) {
                return Err(Error::Weight(format!("weight sample {i} is {} (must be positive)", w.values[i])));
            }
            let wv = &w.values;
            par::sum_range(v.len(), |i| v[i].abs().powf(p) * wv[i])
        }
        None => par::sum_range(v.len(), |i| v[i].abs().powf(p)),
    };
    Ok((s * f.grid.cellvol()).powf(1.0 / p))
}

/// Riemann sum over the nodes inside `region` (whole box when `None`).
pub fn integrate(f: &ScalarField3, region: Option<&Rect3>) -> Result<f64> {
    let g = &f.grid;
    match region {
        None => Ok(par::sum_range(f.values.len(), |i| f.values[i]) * g.cellvol()),
        Some(r) => {
            let spans = r.spans(g)?;
            let mut s = 0.0;
            for i0 in spans[0].iter(g.counts[0]) {
                for i1 in spans[1].iter(g.counts[1]) {
                    let base = (i0 * g.counts[1] + i1) * g.counts[2];
                    for i2 in spans[2].iter(g.counts[2]) {
                        s += f.values[base + i2];
                    }
                }
            }
            Ok(s * g.cellvol())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(grid: Grid3, seed: u64) -> ScalarField3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField3::new(grid, (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn grid_rejects_bad_counts() {
        assert!(Grid3::new([1.0; 3], [6, 8, 8]).is_err());
        assert!(Grid3::new([0.0, 1.0, 1.0], [8; 3]).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid3::new([1.0, 2.0, 3.0], [4, 8, 2]).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.index(g.unindex(idx)), idx);
        }
    }

    #[test]
    fn displacements_cover_fundamental_domain() {
        let g = Grid3::cube(8.0, 8).unwrap();
        let d: Vec<f64> = (0..8).map(|i| g.disp(0, i)).collect();
        assert_eq!(d, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
        assert_eq!(g.freq(0, 5), -3.0 / 8.0);
    }

    #[test]
    fn delta_is_convolution_identity() {
        let g = Grid3::new([2.0, 1.0, 3.0], [8, 4, 8]).unwrap();
        let f = random(g, 1);
        let out = fft_convolve(&f, &ScalarField3::delta(g, [0, 0, 0])).unwrap();
        let scale = f.max_abs();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn constant_convolves_to_integral() {
        let g = Grid3::cube(2.0, 8).unwrap();
        let f = random(g, 2);
        let total = integrate(&f, None).unwrap();
        let out = fft_convolve(&ScalarField3::constant(g, 1.0), &f).unwrap();
        assert!(out.values().iter().all(|v| (v - total).abs() < 1e-12));
    }

    #[test]
    fn convolution_is_commutative_and_linear() {
        let g = Grid3::cube(1.0, 8).unwrap();
        let (a, b, c) = (random(g, 3), random(g, 4), random(g, 5));
        let ab = fft_convolve(&a, &b).unwrap();
        let ba = fft_convolve(&b, &a).unwrap();
        assert!(ab.sub(&ba).unwrap().max_abs() < 1e-13);
        let lhs = fft_convolve(&a, &b.scale(2.0).add(&c).unwrap()).unwrap();
        let rhs = ab.scale(2.0).add(&fft_convolve(&a, &c).unwrap()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_a_dimension_error() {
        let a = ScalarField3::zeros(Grid3::cube(1.0, 8).unwrap());
        let b = ScalarField3::zeros(Grid3::cube(1.0, 4).unwrap());
        assert!(matches!(fft_convolve(&a, &b), Err(Error::Dimension(_))));
        assert!(matches!(
            ScalarField3::new(*a.grid(), vec![f64::NAN; 512]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn parseval() {
        let g = Grid3::new([3.0, 1.0, 2.0], [16, 8, 4]).unwrap();
        let f = random(g, 6);
        let s = f.spectrum();
        let lhs = f.norm2().powi(2);
        let rhs: f64 = s.coeffs().iter().map(|z| z.norm_sqr()).sum::<f64>() * g.cellvol() / g.len() as f64;
        assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn spectral_roundtrip() {
        let g = Grid3::cube(1.0, 16).unwrap();
        let f = random(g, 7);
        let back = f.spectrum().to_real().unwrap();
        assert!(back.sub(&f).unwrap().max_abs() <= 1e-12 * f.max_abs());
    }

    #[test]
    fn lp_norm_basics() {
        let g = Grid3::cube(1.0, 8).unwrap();
        let one = ScalarField3::constant(g, 1.0);
        for p in [1.0, 1.5, 2.0, 7.0] {
            assert!((lp_norm(&one, p, None).unwrap() - 1.0).abs() < 1e-14);
        }
        let f = random(g, 8);
        let w = random(g, 9).map(|v| v.abs() + 0.1).unwrap();
        let n1 = lp_norm(&f, 3.0, Some(&w)).unwrap();
        let n2 = lp_norm(&f, 3.0, Some(&w.scale(2.0))).unwrap();
        assert!((n2 / n1 - 2f64.powf(1.0 / 3.0)).abs() < 1e-13);
        assert!(matches!(lp_norm(&f, 0.5, None), Err(Error::Parameter(_))));
        assert!(matches!(lp_norm(&f, 2.0, Some(&w.scale(-1.0))), Err(Error::Weight(_))));
    }

    #[test]
    fn integrate_constant_and_complement() {
        let g = Grid3::cube(4.0, 16).unwrap();
        let c = ScalarField3::constant(g, 3.0);
        let r = Rect3::new([1.0, 0.5, 2.0], [2.0, 1.0, 2.0]).unwrap();
        assert!((integrate(&c, Some(&r)).unwrap() - 3.0 * 4.0).abs() < 1e-12);

        // R and its complement in x1 partition the box
        let f = random(g, 10);
        let comp = Rect3::new([3.0, 0.5, 2.0], [2.0, 1.0, 2.0]).unwrap();
        let slab = Rect3::new([1.0, 0.5, 2.0], [4.0, 1.0, 2.0]).unwrap();
        let sum = integrate(&f, Some(&r)).unwrap() + integrate(&f, Some(&comp)).unwrap();
        assert!((sum - integrate(&f, Some(&slab)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn binary_and_csv_roundtrip() {
        let g = Grid3::new([1.0, 2.0, 4.0], [2, 4, 8]).unwrap();
        let f = random(g, 11);
        let dir = std::env::temp_dir().join(format!("zyglab-field-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.bin");
        f.write_binary(&path).unwrap();
        let back = ScalarField3::read_binary(&path).unwrap();
        assert_eq!(back, f);
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), g.len() + 1);
        std::fs::remove_dir_all(dir).ok();
    }
}
