//! Littlewood-Paley frames for the Zygmund dilations.
//!
//! An atom `psi_{jk}` has symbol `psi1(2^j xi1) psi2(2^k xi2, 2^{j+k} xi3)`
//! (with `x1` and `x2` swapped for the other grouping), so large `j`, `k`
//! mean coarse atoms. Atoms are built on the Fourier side of the torus.

use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid3, ScalarField3, SpectralField3};
use crate::kernels::{truncate_to_field, KernelSpec, ScaleRange};
use crate::par;
use crate::report::{Curve, ExperimentReport};
use crate::stats::{composite_rule, fit_line};
use crate::sums::{box_sum_periodic, half_open_offsets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// `x1` against the `(x2, x3)` plane
    #[default]
    X1VsX2X3,
    /// `x2` against the `(x1, x3)` plane
    X2VsX1X3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpPair {
    pub smoothness: u32,
    pub grouping: Grouping,
}

impl Default for BumpPair {
    fn default() -> Self {
        BumpPair { smoothness: 4, grouping: Grouping::X1VsX2X3 }
    }
}

pub fn build_bump_pair(smoothness: u32, grouping: Grouping) -> Result<BumpPair> {
    if smoothness < 2 {
        return Err(Error::Parameter(format!("smoothness must be >= 2, got {smoothness}")));
    }
    let b = BumpPair { smoothness, grouping };
    // the cutoff must not vanish anywhere on the annulus
    for i in 0..=64 {
        let r = 2f64.powf(-1.0 + 2.0 * i as f64 / 64.0);
        if (b.square_sum(r) - 1.0).abs() > 1e-10 {
            return Err(Error::Parameter(format!("degenerate cutoff at r = {r}")));
        }
    }
    Ok(b)
}

impl BumpPair {
    /// Cutoff `(1 - u^2)^smoothness`, `u = log2 r`, supported in `1/2 < r < 2`.
    pub fn eta(&self, r: f64) -> f64 {
        if r <= 0.5 || r >= 2.0 {
            return 0.0;
        }
        let u = r.log2();
        (1.0 - u * u).powi(self.smoothness as i32)
    }

    /// Radial profile normalized so the dyadic squares sum to one.
    pub fn profile(&self, r: f64) -> f64 {
        let e = self.eta(r);
        if e == 0.0 {
            return 0.0;
        }
        let s = self.eta(2.0 * r).powi(2) + e * e + self.eta(0.5 * r).powi(2);
        e / s.sqrt()
    }

    pub fn psi1_hat(&self, xi: f64) -> f64 {
        self.profile(xi.abs())
    }

    pub fn psi2_hat(&self, a: f64, b: f64) -> f64 {
        self.profile(a.hypot(b))
    }

    pub fn square_sum(&self, r: f64) -> f64 {
        (-64..=64).map(|m| self.profile(2f64.powi(m) * r).powi(2)).sum()
    }

    /// Axis carrying the one-dimensional bump, then the plane axes.
    pub fn axes(&self) -> (usize, [usize; 2]) {
        match self.grouping {
            Grouping::X1VsX2X3 => (0, [1, 2]),
            Grouping::X2VsX1X3 => (1, [0, 2]),
        }
    }

    /// `(lone, plane, x3)` dyadic exponents of the atom `(j, k)`.
    fn exponents(&self, j: i32, k: i32) -> [i32; 3] {
        match self.grouping {
            Grouping::X1VsX2X3 => [j, k, j + k],
            Grouping::X2VsX1X3 => [k, j, j + k],
        }
    }

    pub fn atom_symbol_at(&self, j: i32, k: i32, xi: [f64; 3]) -> f64 {
        let (lone, plane) = self.axes();
        let e = self.exponents(j, k);
        self.psi1_hat(2f64.powi(e[0]) * xi[lone]) * self.psi2_hat(2f64.powi(e[1]) * xi[plane[0]], 2f64.powi(e[2]) * xi[plane[1]])
    }

    /// `int_0^inf profile(r)^2 dr / r` (equals ln 2 for a dyadic partition of unity).
    pub fn continuous_norm(&self) -> f64 {
        let (u, w) = composite_rule(-1.0, 1.0, 32, 16);
        u.iter().zip(&w).map(|(u, w)| w * self.profile(2f64.powf(*u)).powi(2)).sum::<f64>() * std::f64::consts::LN_2
    }
}

/// Checks that atom `(j, k)` stays below Nyquist and is not wider than the box in `x1`.
pub fn admissible(bumps: &BumpPair, grid: &Grid3, j: i32, k: i32) -> Result<()> {
    let (lone, plane) = bumps.axes();
    let e = bumps.exponents(j, k);
    let axes = [lone, plane[0], plane[1]];
    let mut bad = Vec::new();
    for (t, &a) in axes.iter().enumerate() {
        let top = 2f64.powi(1 - e[t]);
        if top > grid.nyquist(a) * (1.0 + 1e-12) {
            bad.push(format!("axis {} frequency {top} above Nyquist {}", a + 1, grid.nyquist(a)));
        }
    }
    if 2f64.powi(1 - e[0]) * grid.extents[lone] < 1.0 {
        bad.push(format!("axis {} annulus below the lowest frequency", lone + 1));
    }
    if bad.is_empty() {
        return Ok(());
    }
    // admissible exponents along the lone axis for reference
    let lo = (2.0 * grid.nyquist(lone)).log2().mul_add(-1.0, 1.0).ceil() as i32;
    let hi = (2.0 * grid.extents[lone]).log2().floor() as i32;
    Err(Error::Resolution(format!(
        "atom ({j},{k}) is not resolved: {}; the 1-D scale must lie in [{lo}, {hi}]",
        bad.join("; ")
    )))
}

pub fn atom_symbol(bumps: &BumpPair, j: i32, k: i32, grid: &Grid3) -> Vec<f64> {
    SpectralField3::symbol(grid, |xi| bumps.atom_symbol_at(j, k, xi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAtom {
    pub j: i32,
    pub k: i32,
    pub field: ScalarField3,
}

pub fn make_atom(bumps: &BumpPair, j: i32, k: i32, grid: &Grid3) -> Result<FrameAtom> {
    admissible(bumps, grid, j, k)?;
    let dv = grid.cellvol();
    let coeffs = atom_symbol(bumps, j, k, grid).into_iter().map(|v| Complex64::new(v / dv, 0.0)).collect();
    let field = SpectralField3::from_coeffs(*grid, coeffs)?.to_real()?;
    Ok(FrameAtom { j, k, field })
}

/// Random real field whose spectrum lives on `mask` (unit-variance entries before filtering).
pub fn band_limited_field<R: Rng>(grid: &Grid3, mask: &[bool], rng: &mut R) -> Result<ScalarField3> {
    let noise = ScalarField3::new(*grid, (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let m: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    noise.apply_multiplier(&m)
}

/// Symbols of a range of atoms on one grid, cached.
#[derive(Debug, Clone)]
pub struct Frame {
    grid: Grid3,
    bumps: BumpPair,
    pairs: Vec<(i32, i32)>,
    symbols: Vec<Vec<f64>>,
}

impl Frame {
    pub fn new(bumps: BumpPair, range: ScaleRange, grid: &Grid3) -> Result<Self> {
        let pairs = range.pairs();
        if pairs.is_empty() {
            return Err(Error::Parameter("empty (j,k) range".into()));
        }
        for &(j, k) in &pairs {
            admissible(&bumps, grid, j, k)?;
        }
        let symbols = par::map_slice(&pairs, |&(j, k)| atom_symbol(&bumps, j, k, grid));
        Ok(Frame { grid: *grid, bumps, pairs, symbols })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn bumps(&self) -> &BumpPair {
        &self.bumps
    }

    pub fn pairs(&self) -> &[(i32, i32)] {
        &self.pairs
    }

    pub fn symbol(&self, i: usize) -> &[f64] {
        &self.symbols[i]
    }

    pub fn square_sum(&self) -> Vec<f64> {
        par::map_range(self.grid.len(), |i| self.symbols.iter().map(|s| s[i] * s[i]).sum())
    }

    /// Frequencies where the square sum over the range is 1 (within 1e-12).
    pub fn band_mask(&self) -> Vec<bool> {
        let (lone, _) = self.bumps.axes();
        let g = self.grid;
        self.square_sum()
            .into_iter()
            .enumerate()
            .map(|(idx, s)| (s - 1.0).abs() <= 1e-12 && g.unindex(idx)[lone] != 0)
            .collect()
    }

    pub fn coefficients(&self, f: &ScalarField3) -> Result<Vec<ScalarField3>> {
        self.grid.check_same(f.grid())?;
        let spec = f.spectrum();
        let out = par::map_slice(&self.symbols, |s| spec.multiply(s).and_then(|c| c.to_real()));
        out.into_iter().collect()
    }

    /// Pointwise `(sum |psi_jk * f|^2)^(1/2)`.
    pub fn g_zd(&self, f: &ScalarField3) -> Result<ScalarField3> {
        let coeffs = self.coefficients(f)?;
        let n = self.grid.len();
        ScalarField3::new(
            self.grid,
            par::map_range(n, |i| coeffs.iter().map(|c| c.values()[i].powi(2)).sum::<f64>().sqrt()),
        )
    }

    /// Half-widths of the averaging box of atom `(j, k)`: `(2^j, 2^k, 2^{j+k})`
    /// in `(x1, x2, x3)`.
    pub fn box_half_widths(&self, j: i32, k: i32) -> [f64; 3] {
        [2f64.powi(j), 2f64.powi(k), 2f64.powi(j + k)]
    }

    /// Pointwise `(sum 2^{-2j-2k} int_box |psi_jk * f|^2)^(1/2)`.
    pub fn s_zd(&self, f: &ScalarField3) -> Result<ScalarField3> {
        let coeffs = self.coefficients(f)?;
        self.s_zd_from_squares(coeffs.iter().map(|c| c.map(|v| v * v)).collect::<Result<Vec<_>>>()?)
    }

    /// Area function of precomputed integrands `|psi_jk * f|^2` (one per pair).
    pub fn s_zd_from_squares(&self, squares: Vec<ScalarField3>) -> Result<ScalarField3> {
        if squares.len() != self.pairs.len() {
            return Err(Error::Dimension(format!("{} integrands for {} pairs", squares.len(), self.pairs.len())));
        }
        let g = self.grid;
        let h = g.h();
        let dv = g.cellvol();
        let parts = par::map_range(self.pairs.len(), |p| {
            let (j, k) = self.pairs[p];
            let w = self.box_half_widths(j, k);
            let mut lo = [0isize; 3];
            let mut cnt = [0usize; 3];
            for a in 0..3 {
                let (l, c) = half_open_offsets(w[a], h[a], g.counts[a]);
                lo[a] = l;
                cnt[a] = c;
            }
            box_sum_periodic(&squares[p], lo, cnt).scale(dv * 2f64.powi(-2 * j - 2 * k))
        });
        let n = g.len();
        ScalarField3::new(g, par::map_range(n, |i| parts.iter().map(|c| c.values()[i]).sum::<f64>().sqrt()))
    }

    /// `sum psi_jk * psi_jk * f`.
    pub fn reproduce(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.grid.check_same(f.grid())?;
        let s = self.square_sum();
        f.apply_multiplier(&s)
    }
}

pub fn g_zd(f: &ScalarField3, bumps: &BumpPair, range: ScaleRange) -> Result<ScalarField3> {
    Frame::new(*bumps, range, f.grid())?.g_zd(f)
}

pub fn s_zd(f: &ScalarField3, bumps: &BumpPair, range: ScaleRange) -> Result<ScalarField3> {
    Frame::new(*bumps, range, f.grid())?.s_zd(f)
}

/// Geometric grid from `lo` to (at least) `hi` with `per_decade` points per decade.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi / lo).log10() * per_decade as f64).ceil().max(1.0) as usize;
    (0..=n).map(|i| lo * 10f64.powf(i as f64 / per_decade as f64)).collect()
}

/// Trapezoid weights in `log s` for a geometric grid, plus resolution warnings.
pub fn log_trapezoid_weights(s: &[f64]) -> Result<(Vec<f64>, Vec<String>)> {
    if s.len() < 2 || s.windows(2).any(|w| !(w[1] > w[0]) || w[0] <= 0.0) {
        return Err(Error::Parameter("scale grid must be positive and increasing with >= 2 points".into()));
    }
    let l: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    let mut w = vec![0.0; s.len()];
    for i in 0..s.len() - 1 {
        let d = l[i + 1] - l[i];
        w[i] += d / 2.0;
        w[i + 1] += d / 2.0;
    }
    let mut warnings = Vec::new();
    let density = (s.len() - 1) as f64 / (s[s.len() - 1] / s[0]).log10();
    if density < 8.0 - 1e-9 {
        warnings.push(format!("quadrature grid has {density:.2} points per decade (< 8)"));
    }
    Ok((w, warnings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    pub field: ScalarField3,
    pub warnings: Vec<String>,
}

/// Continuous family `phi_{s,t}` with symbol
/// `phi1(s xi1) phi2(t xi2, s t xi3)` normalized by the `ds/s` integral.
struct Continuous<'a> {
    bumps: &'a BumpPair,
    norm: f64,
    grid: Grid3,
    lone: Vec<f64>,
    plane: (Vec<f64>, Vec<f64>),
}

impl<'a> Continuous<'a> {
    fn new(bumps: &'a BumpPair, grid: &Grid3) -> Self {
        let (lone, plane) = bumps.axes();
        Continuous {
            bumps,
            norm: bumps.continuous_norm(),
            grid: *grid,
            lone: grid.freqs(lone),
            plane: (grid.freqs(plane[0]), grid.freqs(plane[1])),
        }
    }

    /// Symbol on the lattice, or `None` when it vanishes identically.
    fn symbol(&self, s: f64, t: f64) -> Option<Vec<f64>> {
        let (lone_ax, plane_ax) = self.bumps.axes();
        let f1: Vec<f64> = self.lone.iter().map(|x| self.bumps.psi1_hat(s * x)).collect();
        if f1.iter().all(|v| *v == 0.0) {
            return None;
        }
        let (p0, p1) = &self.plane;
        let f2: Vec<f64> = p0
            .iter()
            .flat_map(|a| p1.iter().map(move |b| (*a, *b)))
            .map(|(a, b)| self.bumps.psi2_hat(t * a, s * t * b))
            .collect();
        if f2.iter().all(|v| *v == 0.0) {
            return None;
        }
        let g = self.grid;
        let n1 = g.counts[plane_ax[1]];
        Some(par::map_range(g.len(), |idx| {
            let i = g.unindex(idx);
            f1[i[lone_ax]] * f2[i[plane_ax[0]] * n1 + i[plane_ax[1]]] / self.norm
        }))
    }
}

fn continuous_pass<F>(f: &ScalarField3, bumps: &BumpPair, s_grid: &[f64], t_grid: &[f64], mut per_scale: F) -> Result<Vec<String>>
where
    F: FnMut(f64, f64, f64, ScalarField3) -> Result<()>,
{
    let (ws, mut warn) = log_trapezoid_weights(s_grid)?;
    let (wt, w2) = log_trapezoid_weights(t_grid)?;
    warn.extend(w2);
    let fam = Continuous::new(bumps, f.grid());
    let spec = f.spectrum();
    for (s, w_s) in s_grid.iter().zip(&ws) {
        for (t, w_t) in t_grid.iter().zip(&wt) {
            if let Some(sym) = fam.symbol(*s, *t) {
                let u = spec.multiply(&sym)?.to_real()?;
                per_scale(*s, *t, w_s * w_t, u)?;
            }
        }
    }
    Ok(warn)
}

/// `(int int |phi_{s,t} * f|^2 ds dt / (s t))^(1/2)` by log-trapezoid quadrature.
pub fn g_z_continuous(f: &ScalarField3, bumps: &BumpPair, s_grid: &[f64], t_grid: &[f64]) -> Result<Functional> {
    let mut acc = vec![0.0; f.grid().len()];
    let warnings = continuous_pass(f, bumps, s_grid, t_grid, |_, _, w, u| {
        for (a, v) in acc.iter_mut().zip(u.values()) {
            *a += w * v * v;
        }
        Ok(())
    })?;
    let field = ScalarField3::new(*f.grid(), acc.into_iter().map(f64::sqrt).collect())?;
    Ok(Functional { field, warnings })
}

/// Measure of the cone slice at `(s, t)` counted on grid nodes, times `1/(s^3 t^3)`.
pub fn cone_weight(grid: &Grid3, s: f64, t: f64) -> f64 {
    let h = grid.h();
    let w = crate::geometry::ZygmundCone::half_widths(s, t);
    let vol: f64 = (0..3).map(|a| half_open_offsets(w[a], h[a], grid.counts[a]).1 as f64 * h[a]).product();
    vol / (s * t).powi(3)
}

/// Area function over the cone `|x1-y1|<s, |x2-y2|<s, |x3-y3|<st`
/// with measure `dy ds dt / (s^3 t^3)`.
pub fn s_z_continuous(f: &ScalarField3, bumps: &BumpPair, s_grid: &[f64], t_grid: &[f64]) -> Result<Functional> {
    let g = *f.grid();
    let h = g.h();
    let dv = g.cellvol();
    let mut acc = vec![0.0; g.len()];
    let warnings = continuous_pass(f, bumps, s_grid, t_grid, |s, t, w, u| {
        let wd = crate::geometry::ZygmundCone::half_widths(s, t);
        let mut lo = [0isize; 3];
        let mut cnt = [0usize; 3];
        for a in 0..3 {
            let (l, c) = half_open_offsets(wd[a], h[a], g.counts[a]);
            lo[a] = l;
            cnt[a] = c;
        }
        let sq = u.map(|v| v * v)?;
        let boxed = box_sum_periodic(&sq, lo, cnt);
        let c = w * dv / (s * t).powi(2) / (s * t);
        // ds dt/(s^3 t^3) = (1/(s^2 t^2)) dlog s dlog t
        let c = c * s * t;
        for (a, v) in acc.iter_mut().zip(boxed.values()) {
            *a += c * v;
        }
        Ok(())
    })?;
    let field = ScalarField3::new(g, acc.into_iter().map(f64::sqrt).collect())?;
    Ok(Functional { field, warnings })
}

/// Scale grids covering every `(s, t)` at which the continuous symbol meets the band.
pub fn covering_scales(bumps: &BumpPair, grid: &Grid3, mask: &[bool], per_decade: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lone, plane) = bumps.axes();
    let mut lone_min = f64::INFINITY;
    let mut lone_max: f64 = 0.0;
    for (idx, &m) in mask.iter().enumerate() {
        if m {
            let i = grid.unindex(idx);
            let v = grid.freq(lone, i[lone]).abs();
            lone_min = lone_min.min(v);
            lone_max = lone_max.max(v);
        }
    }
    if !(lone_max > 0.0) {
        return Err(Error::InsufficientData("empty band".into()));
    }
    let (s_lo, s_hi) = (0.5 / lone_max, 2.0 / lone_min);
    let mut v_min = f64::INFINITY;
    let mut v_max: f64 = 0.0;
    for (idx, &m) in mask.iter().enumerate() {
        if m {
            let i = grid.unindex(idx);
            let a = grid.freq(plane[0], i[plane[0]]);
            let b = grid.freq(plane[1], i[plane[1]]);
            v_min = v_min.min(a.hypot(s_lo * b));
            v_max = v_max.max(a.hypot(s_hi * b));
        }
    }
    if !(v_min > 0.0) {
        return Err(Error::InsufficientData("band touches the plane origin".into()));
    }
    Ok((log_grid(s_lo, s_hi, per_decade), log_grid(0.5 / v_max, 2.0 / v_min, per_decade)))
}

/// Sup-norm interaction of atom pairs through a kernel, fitted against the
/// index offset `|j-j'| + |k-k'|`.
pub fn almost_orthogonality_probe(
    spec: &KernelSpec,
    bumps: &BumpPair,
    range: ScaleRange,
    grid: &Grid3,
    max_offset: i32,
) -> Result<ExperimentReport> {
    let frame = Frame::new(*bumps, range, grid)?;
    let kernel = truncate_to_field(spec, grid)?;
    let dv = grid.cellvol();
    let khat: Vec<Complex64> = kernel.spectrum().coeffs().iter().map(|z| z * dv).collect();
    let pairs = frame.pairs().to_vec();
    let idx_of = |p: (i32, i32)| pairs.iter().position(|q| *q == p).unwrap();
    let sup_of = |a: usize, b: usize| -> Result<f64> {
        let (sa, sb) = (frame.symbol(a), frame.symbol(b));
        let coeffs: Vec<Complex64> = par::map_range(grid.len(), |i| khat[i] * (sa[i] * sb[i] / dv));
        let vals = SpectralField3::from_coeffs(*grid, coeffs)?.inverse();
        Ok(vals.iter().fold(0.0f64, |m, z| m.max(z.re.abs())))
    };
    let mut jobs = Vec::new();
    for a in 0..pairs.len() {
        for b in a..pairs.len() {
            let off = (pairs[a].0 - pairs[b].0).abs() + (pairs[a].1 - pairs[b].1).abs();
            if off <= max_offset {
                jobs.push((a, b));
            }
        }
    }
    let sups: Vec<f64> = jobs.iter().map(|&(a, b)| sup_of(a, b)).collect::<Result<_>>()?;
    let lookup = |a: usize, b: usize| {
        let (a, b) = (a.min(b), a.max(b));
        jobs.iter().position(|&q| q == (a, b)).map(|p| sups[p])
    };

    let mut table = Curve::new(&["j", "k", "j2", "k2", "offset", "sup", "reference", "normalized"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut zeros = 0usize;
    let mut envelope = vec![0.0f64; max_offset as usize + 1];
    for (&(a, b), &s) in jobs.iter().zip(&sups) {
        let (pa, pb) = (pairs[a], pairs[b]);
        let off = (pa.0 - pb.0).abs() + (pa.1 - pb.1).abs();
        let coarse = (pa.0.max(pb.0), pa.1.max(pb.1));
        let reference = lookup(idx_of(coarse), idx_of(coarse)).unwrap_or(f64::NAN);
        let norm = s / reference;
        table.push(vec![pa.0 as f64, pa.1 as f64, pb.0 as f64, pb.1 as f64, off as f64, s, reference, norm]);
        envelope[off as usize] = envelope[off as usize].max(norm);
        if norm > 1e-12 {
            // both orders of an off-diagonal pair enter the regression
            let reps = if a == b { 1 } else { 2 };
            for _ in 0..reps {
                xs.push(off as f64);
                ys.push(norm.log2());
            }
        } else {
            zeros += if a == b { 1 } else { 2 };
        }
    }
    let mut rep = ExperimentReport::new("almost-orthogonality");
    rep.param("range", range).param("grid", grid.counts).param("extents", grid.extents).param("max_offset", max_offset);
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientData("fewer than two offsets with nonzero sup".into()))?;
    rep.metric("slope", fit.slope);
    rep.metric("intercept", fit.intercept);
    rep.metric("r2", fit.r2);
    rep.metric("fitted_pairs", fit.n);
    rep.metric("zero_pairs", zeros);
    let env_x: Vec<f64> = (0..envelope.len()).filter(|&o| envelope[o] > 1e-12).map(|o| o as f64).collect();
    let env_y: Vec<f64> = env_x.iter().map(|&o| envelope[o as usize].log2()).collect();
    if let Some(e) = fit_line(&env_x, &env_y) {
        rep.metric("envelope_slope", e.slope);
        rep.metric("envelope_r2", e.r2);
    }
    let mut env = Curve::new(&["offset", "max_normalized_sup"]);
    for (o, v) in envelope.iter().enumerate() {
        env.push(vec![o as f64, *v]);
    }
    rep.curve("envelope", env);
    rep.curve("sups", table);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{fft_convolve, integrate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bumps() -> BumpPair {
        build_bump_pair(4, Grouping::X1VsX2X3).unwrap()
    }

    #[test]
    fn partition_of_unity() {
        let b = bumps();
        assert!((b.profile(1.0).powi(2) + b.profile(2.0).powi(2) + b.profile(0.5).powi(2) - 1.0).abs() < 1e-12);
        // at r = 1 only the unshifted term survives (the neighbours sit on the support edge)
        assert!((b.square_sum(1.0) - 1.0).abs() < 1e-10);
        assert_eq!(b.profile(2.0), 0.0);
        assert!(b.profile(1.99) > 0.0 && b.profile(2.01) == 0.0);
        assert!(b.profile(2.01 / 2.0) > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let r = 2f64.powf(rng.random_range(-3.0..3.0));
            assert!((b.square_sum(r) - 1.0).abs() < 1e-10);
        }
        assert!(build_bump_pair(1, Grouping::X1VsX2X3).is_err());
    }

    #[test]
    fn continuous_normalization_is_ln2() {
        for s in [2, 4, 6] {
            let b = build_bump_pair(s, Grouping::X1VsX2X3).unwrap();
            assert!((b.continuous_norm() - std::f64::consts::LN_2).abs() < 1e-10);
        }
    }

    fn small_grid() -> Grid3 {
        Grid3::new([32.0, 32.0, 64.0], [32, 32, 32]).unwrap()
    }

    #[test]
    fn atom_moments_vanish() {
        let g = Grid3::new([128.0, 128.0, 512.0], [64, 64, 128]).unwrap();
        let b = bumps();
        let a = make_atom(&b, 3, 3, &g).unwrap();
        let l1 = a.field.map(f64::abs).unwrap();
        let norm1 = integrate(&l1, None).unwrap();
        assert!(integrate(&a.field, None).unwrap().abs() < 1e-10 * norm1);
        // x1-marginal: sum over x1 at fixed (x2, x3)
        let n = g.counts;
        let h = g.h();
        for i1 in (0..n[1]).step_by(7) {
            for i2 in (0..n[2]).step_by(5) {
                let m: f64 = (0..n[0]).map(|i0| a.field.at([i0, i1, i2])).sum::<f64>() * h[0];
                assert!(m.abs() <= 1e-10 * norm1);
            }
        }
    }

    #[test]
    fn atom_dilation_resampling() {
        // (2,2) on a grid equals the (1,1) atom on the grid dilated by (1/2, 1/2, 1/4), times 2^-4
        let g = Grid3::new([32.0, 32.0, 128.0], [32, 32, 32]).unwrap();
        let gs = Grid3::new([16.0, 16.0, 32.0], [32, 32, 32]).unwrap();
        let b = bumps();
        let a11 = make_atom(&b, 2, 2, &g).unwrap();
        let a00 = make_atom(&b, 1, 1, &gs).unwrap();
        let peak = a11.field.max_abs();
        for (x, y) in a11.field.values().iter().zip(a00.field.values()) {
            assert!((x - y / 16.0).abs() <= 1e-8 * peak.max(1e-300));
        }
        let l1 = |f: &ScalarField3| integrate(&f.map(f64::abs).unwrap(), None).unwrap();
        assert!((l1(&a11.field) - l1(&a00.field)).abs() <= 1e-8 * l1(&a00.field));
    }

    #[test]
    fn atom_fourier_support() {
        let g = small_grid();
        let b = bumps();
        let a = make_atom(&b, 2, 2, &g).unwrap();
        let spec = a.field.spectrum();
        let dv = g.cellvol();
        let peak = spec.coeffs().iter().fold(0.0f64, |m, z| m.max(z.norm()));
        for (idx, z) in spec.coeffs().iter().enumerate() {
            let m = g.unindex(idx);
            let xi = [g.freq(0, m[0]), g.freq(1, m[1]), g.freq(2, m[2])];
            let r1 = 4.0 * xi[0].abs();
            let r2 = (4.0 * xi[1]).hypot(16.0 * xi[2]);
            let inside = r1 > 0.5 && r1 < 2.0 && r2 > 0.5 && r2 < 2.0;
            if !inside {
                assert!(z.norm() * dv <= 1e-10 * peak * dv);
            }
        }
        assert!(matches!(make_atom(&b, 0, 0, &Grid3::cube(32.0, 8).unwrap()), Err(Error::Resolution(_))));
    }

    fn plancherel_setup() -> (Frame, Vec<bool>) {
        let g = small_grid();
        let frame = Frame::new(bumps(), ScaleRange { j: (2, 3), k: (2, 3) }, &g).unwrap();
        let mask = frame.band_mask();
        assert!(mask.iter().filter(|m| **m).count() > 100);
        (frame, mask)
    }

    #[test]
    fn plancherel_and_reproduction() {
        let (frame, mask) = plancherel_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = band_limited_field(frame.grid(), &mask, &mut rng).unwrap();
        let g = frame.g_zd(&f).unwrap();
        assert!((g.norm2() - f.norm2()).abs() <= 1e-10 * f.norm2());
        let back = frame.reproduce(&f).unwrap();
        assert!(back.sub(&f).unwrap().norm2() <= 1e-10 * f.norm2());
        let zero = frame.g_zd(&ScalarField3::zeros(*frame.grid())).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
        assert_eq!(frame.s_zd(&ScalarField3::zeros(*frame.grid())).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn reproduction_matches_double_convolution() {
        let (frame, mask) = plancherel_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = band_limited_field(frame.grid(), &mask, &mut rng).unwrap();
        let mut sum = ScalarField3::zeros(*frame.grid());
        for &(j, k) in frame.pairs() {
            let a = make_atom(frame.bumps(), j, k, frame.grid()).unwrap().field;
            sum = sum.add(&fft_convolve(&a, &fft_convolve(&a, &f).unwrap()).unwrap()).unwrap();
        }
        assert!(sum.sub(&f).unwrap().norm2() <= 1e-8 * f.norm2());
    }

    #[test]
    fn single_atom_contributions_are_local() {
        let g = small_grid();
        let b = bumps();
        let frame = Frame::new(b, ScaleRange { j: (2, 4), k: (2, 3) }, &g).unwrap();
        let f = make_atom(&b, 2, 2, &g).unwrap().field;
        let coeffs = frame.coefficients(&f).unwrap();
        for (c, &(j, k)) in coeffs.iter().zip(frame.pairs()) {
            if (j - 2).abs() >= 2 || (k - 2).abs() >= 2 {
                assert!(c.max_abs() <= 1e-12 * f.max_abs(), "({j},{k})");
            }
        }
    }

    #[test]
    fn area_function_constant_integrand() {
        let (frame, _) = plancherel_setup();
        let g = *frame.grid();
        let n = frame.pairs().len();
        let squares = vec![ScalarField3::constant(g, 2.0); n];
        let s = frame.s_zd_from_squares(squares).unwrap();
        // sum over pairs of 2^{-2j-2k} * 2 * |box|, box = 8 * 2^{2j+2k} when resolved
        let mut expect = 0.0;
        for &(j, k) in frame.pairs() {
            let w = frame.box_half_widths(j, k);
            let vol: f64 = (0..3).map(|a| (2.0 * w[a]).min(g.extents[a])).product();
            expect += 2.0 * vol * 2f64.powi(-2 * j - 2 * k);
        }
        assert!(s.values().iter().all(|v| (v - expect.sqrt()).abs() < 1e-12 * expect.sqrt()));
        // a single fully resolved pair gives exactly sqrt(8) g
        let one = Frame::new(bumps(), ScaleRange::square(2, 2), &g).unwrap();
        let s = one.s_zd_from_squares(vec![ScalarField3::constant(g, 1.0)]).unwrap();
        assert!((s.values()[0] - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn area_and_square_functions_are_comparable() {
        let (frame, mask) = plancherel_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..3 {
            let f = band_limited_field(frame.grid(), &mask, &mut rng).unwrap();
            let r = frame.s_zd(&f).unwrap().norm2() / frame.g_zd(&f).unwrap().norm2();
            assert!(r > 0.1 && r < 10.0, "{r}");
        }
    }

    #[test]
    fn swapped_grouping_reproduces_too() {
        let g = Grid3::new([32.0, 32.0, 64.0], [32, 32, 32]).unwrap();
        let b = build_bump_pair(4, Grouping::X2VsX1X3).unwrap();
        let frame = Frame::new(b, ScaleRange { j: (2, 3), k: (2, 3) }, &g).unwrap();
        let mask = frame.band_mask();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = band_limited_field(&g, &mask, &mut rng).unwrap();
        assert!(f.norm2() > 0.0);
        assert!((frame.g_zd(&f).unwrap().norm2() - f.norm2()).abs() <= 1e-10 * f.norm2());
    }

    #[test]
    fn continuous_square_function() {
        let (frame, mask) = plancherel_setup();
        let g = *frame.grid();
        let b = *frame.bumps();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = band_limited_field(&g, &mask, &mut rng).unwrap();
        let (s16, t16) = covering_scales(&b, &g, &mask, 32).unwrap();
        let a = g_z_continuous(&f, &b, &s16, &t16).unwrap();
        assert!(a.warnings.is_empty());
        let rel = (a.field.norm2() - f.norm2()).abs() / f.norm2();
        assert!(rel <= 1e-3, "{rel}");
        let (s32, t32) = covering_scales(&b, &g, &mask, 64).unwrap();
        let b2 = g_z_continuous(&f, &b, &s32, &t32).unwrap();
        let change = (a.field.norm2() - b2.field.norm2()).abs() / b2.field.norm2();
        assert!(change < 1e-4, "{change}");
        let coarse = log_grid(s16[0], *s16.last().unwrap(), 4);
        assert!(!g_z_continuous(&f, &b, &coarse, &t16).unwrap().warnings.is_empty());
        assert_eq!(g_z_continuous(&ScalarField3::zeros(g), &b, &s16, &t16).unwrap().field.max_abs(), 0.0);
    }

    #[test]
    fn cone_area_function() {
        let g = Grid3::cube(64.0, 32).unwrap();
        // exact node counts: half-widths (2, 2, 4) on h = 2
        assert!((cone_weight(&g, 2.0, 2.0) - 8.0 / 4.0).abs() < 1e-12);
        let (frame, mask) = plancherel_setup();
        let gg = *frame.grid();
        let b = *frame.bumps();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = band_limited_field(&gg, &mask, &mut rng).unwrap();
        let (s, t) = covering_scales(&b, &gg, &mask, 16).unwrap();
        let area = s_z_continuous(&f, &b, &s, &t).unwrap();
        let r = area.field.norm2() / f.norm2();
        assert!(r > 0.1 && r < 10.0, "{r}");
        assert_eq!(s_z_continuous(&ScalarField3::zeros(gg), &b, &s, &t).unwrap().field.max_abs(), 0.0);
    }

    #[test]
    fn probe_diagonal_and_symmetry() {
        let g = Grid3::new([32.0, 32.0, 128.0], [32, 32, 32]).unwrap();
        let spec = KernelSpec::nagel_wainger_on(&g);
        let b = bumps();
        let rep = almost_orthogonality_probe(&spec, &b, ScaleRange { j: (2, 3), k: (2, 3) }, &g, 2).unwrap();
        let table = &rep.curves["sups"];
        for row in &table.rows {
            if row[4] == 0.0 {
                assert!(row[5] > 0.0 && row[5].is_finite());
                assert!((row[7] - 1.0).abs() < 1e-12);
            }
        }
        // swapping the pair: the NW kernel is even, so both orders agree
        let frame = Frame::new(b, ScaleRange { j: (2, 3), k: (2, 3) }, &g).unwrap();
        let kf = truncate_to_field(&spec, &g).unwrap();
        let a = make_atom(&b, 2, 2, &g).unwrap().field;
        let c = make_atom(&b, 3, 3, &g).unwrap().field;
        let ab = fft_convolve(&fft_convolve(&a, &kf).unwrap(), &c).unwrap().max_abs();
        let ba = fft_convolve(&fft_convolve(&c, &kf).unwrap(), &a).unwrap().max_abs();
        assert!((ab - ba).abs() <= 1e-8 * ab);
        assert_eq!(frame.pairs().len(), 4);
    }
}
