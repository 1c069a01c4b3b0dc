//! Convolution operators, commutators with multiplication by a symbol,
//! weighted operator-norm estimates, and the two commutator experiments
//! (bounded commutator with an unbounded symbol, and the lower bound by
//! mean oscillation).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{lp_norm, Grid3, ScalarField3, SpectralField3};
use crate::geometry::ZygmundRectangle;
use crate::kernels::{nw_eval, truncate_to_field, BumpTriple, KernelSpec, ScaleRange};
use crate::par;
use crate::report::{Curve, ExperimentReport};
use crate::stats::fit_line;
use crate::weights::{ap_z_characteristic, bmo_z_norm, mean_oscillation, median, RectangleFamily};

/// A real linear map on fields of one grid, with its adjoint for the
/// `f . g cellvol` pairing.
pub trait LinearOp: Send + Sync {
    fn grid(&self) -> &Grid3;
    fn apply(&self, f: &ScalarField3) -> Result<ScalarField3>;
    fn apply_adjoint(&self, f: &ScalarField3) -> Result<ScalarField3>;
}

pub struct Identity(pub Grid3);

impl LinearOp for Identity {
    fn grid(&self) -> &Grid3 {
        &self.0
    }
    fn apply(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.0.check_same(f.grid())?;
        Ok(f.clone())
    }
    fn apply_adjoint(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.apply(f)
    }
}

pub struct Scaled {
    pub grid: Grid3,
    pub c: f64,
}

impl LinearOp for Scaled {
    fn grid(&self) -> &Grid3 {
        &self.grid
    }
    fn apply(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.grid.check_same(f.grid())?;
        Ok(f.scale(self.c))
    }
    fn apply_adjoint(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.apply(f)
    }
}

/// `f -> K * f` for a sampled kernel, via its spectrum.
pub struct Convolution {
    grid: Grid3,
    symbol: Vec<Complex64>,
}

impl Convolution {
    pub fn new(kernel: &ScalarField3) -> Self {
        let dv = kernel.grid().cellvol();
        let symbol = kernel.spectrum().coeffs().iter().map(|z| z * dv).collect();
        Convolution { grid: *kernel.grid(), symbol }
    }

    pub fn from_spec(spec: &KernelSpec, grid: &Grid3) -> Result<Self> {
        Ok(Self::new(&truncate_to_field(spec, grid)?))
    }

    pub fn symbol(&self) -> &[Complex64] {
        &self.symbol
    }

    fn run(&self, f: &ScalarField3, conj: bool) -> Result<ScalarField3> {
        self.grid.check_same(f.grid())?;
        let m: Vec<Complex64> = if conj { self.symbol.iter().map(|z| z.conj()).collect() } else { self.symbol.clone() };
        f.spectrum().multiply_complex(&m)?.to_real()
    }
}

impl LinearOp for Convolution {
    fn grid(&self) -> &Grid3 {
        &self.grid
    }
    fn apply(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.run(f, false)
    }
    fn apply_adjoint(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.run(f, true)
    }
}

/// `[b, A] f = b A f - A(b f)`.
pub struct Commutator {
    b: ScalarField3,
    inner: Box<dyn LinearOp>,
}

impl Commutator {
    pub fn new(b: ScalarField3, inner: Box<dyn LinearOp>) -> Result<Self> {
        inner.grid().check_same(b.grid())?;
        Ok(Commutator { b, inner })
    }
}

impl LinearOp for Commutator {
    fn grid(&self) -> &Grid3 {
        self.inner.grid()
    }
    fn apply(&self, f: &ScalarField3) -> Result<ScalarField3> {
        let a = self.b.mul(&self.inner.apply(f)?)?;
        a.sub(&self.inner.apply(&self.b.mul(f)?)?)
    }
    // [b, A]* = A* b - b A*
    fn apply_adjoint(&self, f: &ScalarField3) -> Result<ScalarField3> {
        let a = self.inner.apply_adjoint(&self.b.mul(f)?)?;
        a.sub(&self.b.mul(&self.inner.apply_adjoint(f)?)?)
    }
}

/// Row-major matrix acting on the flattened field.
pub struct Dense {
    grid: Grid3,
    rows: Vec<f64>,
}

impl Dense {
    pub fn new(grid: Grid3, rows: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if rows.len() != n * n {
            return Err(Error::Dimension(format!("{} entries for a {n}x{n} matrix", rows.len())));
        }
        Ok(Dense { grid, rows })
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }
}

impl LinearOp for Dense {
    fn grid(&self) -> &Grid3 {
        &self.grid
    }
    fn apply(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.grid.check_same(f.grid())?;
        let n = self.grid.len();
        let v = f.values();
        ScalarField3::new(self.grid, par::map_range(n, |i| self.rows[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum()))
    }
    fn apply_adjoint(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.grid.check_same(f.grid())?;
        let n = self.grid.len();
        let v = f.values();
        ScalarField3::new(self.grid, par::map_range(n, |j| (0..n).map(|i| self.rows[i * n + j] * v[i]).sum()))
    }
}

/// Kernel plus the symbols of an iterated commutator `[b_k, ... [b_1, T]]`.
#[derive(Debug, Clone)]
pub struct CommutatorSpec {
    pub kernel: KernelSpec,
    pub symbols: Vec<ScalarField3>,
}

impl CommutatorSpec {
    pub fn order(&self) -> usize {
        self.symbols.len()
    }

    pub fn build(&self, grid: &Grid3) -> Result<Box<dyn LinearOp>> {
        if self.symbols.is_empty() {
            return Err(Error::Parameter("commutator needs at least one symbol".into()));
        }
        let mut op: Box<dyn LinearOp> = Box::new(Convolution::from_spec(&self.kernel, grid)?);
        for b in &self.symbols {
            op = Box::new(Commutator::new(b.clone(), op)?);
        }
        Ok(op)
    }
}

pub fn apply_t(kernel: &KernelSpec, f: &ScalarField3) -> Result<ScalarField3> {
    Convolution::from_spec(kernel, f.grid())?.apply(f)
}

pub fn commutator_apply(spec: &CommutatorSpec, f: &ScalarField3) -> Result<ScalarField3> {
    spec.build(f.grid())?.apply(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpNormEstimate {
    pub p: f64,
    pub weight_id: String,
    pub lower_bound: f64,
    pub dominant: Option<f64>,
    pub probes: usize,
    pub iterations: usize,
}

impl OpNormEstimate {
    pub fn estimate(&self) -> f64 {
        self.dominant.unwrap_or(self.lower_bound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpNormOptions {
    pub probes: usize,
    pub iterations: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for OpNormOptions {
    fn default() -> Self {
        OpNormOptions { probes: 64, iterations: 200, tol: 1e-6, seed: 0 }
    }
}

/// Random field with its spectrum inside half the Nyquist box.
pub fn smooth_probe(grid: &Grid3, rng: &mut ChaCha8Rng) -> Result<ScalarField3> {
    let noise = ScalarField3::new(*grid, (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let half = [0, 1, 2].map(|a| grid.nyquist(a) / 2.0);
    let mask = SpectralField3::symbol(grid, |xi| if (0..3).all(|a| xi[a].abs() <= half[a]) { 1.0 } else { 0.0 });
    noise.apply_multiplier(&mask)
}

/// Lower bound from random probes (any `p`) and, for `p = 2`, power
/// iteration on `sqrt(w) op (./sqrt(w))`.
pub fn weighted_opnorm(op: &dyn LinearOp, p: f64, w: &ScalarField3, weight_id: &str, opts: OpNormOptions) -> Result<OpNormEstimate> {
    let grid = *op.grid();
    grid.check_same(w.grid())?;
    if let Some(v) = w.values().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Weight(format!("weight must be positive, got {v}")));
    }
    if !(p >= 1.0) {
        return Err(Error::Parameter(format!("p must be at least 1, got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut lower: f64 = 0.0;
    for _ in 0..opts.probes {
        let f = smooth_probe(&grid, &mut rng)?;
        let d = lp_norm(&f, p, Some(w))?;
        if d > 0.0 {
            lower = lower.max(lp_norm(&op.apply(&f)?, p, Some(w))? / d);
        }
    }
    let mut dominant = None;
    let mut iterations = 0;
    if p == 2.0 {
        let sw = w.map(f64::sqrt)?;
        let a = |g: &ScalarField3| -> Result<ScalarField3> { sw.mul(&op.apply(&g.zip_with(&sw, |x, s| x / s)?)?) };
        let at = |g: &ScalarField3| -> Result<ScalarField3> { op.apply_adjoint(&sw.mul(g)?)?.zip_with(&sw, |x, s| x / s) };
        let mut v = smooth_probe(&grid, &mut rng)?;
        let mut prev = f64::NAN;
        for it in 0..opts.iterations {
            iterations = it + 1;
            let n = v.norm2();
            if n == 0.0 {
                break;
            }
            v = v.scale(1.0 / n);
            let av = a(&v)?;
            let est = av.norm2();
            lower = lower.max(est);
            if est == 0.0 || (est - prev).abs() <= opts.tol * est {
                dominant = Some(est);
                break;
            }
            prev = est;
            v = at(&av)?;
        }
        if let Some(d) = dominant {
            if d < lower - 1e-8 {
                dominant = None;
            }
        }
    }
    Ok(OpNormEstimate { p, weight_id: weight_id.to_string(), lower_bound: lower, dominant, probes: opts.probes, iterations })
}

/// `d/dxi1` of the symbol of the Ricci-Stein kernel,
/// `sum 2^j phi1'(2^j xi1) phi2(2^k xi2) phi3(2^(j+k) xi3)`, and `xi1` times it,
/// maximized over log-spaced positive frequency samples.
pub fn rs_symbol_derivative_sup(profile: &BumpTriple, range: ScaleRange, samples: usize) -> Result<(f64, f64)> {
    if samples < 8 {
        return Err(Error::Parameter("need at least 8 samples per axis".into()));
    }
    let (j0, j1) = range.j;
    let (k0, k1) = range.k;
    let span = |lo: i32, hi: i32| -> Vec<f64> {
        let (a, b) = (-(hi as f64) - 3.0, -(lo as f64) + 3.0);
        (0..samples).map(|i| 2f64.powf(a + (b - a) * i as f64 / (samples - 1) as f64)).collect()
    };
    let x1 = span(j0, j1);
    let x2 = span(k0, k1);
    let x3 = span(j0 + k0, j1 + k1);
    let table = |prof: crate::kernels::Profile1D, xs: &[f64], lo: i32, hi: i32, deriv: bool| -> Vec<Vec<Complex64>> {
        (lo..=hi)
            .map(|m| {
                let s = 2f64.powi(m);
                par::map_slice(xs, |x| if deriv { prof.fourier_deriv(s * x) * s } else { prof.fourier(s * x) })
            })
            .collect()
    };
    let d1 = table(profile.profiles[0], &x1, j0, j1, true);
    let f2 = table(profile.profiles[1], &x2, k0, k1, false);
    let f3 = table(profile.profiles[2], &x3, j0 + k0, j1 + k1, false);
    let pairs = range.pairs();
    let per = par::map_range(x1.len(), |i1| {
        let (mut best, mut best_w): (f64, f64) = (0.0, 0.0);
        for i2 in 0..x2.len() {
            for i3 in 0..x3.len() {
                let mut s = Complex64::default();
                for &(j, k) in &pairs {
                    s += d1[(j - j0) as usize][i1] * f2[(k - k0) as usize][i2] * f3[(j + k - j0 - k0) as usize][i3];
                }
                best = best.max(s.norm());
                best_w = best_w.max(s.norm() * x1[i1]);
            }
        }
        (best, best_w)
    });
    Ok(per.into_iter().fold((0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1))))
}

/// `R_a = (a, 2a] x (a, 2a] x (a, a + a^2]`.
pub fn growth_rectangle(a: f64) -> Result<ZygmundRectangle> {
    ZygmundRectangle::new([a, a, a], [a, a, a * a])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleParams {
    pub profile: BumpTriple,
    pub ranges: Vec<i32>,
    pub samples: usize,
    pub a_values: Vec<f64>,
    pub extents: [f64; 3],
    pub counts: [usize; 3],
    /// coefficient `c` in the symbol `b = c x1`
    pub slope: f64,
    pub tolerance: f64,
}

impl Default for CounterexampleParams {
    fn default() -> Self {
        CounterexampleParams {
            profile: BumpTriple::default(),
            ranges: vec![2, 3],
            samples: 96,
            a_values: vec![1.0, 2.0, 4.0, 8.0],
            extents: [16.0, 16.0, 128.0],
            counts: [64, 64, 64],
            slope: 1.0,
            tolerance: 0.10,
        }
    }
}

pub fn counterexample_experiment(params: &CounterexampleParams) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("counterexample");
    rep.param("params", params);
    let mut sym = Curve::new(&["range", "sup_d_xi1", "sup_xi1_d_xi1", "fd_check"]);
    let mut sups = Vec::new();
    for &r in &params.ranges {
        let range = ScaleRange::square(-r, r);
        let (s, sw) = rs_symbol_derivative_sup(&params.profile, range, params.samples)?;
        let (s_fine, _) = rs_symbol_derivative_sup(&params.profile, range, 2 * params.samples)?;
        if (s_fine - s).abs() > 0.1 * s_fine {
            rep.warn(format!("symbol derivative under-resolved at range {r}: {s} vs {s_fine}"));
        }
        let fd = finite_difference_check(&params.profile, range);
        sym.push(vec![r as f64, s * params.slope.abs(), sw * params.slope.abs(), fd]);
        sups.push((s * params.slope.abs(), sw * params.slope.abs()));
    }
    rep.curve("symbol", sym);
    // the commutator with c x1 is the multiplier (c / 2 pi i) d/dxi1 of the symbol
    let bound: Vec<f64> = sups.iter().map(|s| s.0 / (2.0 * std::f64::consts::PI)).collect();
    rep.metric("commutator_bound", &bound);
    if sups.len() >= 2 {
        let (a, b) = (sups[0].0, sups[sups.len() - 1].0);
        let change = if a.max(b) == 0.0 { 0.0 } else { (b - a).abs() / a.max(b) };
        rep.metric("sup_change", change);
        rep.check("symbol_derivative_stable", change < params.tolerance, change, format!("< {}", params.tolerance));
        let (aw, bw) = (sups[0].1, sups[sups.len() - 1].1);
        let cw = if aw.max(bw) == 0.0 { 0.0 } else { (bw - aw).abs() / aw.max(bw) };
        rep.metric("weighted_sup_change", cw);
    }

    let grid = Grid3::new(params.extents, params.counts)?.cell_centered();
    let b = ScalarField3::from_fn(grid, |x| params.slope * x[0])?;
    let mut osc = Curve::new(&["a", "mean", "oscillation", "expected_mean", "expected_oscillation"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &a in &params.a_values {
        let r = growth_rectangle(a)?;
        let far = [0, 1, 2].map(|t| r.corner[t] + r.sides[t]);
        if (0..3).any(|t| far[t] > params.extents[t] + 1e-9) {
            return Err(Error::Geometry(format!("R_a for a = {a} leaves the box {:?}", params.extents)));
        }
        let (m, o) = mean_oscillation(&b, &r)?;
        osc.push(vec![a, m, o, params.slope * 1.5 * a, params.slope.abs() * a / 4.0]);
        xs.push(a);
        ys.push(o);
    }
    if let Some(fit) = fit_line(&xs, &ys) {
        rep.metric("oscillation_slope", fit.slope);
        let want = params.slope.abs() / 4.0;
        rep.check("oscillation_slope", (fit.slope - want).abs() <= 0.01, fit.slope, format!("{want} +- 0.01"));
    }
    rep.curve("oscillation", osc);
    Ok(rep)
}

/// Largest relative gap between the analytic `xi1`-derivative and a central
/// difference at a few frequencies.
fn finite_difference_check(profile: &BumpTriple, range: ScaleRange) -> f64 {
    let k_hat = |xi: [f64; 3]| -> Complex64 {
        range
            .pairs()
            .iter()
            .map(|&(j, k)| {
                let (a, b) = (2f64.powi(j), 2f64.powi(k));
                profile.profiles[0].fourier(a * xi[0]) * profile.profiles[1].fourier(b * xi[1]) * profile.profiles[2].fourier(a * b * xi[2])
            })
            .sum()
    };
    let dk = |xi: [f64; 3]| -> Complex64 {
        range
            .pairs()
            .iter()
            .map(|&(j, k)| {
                let (a, b) = (2f64.powi(j), 2f64.powi(k));
                profile.profiles[0].fourier_deriv(a * xi[0]) * a * profile.profiles[1].fourier(b * xi[1]) * profile.profiles[2].fourier(a * b * xi[2])
            })
            .sum()
    };
    let mut worst: f64 = 0.0;
    for xi in [[0.3, 0.7, 0.2], [0.05, 1.1, 0.4], [1.7, 0.2, 0.05]] {
        let h = 1e-5 * xi[0];
        let fd = (k_hat([xi[0] + h, xi[1], xi[2]]) - k_hat([xi[0] - h, xi[1], xi[2]])) / (2.0 * h);
        let an = dk(xi);
        if an.norm() > 1e-8 {
            worst = worst.max((fd - an).norm() / an.norm());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundOutcome {
    pub median: f64,
    pub kernel_floor_scaled: f64,
    pub left: f64,
    pub right: f64,
    pub weighted_factor: f64,
    pub hat_factor: f64,
    pub ap_root: f64,
    pub hat_ratio: f64,
}

/// Companion `R~` (offsets `6 l(I)`, `6 l(J)`, `48 l(S)` to the lower side)
/// and the smallest Zygmund rectangle holding both.
pub fn lower_bound_geometry(r: &ZygmundRectangle) -> Result<(ZygmundRectangle, ZygmundRectangle)> {
    let l = r.sides;
    let tilde = ZygmundRectangle::new([r.corner[0] - 6.0 * l[0], r.corner[1] - 6.0 * l[1], r.corner[2] - 48.0 * l[2]], l)?;
    let hat = ZygmundRectangle::new(tilde.corner, [7.0 * l[0], 7.0 * l[1], 49.0 * l[2]])?;
    Ok((tilde, hat))
}

/// Direct node-pair evaluation of both sides of the oscillation lower bound
/// for the untruncated NW kernel.
pub fn lower_bound_experiment(b: &ScalarField3, r: &ZygmundRectangle, p: f64, w: &ScalarField3) -> Result<(ExperimentReport, LowerBoundOutcome)> {
    let g = *b.grid();
    g.check_same(w.grid())?;
    let (tilde, hat) = lower_bound_geometry(r)?;
    let h = g.h();
    let box_lo = [0, 1, 2].map(|a| h[a] * (g.origin[a] / h[a] + 1e-9).floor());
    for a in 0..3 {
        let lo = hat.corner[a];
        let hi = lo + hat.sides[a];
        if lo < box_lo[a] - 1e-9 || hi > box_lo[a] + g.extents[a] + 1e-9 {
            return Err(Error::Geometry(format!(
                "companion construction leaves the box on axis {}: need extent >= {} with R at least {} above the lower edge",
                a + 1,
                hat.sides[a],
                r.corner[a] - lo
            )));
        }
    }
    let xr = r.nodes(&g)?;
    let yt = tilde.nodes(&g)?;
    if xr.is_empty() || yt.len() < 2 {
        return Err(Error::Geometry("rectangle too small for the grid".into()));
    }
    let bv = b.values();
    let m = median(b, &tilde)?;
    let mut order = yt.clone();
    order.sort_by(|x, y| bv[*x].total_cmp(&bv[*y]).then(x.cmp(y)));
    let half = order.len() / 2;
    let (f1, f2) = (&order[..half], &order[half..]);
    let dv = g.cellvol();
    let vol_r = xr.len() as f64 * dv;
    let scale = 2.0 * 49.0 * 49.0 * r.volume();
    let mut floor = f64::INFINITY;
    for &x in &xr {
        let px = g.node(x);
        for &y in &yt {
            let py = g.node(y);
            floor = floor.min(nw_eval([px[0] - py[0], px[1] - py[1], px[2] - py[2]])?);
        }
    }
    let comm_avg = |f: &[usize]| -> Result<f64> {
        let mut s = 0.0;
        for &x in &xr {
            let px = g.node(x);
            let mut acc = 0.0;
            for &y in f {
                let py = g.node(y);
                acc += (bv[x] - bv[y]) * nw_eval([px[0] - py[0], px[1] - py[1], px[2] - py[2]])?;
            }
            s += (acc * dv).abs();
        }
        Ok(s * dv / vol_r)
    };
    let left = comm_avg(f1)? + comm_avg(f2)?;
    let right = xr.iter().map(|&x| (bv[x] - m).abs()).sum::<f64>() * dv / vol_r / (4.0 * 49.0 * 49.0);

    // weighted bookkeeping of the Hoelder step
    let q = p / (p - 1.0);
    let wv = w.values();
    let avg = |nodes: &[usize], f: &dyn Fn(f64) -> f64| nodes.iter().map(|&i| f(wv[i])).sum::<f64>() / nodes.len() as f64;
    let dual = |v: f64| v.powf(-q / p);
    let dual_r = avg(&xr, &dual).powf(1.0 / q);
    let weighted_factor = [f1, f2]
        .iter()
        .map(|f| (f.iter().map(|&i| wv[i]).sum::<f64>() * dv / vol_r).powf(1.0 / p) * dual_r)
        .fold(0.0, f64::max);
    let xh = hat.nodes(&g)?;
    let hat_factor = avg(&xh, &|v| v).powf(1.0 / p) * avg(&xh, &dual).powf(1.0 / q);
    let fam = RectangleFamily::explicit(&g, vec![*r, tilde, hat])?;
    let ap_root = ap_z_characteristic(w, p, &fam)?.value.powf(1.0 / p);
    let out = LowerBoundOutcome {
        median: m,
        kernel_floor_scaled: floor * scale,
        left,
        right,
        weighted_factor,
        hat_factor,
        ap_root,
        hat_ratio: hat.volume() / r.volume(),
    };
    let mut rep = ExperimentReport::new("lower-bound");
    rep.param("rectangle", r).param("companion", tilde).param("hull", hat).param("p", p);
    rep.metric("outcome", &out);
    rep.check("kernel_positive", floor > 0.0, floor, "> 0");
    rep.check("kernel_floor", floor * scale >= 1.0, floor * scale, ">= 1");
    rep.check("oscillation_bound", left >= right, if right > 0.0 { left / right } else { f64::INFINITY }, "left / right >= 1");
    rep.check("hull_below_characteristic", hat_factor <= ap_root * (1.0 + 1e-12), hat_factor, format!("<= {ap_root}"));
    Ok((rep, out))
}

/// Ratio of the estimated `||[b, T]||` to `||b||_bmo` across symbols, for each
/// `(w, p)`.
pub fn upper_bound_sweep(
    kernel: &KernelSpec,
    symbols: &[(String, ScalarField3)],
    weights: &[(String, ScalarField3)],
    p_list: &[f64],
    family: &RectangleFamily,
    opts: OpNormOptions,
    max_spread: f64,
) -> Result<ExperimentReport> {
    let mut rep = ExperimentReport::new("upper-sweep");
    rep.param("family", family.describe()).param("opnorm", opts).param("max_spread", max_spread);
    let mut table = Curve::new(&["symbol", "weight", "p", "bmo", "opnorm", "ratio", "converged"]);
    let grid = *family.grid();
    let conv_symbol = Convolution::from_spec(kernel, &grid)?.symbol;
    for (wi, (wname, w)) in weights.iter().enumerate() {
        for &p in p_list {
            let mut ratios = Vec::new();
            for (si, (sname, b)) in symbols.iter().enumerate() {
                let (bmo, _) = bmo_z_norm(b, family)?;
                let op = Commutator::new(b.clone(), Box::new(Convolution { grid, symbol: conv_symbol.clone() }))?;
                let est = weighted_opnorm(&op, p, w, wname, opts)?;
                let ratio = if bmo == 0.0 { 0.0 } else { est.estimate() / bmo };
                table.push(vec![si as f64, wi as f64, p, bmo, est.estimate(), ratio, est.dominant.is_some() as u8 as f64]);
                rep.metric(&format!("ratio/{sname}/{wname}/{p}"), ratio);
                if bmo > 0.0 {
                    ratios.push(ratio);
                }
            }
            if ratios.len() >= 2 {
                let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
                let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
                let spread = max / min;
                rep.check(&format!("spread/{wname}/{p}"), spread <= max_spread, spread, format!("<= {max_spread}"));
            }
        }
    }
    rep.curve("ratios", table);
    Ok(rep)
}
