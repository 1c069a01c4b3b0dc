//! Zygmund singular kernels: Nagel-Wainger, Ricci-Stein and tabulated ones,
//! their truncations, and Monte-Carlo/quadrature checks of the size,
//! regularity and cancellation conditions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid3, ScalarField3};
use crate::geometry::zygmund_dilate;
use crate::par;
use crate::report::ExperimentReport;
use crate::stats::composite_rule;

/// `sgn(x1 x2) / (x1^2 x2^2 + x3^2)`.
pub fn nw_eval(x: [f64; 3]) -> Result<f64> {
    let p = x[0] * x[1];
    let den = p * p + x[2] * x[2];
    if den == 0.0 {
        return Err(Error::Singular(x));
    }
    Ok(p.signum() * if p == 0.0 { 0.0 } else { 1.0 } / den)
}

/// Mean-zero C^2 profiles supported in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile1D {
    /// `x (1 - x^2)^3`
    #[default]
    Odd,
    /// `(1 - x^2)^3 (1 - 9 x^2)`
    Even,
}

impl Profile1D {
    pub fn value(self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let c = (1.0 - x * x).powi(3);
        match self {
            Profile1D::Odd => x * c,
            Profile1D::Even => c * (1.0 - 9.0 * x * x),
        }
    }

    fn transform(self, xi: f64, moment: bool) -> Complex64 {
        let panels = (2.0 * xi.abs()).ceil() as usize + 4;
        let (xs, ws) = composite_rule(-1.0, 1.0, panels, 16);
        let mut acc = Complex64::default();
        for (x, w) in xs.iter().zip(&ws) {
            let mut v = self.value(*x) * w;
            if moment {
                v *= *x;
            }
            acc += Complex64::from_polar(v, -2.0 * PI * x * xi);
        }
        if moment {
            acc * Complex64::new(0.0, -2.0 * PI)
        } else {
            acc
        }
    }

    /// `int phi(x) e^{-2 pi i x xi} dx`
    pub fn fourier(self, xi: f64) -> Complex64 {
        self.transform(xi, false)
    }

    /// d/dxi of [`Self::fourier`].
    pub fn fourier_deriv(self, xi: f64) -> Complex64 {
        self.transform(xi, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BumpTriple {
    pub profiles: [Profile1D; 3],
}

impl BumpTriple {
    pub fn value(&self, x: [f64; 3]) -> f64 {
        (0..3).map(|a| self.profiles[a].value(x[a])).product()
    }
}

/// Inclusive integer ranges of `j` and `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleRange {
    pub j: (i32, i32),
    pub k: (i32, i32),
}

impl ScaleRange {
    pub fn square(lo: i32, hi: i32) -> Self {
        ScaleRange { j: (lo, hi), k: (lo, hi) }
    }

    pub fn pairs(&self) -> Vec<(i32, i32)> {
        let mut v = Vec::new();
        for j in self.j.0..=self.j.1 {
            for k in self.k.0..=self.k.1 {
                v.push((j, k));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    NagelWainger,
    RicciStein,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub theta1: f64,
    pub theta2: f64,
    pub eps: [f64; 3],
    pub big: [f64; 3],
    pub rs_profile: Option<BumpTriple>,
    pub rs_range: Option<ScaleRange>,
    pub table: Option<ScalarField3>,
}

impl KernelSpec {
    pub fn nagel_wainger(eps: [f64; 3], big: [f64; 3]) -> Self {
        KernelSpec {
            family: KernelFamily::NagelWainger,
            theta1: 1.0,
            theta2: 0.5,
            eps,
            big,
            rs_profile: None,
            rs_range: None,
            table: None,
        }
    }

    /// NW with `eps` two cells and `N` just inside the half box.
    pub fn nagel_wainger_on(grid: &Grid3) -> Self {
        let h = grid.h();
        Self::nagel_wainger(
            [0, 1, 2].map(|a| 2.0 * h[a]),
            [0, 1, 2].map(|a| grid.extents[a] / 2.0 - h[a]),
        )
    }

    pub fn ricci_stein(profile: BumpTriple, range: ScaleRange, eps: [f64; 3], big: [f64; 3]) -> Self {
        KernelSpec {
            family: KernelFamily::RicciStein,
            theta1: 1.0,
            theta2: 0.75,
            eps,
            big,
            rs_profile: Some(profile),
            rs_range: Some(range),
            table: None,
        }
    }

    pub fn tabulated(table: ScalarField3, eps: [f64; 3], big: [f64; 3]) -> Self {
        KernelSpec {
            family: KernelFamily::Tabulated,
            theta1: 1.0,
            theta2: 0.5,
            eps,
            big,
            rs_profile: None,
            rs_range: None,
            table: Some(table),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta1 > 0.0 && self.theta1 <= 1.0) {
            return Err(Error::Parameter(format!("theta1 must lie in (0,1], got {}", self.theta1)));
        }
        if !(self.theta2 > 0.0 && self.theta2 < 1.0) {
            return Err(Error::Parameter(format!("theta2 must lie in (0,1), got {}", self.theta2)));
        }
        for a in 0..3 {
            if !(self.eps[a] > 0.0 && self.eps[a] <= self.big[a]) {
                return Err(Error::Parameter(format!(
                    "truncation on axis {} needs 0 < eps <= N, got {} and {}",
                    a + 1,
                    self.eps[a],
                    self.big[a]
                )));
            }
        }
        match self.family {
            KernelFamily::RicciStein if self.rs_profile.is_none() || self.rs_range.is_none() => {
                Err(Error::Config("Ricci-Stein kernel needs a profile and a scale range".into()))
            }
            KernelFamily::Tabulated if self.table.is_none() => Err(Error::Config("tabulated kernel without a table".into())),
            _ => Ok(()),
        }
    }

    /// Pointwise value (no truncation). Tabulated kernels have no pointwise form.
    pub fn eval(&self, x: [f64; 3]) -> Result<f64> {
        match self.family {
            KernelFamily::NagelWainger => nw_eval(x),
            KernelFamily::RicciStein => rs_eval(self, x),
            KernelFamily::Tabulated => Err(Error::Config("tabulated kernel has no pointwise evaluator".into())),
        }
    }

    pub fn in_truncation(&self, x: [f64; 3]) -> bool {
        (0..3).all(|a| {
            let v = x[a].abs();
            v >= self.eps[a] * (1.0 - 1e-12) && v <= self.big[a] * (1.0 + 1e-12)
        })
    }

    /// Size majorant `1 / (|x1 x2 x3| (|x1 x2/x3| + |x3/(x1 x2)|)^theta2)`.
    pub fn size_bound(&self, x: [f64; 3]) -> f64 {
        let p = (x[0] * x[1]).abs();
        let q = x[2].abs();
        1.0 / (p * q * (p / q + q / p).powf(self.theta2))
    }
}

pub fn rs_eval(spec: &KernelSpec, x: [f64; 3]) -> Result<f64> {
    let (Some(profile), Some(range)) = (spec.rs_profile, spec.rs_range) else {
        return Err(Error::Config("Ricci-Stein kernel needs a profile and a scale range".into()));
    };
    let mut s = 0.0;
    for (j, k) in range.pairs() {
        let (a, b) = (2f64.powi(j), 2f64.powi(k));
        let y = [x[0] / a, x[1] / b, x[2] / (a * b)];
        if y.iter().all(|v| v.abs() < 1.0) {
            s += profile.value(y) / (a * b).powi(2);
        }
    }
    Ok(s)
}

/// Samples the truncated kernel on the centered displacements of `grid`.
pub fn truncate_to_field(spec: &KernelSpec, grid: &Grid3) -> Result<ScalarField3> {
    spec.validate()?;
    let h = grid.h();
    for a in 0..3 {
        if spec.eps[a] < 2.0 * h[a] * (1.0 - 1e-12) {
            return Err(Error::Resolution(format!(
                "eps on axis {} is {} but the grid step is {} (need eps >= 2h)",
                a + 1,
                spec.eps[a],
                h[a]
            )));
        }
    }
    if let Some(t) = &spec.table {
        grid.check_same(t.grid())?;
        let tv = t.values();
        let vals = par::map_range(grid.len(), |idx| {
            let i = grid.unindex(idx);
            let x = [grid.disp(0, i[0]), grid.disp(1, i[1]), grid.disp(2, i[2])];
            if spec.in_truncation(x) {
                tv[idx]
            } else {
                0.0
            }
        });
        return ScalarField3::new(*grid, vals);
    }
    ScalarField3::from_disp_fn(*grid, |x| {
        if spec.in_truncation(x) {
            spec.eval(x).unwrap_or(0.0)
        } else {
            0.0
        }
    })
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn random_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Max relative deviation of `K(rho_{s,t} x) (st)^2` from `K(x)` over random draws.
pub fn check_homogeneity(spec: &KernelSpec, trials: usize, seed: u64) -> Result<ExperimentReport> {
    if spec.family != KernelFamily::NagelWainger {
        return Err(Error::Precondition("homogeneity check applies to the Nagel-Wainger kernel".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x = [0; 3].map(|_| random_sign(&mut rng) * log_uniform(&mut rng, 1e-2, 1e2));
        let s = log_uniform(&mut rng, 0.125, 8.0);
        let t = log_uniform(&mut rng, 0.125, 8.0);
        let k0 = spec.eval(x)?;
        let k1 = spec.eval(zygmund_dilate(x, s, t)?)? * (s * t).powi(2);
        worst = worst.max((k1 - k0).abs() / k0.abs());
    }
    let mut rep = ExperimentReport::new("homogeneity");
    rep.param("trials", trials).param("seed", seed);
    rep.metric("max_relative_deviation", worst);
    Ok(rep)
}

/// `Delta^a_{x1,h1} Delta^b_{x2,h2} Delta^c_{x3,h3} K(x)` with
/// `Delta^0 K = -K` and `Delta^1 K = K(.+h) - K`.
pub fn mixed_difference(k: &dyn Fn([f64; 3]) -> f64, x: [f64; 3], h: [f64; 3], flags: [bool; 3]) -> f64 {
    let inactive = flags.iter().filter(|f| !**f).count();
    let active: Vec<usize> = (0..3).filter(|&a| flags[a]).collect();
    let mut total = 0.0;
    for mask in 0..(1usize << active.len()) {
        let mut y = x;
        let mut shifted = 0;
        for (bit, &a) in active.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                y[a] += h[a];
                shifted += 1;
            }
        }
        let sign = if (active.len() - shifted + inactive).is_multiple_of(2) { 1.0 } else { -1.0 };
        total += sign * k(y);
    }
    total
}

/// The seven `(alpha, beta, gamma)` allowed in the regularity condition.
pub fn admissible_flags() -> Vec<[bool; 3]> {
    let mut v = Vec::new();
    for m in 0..8u8 {
        let f = [m & 4 != 0, m & 2 != 0, m & 1 != 0];
        let (a, b, c) = (f[0] as u8, f[1] as u8, f[2] as u8);
        if b + c <= 1 || a + c <= 1 {
            v.push(f);
        }
    }
    v
}

/// Right-hand side of the regularity condition without its constant.
pub fn regularity_rhs(spec: &KernelSpec, x: [f64; 3], h: [f64; 3], flags: [bool; 3]) -> f64 {
    let th = spec.theta1;
    let mut num = 1.0;
    let mut den = 1.0;
    for a in 0..3 {
        let e = if flags[a] { th } else { 0.0 };
        num *= h[a].abs().powf(e);
        den *= x[a].abs().powf(e + 1.0);
    }
    let p = (x[0] * x[1] / x[2]).abs();
    num / (den * (p + 1.0 / p).powf(spec.theta2))
}

/// Monte-Carlo sup of LHS/RHS of the regularity condition over admissible
/// tuples with `|h_i| <= |x_i| / 2`.
pub fn check_regularity(spec: &KernelSpec, samples: usize, seed: u64) -> Result<ExperimentReport> {
    spec.validate()?;
    let flags = admissible_flags();
    const BATCH: usize = 1024;
    let batches = samples.div_ceil(BATCH);
    let per_batch = par::map_range(batches, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut best = vec![0.0f64; flags.len()];
        let n = BATCH.min(samples - b * BATCH);
        for _ in 0..n {
            // the ratio is dilation invariant, so x = rho_{s,t}(+-1, +-1, +-1/u) covers
            // every configuration. The ratio peaks on the boundary |h_i| = |x_i|/2,
            // so |h_i/x_i| = U^(1/8)/2 puts most draws near it
            let u = log_uniform(&mut rng, 1e-3, 1e3);
            let s = log_uniform(&mut rng, 1e-2, 1e2);
            let t = log_uniform(&mut rng, 1e-2, 1e2);
            let base = [random_sign(&mut rng), random_sign(&mut rng), random_sign(&mut rng) / u];
            let x = [base[0] * s, base[1] * t, base[2] * s * t];
            let h = [0, 1, 2].map(|a| x[a] * random_sign(&mut rng) * 0.5 * rng.random::<f64>().powf(0.125));
            let fi = rng.random_range(0..flags.len());
            let f = flags[fi];
            let k = |y: [f64; 3]| spec.eval(y).unwrap_or(0.0);
            let lhs = mixed_difference(&k, x, h, f).abs();
            let r = lhs / regularity_rhs(spec, x, h, f);
            if r.is_finite() {
                best[fi] = best[fi].max(r);
            }
        }
        best
    });
    let mut best = vec![0.0f64; flags.len()];
    for b in per_batch {
        for (x, y) in best.iter_mut().zip(b) {
            *x = x.max(y);
        }
    }
    let mut rep = ExperimentReport::new("regularity");
    rep.param("samples", samples).param("seed", seed).param("theta1", spec.theta1).param("theta2", spec.theta2);
    for (f, v) in flags.iter().zip(&best) {
        rep.metric(&format!("sup_ratio_{}{}{}", f[0] as u8, f[1] as u8, f[2] as u8), *v);
    }
    rep.metric("sup_ratio", best.iter().cloned().fold(0.0, f64::max));
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CancellationMode {
    C,
    Cprime,
}

/// Gauss rule on `delta <= |x| <= r`, geometric panels, both signs.
fn shell_rule(delta: f64, r: f64, per_octave: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let octaves = (r / delta).log2().max(1e-12);
    let panels = ((octaves * per_octave as f64).ceil() as usize).max(1);
    let ratio = (r / delta).powf(1.0 / panels as f64);
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut a = delta;
    for _ in 0..panels {
        let b = a * ratio;
        let (x, w) = composite_rule(a, b, 1, order);
        for (xi, wi) in x.into_iter().zip(w) {
            xs.push(xi);
            ws.push(wi);
            xs.push(-xi);
            ws.push(wi);
        }
        a = b;
    }
    (xs, ws)
}

struct Quad {
    per_octave: usize,
    order: usize,
}

impl Quad {
    fn rule(&self, d: f64, r: f64) -> (Vec<f64>, Vec<f64>) {
        shell_rule(d, r, self.per_octave, self.order)
    }
}

/// Absolute values below this are reported as vanishing and count as stable.
pub const CANCELLATION_FLOOR: f64 = 1e-10;

/// Observed implied constants of the cancellation conditions over the
/// window `deltas x radii` (pairs with `delta < r`), each computed at two
/// quadrature resolutions.
pub fn check_cancellation(
    spec: &KernelSpec,
    mode: CancellationMode,
    deltas: &[f64],
    radii: &[f64],
    seed: u64,
) -> Result<ExperimentReport> {
    spec.validate()?;
    let windows: Vec<(f64, f64)> = deltas
        .iter()
        .flat_map(|&d| radii.iter().filter(move |&&r| r > d).map(move |&r| (d, r)))
        .collect();
    if windows.is_empty() {
        return Err(Error::Parameter("no (delta, r) pair with delta < r".into()));
    }
    let k = |y: [f64; 3]| spec.eval(y).unwrap_or(0.0);
    // axis integrated alone in (b) and the paired axes of (c)
    let (lone, pair) = match mode {
        CancellationMode::C => (0usize, [1usize, 2usize]),
        CancellationMode::Cprime => (1, [0, 2]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<([f64; 3], [f64; 3])> = (0..6)
        .map(|_| {
            let x = [0; 3].map(|_| random_sign(&mut rng) * log_uniform(&mut rng, 0.1, 10.0));
            let h = [0, 1, 2].map(|a| x[a] * log_uniform(&mut rng, 0.01, 0.5));
            (x, h)
        })
        .collect();

    let eval_all = |q: &Quad| -> [f64; 3] {
        let mut sup = [0.0f64; 3];
        for &(d, r) in &windows {
            let (xs, ws) = q.rule(d, r);
            // (a): triple integral over the shells
            let a = par::sum_range(xs.len(), |i| {
                let mut s = 0.0;
                for (y, wy) in xs.iter().zip(&ws) {
                    for (z, wz) in xs.iter().zip(&ws) {
                        s += wy * wz * k([xs[i], *y, *z]);
                    }
                }
                s * ws[i]
            });
            sup[0] = sup[0].max(a.abs());
            for &(x, h) in &probes {
                // (b): integrate the lone axis of the mixed differences in the other two
                for flags in [[false, false], [true, false], [false, true]] {
                    let mut f = [false; 3];
                    f[pair[0]] = flags[0];
                    f[pair[1]] = flags[1];
                    let integrand = |t: f64| {
                        let mut y = x;
                        y[lone] = t;
                        let mut fl = f;
                        fl[lone] = false;
                        // Delta^0 on the integrated axis contributes a sign only
                        -mixed_difference(&k, y, h, fl)
                    };
                    let lhs: f64 = xs.iter().zip(&ws).map(|(t, w)| w * integrand(*t)).sum::<f64>().abs();
                    let (p, qv) = (x[pair[0]], x[pair[1]]);
                    let mut rhs = 1.0;
                    if mode == CancellationMode::C {
                        rhs /= p.abs().powf(if f[pair[0]] { spec.theta1 + 1.0 } else { 1.0 })
                            * qv.abs().powf(if f[pair[1]] { spec.theta1 + 1.0 } else { 1.0 });
                    } else {
                        rhs /= p.abs().powf(if f[pair[0]] { spec.theta1 + 1.0 } else { 1.0 })
                            * qv.abs().powf(if f[pair[1]] { spec.theta1 } else { 0.0 });
                    }
                    for a in pair {
                        if f[a] {
                            rhs *= h[a].abs().powf(spec.theta1);
                        }
                    }
                    let m = |v: f64| (v * p / qv).abs() + (qv / (v * p)).abs();
                    rhs *= m(r).powf(-spec.theta2) + m(d).powf(-spec.theta2);
                    sup[1] = sup[1].max(lhs / rhs);
                }
                // (c): integrate the paired axes of Delta^alpha on the lone axis
                for act in [false, true] {
                    let mut f = [false; 3];
                    f[lone] = act;
                    let mut s = 0.0;
                    for (u, wu) in xs.iter().zip(&ws) {
                        for (v, wv) in xs.iter().zip(&ws) {
                            let mut y = x;
                            y[pair[0]] = *u;
                            y[pair[1]] = *v;
                            // the two integrated axes carry Delta^0 each: sign (+1)
                            s += wu * wv * mixed_difference(&k, y, h, f);
                        }
                    }
                    let mut rhs = 1.0 / x[lone].abs().powf(if act { spec.theta1 + 1.0 } else { 1.0 });
                    if act {
                        rhs *= h[lone].abs().powf(spec.theta1);
                    }
                    sup[2] = sup[2].max(s.abs() / rhs);
                }
            }
        }
        sup
    };

    let coarse = eval_all(&Quad { per_octave: 1, order: 8 });
    let fine = eval_all(&Quad { per_octave: 1, order: 12 });
    let mut rep = ExperimentReport::new("cancellation");
    rep.param("mode", mode).param("deltas", deltas).param("radii", radii).param("seed", seed);
    let names = ["a", "b", "c"];
    for i in 0..3 {
        rep.metric(&format!("const_{}", names[i]), fine[i]);
        rep.metric(&format!("const_{}_coarse", names[i]), coarse[i]);
        let big = coarse[i].abs().max(fine[i].abs());
        let stable = big < CANCELLATION_FLOOR || (coarse[i] - fine[i]).abs() <= 0.05 * big;
        if !stable {
            rep.warn(format!(
                "condition ({}) under-resolved: {} vs {} under refinement",
                names[i], coarse[i], fine[i]
            ));
        }
        rep.metric(&format!("stable_{}", names[i]), stable);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nw() -> KernelSpec {
        KernelSpec::nagel_wainger([0.25; 3], [2.0; 3])
    }

    fn rs(range: ScaleRange) -> KernelSpec {
        KernelSpec::ricci_stein(BumpTriple::default(), range, [0.25; 3], [4.0; 3])
    }

    #[test]
    fn nw_values() {
        assert_eq!(nw_eval([1.0, 1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(nw_eval([-1.0, 1.0, 1.0]).unwrap(), -0.5);
        assert!((nw_eval([2.0, 3.0, 6.0]).unwrap() - 1.0 / 72.0).abs() < 1e-16);
        assert!(matches!(nw_eval([0.0, 1.0, 0.0]), Err(Error::Singular(_))));
        assert_eq!(nw_eval([0.0, 1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn nw_is_odd_in_x1_and_x2() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x = [0; 3].map(|_| rng.random_range(-3.0..3.0));
            let k = nw_eval(x).unwrap();
            assert_eq!(nw_eval([-x[0], x[1], x[2]]).unwrap(), -k);
            assert_eq!(nw_eval([x[0], -x[1], x[2]]).unwrap(), -k);
        }
    }

    #[test]
    fn profiles_have_zero_mean() {
        let (xs, ws) = composite_rule(-1.0, 1.0, 8, 16);
        for p in [Profile1D::Odd, Profile1D::Even] {
            let m: f64 = xs.iter().zip(&ws).map(|(x, w)| w * p.value(*x)).sum();
            assert!(m.abs() < 1e-14, "{p:?} mean {m}");
            assert!(p.fourier(0.0).norm() < 1e-14);
            assert_eq!(p.value(1.0), 0.0);
        }
    }

    #[test]
    fn profile_transform_matches_finite_difference() {
        for p in [Profile1D::Odd, Profile1D::Even] {
            for xi in [0.3, 1.7, 12.5] {
                let d = 1e-5;
                let fd = (p.fourier(xi + d) - p.fourier(xi - d)) / (2.0 * d);
                assert!((fd - p.fourier_deriv(xi)).norm() < 1e-7);
            }
        }
        // closed form: int x(1-x^2)^3 sin(2 pi x xi) at xi -> small is ~ 2 pi xi * int x^2(1-x^2)^3
        let xi = 1e-4;
        let expect = -2.0 * PI * xi * (32.0 / 315.0);
        assert!((Profile1D::Odd.fourier(xi).im - expect).abs() < 1e-10);
    }

    #[test]
    fn rs_partial_sums() {
        let single = rs(ScaleRange::square(0, 0));
        let prof = BumpTriple::default();
        let x = [0.3, -0.2, 0.5];
        assert!((rs_eval(&single, x).unwrap() - prof.value(x)).abs() < 1e-15);
        assert_eq!(rs_eval(&single, [1.5, 0.0, 0.0]).unwrap(), 0.0);

        let two = rs(ScaleRange { j: (0, 1), k: (0, 0) });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x = [0; 3].map(|_| rng.random_range(-2.0..2.0));
            let direct = prof.value(x) + prof.value([x[0] / 2.0, x[1], x[2] / 2.0]) / 4.0;
            assert!((rs_eval(&two, x).unwrap() - direct).abs() < 1e-12);
        }
        let mut broken = two.clone();
        broken.rs_profile = None;
        assert!(matches!(rs_eval(&broken, x), Err(Error::Config(_))));
    }

    #[test]
    fn truncation_matches_pointwise_values() {
        let g = Grid3::cube(8.0, 64).unwrap();
        let spec = KernelSpec::nagel_wainger([0.25; 3], [2.0; 3]);
        let f = truncate_to_field(&spec, &g).unwrap();
        for idx in 0..g.len() {
            let i = g.unindex(idx);
            let x = [g.disp(0, i[0]), g.disp(1, i[1]), g.disp(2, i[2])];
            let v = f.values()[idx];
            if x[0].abs() < 0.25 || x.iter().any(|c| c.abs() > 2.0) || x[1].abs() < 0.25 || x[2].abs() < 0.25 {
                assert_eq!(v, 0.0);
            } else {
                assert_eq!(v, nw_eval(x).unwrap());
            }
        }
        // shrinking eps only adds support
        let narrow = truncate_to_field(&KernelSpec::nagel_wainger([0.5; 3], [2.0; 3]), &g).unwrap();
        for (a, b) in narrow.values().iter().zip(f.values()) {
            if *a != 0.0 {
                assert_eq!(a, b);
            }
        }
        let coarse = Grid3::cube(8.0, 16).unwrap();
        assert!(matches!(truncate_to_field(&spec, &coarse), Err(Error::Resolution(_))));
    }

    #[test]
    fn spec_validation() {
        let mut s = nw();
        s.theta2 = 1.0;
        assert!(s.validate().is_err());
        let mut s = nw();
        s.eps[1] = 3.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn homogeneity() {
        let spec = nw();
        let k = spec.eval([2.0, 3.0, 6.0]).unwrap() * 36.0;
        assert!((k - 0.5).abs() < 1e-15);
        let rep = check_homogeneity(&spec, 10_000, 7).unwrap();
        assert!(rep.metric_f64("max_relative_deviation").unwrap() <= 1e-12);
    }

    #[test]
    fn differences_and_flags() {
        let flags = admissible_flags();
        assert_eq!(flags.len(), 7);
        assert!(!flags.contains(&[true, true, true]));
        let k = |y: [f64; 3]| y[0] * y[1] + 2.0 * y[2];
        // Delta^0 Delta^0 Delta^0 K = -K
        assert_eq!(mixed_difference(&k, [1.0, 2.0, 3.0], [0.1; 3], [false; 3]), -8.0);
        // Delta_{x1} Delta_{x2} (x1 x2) = h1 h2, and Delta^0 in x3 flips the sign
        let d = mixed_difference(&k, [1.0, 2.0, 3.0], [0.1, 0.2, 0.3], [true, true, false]);
        assert!((d + 0.1 * 0.2).abs() < 1e-14);
    }

    #[test]
    fn size_term_at_unit_point() {
        let spec = nw();
        let r = 0.5 / regularity_rhs(&spec, [1.0; 3], [0.1; 3], [false; 3]);
        assert!((r - 0.5 * 2f64.powf(0.5)).abs() < 1e-14);
    }

    #[test]
    fn difference_quotient_stays_bounded_as_h_shrinks() {
        let spec = nw();
        let k = |y: [f64; 3]| nw_eval(y).unwrap();
        let x = [1.3, 0.7, 0.9];
        let mut ratios = Vec::new();
        for e in 1..12 {
            let h = [0.5f64.powi(e), 0.0, 0.0];
            let f = [true, false, false];
            ratios.push(mixed_difference(&k, x, h, f).abs() / regularity_rhs(&spec, x, h, f));
        }
        let last = *ratios.last().unwrap();
        assert!(ratios.iter().all(|r| r.is_finite() && *r < 10.0));
        // converges to |d1 K| x1^2 (...)^theta2
        assert!((ratios[9] - last).abs() < 1e-2 * last);
    }

    #[test]
    fn regularity_sup_is_finite_and_stable() {
        let spec = nw();
        let a = check_regularity(&spec, 10_000, 11).unwrap().metric_f64("sup_ratio").unwrap();
        let b = check_regularity(&spec, 20_000, 12).unwrap().metric_f64("sup_ratio").unwrap();
        assert!(a.is_finite() && b.is_finite());
        assert!((a - b).abs() <= 0.1 * a.max(b), "{a} vs {b}");
        // a dense scan of the boundary h = -x/2 peaks at 9.018 (for alpha = beta = 1, gamma = 0)
        assert!(a > 8.5 && a <= 9.05, "{a}");
    }

    #[test]
    fn cancellation_vanishes_by_symmetry() {
        let spec = nw();
        for mode in [CancellationMode::C, CancellationMode::Cprime] {
            let rep = check_cancellation(&spec, mode, &[0.1, 1.0], &[1.0, 10.0], 3).unwrap();
            for c in ["a", "b", "c"] {
                assert!(rep.metric_f64(&format!("const_{c}")).unwrap() < 1e-8, "{mode:?} {c}");
            }
            assert!(rep.warnings.is_empty());
        }
        let rs = rs(ScaleRange::square(-1, 1));
        let rep = check_cancellation(&rs, CancellationMode::C, &[0.05], &[2.0, 8.0], 5).unwrap();
        assert!(rep.metric_f64("const_a").unwrap() < 1e-8);
    }
}
