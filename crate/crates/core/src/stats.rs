//! Small numerical helpers: least squares lines and Gauss-Legendre rules.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Ordinary least squares `y = slope x + intercept`. Needs two distinct x.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LineFit { slope, intercept, r2, n })
}

/// Nodes and weights of the `n`-point rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre rule on `[a, b]`.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            xs.push(mid + 0.5 * h * xi);
            ws.push(0.5 * h * wi);
        }
    }
    (xs, ws)
}

/// Largest eigenvalue of the symmetric tridiagonal matrix (diagonal `a`,
/// off-diagonal `b`) by Sturm-sequence bisection.
pub fn tridiag_max_eig(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { b[i - 1].abs() } else { 0.0 } + if i + 1 < n { b[i].abs() } else { 0.0 };
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    // number of eigenvalues below x
    let below = |x: f64| {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..n {
            let off = if i > 0 { b[i - 1] * b[i - 1] } else { 0.0 };
            d = a[i] - x - if i > 0 { off / d } else { 0.0 };
            if d == 0.0 {
                d = -1e-300;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) >= n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LanczosResult {
    pub value: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Top eigenvalue of a symmetric positive semidefinite map by Lanczos with
/// full reorthogonalization, stopped once the top Ritz value moves by less
/// than `tol` (relative).
pub fn lanczos_max<F>(mut apply: F, start: Vec<f64>, max_steps: usize, tol: f64) -> crate::Result<LanczosResult>
where
    F: FnMut(&[f64]) -> crate::Result<Vec<f64>>,
{
    let dot = |x: &[f64], y: &[f64]| crate::par::sum_range(x.len(), |i| x[i] * y[i]);
    let n0 = dot(&start, &start).sqrt();
    if n0 == 0.0 {
        return Ok(LanczosResult { value: 0.0, steps: 0, converged: true });
    }
    let mut basis: Vec<Vec<f64>> = vec![start.iter().map(|v| v / n0).collect()];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut prev = f64::NAN;
    for step in 1..=max_steps {
        let v = basis.last().unwrap();
        let mut w = apply(v)?;
        alpha.push(dot(&w, v));
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let theta = tridiag_max_eig(&alpha, &beta);
        if (theta - prev).abs() <= tol * theta.abs() || theta == 0.0 {
            return Ok(LanczosResult { value: theta, steps: step, converged: true });
        }
        prev = theta;
        let nb = dot(&w, &w).sqrt();
        if nb <= 1e-14 * theta.abs() {
            // invariant subspace found
            return Ok(LanczosResult { value: theta, steps: step, converged: true });
        }
        beta.push(nb);
        basis.push(w.into_iter().map(|x| x / nb).collect());
    }
    Ok(LanczosResult { value: prev, steps: max_steps, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_and_lanczos() {
        // eigenvalues of tridiag(2, -1) are 2 - 2 cos(k pi / (n + 1))
        let n = 12;
        let top = 2.0 - 2.0 * (n as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
        assert!((tridiag_max_eig(&vec![2.0; n], &vec![-1.0; n - 1]) - top).abs() < 1e-12);
        let diag: Vec<f64> = (1..=40).map(|i| i as f64 / 40.0).collect();
        let r = lanczos_max(|v| Ok(v.iter().zip(&diag).map(|(x, d)| x * d).collect()), vec![1.0; 40], 60, 1e-12).unwrap();
        assert!(r.converged && (r.value - 1.0).abs() < 1e-10);
    }


    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 14 is exact for 8 points
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(7);
        assert!(x[3].abs() < 1e-15);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert!((s - 2.0 * 1f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn composite_handles_oscillation() {
        let (x, w) = composite_rule(0.0, 1.0, 64, 16);
        let a = 2.0 * std::f64::consts::PI * 200.0;
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * (a * x).sin() * x).sum();
        // int_0^1 x sin(ax) dx = -cos(a)/a + sin(a)/a^2
        let exact = -a.cos() / a + a.sin() / (a * a);
        assert!((s - exact).abs() < 1e-13);
    }
}
