//! Axis-by-axis 3-D FFT on row-major data. Forward is unscaled, inverse carries 1/N.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par;

type Plan = Arc<dyn Fft<f64>>;

fn plan(n: usize, inverse: bool) -> Plan {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Plan>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().unwrap();
    let (planner, map) = &mut *guard;
    map.entry((n, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

fn lines(data: &mut [Complex64], n: usize, p: &Plan) {
    // a few lines per task so small axes are not dominated by scheduling
    let per = (4096 / n).max(1) * n;
    par::for_chunks_mut(data, per, |_, chunk| {
        let mut scratch = vec![Complex64::default(); p.get_inplace_scratch_len()];
        p.process_with_scratch(chunk, &mut scratch);
    });
}

/// Moves axis `axis` of a row-major `dims` array to the last position.
pub(crate) fn to_last<T: Copy + Send + Sync>(src: &[T], dims: [usize; 3], axis: usize, dst: &mut [T]) {
    let [n0, n1, n2] = dims;
    match axis {
        0 => par::for_chunks_mut(dst, n0, |line, out| {
            let (i1, i2) = (line / n2, line % n2);
            for (i0, o) in out.iter_mut().enumerate() {
                *o = src[(i0 * n1 + i1) * n2 + i2];
            }
        }),
        1 => par::for_chunks_mut(dst, n1, |line, out| {
            let (i0, i2) = (line / n2, line % n2);
            for (i1, o) in out.iter_mut().enumerate() {
                *o = src[(i0 * n1 + i1) * n2 + i2];
            }
        }),
        _ => dst.copy_from_slice(src),
    }
}

pub(crate) fn from_last<T: Copy + Send + Sync>(src: &[T], dims: [usize; 3], axis: usize, dst: &mut [T]) {
    let [n0, n1, n2] = dims;
    match axis {
        0 => par::for_chunks_mut(dst, n1 * n2, |i0, out| {
            for (r, o) in out.iter_mut().enumerate() {
                *o = src[r * n0 + i0];
            }
        }),
        1 => par::for_chunks_mut(dst, n1 * n2, |i0, out| {
            for i1 in 0..n1 {
                for i2 in 0..n2 {
                    out[i1 * n2 + i2] = src[(i0 * n2 + i2) * n1 + i1];
                }
            }
        }),
        _ => dst.copy_from_slice(src),
    }
}

fn transform(data: &mut [Complex64], dims: [usize; 3], inverse: bool) {
    assert_eq!(data.len(), dims.iter().product::<usize>());
    let mut buf = vec![Complex64::default(); data.len()];
    for axis in 0..3 {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let p = plan(n, inverse);
        if axis == 2 {
            lines(data, n, &p);
        } else {
            to_last(data, dims, axis, &mut buf);
            lines(&mut buf, n, &p);
            from_last(&buf, dims, axis, data);
        }
    }
    if inverse {
        let s = 1.0 / data.len() as f64;
        par::for_chunks_mut(data, 8192, |_, c| c.iter_mut().for_each(|z| *z *= s));
    }
}

pub fn forward3(data: &mut [Complex64], dims: [usize; 3]) {
    transform(data, dims, false);
}

pub fn inverse3(data: &mut [Complex64], dims: [usize; 3]) {
    transform(data, dims, true);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive(data: &[Complex64], dims: [usize; 3], sign: f64) -> Vec<Complex64> {
        let [n0, n1, n2] = dims;
        let mut out = vec![Complex64::default(); data.len()];
        for k0 in 0..n0 {
            for k1 in 0..n1 {
                for k2 in 0..n2 {
                    let mut acc = Complex64::default();
                    for i0 in 0..n0 {
                        for i1 in 0..n1 {
                            for i2 in 0..n2 {
                                let ph = (k0 * i0) as f64 / n0 as f64
                                    + (k1 * i1) as f64 / n1 as f64
                                    + (k2 * i2) as f64 / n2 as f64;
                                acc += data[(i0 * n1 + i1) * n2 + i2]
                                    * Complex64::from_polar(1.0, sign * 2.0 * PI * ph);
                            }
                        }
                    }
                    out[(k0 * n1 + k1) * n2 + k2] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft_on_anisotropic_grid() {
        let dims = [4, 2, 8];
        let data: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let mut fast = data.clone();
        forward3(&mut fast, dims);
        let slow = naive(&data, dims, -1.0);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-11);
        }
        inverse3(&mut fast, dims);
        for (a, b) in fast.iter().zip(&data) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn handles_singleton_axes() {
        let dims = [1, 4, 1];
        let data: Vec<Complex64> = (0..4).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let mut fast = data.clone();
        forward3(&mut fast, dims);
        assert!((fast[0].re - 6.0).abs() < 1e-14);
        let slow = naive(&data, dims, -1.0);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
