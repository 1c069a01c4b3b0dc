//! Periodic sliding-window sums along each axis.

use crate::fft::{from_last, to_last};
use crate::field::ScalarField3;
use crate::par;

fn window_lines(data: &mut [f64], n: usize, lo: isize, count: usize) {
    par::for_chunks_mut(data, n, |_, line| {
        if count >= n {
            let total: f64 = line.iter().sum();
            line.iter_mut().for_each(|v| *v = total);
            return;
        }
        // prefix sums over two periods avoid drift from a running window
        let mut pre = Vec::with_capacity(2 * n + 1);
        pre.push(0.0);
        for t in 0..2 * n {
            pre.push(pre[t] + line[t % n]);
        }
        let start = lo.rem_euclid(n as isize) as usize;
        let out: Vec<f64> = (0..n)
            .map(|i| {
                let a = (i + start) % n;
                pre[a + count] - pre[a]
            })
            .collect();
        line.copy_from_slice(&out);
    });
}

/// `out(x) = sum over offsets d in [lo, lo + count)` (per axis) of `f(x + d)`,
/// indices wrapping around the torus.
pub fn box_sum_periodic(f: &ScalarField3, lo: [isize; 3], count: [usize; 3]) -> ScalarField3 {
    let g = *f.grid();
    let dims = g.counts;
    let mut data = f.values().to_vec();
    let mut buf = vec![0.0; data.len()];
    for axis in 0..3 {
        let n = dims[axis];
        if axis == 2 {
            window_lines(&mut data, n, lo[axis], count[axis]);
        } else {
            to_last(&data, dims, axis, &mut buf);
            window_lines(&mut buf, n, lo[axis], count[axis]);
            from_last(&buf, dims, axis, &mut data);
        }
    }
    ScalarField3::from_vec_unchecked(g, data)
}

/// Offsets `d` with `-w <= d h < w`, as `(lo, count)`; capped at the full axis.
pub fn half_open_offsets(w: f64, h: f64, n: usize) -> (isize, usize) {
    let eps = 1e-9;
    let lo = (-w / h - eps).ceil() as isize;
    let hi = (w / h - eps).ceil() as isize;
    let count = (hi - lo).max(0) as usize;
    if count >= n {
        (0, n)
    } else {
        (lo, count)
    }
}
