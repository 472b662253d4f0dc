//! Chebyshev evaluation of `exp(-i M) v` for real symmetric tridiagonal `M`.

use num_complex::Complex64;

use crate::model::Tridiagonal;

/// Bessel functions `J_0(x) ..= J_{k_max}(x)` for `x >= 0` by Miller's
/// backward recurrence, normalized with `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_sequence(x: f64, k_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; k_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = k_max.max(x.ceil() as usize) + 20 + (x.max(1.0).cbrt() * 10.0) as usize;
    let start = start + start % 2;
    let mut next = 0.0f64;
    let mut cur = 1e-300f64;
    let mut norm = 0.0f64;
    for k in (1..=start).rev() {
        // cur = J_k, next = J_{k+1}
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // cur now J_{k-1}
        let idx = k - 1;
        if idx <= k_max {
            out[idx] = cur;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Number of Chebyshev terms after which `|J_k(x)|` is negligible.
fn chebyshev_order(x: f64) -> usize {
    (x + 12.0 * x.max(1.0).cbrt() + 25.0).ceil() as usize
}

/// Applies `exp(-i M)` in place to each column of `block`, stored
/// column-major with `m.len()` rows. Returns the number of terms used.
pub fn expm_apply(m: &Tridiagonal, block: &mut [Complex64]) -> usize {
    let n = m.len();
    if n == 0 || block.is_empty() {
        return 0;
    }
    debug_assert_eq!(block.len() % n, 0);
    let (lo, hi) = m.spectral_bounds();
    let center = 0.5 * (hi + lo);
    let radius = 0.5 * (hi - lo);
    let phase = Complex64::new(0.0, -center).exp();

    if radius < 1e-300 {
        for v in block.iter_mut() {
            *v *= phase;
        }
        return 1;
    }

    let order = chebyshev_order(radius);
    let bessel = bessel_j_sequence(radius, order);
    let last = bessel
        .iter()
        .rposition(|j| j.abs() > 1e-18)
        .unwrap_or(0)
        .max(1);
    // (-i)^k
    let rot = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, -1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 1.0),
    ];
    let coeff: Vec<Complex64> = (0..=last)
        .map(|k| {
            let scale = if k == 0 { 1.0 } else { 2.0 };
            rot[k % 4] * (scale * bessel[k]) * phase
        })
        .collect();

    let inv_r = 1.0 / radius;
    let scaled_diag: Vec<f64> = m.diag.iter().map(|d| (d - center) * inv_r).collect();
    let scaled_off: Vec<f64> = m.off.iter().map(|e| e * inv_r).collect();

    let mut t_prev = vec![Complex64::new(0.0, 0.0); n];
    let mut t_cur = vec![Complex64::new(0.0, 0.0); n];
    let mut t_next = vec![Complex64::new(0.0, 0.0); n];
    let mut acc = vec![Complex64::new(0.0, 0.0); n];

    for col in block.chunks_mut(n) {
        t_prev.copy_from_slice(col);
        tri_apply(&scaled_diag, &scaled_off, &t_prev, &mut t_cur);
        for i in 0..n {
            acc[i] = coeff[0] * t_prev[i] + coeff[1] * t_cur[i];
        }
        for c in &coeff[2..] {
            tri_apply(&scaled_diag, &scaled_off, &t_cur, &mut t_next);
            for i in 0..n {
                let v = 2.0 * t_next[i] - t_prev[i];
                t_next[i] = v;
                acc[i] += c * v;
            }
            std::mem::swap(&mut t_prev, &mut t_cur);
            std::mem::swap(&mut t_cur, &mut t_next);
        }
        col.copy_from_slice(&acc);
    }
    last + 1
}

#[inline]
fn tri_apply(diag: &[f64], off: &[f64], x: &[Complex64], y: &mut [Complex64]) {
    let n = diag.len();
    for i in 0..n {
        let mut v = x[i] * diag[i];
        if i > 0 {
            v += x[i - 1] * off[i - 1];
        }
        if i + 1 < n {
            v += x[i + 1] * off[i];
        }
        y[i] = v;
    }
}
