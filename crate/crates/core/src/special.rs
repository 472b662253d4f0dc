//! Special functions: generalized Laguerre polynomials, Hermite functions and
//! Gauss–Hermite quadrature.

use nalgebra::{DMatrix, SymmetricEigen};

/// Generalized Laguerre polynomial `L_n^alpha(x)` by the three-term recurrence.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Normalized oscillator eigenfunctions `psi_0(x) ..= psi_{n_max}(x)` at
/// frequency `omega` (ħ = M = 1).
pub fn hermite_functions(omega: f64, x: f64, n_max: usize) -> Vec<f64> {
    let y = omega.sqrt() * x;
    let mut out = Vec::with_capacity(n_max + 1);
    let psi0 = (omega / std::f64::consts::PI).powf(0.25) * (-0.5 * y * y).exp();
    out.push(psi0);
    if n_max == 0 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * y * psi0);
    for n in 1..n_max {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * y * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

/// Gauss–Hermite nodes and weights for `∫ e^{-y²} f(y) dy` (Golub–Welsch).
pub fn gauss_hermite(points: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(points >= 1);
    let mut jacobi = DMatrix::zeros(points, points);
    for i in 1..points {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}
