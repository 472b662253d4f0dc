//! Phonon birth–death dynamics under an engineered reservoir at constant
//! trap frequency, and the two-point heat distribution.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{FockTruncation, ThermalState};

/// Reservoir coupling rate `gamma` (1/ms), occupation `n_env` and trap frequency `omega` (rad/μs).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BathSpec {
    pub gamma: f64,
    pub n_env: f64,
    pub omega: f64,
}

impl BathSpec {
    pub fn new(gamma: f64, n_env: f64, omega: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be >= 0, got {gamma}")));
        }
        if !(n_env >= 0.0 && n_env.is_finite()) {
            return Err(Error::InvalidInput(format!("n_env must be >= 0, got {n_env}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidInput(format!("omega must be > 0, got {omega}")));
        }
        Ok(BathSpec { gamma, n_env, omega })
    }
}

/// Nearest-neighbour rate matrix on `0..=n_max` with rates
/// `n → n-1: down·n` and `n → n+1: up·(n+1)`.
///
/// The upward rate out of `n_max` leaves the space; that loss is the
/// boundary leakage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BirthDeath {
    pub down: f64,
    pub up: f64,
    pub n_max: usize,
}

impl BirthDeath {
    pub fn rate_down(&self, n: usize) -> f64 {
        self.down * n as f64
    }

    pub fn rate_up(&self, n: usize) -> f64 {
        self.up * (n + 1) as f64
    }

    fn exit_rate(&self, n: usize) -> f64 {
        self.rate_down(n) + self.rate_up(n)
    }

    /// Dense generator, `G[(m, n)]` = rate `n → m`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.n_max + 1;
        let mut g = DMatrix::zeros(d, d);
        for n in 0..d {
            g[(n, n)] = -self.exit_rate(n);
            if n > 0 {
                g[(n - 1, n)] = self.rate_down(n);
            }
            if n < self.n_max {
                g[(n + 1, n)] = self.rate_up(n);
            }
        }
        g
    }

    /// Probability lost per unit time from level `n_max`.
    pub fn boundary_leak_rate(&self) -> f64 {
        self.rate_up(self.n_max)
    }

    fn apply_uniformized(&self, lambda: f64, p: &[f64], out: &mut [f64]) {
        // out = (I + G/lambda) p
        let d = p.len();
        for m in 0..d {
            let mut v = p[m] * (1.0 - self.exit_rate(m) / lambda);
            if m > 0 {
                v += p[m - 1] * self.rate_up(m - 1) / lambda;
            }
            if m + 1 < d {
                v += p[m + 1] * self.rate_down(m + 1) / lambda;
            }
            out[m] = v;
        }
    }
}

/// Damped-oscillator populations: down `γ(N̄+1)n`, up `γN̄(n+1)`.
pub fn birth_death_generator(bath: &BathSpec, trunc: &FockTruncation) -> BirthDeath {
    BirthDeath {
        down: bath.gamma * (bath.n_env + 1.0),
        up: bath.gamma * bath.n_env,
        n_max: trunc.n_max,
    }
}

/// Infinite-temperature heating at `rate` phonons per unit time: up and
/// down coefficients both equal `rate`, so `d<n>/dt = rate`.
pub fn heating_generator(rate: f64, n_max: usize) -> BirthDeath {
    BirthDeath {
        down: rate,
        up: rate,
        n_max,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationEvolution {
    pub p: Vec<f64>,
    /// Probability that left through the top level.
    pub leakage: f64,
    /// Most negative entry clipped to zero (0 when none).
    pub clipped: f64,
}

/// Largest Poisson mean handled in one uniformization chunk.
const CHUNK_MEAN: f64 = 20.0;
/// Truncation of each chunk's Poisson series.
const POISSON_TAIL: f64 = 1e-17;

/// `exp(G t)` applied to each column of `block` (column-major, `n_max+1` rows),
/// by uniformization in chunks of Poisson mean at most 20.
fn evolve_block(gen: &BirthDeath, block: &mut [f64], t: f64) {
    let d = gen.n_max + 1;
    let lambda = (0..d).map(|n| gen.exit_rate(n)).fold(0.0, f64::max);
    if t == 0.0 || lambda == 0.0 {
        return;
    }
    let chunks = ((lambda * t) / CHUNK_MEAN).ceil().max(1.0) as usize;
    let mu = lambda * t / chunks as f64;
    let mut term = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut acc = vec![0.0; d];
    for col in block.chunks_mut(d) {
        for _ in 0..chunks {
            let mut weight = (-mu).exp();
            term.copy_from_slice(col);
            for (a, v) in acc.iter_mut().zip(&term) {
                *a = weight * v;
            }
            let mut k = 0usize;
            // Past the mode the weights decay faster than geometrically.
            while (k as f64) < mu || weight > POISSON_TAIL {
                k += 1;
                gen.apply_uniformized(lambda, &term, &mut next);
                std::mem::swap(&mut term, &mut next);
                weight *= mu / k as f64;
                for (a, v) in acc.iter_mut().zip(&term) {
                    *a += weight * v;
                }
            }
            col.copy_from_slice(&acc);
        }
    }
}

/// `p(t) = exp(G t) p0`. Fails if more than `leakage_tol` leaves through the top level.
pub fn evolve_populations(gen: &BirthDeath, p0: &[f64], t: f64, leakage_tol: f64) -> Result<PopulationEvolution> {
    if p0.len() != gen.n_max + 1 {
        return Err(Error::InvalidInput(format!(
            "population vector has {} entries, generator {}",
            p0.len(),
            gen.n_max + 1
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("time must be >= 0, got {t}")));
    }
    let total0: f64 = p0.iter().sum();
    if (total0 - 1.0).abs() > 1e-10 || p0.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidInput("initial populations must be a probability vector".into()));
    }
    let mut p = p0.to_vec();
    evolve_block(gen, &mut p, t);
    let mut clipped = 0.0f64;
    for v in p.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(Error::InvalidInput(format!("negative population {v:e}")));
            }
            clipped = clipped.min(*v);
            *v = 0.0;
        }
    }
    let leakage = (total0 - p.iter().sum::<f64>()).max(0.0);
    if leakage > leakage_tol {
        return Err(Error::Truncation(format!(
            "population leakage {leakage:e} through n_max={}; raise n_max",
            gen.n_max
        )));
    }
    Ok(PopulationEvolution { p, leakage, clipped })
}

/// Column-stochastic kernel `T(t) = exp(G t)` restricted to initial levels `0..=n_cols`.
pub fn transition_kernel(gen: &BirthDeath, t: f64, n_cols: usize) -> DMatrix<f64> {
    let d = gen.n_max + 1;
    let cols = (n_cols + 1).min(d);
    let mut block = vec![0.0; d * cols];
    for n in 0..cols {
        block[n * d + n] = 1.0;
    }
    evolve_block(gen, &mut block, t);
    DMatrix::from_vec(d, cols, block)
}

/// Thermal vector with mean `nbar` on `0..=n_max` (unnormalized tail dropped).
pub fn thermal_vector(nbar: f64, n_max: usize) -> Vec<f64> {
    if nbar == 0.0 {
        let mut v = vec![0.0; n_max + 1];
        v[0] = 1.0;
        return v;
    }
    let r = nbar / (nbar + 1.0);
    (0..=n_max).map(|n| r.powi(n as i32) / (nbar + 1.0)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatAtom {
    /// Heat in units of ħω; positive when energy flows into the ion.
    pub q: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatDistribution {
    pub atoms: Vec<HeatAtom>,
    /// Duration in ms.
    pub duration: f64,
    pub beta_init: f64,
    /// Missing mass: thermal tail beyond the columns plus boundary leakage.
    pub deficit: f64,
    /// `<n>` at the end of the interval, from the same kernel.
    pub mean_final_occupation: f64,
}

impl HeatDistribution {
    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.p).sum()
    }

    /// `<Q>` in units of ħω.
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.q * a.p).sum()
    }
}

/// First moment of the initial thermal tail left out of `P(Q)`; keeps the
/// mean heat exact well below the mass tolerance.
pub const HEAT_MEAN_TOL: f64 = 1e-12;

/// `P(Q) = Σ δ(Q - ħω(m-n)) T_{m,n}(t) P_n^0`, doubling `n_max` until the
/// missing mass is below `trunc.leakage_tol`.
pub fn heat_distribution(
    bath: &BathSpec,
    thermal_init: &ThermalState,
    t: f64,
    trunc: &FockTruncation,
) -> Result<HeatDistribution> {
    if (thermal_init.omega0 - bath.omega).abs() > 1e-12 * bath.omega {
        return Err(Error::BasisMismatch(format!(
            "initial state at omega={} but bath at {}",
            thermal_init.omega0, bath.omega
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("time must be >= 0, got {t}")));
    }
    let mut cols = thermal_init.levels_for_tail(0.5 * trunc.leakage_tol);
    while thermal_init.moment_above(cols) > HEAT_MEAN_TOL {
        cols += 1;
    }
    let mut n_max = trunc.n_max.max(2 * cols);
    loop {
        let gen = birth_death_generator(bath, &FockTruncation { n_max, ..*trunc });
        let kernel = transition_kernel(&gen, t, cols);
        let mut lattice: BTreeMap<i64, f64> = BTreeMap::new();
        let mut total = 0.0;
        let mut mean_n = 0.0;
        for n in 0..=cols {
            let pn = thermal_init.occupation(n);
            for m in 0..=n_max {
                let p = kernel[(m, n)] * pn;
                if p > 0.0 {
                    *lattice.entry(m as i64 - n as i64).or_insert(0.0) += p;
                    total += p;
                    mean_n += m as f64 * p;
                }
            }
        }
        let deficit = (1.0 - total).max(0.0);
        if deficit <= trunc.leakage_tol {
            return Ok(HeatDistribution {
                atoms: lattice.into_iter().map(|(q, p)| HeatAtom { q: q as f64, p }).collect(),
                duration: t,
                beta_init: thermal_init.beta,
                deficit,
                mean_final_occupation: mean_n,
            });
        }
        if n_max >= trunc.n_max_limit {
            return Err(Error::Truncation(format!(
                "heat distribution misses {deficit:e} at n_max={n_max}"
            )));
        }
        n_max = (2 * n_max).min(trunc.n_max_limit);
    }
}

/// Closed-form `<n>(t) = N̄ + (n̄ - N̄) e^{-γt}`.
pub fn mean_occupation(bath: &BathSpec, nbar0: f64, t: f64) -> f64 {
    bath.n_env + (nbar0 - bath.n_env) * (-bath.gamma * t).exp()
}

/// Mean of a population vector.
pub fn mean_of(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(n, x)| n as f64 * x).sum()
}

/// `exp(G t)` by nalgebra's dense exponential; reference for tests.
pub fn dense_kernel(gen: &BirthDeath, t: f64) -> DMatrix<f64> {
    (gen.to_dense() * t).exp()
}

/// Applies `T` to a population vector.
pub fn apply_kernel(kernel: &DMatrix<f64>, p: &[f64]) -> Vec<f64> {
    (kernel * DVector::from_column_slice(p)).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bath(n_env: f64) -> BathSpec {
        BathSpec::new(1.0, n_env, 1.0).unwrap()
    }

    #[test]
    fn generator_rates() {
        let g = birth_death_generator(&bath(0.0), &FockTruncation::new(10)).to_dense();
        for n in 0..10 {
            assert_eq!(g[(n + 1, n)], 0.0);
        }
        let b = BathSpec::new(0.7, 1.5, 1.0).unwrap();
        let g = birth_death_generator(&b, &FockTruncation::new(10)).to_dense();
        assert!((g[(3, 4)] - 0.7 * 2.5 * 4.0).abs() < 1e-14);
        assert!((g[(5, 4)] - 0.7 * 1.5 * 5.0).abs() < 1e-14);
        // Columns conserve probability except through the top.
        for n in 0..10 {
            assert!(g.column(n).sum().abs() < 1e-12);
        }
        assert!(g.column(10).sum() < 0.0);
    }

    #[test]
    fn generator_annihilates_thermal_vector() {
        let b = BathSpec::new(1.0, 1.0, 1.0).unwrap();
        let gen = birth_death_generator(&b, &FockTruncation::new(80));
        let ss = thermal_vector(1.0, 80);
        let r = apply_kernel(&gen.to_dense(), &ss);
        // The last row differs only by the dropped tail above n_max.
        for v in &r[..80] {
            assert!(v.abs() < 1e-12);
        }
        for n in 1..=80 {
            let flux_down = gen.rate_down(n) * ss[n];
            let flux_up = gen.rate_up(n - 1) * ss[n - 1];
            assert!((flux_down - flux_up).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_dense_exponential() {
        let b = BathSpec::new(0.8, 0.6, 1.0).unwrap();
        let gen = birth_death_generator(&b, &FockTruncation::new(30));
        for t in [0.0, 0.01, 0.7, 5.0] {
            let k = transition_kernel(&gen, t, 30);
            let reference = dense_kernel(&gen, t);
            assert!((k - reference).abs().max() < 1e-11, "t={t}");
        }
    }

    #[test]
    fn zero_temperature_mean_decay() {
        let b = bath(0.0);
        let gen = birth_death_generator(&b, &FockTruncation::new(120));
        let p0 = thermal_vector(2.0, 120);
        let norm: f64 = p0.iter().sum();
        let p0: Vec<f64> = p0.iter().map(|x| x / norm).collect();
        let nbar = mean_of(&p0);
        for t in [0.0, 0.3, 1.0, 4.0] {
            let ev = evolve_populations(&gen, &p0, t, 1e-10).unwrap();
            assert!((mean_of(&ev.p) - nbar * (-t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn relaxes_to_bath_state() {
        let b = bath(1.0);
        let gen = birth_death_generator(&b, &FockTruncation::new(100));
        let mut p0 = vec![0.0; 101];
        p0[5] = 1.0;
        let ev = evolve_populations(&gen, &p0, 60.0, 1e-10).unwrap();
        let ss = thermal_vector(1.0, 100);
        let err = ev.p.iter().zip(&ss).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn semigroup() {
        let b = BathSpec::new(1.2, 0.4, 1.0).unwrap();
        let gen = birth_death_generator(&b, &FockTruncation::new(60));
        let t1 = transition_kernel(&gen, 0.4, 60);
        let t2 = transition_kernel(&gen, 1.1, 60);
        let t12 = transition_kernel(&gen, 1.5, 60);
        assert!((&t2 * &t1 - t12).abs().max() < 1e-9);
    }

    #[test]
    fn heat_zero_time_and_mean_identity() {
        let th = ThermalState::new(1.0, 1.0).unwrap();
        let trunc = FockTruncation {
            leakage_tol: 1e-12,
            ..Default::default()
        };
        let h0 = heat_distribution(&bath(0.0), &th, 0.0, &trunc).unwrap();
        assert_eq!(h0.atoms.len(), 1);
        assert_eq!(h0.atoms[0].q, 0.0);
        assert!((h0.atoms[0].p - 1.0).abs() < 1e-11);

        for n_env in [0.0, 1.0, 2.5] {
            let b = bath(n_env);
            let h = heat_distribution(&b, &th, 0.8, &trunc).unwrap();
            let expected = mean_occupation(&b, 1.0, 0.8) - 1.0;
            assert!((h.mean() - expected).abs() < 1e-9, "{} {}", h.mean(), expected);
        }

        let h = heat_distribution(&bath(1.0), &th, 0.8, &trunc).unwrap();
        assert!(h.mean().abs() < 1e-9);
        let exchanged: f64 = h.atoms.iter().filter(|a| a.q != 0.0).map(|a| a.p).sum();
        assert!(exchanged > 0.1);
    }
}
