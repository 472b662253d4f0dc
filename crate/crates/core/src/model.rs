//! Units, thermal occupations and the trap Hamiltonian in a truncated Fock basis.
//!
//! Internally ħ = M = 1, times are in μs and angular frequencies in rad/μs, so
//! energies and work carry units of ħ·rad/μs.
//!
//! Matrices are expressed in the Fock basis of a *reference* frequency. The
//! Hamiltonian `p²/2 + ω²x²/2` only couples `n ↔ n±2`, so every matrix splits
//! into an even and an odd parity sector, each of which is tridiagonal.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on eigenvalues against the analytic ladder `ω(n + 1/2)`.
pub const EIGENVALUE_TOL: f64 = 1e-9;

/// How a configured frequency value maps to an angular frequency in rad/μs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyConvention {
    /// The value is the angular frequency ω in rad/μs.
    #[serde(rename = "mrad")]
    MradPerUs,
    /// The value is an ordinary frequency ν in MHz, ω = 2πν.
    #[serde(rename = "mhz")]
    #[default]
    MhzOrdinary,
}

impl FrequencyConvention {
    pub fn to_angular(self, value: f64) -> f64 {
        match self {
            FrequencyConvention::MradPerUs => value,
            FrequencyConvention::MhzOrdinary => 2.0 * PI * value,
        }
    }

    pub fn from_angular(self, omega: f64) -> f64 {
        match self {
            FrequencyConvention::MradPerUs => omega,
            FrequencyConvention::MhzOrdinary => omega / (2.0 * PI),
        }
    }
}


#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitSystem {
    pub convention: FrequencyConvention,
    /// Angular frequency (rad/μs) whose Fock basis is used for matrices.
    pub reference_frequency: f64,
}

impl UnitSystem {
    pub fn new(convention: FrequencyConvention, reference_frequency: f64) -> Result<Self> {
        if !(reference_frequency > 0.0) {
            return Err(Error::InvalidInput(format!(
                "reference frequency must be positive, got {reference_frequency}"
            )));
        }
        Ok(UnitSystem {
            convention,
            reference_frequency,
        })
    }
}

/// Thermal motional state at trap frequency `omega0`.
///
/// `nbar = 0` is the zero-temperature limit with `beta = +inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalState {
    pub nbar: f64,
    pub omega0: f64,
    pub beta: f64,
}

impl ThermalState {
    pub fn new(nbar: f64, omega0: f64) -> Result<Self> {
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return Err(Error::InvalidInput(format!("nbar must be >= 0, got {nbar}")));
        }
        if !(omega0 > 0.0) {
            return Err(Error::InvalidInput(format!("omega0 must be > 0, got {omega0}")));
        }
        let beta = match beta_from_nbar(nbar, omega0) {
            Ok(b) => b,
            Err(Error::ZeroTemperature) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        Ok(ThermalState { nbar, omega0, beta })
    }

    /// Thermal state at `omega` with a given inverse temperature.
    pub fn from_beta(beta: f64, omega: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
        }
        if !(omega > 0.0) {
            return Err(Error::InvalidInput(format!("omega must be > 0, got {omega}")));
        }
        let nbar = if beta.is_infinite() {
            0.0
        } else {
            1.0 / (beta * omega).exp_m1()
        };
        Ok(ThermalState {
            nbar,
            omega0: omega,
            beta,
        })
    }

    pub fn occupation(&self, n: usize) -> f64 {
        thermal_occupation(self, n)
    }

    /// Probability mass above level `n`, i.e. `1 - sum_{k<=n} P_k`.
    pub fn tail_above(&self, n: usize) -> f64 {
        if self.nbar == 0.0 {
            return 0.0;
        }
        (-((n + 1) as f64) * (1.0 / self.nbar).ln_1p()).exp()
    }

    /// First moment carried above level `n`, `sum_{k>n} k P_k`.
    pub fn moment_above(&self, n: usize) -> f64 {
        self.tail_above(n) * ((n + 1) as f64 + self.nbar)
    }

    /// Smallest level whose tail mass is at most `tol`.
    pub fn levels_for_tail(&self, tol: f64) -> usize {
        let mut n = 0;
        while self.tail_above(n) > tol {
            n += 1;
        }
        n
    }
}

/// Geometric occupation `nbar^n / (nbar+1)^(n+1)`.
pub fn thermal_occupation(state: &ThermalState, n: usize) -> f64 {
    let nbar = state.nbar;
    if nbar == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ln = n as f64 * nbar.ln() - (n + 1) as f64 * nbar.ln_1p();
    ln.exp()
}

/// Inverse temperature for a Bose occupation `nbar` at frequency `omega0`.
pub fn beta_from_nbar(nbar: f64, omega0: f64) -> Result<f64> {
    if !(omega0 > 0.0) {
        return Err(Error::InvalidInput(format!("omega0 must be > 0, got {omega0}")));
    }
    if nbar == 0.0 {
        return Err(Error::ZeroTemperature);
    }
    if !(nbar > 0.0) {
        return Err(Error::InvalidInput(format!("nbar must be > 0, got {nbar}")));
    }
    Ok((1.0 / nbar).ln_1p() / omega0)
}

/// Bose occupation at inverse temperature `beta`.
pub fn nbar_from_beta(beta: f64, omega0: f64) -> f64 {
    1.0 / (beta * omega0).exp_m1()
}

pub fn energy_level(omega: f64, n: usize) -> f64 {
    omega * (n as f64 + 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FockTruncation {
    pub n_max: usize,
    pub leakage_tol: f64,
    /// Upper bound for automatic growth of `n_max`.
    pub n_max_limit: usize,
}

impl Default for FockTruncation {
    fn default() -> Self {
        FockTruncation {
            n_max: 64,
            leakage_tol: 1e-8,
            n_max_limit: 512,
        }
    }
}

impl FockTruncation {
    pub fn new(n_max: usize) -> Self {
        FockTruncation {
            n_max,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// Width of the band of top Fock states whose population is read as
    /// leakage out of the truncated space.
    pub fn edge_band(&self) -> usize {
        (self.dim() / 8).max(4).min(self.dim())
    }
}

/// Real symmetric tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
        }
        for (i, &e) in self.off.iter().enumerate() {
            m[(i, i + 1)] = e;
            m[(i + 1, i)] = e;
        }
        m
    }

    /// `alpha * self + beta * other`, entrywise.
    pub fn combine(&self, alpha: f64, other: &Tridiagonal, beta: f64) -> Tridiagonal {
        Tridiagonal {
            diag: self
                .diag
                .iter()
                .zip(&other.diag)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
            off: self
                .off
                .iter()
                .zip(&other.off)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        }
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut radius = 0.0;
            if i > 0 {
                radius += self.off[i - 1].abs();
            }
            if i + 1 < n {
                radius += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - radius);
            hi = hi.max(self.diag[i] + radius);
        }
        (lo, hi)
    }
}

/// Fock index of entry `k` in the parity sector `parity`.
#[inline]
pub fn sector_level(parity: usize, k: usize) -> usize {
    2 * k + parity
}

/// Number of Fock states of a given parity in `0..=n_max`.
pub fn sector_len(n_max: usize, parity: usize) -> usize {
    if parity > n_max {
        0
    } else {
        (n_max - parity) / 2 + 1
    }
}

/// Kinetic (`p²/2`) and potential-shape (`x²/2`) parts of the Hamiltonian in
/// one parity sector of the reference Fock basis; `H(ω) = kinetic + ω² · potential`.
#[derive(Clone, Debug)]
pub struct SectorOperators {
    pub parity: usize,
    pub kinetic: Tridiagonal,
    pub potential: Tridiagonal,
}

impl SectorOperators {
    pub fn new(omega_ref: f64, n_max: usize, parity: usize) -> Self {
        let len = sector_len(n_max, parity);
        let mut kinetic = Tridiagonal {
            diag: Vec::with_capacity(len),
            off: Vec::with_capacity(len.saturating_sub(1)),
        };
        let mut potential = kinetic.clone();
        for k in 0..len {
            let n = sector_level(parity, k) as f64;
            kinetic.diag.push((2.0 * n + 1.0) * omega_ref / 4.0);
            potential.diag.push((2.0 * n + 1.0) / (4.0 * omega_ref));
            if k + 1 < len {
                let ladder = ((n + 1.0) * (n + 2.0)).sqrt();
                kinetic.off.push(-omega_ref / 4.0 * ladder);
                potential.off.push(ladder / (4.0 * omega_ref));
            }
        }
        SectorOperators {
            parity,
            kinetic,
            potential,
        }
    }

    pub fn hamiltonian(&self, omega_sq: f64) -> Tridiagonal {
        self.kinetic.combine(1.0, &self.potential, omega_sq)
    }
}

/// Both parity sectors of the reference basis.
pub fn sector_operators(omega_ref: f64, n_max: usize) -> [SectorOperators; 2] {
    [
        SectorOperators::new(omega_ref, n_max, 0),
        SectorOperators::new(omega_ref, n_max, 1),
    ]
}

/// Matrix of `p²/2 + ω²x²/2` in the Fock basis of `reference.reference_frequency`.
pub fn hamiltonian_matrix(omega: f64, reference: &UnitSystem, trunc: &FockTruncation) -> DMatrix<f64> {
    assert!(omega > 0.0, "omega must be positive");
    let dim = trunc.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for sector in sector_operators(reference.reference_frequency, trunc.n_max) {
        let block = sector.hamiltonian(omega * omega);
        for k in 0..block.len() {
            let i = sector_level(sector.parity, k);
            h[(i, i)] = block.diag[k];
            if k + 1 < block.len() {
                let j = sector_level(sector.parity, k + 1);
                h[(i, j)] = block.off[k];
                h[(j, i)] = block.off[k];
            }
        }
    }
    h
}

/// Eigenstates of the trap Hamiltonian at `omega`, written in the reference basis.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    pub omega: f64,
    pub reference_frequency: f64,
    pub n_max: usize,
    /// Column `n` holds eigenstate `n` in reference-basis coordinates.
    pub transform: DMatrix<f64>,
    pub energies: Vec<f64>,
    /// Largest `n` such that eigenstates `0..=n` reproduce the analytic
    /// spectrum and keep their weight away from the truncation edge.
    pub n_reliable: usize,
}

impl EigenBasis {
    pub fn column(&self, n: usize) -> nalgebra::DVectorView<'_, f64> {
        self.transform.column(n)
    }
}

/// Diagonalizes the trap Hamiltonian at `omega` in the Fock basis of `omega_ref`.
///
/// Each eigenvector is normalized so that its largest-magnitude coefficient is
/// positive. Fails if not even the ground state is representable.
pub fn eigenbasis_of(omega: f64, omega_ref: f64, trunc: &FockTruncation) -> Result<EigenBasis> {
    if !(omega > 0.0) || !(omega_ref > 0.0) {
        return Err(Error::InvalidInput(format!(
            "frequencies must be positive (omega={omega}, reference={omega_ref})"
        )));
    }
    let dim = trunc.dim();
    let mut transform = DMatrix::zeros(dim, dim);
    let mut energies = vec![0.0; dim];

    if (omega - omega_ref).abs() <= 1e-15 * omega_ref {
        for n in 0..dim {
            transform[(n, n)] = 1.0;
            energies[n] = energy_level(omega, n);
        }
    } else {
        for sector in sector_operators(omega_ref, trunc.n_max) {
            let dense = sector.hamiltonian(omega * omega).to_dense();
            let eig = SymmetricEigen::new(dense);
            let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            for (rank, &col) in order.iter().enumerate() {
                let n = sector_level(sector.parity, rank);
                energies[n] = eig.eigenvalues[col];
                let v = eig.eigenvectors.column(col);
                let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
                let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
                for (k, &x) in v.iter().enumerate() {
                    transform[(sector_level(sector.parity, k), n)] = sign * x;
                }
            }
        }
    }

    let band = trunc.edge_band();
    let mut n_reliable = None;
    for n in 0..dim {
        let spectral_ok = (energies[n] - energy_level(omega, n)).abs() <= EIGENVALUE_TOL;
        let edge: f64 = (dim - band..dim).map(|k| transform[(k, n)].powi(2)).sum();
        if spectral_ok && edge <= trunc.leakage_tol {
            n_reliable = Some(n);
        } else {
            break;
        }
    }
    let n_reliable = n_reliable.ok_or_else(|| {
        Error::Truncation(format!(
            "n_max={} cannot represent the ground state at omega={omega} in the basis of {omega_ref}",
            trunc.n_max
        ))
    })?;

    Ok(EigenBasis {
        omega,
        reference_frequency: omega_ref,
        n_max: trunc.n_max,
        transform,
        energies,
        n_reliable,
    })
}
