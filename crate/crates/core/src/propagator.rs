//! Unitary evolution under a ramped trap frequency and the resulting
//! two-point transition probabilities `P[m][n] = |<m, ω_τ| U |n, ω_0>|²`.
//!
//! Evolution runs in the Fock basis of the geometric-mean frequency
//! `sqrt(ω_0 ω_τ)`, which splits the squeezing evenly between the initial and
//! final eigenbases. Each parity sector is propagated separately with a
//! fourth-order commutator-free Magnus step, composed into a sixth-order
//! step by a symmetric triple jump; the exponential of every stage is
//! applied by a Chebyshev expansion on the tridiagonal sector Hamiltonian.
//! Steps are doubled until the evolved columns stop changing.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::expm_apply;
use crate::model::{
    eigenbasis_of, sector_len, sector_level, sector_operators, EigenBasis, FockTruncation,
    SectorOperators,
};

pub const DEFAULT_INTEGRATOR_TOL: f64 = 1e-9;
const MAX_STEPS: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    #[default]
    LinearInOmegaSquared,
}

/// Trap-frequency protocol: `ω²(t)` interpolates linearly from `ω_0²` to `ω_τ²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RampSchedule {
    pub omega_initial: f64,
    pub omega_final: f64,
    pub tau: f64,
    pub shape: RampShape,
}

impl RampSchedule {
    pub fn new(omega_initial: f64, omega_final: f64, tau: f64) -> Result<Self> {
        if !(omega_initial > 0.0 && omega_final > 0.0) {
            return Err(Error::InvalidInput(format!(
                "ramp endpoints must be positive (got {omega_initial}, {omega_final})"
            )));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!("ramp duration must be positive, got {tau}")));
        }
        Ok(RampSchedule {
            omega_initial,
            omega_final,
            tau,
            shape: RampShape::LinearInOmegaSquared,
        })
    }

    /// The time-reversed schedule, `ω_τ → ω_0` over the same duration.
    pub fn reversed(&self) -> Self {
        RampSchedule {
            omega_initial: self.omega_final,
            omega_final: self.omega_initial,
            ..*self
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.omega_initial == self.omega_final
    }

    pub fn reference_frequency(&self) -> f64 {
        (self.omega_initial * self.omega_final).sqrt()
    }

    pub fn omega_squared_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.tau).contains(&t) {
            return Err(Error::InvalidInput(format!(
                "time {t} outside ramp interval [0, {}]",
                self.tau
            )));
        }
        Ok(self.omega_sq(t))
    }

    #[inline]
    fn omega_sq(&self, t: f64) -> f64 {
        let w0 = self.omega_initial * self.omega_initial;
        let w1 = self.omega_final * self.omega_final;
        if t == self.tau {
            return w1;
        }
        w0 + (w1 - w0) * (t / self.tau)
    }
}

pub fn omega_squared_at(ramp: &RampSchedule, t: f64) -> Result<f64> {
    ramp.omega_squared_at(t)
}

#[derive(Clone, Debug)]
pub struct PropagationResult {
    /// `U |n, ω_0>` for `n = 0..columns`, one column each, in the reference basis.
    pub evolved: DMatrix<Complex64>,
    pub reference_frequency: f64,
    pub n_max: usize,
    /// Largest population found in the top edge band of the truncated space.
    pub leakage: f64,
    pub steps_taken: usize,
    /// Max column-norm change at the last step doubling.
    pub tolerance_achieved: f64,
}

impl PropagationResult {
    /// `max |(E†E - I)_{ij}|` over the evolved columns.
    pub fn unitarity_residual(&self) -> f64 {
        let gram = self.evolved.adjoint() * &self.evolved;
        let mut worst = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - e).norm());
            }
        }
        worst
    }
}

/// Evolves the initial eigenstates `0..=n_columns` over the ramp.
pub fn propagate_unitary(
    ramp: &RampSchedule,
    trunc: &FockTruncation,
    n_columns: usize,
    tol: f64,
) -> Result<PropagationResult> {
    let reference = ramp.reference_frequency();
    let initial = eigenbasis_of(ramp.omega_initial, reference, trunc)?;
    propagate_from(ramp, trunc, &initial, n_columns, tol)
}

fn propagate_from(
    ramp: &RampSchedule,
    trunc: &FockTruncation,
    initial: &EigenBasis,
    n_columns: usize,
    tol: f64,
) -> Result<PropagationResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("integrator tolerance must be positive, got {tol}")));
    }
    if n_columns > trunc.n_max {
        return Err(Error::InvalidInput(format!(
            "{n_columns} columns requested from a space with n_max={}",
            trunc.n_max
        )));
    }
    let ops = sector_operators(initial.reference_frequency, trunc.n_max);
    let start: [Vec<Complex64>; 2] =
        [0, 1].map(|p| sector_block(initial, trunc.n_max, n_columns, p));

    let (evolved, steps, achieved) = if ramp.is_stationary() {
        let phased = [0, 1].map(|p| {
            let mut block = start[p].clone();
            let len = sector_len(trunc.n_max, p);
            for (j, col) in block.chunks_mut(len.max(1)).enumerate() {
                let n = sector_level(p, j);
                let phase = Complex64::new(0.0, -initial.energies[n] * ramp.tau).exp();
                col.iter_mut().for_each(|v| *v *= phase);
            }
            block
        });
        (phased, 0, 0.0)
    } else {
        let mut steps = initial_steps(ramp);
        let mut coarse = evolve(ramp, &ops, &start, steps);
        loop {
            let fine = evolve(ramp, &ops, &start, 2 * steps);
            let diff = max_column_difference(&coarse, &fine, trunc.n_max);
            steps *= 2;
            if diff < tol {
                break (fine, steps, diff);
            }
            if 2 * steps > MAX_STEPS {
                return Err(Error::NonConvergence {
                    steps,
                    difference: diff,
                });
            }
            coarse = fine;
        }
    };

    let dim = trunc.dim();
    let mut out = DMatrix::zeros(dim, n_columns + 1);
    for (p, block) in evolved.iter().enumerate() {
        let len = sector_len(trunc.n_max, p);
        for (j, col) in block.chunks(len.max(1)).enumerate() {
            let n = sector_level(p, j);
            for (k, v) in col.iter().enumerate() {
                out[(sector_level(p, k), n)] = *v;
            }
        }
    }
    let band = trunc.edge_band();
    let leakage = (0..=n_columns)
        .map(|n| (dim - band..dim).map(|k| out[(k, n)].norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max);

    Ok(PropagationResult {
        evolved: out,
        reference_frequency: initial.reference_frequency,
        n_max: trunc.n_max,
        leakage,
        steps_taken: steps,
        tolerance_achieved: achieved,
    })
}

fn initial_steps(ramp: &RampSchedule) -> usize {
    let w = ramp.omega_initial.max(ramp.omega_final);
    ((ramp.tau * w / 8.0).ceil() as usize).clamp(2, MAX_STEPS / 4)
}

/// Column-major block of the initial eigenstates with parity `p`, restricted to sector `p`.
fn sector_block(basis: &EigenBasis, n_max: usize, n_columns: usize, p: usize) -> Vec<Complex64> {
    let len = sector_len(n_max, p);
    let mut block = Vec::new();
    let mut n = p;
    while n <= n_columns {
        for k in 0..len {
            block.push(Complex64::new(basis.transform[(sector_level(p, k), n)], 0.0));
        }
        n += 2;
    }
    block
}

// Blanes–Moan commutator-free fourth-order coefficients.
const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // sqrt(3)/6
const CF_A1: f64 = 0.25 - GAUSS_OFFSET;
const CF_A2: f64 = 0.25 + GAUSS_OFFSET;

// Triple-jump weights lifting the symmetric fourth-order step to sixth order.
const JUMP_OUTER: f64 = 1.174_671_758_089_363_5; // 1 / (2 - 2^(1/5))
const JUMP_INNER: f64 = 1.0 - 2.0 * JUMP_OUTER;

/// One fourth-order step from `t0` over `h` (`h` may be negative).
fn cf4_step(ramp: &RampSchedule, op: &SectorOperators, t0: f64, h: f64, block: &mut [Complex64]) {
    let f1 = ramp.omega_sq(t0 + (0.5 - GAUSS_OFFSET) * h);
    let f2 = ramp.omega_sq(t0 + (0.5 + GAUSS_OFFSET) * h);
    // First stage weights the earlier node.
    let g_first = CF_A2 * f1 + CF_A1 * f2;
    let g_second = CF_A1 * f1 + CF_A2 * f2;
    let m1 = op.kinetic.combine(0.5 * h, &op.potential, g_first * h);
    expm_apply(&m1, block);
    let m2 = op.kinetic.combine(0.5 * h, &op.potential, g_second * h);
    expm_apply(&m2, block);
}

fn cf6_step(ramp: &RampSchedule, op: &SectorOperators, t0: f64, h: f64, block: &mut [Complex64]) {
    let (a, b) = (JUMP_OUTER * h, JUMP_INNER * h);
    cf4_step(ramp, op, t0, a, block);
    cf4_step(ramp, op, t0 + a, b, block);
    cf4_step(ramp, op, t0 + a + b, a, block);
}

type Stepper = fn(&RampSchedule, &SectorOperators, f64, f64, &mut [Complex64]);

fn evolve(
    ramp: &RampSchedule,
    ops: &[SectorOperators; 2],
    start: &[Vec<Complex64>; 2],
    steps: usize,
) -> [Vec<Complex64>; 2] {
    evolve_with(cf6_step, ramp, ops, start, steps)
}

fn evolve_with(
    step: Stepper,
    ramp: &RampSchedule,
    ops: &[SectorOperators; 2],
    start: &[Vec<Complex64>; 2],
    steps: usize,
) -> [Vec<Complex64>; 2] {
    let run = |p: usize| {
        let mut block = start[p].clone();
        if block.is_empty() {
            return block;
        }
        let h = ramp.tau / steps as f64;
        for s in 0..steps {
            step(ramp, &ops[p], s as f64 * h, h, &mut block);
        }
        block
    };
    let (even, odd) = rayon::join(|| run(0), || run(1));
    [even, odd]
}

fn max_column_difference(a: &[Vec<Complex64>; 2], b: &[Vec<Complex64>; 2], n_max: usize) -> f64 {
    let mut worst = 0.0f64;
    for p in 0..2 {
        let len = sector_len(n_max, p).max(1);
        for (ca, cb) in a[p].chunks(len).zip(b[p].chunks(len)) {
            let d: f64 = ca.iter().zip(cb).map(|(x, y)| (x - y).norm_sqr()).sum();
            worst = worst.max(d.sqrt());
        }
    }
    worst
}

/// Two-point transition probabilities for initial levels `n <= n_report`.
///
/// Rows run over every final eigenstate that is reliable at the truncation
/// used, which is generally more than `n_report + 1`: a fast ramp sends
/// level `n` well above `n`.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    /// `probs[(m, n)] = P(n → m)`.
    pub probs: DMatrix<f64>,
    pub ramp: RampSchedule,
    pub trunc: FockTruncation,
    pub column_deficits: Vec<f64>,
    pub leakage: f64,
    pub steps_taken: usize,
    pub unitarity_residual: f64,
}

impl TransitionMatrix {
    pub fn n_report(&self) -> usize {
        self.probs.ncols() - 1
    }

    pub fn n_rows(&self) -> usize {
        self.probs.nrows()
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        if m < self.probs.nrows() && n < self.probs.ncols() {
            self.probs[(m, n)]
        } else {
            0.0
        }
    }

    /// The `(n_report+1)²` block `m, n <= n_report`.
    pub fn square(&self) -> DMatrix<f64> {
        let k = self.probs.ncols();
        self.probs.view((0, 0), (k.min(self.probs.nrows()), k)).into_owned()
    }

    pub fn max_deficit(&self) -> f64 {
        self.column_deficits.iter().copied().fold(0.0, f64::max)
    }
}

/// Computes `P[m][n]`, doubling `n_max` (up to `trunc.n_max_limit`) until
/// the evolved columns stay clear of the truncation edge and every column
/// deficit is within `trunc.leakage_tol`.
pub fn transition_matrix(
    ramp: &RampSchedule,
    trunc: &FockTruncation,
    n_report: usize,
    tol: f64,
) -> Result<TransitionMatrix> {
    if 2 * n_report > trunc.n_max_limit {
        return Err(Error::InvalidInput(format!(
            "n_report={n_report} needs n_max >= {} but the limit is {}",
            2 * n_report,
            trunc.n_max_limit
        )));
    }
    if ramp.is_stationary() {
        return Ok(identity_transitions(ramp, trunc, n_report));
    }

    let mut current = FockTruncation {
        n_max: trunc.n_max.max(2 * n_report),
        ..*trunc
    };
    let mut last_problem;
    loop {
        match transition_attempt(ramp, &current, n_report, tol)? {
            Ok(tm) => return Ok(tm),
            Err(problem) => last_problem = problem,
        }
        if current.n_max >= trunc.n_max_limit {
            return Err(Error::Truncation(format!(
                "{last_problem} at n_max={} (limit {})",
                current.n_max, trunc.n_max_limit
            )));
        }
        current.n_max = (current.n_max * 2).min(trunc.n_max_limit);
    }
}

fn identity_transitions(ramp: &RampSchedule, trunc: &FockTruncation, n_report: usize) -> TransitionMatrix {
    TransitionMatrix {
        probs: DMatrix::identity(n_report + 1, n_report + 1),
        ramp: *ramp,
        trunc: *trunc,
        column_deficits: vec![0.0; n_report + 1],
        leakage: 0.0,
        steps_taken: 0,
        unitarity_residual: 0.0,
    }
}

/// Outer `Err` is fatal; inner `Err` asks for a larger truncation.
fn transition_attempt(
    ramp: &RampSchedule,
    trunc: &FockTruncation,
    n_report: usize,
    tol: f64,
) -> Result<std::result::Result<TransitionMatrix, String>> {
    let reference = ramp.reference_frequency();
    let initial = match eigenbasis_of(ramp.omega_initial, reference, trunc) {
        Ok(b) => b,
        Err(Error::Truncation(msg)) => return Ok(Err(msg)),
        Err(e) => return Err(e),
    };
    let fin = match eigenbasis_of(ramp.omega_final, reference, trunc) {
        Ok(b) => b,
        Err(Error::Truncation(msg)) => return Ok(Err(msg)),
        Err(e) => return Err(e),
    };
    if initial.n_reliable < n_report || fin.n_reliable < n_report {
        return Ok(Err(format!(
            "eigenstates reliable only up to {} (initial) / {} (final), need {n_report}",
            initial.n_reliable, fin.n_reliable
        )));
    }
    let prop = propagate_from(ramp, trunc, &initial, n_report, tol)?;
    if prop.leakage > trunc.leakage_tol {
        return Ok(Err(format!("edge leakage {:e}", prop.leakage)));
    }

    let rows = fin.n_reliable + 1;
    let mut probs = DMatrix::zeros(rows, n_report + 1);
    for n in 0..=n_report {
        for m in (n % 2..rows).step_by(2) {
            let mut amp = Complex64::new(0.0, 0.0);
            for k in (m % 2..=trunc.n_max).step_by(2) {
                amp += prop.evolved[(k, n)] * fin.transform[(k, m)];
            }
            probs[(m, n)] = amp.norm_sqr();
        }
    }
    let column_deficits: Vec<f64> = (0..=n_report)
        .map(|n| (1.0 - probs.column(n).sum()).max(0.0))
        .collect();
    let worst = column_deficits.iter().copied().fold(0.0, f64::max);
    if worst > trunc.leakage_tol {
        return Ok(Err(format!("column deficit {worst:e}")));
    }
    Ok(Ok(TransitionMatrix {
        probs,
        ramp: *ramp,
        trunc: *trunc,
        column_deficits,
        leakage: prop.leakage,
        steps_taken: prop.steps_taken,
        unitarity_residual: prop.unitarity_residual(),
    }))
}

/// Overlaps `<m, ω_1 | n, ω_0>` for `m <= m_max`, `n <= n_max`, from the
/// Bogoliubov relation `a_1 = μ a_0 + ν a_0†`.
pub fn sudden_overlaps(omega0: f64, omega1: f64, m_max: usize, n_max: usize) -> DMatrix<f64> {
    let ratio = (omega1 / omega0).sqrt();
    let mu = 0.5 * (ratio + 1.0 / ratio);
    let nu = 0.5 * (ratio - 1.0 / ratio);
    let mut s = DMatrix::zeros(m_max + 1, n_max + 1);
    s[(0, 0)] = mu.powf(-0.5);
    for m in 1..=m_max {
        if m >= 2 {
            let mm = (m - 1) as f64;
            s[(m, 0)] = nu / mu * (mm / (mm + 1.0)).sqrt() * s[(m - 2, 0)];
        }
    }
    for n in 0..n_max {
        let nf = n as f64;
        for m in 0..=m_max {
            let down = if m > 0 { (m as f64).sqrt() * s[(m - 1, n)] } else { 0.0 };
            let side = if n > 0 { nu * nf.sqrt() * s[(m, n - 1)] } else { 0.0 };
            s[(m, n + 1)] = (down - side) / (mu * (nf + 1.0).sqrt());
        }
    }
    s
}

/// Sudden-quench probability `|<m, ω_1 | n, ω_0>|²`.
pub fn sudden_transition(omega0: f64, omega1: f64, n: usize, m: usize) -> Result<f64> {
    if !(omega0 > 0.0 && omega1 > 0.0) {
        return Err(Error::InvalidInput("frequencies must be positive".into()));
    }
    Ok(sudden_overlaps(omega0, omega1, m, n)[(m, n)].powi(2))
}

/// The same probability by Gauss–Hermite quadrature of the eigenfunction
/// product, which is exact for the polynomial-times-Gaussian integrand.
pub fn sudden_transition_quadrature(omega0: f64, omega1: f64, n: usize, m: usize) -> Result<f64> {
    if !(omega0 > 0.0 && omega1 > 0.0) {
        return Err(Error::InvalidInput("frequencies must be positive".into()));
    }
    let s = 0.5 * (omega0 + omega1);
    let (y, w) = crate::special::gauss_hermite((m + n) / 2 + 16);
    let mut overlap = 0.0;
    for (yi, wi) in y.iter().zip(&w) {
        let x = yi / s.sqrt();
        let a = crate::special::hermite_functions(omega1, x, m)[m];
        let b = crate::special::hermite_functions(omega0, x, n)[n];
        overlap += wi * a * b * (yi * yi).exp();
    }
    overlap /= s.sqrt();
    Ok(overlap * overlap)
}
