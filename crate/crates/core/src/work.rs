//! Two-point-measurement work statistics, the exponential work average and
//! the forward/backward fluctuation relation.

use crate::error::{Error, Result};
use crate::model::{energy_level, FockTruncation, ThermalState};
use crate::propagator::{transition_matrix, RampSchedule, TransitionMatrix};

/// Merge threshold for work values, in units of ħω_0.
pub const DEFAULT_MERGE_TOL: f64 = 1e-9;
/// Atoms below this probability are ignored by the fluctuation check.
pub const SUPPORT_FLOOR: f64 = 1e-12;
/// Default bound on the relative error of `<e^{-βW}>` from omitted columns.
pub const DEFAULT_COLUMN_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkAtom {
    /// Work in internal energy units (ħ·rad/μs).
    pub w: f64,
    pub p: f64,
}

#[derive(Clone, Debug)]
pub struct WorkDistribution {
    /// Sorted by `w`, with coincident values merged.
    pub atoms: Vec<WorkAtom>,
    pub beta: f64,
    pub omega0: f64,
    pub omega_tau: f64,
    pub merge_tol: f64,
    /// `1 - Σp`: thermal tail beyond the reported levels plus truncation.
    pub deficit: f64,
}

impl WorkDistribution {
    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.p * a.w).sum()
    }

    /// Probability of the atom at `w` (zero if absent).
    pub fn probability_at(&self, w: f64) -> f64 {
        let tol = self.merge_tol * self.omega0;
        self.atoms
            .iter()
            .find(|a| (a.w - w).abs() <= tol)
            .map_or(0.0, |a| a.p)
    }

    /// Atoms as `(w / ħω_0, p)`.
    pub fn in_units_of_omega0(&self) -> Vec<(f64, f64)> {
        self.atoms.iter().map(|a| (a.w / self.omega0, a.p)).collect()
    }
}

/// Sorts `(w, p)` pairs and merges values closer than `tol`.
pub(crate) fn merge_atoms(mut raw: Vec<WorkAtom>, tol: f64) -> Vec<WorkAtom> {
    raw.sort_by(|a, b| a.w.total_cmp(&b.w));
    let mut out: Vec<WorkAtom> = Vec::with_capacity(raw.len());
    // Each cluster keeps the value of its first member so that merging is
    // not order-of-summation dependent.
    let mut anchor = f64::NAN;
    for a in raw {
        match out.last_mut() {
            Some(last) if (a.w - anchor).abs() <= tol => last.p += a.p,
            _ => {
                anchor = a.w;
                out.push(a);
            }
        }
    }
    out
}

/// Builds `P(W) = Σ_{m,n} δ(W - E_m^τ + E_n^0) P[m][n] P_n^0`.
///
/// The result is not renormalized. Fails if the missing mass exceeds the
/// thermal-tail budget plus the truncation budget, each `leakage_tol`.
pub fn work_distribution(thermal: &ThermalState, trans: &TransitionMatrix) -> Result<WorkDistribution> {
    let w0 = trans.ramp.omega_initial;
    let wt = trans.ramp.omega_final;
    if (thermal.omega0 - w0).abs() > 1e-12 * w0 {
        return Err(Error::BasisMismatch(format!(
            "thermal state at omega={} but ramp starts at {}",
            thermal.omega0, w0
        )));
    }
    let mut raw = Vec::new();
    for n in 0..=trans.n_report() {
        let pn = thermal.occupation(n);
        if pn == 0.0 {
            continue;
        }
        for m in 0..trans.n_rows() {
            let p = trans.get(m, n) * pn;
            if p > 0.0 {
                raw.push(WorkAtom {
                    w: energy_level(wt, m) - energy_level(w0, n),
                    p,
                });
            }
        }
    }
    let atoms = merge_atoms(raw, DEFAULT_MERGE_TOL * w0);
    let total: f64 = atoms.iter().map(|a| a.p).sum();
    let deficit = (1.0 - total).max(0.0);
    let budget = 2.0 * trans.trunc.leakage_tol;
    if deficit > budget {
        return Err(Error::Deficit { deficit, tol: budget });
    }
    Ok(WorkDistribution {
        atoms,
        beta: thermal.beta,
        omega0: w0,
        omega_tau: wt,
        merge_tol: DEFAULT_MERGE_TOL,
        deficit,
    })
}

/// Work distribution for perfectly adiabatic following, `P[m][n] = δ_mn`.
pub fn adiabatic_work_distribution(thermal: &ThermalState, omega_tau: f64, tail_tol: f64) -> WorkDistribution {
    let w0 = thermal.omega0;
    let top = thermal.levels_for_tail(tail_tol);
    let raw = (0..=top)
        .map(|n| WorkAtom {
            w: energy_level(omega_tau, n) - energy_level(w0, n),
            p: thermal.occupation(n),
        })
        .collect();
    let atoms = merge_atoms(raw, DEFAULT_MERGE_TOL * w0);
    let deficit = (1.0 - atoms.iter().map(|a| a.p).sum::<f64>()).max(0.0);
    WorkDistribution {
        atoms,
        beta: thermal.beta,
        omega0: w0,
        omega_tau,
        merge_tol: DEFAULT_MERGE_TOL,
        deficit,
    }
}

/// `<e^{-βW}> = Σ p e^{-βw}`, without renormalization. NaN at zero
/// temperature, where the average is not representable.
pub fn jarzynski_lhs(dist: &WorkDistribution) -> f64 {
    if dist.beta.is_infinite() {
        return f64::NAN;
    }
    dist.atoms.iter().map(|a| a.p * (-dist.beta * a.w).exp()).sum()
}

/// Relative error bound on `<e^{-βW}>` from the initial levels
/// `n > n_report` missing in `trans`.
///
/// The omitted term is `Σ_{n>N} Σ_m P[m][n] e^{-βE_m^τ} / Z_0`. For
/// `m <= N` the symmetry `P[m][n] = P[n][m]` turns the inner sum into the
/// computed tail of column `m` below row `N`; rows `m > N` are bounded by
/// `Σ_n P[m][n] <= 1`. The result is relative to `Z_τ / Z_0`.
pub fn jarzynski_column_error(trans: &TransitionMatrix, beta: f64) -> f64 {
    let big_n = trans.n_report();
    let wt = trans.ramp.omega_final;
    let x = (-beta * wt).exp();
    let z_tau = (-0.5 * beta * wt).exp() / (1.0 - x);
    let inner: f64 = (0..=big_n)
        .map(|m| {
            let below: f64 = (big_n + 1..trans.n_rows()).map(|k| trans.get(k, m)).sum();
            (-beta * energy_level(wt, m)).exp() * (below + trans.column_deficits[m])
        })
        .sum();
    inner / z_tau + x.powi(big_n as i32 + 1)
}

/// Transition matrix with enough initial levels that every state in
/// `thermals` has its thermal tail below `trunc.leakage_tol` and its
/// [`jarzynski_column_error`] below `column_tol`.
pub fn converged_transition_matrix(
    ramp: &RampSchedule,
    thermals: &[ThermalState],
    trunc: &FockTruncation,
    integrator_tol: f64,
    column_tol: f64,
) -> Result<TransitionMatrix> {
    if thermals.iter().any(|t| (t.omega0 - ramp.omega_initial).abs() > 1e-12 * ramp.omega_initial) {
        return Err(Error::BasisMismatch("thermal state and ramp start differ".into()));
    }
    let mut n_report = thermals
        .iter()
        .map(|t| t.levels_for_tail(0.5 * trunc.leakage_tol))
        .max()
        .unwrap_or(0)
        .max(1);
    loop {
        let tm = transition_matrix(ramp, trunc, n_report, integrator_tol)?;
        let worst = thermals
            .iter()
            .filter(|t| t.beta.is_finite())
            .map(|t| jarzynski_column_error(&tm, t.beta))
            .fold(0.0, f64::max);
        if worst <= column_tol {
            return Ok(tm);
        }
        let next = n_report + (n_report / 2).max(4);
        if 2 * next > trunc.n_max_limit {
            return Err(Error::Truncation(format!(
                "column error {worst:e} at n_report={n_report}; n_max limit {} reached",
                trunc.n_max_limit
            )));
        }
        n_report = next;
    }
}

/// Relative accuracy targeted for each atom above [`SUPPORT_FLOOR`] in
/// [`crooks_distributions`].
pub const CROOKS_ATOM_TOL: f64 = 1e-8;

/// Forward and time-reversed work distributions at inverse temperature
/// `beta`, the backward run starting thermal at `ω_τ`.
///
/// Atom-by-atom comparison needs more initial levels than the exponential
/// average: the omitted levels add at most their thermal tail to any atom,
/// so columns are extended until that tail is below
/// `CROOKS_ATOM_TOL · SUPPORT_FLOOR`, and further if the exponential average
/// is not yet within `column_tol`.
pub fn crooks_distributions(
    ramp: &RampSchedule,
    beta: f64,
    trunc: &FockTruncation,
    integrator_tol: f64,
    column_tol: f64,
) -> Result<(WorkDistribution, WorkDistribution)> {
    let one = |ramp: &RampSchedule| -> Result<WorkDistribution> {
        let th = ThermalState::from_beta(beta, ramp.omega_initial)?;
        let needed = th.levels_for_tail(CROOKS_ATOM_TOL * SUPPORT_FLOOR);
        let mut tm = transition_matrix(ramp, trunc, needed, integrator_tol)?;
        if jarzynski_column_error(&tm, beta) > column_tol {
            tm = converged_transition_matrix(ramp, &[th], trunc, integrator_tol, column_tol)?;
        }
        work_distribution(&th, &tm)
    };
    Ok((one(ramp)?, one(&ramp.reversed())?))
}

/// `ΔF = (1/β) ln[sinh(βω_τ/2) / sinh(βω_0/2)]`, switching to the zero-point
/// shift `(ω_τ - ω_0)/2` once `βω_0 > 50`.
pub fn free_energy_difference(omega0: f64, omega_tau: f64, beta: f64) -> Result<f64> {
    if !(omega0 > 0.0 && omega_tau > 0.0 && beta > 0.0) {
        return Err(Error::InvalidInput("frequencies and beta must be positive".into()));
    }
    if beta * omega0.min(omega_tau) > 50.0 {
        return Ok(0.5 * (omega_tau - omega0));
    }
    Ok(ln_sinh(0.5 * beta * omega_tau) - ln_sinh(0.5 * beta * omega0)).map(|d| d / beta)
}

fn ln_sinh(x: f64) -> f64 {
    // ln sinh x = x + ln(1 - e^{-2x}) - ln 2
    x + (-(-2.0 * x).exp()).ln_1p() - std::f64::consts::LN_2
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluctuationReport {
    pub jarzynski_lhs: f64,
    pub delta_f_exact: f64,
    /// `|<e^{-βW}> e^{βΔF} - 1|` for the forward protocol.
    pub deviation: f64,
    /// `max |ln[P_F(W)/P_B(-W)] - β(W - ΔF)|` over the shared support.
    pub crooks_max_log_error: f64,
    pub shared_atoms: usize,
}

/// Checks the forward/backward relation `P_F(W) / P_B(-W) = e^{β(W - ΔF)}`.
pub fn crooks_check(forward: &WorkDistribution, backward: &WorkDistribution) -> Result<FluctuationReport> {
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !rel(forward.beta, backward.beta)
        || !rel(forward.omega0, backward.omega_tau)
        || !rel(forward.omega_tau, backward.omega0)
    {
        return Err(Error::BasisMismatch(
            "backward distribution must reverse the forward endpoints at equal beta".into(),
        ));
    }
    let beta = forward.beta;
    let delta_f = free_energy_difference(forward.omega0, forward.omega_tau, beta)?;
    let tol = forward.merge_tol * forward.omega0.max(forward.omega_tau);
    let mut worst = 0.0f64;
    let mut shared = 0;
    for a in forward.atoms.iter().filter(|a| a.p > SUPPORT_FLOOR) {
        let Some(b) = backward
            .atoms
            .iter()
            .find(|b| b.p > SUPPORT_FLOOR && (b.w + a.w).abs() <= tol)
        else {
            continue;
        };
        shared += 1;
        let err = ((a.p / b.p).ln() - beta * (a.w - delta_f)).abs();
        worst = worst.max(err);
    }
    if shared == 0 {
        return Err(Error::InvalidInput("forward and backward distributions share no support".into()));
    }
    let lhs = jarzynski_lhs(forward);
    Ok(FluctuationReport {
        jarzynski_lhs: lhs,
        delta_f_exact: delta_f,
        deviation: (lhs * (beta * delta_f).exp() - 1.0).abs(),
        crooks_max_log_error: worst,
        shared_atoms: shared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FockTruncation;
    use crate::propagator::{transition_matrix, RampSchedule};

    #[test]
    fn free_energy_examples() {
        assert_eq!(free_energy_difference(1.0, 1.0, 0.7).unwrap(), 0.0);
        assert!((free_energy_difference(1.0, 3.0, 1e6).unwrap() - 1.0).abs() < 1e-15);
        let df = free_energy_difference(1.0, 3.0, 2f64.ln()).unwrap();
        assert!((df - 3.5f64.ln() / 2f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn free_energy_matches_partition_sums() {
        for (w0, wt, beta) in [(1.0, 3.0, 0.3), (2.0, 0.5, 1.1), (6.3, 18.8, 0.05)] {
            let z = |w: f64| (0..20000).map(|n| (-beta * energy_level(w, n)).exp()).sum::<f64>();
            let direct = -(z(wt) / z(w0)).ln() / beta;
            let closed = free_energy_difference(w0, wt, beta).unwrap();
            assert!((direct - closed).abs() < 1e-10, "{direct} {closed}");
        }
    }

    #[test]
    fn identity_ramp_gives_single_atom() {
        let thermal = ThermalState::new(0.0, 1.0).unwrap();
        let ramp = RampSchedule::new(1.0, 1.0, 1.0).unwrap();
        let tm = transition_matrix(&ramp, &FockTruncation::default(), 4, 1e-9).unwrap();
        let d = work_distribution(&thermal, &tm).unwrap();
        assert_eq!(d.atoms, vec![WorkAtom { w: 0.0, p: 1.0 }]);
    }

    #[test]
    fn basis_mismatch_rejected() {
        let thermal = ThermalState::new(1.0, 2.0).unwrap();
        let ramp = RampSchedule::new(1.0, 1.0, 1.0).unwrap();
        let tm = transition_matrix(&ramp, &FockTruncation::default(), 4, 1e-9).unwrap();
        assert!(matches!(work_distribution(&thermal, &tm), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn adiabatic_exponential_average() {
        let thermal = ThermalState::new(1.0, 1.0).unwrap();
        let d = adiabatic_work_distribution(&thermal, 3.0, 1e-16);
        for n in 0..6 {
            let w = 2.0 * (n as f64 + 0.5);
            assert!((d.probability_at(w) - 0.5f64.powi(n + 1)).abs() < 1e-15);
        }
        assert!((jarzynski_lhs(&d) - 2.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn merging_joins_coincident_values() {
        let atoms = merge_atoms(
            vec![
                WorkAtom { w: 1.0, p: 0.1 },
                WorkAtom { w: -1.0, p: 0.2 },
                WorkAtom { w: 1.0 + 1e-12, p: 0.3 },
            ],
            1e-9,
        );
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].w, -1.0);
        assert!((atoms[1].p - 0.4).abs() < 1e-15);
    }

    #[test]
    fn crooks_identity_protocol() {
        let thermal = ThermalState::new(1.0, 1.0).unwrap();
        let d = adiabatic_work_distribution(&thermal, 1.0, 1e-16);
        let r = crooks_check(&d, &d).unwrap();
        assert!(r.crooks_max_log_error < 1e-14);
        assert!(r.deviation < 1e-14);
    }

    #[test]
    fn crooks_adiabatic_pair() {
        let beta = 2f64.ln();
        let f = adiabatic_work_distribution(&ThermalState::from_beta(beta, 1.0).unwrap(), 3.0, 1e-16);
        let b = adiabatic_work_distribution(&ThermalState::from_beta(beta, 3.0).unwrap(), 1.0, 1e-16);
        let r = crooks_check(&f, &b).unwrap();
        assert!(r.crooks_max_log_error < 1e-8, "{}", r.crooks_max_log_error);
    }
}
