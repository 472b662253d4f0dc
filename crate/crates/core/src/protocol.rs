//! Seeded Monte Carlo emulation of the prepare / filter / ramp / filter
//! experiment, exponential-average estimation and feasibility numbers.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::bath::{heating_generator, transition_kernel};
use crate::error::{Error, Result};
use crate::filter::{acceptance_matrix, build_sequence, FilterParams, FilterSampler};
use crate::model::{energy_level, FockTruncation, ThermalState};
use crate::propagator::{transition_matrix, RampSchedule, TransitionMatrix, DEFAULT_INTEGRATOR_TOL};

/// Importance weights are clipped at this value.
pub const WEIGHT_CLIP: f64 = 1e3;
pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
/// D-state lifetime in ms.
pub const D_LIFETIME_MS: f64 = 1200.0;
/// Thermal mass the m_test grid must cover.
pub const GRID_COVERAGE: f64 = 1.0 - 1e-3;

const SHOT_BATCH: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub enum FilterModel {
    /// Acceptance is the identity.
    Ideal,
    /// Sideband pulse sequence sampled trajectory by trajectory.
    Pulsed { params: FilterParams, cycles: usize },
}

/// Trap heating at `rate` phonons/ms over `dwell` ms before the final measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatingModel {
    pub rate: f64,
    pub dwell: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub thermal: ThermalState,
    pub ramp: RampSchedule,
    pub trunc: FockTruncation,
    pub integrator_tol: f64,
    pub filter: FilterModel,
    /// The m_test grid is `0..=n_report` for both filters.
    pub n_report: usize,
    pub heating: Option<HeatingModel>,
    /// Target number of accepted shots.
    pub samples: usize,
    /// Upper bound on attempted shots.
    pub max_attempts: u64,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(thermal: ThermalState, ramp: RampSchedule, samples: usize, seed: u64) -> Self {
        ProtocolConfig {
            thermal,
            ramp,
            trunc: FockTruncation::default(),
            integrator_tol: DEFAULT_INTEGRATOR_TOL,
            filter: FilterModel::Ideal,
            n_report: thermal.levels_for_tail(1e-4).max(2),
            heating: None,
            samples,
            max_attempts: 1 << 32,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidInput("samples must be >= 1".into()));
        }
        if (self.thermal.omega0 - self.ramp.omega_initial).abs() > 1e-12 * self.ramp.omega_initial {
            return Err(Error::BasisMismatch(format!(
                "thermal state at omega={} but ramp starts at {}",
                self.thermal.omega0, self.ramp.omega_initial
            )));
        }
        if self.thermal.tail_above(self.n_report) > 1.0 - GRID_COVERAGE {
            return Err(Error::InvalidInput(format!(
                "m_test grid 0..={} covers only {:.6} of the thermal state",
                self.n_report,
                1.0 - self.thermal.tail_above(self.n_report)
            )));
        }
        if let FilterModel::Pulsed { params, cycles } = &self.filter {
            params.validate()?;
            if *cycles == 0 {
                return Err(Error::InvalidInput("filter cycles must be >= 1".into()));
            }
        }
        if let Some(h) = self.heating {
            if !(h.rate >= 0.0 && h.dwell >= 0.0) {
                return Err(Error::InvalidInput("heating rate and dwell must be >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShotRecord {
    pub shot: u64,
    pub n_true: usize,
    pub n_meas: usize,
    pub m_true: usize,
    pub m_meas: usize,
    /// `ω_τ(m_meas+½) - ω_0(n_meas+½)`, ħ = 1.
    pub w: f64,
    /// Inverse true-positive acceptance, clipped at [`WEIGHT_CLIP`].
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSamples {
    /// Accepted shots in shot order.
    pub records: Vec<ShotRecord>,
    pub accepted: usize,
    pub attempted: u64,
    /// `(scheduled, passed)` first-filter counts per m_test.
    pub first_filter: Vec<(u64, u64)>,
    pub omega0: f64,
    pub omega_tau: f64,
    pub seed: u64,
}

/// `(k, l)` pairs scheduled round-robin; pairs of opposite parity are
/// skipped when the ramp alone cannot connect them.
pub fn schedule(n_report: usize, parity_selective: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in 0..=n_report {
        for l in 0..=n_report {
            if !parity_selective || (k + l) % 2 == 0 {
                out.push((k, l));
            }
        }
    }
    out
}

/// Cumulative distribution for inverse-CDF sampling.
struct Cdf(Vec<f64>);

impl Cdf {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let mut c: Vec<f64> = weights
            .map(|w| {
                acc += w.max(0.0);
                acc
            })
            .collect();
        let total = acc;
        c.iter_mut().for_each(|x| *x /= total);
        Cdf(c)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.0.partition_point(|&c| c <= u).min(self.0.len() - 1)
    }
}

enum Filters {
    Ideal,
    Pulsed(Vec<FilterSampler>),
}

impl Filters {
    fn passes<R: Rng + ?Sized>(&self, m_test: usize, level: usize, rng: &mut R) -> bool {
        match self {
            Filters::Ideal => m_test == level,
            Filters::Pulsed(samplers) => samplers[m_test].accepts(level, rng),
        }
    }
}

/// Per-shot random stream: one master seed, one ChaCha stream per shot.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

struct Shot {
    k: usize,
    first_pass: bool,
    record: Option<ShotRecord>,
}

/// Runs the protocol, computing the transition matrix from the config.
pub fn run_protocol(cfg: &ProtocolConfig) -> Result<ProtocolSamples> {
    cfg.validate()?;
    let cols = cfg.thermal.levels_for_tail(0.5 * cfg.trunc.leakage_tol).max(cfg.n_report);
    let tm = transition_matrix(&cfg.ramp, &cfg.trunc, cols, cfg.integrator_tol)?;
    run_protocol_with(cfg, &tm)
}

/// Runs the protocol on a precomputed transition matrix of the same ramp.
///
/// The result depends only on `(cfg, tm)`: shots use independent streams and
/// are aggregated in shot order, so the worker count is irrelevant.
pub fn run_protocol_with(cfg: &ProtocolConfig, tm: &TransitionMatrix) -> Result<ProtocolSamples> {
    cfg.validate()?;
    if tm.ramp != cfg.ramp {
        return Err(Error::BasisMismatch("transition matrix was computed for another ramp".into()));
    }
    if tm.n_report() < cfg.n_report {
        return Err(Error::InvalidInput(format!(
            "transition matrix has {} columns, grid needs {}",
            tm.n_report() + 1,
            cfg.n_report + 1
        )));
    }
    let tm = match cfg.heating {
        Some(h) => heating_error_model(tm, h.rate, h.dwell)?,
        None => tm.clone(),
    };
    let n_cols = tm.n_report();
    let thermal_cdf = Cdf::new((0..=n_cols).map(|n| cfg.thermal.occupation(n)));
    let column_cdfs: Vec<Cdf> = (0..=n_cols).map(|n| Cdf::new(tm.probs.column(n).iter().copied())).collect();

    let grid: Vec<usize> = (0..=cfg.n_report).collect();
    let (filters, acceptance) = match &cfg.filter {
        FilterModel::Ideal => (Filters::Ideal, DMatrix::identity(grid.len(), grid.len())),
        FilterModel::Pulsed { params, cycles } => {
            let top = tm.n_rows().max(n_cols + 1);
            let samplers = grid
                .iter()
                .map(|&m| {
                    build_sequence(m, *cycles, params.eta, params.rabi_base)
                        .map(|seq| FilterSampler::new(seq, top, params.efficiency))
                })
                .collect::<Result<Vec<_>>>()?;
            let acc = acceptance_matrix(&grid, *cycles, params, cfg.n_report)?;
            (Filters::Pulsed(samplers), acc)
        }
    };
    let weight_of = |k: usize, l: usize| -> f64 {
        let a = acceptance[(k, k)] * acceptance[(l, l)];
        if a > 0.0 {
            (1.0 / a).min(WEIGHT_CLIP)
        } else {
            WEIGHT_CLIP
        }
    };

    let pairs = schedule(cfg.n_report, cfg.heating.is_none());
    let (w0, wt) = (cfg.ramp.omega_initial, cfg.ramp.omega_final);
    let run_shot = |shot: u64| -> Shot {
        let (k, l) = pairs[(shot % pairs.len() as u64) as usize];
        let mut rng = shot_rng(cfg.seed, shot);
        let n_true = thermal_cdf.sample(&mut rng);
        if !filters.passes(k, n_true, &mut rng) {
            return Shot {
                k,
                first_pass: false,
                record: None,
            };
        }
        // The motional state is restored to n_true after the first filter.
        let m_true = column_cdfs[n_true].sample(&mut rng);
        let record = filters.passes(l, m_true, &mut rng).then(|| ShotRecord {
            shot,
            n_true,
            n_meas: k,
            m_true,
            m_meas: l,
            w: energy_level(wt, l) - energy_level(w0, k),
            weight: weight_of(k, l),
        });
        Shot {
            k,
            first_pass: true,
            record,
        }
    };

    let mut records = Vec::with_capacity(cfg.samples.min(1 << 20));
    let mut first_filter = vec![(0u64, 0u64); grid.len()];
    let mut attempted = 0u64;
    'outer: while attempted < cfg.max_attempts {
        let end = (attempted + SHOT_BATCH).min(cfg.max_attempts);
        let batch: Vec<Shot> = (attempted..end).into_par_iter().map(run_shot).collect();
        for shot in batch {
            attempted += 1;
            first_filter[shot.k].0 += 1;
            first_filter[shot.k].1 += shot.first_pass as u64;
            if let Some(r) = shot.record {
                records.push(r);
                if records.len() == cfg.samples {
                    break 'outer;
                }
            }
        }
    }
    if records.is_empty() {
        return Err(Error::InsufficientSamples(format!("no shot accepted in {attempted} attempts")));
    }
    Ok(ProtocolSamples {
        accepted: records.len(),
        records,
        attempted,
        first_filter,
        omega0: w0,
        omega_tau: wt,
        seed: cfg.seed,
    })
}

/// Exact distribution of accepted work values for ideal filters under the
/// round-robin schedule: `P(W)` conditioned on `n, m <= n_report`, as `(w, p)`.
pub fn exact_conditional_distribution(
    thermal: &ThermalState,
    tm: &TransitionMatrix,
    n_report: usize,
) -> Vec<(f64, f64)> {
    let (w0, wt) = (tm.ramp.omega_initial, tm.ramp.omega_final);
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for n in 0..=n_report.min(tm.n_report()) {
        for m in 0..=n_report.min(tm.n_rows() - 1) {
            let p = thermal.occupation(n) * tm.get(m, n);
            if p > 0.0 {
                atoms.push((energy_level(wt, m) - energy_level(w0, n), p));
            }
        }
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (w, p) in atoms {
        match merged.last_mut() {
            Some(last) if (last.0 - w).abs() <= 1e-9 * w0 => last.1 += p,
            _ => merged.push((w, p)),
        }
    }
    let total: f64 = merged.iter().map(|a| a.1).sum();
    merged.iter_mut().for_each(|a| a.1 /= total);
    merged
}

/// Empirical distribution of accepted work values, `(w, frequency)`.
pub fn empirical_distribution(samples: &ProtocolSamples) -> Vec<(f64, f64)> {
    let mut ws: Vec<f64> = samples.records.iter().map(|r| r.w).collect();
    ws.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let tol = 1e-9 * samples.omega0;
    for w in ws {
        match out.last_mut() {
            Some(last) if (last.0 - w).abs() <= tol => last.1 += 1.0,
            _ => out.push((w, 1.0)),
        }
    }
    let n = samples.records.len() as f64;
    out.iter_mut().for_each(|a| a.1 /= n);
    out
}

/// `½ Σ |p - q|` over the union of supports, matching values within `tol`.
pub fn total_variation(p: &[(f64, f64)], q: &[(f64, f64)], tol: f64) -> f64 {
    let find = |set: &[(f64, f64)], w: f64| {
        set.iter()
            .find(|a| (a.0 - w).abs() <= tol)
            .map(|a| a.1)
            .unwrap_or(0.0)
    };
    let mut sum: f64 = p.iter().map(|a| (a.1 - find(q, a.0)).abs()).sum();
    sum += q
        .iter()
        .filter(|b| !p.iter().any(|a| (a.0 - b.0).abs() <= tol))
        .map(|b| b.1)
        .sum::<f64>();
    0.5 * sum
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EstimatorReport {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_eff: f64,
    /// `-ln(point)/β`, ħ = 1.
    pub delta_f_estimate: f64,
    pub accepted: usize,
}

/// Weighted mean of `e^{-βw}` with a percentile bootstrap interval.
///
/// Records with equal `(w, weight)` are pooled, and each bootstrap
/// resample draws multinomial counts over the pools; this has the same
/// distribution as resampling records with replacement.
pub fn estimate_jarzynski(samples: &ProtocolSamples, beta: f64) -> Result<EstimatorReport> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be finite and positive, got {beta}")));
    }
    if samples.accepted < 100 {
        return Err(Error::InsufficientSamples(format!(
            "{} accepted shots, need at least 100",
            samples.accepted
        )));
    }
    let mut pools: Vec<(f64, f64, u64)> = Vec::new();
    {
        let mut keyed: Vec<(f64, f64)> = samples.records.iter().map(|r| (r.w, r.weight)).collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for (w, wt) in keyed {
            match pools.last_mut() {
                Some(last) if last.0 == w && last.1 == wt => last.2 += 1,
                _ => pools.push((w, wt, 1)),
            }
        }
    }
    let stat = |counts: &[u64]| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for ((w, wt, _), &c) in pools.iter().zip(counts) {
            num += c as f64 * wt * (-beta * w).exp();
            den += c as f64 * wt;
        }
        num / den
    };
    let counts: Vec<u64> = pools.iter().map(|p| p.2).collect();
    let point = stat(&counts);
    let total = samples.accepted as u64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();

    let mut boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = shot_rng(samples.seed ^ 0x9e37_79b9_7f4a_7c15, r);
            let mut remaining = total;
            let mut mass = 1.0;
            let mut draw = vec![0u64; probs.len()];
            for (i, &p) in probs.iter().enumerate() {
                if remaining == 0 {
                    break;
                }
                if i + 1 == probs.len() {
                    draw[i] = remaining;
                    break;
                }
                let q = (p / mass).clamp(0.0, 1.0);
                let c = Binomial::new(remaining, q).expect("valid binomial").sample(&mut rng);
                draw[i] = c;
                remaining -= c;
                mass -= p;
            }
            stat(&draw)
        })
        .collect();
    boots.sort_by(|a, b| a.total_cmp(b));
    let pct = |q: f64| boots[((q * (boots.len() - 1) as f64).round() as usize).min(boots.len() - 1)];
    let u: Vec<f64> = samples.records.iter().map(|r| r.weight * (-beta * r.w).exp()).collect();
    let su: f64 = u.iter().sum();
    let su2: f64 = u.iter().map(|x| x * x).sum();
    Ok(EstimatorReport {
        point,
        ci_low: pct(0.025).min(point),
        ci_high: pct(0.975).max(point),
        n_eff: su * su / su2,
        delta_f_estimate: -point.ln() / beta,
        accepted: samples.accepted,
    })
}

/// Composes `P` with infinite-temperature heating at `rate` phonons/ms
/// over `dwell` ms before the final measurement. Rows are extended until
/// the heated columns keep their original sums to 1e-12.
pub fn heating_error_model(trans: &TransitionMatrix, rate: f64, dwell: f64) -> Result<TransitionMatrix> {
    if !(rate >= 0.0 && dwell >= 0.0 && rate.is_finite() && dwell.is_finite()) {
        return Err(Error::InvalidInput("heating rate and dwell must be finite and >= 0".into()));
    }
    if rate * dwell == 0.0 {
        return Ok(trans.clone());
    }
    let rows = trans.n_rows();
    let mut extra = 16usize;
    loop {
        let gen = heating_generator(rate, rows - 1 + extra);
        let kernel = transition_kernel(&gen, dwell, rows - 1);
        let probs = &kernel * &trans.probs;
        let worst = (0..probs.ncols())
            .map(|n| (probs.column(n).sum() - trans.probs.column(n).sum()).abs())
            .fold(0.0, f64::max);
        if worst <= 1e-12 {
            let column_deficits = (0..probs.ncols()).map(|n| (1.0 - probs.column(n).sum()).max(0.0)).collect();
            return Ok(TransitionMatrix {
                probs,
                column_deficits,
                ..trans.clone()
            });
        }
        if extra > 4096 {
            return Err(Error::Truncation(format!("heating kernel leaks {worst:e}")));
        }
        extra *= 2;
    }
}

/// Timing inputs in μs.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CycleTiming {
    pub pulse_us: f64,
    pub detections_per_cycle: f64,
    pub detection_us: f64,
    pub prep_us: f64,
    pub cycles: f64,
    pub ramp_us: f64,
}

impl Default for CycleTiming {
    fn default() -> Self {
        CycleTiming {
            pulse_us: 30.0,
            detections_per_cycle: 1.0,
            detection_us: 300.0,
            prep_us: 2000.0,
            cycles: 10.0,
            ramp_us: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CycleEstimate {
    pub total_ms: f64,
    pub prep_ms: f64,
    /// Both filters together.
    pub filter_ms: f64,
    pub ramp_ms: f64,
    /// `total_ms` over the D-state lifetime.
    pub lifetime_ratio: f64,
}

/// `prep + 2·N·(pulse + detections·detection) + ramp`.
pub fn cycle_time_estimate(t: &CycleTiming) -> Result<CycleEstimate> {
    let fields = [t.pulse_us, t.detections_per_cycle, t.detection_us, t.prep_us, t.cycles, t.ramp_us];
    if fields.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidInput("timing values must be finite and >= 0".into()));
    }
    let prep_ms = t.prep_us / 1000.0;
    let filter_ms = 2.0 * t.cycles * (t.pulse_us + t.detections_per_cycle * t.detection_us) / 1000.0;
    let ramp_ms = t.ramp_us / 1000.0;
    let total_ms = prep_ms + filter_ms + ramp_ms;
    Ok(CycleEstimate {
        total_ms,
        prep_ms,
        filter_ms,
        ramp_ms,
        lifetime_ratio: total_ms / D_LIFETIME_MS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::work::free_energy_difference;

    fn fig2() -> (ThermalState, RampSchedule) {
        let w0 = 2.0 * std::f64::consts::PI;
        (
            ThermalState::new(1.0, w0).unwrap(),
            RampSchedule::new(w0, 3.0 * w0, 0.05).unwrap(),
        )
    }

    #[test]
    fn identity_ramp_ground_state() {
        let th = ThermalState::new(0.0, 1.0).unwrap();
        let ramp = RampSchedule::new(1.0, 1.0, 1.0).unwrap();
        let mut cfg = ProtocolConfig::new(th, ramp, 500, 3);
        cfg.n_report = 3;
        let s = run_protocol(&cfg).unwrap();
        assert_eq!(s.accepted, 500);
        assert!(s.records.iter().all(|r| r.n_true == 0 && r.m_true == 0 && r.w == 0.0));
        let th1 = ThermalState::new(0.3, 1.0).unwrap();
        let mut cfg = ProtocolConfig::new(th1, ramp, 400, 3);
        cfg.n_report = 8;
        let rep = estimate_jarzynski(&run_protocol(&cfg).unwrap(), th1.beta).unwrap();
        assert_eq!(rep.point, 1.0);
        assert_eq!((rep.ci_low, rep.ci_high), (1.0, 1.0));
        assert_eq!(rep.delta_f_estimate, 0.0);
    }

    #[test]
    fn records_on_lattice_and_seeded() {
        let (th, ramp) = fig2();
        let cfg = ProtocolConfig::new(th, ramp, 2000, 42);
        let a = run_protocol(&cfg).unwrap();
        let b = run_protocol(&cfg).unwrap();
        assert_eq!(a, b);
        for r in &a.records {
            let w = energy_level(ramp.omega_final, r.m_meas) - energy_level(ramp.omega_initial, r.n_meas);
            assert_eq!(r.w, w);
            assert_eq!((r.n_true, r.m_true), (r.n_meas, r.m_meas));
        }
        let c = run_protocol(&ProtocolConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let (th, ramp) = fig2();
        let mut cfg = ProtocolConfig::new(th, ramp, 3000, 9);
        cfg.filter = FilterModel::Pulsed {
            params: FilterParams::default(),
            cycles: 4,
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_protocol(&cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn first_filter_rates_match_acceptance() {
        let (th, ramp) = fig2();
        let params = FilterParams::default();
        let mut cfg = ProtocolConfig::new(th, ramp, usize::MAX, 5);
        cfg.n_report = 10;
        cfg.filter = FilterModel::Pulsed { params, cycles: 3 };
        cfg.max_attempts = 60_000;
        let s = run_protocol(&cfg).unwrap();
        let grid: Vec<usize> = (0..=10).collect();
        let deep = 40;
        let acc = acceptance_matrix(&grid, 3, &params, deep).unwrap();
        for (k, &(tried, passed)) in s.first_filter.iter().enumerate() {
            let expected: f64 = (0..=deep).map(|n| acc[(k, n)] * th.occupation(n)).sum();
            let rate = passed as f64 / tried as f64;
            let se = (expected * (1.0 - expected) / tried as f64).sqrt();
            assert!((rate - expected).abs() < 3.0 * se + 1e-9, "k={k} {rate} {expected}");
        }
    }

    #[test]
    fn conditional_distribution_and_estimator() {
        let (th, ramp) = fig2();
        let cfg = ProtocolConfig::new(th, ramp, 20_000, 1);
        let tm = transition_matrix(&ramp, &cfg.trunc, 30, 1e-9).unwrap();
        let s = run_protocol_with(&cfg, &tm).unwrap();
        let exact = exact_conditional_distribution(&th, &tm, cfg.n_report);
        let tv = total_variation(&empirical_distribution(&s), &exact, 1e-9);
        assert!(tv < 0.03, "tv {tv}");
        let rep = estimate_jarzynski(&s, th.beta).unwrap();
        let target = (-th.beta * free_energy_difference(ramp.omega_initial, ramp.omega_final, th.beta).unwrap()).exp();
        assert!(rep.ci_low <= rep.point && rep.point <= rep.ci_high);
        assert!(rep.ci_low < target && target < rep.ci_high, "{rep:?} {target}");
        assert!(rep.n_eff > 1000.0 && rep.n_eff <= s.accepted as f64);
    }

    #[test]
    fn grid_must_cover_thermal_state() {
        let (th, ramp) = fig2();
        let mut cfg = ProtocolConfig::new(th, ramp, 10, 1);
        cfg.n_report = 4;
        assert!(cfg.validate().is_err());
        assert!(estimate_jarzynski(
            &ProtocolSamples {
                records: vec![],
                accepted: 5,
                attempted: 10,
                first_filter: vec![],
                omega0: 1.0,
                omega_tau: 3.0,
                seed: 0
            },
            1.0
        )
        .is_err());
    }

    #[test]
    fn heating_composition() {
        let ramp = RampSchedule::new(1.0, 1.0, 1.0).unwrap();
        let tm = transition_matrix(&ramp, &FockTruncation::default(), 6, 1e-9).unwrap();
        assert_eq!(heating_error_model(&tm, 0.0, 5.0).unwrap().probs, tm.probs);
        let heated = heating_error_model(&tm, 0.1, 1.0).unwrap();
        // From vacuum the heated state is thermal with mean rate·dwell.
        assert!((heated.get(1, 0) - 0.1 / 1.21).abs() < 1e-12);
        // Oracle: dense exponential of the heating generator.
        let dense = crate::bath::dense_kernel(&heating_generator(0.1, 60), 1.0);
        assert!((heated.get(1, 0) - dense[(1, 0)]).abs() < 1e-12);
        for n in 0..=6 {
            assert!((heated.probs.column(n).sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cycle_time() {
        let e = cycle_time_estimate(&CycleTiming::default()).unwrap();
        assert!((e.total_ms - 8.60005).abs() < 1e-12);
        assert!(e.total_ms < 10.0 && e.lifetime_ratio < 0.01);
        let zero = CycleTiming {
            pulse_us: 0.0,
            detections_per_cycle: 0.0,
            detection_us: 0.0,
            prep_us: 0.0,
            cycles: 0.0,
            ramp_us: 0.0,
        };
        assert_eq!(cycle_time_estimate(&zero).unwrap().total_ms, 0.0);
        let double = CycleTiming {
            cycles: 20.0,
            ..Default::default()
        };
        assert_eq!(cycle_time_estimate(&double).unwrap().filter_ms, 2.0 * e.filter_ms);
    }
}
