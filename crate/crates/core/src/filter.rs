//! Number-state filter: sideband pulse sequences on the S↔D transition,
//! projective fluorescence detection and zero-fluorescence transmission.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::special::laguerre;

/// Lamb–Dicke parameter used when none is configured.
pub const DEFAULT_ETA: f64 = 0.1;
/// Carrier Rabi frequency `2π · 0.05` rad/μs.
pub const DEFAULT_RABI_BASE: f64 = 2.0 * std::f64::consts::PI * 0.05;

/// Rabi frequency `Ω_{n,n'}` between motional levels `n` and `n'`.
///
/// Zero when either level is negative.
pub fn rabi_frequency(n: i64, n_prime: i64, eta: f64, omega_base: f64) -> f64 {
    if n < 0 || n_prime < 0 {
        return 0.0;
    }
    let lo = n.min(n_prime) as usize;
    let hi = n.max(n_prime) as usize;
    let dn = hi - lo;
    // sqrt(lo! / hi!) as a product of dn factors.
    let ratio: f64 = (lo + 1..=hi).map(|k| (k as f64).sqrt().recip()).product();
    let eta2 = eta * eta;
    omega_base * (-0.5 * eta2).exp() * eta.powi(dn as i32) * ratio * laguerre(lo, dn as f64, eta2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    Carrier,
    RedSideband,
    BlueSideband,
}

impl PulseKind {
    /// Motional level of `D` coupled to `|S, n>`.
    pub fn partner(self, n: i64) -> i64 {
        match self {
            PulseKind::Carrier => n,
            PulseKind::RedSideband => n - 1,
            PulseKind::BlueSideband => n + 1,
        }
    }
}

/// Square pulse whose duration rotates the reference pair `|S, n_ref> ↔ |D, n_ref'>` by `theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pulse {
    pub kind: PulseKind,
    pub theta: f64,
    /// `(n_ref, n_ref')`: motional levels of `S` and `D` in the reference pair.
    pub reference: (i64, i64),
    pub rabi_base: f64,
    pub lamb_dicke: f64,
}

impl Pulse {
    pub fn new(kind: PulseKind, theta: f64, n_ref: i64, rabi_base: f64, lamb_dicke: f64) -> Result<Self> {
        let reference = (n_ref, kind.partner(n_ref));
        let p = Pulse {
            kind,
            theta,
            reference,
            rabi_base,
            lamb_dicke,
        };
        if !(p.reference_rabi() > 0.0) {
            return Err(Error::InvalidInput(format!(
                "{kind:?} pulse referenced to {reference:?} has no coupling"
            )));
        }
        Ok(p)
    }

    fn reference_rabi(&self) -> f64 {
        rabi_frequency(self.reference.0, self.reference.1, self.lamb_dicke, self.rabi_base)
    }

    /// Duration in μs.
    pub fn duration(&self) -> f64 {
        self.theta / self.reference_rabi()
    }

    /// Rotation angle on the pair `|S, n> ↔ |D, partner(n)>`.
    pub fn angle(&self, n: i64) -> f64 {
        let np = self.kind.partner(n);
        rabi_frequency(n, np, self.lamb_dicke, self.rabi_base) * self.duration()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterStep {
    pub pulse: Pulse,
    pub detect_after: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterSequence {
    pub m_test: usize,
    pub cycles: usize,
    pub steps: Vec<FilterStep>,
}

/// Pulse parameters shared by every pulse of a filter.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterParams {
    pub eta: f64,
    pub rabi_base: f64,
    pub efficiency: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            eta: DEFAULT_ETA,
            rabi_base: DEFAULT_RABI_BASE,
            efficiency: 1.0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidInput(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(self.rabi_base > 0.0 && self.rabi_base.is_finite()) {
            return Err(Error::InvalidInput(format!("rabi_base must be > 0, got {}", self.rabi_base)));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        Ok(())
    }
}

/// One pulse and one detection per cycle.
///
/// `m_test >= 2`: red π on `(m, m-1)`, then red and blue 2π pulses on
/// `(m, m-1)` and `(m-2, m-1)` in alternation. `m_test = 0`: carrier π on
/// `(0, 0)`, then π pulses that remove a phonon from the D manifold,
/// `|D, n> → |S, n-1>`, referenced to `|D, 1> ↔ |S, 0>`; they leave `|D, 0>`
/// untouched. `m_test = 1`: a red π on `(1, 0)` replaces the carrier pulse.
pub fn build_sequence(m_test: usize, cycles: usize, eta: f64, omega_base: f64) -> Result<FilterSequence> {
    if cycles == 0 {
        return Err(Error::InvalidInput("a filter needs at least one cycle".into()));
    }
    let pi = std::f64::consts::PI;
    let m = m_test as i64;
    let pulse = |kind, theta, n_ref| Pulse::new(kind, theta, n_ref, omega_base, eta);
    let mut pulses = Vec::with_capacity(cycles);
    if m_test >= 2 {
        pulses.push(pulse(PulseKind::RedSideband, pi, m)?);
        let red = pulse(PulseKind::RedSideband, 2.0 * pi, m)?;
        let blue = pulse(PulseKind::BlueSideband, 2.0 * pi, m - 2)?;
        for c in 1..cycles {
            pulses.push(if c % 2 == 1 { red } else { blue });
        }
    } else {
        let first = if m_test == 0 {
            pulse(PulseKind::Carrier, pi, 0)?
        } else {
            pulse(PulseKind::RedSideband, pi, 1)?
        };
        pulses.push(first);
        // |S, n-1> ↔ |D, n> is the blue sideband seen from S.
        let follow = pulse(PulseKind::BlueSideband, pi, 0)?;
        pulses.extend(std::iter::repeat_n(follow, cycles - 1));
    }
    Ok(FilterSequence {
        m_test,
        cycles,
        steps: pulses
            .into_iter()
            .map(|pulse| FilterStep {
                pulse,
                detect_after: true,
            })
            .collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    S = 0,
    D = 1,
}

/// Joint electronic ⊗ motional amplitudes, motional levels `0..=n_max`.
///
/// Couplings that would leave the motional space are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    n_max: usize,
    amps: Vec<Complex64>,
}

impl JointState {
    pub fn fock(level: Level, n: usize, n_max: usize) -> Self {
        assert!(n <= n_max);
        let mut amps = vec![Complex64::new(0.0, 0.0); 2 * (n_max + 1)];
        amps[level as usize * (n_max + 1) + n] = Complex64::new(1.0, 0.0);
        JointState { n_max, amps }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    fn index(&self, level: Level, n: usize) -> usize {
        level as usize * (self.n_max + 1) + n
    }

    pub fn amplitude(&self, level: Level, n: usize) -> Complex64 {
        self.amps[self.index(level, n)]
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn population(&self, level: Level) -> f64 {
        let d = self.n_max + 1;
        let off = level as usize * d;
        self.amps[off..off + d].iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn project(&mut self, keep: Level) {
        let d = self.n_max + 1;
        let drop = 1 - keep as usize;
        self.amps[drop * d..(drop + 1) * d].fill(Complex64::new(0.0, 0.0));
        let norm = self.norm();
        self.amps.iter_mut().for_each(|a| *a /= norm);
    }
}

/// `(cos θ_n/2, sin θ_n/2, i_S, i_D)` for every pair the pulse couples.
struct Rotations(Vec<(f64, f64, usize, usize)>);

impl Rotations {
    fn compile(pulse: &Pulse, n_max: usize) -> Self {
        let d = n_max + 1;
        let pairs = (0..=n_max)
            .filter_map(|n| {
                let np = pulse.kind.partner(n as i64);
                if np < 0 || np as usize > n_max {
                    return None;
                }
                let half = 0.5 * pulse.angle(n as i64);
                Some((half.cos(), half.sin(), n, d + np as usize))
            })
            .collect();
        Rotations(pairs)
    }

    fn apply(&self, v: &mut [Complex64]) {
        let mi = Complex64::new(0.0, -1.0);
        for &(c, s, is, id) in &self.0 {
            let (a, b) = (v[is], v[id]);
            v[is] = a * c + mi * s * b;
            v[id] = mi * s * a + b * c;
        }
    }
}

/// Resolved-sideband rotation of every coupled pair by `Ω_{n,n'}·duration`.
pub fn apply_pulse(state: &JointState, pulse: &Pulse) -> JointState {
    let mut out = state.clone();
    Rotations::compile(pulse, state.n_max).apply(&mut out.amps);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Fluorescence,
    Dark,
}

/// Projective S/D measurement. The S branch fluoresces with probability
/// `efficiency`; a missed S event leaves the state projected onto S.
pub fn detect<R: Rng + ?Sized>(state: &JointState, efficiency: f64, rng: &mut R) -> (Outcome, JointState) {
    let p_d = state.population(Level::D) / state.norm().powi(2);
    let mut out = state.clone();
    if rng.random::<f64>() < p_d {
        out.project(Level::D);
        return (Outcome::Dark, out);
    }
    out.project(Level::S);
    if rng.random::<f64>() < efficiency {
        (Outcome::Fluorescence, out)
    } else {
        (Outcome::Dark, out)
    }
}

/// Samples one filter trial on input `|S, n>`; true when every detection is dark.
pub fn sample_trial<R: Rng + ?Sized>(seq: &FilterSequence, n: usize, efficiency: f64, rng: &mut R) -> bool {
    let n_max = motional_space(n, seq);
    let rots: Vec<Rotations> = seq.steps.iter().map(|s| Rotations::compile(&s.pulse, n_max)).collect();
    sample_compiled(seq, &rots, n, n_max, efficiency, rng)
}

fn sample_compiled<R: Rng + ?Sized>(
    seq: &FilterSequence,
    rots: &[Rotations],
    n: usize,
    n_max: usize,
    efficiency: f64,
    rng: &mut R,
) -> bool {
    let mut state = JointState::fock(Level::S, n, n_max);
    for (step, rot) in seq.steps.iter().zip(rots) {
        rot.apply(&mut state.amps);
        if step.detect_after {
            let (outcome, next) = detect(&state, efficiency, rng);
            if outcome == Outcome::Fluorescence {
                return false;
            }
            state = next;
        }
    }
    true
}

/// Pre-compiled sampler for repeated trials on many inputs.
pub struct FilterSampler {
    seq: FilterSequence,
    n_max: usize,
    rots: Vec<Rotations>,
    efficiency: f64,
}

impl FilterSampler {
    pub fn new(seq: FilterSequence, n_report: usize, efficiency: f64) -> Self {
        let n_max = motional_space(n_report.max(seq.m_test), &seq);
        let rots = seq.steps.iter().map(|s| Rotations::compile(&s.pulse, n_max)).collect();
        FilterSampler {
            seq,
            n_max,
            rots,
            efficiency,
        }
    }

    pub fn m_test(&self) -> usize {
        self.seq.m_test
    }

    /// True when the trial on `|S, n>` stays dark throughout.
    pub fn accepts<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> bool {
        assert!(n + self.seq.steps.len() < self.n_max, "input level {n} outside the compiled space");
        sample_compiled(&self.seq, &self.rots, n, self.n_max, self.efficiency, rng)
    }
}

/// Each pulse raises the motional level by at most one.
fn motional_space(n: usize, seq: &FilterSequence) -> usize {
    n + seq.steps.len() + 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionCurve {
    pub m_test: usize,
    pub cycles: usize,
    /// Zero-fluorescence probability for input `|S, n>`, `n = 0..=n_report`.
    pub per_n: Vec<f64>,
}

/// Exact dark probabilities after each detection, for input `|S, n>`.
///
/// The dark branch is tracked as an unnormalized density matrix: a detection
/// removes S–D coherences, keeps the D block and scales the S block by
/// `1 - efficiency`.
fn dark_history(seq: &FilterSequence, n: usize, efficiency: f64) -> Vec<f64> {
    let n_max = motional_space(n.max(seq.m_test), seq);
    let dim = 2 * (n_max + 1);
    let d = n_max + 1;
    let mut rho = DMatrix::<Complex64>::zeros(dim, dim);
    rho[(n, n)] = Complex64::new(1.0, 0.0);
    let mut out = Vec::with_capacity(seq.cycles);
    for step in &seq.steps {
        let rot = Rotations::compile(&step.pulse, n_max);
        // rho -> U (U rho)^†, valid since rho is Hermitian.
        for mut col in rho.column_iter_mut() {
            rot.apply(col.as_mut_slice());
        }
        rho = rho.adjoint();
        for mut col in rho.column_iter_mut() {
            rot.apply(col.as_mut_slice());
        }
        if step.detect_after {
            for i in 0..dim {
                for j in 0..dim {
                    if (i < d) != (j < d) {
                        rho[(i, j)] = Complex64::new(0.0, 0.0);
                    } else if i < d {
                        rho[(i, j)] *= 1.0 - efficiency;
                    }
                }
            }
            out.push(rho.trace().re.clamp(0.0, 1.0));
        }
    }
    out
}

/// Zero-fluorescence probability after `N = 1..=cycles`, one curve per `N`.
pub fn transmission_curves(
    m_test: usize,
    cycles: usize,
    params: &FilterParams,
    n_report: usize,
) -> Result<Vec<TransmissionCurve>> {
    params.validate()?;
    let seq = build_sequence(m_test, cycles, params.eta, params.rabi_base)?;
    let histories: Vec<Vec<f64>> = (0..=n_report)
        .map(|n| dark_history(&seq, n, params.efficiency))
        .collect();
    Ok((1..=cycles)
        .map(|k| TransmissionCurve {
            m_test,
            cycles: k,
            per_n: histories.iter().map(|h| h[k - 1]).collect(),
        })
        .collect())
}

pub fn transmission_curve(m_test: usize, cycles: usize, params: &FilterParams, n_report: usize) -> Result<TransmissionCurve> {
    Ok(transmission_curves(m_test, cycles, params, n_report)?
        .pop()
        .expect("cycles >= 1"))
}

/// Row `i`, column `n`: probability that the filter for `m_tests[i]`
/// stays dark on input `n`.
pub fn acceptance_matrix(
    m_tests: &[usize],
    cycles: usize,
    params: &FilterParams,
    n_report: usize,
) -> Result<DMatrix<f64>> {
    if m_tests.is_empty() {
        return Err(Error::InvalidInput("acceptance matrix needs at least one m_test".into()));
    }
    let mut out = DMatrix::zeros(m_tests.len(), n_report + 1);
    for (i, &m) in m_tests.iter().enumerate() {
        let curve = transmission_curve(m, cycles, params, n_report)?;
        for (n, p) in curve.per_n.into_iter().enumerate() {
            out[(i, n)] = p;
        }
    }
    Ok(out)
}

/// Least-squares line through `ln p(N)` against `N`; returns the slope and
/// the largest residual divided by the total decay `|ln p(N_last) - ln p(N_first)|`.
pub fn log_linear_fit(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 3 || values.iter().any(|&p| !(p > 0.0)) {
        return None;
    }
    let ys: Vec<f64> = values.iter().map(|p| p.ln()).collect();
    let k = ys.len() as f64;
    let xs: Vec<f64> = (1..=ys.len()).map(|x| x as f64).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let span = (ys[ys.len() - 1] - ys[0]).abs();
    let worst = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (my + slope * (x - mx))).abs())
        .fold(0.0, f64::max);
    Some((slope, worst / span))
}
