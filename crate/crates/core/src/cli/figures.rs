//! Figure recipes: transition probabilities against inverse ramp time,
//! work distributions for three ramp times, and filter transmission.
//!
//! Ramp endpoints are fixed here and read in the configured convention;
//! filter and truncation settings come from the config.

use rayon::prelude::*;

use super::commands::visible_atoms;
use super::config::{parse_config_str, RunConfig};
use super::output::{fmt_f64, OutputSink};
use super::svg::{Plot, Style};
use crate::error::Result;
use crate::filter::{transmission_curves, TransmissionCurve};
use crate::model::ThermalState;
use crate::propagator::{transition_matrix, RampSchedule};
use crate::work::{adiabatic_work_distribution, converged_transition_matrix, work_distribution};

pub const FIG1_OMEGA: (f64, f64) = (0.1, 3.0);
pub const FIG1_INSET_TAU: f64 = 1.0;
pub const FIG1_LEVEL: usize = 2;
pub const FIG1_ROWS: usize = 8;
pub const FIG2_OMEGA: (f64, f64) = (1.0, 3.0);
pub const FIG2_NBAR: f64 = 1.0;
pub const FIG2_TAUS: [f64; 2] = [0.1, 0.05];

/// Inverse ramp times in 1/μs.
pub const FIG1_INVERSE_TAUS: [f64; 14] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];
/// Column deficit allowed for this figure. A 30x frequency change squeezes
/// the state far up the ladder; the plotted rows `m <= 8` are unaffected.
pub const FIG1_LEAKAGE_TOL: f64 = 1e-6;

pub fn default_config() -> RunConfig {
    parse_config_str(
        r#"{"ramp": {"omega_initial": 1.0, "omega_final": 3.0, "tau": 0.05}, "thermal": {"nbar": 1.0}}"#,
    )
    .expect("built-in config is valid")
}

pub fn transmission_plot(curves: &[TransmissionCurve]) -> Plot {
    let m_test = curves.first().map_or(0, |c| c.m_test);
    let mut plot = Plot::new(&format!("Filter transmission, m_test = {m_test}"), "n", "zero-fluorescence probability");
    for c in curves {
        let pts = c.per_n.iter().enumerate().map(|(n, &p)| (n as f64, p)).collect();
        plot = plot.series(&format!("N = {}", c.cycles), pts, Style::Line);
    }
    plot
}

pub fn reproduce(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    fig1(cfg, sink)?;
    fig2(cfg, sink)?;
    fig4(cfg, sink)?;
    Ok(())
}

fn fig1(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let w0 = cfg.convention.to_angular(FIG1_OMEGA.0);
    let wt = cfg.convention.to_angular(FIG1_OMEGA.1);
    let mut trunc = cfg.fock_truncation();
    trunc.leakage_tol = trunc.leakage_tol.max(FIG1_LEAKAGE_TOL);
    let tol = cfg.truncation.integrator_tol;
    let columns: Vec<Vec<f64>> = FIG1_INVERSE_TAUS
        .par_iter()
        .map(|&inv| {
            let tm = transition_matrix(&RampSchedule::new(w0, wt, 1.0 / inv)?, &trunc, FIG1_LEVEL, tol)?;
            Ok((0..tm.n_rows()).map(|m| tm.get(m, FIG1_LEVEL)).collect())
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut series: Vec<Vec<(f64, f64)>> = vec![Vec::new(); FIG1_ROWS + 1];
    for (&inv, col) in FIG1_INVERSE_TAUS.iter().zip(&columns) {
        for (m, &p) in col.iter().enumerate().take(FIG1_ROWS + 1) {
            series[m].push((inv, p));
            rows.push(vec![fmt_f64(inv), m.to_string(), fmt_f64(p)]);
        }
    }
    sink.csv("fig1.csv", &["inv_tau_per_us", "m", "p"], &rows, true)?;
    let mut plot = Plot::new(
        &format!("P(n = {FIG1_LEVEL} → m), ω: {} → {}", FIG1_OMEGA.0, FIG1_OMEGA.1),
        "1/τ (1/μs)",
        "P",
    );
    // Odd m are forbidden by parity and stay at zero; they are in the CSV only.
    for (m, s) in series.into_iter().enumerate().filter(|(m, _)| m % 2 == FIG1_LEVEL % 2) {
        plot = plot.series(&format!("m = {m}"), s, Style::Line);
    }
    sink.svg("fig1.svg", &plot.render())?;

    let at = FIG1_INVERSE_TAUS
        .iter()
        .position(|&inv| inv * FIG1_INSET_TAU == 1.0)
        .expect("inset time is on the grid");
    let inset: Vec<(f64, f64)> = columns[at].iter().enumerate().map(|(m, &p)| (m as f64, p)).collect();
    let rows: Vec<Vec<String>> = inset.iter().map(|&(m, p)| vec![fmt_f64(m), fmt_f64(p)]).collect();
    sink.csv("fig1_inset.csv", &["m", "p"], &rows, true)?;
    let plot = Plot::new(&format!("P(n = {FIG1_LEVEL} → m), τ = {FIG1_INSET_TAU} μs"), "m", "P").series(
        "P",
        inset,
        Style::Stems,
    );
    sink.svg("fig1_inset.svg", &plot.render())
}

fn fig2(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let w0 = cfg.convention.to_angular(FIG2_OMEGA.0);
    let wt = cfg.convention.to_angular(FIG2_OMEGA.1);
    let th = ThermalState::new(FIG2_NBAR, w0)?;
    let mut dists = vec![("adiabatic".to_string(), adiabatic_work_distribution(&th, wt, 1e-12))];
    for tau in FIG2_TAUS {
        let tm = converged_transition_matrix(
            &RampSchedule::new(w0, wt, tau)?,
            &[th],
            &cfg.fock_truncation(),
            cfg.truncation.integrator_tol,
            cfg.truncation.column_tol,
        )?;
        dists.push((format!("tau={tau}"), work_distribution(&th, &tm)?));
    }
    let mut rows = Vec::new();
    let mut plot = Plot::new("Work distribution, n̄ = 1", "W / ħω₀", "P(W)");
    for (label, d) in &dists {
        for (w, p) in d.in_units_of_omega0() {
            rows.push(vec![label.clone(), fmt_f64(w), fmt_f64(p)]);
        }
        plot = plot.series(label, visible_atoms(d, 5e-3), Style::Stems);
    }
    sink.csv("fig2.csv", &["series", "w_over_hw0", "p"], &rows, true)?;
    sink.svg("fig2.svg", &plot.render())
}

fn fig4(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let f = &cfg.filter;
    let curves = transmission_curves(f.m_test, f.cycles, &cfg.filter_params(), f.n_report)?;
    let mut rows = Vec::new();
    for n in 0..=f.n_report {
        for c in &curves {
            rows.push(vec![n.to_string(), c.cycles.to_string(), fmt_f64(c.per_n[n])]);
        }
    }
    sink.csv("fig4.csv", &["n", "N", "p_dark"], &rows, true)?;
    sink.svg("fig4.svg", &transmission_plot(&curves).render())
}
