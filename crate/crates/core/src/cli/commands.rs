//! One function per subcommand: compute, then hand tables and payloads to the sink.

use serde_json::{json, Value};

use super::config::RunConfig;
use super::figures;
use super::output::{fmt_f64, to_value, OutputSink};
use super::svg::{Plot, Style};
use crate::bath::heat_distribution;
use crate::error::{Error, Result};
use crate::filter::{log_linear_fit, transmission_curves};
use crate::model::ThermalState;
use crate::propagator::{transition_matrix, TransitionMatrix};
use crate::protocol::{
    cycle_time_estimate, empirical_distribution, estimate_jarzynski, exact_conditional_distribution, run_protocol,
    total_variation, FilterModel,
};
use crate::work::{
    converged_transition_matrix, crooks_check, crooks_distributions, free_energy_difference, jarzynski_column_error, jarzynski_lhs,
    work_distribution, WorkDistribution,
};

fn ramp_value(cfg: &RunConfig) -> Value {
    json!({
        "convention": to_value(&cfg.convention),
        "omega_initial_rad_per_us": cfg.omega_initial(),
        "omega_final_rad_per_us": cfg.omega_final(),
        "tau_us": cfg.ramp.tau,
        "shape": to_value(&cfg.ramp.shape),
    })
}

fn matrix_value(tm: &TransitionMatrix) -> Value {
    json!({
        "n_report": tm.n_report(),
        "n_rows": tm.n_rows(),
        "n_max": tm.trunc.n_max,
        "steps": tm.steps_taken,
        "leakage": tm.leakage,
        "unitarity_residual": tm.unitarity_residual,
        "max_column_deficit": tm.max_deficit(),
    })
}

fn positive_temperature(cfg: &RunConfig, what: &str) -> Result<ThermalState> {
    let th = cfg.thermal_state()?;
    if !(cfg.thermal.nbar > 0.0) {
        return Err(Error::InvalidInput(format!("{what} needs thermal.nbar > 0")));
    }
    Ok(th)
}

fn converged(cfg: &RunConfig, thermals: &[ThermalState]) -> Result<TransitionMatrix> {
    converged_transition_matrix(
        &cfg.ramp_schedule()?,
        thermals,
        &cfg.fock_truncation(),
        cfg.truncation.integrator_tol,
        cfg.truncation.column_tol,
    )
}

fn atoms_rows(dist: &WorkDistribution) -> Vec<Vec<String>> {
    dist.in_units_of_omega0()
        .into_iter()
        .map(|(w, p)| vec![fmt_f64(w), fmt_f64(p)])
        .collect()
}

fn atoms_value(dist: &WorkDistribution) -> Value {
    dist.in_units_of_omega0()
        .into_iter()
        .map(|(w, p)| json!({"w_over_hw0": w, "p": p}))
        .collect()
}

/// Atoms above `floor`, for plotting.
pub(super) fn visible_atoms(dist: &WorkDistribution, floor: f64) -> Vec<(f64, f64)> {
    dist.in_units_of_omega0().into_iter().filter(|a| a.1 > floor).collect()
}

pub fn transitions(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let tm = transition_matrix(
        &cfg.ramp_schedule()?,
        &cfg.fock_truncation(),
        cfg.truncation.n_report,
        cfg.truncation.integrator_tol,
    )?;
    let mut rows = Vec::new();
    for n in 0..=tm.n_report() {
        for m in 0..tm.n_rows() {
            rows.push(vec![m.to_string(), n.to_string(), fmt_f64(tm.get(m, n))]);
        }
    }
    sink.csv("transitions.csv", &["m", "n", "p"], &rows, false)?;
    let p: Vec<Vec<f64>> = (0..tm.n_rows())
        .map(|m| (0..=tm.n_report()).map(|n| tm.get(m, n)).collect())
        .collect();
    let payload = json!({"ramp": ramp_value(cfg), "matrix": matrix_value(&tm), "p_m_n": p});
    sink.json("transitions.json", "transitions", payload)?;
    if cfg.output.svg {
        let mut plot = Plot::new("Transition probabilities P(n → m)", "m", "P");
        for n in 0..=tm.n_report().min(4) {
            let pts = (0..tm.n_rows()).map(|m| (m as f64, tm.get(m, n))).collect();
            plot = plot.series(&format!("n = {n}"), pts, Style::Stems);
        }
        sink.svg("transitions.svg", &plot.render())?;
    }
    println!(
        "transitions: {} x {} matrix, max column deficit {:.3e}",
        tm.n_rows(),
        tm.n_report() + 1,
        tm.max_deficit()
    );
    Ok(())
}

pub fn work_dist(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let th = cfg.thermal_state()?;
    let tm = converged(cfg, &[th])?;
    let dist = work_distribution(&th, &tm)?;
    sink.csv("workdist.csv", &["w_over_hw0", "p"], &atoms_rows(&dist), false)?;
    let payload = json!({
        "ramp": ramp_value(cfg),
        "nbar": cfg.thermal.nbar,
        "matrix": matrix_value(&tm),
        "atoms": atoms_value(&dist),
        "mean_w_over_hw0": dist.mean() / dist.omega0,
        "deficit": dist.deficit,
    });
    sink.json("workdist.json", "workdist", payload)?;
    if cfg.output.svg {
        let plot = Plot::new("Work distribution", "W / ħω₀", "P(W)").series(
            &format!("τ = {} μs", cfg.ramp.tau),
            visible_atoms(&dist, 1e-4),
            Style::Stems,
        );
        sink.svg("workdist.svg", &plot.render())?;
    }
    println!("work-dist: {} atoms, <W>/ħω0 = {:.6}", dist.atoms.len(), dist.mean() / dist.omega0);
    Ok(())
}

pub fn jarzynski(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let th = positive_temperature(cfg, "jarzynski")?;
    let tm = converged(cfg, &[th])?;
    let dist = work_distribution(&th, &tm)?;
    let lhs = jarzynski_lhs(&dist);
    let delta_f = free_energy_difference(dist.omega0, dist.omega_tau, th.beta)?;
    let exact = (-th.beta * delta_f).exp();
    let deviation = (lhs / exact - 1.0).abs();
    sink.csv(
        "jarzynski.csv",
        &["lhs", "exp_minus_beta_delta_f", "deviation"],
        &[vec![fmt_f64(lhs), fmt_f64(exact), fmt_f64(deviation)]],
        false,
    )?;
    let payload = json!({
        "ramp": ramp_value(cfg),
        "nbar": cfg.thermal.nbar,
        "beta_hw0": th.beta * dist.omega0,
        "matrix": matrix_value(&tm),
        "exp_average": lhs,
        "exp_minus_beta_delta_f": exact,
        "delta_f_over_hw0": delta_f / dist.omega0,
        "deviation": deviation,
        "truncation_error_bound": jarzynski_column_error(&tm, th.beta),
    });
    sink.json("jarzynski.json", "jarzynski", payload)?;
    println!("jarzynski: <exp(-bW)> = {lhs:.12}, exp(-b dF) = {exact:.12}, deviation {deviation:.3e}");
    Ok(())
}

pub fn crooks(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let fwd_th = positive_temperature(cfg, "crooks")?;
    let (fwd, back) = crooks_distributions(
        &cfg.ramp_schedule()?,
        fwd_th.beta,
        &cfg.fock_truncation(),
        cfg.truncation.integrator_tol,
        cfg.truncation.column_tol,
    )?;
    let report = crooks_check(&fwd, &back)?;
    let beta = fwd_th.beta;
    let rows: Vec<Vec<String>> = fwd
        .atoms
        .iter()
        .map(|a| {
            let pb = back.probability_at(-a.w);
            vec![
                fmt_f64(a.w / fwd.omega0),
                fmt_f64(a.p),
                fmt_f64(pb),
                fmt_f64(beta * (a.w - report.delta_f_exact)),
            ]
        })
        .collect();
    sink.csv(
        "crooks.csv",
        &["w_over_hw0", "p_forward", "p_backward_minus_w", "beta_w_minus_delta_f"],
        &rows,
        false,
    )?;
    let payload = json!({
        "ramp": ramp_value(cfg),
        "nbar": cfg.thermal.nbar,
        "forward_atoms": fwd.atoms.len(),
        "backward_atoms": back.atoms.len(),
        "jarzynski_lhs": report.jarzynski_lhs,
        "delta_f_over_hw0": report.delta_f_exact / fwd.omega0,
        "deviation": report.deviation,
        "crooks_max_log_error": report.crooks_max_log_error,
        "shared_atoms": report.shared_atoms,
    });
    sink.json("crooks.json", "workdist", payload)?;
    println!(
        "crooks: max log error {:.3e} over {} shared atoms",
        report.crooks_max_log_error, report.shared_atoms
    );
    Ok(())
}

pub fn filter(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let f = &cfg.filter;
    let curves = transmission_curves(f.m_test, f.cycles, &cfg.filter_params(), f.n_report)?;
    let mut rows = Vec::new();
    for n in 0..=f.n_report {
        for c in &curves {
            rows.push(vec![n.to_string(), c.cycles.to_string(), fmt_f64(c.per_n[n])]);
        }
    }
    sink.csv("filter.csv", &["n", "N", "p_dark"], &rows, false)?;
    let fits: Vec<Value> = (0..=f.n_report)
        .filter(|&n| n != f.m_test)
        .map(|n| {
            let hist: Vec<f64> = curves.iter().map(|c| c.per_n[n]).collect();
            match log_linear_fit(&hist) {
                Some((slope, resid)) => json!({"n": n, "log_slope": slope, "relative_residual": resid}),
                None => json!({"n": n, "log_slope": null, "relative_residual": null}),
            }
        })
        .collect();
    let last = curves.last().expect("cycles >= 1");
    let payload = json!({
        "m_test": f.m_test,
        "cycles": f.cycles,
        "eta": f.eta,
        "rabi_base_rad_per_us": f.rabi_base,
        "efficiency": f.efficiency,
        "p_dark_by_cycle": curves.iter().map(|c| c.per_n.clone()).collect::<Vec<_>>(),
        "final": last.per_n,
        "fits": fits,
    });
    sink.json("filter.json", "filter", payload)?;
    if cfg.output.svg {
        sink.svg("filter.svg", &figures::transmission_plot(&curves).render())?;
    }
    let worst_other = last
        .per_n
        .iter()
        .enumerate()
        .filter(|(n, _)| *n != f.m_test)
        .map(|(_, p)| *p)
        .fold(0.0, f64::max);
    println!(
        "filter: m_test={} after N={}: p_dark({})={:.6}, max over other n = {:.4e}",
        f.m_test,
        f.cycles,
        f.m_test,
        last.per_n.get(f.m_test).copied().unwrap_or(f64::NAN),
        worst_other
    );
    Ok(())
}


pub fn protocol(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let pc = cfg.protocol_config()?;
    let samples = run_protocol(&pc)?;
    let rows: Vec<Vec<String>> = samples
        .records
        .iter()
        .map(|r| {
            vec![
                r.shot.to_string(),
                r.n_true.to_string(),
                r.n_meas.to_string(),
                r.m_true.to_string(),
                r.m_meas.to_string(),
                fmt_f64(r.w),
                fmt_f64(r.weight),
            ]
        })
        .collect();
    sink.csv(
        "protocol.csv",
        &["shot", "n_true", "n_meas", "m_true", "m_meas", "w", "weight"],
        &rows,
        false,
    )?;
    let beta = pc.thermal.beta;
    let estimate = if beta.is_finite() {
        Some(estimate_jarzynski(&samples, beta)?)
    } else {
        None
    };
    let exact_target = if beta.is_finite() {
        let df = free_energy_difference(samples.omega0, samples.omega_tau, beta)?;
        Some((-beta * df).exp())
    } else {
        None
    };
    let tv = match (&pc.filter, pc.heating) {
        (FilterModel::Ideal, None) => {
            let tm = transition_matrix(&pc.ramp, &pc.trunc, pc.n_report, pc.integrator_tol)?;
            let exact = exact_conditional_distribution(&pc.thermal, &tm, pc.n_report);
            Some(total_variation(&empirical_distribution(&samples), &exact, 1e-9 * samples.omega0))
        }
        _ => None,
    };
    let timing = cycle_time_estimate(&cfg.protocol.timing)?;
    let payload = json!({
        "ramp": ramp_value(cfg),
        "nbar": cfg.thermal.nbar,
        "seed": samples.seed,
        "accepted": samples.accepted,
        "attempted": samples.attempted,
        "m_test_grid": pc.n_report,
        "first_filter": samples.first_filter,
        "estimate": estimate.map(|e| to_value(&e)),
        "exp_minus_beta_delta_f": exact_target,
        "total_variation_vs_exact": tv,
        "cycle_time": to_value(&timing),
    });
    sink.json("protocol.json", "protocol", payload)?;
    match estimate {
        Some(e) => println!(
            "protocol: {} accepted of {} attempted, <exp(-bW)> = {:.5} [{:.5}, {:.5}]",
            samples.accepted, samples.attempted, e.point, e.ci_low, e.ci_high
        ),
        None => println!("protocol: {} accepted of {} attempted", samples.accepted, samples.attempted),
    }
    Ok(())
}

pub fn bath(cfg: &RunConfig, sink: &mut OutputSink) -> Result<()> {
    let spec = cfg.bath_spec()?;
    let th = cfg.thermal_state()?;
    let t = cfg.bath.duration;
    let dist = heat_distribution(&spec, &th, t, &cfg.fock_truncation())?;
    let rows: Vec<Vec<String>> = dist.atoms.iter().map(|a| vec![fmt_f64(a.q), fmt_f64(a.p)]).collect();
    sink.csv("bath.csv", &["q_over_hw", "p"], &rows, false)?;
    let closed = crate::bath::mean_occupation(&spec, cfg.thermal.nbar, t);
    let payload = json!({
        "gamma_per_ms": spec.gamma,
        "n_env": spec.n_env,
        "omega_rad_per_us": spec.omega,
        "duration_ms": t,
        "nbar_initial": cfg.thermal.nbar,
        "atoms": dist.atoms.iter().map(|a| json!({"q_over_hw": a.q, "p": a.p})).collect::<Vec<_>>(),
        "mean_q_over_hw": dist.mean(),
        "mean_final_occupation": dist.mean_final_occupation,
        "closed_form_final_occupation": closed,
        "deficit": dist.deficit,
    });
    sink.json("bath.json", "bath", payload)?;
    if cfg.output.svg {
        let pts = dist.atoms.iter().filter(|a| a.p > 1e-5).map(|a| (a.q, a.p)).collect();
        let plot = Plot::new("Heat distribution", "Q / ħω", "P(Q)").series(&format!("t = {t} ms"), pts, Style::Stems);
        sink.svg("bath.svg", &plot.render())?;
    }
    println!("bath: <Q>/ħω = {:.9}, <n>(t) = {:.9}", dist.mean(), dist.mean_final_occupation);
    Ok(())
}
