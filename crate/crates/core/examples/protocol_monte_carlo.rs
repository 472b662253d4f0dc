//! Seeded emulation of prepare / filter / ramp / filter with ideal filters.

use ionwork::model::{FrequencyConvention, ThermalState};
use ionwork::propagator::RampSchedule;
use ionwork::protocol::{
    empirical_distribution, estimate_jarzynski, exact_conditional_distribution, run_protocol, total_variation,
    ProtocolConfig,
};
use ionwork::propagator::transition_matrix;
use ionwork::work::free_energy_difference;

fn main() -> ionwork::Result<()> {
    let mhz = FrequencyConvention::MhzOrdinary;
    let (w0, wt) = (mhz.to_angular(1.0), mhz.to_angular(3.0));
    let thermal = ThermalState::new(1.0, w0)?;
    let cfg = ProtocolConfig::new(thermal, RampSchedule::new(w0, wt, 0.05)?, 20_000, 2024);

    let samples = run_protocol(&cfg)?;
    let tm = transition_matrix(&cfg.ramp, &cfg.trunc, cfg.n_report, cfg.integrator_tol)?;
    let exact = exact_conditional_distribution(&thermal, &tm, cfg.n_report);
    let tv = total_variation(&empirical_distribution(&samples), &exact, 1e-9 * w0);
    let est = estimate_jarzynski(&samples, thermal.beta)?;
    let target = (-thermal.beta * free_energy_difference(w0, wt, thermal.beta)?).exp();

    println!("accepted {} of {} shots", samples.accepted, samples.attempted);
    println!("total variation to exact conditional P(W): {tv:.4}");
    println!("<exp(-bW)> = {:.4}  95% CI [{:.4}, {:.4}]  target {target:.4}", est.point, est.ci_low, est.ci_high);
    Ok(())
}
