//! Exponential work average and the forward/backward relation for a fast ramp.

use ionwork::model::{FockTruncation, FrequencyConvention, ThermalState};
use ionwork::propagator::RampSchedule;
use ionwork::work::{crooks_check, crooks_distributions, free_energy_difference, DEFAULT_COLUMN_TOL};

fn main() -> ionwork::Result<()> {
    let mhz = FrequencyConvention::MhzOrdinary;
    let (w0, wt) = (mhz.to_angular(1.0), mhz.to_angular(3.0));
    let beta = ThermalState::new(1.0, w0)?.beta;
    let trunc = FockTruncation { n_max_limit: 1024, ..FockTruncation::default() };
    let ramp = RampSchedule::new(w0, wt, 0.05)?;

    let (forward, backward) = crooks_distributions(&ramp, beta, &trunc, 1e-9, DEFAULT_COLUMN_TOL)?;
    let report = crooks_check(&forward, &backward)?;
    let df = free_energy_difference(w0, wt, beta)?;

    println!("dF/hw0                 = {:.10}", df / w0);
    println!("<exp(-bW)>             = {:.12}", report.jarzynski_lhs);
    println!("exp(-b dF)             = {:.12}", (-beta * df).exp());
    println!("relative deviation     = {:.3e}", report.deviation);
    println!("max |log P_F/P_B - b(W-dF)| = {:.3e} over {} atoms", report.crooks_max_log_error, report.shared_atoms);
    Ok(())
}
