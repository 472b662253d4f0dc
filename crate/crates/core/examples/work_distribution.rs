//! Work distribution of a thermal ion (n̄ = 1) for a fast and an adiabatic ramp.

use ionwork::model::{FockTruncation, FrequencyConvention, ThermalState};
use ionwork::propagator::RampSchedule;
use ionwork::work::{adiabatic_work_distribution, converged_transition_matrix, work_distribution, DEFAULT_COLUMN_TOL};

fn main() -> ionwork::Result<()> {
    let mhz = FrequencyConvention::MhzOrdinary;
    let (w0, wt) = (mhz.to_angular(1.0), mhz.to_angular(3.0));
    let thermal = ThermalState::new(1.0, w0)?;
    let trunc = FockTruncation { n_max_limit: 1024, ..FockTruncation::default() };

    let ramp = RampSchedule::new(w0, wt, 0.05)?;
    let tm = converged_transition_matrix(&ramp, &[thermal], &trunc, 1e-9, DEFAULT_COLUMN_TOL)?;
    let fast = work_distribution(&thermal, &tm)?;
    let slow = adiabatic_work_distribution(&thermal, wt, 1e-12);

    println!("{:>10} {:>12} {:>12}", "W/hw0", "tau=0.05us", "adiabatic");
    for w in -3..=10 {
        let w = w as f64;
        let p_fast = fast.probability_at(w * w0);
        let p_slow = slow.probability_at(w * w0);
        if p_fast > 1e-4 || p_slow > 1e-4 {
            println!("{w:>10} {p_fast:>12.6} {p_slow:>12.6}");
        }
    }
    println!("<W>/hw0: fast {:.4}, adiabatic {:.4}", fast.mean() / w0, slow.mean() / w0);
    println!("P(W = -hw0) = {:.4}", fast.probability_at(-w0));
    Ok(())
}
