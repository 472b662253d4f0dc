//! Transition probabilities for a linear ramp of ω², compared with the sudden limit.

use ionwork::model::{FockTruncation, FrequencyConvention};
use ionwork::propagator::{sudden_transition, transition_matrix, RampSchedule, DEFAULT_INTEGRATOR_TOL};

fn main() -> ionwork::Result<()> {
    let mhz = FrequencyConvention::MhzOrdinary;
    let (w0, wt) = (mhz.to_angular(1.0), mhz.to_angular(3.0));
    let trunc = FockTruncation::default();

    println!("P(n=2 -> m) for omega 1 -> 3 MHz");
    println!("{:>8} {:>10} {:>10} {:>10}", "tau/us", "m=0", "m=2", "m=4");
    for tau in [0.01, 0.05, 0.1, 1.0] {
        let tm = transition_matrix(&RampSchedule::new(w0, wt, tau)?, &trunc, 2, DEFAULT_INTEGRATOR_TOL)?;
        println!("{tau:>8} {:>10.6} {:>10.6} {:>10.6}", tm.get(0, 2), tm.get(2, 2), tm.get(4, 2));
    }

    // A very short ramp is a sudden quench.
    let tm = transition_matrix(&RampSchedule::new(w0, wt, 1e-4)?, &trunc, 2, DEFAULT_INTEGRATOR_TOL)?;
    let sudden = sudden_transition(w0, wt, 2, 0)?;
    println!("tau=1e-4 us: P(2->0) = {:.6}, sudden limit {sudden:.6}", tm.get(0, 2));
    Ok(())
}
