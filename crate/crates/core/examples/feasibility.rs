//! Duration of one measurement cycle against the D-state lifetime.

use ionwork::protocol::{cycle_time_estimate, CycleTiming, D_LIFETIME_MS};

fn main() -> ionwork::Result<()> {
    let timing = CycleTiming::default();
    let est = cycle_time_estimate(&timing)?;
    println!("{timing:?}");
    println!("preparation {:.3} ms, filters {:.3} ms, ramp {:.5} ms", est.prep_ms, est.filter_ms, est.ramp_ms);
    println!("total {:.3} ms = {:.4} of the {D_LIFETIME_MS} ms D lifetime", est.total_ms, est.lifetime_ratio);
    Ok(())
}
