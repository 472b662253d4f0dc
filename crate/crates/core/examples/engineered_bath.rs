//! Heat exchanged with a zero-temperature and a thermal reservoir.

use ionwork::bath::{heat_distribution, mean_occupation, BathSpec};
use ionwork::model::{FockTruncation, ThermalState};

fn main() -> ionwork::Result<()> {
    let omega = 2.0 * std::f64::consts::PI;
    let initial = ThermalState::new(2.0, omega)?;
    let trunc = FockTruncation::default();

    for n_env in [0.0, 1.0] {
        let bath = BathSpec::new(1.0, n_env, omega)?;
        println!("N_env = {n_env}");
        for t in [0.1, 1.0, 5.0] {
            let q = heat_distribution(&bath, &initial, t, &trunc)?;
            let expected = mean_occupation(&bath, initial.nbar, t) - initial.nbar;
            let p_minus_one = q.atoms.iter().find(|a| a.q == -1.0).map_or(0.0, |a| a.p);
            println!(
                "  t = {t:>3} ms: <Q>/hw = {:>9.6} (closed form {expected:>9.6}), P(Q = -hw) = {p_minus_one:.4}",
                q.mean()
            );
        }
    }
    Ok(())
}
