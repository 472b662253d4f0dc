//! Zero-fluorescence probability of the number-state filter against the input phonon number.

use ionwork::filter::{log_linear_fit, transmission_curves, FilterParams};

fn main() -> ionwork::Result<()> {
    let m_test = 3;
    let params = FilterParams::default();
    let curves = transmission_curves(m_test, 10, &params, 10)?;

    print!("{:>3}", "n");
    for c in curves.iter().step_by(3) {
        print!(" {:>9}", format!("N={}", c.cycles));
    }
    println!(" {:>12}", "log slope");
    for n in 0..=10 {
        print!("{n:>3}");
        for c in curves.iter().step_by(3) {
            print!(" {:>9.5}", c.per_n[n]);
        }
        let history: Vec<f64> = curves.iter().map(|c| c.per_n[n]).collect();
        match log_linear_fit(&history) {
            Some((slope, _)) if n != m_test => println!(" {slope:>12.4}"),
            _ => println!(" {:>12}", "-"),
        }
    }
    Ok(())
}
