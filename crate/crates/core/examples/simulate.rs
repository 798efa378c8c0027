//! Monte Carlo benchmark: repeated simulate-then-fit with the error metrics.

use pivotblend::sim::{preset, run_experiment, PRESETS};

fn main() -> pivotblend::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "ex2-gauss".into());
    let ratio: f64 = std::env::args().nth(2).and_then(|r| r.parse().ok()).unwrap_or(3.0);
    if !PRESETS.contains(&name.as_str()) {
        eprintln!("presets: {}", PRESETS.join(", "));
    }
    let spec = preset(&name, ratio, 20, 2024)?;
    let res = run_experiment(&spec)?;
    let m = &res.metrics;
    println!(
        "{}: Err(beta) {:.4}, Err(sigma) {:.4}, Err(nu) {:.4}, Err(m) {:.4}, {} ok / {} failed, {:.2}s per fit",
        spec.name, m.err_beta, m.err_sigma, m.err_nu, m.err_m, m.n_ok, m.n_failed, m.mean_runtime
    );
    Ok(())
}
