//! Pairs bootstrap intervals for the pivot, the scales and the slopes, plus
//! bootstrap selection frequencies of the two-part model.

use pivotblend::sim::{bootstrap, preset, selection_frequencies, simulate_dataset, simulate_two_part, stream_rng, TwoPartSimSpec};
use pivotblend::speus::{FitOptions, SpeusProblem};
use pivotblend::twopart::{TwoPartConfig, TwoPartOptions, TwoPartProblem};

fn main() -> pivotblend::Result<()> {
    let spec = preset("ex2-gauss", 3.0, 1, 4)?;
    let data = simulate_dataset(&spec, &mut stream_rng(4, 0))?;
    let prob = SpeusProblem::new(data.x, data.y, spec.truth.base)?;
    let res = bootstrap(&prob, 100, 0.9, 4, &FitOptions::default())?;
    let t = &spec.truth.skew_star;
    for (name, ci, truth) in [("m", res.ci_m, t.m), ("sigma", res.ci_sigma, t.sigma), ("nu", res.ci_nu, t.nu)] {
        println!("{name:>5}: 90% [{:.3}, {:.3}], truth {truth:.3}", ci.lo, ci.hi);
    }
    for (j, ci) in res.ci_beta.iter().enumerate() {
        println!("beta{}: 90% [{:.3}, {:.3}], truth {:.3}", j + 1, ci.lo, ci.hi, spec.truth.beta_star[j]);
    }

    let tp = TwoPartSimSpec::benchmark(300, 8, 2)?;
    let (x, y) = simulate_two_part(&tp, &mut stream_rng(4, 1))?;
    let prob = TwoPartProblem::new(x, y, TwoPartConfig::default())?;
    let freq = selection_frequencies(&prob, 20, 5, 15, 4, &TwoPartOptions::default())?;
    println!("selection frequencies over {} draws: {:?}", freq.n_draws, freq.frequency);
    Ok(())
}
