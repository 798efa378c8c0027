//! Bounded-loss fit with redescending Tukey loss on data with gross outliers.

use pivotblend::density::{BaseDensity, SkewSpec};
use pivotblend::sim::{preset, simulate_dataset, stream_rng};
use pivotblend::speus::{speus_fit, speus_fit_bounded, BoundedLoss, FitOptions, SpeusProblem};

fn main() -> pivotblend::Result<()> {
    let spec = preset("ex1-gauss", 2.0, 1, 3)?;
    let mut data = simulate_dataset(&spec, &mut stream_rng(3, 0))?;
    for i in (0..data.y.len()).step_by(25) {
        data.y[i] += 40.0;
    }
    let prob = SpeusProblem::new(data.x, data.y, BaseDensity::gaussian())?;
    let mle = speus_fit(&prob, &FitOptions::default())?;
    let robust = speus_fit_bounded(
        &prob,
        &BoundedLoss::Tukey { c: 4.685 },
        SkewSpec::new(0.0, spec.truth.skew_star.sigma, spec.truth.skew_star.nu)?,
        &FitOptions::default(),
    )?;
    let show = |b: &[f64]| b.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", ");
    println!("truth           beta [{}]", show(&spec.truth.beta_star));
    println!("likelihood fit  beta [{}]", show(&mle.beta));
    println!("Tukey fit       beta [{}], pivot {:.3}", show(&robust.beta), robust.skew.m);
    Ok(())
}
