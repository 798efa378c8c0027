//! Sparse two-part model on semicontinuous data: the regularization path,
//! selective cross-validation and the theory-guided penalty level.

use pivotblend::sim::{simulate_two_part, stream_rng, TwoPartSimSpec};
use pivotblend::twopart::{
    lambda_theory, s2_fit, select_lambda_scv, separate_fits, Omega, TwoPartConfig, TwoPartOptions,
    TwoPartProblem, LOGISTIC_DERIV_BOUND,
};

fn main() -> pivotblend::Result<()> {
    let spec = TwoPartSimSpec::benchmark(400, 12, 3)?;
    let (x, y) = simulate_two_part(&spec, &mut stream_rng(21, 0))?;
    let prob = TwoPartProblem::new(x, y, TwoPartConfig::default())?;
    println!("{} rows, {} positive, true support {:?}", prob.n_total(), prob.n_pos(), spec.support());

    let opts = TwoPartOptions::default();
    let scv = select_lambda_scv(&prob, 5, 20, 21, &opts)?;
    for (k, fit) in scv.path.iter().enumerate().step_by(4) {
        println!(
            "lambda {:9.4}: support {:?}, validation loss {:.4}",
            fit.lambda_used, fit.support, scv.mean_loss[k]
        );
    }
    let best = scv.selected();
    println!("SCV choice lambda {:.4}: support {:?}", scv.lambda_star, best.support);

    let sep = separate_fits(&prob, &opts.refit)?;
    let omega = Omega::Auto { base: prob.config().base, skew: sep.skew(), b_bound: LOGISTIC_DERIV_BOUND };
    let lambda = lambda_theory(prob.p(), 2.0, 1.0, omega)?;
    let fit = s2_fit(&prob, lambda, &opts)?;
    println!("theory lambda {lambda:.4}: support {:?}", fit.support);
    Ok(())
}
