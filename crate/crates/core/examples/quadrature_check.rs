//! Gauss–Hermite against the dense trapezoid rule on a few candidate sets,
//! including widely spaced ones whose midpoint lands inside the truth mass.
//! A much finer trapezoid grid serves as the reference.

use gmm_landscape::population::evaluate;
use gmm_landscape::{MixtureModel, QuadratureSpec};

fn main() -> gmm_landscape::Result<()> {
    let truth = MixtureModel::from_1d(&[-4.0, 4.0])?;
    let cases: [&[f64]; 4] = [&[-4.0, 4.0], &[0.0, 0.0], &[-10.0, 4.0], &[-300.0, 290.0]];
    for mu in cases {
        let a = evaluate(mu, &truth, &QuadratureSpec::default())?;
        let b = evaluate(mu, &truth, &QuadratureSpec::validation())?;
        let fine = evaluate(mu, &truth, &QuadratureSpec::trapezoid(2_000_001, 12.0))?;
        let gap = |x: &[f64], y: &[f64]| {
            x.iter()
                .zip(y)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        println!(
            "mu = {mu:?}: L = {:.12}; vs fine grid: Hermite |dL| {:.1e} |dgrad| {:.1e}, trapezoid |dL| {:.1e} |dgrad| {:.1e}",
            a.log_likelihood,
            (a.log_likelihood - fine.log_likelihood).abs(),
            gap(&a.gradient, &fine.gradient),
            (b.log_likelihood - fine.log_likelihood).abs(),
            gap(&b.gradient, &fine.gradient),
        );
    }
    Ok(())
}
