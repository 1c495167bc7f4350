//! Monte Carlo failure rate of population EM from random initialization on
//! the hard tree instance, compared with the exact good-initialization
//! probability.

use gmm_landscape::constructions::{tree_construction, TreeConstructionSpec};
use gmm_landscape::experiments::{
    exact_good_init_probability, mc_failure_rate, rational_to_f64, McConfig,
};

fn main() -> gmm_landscape::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let count = args.first().copied().unwrap_or(8);
    let trials = args.get(1).copied().unwrap_or(100);
    let spec = TreeConstructionSpec::faithful(count)?;
    let truth = tree_construction(&spec)?;
    let cfg = McConfig {
        trials,
        master_seed: 7,
        ..McConfig::default()
    };
    let report = mc_failure_rate(&truth, Some(&spec), &cfg)?;
    let s = &report.summary;
    let exact = exact_good_init_probability(count)?;
    println!("M = {count}, R = {:e}, trials = {trials}", spec.scale);
    println!(
        "success rate   {:.4}  [{:.4}, {:.4}]",
        s.success_rate, s.wilson_low, s.wilson_high
    );
    println!(
        "good-init rate {:.4}  [{:.4}, {:.4}]  exact {} = {:.6}",
        s.good_init_rate.unwrap_or(f64::NAN),
        s.good_init_wilson_low.unwrap_or(f64::NAN),
        s.good_init_wilson_high.unwrap_or(f64::NAN),
        exact,
        rational_to_f64(&exact)
    );
    println!("event E rate   {:.4}", s.event_e_rate);
    println!("smallest failure gap {:?}", s.c_gap);
    println!("runs stopped by max_iters {}", s.max_iters_hit);
    println!(
        "successes from bad initializations {}",
        s.necessity_violations
    );
    Ok(())
}
