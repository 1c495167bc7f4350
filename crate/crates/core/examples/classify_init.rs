//! Random initializations on the eight-leaf tree: how each is classified and
//! the exact probability that a random start is good.

use gmm_landscape::constructions::{tree_construction, TreeConstructionSpec};
use gmm_landscape::experiments::{
    classify_init, exact_good_init_probability, init_points, random_init, rational_to_f64,
};
use gmm_landscape::rng::trial_rng;

fn main() -> gmm_landscape::Result<()> {
    let spec = TreeConstructionSpec::faithful(8)?;
    let truth = tree_construction(&spec)?;
    let p = exact_good_init_probability(8)?;
    println!("P(good start) = {p} = {:.6}", rational_to_f64(&p));
    for k in 0..6 {
        let points = init_points(&random_init(&truth, &mut trial_rng(21, k)));
        let c = classify_init(&points, &spec)?;
        let splits: Vec<String> = c
            .levels
            .iter()
            .map(|s| format!("{}|{}", s.left, s.right))
            .collect();
        println!(
            "start {k}: good {:5} via {:?}, splits {}",
            c.good,
            c.reason,
            splits.join(" ")
        );
    }
    Ok(())
}
