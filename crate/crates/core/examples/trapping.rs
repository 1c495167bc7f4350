//! Diffuse instance with two centers near `-cδ` and one near `cδ`. EM
//! started with the opposite split (one candidate left, two right) keeps
//! those counts in both balls for good.

use gmm_landscape::constructions::{diffuse_regions, make_diffuse, DiffuseSpec};
use gmm_landscape::em::{run, Stepper, StoppingRule};
use gmm_landscape::experiments::trapping_check;
use gmm_landscape::QuadratureSpec;

fn main() -> gmm_landscape::Result<()> {
    let (c, delta) = (25.0, 3f64.ln() + 4.0);
    let cd = c * delta;
    let truth = make_diffuse(&DiffuseSpec {
        c,
        delta,
        inner_left: vec![-cd - 1.0, -cd + 1.5],
        inner_right: vec![cd],
        outer: vec![],
    })?;
    let regions = diffuse_regions(c, delta);
    let start = [-cd + 3.0, cd - 4.0, cd + 2.0];
    let stepper = Stepper::PopulationEm {
        truth: &truth,
        quad: QuadratureSpec::default(),
    };
    // Two candidates end up sharing one center, where EM converges slowly.
    let stop = StoppingRule {
        max_iters: 500,
        ..StoppingRule::default()
    };
    let traj = run(&start, &stepper, &stop, Some(&regions))?;
    let counts = traj.urn_counts.as_ref().expect("tracked");
    println!(
        "c = {c}, delta = {delta:.4}, centers {:?}",
        truth.centers_1d()?
    );
    println!(
        "start counts {:?}, final counts {:?}",
        counts[0],
        counts[counts.len() - 1]
    );
    println!(
        "final point {:?} after {} iterations ({:?})",
        traj.final_point(),
        traj.iterations(),
        traj.stop
    );
    println!("verdict {:?}", trapping_check(&traj));
    Ok(())
}
