//! EM and first-order EM from the same start on a three-center mixture,
//! printing the likelihood every few iterations and the final limit point.

use gmm_landscape::em::{classify_critical_point, run, ClassifyTolerances, Stepper, StoppingRule};
use gmm_landscape::{MixtureModel, QuadratureSpec};

fn main() -> gmm_landscape::Result<()> {
    let truth = MixtureModel::from_1d(&[-6.0, 0.0, 7.0])?;
    let quad = QuadratureSpec::default();
    let start = [-1.0, 0.5, 2.0];
    let stop = StoppingRule {
        max_iters: 20_000,
        grad_tol: Some(1e-8),
        ..StoppingRule::default()
    };
    let steppers = [
        (
            "EM",
            Stepper::PopulationEm {
                truth: &truth,
                quad,
            },
        ),
        (
            "first-order EM, s = 0.5",
            Stepper::FirstOrderEm {
                truth: &truth,
                quad,
                step: 0.5,
            },
        ),
    ];
    for (name, stepper) in &steppers {
        let traj = run(&start, stepper, &stop, None)?;
        println!(
            "{name}: {} iterations, stop {:?}",
            traj.iterations(),
            traj.stop
        );
        for k in (0..traj.t.len()).step_by((traj.t.len() / 8).max(1)) {
            println!(
                "  t = {:5}  L = {:.10}  |grad| = {:.3e}",
                traj.t[k], traj.likelihoods[k], traj.grad_norms[k]
            );
        }
        let report = classify_critical_point(
            traj.final_point(),
            &truth,
            &quad,
            &ClassifyTolerances::default(),
        )?;
        println!("  limit {:?}: {:?}", report.point, report.kind);
    }
    Ok(())
}
