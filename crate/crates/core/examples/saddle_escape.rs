//! First-order EM from random initialization: every run reaches a critical
//! point, none of the limits is a strict saddle, and the Jacobian of the
//! update stays positive definite along the way.

use gmm_landscape::constructions::{three_component, ThreeComponentSpec};
use gmm_landscape::experiments::{saddle_avoidance_trial, SaddleConfig};
use gmm_landscape::MixtureModel;

fn main() -> gmm_landscape::Result<()> {
    let trials = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(50);
    let cases = [
        ("two centers {-4, 4}", MixtureModel::from_1d(&[-4.0, 4.0])?),
        (
            "three centers (-5, 5, 100)",
            three_component(&ThreeComponentSpec::desk_scale())?,
        ),
    ];
    for (name, truth) in cases {
        let cfg = SaddleConfig {
            trials,
            master_seed: 3,
            ..SaddleConfig::default()
        };
        let s = saddle_avoidance_trial(&truth, &cfg)?;
        let max_iters = s.records.iter().map(|r| r.iterations).max().unwrap_or(0);
        println!("{name}: {} trials", s.trials);
        println!(
            "  converged {}, strict saddles {}, local maxima {}, indeterminate {}",
            s.converged, s.strict_saddles, s.local_maxima, s.indeterminate
        );
        println!(
            "  longest run {max_iters} iterations, min Jacobian eigenvalue {:?}",
            s.min_jacobian_eigenvalue
        );
    }
    Ok(())
}
