//! Likelihood surface of a two-center mixture with centers `±4`. Writes the
//! grid as CSV to the path given as the first argument (stdout otherwise)
//! and lists the refined critical points on stderr.

use std::fs::File;
use std::io::{self, Write};

use gmm_landscape::landscape::{likelihood_surface, RefineSettings, SurfaceGrid};
use gmm_landscape::{MixtureModel, QuadratureSpec};

fn main() -> gmm_landscape::Result<()> {
    let truth = MixtureModel::from_1d(&[-4.0, 4.0])?;
    let surface = likelihood_surface(
        &truth,
        &SurfaceGrid::default(),
        &QuadratureSpec::default(),
        &RefineSettings::default(),
    )?;
    let out: Box<dyn Write> = match std::env::args().nth(1) {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    surface.write_csv(out)?;
    for p in &surface.critical_points {
        eprintln!(
            "{:?} at ({:.6}, {:.6}): L = {:.8}, Hessian eigenvalues {:?}",
            p.kind, p.point[0], p.point[1], p.log_likelihood, p.hessian_eigenvalues
        );
    }
    Ok(())
}
