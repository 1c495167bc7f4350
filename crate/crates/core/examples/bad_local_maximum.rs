//! Three-component instance with a spurious local maximum: prints `v0` at
//! `(0, γR, γR)` and the face suprema `v1..v3` of region `D`.

use gmm_landscape::constructions::{boundary_values, BoundarySearch, ThreeComponentSpec};
use gmm_landscape::QuadratureSpec;

fn main() -> gmm_landscape::Result<()> {
    let spec = ThreeComponentSpec::desk_scale();
    let quad = QuadratureSpec::default();
    let bv = boundary_values(&spec, &quad, &BoundarySearch::default())?;
    println!("R = {}, gamma = {}", spec.scale, spec.gamma);
    println!("v0 = {:.10}", bv.v0);
    for f in &bv.faces {
        println!(
            "v{} = {:.10} at {:?} (grid {:.10}, converged {})",
            f.face, f.value, f.argmax, f.coarse_value, f.converged
        );
    }
    println!("margin v0 - max(v1, v2, v3) = {:.6}", bv.margin());
    Ok(())
}
