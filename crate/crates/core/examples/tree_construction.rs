//! Hierarchical tree instances: centers and urns of the full tree for
//! `M = 8`, then the pruned tree for a few counts that are not powers of two.

use gmm_landscape::constructions::{
    pruned_tree, tree_construction, urns_at_level, TreeConstructionSpec,
};

fn main() -> gmm_landscape::Result<()> {
    let spec = TreeConstructionSpec::faithful(8)?;
    println!(
        "M = 8: levels {}, R = {:e}, ratio {}",
        spec.levels, spec.scale, spec.ratio
    );
    for c in tree_construction(&spec)?.centers_1d()? {
        println!("  center {c:.6e}");
    }
    for level in 1..=spec.levels {
        for urn in urns_at_level(&spec, level)? {
            println!(
                "  level {level}: [{:.6e}, {:.6e}] holds {}, [{:.6e}, {:.6e}] holds {}",
                urn.left.lo(),
                urn.left.hi(),
                urn.left_count,
                urn.right.lo(),
                urn.right.hi(),
                urn.right_count
            );
        }
    }
    for count in [3, 5, 6, 7] {
        let spec = TreeConstructionSpec::faithful(count)?;
        let centers = pruned_tree(&spec)?.centers_1d()?;
        println!("pruned M = {count}: {centers:?}");
    }
    Ok(())
}
