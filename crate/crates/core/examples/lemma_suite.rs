//! Randomized sweep of the supporting inequalities; prints the smallest
//! margin per inequality. The first argument sets configurations per check.

use std::collections::BTreeMap;

use gmm_landscape::experiments::{lemma_suite, LemmaSuiteConfig};

fn main() -> gmm_landscape::Result<()> {
    let per_lemma = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(100);
    let reports = lemma_suite(&LemmaSuiteConfig {
        per_lemma,
        master_seed: 11,
        ..LemmaSuiteConfig::default()
    })?;
    let mut by_lemma: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
    for r in &reports {
        let e = by_lemma
            .entry(r.lemma.as_str())
            .or_insert((0, 0, f64::INFINITY));
        e.0 += 1;
        e.1 += usize::from(!r.pass);
        e.2 = e.2.min(r.margin);
    }
    for (lemma, (n, failed, margin)) in by_lemma {
        println!("{lemma:24} {n:5} checks, {failed} failed, smallest margin {margin:.3e}");
    }
    Ok(())
}
