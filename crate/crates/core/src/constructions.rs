//! Adversarial truth models and their geometry.
//!
//! * the three-component family `(-R, R, γR)` and the region `D` that traps
//!   a spurious local maximum, together with a numerical search for the
//!   boundary suprema `v1..v3`;
//! * the `M`-component extension;
//! * the recursive tree with `2^m` leaves, pruning to arbitrary `M`, and the
//!   nested urns that initial centers are sorted into;
//! * `(c, δ)`-diffuse instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::TrackedRegions;
use crate::error::{Error, Result};
use crate::gmm::MixtureModel;
use crate::population::{evaluate, population_log_likelihood};
use crate::quadrature::QuadratureSpec;

/// Closed interval `[center - halfwidth, center + halfwidth]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub center: f64,
    pub halfwidth: f64,
}

impl Interval {
    pub fn new(center: f64, halfwidth: f64) -> Self {
        Self { center, halfwidth }
    }

    pub fn lo(&self) -> f64 {
        self.center - self.halfwidth
    }

    pub fn hi(&self) -> f64 {
        self.center + self.halfwidth
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.center).abs() <= self.halfwidth
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo() <= other.hi() && other.lo() <= self.hi()
    }
}

// ---------------------------------------------------------------------------
// Three-component family
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeComponentSpec {
    /// `R`.
    pub scale: f64,
    /// `γ`.
    pub gamma: f64,
}

impl ThreeComponentSpec {
    pub fn new(scale: f64, gamma: f64) -> Result<Self> {
        let s = Self { scale, gamma };
        s.validate()?;
        Ok(s)
    }

    /// `R = 5, γ = 20`, where the interior point beats every face of `D`.
    pub fn desk_scale() -> Self {
        Self {
            scale: 5.0,
            gamma: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid("scale", "R must be positive"));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(Error::invalid("gamma", "γ must exceed 1"));
        }
        Ok(())
    }

    /// `γR`.
    pub fn far(&self) -> f64 {
        self.gamma * self.scale
    }

    /// The interior point `(0, γR, γR)` of `D`.
    pub fn interior_point(&self) -> [f64; 3] {
        [0.0, self.far(), self.far()]
    }
}

pub fn three_component(spec: &ThreeComponentSpec) -> Result<MixtureModel> {
    spec.validate()?;
    MixtureModel::from_1d(&[-spec.scale, spec.scale, spec.far()])
}

/// Membership in `D = {μ_1 ≤ γR/3, μ_j ≥ 2γR/3 for j ≥ 2}`. The same rule
/// defines `D_M` for the `M`-component extension.
pub fn region_d_contains(mu: &[f64], spec: &ThreeComponentSpec) -> bool {
    let far = spec.far();
    match mu.split_first() {
        Some((first, rest)) => {
            *first <= far / 3.0 && !rest.is_empty() && rest.iter().all(|&m| m >= 2.0 * far / 3.0)
        }
        None => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundarySearch {
    /// Grid points per free coordinate on each face.
    pub grid: usize,
    /// Unbounded face directions are cut at `±box_factor·γR`.
    pub box_factor: f64,
    /// Best grid points refined by projected EM.
    pub starts: usize,
    pub max_refine_iters: usize,
}

impl Default for BoundarySearch {
    fn default() -> Self {
        Self {
            grid: 64,
            box_factor: 5.0,
            starts: 4,
            max_refine_iters: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceMaximum {
    /// 1, 2 or 3: index of the coordinate pinned to the face.
    pub face: usize,
    pub value: f64,
    pub argmax: [f64; 3],
    /// Best value on the coarse grid alone.
    pub coarse_value: f64,
    /// False when no refinement run met its stopping criterion within budget.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValues {
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub interior: [f64; 3],
    pub argmaxes: [[f64; 3]; 3],
    pub faces: Vec<FaceMaximum>,
}

impl BoundaryValues {
    /// `v0 - max(v1, v2, v3)`.
    pub fn margin(&self) -> f64 {
        self.v0 - self.v1.max(self.v2).max(self.v3)
    }
}

/// Coordinate bounds of a face: the pinned coordinate has `lo == hi`.
fn face_bounds(spec: &ThreeComponentSpec, face: usize, box_factor: f64) -> [(f64, f64); 3] {
    let far = spec.far();
    let (a, b) = (far / 3.0, 2.0 * far / 3.0);
    let top = box_factor * far;
    let mut bounds = [(-top, a), (b, top), (b, top)];
    match face {
        1 => bounds[0] = (a, a),
        2 => bounds[1] = (b, b),
        _ => bounds[2] = (b, b),
    }
    bounds
}

/// Projected EM on a face: free coordinates move to their M-step centroid
/// clamped into bounds. Each step maximizes the separable EM surrogate over
/// the box, so the likelihood never decreases.
fn refine_on_face(
    start: [f64; 3],
    bounds: &[(f64, f64); 3],
    truth: &MixtureModel,
    quad: &QuadratureSpec,
    max_iters: usize,
) -> Result<([f64; 3], f64, bool)> {
    let mut mu = start;
    let mut value = population_log_likelihood(&mu, truth, quad)?;
    for _ in 0..max_iters {
        let e = evaluate(&mu, truth, quad)?;
        let mut next = mu;
        for i in 0..3 {
            let (lo, hi) = bounds[i];
            next[i] = e.centroid[i].clamp(lo, hi);
        }
        let moved = next
            .iter()
            .zip(&mu)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let new_value = population_log_likelihood(&next, truth, quad)?;
        let gain = new_value - value;
        if new_value >= value {
            mu = next;
            value = new_value;
        }
        if moved <= 1e-9 || gain.abs() <= 1e-13 {
            return Ok((mu, value, true));
        }
    }
    Ok((mu, value, false))
}

fn face_maximum(
    spec: &ThreeComponentSpec,
    truth: &MixtureModel,
    quad: &QuadratureSpec,
    search: &BoundarySearch,
    face: usize,
) -> Result<FaceMaximum> {
    let bounds = face_bounds(spec, face, search.box_factor);
    let free: Vec<usize> = (0..3).filter(|&i| bounds[i].0 != bounds[i].1).collect();
    let n = search.grid;
    let axis = |i: usize, k: usize| {
        let (lo, hi) = bounds[i];
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    };
    let mut points: Vec<[f64; 3]> = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let mut p = [bounds[0].0, bounds[1].0, bounds[2].0];
            p[free[0]] = axis(free[0], a);
            p[free[1]] = axis(free[1], b);
            points.push(p);
        }
    }
    let values = points
        .par_iter()
        .map(|p| population_log_likelihood(p, truth, quad))
        .collect::<Result<Vec<f64>>>()?;
    let mut ranked: Vec<usize> = (0..points.len()).collect();
    ranked.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let coarse_value = values[ranked[0]];

    let refined = ranked[..search.starts.min(ranked.len())]
        .par_iter()
        .map(|&i| refine_on_face(points[i], &bounds, truth, quad, search.max_refine_iters))
        .collect::<Result<Vec<_>>>()?;
    let converged = refined.iter().any(|r| r.2);
    let best = refined
        .into_iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    Ok(FaceMaximum {
        face,
        value: best.1.max(coarse_value),
        argmax: best.0,
        coarse_value,
        converged,
    })
}

/// `v0 = L(0, γR, γR)` and the suprema of `L` over the three faces of `D`,
/// each searched on a grid and refined by projected EM.
pub fn boundary_values(
    spec: &ThreeComponentSpec,
    quad: &QuadratureSpec,
    search: &BoundarySearch,
) -> Result<BoundaryValues> {
    if search.grid < 50 {
        return Err(Error::invalid("grid", "need at least 50 points per axis"));
    }
    if !(search.box_factor > 1.0) || search.starts == 0 {
        return Err(Error::invalid(
            "search",
            "box_factor > 1 and starts ≥ 1 required",
        ));
    }
    let truth = three_component(spec)?;
    let interior = spec.interior_point();
    let v0 = population_log_likelihood(&interior, &truth, quad)?;
    let faces = (1..=3)
        .map(|f| face_maximum(spec, &truth, quad, search, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundaryValues {
        v0,
        v1: faces[0].value,
        v2: faces[1].value,
        v3: faces[2].value,
        interior,
        argmaxes: [faces[0].argmax, faces[1].argmax, faces[2].argmax],
        faces,
    })
}

/// `μ_i = (2i - M)R / (M - 2)` for `i < M` and `μ_M = γR`.
pub fn extended_m_construction(count: usize, scale: f64, gamma: f64) -> Result<MixtureModel> {
    if count < 3 {
        return Err(Error::invalid("count", "the extension needs M ≥ 3"));
    }
    ThreeComponentSpec::new(scale, gamma)?;
    let m = count as f64;
    let mut centers: Vec<f64> = (1..count)
        .map(|i| (2.0 * i as f64 - m) * scale / (m - 2.0))
        .collect();
    centers.push(gamma * scale);
    MixtureModel::from_1d(&centers)
}

// ---------------------------------------------------------------------------
// Tree construction
// ---------------------------------------------------------------------------

/// Geometric decay between tree levels used by the hard instance.
pub const TREE_RATIO: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConstructionSpec {
    /// `m`.
    pub levels: usize,
    /// `R`.
    pub scale: f64,
    pub ratio: f64,
    /// `M`, with `2^(m-1) < M ≤ 2^m`.
    pub count: usize,
    /// Enforce `ratio = 1/100` and `R ≥ 100^(m+1) (M+1)`.
    pub faithful: bool,
}

impl TreeConstructionSpec {
    /// Smallest admissible scale `R = 100^(m+1) (M+1)` with `m = ⌈log2 M⌉`.
    pub fn faithful(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("count", "tree needs M ≥ 2"));
        }
        let levels = tree_levels(count);
        let spec = Self {
            levels,
            scale: 100f64.powi(levels as i32 + 1) * (count as f64 + 1.0),
            ratio: TREE_RATIO,
            count,
            faithful: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        self.scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn relaxed(levels: usize, scale: f64, ratio: f64, count: usize) -> Result<Self> {
        let spec = Self {
            levels,
            scale,
            ratio,
            count,
            faithful: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn leaves(&self) -> usize {
        1 << self.levels
    }

    /// Smallest faithful scale for this `m` and `M`.
    pub fn minimum_faithful_scale(&self) -> f64 {
        100f64.powi(self.levels as i32 + 1) * (self.count as f64 + 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 20 {
            return Err(Error::invalid("levels", "need 1 ≤ m ≤ 20"));
        }
        let leaves = self.leaves();
        if self.count > leaves || 2 * self.count <= leaves {
            return Err(Error::invalid(
                "count",
                format!(
                    "M = {} is not in (2^(m-1), 2^m] for m = {}",
                    self.count, self.levels
                ),
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid("scale", "R must be positive"));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0 / 3.0) {
            return Err(Error::invalid("ratio", "nested urns need 0 < ratio < 1/3"));
        }
        if self.faithful {
            if self.ratio != TREE_RATIO {
                return Err(Error::Hypothesis(
                    "faithful mode requires ratio = 1/100".into(),
                ));
            }
            if self.levels > 4 {
                return Err(Error::Hypothesis("faithful mode supports m ≤ 4".into()));
            }
            if self.scale < self.minimum_faithful_scale() {
                return Err(Error::Hypothesis(format!(
                    "faithful mode requires R ≥ 100^(m+1)(M+1) = {}",
                    self.minimum_faithful_scale()
                )));
            }
        }
        Ok(())
    }

    /// Offset of a child from its parent at `level` (1-based).
    fn step(&self, level: usize) -> f64 {
        self.ratio.powi(level as i32 - 1) * self.scale
    }

    /// Halfwidth of urns at `level`: `2R·ratio^level / (1 - ratio)`, which is
    /// `2R/99` at level 1 for ratio 1/100.
    pub fn urn_halfwidth(&self, level: usize) -> f64 {
        2.0 * self.scale * self.ratio.powi(level as i32) / (1.0 - self.ratio)
    }

    /// Center of the node reached by the first `depth` bits of `leaf`.
    fn node_center(&self, leaf: usize, depth: usize) -> f64 {
        (1..=depth)
            .map(|level| {
                let bit = (leaf >> (self.levels - level)) & 1;
                let sign = if bit == 1 { 1.0 } else { -1.0 };
                sign * self.step(level)
            })
            .sum()
    }

    fn leaf_center(&self, leaf: usize) -> f64 {
        self.node_center(leaf, self.levels)
    }
}

/// Smallest `m ≥ 1` with `M ≤ 2^m`.
pub fn tree_levels(count: usize) -> usize {
    let mut m = 0;
    while (1usize << m) < count {
        m += 1;
    }
    m.max(1)
}

/// Leaf indices kept by the ceil/floor split, ascending.
fn selected_leaves(spec: &TreeConstructionSpec) -> Vec<usize> {
    fn walk(depth: usize, levels: usize, prefix: usize, k: usize, out: &mut Vec<usize>) {
        if k == 0 {
            return;
        }
        if depth == levels {
            out.push(prefix);
            return;
        }
        let left = k.div_ceil(2);
        walk(depth + 1, levels, prefix << 1, left, out);
        walk(depth + 1, levels, (prefix << 1) | 1, k - left, out);
    }
    let mut out = Vec::with_capacity(spec.count);
    walk(0, spec.levels, 0, spec.count, &mut out);
    out
}

/// All `2^m` centers `Σ_i ε_i ratio^(i-1) R`, ascending.
pub fn tree_construction(spec: &TreeConstructionSpec) -> Result<MixtureModel> {
    spec.validate()?;
    if spec.count != spec.leaves() {
        return Err(Error::invalid(
            "count",
            "the full tree needs M = 2^m; use pruned_tree",
        ));
    }
    pruned_tree(spec)
}

/// `M` leaves of the `2^m`-leaf tree: at every node `⌈l/2⌉` of the `l`
/// centers go to the left subtree and `⌊l/2⌋` to the right, so a lone center
/// ends at its leftmost descendant.
pub fn pruned_tree(spec: &TreeConstructionSpec) -> Result<MixtureModel> {
    spec.validate()?;
    let centers: Vec<f64> = selected_leaves(spec)
        .into_iter()
        .map(|leaf| spec.leaf_center(leaf))
        .collect();
    MixtureModel::from_1d(&centers)
}

/// The two child urns of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrnPartition {
    pub level: usize,
    pub left: Interval,
    pub right: Interval,
    /// True centers in each urn.
    pub left_count: usize,
    pub right_count: usize,
}

/// The `2^level` urns at `level`, grouped by parent node (left to right).
pub fn urns_at_level(spec: &TreeConstructionSpec, level: usize) -> Result<Vec<UrnPartition>> {
    spec.validate()?;
    if level == 0 || level > spec.levels {
        return Err(Error::invalid(
            "level",
            format!("must be in 1..={}", spec.levels),
        ));
    }
    let selected = selected_leaves(spec);
    let shift = spec.levels - level;
    let half = spec.urn_halfwidth(level);
    let parents = 1usize << (level - 1);
    Ok((0..parents)
        .map(|p| {
            let left_node = p << 1;
            let right_node = left_node | 1;
            let count = |node: usize| selected.iter().filter(|&&l| l >> shift == node).count();
            UrnPartition {
                level,
                left: Interval::new(spec.node_center(left_node << shift, level), half),
                right: Interval::new(spec.node_center(right_node << shift, level), half),
                left_count: count(left_node),
                right_count: count(right_node),
            }
        })
        .collect())
}

/// Level-1 urns as tracked regions for a run.
pub fn top_level_regions(spec: &TreeConstructionSpec) -> Result<TrackedRegions> {
    let p = urns_at_level(spec, 1)?[0];
    Ok(TrackedRegions {
        left: p.left,
        right: p.right,
        outer: None,
    })
}

// ---------------------------------------------------------------------------
// Diffuse instances
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffuseSpec {
    pub c: f64,
    pub delta: f64,
    /// Centers in `B(-cδ, δ)`.
    pub inner_left: Vec<f64>,
    /// Centers in `B(cδ, δ)`.
    pub inner_right: Vec<f64>,
    /// Centers outside `B(0, 20cδ)`.
    pub outer: Vec<f64>,
}

impl DiffuseSpec {
    /// `M`, the number of centers in the two inner balls.
    pub fn inner_count(&self) -> usize {
        self.inner_left.len() + self.inner_right.len()
    }

    /// `M̃`.
    pub fn total_count(&self) -> usize {
        self.inner_count() + self.outer.len()
    }
}

pub fn diffuse_balls(c: f64, delta: f64) -> (Interval, Interval, Interval) {
    let cd = c * delta;
    (
        Interval::new(-cd, delta),
        Interval::new(cd, delta),
        Interval::new(0.0, 20.0 * cd),
    )
}

/// Counting regions `B(-cδ, 2δ)`, `B(cδ, 2δ)` and the complement of `B(0, 20cδ)`.
pub fn diffuse_regions(c: f64, delta: f64) -> TrackedRegions {
    let cd = c * delta;
    TrackedRegions {
        left: Interval::new(-cd, 2.0 * delta),
        right: Interval::new(cd, 2.0 * delta),
        outer: Some(Interval::new(0.0, 20.0 * cd)),
    }
}

fn diffuse_ok(centers: &[f64], c: f64, delta: f64) -> bool {
    if !(c > 0.0 && delta > 0.0) {
        return false;
    }
    let (left, right, core) = diffuse_balls(c, delta);
    let in_left = centers.iter().filter(|&&x| left.contains(x)).count();
    let in_right = centers.iter().filter(|&&x| right.contains(x)).count();
    let placed = centers
        .iter()
        .all(|&x| left.contains(x) || right.contains(x) || !core.contains(x));
    in_left >= 1 && in_right >= 1 && placed
}

/// Checks that `model` is `(c, δ)`-diffuse: every center lies in one of the
/// inner balls or outside `B(0, 20cδ)`, and both inner balls are occupied.
pub fn validate_diffuse(model: &MixtureModel, c: f64, delta: f64) -> bool {
    match model.centers_1d() {
        Ok(centers) => diffuse_ok(&centers, c, delta),
        Err(_) => false,
    }
}

pub fn make_diffuse(spec: &DiffuseSpec) -> Result<MixtureModel> {
    let (left, right, core) = diffuse_balls(spec.c, spec.delta);
    if spec.inner_left.iter().any(|&x| !left.contains(x))
        || spec.inner_right.iter().any(|&x| !right.contains(x))
        || spec.outer.iter().any(|&x| core.contains(x))
    {
        return Err(Error::Hypothesis(
            "a center lies outside its assigned region".into(),
        ));
    }
    let centers: Vec<f64> = spec
        .inner_left
        .iter()
        .chain(&spec.inner_right)
        .chain(&spec.outer)
        .copied()
        .collect();
    if !diffuse_ok(&centers, spec.c, spec.delta) {
        return Err(Error::Hypothesis(
            "both inner balls must hold a center".into(),
        ));
    }
    MixtureModel::from_1d(&centers)
}

/// `c > 20` and `δ > log M + 3`.
pub fn check_trapping_hypotheses(c: f64, delta: f64, count: usize) -> Result<()> {
    if !(c > 20.0) {
        return Err(Error::Hypothesis(format!("c = {c} must exceed 20")));
    }
    let need = (count as f64).ln() + 3.0;
    if !(delta > need) {
        return Err(Error::Hypothesis(format!(
            "δ = {delta} must exceed log M + 3 = {need}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::min_separation;

    #[test]
    fn three_component_centers() {
        let m = three_component(&ThreeComponentSpec::new(1.0, 10.0).unwrap()).unwrap();
        assert_eq!(m.centers_1d().unwrap(), vec![-1.0, 1.0, 10.0]);
        let m = three_component(&ThreeComponentSpec::new(5.0, 20.0).unwrap()).unwrap();
        assert_eq!(m.centers_1d().unwrap(), vec![-5.0, 5.0, 100.0]);
        for (r, g) in [(1.0, 10.0), (2.0, 2.5), (3.0, 1.5)] {
            let m = three_component(&ThreeComponentSpec::new(r, g).unwrap()).unwrap();
            let want = (2.0 * r).min((g - 1.0) * r);
            assert!((min_separation(&m).unwrap() - want).abs() < 1e-12);
        }
        assert!(ThreeComponentSpec::new(1.0, 1.0).is_err());
        assert!(ThreeComponentSpec::new(-1.0, 3.0).is_err());
    }

    #[test]
    fn region_d_membership() {
        let s = ThreeComponentSpec::new(2.0, 15.0).unwrap();
        let far = s.far();
        assert!(region_d_contains(&s.interior_point(), &s));
        assert!(!region_d_contains(&[-2.0, 2.0, far], &s));
        assert!(region_d_contains(&[far / 3.0, far, far], &s));
        assert!(!region_d_contains(&[far / 3.0 + 1e-9, far, far], &s));
        assert!(!region_d_contains(&[0.0], &s));
    }

    #[test]
    fn extended_construction() {
        let m = extended_m_construction(3, 1.0, 10.0).unwrap();
        assert_eq!(m.centers_1d().unwrap(), vec![-1.0, 1.0, 10.0]);
        let m = extended_m_construction(4, 3.0, 50.0).unwrap();
        assert_eq!(m.centers_1d().unwrap(), vec![-3.0, 0.0, 3.0, 150.0]);
        for k in 3..12 {
            let c = extended_m_construction(k, 2.0, 4.0)
                .unwrap()
                .centers_1d()
                .unwrap();
            assert!(c.windows(2).all(|p| p[0] < p[1]), "M = {k}");
        }
        assert!(extended_m_construction(2, 1.0, 10.0).is_err());
    }

    #[test]
    fn small_trees() {
        let s = TreeConstructionSpec::relaxed(1, 1.0, 0.01, 2).unwrap();
        assert_eq!(
            tree_construction(&s).unwrap().centers_1d().unwrap(),
            vec![-1.0, 1.0]
        );
        let s = TreeConstructionSpec::relaxed(2, 1.0, 0.01, 4).unwrap();
        let c = tree_construction(&s).unwrap().centers_1d().unwrap();
        let want = [-1.01, -0.99, 0.99, 1.01];
        assert!(c.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        let s3 = TreeConstructionSpec::relaxed(2, 1.0, 0.01, 3).unwrap();
        assert!(tree_construction(&s3).is_err());
        let c = pruned_tree(&s3).unwrap().centers_1d().unwrap();
        let want = [-1.01, -0.99, 0.99];
        assert!(c.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn faithful_scale_and_validation() {
        let s = TreeConstructionSpec::faithful(8).unwrap();
        assert_eq!(s.levels, 3);
        assert_eq!(s.scale, 9.0e8);
        assert!(s.with_scale(1.0e8).is_err());
        assert!(TreeConstructionSpec::relaxed(3, 1.0, 0.01, 4).is_err());
        assert!(TreeConstructionSpec::relaxed(2, 1.0, 0.4, 4).is_err());
        let m = tree_construction(&s).unwrap();
        assert!(min_separation(&m).unwrap() >= 9.0e4 * (1.0 - 1e-12));
    }

    #[test]
    fn urn_geometry() {
        let s = TreeConstructionSpec::relaxed(2, 1.0, 0.01, 4).unwrap();
        let l1 = urns_at_level(&s, 1).unwrap();
        assert_eq!(l1.len(), 1);
        assert!((l1[0].left.center + 1.0).abs() < 1e-15);
        assert!((l1[0].left.halfwidth - 2.0 / 99.0).abs() < 1e-15);
        assert_eq!((l1[0].left_count, l1[0].right_count), (2, 2));
        let l2 = urns_at_level(&s, 2).unwrap();
        let centers: Vec<f64> = l2
            .iter()
            .flat_map(|p| [p.left.center, p.right.center])
            .collect();
        let want = [-1.01, -0.99, 0.99, 1.01];
        assert!(centers.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!((l2[0].left.halfwidth - 2.0 / 9900.0).abs() < 1e-15);
        assert!(urns_at_level(&s, 3).is_err());
        assert!(urns_at_level(&s, 0).is_err());
    }

    #[test]
    fn diffuse_examples() {
        let c = 25.0;
        let delta = 4f64.ln() + 4.0;
        let cd = c * delta;
        let spec = DiffuseSpec {
            c,
            delta,
            inner_left: vec![-cd],
            inner_right: vec![cd],
            outer: vec![],
        };
        let m = make_diffuse(&spec).unwrap();
        assert!(validate_diffuse(&m, c, delta));
        let lopsided = MixtureModel::from_1d(&[-cd, -cd + 0.5]).unwrap();
        assert!(!validate_diffuse(&lopsided, c, delta));
        let extra = MixtureModel::from_1d(&[-cd, cd, 30.0 * cd]).unwrap();
        assert!(validate_diffuse(&extra, c, delta));
        let stray = MixtureModel::from_1d(&[-cd, cd, 3.0 * cd]).unwrap();
        assert!(!validate_diffuse(&stray, c, delta));
        let bad = DiffuseSpec {
            inner_right: vec![],
            ..spec
        };
        assert!(make_diffuse(&bad).is_err());
        assert!(check_trapping_hypotheses(25.0, delta, 4).is_ok());
        assert!(check_trapping_hypotheses(20.0, delta, 4).is_err());
        assert!(check_trapping_hypotheses(25.0, 4.0, 4).is_err());
    }
}
