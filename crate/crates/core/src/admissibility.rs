//! Half-space constraints on curvature vectors.
//!
//! For a proper vertex subset `A`, every curvature vector realized by a
//! metric in Ω satisfies
//!
//! ```text
//! Σ_{i∈A} x_i > −Σ_{(e,v)∈Lk(A)} (π − Λ(I_e)) + 2πχ(F_A)
//! ```
//!
//! and extended curvatures of arbitrary positive radii satisfy the closed
//! version. These conditions are necessary only: nothing here certifies
//! that a target is realized. Run the flow for that.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::complex::{TriangulatedSurface, VertexSubset};
use crate::curvature::{InversivePacking, GAUSS_BONNET_TOL};
use crate::error::{Error, Result};
use crate::geometry::lambda;

/// Default cap on `N` for exhaustive enumeration.
pub const DEFAULT_SUBSET_BUDGET: usize = 20;

/// Slack for the closed (`≥`) form of the inequalities.
pub const CLOSURE_TOL: f64 = 1e-9;

/// Number of lowest-margin subsets kept in a [`NecessaryCheck`].
pub const WORST_KEPT: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfSpaceReport {
    /// Zero-based members of `A`.
    pub subset: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    /// `margin > 0`.
    pub satisfied: bool,
}

impl HalfSpaceReport {
    fn new(subset: &VertexSubset, lhs: f64, rhs: f64) -> Self {
        let margin = lhs - rhs;
        Self {
            subset: subset.members().to_vec(),
            lhs,
            rhs,
            margin,
            satisfied: margin > 0.0,
        }
    }
}

/// `−Σ_{Lk(A)} (π − angle_e) + 2πχ(F_A)` where `angle_e` is the edge's
/// contribution (`Λ(I_e)` or `Φ(e)`).
fn rhs_with(surface: &TriangulatedSurface, subset: &VertexSubset, edge_angle: impl Fn(usize) -> f64) -> f64 {
    let link: f64 = surface
        .link_pairs(subset)
        .iter()
        .map(|(e, _)| {
            let idx = surface.edge_index(e[0], e[1]).expect("link edges are surface edges");
            PI - edge_angle(idx)
        })
        .sum();
    -link + 2.0 * PI * surface.subcomplex_euler(subset) as f64
}

pub fn halfspace_rhs(packing: &InversivePacking, subset: &VertexSubset) -> f64 {
    let w = packing.weights();
    rhs_with(packing.surface(), subset, |e| lambda(w.get(e)))
}

fn check_len(n: usize, x: &[f64]) -> Result<()> {
    if x.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

fn check_subset(n: usize, subset: &VertexSubset) -> Result<()> {
    if subset.is_empty() || subset.len() >= n {
        return Err(Error::EmptyOrFullSubset {
            size: subset.len(),
            vertex_count: n,
        });
    }
    if let Some(&v) = subset.members().iter().find(|&&v| v >= n) {
        return Err(Error::SubsetVertexOutOfRange { vertex: v, vertex_count: n });
    }
    Ok(())
}

/// Evaluates `Y_A` at `x`.
pub fn halfspace_margin(packing: &InversivePacking, subset: &VertexSubset, x: &[f64]) -> Result<HalfSpaceReport> {
    let n = packing.vertex_count();
    check_subset(n, subset)?;
    check_len(n, x)?;
    let lhs = subset.members().iter().map(|&i| x[i]).sum();
    Ok(HalfSpaceReport::new(subset, lhs, halfspace_rhs(packing, subset)))
}

/// The same half-space for intersection-angle weights `Φ(e) ∈ [0, π/2]`.
pub fn halfspace_margin_weighted(
    surface: &TriangulatedSurface,
    phi: &[f64],
    subset: &VertexSubset,
    x: &[f64],
) -> Result<HalfSpaceReport> {
    let n = surface.vertex_count();
    check_subset(n, subset)?;
    check_len(n, x)?;
    check_len(surface.edges().len(), phi)?;
    let lhs = subset.members().iter().map(|&i| x[i]).sum();
    Ok(HalfSpaceReport::new(subset, lhs, rhs_with(surface, subset, |e| phi[e])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetMode {
    /// All `2^N − 2` proper subsets; refuses when `N > budget`.
    Exhaustive { budget: usize },
    /// `count` random proper subsets. Not a proof of anything.
    Sampled { count: usize, seed: u64 },
}

impl Default for SubsetMode {
    fn default() -> Self {
        SubsetMode::Exhaustive {
            budget: DEFAULT_SUBSET_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Every margin is strictly positive.
    Interior,
    /// No margin below `−CLOSURE_TOL`, but some are not strictly positive.
    ClosureOnly,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NecessaryCheck {
    pub verdict: Verdict,
    pub exhaustive: bool,
    pub subsets_checked: usize,
    pub min_margin: f64,
    /// Lowest margins first, ties broken by subset order.
    pub worst: Vec<HalfSpaceReport>,
    /// Every subset with margin below `−CLOSURE_TOL`.
    pub violations: Vec<HalfSpaceReport>,
}

/// Precomputed right-hand sides for a family of subsets.
#[derive(Debug, Clone)]
pub struct HalfSpaceSystem {
    vertex_count: usize,
    rows: Vec<(VertexSubset, f64)>,
    exhaustive: bool,
}

impl HalfSpaceSystem {
    pub fn new(packing: &InversivePacking, mode: SubsetMode) -> Result<Self> {
        let w = packing.weights();
        Self::build(packing.surface(), mode, |e| lambda(w.get(e)))
    }

    /// Rows of the intersection-angle polytope.
    pub fn weighted(surface: &TriangulatedSurface, phi: &[f64], mode: SubsetMode) -> Result<Self> {
        check_len(surface.edges().len(), phi)?;
        Self::build(surface, mode, |e| phi[e])
    }

    fn build(surface: &TriangulatedSurface, mode: SubsetMode, edge_angle: impl Fn(usize) -> f64) -> Result<Self> {
        let n = surface.vertex_count();
        let subsets: Vec<VertexSubset> = match mode {
            SubsetMode::Exhaustive { budget } => {
                if n > budget {
                    return Err(Error::TooManySubsets {
                        vertex_count: n,
                        subsets: (1u128 << n.min(127)) - 2,
                        budget,
                    });
                }
                surface.proper_subsets().collect()
            }
            SubsetMode::Sampled { count, seed } => sample_subsets(n, count, seed)?,
        };
        let rows = subsets
            .into_iter()
            .map(|s| {
                let rhs = rhs_with(surface, &s, &edge_angle);
                (s, rhs)
            })
            .collect();
        Ok(Self {
            vertex_count: n,
            rows,
            exhaustive: matches!(mode, SubsetMode::Exhaustive { .. }),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn reports<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = HalfSpaceReport> + 'a {
        self.rows.iter().map(move |(s, rhs)| {
            let lhs = s.members().iter().map(|&i| x[i]).sum();
            HalfSpaceReport::new(s, lhs, *rhs)
        })
    }

    /// Smallest margin over all rows; cheaper than [`HalfSpaceSystem::check`].
    pub fn min_margin(&self, x: &[f64]) -> Result<f64> {
        check_len(self.vertex_count, x)?;
        Ok(self
            .rows
            .iter()
            .map(|(s, rhs)| s.members().iter().map(|&i| x[i]).sum::<f64>() - rhs)
            .fold(f64::INFINITY, f64::min))
    }

    pub fn check(&self, x: &[f64]) -> Result<NecessaryCheck> {
        check_len(self.vertex_count, x)?;
        let mut worst: Vec<HalfSpaceReport> = Vec::with_capacity(WORST_KEPT + 1);
        let mut violations = Vec::new();
        let mut min_margin = f64::INFINITY;
        let mut strict = true;
        for r in self.reports(x) {
            min_margin = min_margin.min(r.margin);
            strict &= r.satisfied;
            if r.margin < -CLOSURE_TOL {
                violations.push(r.clone());
            }
            if worst.len() < WORST_KEPT || r.margin < worst.last().map_or(f64::INFINITY, |w| w.margin) {
                let at = worst.partition_point(|w| w.margin <= r.margin);
                worst.insert(at, r);
                worst.truncate(WORST_KEPT);
            }
        }
        let verdict = if !violations.is_empty() {
            Verdict::Violated
        } else if strict {
            Verdict::Interior
        } else {
            Verdict::ClosureOnly
        };
        Ok(NecessaryCheck {
            verdict,
            exhaustive: self.exhaustive,
            subsets_checked: self.rows.len(),
            min_margin,
            worst,
            violations,
        })
    }
}

fn sample_subsets(n: usize, count: usize, seed: u64) -> Result<Vec<VertexSubset>> {
    if n < 2 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut attempts = 0usize;
    while seen.len() < count && attempts < count.saturating_mul(20).max(100) {
        attempts += 1;
        let members: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        if members.is_empty() || members.len() == n {
            continue;
        }
        seen.insert(members);
    }
    seen.into_iter().map(|m| VertexSubset::new(n, &m)).collect()
}

/// Checks a curvature vector against every `Y_A`. The total must be `2πχ`.
pub fn check_necessary(packing: &InversivePacking, x: &[f64], mode: SubsetMode) -> Result<NecessaryCheck> {
    check_len(packing.vertex_count(), x)?;
    let sum: f64 = x.iter().sum();
    let expected = packing.total_curvature();
    if (sum - expected).abs() > GAUSS_BONNET_TOL {
        return Err(Error::BadTotalCurvature { sum, expected });
    }
    HalfSpaceSystem::new(packing, mode)?.check(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ConstantCurvatureVerdict {
    /// Necessary conditions hold. Existence of a constant-curvature packing
    /// is not implied.
    NecessaryConditionsHold,
    ViolatedBy(Vec<HalfSpaceReport>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantCurvatureCheck {
    pub verdict: ConstantCurvatureVerdict,
    pub subsets_checked: usize,
    pub min_margin: f64,
    pub worst: Vec<HalfSpaceReport>,
}

/// `2πχ|A|/N > −Σ_{Lk(A)}(π − Λ(I_e)) + 2πχ(F_A)` for every proper `A`.
pub fn constant_curvature_condition(packing: &InversivePacking, budget: usize) -> Result<ConstantCurvatureCheck> {
    let system = HalfSpaceSystem::new(packing, SubsetMode::Exhaustive { budget })?;
    Ok(constant_check(&system, packing.average_curvature(), packing.vertex_count()))
}

/// Thurston's condition for intersection-angle weights.
pub fn constant_curvature_condition_weighted(
    surface: &TriangulatedSurface,
    phi: &[f64],
    budget: usize,
) -> Result<ConstantCurvatureCheck> {
    let system = HalfSpaceSystem::weighted(surface, phi, SubsetMode::Exhaustive { budget })?;
    let n = surface.vertex_count();
    let k = 2.0 * PI * surface.euler_characteristic() as f64 / n as f64;
    Ok(constant_check(&system, k, n))
}

fn constant_check(system: &HalfSpaceSystem, k: f64, n: usize) -> ConstantCurvatureCheck {
    let x = vec![k; n];
    let check = system.check(&x).expect("length matches");
    let failing: Vec<HalfSpaceReport> = system.reports(&x).filter(|r| !r.satisfied).collect();
    ConstantCurvatureCheck {
        verdict: if failing.is_empty() {
            ConstantCurvatureVerdict::NecessaryConditionsHold
        } else {
            ConstantCurvatureVerdict::ViolatedBy(failing)
        },
        subsets_checked: check.subsets_checked,
        min_margin: check.min_margin,
        worst: check.worst,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegenerateProbe {
    /// `(factor, Σ_{i∈A} K̃_i)` with `r_i = factor` on `A` and 1 elsewhere.
    pub values: Vec<(f64, f64)>,
    /// `−Σ_{Lk(A)}(π − Λ(I_e)) + 2πχ(F_A)`.
    pub predicted: f64,
    /// Aitken Δ² extrapolation of the last three values (geometric factors
    /// assumed); the raw last value when fewer are given or they are flat.
    pub extrapolated: f64,
    /// `extrapolated − predicted`.
    pub error: f64,
    /// Value at the smallest factor minus the prediction.
    pub raw_error: f64,
}

/// Shrinks the circles of `A` towards points.
pub fn degenerate_limit_probe(packing: &InversivePacking, subset: &VertexSubset, factors: &[f64]) -> Result<DegenerateProbe> {
    let n = packing.vertex_count();
    check_subset(n, subset)?;
    if let Some(&f) = factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(Error::NonPositiveRadius(f));
    }
    let values: Vec<(f64, f64)> = factors
        .iter()
        .map(|&f| {
            let radii: Vec<f64> = (0..n).map(|i| if subset.contains(i) { f } else { 1.0 }).collect();
            let k = packing.curvature_of_radii(&radii);
            (f, subset.members().iter().map(|&i| k[i]).sum())
        })
        .collect();
    let predicted = halfspace_rhs(packing, subset);
    let mut ordered = values.clone();
    ordered.sort_by(|a, b| b.0.total_cmp(&a.0));
    let tail: Vec<f64> = ordered.iter().map(|v| v.1).collect();
    let last = tail.last().copied().unwrap_or(f64::NAN);
    let extrapolated = match tail.as_slice() {
        [.., x0, x1, x2] => {
            let (d1, d2) = (x1 - x0, x2 - x1);
            let denom = d2 - d1;
            // a contraction ratio outside (0, 1) means the tail is not geometric
            let ratio = d2 / d1;
            if denom != 0.0 && ratio > 0.0 && ratio < 1.0 {
                x2 - d2 * d2 / denom
            } else {
                *x2
            }
        }
        _ => last,
    };
    Ok(DegenerateProbe {
        values,
        predicted,
        extrapolated,
        error: extrapolated - predicted,
        raw_error: last - predicted,
    })
}
