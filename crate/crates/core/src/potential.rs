//! The extended Ricci potential and its prescribed-curvature variant.
//!
//! `G̃(u) = ∫_{u₀}^{u} Σ (K̃_i − K̄_i) du_i`. The 1-form is closed and
//! continuous on all of ℝ^N, so the straight segment from the base point is
//! as good as any path. With `K̄ = K_av 𝟙` this is the potential `F̃` of the
//! constant-curvature flow.

use crate::curvature::{InversivePacking, GAUSS_BONNET_TOL};
use crate::error::{Error, Result};
use crate::quadrature::{self, MAX_PANELS};

/// Absolute tolerance of potential values.
pub const POTENTIAL_TOL: f64 = 1e-10;

/// Prescribed per-vertex curvature with the Gauss-Bonnet total.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTarget {
    values: Vec<f64>,
}

impl CurvatureTarget {
    pub fn new(packing: &InversivePacking, values: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(packing, values, GAUSS_BONNET_TOL)
    }

    /// Like [`CurvatureTarget::new`] with a caller-chosen tolerance on the total.
    pub fn with_tolerance(packing: &InversivePacking, values: Vec<f64>, tol: f64) -> Result<Self> {
        if values.len() != packing.vertex_count() {
            return Err(Error::LengthMismatch {
                expected: packing.vertex_count(),
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let sum: f64 = values.iter().sum();
        let expected = packing.total_curvature();
        if (sum - expected).abs() > tol {
            return Err(Error::BadTotalCurvature { sum, expected });
        }
        Ok(Self { values })
    }

    /// `K_av 𝟙`.
    pub fn constant(packing: &InversivePacking) -> Self {
        Self {
            values: vec![packing.average_curvature(); packing.vertex_count()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `G̃` for a fixed packing, target and base point.
#[derive(Debug, Clone)]
pub struct RicciPotential<'a> {
    packing: &'a InversivePacking,
    target: CurvatureTarget,
    base: Vec<f64>,
    tol: f64,
}

impl<'a> RicciPotential<'a> {
    /// Base point `u₀ = 0`.
    pub fn new(packing: &'a InversivePacking, target: CurvatureTarget) -> Self {
        let base = vec![0.0; packing.vertex_count()];
        Self {
            packing,
            target,
            base,
            tol: POTENTIAL_TOL,
        }
    }

    pub fn with_base(mut self, base: Vec<f64>) -> Result<Self> {
        self.check(&base)?;
        self.base = base;
        Ok(self)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn packing(&self) -> &InversivePacking {
        self.packing
    }

    pub fn target(&self) -> &CurvatureTarget {
        &self.target
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// `∇G̃(u) = K̃(u) − K̄`.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut k = self.packing.curvature_at(u);
        for (x, t) in k.iter_mut().zip(self.target.values()) {
            *x -= t;
        }
        k
    }

    /// `G̃(u)` relative to the base point.
    pub fn value(&self, u: &[f64]) -> Result<f64> {
        self.segment(&self.base, u)
    }

    /// `G̃(b) − G̃(a)` along the straight segment.
    pub fn segment(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.segment_with_tolerance(a, b, self.tol)
    }

    fn segment_with_tolerance(&self, a: &[f64], b: &[f64], tol: f64) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let dir: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        if dir.iter().all(|&d| d == 0.0) {
            return Ok(0.0);
        }
        let mut point = vec![0.0; a.len()];
        let mut integrand = |s: f64| {
            for ((p, x), d) in point.iter_mut().zip(a).zip(&dir) {
                *p = x + s * d;
            }
            self.gradient(&point).iter().zip(&dir).map(|(g, d)| g * d).sum::<f64>()
        };
        // Between crossings of ∂Δ the integrand is smooth. At a crossing it
        // has a square-root profile; s = lo + w(3t² − 2t³) turns that into a
        // smooth function of t so the panel error estimates stay honest.
        let cuts = self.crossings(a, &dir);
        let share = tol / (cuts.len() - 1) as f64;
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (lo, width) = (w[0], w[1] - w[0]);
            if width <= 0.0 {
                continue;
            }
            let smoothed = |t: f64| {
                let s = lo + width * t * t * (3.0 - 2.0 * t);
                integrand(s) * width * 6.0 * t * (1.0 - t)
            };
            total += quadrature::integrate(smoothed, 0.0, 1.0, share, MAX_PANELS)?.value;
        }
        Ok(total)
    }

    /// Parameters in `[0, 1]` where some face enters or leaves `Δ` along
    /// `a + s·dir`, bracketed by 0 and 1.
    fn crossings(&self, a: &[f64], dir: &[f64]) -> Vec<f64> {
        let faces = self.packing.surface().faces().len();
        let radii_at = |s: f64| -> Vec<f64> { a.iter().zip(dir).map(|(x, d)| (x + s * d).exp()).collect() };
        let margin = |f: usize, s: f64| self.packing.face_margin(f, &radii_at(s));
        let grid: Vec<f64> = (0..=SCAN_POINTS).map(|k| k as f64 / SCAN_POINTS as f64).collect();
        let samples: Vec<Vec<f64>> = grid
            .iter()
            .map(|&s| {
                let r = radii_at(s);
                (0..faces).map(|f| self.packing.face_margin(f, &r)).collect()
            })
            .collect();

        let mut cuts = vec![0.0, 1.0];
        for f in 0..faces {
            let m = |k: usize| samples[k][f];
            for k in 0..SCAN_POINTS {
                if (m(k) > 0.0) != (m(k + 1) > 0.0) {
                    cuts.push(bisect(|s| margin(f, s) > 0.0, grid[k], grid[k + 1]));
                }
            }
            // a face can dip out of Δ and back between two grid points
            for k in 1..SCAN_POINTS {
                let (l, c, r) = (m(k - 1), m(k), m(k + 1));
                // only dips deep enough, relative to the local variation, to reach zero
                let local_min = c <= l && c <= r && (c < l || c < r);
                if local_min && r > 0.0 && l > 0.0 && c > 0.0 && c <= 4.0 * (l.max(r) - c) {
                    let (s_min, m_min) = golden_min(|s| margin(f, s), grid[k - 1], grid[k + 1]);
                    if m_min <= 0.0 {
                        cuts.push(bisect(|s| margin(f, s) > 0.0, grid[k - 1], s_min));
                        cuts.push(bisect(|s| margin(f, s) > 0.0, grid[k + 1], s_min));
                    }
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts
    }

    /// `G̃(last) − G̃(first)` along a polyline; the tolerance is split over the legs.
    pub fn polyline(&self, points: &[Vec<f64>]) -> Result<f64> {
        let legs = points.len().saturating_sub(1).max(1) as f64;
        points
            .windows(2)
            .map(|w| self.segment_with_tolerance(&w[0], &w[1], self.tol / legs))
            .sum()
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.packing.vertex_count() {
            return Err(Error::LengthMismatch {
                expected: self.packing.vertex_count(),
                actual: u.len(),
            });
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    /// Samples convexity and properness consequences; see [`ConvexityReport`].
    pub fn convexity_probe(&self, samples: &ProbeSamples) -> Result<ConvexityReport> {
        let mut report = ConvexityReport::default();
        for (idx, (a, b)) in samples.pairs.iter().enumerate() {
            let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            // G(m) - (G(a) + G(b))/2 = (G(m) - G(a) - (G(b) - G(m))) / 2
            let gap = 0.5 * (self.segment(a, &mid)? - self.segment(&mid, b)?);
            report.max_midpoint_gap = report.max_midpoint_gap.max(gap);
            if gap > CONVEXITY_SLACK {
                report.midpoint_violations.push(idx);
            }
            let (ga, gb) = (self.gradient(a), self.gradient(b));
            let monotone: f64 = gb
                .iter()
                .zip(&ga)
                .zip(b.iter().zip(a))
                .map(|((p, q), (x, y))| (p - q) * (x - y))
                .sum();
            report.min_monotonicity = report.min_monotonicity.min(monotone);
            if monotone < -CONVEXITY_SLACK {
                report.monotonicity_violations.push(idx);
            }
        }
        report.pairs_checked = samples.pairs.len();

        if let Some(rays) = &samples.rays {
            for (idx, dir) in rays.directions.iter().enumerate() {
                let mean = dir.iter().sum::<f64>() / dir.len() as f64;
                let mut xi: Vec<f64> = dir.iter().map(|d| d - mean).collect();
                let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                xi.iter_mut().for_each(|x| *x /= norm);
                let at = |t: f64| -> Vec<f64> { rays.center.iter().zip(&xi).map(|(c, x)| c + t * x).collect() };
                let rise = self.segment(&at(rays.inner), &at(rays.outer))?;
                if rise <= 0.0 {
                    report.ray_violations.push(idx);
                }
                report.rays_checked += 1;
            }
        }
        Ok(report)
    }
}

/// Grid used to look for `∂Δ` crossings along a segment.
const SCAN_POINTS: usize = 256;

/// Boundary point between `from` (where `inside` holds iff it holds at `from`)
/// and `to`, to machine precision.
fn bisect(inside: impl Fn(f64) -> bool, from: f64, to: f64) -> f64 {
    let start = inside(from);
    let (mut lo, mut hi) = (from, to);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if inside(mid) == start {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= 0.0 {
            return (x1, f1);
        }
        if f2 <= 0.0 {
            return (x2, f2);
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 < f2 { (x1, f1) } else { (x2, f2) }
}

/// Slack allowed in sampled convexity inequalities.
pub const CONVEXITY_SLACK: f64 = 1e-9;

/// Rays in the plane `Σu = const` through a critical point.
#[derive(Debug, Clone, PartialEq)]
pub struct RayProbe {
    pub center: Vec<f64>,
    /// Projected onto `Σ = 0` and normalized before use.
    pub directions: Vec<Vec<f64>>,
    pub inner: f64,
    pub outer: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeSamples {
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub rays: Option<RayProbe>,
}

/// Indices of sampled pairs/rays that violate midpoint convexity, gradient
/// monotonicity, or growth along rays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvexityReport {
    pub pairs_checked: usize,
    pub rays_checked: usize,
    pub midpoint_violations: Vec<usize>,
    pub monotonicity_violations: Vec<usize>,
    pub ray_violations: Vec<usize>,
    /// Largest `G̃(m) − (G̃(a) + G̃(b))/2` seen; at most `CONVEXITY_SLACK` when clean.
    pub max_midpoint_gap: f64,
    pub min_monotonicity: f64,
}

impl ConvexityReport {
    pub fn is_clean(&self) -> bool {
        self.midpoint_violations.is_empty()
            && self.monotonicity_violations.is_empty()
            && self.ray_violations.is_empty()
    }
}
