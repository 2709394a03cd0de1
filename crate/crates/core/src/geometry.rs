//! Single-triangle geometry of inversive distance circle packings.
//!
//! A face `{i, j, k}` carries three radii and three inversive distances.
//! Throughout this module triples are indexed *opposite* to the vertex: the
//! inversive distance at slot 0 belongs to the edge `{1, 2}`, the length at
//! slot 0 is `l_12`, and so on. Angles are indexed by the vertex they sit at.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::complex::TriangulatedSurface;
use crate::error::{Error, Result};

/// Margin used for strict membership in the angle range of a triangle.
pub const Z_MARGIN: f64 = 1e-12;

/// Per-edge inversive distances, aligned with [`TriangulatedSurface::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct InversiveWeights {
    values: Vec<f64>,
}

impl InversiveWeights {
    pub fn new(surface: &TriangulatedSurface, values: Vec<f64>) -> Result<Self> {
        if values.len() != surface.edges().len() {
            return Err(Error::LengthMismatch {
                expected: surface.edges().len(),
                actual: values.len(),
            });
        }
        for (e, &v) in surface.edges().iter().zip(&values) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeInversiveDistance { edge: *e, value: v });
            }
        }
        Ok(Self { values })
    }

    pub fn uniform(surface: &TriangulatedSurface, value: f64) -> Result<Self> {
        Self::new(surface, vec![value; surface.edges().len()])
    }

    pub fn from_fn(surface: &TriangulatedSurface, mut f: impl FnMut([usize; 2]) -> f64) -> Result<Self> {
        Self::new(surface, surface.edges().iter().map(|&e| f(e)).collect())
    }

    /// Thurston's weighted packings: `I_e = cos Φ(e)` for `Φ(e) ∈ [0, π/2]`.
    pub fn from_intersection_angles(surface: &TriangulatedSurface, phi: &[f64]) -> Result<Self> {
        if phi.len() != surface.edges().len() {
            return Err(Error::LengthMismatch {
                expected: surface.edges().len(),
                actual: phi.len(),
            });
        }
        Self::new(surface, phi.iter().map(|p| p.cos().max(0.0)).collect())
    }

    pub fn get(&self, edge: usize) -> f64 {
        self.values[edge]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Inversive distances of face `f`, opposite-vertex order.
    pub fn face(&self, surface: &TriangulatedSurface, f: usize) -> [f64; 3] {
        surface.face_edges(f).map(|e| self.values[e])
    }
}

/// Length of the edge between circles of radii `ra`, `rb` at inversive distance `inv`.
pub fn edge_length(ra: f64, rb: f64, inv: f64) -> Result<f64> {
    for r in [ra, rb] {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::NonPositiveRadius(r));
        }
    }
    if !inv.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    Ok(length(ra, rb, inv))
}

#[inline]
pub(crate) fn length(ra: f64, rb: f64, inv: f64) -> f64 {
    (ra * ra + rb * rb + 2.0 * ra * rb * inv).sqrt()
}

/// The clamp `Λ`: `π` below `-1`, `arccos` on `[-1, 1]`, `0` above `1`.
#[inline]
pub fn lambda(x: f64) -> f64 {
    if x <= -1.0 {
        PI
    } else if x >= 1.0 {
        0.0
    } else {
        x.acos()
    }
}

/// Checked form of [`lambda`].
pub fn lambda_clamp(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::NonFiniteInput);
    }
    Ok(lambda(x))
}

/// Generalized angles of a triangle with side lengths `x` (opposite-vertex order).
///
/// Equal to `Λ` of the law-of-cosines ratio at each corner. The evaluation
/// goes through the half-angle formula on the excess terms `x_j + x_k - x_i`,
/// which keeps the three angles summing to `π` to rounding even next to a
/// degenerate triangle, where `arccos` loses half the digits.
pub fn generalized_angles(x: [f64; 3]) -> Result<[f64; 3]> {
    for &l in &x {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::NonPositiveLength(l));
        }
    }
    Ok(angles_unchecked(x))
}

#[inline]
pub(crate) fn angles_unchecked(x: [f64; 3]) -> [f64; 3] {
    let d = excesses(x);
    let (imin, dmin) = d
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if dmin <= 0.0 {
        let mut out = [0.0; 3];
        out[imin] = PI;
        return out;
    }
    let p = d[0] + d[1] + d[2];
    [
        2.0 * (d[1] * d[2]).sqrt().atan2((p * d[0]).sqrt()),
        2.0 * (d[0] * d[2]).sqrt().atan2((p * d[1]).sqrt()),
        2.0 * (d[0] * d[1]).sqrt().atan2((p * d[2]).sqrt()),
    ]
}

#[inline]
fn excesses(x: [f64; 3]) -> [f64; 3] {
    [x[1] + x[2] - x[0], x[0] + x[2] - x[1], x[0] + x[1] - x[2]]
}

/// The direct route: `θ_i = Λ((x_j² + x_k² − x_i²) / (2 x_j x_k))`.
pub fn lambda_angles(x: [f64; 3]) -> [f64; 3] {
    let corner = |i: usize, j: usize, k: usize| {
        lambda((x[j] * x[j] + x[k] * x[k] - x[i] * x[i]) / (2.0 * x[j] * x[k]))
    };
    [corner(0, 1, 2), corner(1, 0, 2), corner(2, 0, 1)]
}

/// Upper bounds `π − Λ(I_jk)` on the angle at each vertex.
pub fn angle_upper_bounds(inversive: [f64; 3]) -> [f64; 3] {
    inversive.map(|i| PI - lambda(i))
}

/// Three circles of one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleConfig {
    pub radii: [f64; 3],
    /// `(I_jk, I_ik, I_ij)`: opposite-vertex order.
    pub inversive: [f64; 3],
}

impl TriangleConfig {
    pub fn new(radii: [f64; 3], inversive: [f64; 3]) -> Result<Self> {
        for &r in &radii {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::NonPositiveRadius(r));
            }
        }
        for (slot, &i) in inversive.iter().enumerate() {
            if !(i.is_finite() && i >= 0.0) {
                let edge = [[1, 2], [0, 2], [0, 1]][slot];
                return Err(Error::NegativeInversiveDistance { edge, value: i });
            }
        }
        Ok(Self { radii, inversive })
    }

    /// `(l_jk, l_ik, l_ij)`.
    pub fn lengths(&self) -> [f64; 3] {
        let [r0, r1, r2] = self.radii;
        let [i0, i1, i2] = self.inversive;
        [length(r1, r2, i0), length(r0, r2, i1), length(r0, r1, i2)]
    }

    pub fn angles(&self) -> [f64; 3] {
        angles_unchecked(self.lengths())
    }

    /// All three strict triangle inequalities hold.
    pub fn in_delta(&self) -> bool {
        excesses(self.lengths()).iter().all(|&d| d > 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            radii: self.radii.map(|r| r * c),
            inversive: self.inversive,
        }
    }

    /// `∂(θ_1, θ_2, θ_3) / ∂(u_1, u_2, u_3)` with `u = ln r`, defined inside Δ.
    pub fn angle_jacobian(&self) -> Result<Matrix3<f64>> {
        let l = self.lengths();
        let d = excesses(l);
        if d.iter().any(|&v| v <= 0.0) {
            return Err(Error::OutsideDelta);
        }
        let theta = angles_unchecked(l);
        // Heron on the excesses: 16 A^2 = p d0 d1 d2
        let p = d[0] + d[1] + d[2];
        let two_area = 0.5 * (p * d[0] * d[1] * d[2]).sqrt();
        let cos = theta.map(f64::cos);

        // dθ_i/dl_i = l_i / 2A,  dθ_i/dl_j = -l_i cos θ_k / 2A
        let mut dtheta_dl = Matrix3::zeros();
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            dtheta_dl[(i, i)] = l[i] / two_area;
            dtheta_dl[(i, j)] = -l[i] * cos[k] / two_area;
            dtheta_dl[(i, k)] = -l[i] * cos[j] / two_area;
        }

        // l_a joins the two vertices other than a; dl_a/du_b = r_b (r_b + r_c I_a) / l_a
        let r = self.radii;
        let mut dl_du = Matrix3::zeros();
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let inv = self.inversive[a];
            dl_du[(a, b)] = r[b] * (r[b] + r[c] * inv) / l[a];
            dl_du[(a, c)] = r[c] * (r[c] + r[b] * inv) / l[a];
        }
        Ok(dtheta_dl * dl_du)
    }
}

/// The radius `r̄_i` at which circle `i` makes the face degenerate along the
/// separated edge `{j, k}`: the unique root of `l_ij(r) + l_ik(r) = l_jk`.
pub fn degenerate_radius(r_j: f64, r_k: f64, i_ij: f64, i_ik: f64, i_jk: f64) -> Result<f64> {
    for r in [r_j, r_k] {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::NonPositiveRadius(r));
        }
    }
    if !(i_ij >= 0.0 && i_ik >= 0.0 && i_ij.is_finite() && i_ik.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    if !(i_jk > 1.0) || !i_jk.is_finite() {
        return Err(Error::NotSeparated(i_jk));
    }
    let target = length(r_j, r_k, i_jk);
    let f = |x: f64| length(x, r_j, i_ij) + length(x, r_k, i_ik) - target;
    let df = |x: f64| (x + r_j * i_ij) / length(x, r_j, i_ij) + (x + r_k * i_ik) / length(x, r_k, i_ik);

    // f(0) < 0 and f(l_jk) >= l_jk > 0; f is strictly increasing
    let (mut lo, mut hi) = (0.0, target);
    while hi - lo > 1e-14 * target {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let polished = x - f(x) / df(x);
    if polished > 0.0 && f(polished).abs() <= f(x).abs() {
        x = polished;
    }
    Ok(x)
}

/// Strict membership in the angle range `Z` of a face with the given inversive distances.
pub fn in_angle_range(target: [f64; 3], inversive: [f64; 3]) -> bool {
    let bounds = angle_upper_bounds(inversive);
    target.iter().all(|t| t.is_finite())
        && (target.iter().sum::<f64>() - PI).abs() <= Z_MARGIN
        && target
            .iter()
            .zip(&bounds)
            .all(|(&t, &b)| t > Z_MARGIN && t < b - Z_MARGIN)
}

/// Solves `θ(r) = target` for `r ∈ Δ` with `r_1 r_2 r_3 = 1`.
///
/// Starts at unit radii, or, when those leave Δ, runs the extended angle
/// flow `u' = θ̃(u) − target` until the iterate enters Δ. Then damped Newton
/// in log-radii on the plane `Σu = 0`, keeping every iterate inside Δ and
/// requiring a decrease of the angle residual at each step.
pub fn invert_angle_map(target: [f64; 3], inversive: [f64; 3]) -> Result<TriangleConfig> {
    if inversive.iter().any(|i| !(i.is_finite() && *i >= 0.0)) {
        return Err(Error::NonFiniteInput);
    }
    if !in_angle_range(target, inversive) {
        return Err(Error::TargetOutsideZ);
    }
    let ones = Vector3::repeat(1.0);
    let config_at = |u: &Vector3<f64>| TriangleConfig {
        radii: [u[0].exp(), u[1].exp(), u[2].exp()],
        inversive,
    };
    let residual_at = |c: &TriangleConfig| {
        let th = c.angles();
        Vector3::new(target[0] - th[0], target[1] - th[1], target[2] - th[2])
    };

    let mut u = Vector3::zeros();
    let mut config = config_at(&u);
    let warmup = 100_000;
    let mut n = 0;
    while !config.in_delta() {
        if n == warmup {
            return Err(Error::NoConvergence {
                iterations: n,
                residual: residual_at(&config).amax(),
            });
        }
        u -= residual_at(&config) * 0.1;
        u -= ones * u.mean();
        config = config_at(&u);
        n += 1;
    }

    let mut res = residual_at(&config);
    let max_iters = 200;
    for _ in 0..max_iters {
        if res.amax() <= 1e-14 {
            break;
        }
        let jac = config.angle_jacobian()?;
        // J has kernel 1 and 1ᵀres = 0, so (J - 11ᵀ) δ = res forces 1ᵀδ = 0
        let system = jac - ones * ones.transpose();
        let Some(step) = system.lu().solve(&res) else {
            break;
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial_u = u + step * alpha;
            let trial = config_at(&trial_u);
            if trial.in_delta() {
                let trial_res = residual_at(&trial);
                if trial_res.norm() < (1.0 - 1e-4 * alpha) * res.norm() {
                    u = trial_u;
                    config = trial;
                    res = trial_res;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let residual = res.amax();
    if residual > 1e-10 {
        return Err(Error::NoConvergence {
            iterations: max_iters,
            residual,
        });
    }
    Ok(config_at(&(u - ones * u.mean())))
}
