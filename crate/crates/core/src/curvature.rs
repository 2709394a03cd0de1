//! Surface-level curvature of a packing metric.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::complex::TriangulatedSurface;
use crate::error::{Error, Result};
use crate::geometry::{angles_unchecked, length, InversiveWeights, TriangleConfig};

/// Tolerance on the extended Gauss-Bonnet identity.
pub const GAUSS_BONNET_TOL: f64 = 1e-9;

/// Relative eigenvalue threshold for rank and kernel decisions.
pub const RANK_REL_TOL: f64 = 1e-10;

/// Radii `r ∈ ℝ^N_{>0}` together with their logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingMetric {
    radii: Vec<f64>,
    log_radii: Vec<f64>,
}

impl PackingMetric {
    pub fn from_radii(radii: Vec<f64>) -> Result<Self> {
        if let Some(&r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::NonPositiveRadius(r));
        }
        let log_radii = radii.iter().map(|r| r.ln()).collect();
        Ok(Self { radii, log_radii })
    }

    pub fn from_log_radii(log_radii: Vec<f64>) -> Result<Self> {
        if log_radii.iter().any(|u| !u.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let radii: Vec<f64> = log_radii.iter().map(|u| u.exp()).collect();
        if let Some(&r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::NonPositiveRadius(r));
        }
        Ok(Self { radii, log_radii })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            radii: vec![1.0; n],
            log_radii: vec![0.0; n],
        }
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn log_radii(&self) -> &[f64] {
        &self.log_radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// The same metric rescaled so that `Π r_i = 1`.
    pub fn normalized(&self) -> Self {
        let mean = self.log_radii.iter().sum::<f64>() / self.len() as f64;
        let log_radii: Vec<f64> = self.log_radii.iter().map(|u| u - mean).collect();
        let radii = log_radii.iter().map(|u| u.exp()).collect();
        Self { radii, log_radii }
    }
}

/// A triangulated surface equipped with inversive distances.
#[derive(Debug, Clone)]
pub struct InversivePacking {
    surface: TriangulatedSurface,
    weights: InversiveWeights,
}

impl InversivePacking {
    pub fn new(surface: TriangulatedSurface, weights: InversiveWeights) -> Result<Self> {
        if weights.values().len() != surface.edges().len() {
            return Err(Error::LengthMismatch {
                expected: surface.edges().len(),
                actual: weights.values().len(),
            });
        }
        Ok(Self { surface, weights })
    }

    pub fn uniform(surface: TriangulatedSurface, inversive: f64) -> Result<Self> {
        let weights = InversiveWeights::uniform(&surface, inversive)?;
        Ok(Self { surface, weights })
    }

    pub fn surface(&self) -> &TriangulatedSurface {
        &self.surface
    }

    pub fn weights(&self) -> &InversiveWeights {
        &self.weights
    }

    pub fn vertex_count(&self) -> usize {
        self.surface.vertex_count()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.surface.euler_characteristic()
    }

    /// `2πχ(M)`.
    pub fn total_curvature(&self) -> f64 {
        2.0 * PI * self.euler_characteristic() as f64
    }

    /// `K_av = 2πχ(M) / N`.
    pub fn average_curvature(&self) -> f64 {
        self.total_curvature() / self.vertex_count() as f64
    }

    pub fn face_config(&self, f: usize, radii: &[f64]) -> TriangleConfig {
        let [i, j, k] = self.surface.faces()[f];
        TriangleConfig {
            radii: [radii[i], radii[j], radii[k]],
            inversive: self.weights.face(&self.surface, f),
        }
    }

    fn face_lengths(&self, f: usize, radii: &[f64]) -> [f64; 3] {
        let [i, j, k] = self.surface.faces()[f];
        let [a, b, c] = self.weights.face(&self.surface, f);
        [
            length(radii[j], radii[k], a),
            length(radii[i], radii[k], b),
            length(radii[i], radii[j], c),
        ]
    }

    /// Smallest triangle-inequality excess of face `f` over its perimeter.
    /// Positive exactly when the face is in `Δ`.
    pub fn face_margin(&self, f: usize, radii: &[f64]) -> f64 {
        let [a, b, c] = self.face_lengths(f, radii);
        (b + c - a).min(a + c - b).min(a + b - c) / (a + b + c)
    }

    /// Extended curvature `K̃_i = 2π − Σ θ̃_i` from radii. Callers guarantee positivity.
    pub fn curvature_of_radii(&self, radii: &[f64]) -> Vec<f64> {
        let mut k = vec![2.0 * PI; self.vertex_count()];
        for (f, face) in self.surface.faces().iter().enumerate() {
            let theta = angles_unchecked(self.face_lengths(f, radii));
            for (slot, &v) in face.iter().enumerate() {
                k[v] -= theta[slot];
            }
        }
        k
    }

    pub fn curvature_extended(&self, metric: &PackingMetric) -> Result<Vec<f64>> {
        self.check_len(metric.len())?;
        Ok(self.curvature_of_radii(metric.radii()))
    }

    /// Extended curvature as a function of log-radii.
    pub fn curvature_at(&self, u: &[f64]) -> Vec<f64> {
        let radii: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        self.curvature_of_radii(&radii)
    }

    /// `Σ K̃_i − 2πχ(M)`.
    pub fn gauss_bonnet_defect(&self, curvature: &[f64]) -> f64 {
        curvature.iter().sum::<f64>() - self.total_curvature()
    }

    fn radii_in_omega(&self, radii: &[f64]) -> bool {
        (0..self.surface.faces().len()).all(|f| {
            let l = self.face_lengths(f, radii);
            l[1] + l[2] > l[0] && l[0] + l[2] > l[1] && l[0] + l[1] > l[2]
        })
    }

    /// Every face satisfies the strict triangle inequalities.
    pub fn in_omega(&self, metric: &PackingMetric) -> bool {
        metric.len() == self.vertex_count() && self.radii_in_omega(metric.radii())
    }

    pub fn in_omega_at(&self, u: &[f64]) -> bool {
        let radii: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        self.radii_in_omega(&radii)
    }

    /// `L = ∂K/∂u`, assembled face by face from the negated angle Jacobians.
    pub fn curvature_jacobian(&self, metric: &PackingMetric) -> Result<DMatrix<f64>> {
        self.check_len(metric.len())?;
        let n = self.vertex_count();
        let mut l = DMatrix::zeros(n, n);
        for (f, face) in self.surface.faces().iter().enumerate() {
            let jac = self
                .face_config(f, metric.radii())
                .angle_jacobian()
                .map_err(|_| Error::OutsideOmega)?;
            for a in 0..3 {
                for b in 0..3 {
                    l[(face[a], face[b])] -= jac[(a, b)];
                }
            }
        }
        Ok(l)
    }

    pub fn curvature_jacobian_at(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        self.curvature_jacobian(&PackingMetric::from_log_radii(u.to_vec())?)
    }

    /// A priori range of `K̃_v`: every generalized angle lies in `[0, π]`.
    pub fn curvature_bounds(&self, v: usize) -> (f64, f64) {
        (2.0 * PI - PI * self.surface.degree(v) as f64, 2.0 * PI)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.vertex_count() {
            return Err(Error::LengthMismatch {
                expected: self.vertex_count(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// Ascending eigenvalues of a symmetric matrix (upper triangle is symmetrized).
pub fn spectrum(matrix: &DMatrix<f64>) -> Vec<f64> {
    let sym = (matrix + matrix.transpose()) * 0.5;
    let mut eig: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Smallest eigenvalue above `RANK_REL_TOL · λ_max`, i.e. the spectral gap of
/// `L` restricted to the complement of its kernel.
pub fn smallest_nonzero_eigenvalue(matrix: &DMatrix<f64>) -> Option<f64> {
    let eig = spectrum(matrix);
    let max = eig.last().copied()?.abs();
    eig.into_iter().find(|&e| e > RANK_REL_TOL * max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    fn tetra(inv: f64) -> InversivePacking {
        InversivePacking::uniform(fixtures::tetrahedron(), inv).unwrap()
    }

    #[test]
    fn equilateral_tetrahedron_has_curvature_pi() {
        let p = tetra(1.0);
        let k = p.curvature_extended(&PackingMetric::uniform(4)).unwrap();
        for x in &k {
            assert_abs_diff_eq!(*x, PI, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(p.gauss_bonnet_defect(&k), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn shrinking_vertex_keeps_gauss_bonnet() {
        let p = tetra(1.0);
        for e in 1..=8 {
            let t = 10f64.powi(-e);
            let k = p.curvature_extended(&PackingMetric::from_radii(vec![t, 1.0, 1.0, 1.0]).unwrap()).unwrap();
            assert!(p.gauss_bonnet_defect(&k).abs() < 1e-9);
            for (v, x) in k.iter().enumerate() {
                let (lo, hi) = p.curvature_bounds(v);
                assert!(*x >= lo && *x <= hi);
            }
        }
    }

    #[test]
    fn average_curvature_examples() {
        assert_abs_diff_eq!(tetra(1.0).average_curvature(), PI, epsilon = 1e-15);
        let torus = InversivePacking::uniform(fixtures::torus7(), 1.0).unwrap();
        assert_eq!(torus.average_curvature(), 0.0);
        let octa = InversivePacking::uniform(fixtures::octahedron(), 1.0).unwrap();
        assert_abs_diff_eq!(octa.average_curvature(), 2.0 * PI / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn curvature_is_scale_invariant() {
        let p = InversivePacking::uniform(fixtures::octahedron(), 0.7).unwrap();
        let r = vec![0.3, 1.2, 2.5, 0.9, 1.1, 4.0];
        let k1 = p.curvature_of_radii(&r);
        let k2 = p.curvature_of_radii(&r.iter().map(|x| 2.0 * x).collect::<Vec<_>>());
        for (a, b) in k1.iter().zip(&k2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn omega_membership() {
        let p = tetra(1.0);
        assert!(p.in_omega(&PackingMetric::uniform(4)));
        let s = fixtures::tetrahedron();
        let big = s.edge_index(0, 1).unwrap();
        let w = InversiveWeights::from_fn(&s, |e| if e == s.edges()[big] { 50.0 } else { 1.0 }).unwrap();
        let p = InversivePacking::new(s, w).unwrap();
        assert!(!p.in_omega(&PackingMetric::uniform(4)));
    }

    #[test]
    fn omega_is_strict_on_boundary() {
        // I = 3 between unit circles 1 and 2 with I = 0 to vertex 0 at radius 1: l01 + l02 = l12 exactly
        let s = fixtures::tetrahedron();
        let w = InversiveWeights::from_fn(&s, |e| if e == [1, 2] { 3.0 } else { 0.0 }).unwrap();
        let p = InversivePacking::new(s, w).unwrap();
        let l = p.face_lengths(0, &[1.0; 4]);
        assert_eq!(l[1] + l[2], l[0]);
        assert!(!p.in_omega(&PackingMetric::uniform(4)));
    }

    #[test]
    fn jacobian_structure_on_tetrahedron() {
        let p = tetra(1.0);
        let l = p.curvature_jacobian(&PackingMetric::uniform(4)).unwrap();
        assert_abs_diff_eq!(l.clone(), l.transpose(), epsilon = 1e-14);
        for i in 0..4 {
            assert_abs_diff_eq!(l.row(i).sum(), 0.0, epsilon = 1e-12);
        }
        let eig = spectrum(&l);
        assert!(eig[0].abs() < 1e-12);
        assert!(eig[1] > 1e-3);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = InversivePacking::uniform(fixtures::octahedron(), 0.8).unwrap();
        let u = vec![0.1, -0.2, 0.3, 0.05, -0.15, 0.2];
        let l = p.curvature_jacobian_at(&u).unwrap();
        let h = 1e-6;
        for b in 0..6 {
            let (mut up, mut um) = (u.clone(), u.clone());
            up[b] += h;
            um[b] -= h;
            let (kp, km) = (p.curvature_at(&up), p.curvature_at(&um));
            for a in 0..6 {
                assert_abs_diff_eq!((kp[a] - km[a]) / (2.0 * h), l[(a, b)], epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn jacobian_assembly_is_local() {
        let p = InversivePacking::uniform(fixtures::octahedron(), 0.5).unwrap();
        let base = vec![0.0; 6];
        let l0 = p.curvature_jacobian_at(&base).unwrap();
        // moving vertex 0 only changes entries among vertices sharing a face with it
        let mut moved = base.clone();
        moved[0] = 0.3;
        let l1 = p.curvature_jacobian_at(&moved).unwrap();
        let star: Vec<usize> = p.surface().vertex_faces(0).iter().flat_map(|&f| p.surface().faces()[f]).collect();
        for a in 0..6 {
            for b in 0..6 {
                if !(star.contains(&a) && star.contains(&b)) {
                    assert_eq!(l0[(a, b)], l1[(a, b)]);
                }
            }
        }
        // vertex 5 is opposite 0 and shares no face with it
        assert_eq!(l0[(5, 5)], l1[(5, 5)]);
    }

    #[test]
    fn jacobian_refuses_outside_omega() {
        let s = fixtures::tetrahedron();
        let w = InversiveWeights::from_fn(&s, |e| if e == [1, 2] { 50.0 } else { 1.0 }).unwrap();
        let p = InversivePacking::new(s, w).unwrap();
        assert_eq!(p.curvature_jacobian(&PackingMetric::uniform(4)), Err(Error::OutsideOmega));
    }

    #[test]
    fn curvature_continuous_across_omega_boundary() {
        let s = fixtures::tetrahedron();
        let w = InversiveWeights::from_fn(&s, |e| if e == [1, 2] { 3.0 } else { 0.2 }).unwrap();
        let p = InversivePacking::new(s, w).unwrap();
        let at = |x: f64| [x, 0.0, 0.0, 0.0];
        // locate where the path u = (x, 0, 0, 0) leaves Ω
        let (mut lo, mut hi) = (-1.0, 1.0);
        assert!(!p.in_omega_at(&at(lo)) && p.in_omega_at(&at(hi)));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p.in_omega_at(&at(mid)) { hi = mid } else { lo = mid }
        }
        // largest jump of K̃ between consecutive samples straddling the crossing;
        // K̃ has a square-root kink there, so jumps shrink like sqrt(step)
        let max_jump = |step: f64| {
            let mut worst = 0.0f64;
            let mut prev = p.curvature_at(&at(lo - 50.0 * step));
            for n in -49..=50 {
                let k = p.curvature_at(&at(lo + n as f64 * step));
                for (a, b) in k.iter().zip(&prev) {
                    worst = worst.max((a - b).abs());
                }
                prev = k;
            }
            worst
        };
        let jumps: Vec<f64> = [1e-4, 1e-6, 1e-8, 1e-10].iter().map(|&h| max_jump(h)).collect();
        for w in jumps.windows(2) {
            assert!(w[1] < w[0] / 5.0, "{jumps:?}");
        }
        assert!(jumps[0] < 0.1 && jumps[2] < 1e-3, "{jumps:?}");
    }
}
