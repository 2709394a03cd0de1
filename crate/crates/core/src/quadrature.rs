//! Globally adaptive Gauss-Legendre quadrature.
//!
//! Each panel is integrated with a 16-point rule on the whole panel and on
//! both halves; the difference is the panel's error estimate. The panel
//! with the largest estimate is split until the summed estimate meets the
//! absolute tolerance. Integrands with isolated square-root kinks (the
//! potential along a segment crossing ∂Ω) end up with a short cascade of
//! tiny panels around the kink and wide panels elsewhere.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const GAUSS_POINTS: usize = 16;

/// Default cap on the number of leaf panels.
pub const MAX_PANELS: usize = 1 << 14;

/// Nodes and weights of the `GAUSS_POINTS`-point rule on `[-1, 1]`.
pub fn gauss_legendre() -> &'static [(f64, f64); GAUSS_POINTS] {
    static RULE: OnceLock<[(f64, f64); GAUSS_POINTS]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_POINTS;
        let mut rule = [(0.0, 0.0); GAUSS_POINTS];
        for (i, slot) in rule.iter_mut().enumerate() {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // three-term recurrence for P_n and its derivative
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            *slot = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

fn panel_rule(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    left: f64,
    right: f64,
    error: f64,
}

impl Panel {
    fn new(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, whole: f64) -> Self {
        let m = 0.5 * (a + b);
        let left = panel_rule(f, a, m);
        let right = panel_rule(f, m, b);
        Self {
            a,
            b,
            left,
            right,
            error: (whole - (left + right)).abs(),
        }
    }
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_panels: usize,
) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error_estimate: 0.0,
            panels: 0,
        });
    }
    let whole = panel_rule(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel::new(&mut f, a, b, whole));
    loop {
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if !error.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        if error <= tol {
            // sum smallest first
            let mut parts: Vec<f64> = heap.iter().map(|p| p.left + p.right).collect();
            parts.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
            return Ok(Quadrature {
                value: parts.iter().sum(),
                error_estimate: error,
                panels: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        let too_narrow = m <= worst.a || m >= worst.b;
        if heap.len() + 2 > max_panels || too_narrow {
            return Err(Error::QuadratureFailure {
                tolerance: tol,
                panels: heap.len() + 1,
                estimate: error,
            });
        }
        heap.push(Panel::new(&mut f, worst.a, m, worst.left));
        heap.push(Panel::new(&mut f, m, worst.b, worst.right));
    }
}
