//! Time integration of `u' = K̄ − K̃(u)`.
//!
//! The extended curvature is defined for every positive radius vector, so
//! the flow runs straight through metrics where faces degenerate. `K̃` is
//! continuous there but not Lipschitz, which is why only explicit schemes
//! are offered and why the step is halved whenever the potential goes up.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curvature::{InversivePacking, PackingMetric};
use crate::error::{Error, Result};
use crate::potential::{CurvatureTarget, RicciPotential};

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_T_MAX: f64 = 200.0;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;
pub const MAX_DT: f64 = 0.5;
pub const MIN_RESIDUAL_TOL: f64 = 1e-13;
pub const MAX_HALVINGS: u32 = 20;

/// Residual at which Newton refinement stops.
pub const NEWTON_TOL: f64 = 1e-12;

/// newton-hybrid hands over after this many consecutive in-Ω samples below
/// `HANDOVER_RESIDUAL`.
pub const HANDOVER_STREAK: usize = 10;
pub const HANDOVER_RESIDUAL: f64 = 1e-3;

/// Potential rise per step tolerated before the step is retried with `dt/2`.
const RISE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExplicitEuler,
    Rk4,
    NewtonHybrid,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit-euler" | "euler" => Ok(Method::ExplicitEuler),
            "rk4" => Ok(Method::Rk4),
            "newton-hybrid" => Ok(Method::NewtonHybrid),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::ExplicitEuler => "explicit-euler",
            Method::Rk4 => "rk4",
            Method::NewtonHybrid => "newton-hybrid",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub target: CurvatureTarget,
    pub dt: f64,
    pub t_max: f64,
    pub residual_tol: f64,
    pub method: Method,
    /// Re-center `u` after every step so `Σu` stays at its initial value.
    pub normalize: bool,
    pub record_every: usize,
}

impl FlowConfig {
    pub fn new(target: CurvatureTarget) -> Self {
        Self {
            target,
            dt: DEFAULT_DT,
            t_max: DEFAULT_T_MAX,
            residual_tol: DEFAULT_RESIDUAL_TOL,
            method: Method::Rk4,
            normalize: false,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return bad(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be positive, got {}", self.t_max));
        }
        if !(self.residual_tol >= MIN_RESIDUAL_TOL && self.residual_tol.is_finite()) {
            return bad(format!("residual tolerance must be >= {MIN_RESIDUAL_TOL:e}, got {}", self.residual_tol));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowStatus {
    Converged,
    MaxTimeReached,
    /// The state went non-finite even at the smallest step; the last sample
    /// is the last finite state.
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub t: f64,
    pub u: Vec<f64>,
    pub curvature: Vec<f64>,
    /// `max |K̃_i − K̄_i|`.
    pub residual: f64,
    /// Potential relative to `u = 0`.
    pub potential: f64,
    pub in_omega: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub samples: Vec<FlowSample>,
    pub status: FlowStatus,
    /// Accepted time steps, Newton iterations excluded.
    pub steps: usize,
    pub halvings: usize,
    pub newton_iterations: usize,
}

impl FlowTrajectory {
    pub fn last(&self) -> &FlowSample {
        self.samples.last().expect("a trajectory has at least its initial sample")
    }

    pub fn final_metric(&self) -> PackingMetric {
        PackingMetric::from_log_radii(self.last().u.clone()).expect("recorded states are finite")
    }
}

fn velocity(packing: &InversivePacking, u: &[f64], target: &[f64]) -> Vec<f64> {
    packing
        .curvature_at(u)
        .iter()
        .zip(target)
        .map(|(k, t)| t - k)
        .collect()
}

fn axpy(u: &[f64], h: f64, v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(a, b)| a + h * b).collect()
}

/// `max |K̃_i(u) − K̄_i|`.
pub fn residual(packing: &InversivePacking, u: &[f64], target: &CurvatureTarget) -> f64 {
    sup_norm(&velocity(packing, u, target.values()))
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One explicit step from time `t`. Newton-hybrid steps with RK4.
pub fn flow_step(
    packing: &InversivePacking,
    u: &[f64],
    t: f64,
    dt: f64,
    target: &CurvatureTarget,
    method: Method,
) -> Result<Vec<f64>> {
    let k = target.values();
    let next = match method {
        Method::ExplicitEuler => axpy(u, dt, &velocity(packing, u, k)),
        Method::Rk4 | Method::NewtonHybrid => {
            let k1 = velocity(packing, u, k);
            let k2 = velocity(packing, &axpy(u, 0.5 * dt, &k1), k);
            let k3 = velocity(packing, &axpy(u, 0.5 * dt, &k2), k);
            let k4 = velocity(packing, &axpy(u, dt, &k3), k);
            (0..u.len())
                .map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    };
    if next.iter().all(|x: &f64| x.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFiniteState { t: t + dt })
    }
}

struct Recorder<'a> {
    packing: &'a InversivePacking,
    target: &'a CurvatureTarget,
}

impl Recorder<'_> {
    fn sample(&self, t: f64, u: Vec<f64>, potential: f64) -> FlowSample {
        let curvature = self.packing.curvature_at(&u);
        let residual = sup_norm(
            &curvature
                .iter()
                .zip(self.target.values())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        let in_omega = self.packing.in_omega_at(&u);
        FlowSample {
            t,
            u,
            curvature,
            residual,
            potential,
            in_omega,
        }
    }
}

/// Integrates from `initial` until the residual drops to the tolerance or
/// `t_max` is reached.
pub fn run_flow(packing: &InversivePacking, initial: &PackingMetric, config: &FlowConfig) -> Result<FlowTrajectory> {
    config.validate()?;
    if initial.len() != packing.vertex_count() {
        return Err(Error::LengthMismatch {
            expected: packing.vertex_count(),
            actual: initial.len(),
        });
    }
    let potential = RicciPotential::new(packing, config.target.clone());
    let rec = Recorder {
        packing,
        target: &config.target,
    };
    let n = packing.vertex_count() as f64;
    let mean0 = initial.log_radii().iter().sum::<f64>() / n;

    let mut u = initial.log_radii().to_vec();
    let mut t = 0.0;
    let mut value = potential.value(&u)?;
    let mut current = rec.sample(t, u.clone(), value);
    let mut traj = FlowTrajectory {
        samples: vec![current.clone()],
        status: FlowStatus::MaxTimeReached,
        steps: 0,
        halvings: 0,
        newton_iterations: 0,
    };
    let mut streak = 0usize;

    loop {
        if current.residual <= config.residual_tol {
            traj.status = FlowStatus::Converged;
            break;
        }
        if t >= config.t_max * (1.0 - 1e-12) {
            break;
        }

        if config.method == Method::NewtonHybrid {
            streak = if current.in_omega && current.residual < HANDOVER_RESIDUAL {
                streak + 1
            } else {
                0
            };
            if streak >= HANDOVER_STREAK {
                streak = 0;
                if let Ok(out) = newton_refine(packing, &u, &config.target, 50) {
                    if out.residual < current.residual {
                        traj.newton_iterations += out.iterations;
                        value += potential.segment(&u, &out.u)?;
                        u = out.u;
                        // recorded as one nominal step so times stay increasing
                        t += config.dt;
                        current = rec.sample(t, u.clone(), value);
                        push_sample(&mut traj, &current);
                        continue;
                    }
                }
            }
        }

        let base = config.dt.min(config.t_max - t);
        let mut accepted = None;
        for halving in 0..=MAX_HALVINGS {
            let h = base / f64::from(1u32 << halving);
            let mut next = match flow_step(packing, &u, t, h, &config.target, config.method) {
                Ok(next) => next,
                Err(_) => continue,
            };
            if config.normalize {
                let shift = next.iter().sum::<f64>() / n - mean0;
                next.iter_mut().for_each(|x| *x -= shift);
            }
            let rise = potential.segment(&u, &next)?;
            if rise > RISE_SLACK && halving < MAX_HALVINGS {
                continue;
            }
            traj.halvings += halving as usize;
            accepted = Some((h, next, rise));
            break;
        }
        let Some((h, next, rise)) = accepted else {
            traj.status = FlowStatus::Diverged;
            push_sample(&mut traj, &current);
            return Ok(traj);
        };
        t += h;
        u = next;
        value += rise;
        traj.steps += 1;
        current = rec.sample(t, u.clone(), value);
        if traj.steps % config.record_every == 0 {
            push_sample(&mut traj, &current);
        }
    }
    push_sample(&mut traj, &current);
    Ok(traj)
}

fn push_sample(traj: &mut FlowTrajectory, sample: &FlowSample) {
    if traj.samples.last().map_or(true, |s| s.t < sample.t) {
        traj.samples.push(sample.clone());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Decay rate: `residual ≈ C e^{−λ t}`.
    pub lambda: f64,
    pub r_squared: f64,
    pub samples: usize,
}

pub const RATE_WINDOW: (f64, f64) = (1e-10, 1e-3);
pub const MIN_RATE_SAMPLES: usize = 10;

/// Least-squares slope of `ln residual` against `t` over samples with
/// residual inside `RATE_WINDOW`.
pub fn estimate_rate(traj: &FlowTrajectory) -> Result<RateEstimate> {
    if traj.status != FlowStatus::Converged {
        return Err(Error::NotConverged);
    }
    let tail: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.residual > RATE_WINDOW.0 && s.residual < RATE_WINDOW.1)
        .map(|s| (s.t, s.residual.ln()))
        .collect();
    if tail.len() < MIN_RATE_SAMPLES {
        return Err(Error::InsufficientSamples(tail.len()));
    }
    let m = tail.len() as f64;
    let (mt, my) = tail.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / m, b + y / m));
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in &tail {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    if stt == 0.0 {
        return Err(Error::InsufficientSamples(tail.len()));
    }
    let slope = sty / stt;
    let span = tail.last().unwrap().0 - tail[0].0;
    // no measurable decay across the window
    if -slope * span < 1e-8 {
        return Err(Error::NotConverged);
    }
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Ok(RateEstimate {
        lambda: -slope,
        r_squared,
        samples: tail.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Damped Newton on the potential inside `lnΩ`.
///
/// Solves `(L + 𝟙𝟙ᵀ) δ = −(K̃ − K̄)`, which for a gradient orthogonal to `𝟙`
/// gives the minimum-norm solution of `L δ = −(K̃ − K̄)`. Steps that leave Ω
/// or fail the Armijo test on the potential are halved.
pub fn newton_refine(
    packing: &InversivePacking,
    u: &[f64],
    target: &CurvatureTarget,
    max_iters: usize,
) -> Result<NewtonOutcome> {
    if !packing.in_omega_at(u) {
        return Err(Error::OutsideOmega);
    }
    let potential = RicciPotential::new(packing, target.clone());
    let n = u.len();
    let mut u = u.to_vec();
    let mut grad = potential.gradient(&u);
    let mut res = sup_norm(&grad);
    let mut iterations = 0;
    while res > NEWTON_TOL && iterations < max_iters {
        let l = packing.curvature_jacobian_at(&u)?;
        let system = l + DMatrix::from_element(n, n, 1.0);
        let rhs = -DVector::from_column_slice(&grad);
        let delta = system.lu().solve(&rhs).ok_or(Error::LineSearchStall {
            iteration: iterations,
            residual: res,
        })?;
        let slope: f64 = grad.iter().zip(delta.iter()).map(|(g, d)| g * d).sum();
        let mut alpha = 1.0;
        let mut step = None;
        for _ in 0..40 {
            let cand = axpy(&u, alpha, delta.as_slice());
            if packing.in_omega_at(&cand) {
                let g = potential.gradient(&cand);
                let r = sup_norm(&g);
                let armijo = potential.segment(&u, &cand)? <= 1e-4 * alpha * slope;
                // below ~1e-20 the potential change is lost in rounding
                let flat = slope.abs() < 1e-20 && r < res;
                if armijo || flat {
                    step = Some((cand, g, r));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((cand, g, r)) = step else {
            return Err(Error::LineSearchStall {
                iteration: iterations,
                residual: res,
            });
        };
        u = cand;
        grad = g;
        res = r;
        iterations += 1;
    }
    Ok(NewtonOutcome {
        u,
        iterations,
        residual: res,
    })
}
