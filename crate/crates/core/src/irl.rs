//! Continuous-domain maximum-entropy inverse reinforcement learning.
//!
//! The cumulative cost of a predicted-vehicle trajectory is a linear
//! combination of four features summed over the horizon: a Gaussian kernel
//! of the inter-vehicle distance, the squared gap to the speed limit, the
//! squared longitudinal acceleration and the squared lateral deviation from
//! the target lane. The demonstration likelihood uses the Laplace
//! approximation of the partition integral, which turns it into a Gaussian
//! integral with a closed form; weights are learned by projected gradient
//! ascent on that likelihood.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, to_cartesian, FrenetState, Trajectory};
use crate::scenario::Scene;

/// Width of the proximity kernel, meters.
pub const SIGMA_PROXIMITY: f64 = 5.0;
/// Central finite-difference step for trajectory derivatives.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum IrlError {
    #[error("trajectory length mismatch: {expected} vs {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cost is not finite")]
    NonFiniteCost,
    #[error("hessian is singular even after regularization")]
    SingularHessian,
    #[error("likelihood diverged")]
    Diverged,
    #[error("need at least {needed} demonstrations, got {got}")]
    NotEnoughDemos { needed: usize, got: usize },
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
    #[error("geometry error: {0}")]
    Geometry(#[from] geometry::GeometryError),
}

pub const FEATURE_COUNT: usize = 4;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["proximity", "speed_gap", "accel", "lateral_dev"];

/// Per-step feature values; all components are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    /// Gaussian kernel of the Cartesian center distance.
    pub proximity: f64,
    /// Squared deviation from the speed limit, (m/s)^2.
    pub speed_gap: f64,
    /// Squared longitudinal acceleration, (m/s^2)^2.
    pub accel: f64,
    /// Squared lateral deviation from the target lane, m^2.
    pub lateral_dev: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; FEATURE_COUNT] {
        [self.proximity, self.speed_gap, self.accel, self.lateral_dev]
    }
}

/// The IRL parameter vector θ over the four features. Nonnegative with a
/// positive L1 norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub proximity: f64,
    pub speed_gap: f64,
    pub accel: f64,
    pub lateral_dev: f64,
}

impl CostWeights {
    pub fn new(theta: [f64; FEATURE_COUNT]) -> Result<Self, IrlError> {
        if theta.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(IrlError::InvalidWeights(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if theta.iter().sum::<f64>() <= 0.0 {
            return Err(IrlError::InvalidWeights("weights must not all be zero".into()));
        }
        Ok(Self::from_array(theta))
    }

    /// Zero weights are allowed here (useful for degenerate tests); prefer
    /// [`CostWeights::new`] for validated construction.
    pub fn from_array(theta: [f64; FEATURE_COUNT]) -> Self {
        Self {
            proximity: theta[0],
            speed_gap: theta[1],
            accel: theta[2],
            lateral_dev: theta[3],
        }
    }

    pub fn as_array(&self) -> [f64; FEATURE_COUNT] {
        [self.proximity, self.speed_gap, self.accel, self.lateral_dev]
    }

    pub fn l1_norm(&self) -> f64 {
        self.as_array().iter().map(|w| w.abs()).sum()
    }

    /// Scaled to the probability simplex (L1 norm 1).
    pub fn normalized(&self) -> Self {
        let n = self.l1_norm();
        if n == 0.0 {
            return *self;
        }
        Self::from_array(self.as_array().map(|w| w / n))
    }

    pub fn dot(&self, features: &[f64; FEATURE_COUNT]) -> f64 {
        self.as_array()
            .iter()
            .zip(features)
            .map(|(w, f)| w * f)
            .sum()
    }

    pub fn cosine_similarity(&self, other: &CostWeights) -> f64 {
        let a = self.as_array();
        let b = other.as_array();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb).max(1e-300)
    }
}

/// One expert demonstration: ground-truth futures of both vehicles plus the
/// scene that conditioned them.
#[derive(Debug, Clone)]
pub struct Demonstration {
    pub pred_future: Trajectory,
    pub ego_future: Trajectory,
    pub scene: Scene,
}

/// Frenét state with finite-difference velocity and acceleration.
#[derive(Debug, Clone, Copy)]
pub struct MotionState {
    pub state: FrenetState,
    pub velocity: f64,
    pub accel: f64,
}

/// Per-step feature evaluation.
pub fn features(
    pred: &MotionState,
    ego: &MotionState,
    scene: &Scene,
    pred_path_id: geometry::PathId,
    ego_path_id: geometry::PathId,
) -> Result<FeatureVector, IrlError> {
    let pred_pos = to_cartesian(&pred.state, scene.path(pred_path_id))?;
    let ego_pos = to_cartesian(&ego.state, scene.path(ego_path_id))?;
    let dist = pred_pos.distance(&ego_pos);
    Ok(FeatureVector {
        proximity: (-(dist / SIGMA_PROXIMITY).powi(2)).exp(),
        speed_gap: (pred.velocity - scene.speed_limit).powi(2),
        accel: pred.accel.powi(2),
        lateral_dev: pred.state.d.powi(2),
    })
}

/// Features summed over the horizon for a subject trajectory against an
/// other-vehicle trajectory. Velocity and acceleration come from finite
/// differences seeded with the subject's current state and velocity.
fn feature_sums(
    subject: &Trajectory,
    subject_start: FrenetState,
    subject_v0: f64,
    other: &Trajectory,
    scene: &Scene,
) -> Result<[f64; FEATURE_COUNT], IrlError> {
    if subject.len() != other.len() {
        return Err(IrlError::LengthMismatch {
            expected: subject.len(),
            got: other.len(),
        });
    }
    let subject_path = scene.path(subject.path_id);
    let other_path = scene.path(other.path_id);
    let dt = subject.dt;
    let mut sums = [0.0; FEATURE_COUNT];
    let mut prev_s = subject_start.s;
    let mut prev_v = subject_v0;
    for (st, ot) in subject.states.iter().zip(&other.states) {
        let v = (st.s - prev_s) / dt;
        let a = (v - prev_v) / dt;
        prev_s = st.s;
        prev_v = v;
        let sp = to_cartesian(st, subject_path)?;
        let op = to_cartesian(ot, other_path)?;
        let dist = sp.distance(&op);
        sums[0] += (-(dist / SIGMA_PROXIMITY).powi(2)).exp();
        sums[1] += (v - scene.speed_limit).powi(2);
        sums[2] += a * a;
        sums[3] += st.d * st.d;
    }
    Ok(sums)
}

/// Feature sums of a predicted-vehicle trajectory conditioned on an ego
/// trajectory; initial conditions come from the scene's predicted history.
pub fn trajectory_features(
    xi_pred: &Trajectory,
    xi_ego: &Trajectory,
    scene: &Scene,
) -> Result<[f64; FEATURE_COUNT], IrlError> {
    feature_sums(
        xi_pred,
        *scene.pred_history.last(),
        scene.pred_velocity(),
        xi_ego,
        scene,
    )
}

/// Cumulative cost `θᵀ Σ_t φ_t`; linear in θ and additive over time steps.
pub fn cumulative_cost(
    xi_pred: &Trajectory,
    xi_ego: &Trajectory,
    scene: &Scene,
    theta: &CostWeights,
) -> Result<f64, IrlError> {
    Ok(theta.dot(&trajectory_features(xi_pred, xi_ego, scene)?))
}

/// Cumulative cost with the roles swapped: the ego trajectory is the subject
/// being costed against a predicted-vehicle hypothesis. Used for online ego
/// planning.
pub fn cumulative_cost_swapped(
    xi_ego: &Trajectory,
    xi_pred: &Trajectory,
    scene: &Scene,
    theta: &CostWeights,
) -> Result<f64, IrlError> {
    let sums = feature_sums(
        xi_ego,
        *scene.ego_history.last(),
        scene.ego_velocity(),
        xi_pred,
        scene,
    )?;
    Ok(theta.dot(&sums))
}

fn flatten(traj: &Trajectory) -> Vec<f64> {
    traj.states.iter().flat_map(|st| [st.s, st.d]).collect()
}

fn unflatten(traj: &Trajectory, flat: &[f64]) -> Trajectory {
    let states = flat
        .chunks_exact(2)
        .map(|c| FrenetState::new(c[0], c[1]))
        .collect();
    Trajectory::new(states, traj.dt, traj.path_id)
}

/// Per-feature gradient and Hessian of the feature sums with respect to the
/// flattened predicted trajectory, by central finite differences. The cost's
/// own gradient/Hessian follow by linearity in θ.
pub struct FeatureCurvature {
    pub gradients: [DVector<f64>; FEATURE_COUNT],
    pub hessians: [DMatrix<f64>; FEATURE_COUNT],
}

pub fn feature_curvature(
    xi_pred: &Trajectory,
    xi_ego: &Trajectory,
    scene: &Scene,
) -> Result<FeatureCurvature, IrlError> {
    let x0 = flatten(xi_pred);
    let dim = x0.len();
    let eval = |x: &[f64]| -> Result<[f64; FEATURE_COUNT], IrlError> {
        trajectory_features(&unflatten(xi_pred, x), xi_ego, scene)
    };
    let grad_at = |x: &[f64]| -> Result<[DVector<f64>; FEATURE_COUNT], IrlError> {
        let mut grads = std::array::from_fn::<_, FEATURE_COUNT, _>(|_| DVector::zeros(dim));
        for i in 0..dim {
            let mut plus = x.to_vec();
            plus[i] += FD_STEP;
            let mut minus = x.to_vec();
            minus[i] -= FD_STEP;
            let fp = eval(&plus)?;
            let fm = eval(&minus)?;
            for k in 0..FEATURE_COUNT {
                grads[k][i] = (fp[k] - fm[k]) / (2.0 * FD_STEP);
            }
        }
        Ok(grads)
    };

    let gradients = grad_at(&x0)?;
    let mut hessians = std::array::from_fn::<_, FEATURE_COUNT, _>(|_| DMatrix::zeros(dim, dim));
    for j in 0..dim {
        let mut plus = x0.clone();
        plus[j] += FD_STEP;
        let mut minus = x0.clone();
        minus[j] -= FD_STEP;
        let gp = grad_at(&plus)?;
        let gm = grad_at(&minus)?;
        for k in 0..FEATURE_COUNT {
            for i in 0..dim {
                hessians[k][(i, j)] = (gp[k][i] - gm[k][i]) / (2.0 * FD_STEP);
            }
        }
    }
    // Symmetrize each feature Hessian.
    for h in &mut hessians {
        let ht = h.transpose();
        *h = (&*h + ht) * 0.5;
    }
    Ok(FeatureCurvature {
        gradients,
        hessians,
    })
}

/// Regularize a symmetric matrix into positive definiteness by adding εI with
/// ε doubling from 1e-6. Returns the regularized matrix and its Cholesky
/// factorization.
fn regularize_spd(h: &DMatrix<f64>) -> Result<(DMatrix<f64>, Cholesky<f64, nalgebra::Dyn>), IrlError> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(IrlError::NonFiniteCost);
    }
    if let Some(chol) = Cholesky::new(h.clone()) {
        return Ok((h.clone(), chol));
    }
    let mut eps = 1e-6;
    while eps < 1e9 {
        let mut reg = h.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += eps;
        }
        if let Some(chol) = Cholesky::new(reg.clone()) {
            return Ok((reg, chol));
        }
        eps *= 2.0;
    }
    Err(IrlError::SingularHessian)
}

/// Gradient and regularized Hessian of the cumulative cost with respect to
/// the flattened predicted trajectory.
pub fn cost_gradient_hessian(
    xi_pred: &Trajectory,
    xi_ego: &Trajectory,
    scene: &Scene,
    theta: &CostWeights,
) -> Result<(DVector<f64>, DMatrix<f64>), IrlError> {
    let curv = feature_curvature(xi_pred, xi_ego, scene)?;
    let (g, h) = assemble(&curv, theta);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(IrlError::NonFiniteCost);
    }
    let (h_reg, _) = regularize_spd(&h)?;
    Ok((g, h_reg))
}

fn assemble(curv: &FeatureCurvature, theta: &CostWeights) -> (DVector<f64>, DMatrix<f64>) {
    let w = theta.as_array();
    let dim = curv.gradients[0].len();
    let mut g = DVector::zeros(dim);
    let mut h = DMatrix::zeros(dim, dim);
    for k in 0..FEATURE_COUNT {
        g += &curv.gradients[k] * w[k];
        h += &curv.hessians[k] * w[k];
    }
    (g, h)
}

/// Closed-form log of the Laplace-approximated demonstration likelihood for
/// one demo with cost gradient `g` and (symmetric) Hessian `h`:
/// `-½ gᵀH⁻¹g + ½ log det H - (D/2) log 2π`. Under exactly locally optimal
/// demonstrations (g = 0) only the determinant and dimension terms remain.
pub fn laplace_log_term(g: &DVector<f64>, h: &DMatrix<f64>) -> Result<f64, IrlError> {
    let dim = g.len() as f64;
    let (_, chol) = regularize_spd(h)?;
    let solved = chol.solve(g);
    let quad = g.dot(&solved);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * quad + 0.5 * log_det - 0.5 * dim * (2.0 * std::f64::consts::PI).ln())
}

fn likelihood_from_curvatures(
    curvatures: &[FeatureCurvature],
    theta: &CostWeights,
) -> Result<f64, IrlError> {
    let mut total = 0.0;
    for curv in curvatures {
        let (g, h) = assemble(curv, theta);
        total += laplace_log_term(&g, &h)?;
    }
    if !total.is_finite() {
        return Err(IrlError::Diverged);
    }
    Ok(total)
}

/// Laplace-approximated log-likelihood of a demonstration set under θ.
pub fn log_likelihood(demos: &[Demonstration], theta: &CostWeights) -> Result<f64, IrlError> {
    if demos.is_empty() {
        return Err(IrlError::NotEnoughDemos { needed: 1, got: 0 });
    }
    let curvatures = demo_curvatures(demos)?;
    likelihood_from_curvatures(&curvatures, theta)
}

fn demo_curvatures(demos: &[Demonstration]) -> Result<Vec<FeatureCurvature>, IrlError> {
    demos
        .iter()
        .map(|d| feature_curvature(&d.pred_future, &d.ego_future, &d.scene))
        .collect()
}

/// Settings for [`train_irl`].
#[derive(Debug, Clone, Copy)]
pub struct IrlHyperparams {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub fd_step: f64,
    pub theta_init: [f64; FEATURE_COUNT],
    pub theta_max: f64,
}

impl Default for IrlHyperparams {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-4,
            fd_step: 1e-4,
            theta_init: [0.25; FEATURE_COUNT],
            theta_max: 1e3,
        }
    }
}

/// Learn θ by projected gradient ascent on the demonstration likelihood over
/// θ ≥ 0, with backtracking line search. The result is normalized to the
/// simplex (‖θ‖₁ = 1); the likelihood fixes the direction, normalization
/// makes the output reproducible.
pub fn train_irl(
    demos: &[Demonstration],
    hyper: &IrlHyperparams,
) -> Result<CostWeights, IrlError> {
    if demos.len() < 5 {
        return Err(IrlError::NotEnoughDemos {
            needed: 5,
            got: demos.len(),
        });
    }
    let curvatures = demo_curvatures(demos)?;
    let eval = |theta: &[f64; FEATURE_COUNT]| -> Result<f64, IrlError> {
        likelihood_from_curvatures(&curvatures, &CostWeights::from_array(*theta))
    };

    let clamp = |theta: [f64; FEATURE_COUNT]| -> [f64; FEATURE_COUNT] {
        theta.map(|w| w.clamp(0.0, hyper.theta_max))
    };

    let mut theta = clamp(hyper.theta_init);
    let mut value = eval(&theta)?;
    if !value.is_finite() {
        return Err(IrlError::Diverged);
    }

    for _ in 0..hyper.max_iterations {
        // Central finite-difference gradient over the 4 weights.
        let mut grad = [0.0; FEATURE_COUNT];
        for k in 0..FEATURE_COUNT {
            let h = hyper.fd_step * theta[k].abs().max(1.0);
            let mut plus = theta;
            plus[k] = (plus[k] + h).min(hyper.theta_max);
            let mut minus = theta;
            minus[k] = (minus[k] - h).max(0.0);
            let span = plus[k] - minus[k];
            if span <= 0.0 {
                grad[k] = 0.0;
                continue;
            }
            grad[k] = (eval(&plus)? - eval(&minus)?) / span;
        }

        // Projected-gradient stationarity.
        let mut probe = theta;
        for k in 0..FEATURE_COUNT {
            probe[k] = (theta[k] + grad[k]).clamp(0.0, hyper.theta_max);
        }
        let pg_norm: f64 = probe
            .iter()
            .zip(&theta)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            .sqrt();
        if pg_norm < hyper.gradient_tolerance {
            break;
        }

        // Backtracking line search (ascent).
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..40 {
            let mut cand = theta;
            for k in 0..FEATURE_COUNT {
                cand[k] = (theta[k] + step * grad[k]).clamp(0.0, hyper.theta_max);
            }
            match eval(&cand) {
                Ok(v) if v.is_finite() && v > value + 1e-12 => {
                    theta = cand;
                    value = v;
                    advanced = true;
                    break;
                }
                Ok(_) | Err(IrlError::SingularHessian) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }

    let sum: f64 = theta.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return Err(IrlError::Diverged);
    }
    Ok(CostWeights::from_array(theta).normalized())
}
