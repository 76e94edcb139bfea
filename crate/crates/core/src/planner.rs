//! Finite-horizon MPC over the learned cost, plus the kinematic rollout model
//! shared with the scenario generator and the constant-deceleration
//! feasibility check used by the corner-case suite.
//!
//! Decision variables are controls (longitudinal acceleration and lateral
//! rate), so every rollout is dynamically feasible by construction. The
//! optimizer is projected gradient descent with a finite-difference gradient,
//! backtracking line search and three deterministic starts.

use thiserror::Error;

use crate::geometry::{self, FrenetState, PathId, Trajectory};
use crate::irl::{self, CostWeights};
use crate::scenario::Scene;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("cost became non-finite during optimization")]
    NonFiniteCost,
    #[error("ego history too short to estimate velocity")]
    InsufficientHistory,
    #[error("geometry error: {0}")]
    Geometry(#[from] geometry::GeometryError),
    #[error("cost error: {0}")]
    Cost(#[from] irl::IrlError),
}

/// Longitudinal accelerations and lateral rates for t = 0..N-1.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    pub accels: Vec<f64>,
    pub lat_rates: Vec<f64>,
}

impl ControlSequence {
    pub fn zeros(n: usize) -> Self {
        Self {
            accels: vec![0.0; n],
            lat_rates: vec![0.0; n],
        }
    }

    pub fn constant_accel(a: f64, n: usize) -> Self {
        Self {
            accels: vec![a; n],
            lat_rates: vec![0.0; n],
        }
    }

    pub fn horizon(&self) -> usize {
        self.accels.len()
    }

    /// Clamp every control into the model's box.
    pub fn project(&mut self, model: &KinematicModel) {
        for a in &mut self.accels {
            *a = a.clamp(-model.a_max, model.a_max);
        }
        for r in &mut self.lat_rates {
            *r = r.clamp(-model.lat_rate_max, model.lat_rate_max);
        }
    }

    fn as_flat(&self) -> Vec<f64> {
        let mut v = self.accels.clone();
        v.extend_from_slice(&self.lat_rates);
        v
    }

    fn from_flat(flat: &[f64]) -> Self {
        let n = flat.len() / 2;
        Self {
            accels: flat[..n].to_vec(),
            lat_rates: flat[n..].to_vec(),
        }
    }
}

/// Double-integrator longitudinal model with velocity clamped at zero (no
/// reversing) and single-integrator lateral motion.
///
/// One step: `v' = max(0, v + a·dt)`, `s' = s + (v + v')/2 · dt`,
/// `d' = d + ḋ·dt`. Without clamping the s-update equals the usual
/// `s + v·dt + a·dt²/2`; when the vehicle stops mid-step the average-velocity
/// form keeps s monotone.
#[derive(Debug, Clone, Copy)]
pub struct KinematicModel {
    pub dt: f64,
    pub a_max: f64,
    pub lat_rate_max: f64,
}

impl Default for KinematicModel {
    fn default() -> Self {
        Self {
            dt: 0.2,
            a_max: 4.0,
            lat_rate_max: 2.0,
        }
    }
}

impl KinematicModel {
    /// One integration step; returns (s, d, v) after dt.
    pub fn step(&self, s: f64, d: f64, v: f64, accel: f64, lat_rate: f64) -> (f64, f64, f64) {
        let v_next = (v + accel * self.dt).max(0.0);
        let s_next = s + 0.5 * (v + v_next) * self.dt;
        let d_next = d + lat_rate * self.dt;
        (s_next, d_next, v_next)
    }
}

/// Deterministic forward integration of a control sequence from an initial
/// state and velocity. The returned trajectory holds the N future states and
/// does not include the initial state.
pub fn rollout(
    start: &FrenetState,
    v0: f64,
    controls: &ControlSequence,
    model: &KinematicModel,
    path_id: PathId,
) -> Trajectory {
    let n = controls.horizon();
    let mut states = Vec::with_capacity(n);
    let (mut s, mut d, mut v) = (start.s, start.d, v0);
    for t in 0..n {
        let (ns, nd, nv) = model.step(s, d, v, controls.accels[t], controls.lat_rates[t]);
        s = ns;
        d = nd;
        v = nv;
        states.push(FrenetState::new(s, d));
    }
    Trajectory::new(states, model.dt, path_id)
}

/// Solver settings for [`optimize_trajectory`].
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub fd_step: f64,
    pub initial_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 120,
            gradient_tolerance: 1e-3,
            fd_step: 1e-4,
            initial_step: 1.0,
        }
    }
}

/// Most probable predicted-vehicle trajectory: the minimizer of the learned
/// cumulative cost over the control box, conditioned on the ego plan.
///
/// Multi-start projected gradient descent from {zero controls, max braking,
/// max acceleration}; ties between starts break toward the lower start index.
/// The returned cost never exceeds the cost of any start's rollout.
pub fn optimize_trajectory(
    scene: &Scene,
    theta: &CostWeights,
    ego_plan: &Trajectory,
) -> Result<Trajectory, PlannerError> {
    optimize_trajectory_with(scene, theta, ego_plan, &SolverOptions::default())
}

pub fn optimize_trajectory_with(
    scene: &Scene,
    theta: &CostWeights,
    ego_plan: &Trajectory,
    options: &SolverOptions,
) -> Result<Trajectory, PlannerError> {
    let start = *scene.pred_history.last();
    let v0 = scene.pred_velocity();
    let path_id = scene.pred_history.path_id;
    optimize_rollout(
        scene,
        theta,
        ego_plan,
        start,
        v0,
        path_id,
        /* pred_role= */ true,
        options,
    )
}

/// Shared solver body; `pred_role` selects which vehicle the cost treats as
/// the optimized one (false swaps ego/pred for online ego planning).
#[allow(clippy::too_many_arguments)]
fn optimize_rollout(
    scene: &Scene,
    theta: &CostWeights,
    other_plan: &Trajectory,
    start: FrenetState,
    v0: f64,
    path_id: PathId,
    pred_role: bool,
    options: &SolverOptions,
) -> Result<Trajectory, PlannerError> {
    let n = other_plan.len();
    let model = KinematicModel {
        dt: other_plan.dt,
        ..KinematicModel::default()
    };

    let cost_of = |controls: &ControlSequence| -> Result<f64, PlannerError> {
        let traj = rollout(&start, v0, controls, &model, path_id);
        let c = if pred_role {
            irl::cumulative_cost(&traj, other_plan, scene, theta)?
        } else {
            irl::cumulative_cost_swapped(&traj, other_plan, scene, theta)?
        };
        if !c.is_finite() {
            return Err(PlannerError::NonFiniteCost);
        }
        Ok(c)
    };

    let starts = [
        ControlSequence::zeros(n),
        ControlSequence::constant_accel(-model.a_max, n),
        ControlSequence::constant_accel(model.a_max, n),
    ];

    let mut best: Option<(f64, ControlSequence)> = None;
    for seed in starts {
        let (cost, controls) = descend(seed, &model, options, &cost_of)?;
        let replace = match &best {
            None => true,
            Some((bc, _)) => cost < *bc - 1e-12,
        };
        if replace {
            best = Some((cost, controls));
        }
    }
    let (_, controls) = best.expect("at least one start");
    Ok(rollout(&start, v0, &controls, &model, path_id))
}

/// Projected gradient descent with backtracking line search. Every accepted
/// step weakly decreases the cost.
fn descend(
    mut controls: ControlSequence,
    model: &KinematicModel,
    options: &SolverOptions,
    cost_of: &dyn Fn(&ControlSequence) -> Result<f64, PlannerError>,
) -> Result<(f64, ControlSequence), PlannerError> {
    controls.project(model);
    let mut cost = cost_of(&controls)?;
    for _ in 0..options.max_iterations {
        let flat = controls.as_flat();
        let mut grad = vec![0.0; flat.len()];
        for i in 0..flat.len() {
            let h = options.fd_step;
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let cp = cost_of(&ControlSequence::from_flat(&plus))?;
            let cm = cost_of(&ControlSequence::from_flat(&minus))?;
            grad[i] = (cp - cm) / (2.0 * h);
        }
        // Projected-gradient stationarity measure: the step to the projected
        // point at unit step size.
        let mut probe = ControlSequence::from_flat(
            &flat
                .iter()
                .zip(&grad)
                .map(|(x, g)| x - g)
                .collect::<Vec<_>>(),
        );
        probe.project(model);
        let pg_norm: f64 = probe
            .as_flat()
            .iter()
            .zip(&flat)
            .map(|(p, x)| (p - x).powi(2))
            .sum::<f64>()
            .sqrt();
        if pg_norm < options.gradient_tolerance {
            break;
        }

        // Backtracking line search on the projected step.
        let mut step = options.initial_step;
        let mut accepted = false;
        for _ in 0..30 {
            let mut cand = ControlSequence::from_flat(
                &flat
                    .iter()
                    .zip(&grad)
                    .map(|(x, g)| x - step * g)
                    .collect::<Vec<_>>(),
            );
            cand.project(model);
            let cand_cost = cost_of(&cand)?;
            if cand_cost <= cost - 1e-12 {
                controls = cand;
                cost = cand_cost;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((cost, controls))
}

/// Plan the ego vehicle's trajectory.
///
/// Offline mode replays the recorded ground-truth future verbatim. Online
/// mode solves the MPC with the ego and predicted roles swapped, assuming
/// the predicted vehicle keeps its current speed.
pub fn plan_ego(
    scene: &Scene,
    recorded: Option<&Trajectory>,
    theta: &CostWeights,
    horizon: usize,
) -> Result<Trajectory, PlannerError> {
    if scene.ego_history.len() < 2 {
        return Err(PlannerError::InsufficientHistory);
    }
    if let Some(future) = recorded {
        return Ok(future.clone());
    }
    let model = KinematicModel {
        dt: scene.ego_history.dt,
        ..KinematicModel::default()
    };
    // Constant-velocity hypothesis for the predicted vehicle.
    let pred_cv = rollout(
        scene.pred_history.last(),
        scene.pred_velocity(),
        &ControlSequence::zeros(horizon),
        &model,
        scene.pred_history.path_id,
    );
    optimize_rollout(
        scene,
        theta,
        &pred_cv,
        *scene.ego_history.last(),
        scene.ego_velocity(),
        scene.ego_history.path_id,
        /* pred_role= */ false,
        &SolverOptions::default(),
    )
}

/// Constant-deceleration avoidability check over a 3 s look-ahead.
///
/// True iff braking one vehicle at some constant deceleration up to `a_max`
/// (scanned in 0.1 m/s² steps) while the other keeps its current speed leads
/// to a collision-free rollout. Both brake-the-pred and brake-the-ego
/// assignments are tried; the check includes the initial configuration.
pub fn constant_decel_feasible(scene: &Scene) -> bool {
    let model = KinematicModel {
        dt: scene.pred_history.dt,
        ..KinematicModel::default()
    };
    let steps = (3.0 / model.dt).round() as usize;
    let pred = (*scene.pred_history.last(), scene.pred_velocity());
    let ego = (*scene.ego_history.last(), scene.ego_velocity());

    let scan = |braking: (FrenetState, f64),
                braking_path: PathId,
                cruising: (FrenetState, f64),
                cruising_path: PathId,
                braking_is_pred: bool| {
        let cruise_traj = rollout(
            &cruising.0,
            cruising.1,
            &ControlSequence::zeros(steps),
            &model,
            cruising_path,
        );
        let mut decel = 0.0;
        while decel <= model.a_max + 1e-9 {
            let brake_traj = rollout(
                &braking.0,
                braking.1,
                &ControlSequence::constant_accel(-decel, steps),
                &model,
                braking_path,
            );
            let (pred_traj, ego_traj) = if braking_is_pred {
                (&brake_traj, &cruise_traj)
            } else {
                (&cruise_traj, &brake_traj)
            };
            if scene.collision_free(pred_traj, ego_traj, true) {
                return true;
            }
            decel += 0.1;
        }
        false
    };

    scan(
        pred,
        scene.pred_history.path_id,
        ego,
        scene.ego_history.path_id,
        true,
    ) || scan(
        ego,
        scene.ego_history.path_id,
        pred,
        scene.pred_history.path_id,
        false,
    )
}
