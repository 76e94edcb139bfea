//! Synthetic crossing-path interaction scenes: a straight entry lane crossing
//! a circular-arc circulating lane, with controllable rational/irrational
//! behavior mixes, the four-velocity corner-case suite, and CSV
//! import/export for externally supplied trajectory logs.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtw;
use crate::geometry::{
    self, align_origins, to_cartesian, CartesianPoint, FrenetState, PathId, ReferencePath,
    Trajectory, VehicleFootprint,
};
use crate::planner::{rollout, ControlSequence, KinematicModel};

/// Sampling period of every generated trajectory (5 Hz).
pub const DT: f64 = 0.2;
/// History length: 5 past steps plus the current state.
pub const HISTORY_STEPS: usize = 6;
/// Prediction horizon: 5 future steps (1 s).
pub const HORIZON: usize = 5;
/// Speed limit attached to synthetic scenes.
pub const SPEED_LIMIT: f64 = 8.0;

const ARC_RADIUS: f64 = 20.0;
const ARC_HALF_ANGLE: f64 = 1.45;
const ENTRY_BEHIND: f64 = 40.0;
const ENTRY_AHEAD: f64 = 12.0;
const CORRIDOR_HALF_WIDTH: f64 = 4.0;
/// A yielding vehicle aims to stop this far (arc length) before the cross
/// point, which leaves its front circle clear of the other corridor.
const YIELD_STOP_MARGIN: f64 = 4.0;

pub const PRED_PATH_ID: PathId = 0;
pub const EGO_PATH_ID: PathId = 1;
pub const EXIT_PATH_ID: PathId = 2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),
    #[error("schema error at row {row}, column {column}: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },
    #[error("geometry error: {0}")]
    Geometry(#[from] geometry::GeometryError),
    #[error("path likelihood error: {0}")]
    Dtw(#[from] dtw::DtwError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Histories of the interacting vehicles plus the candidate reference paths
/// and scene metadata. Immutable once built.
#[derive(Debug, Clone)]
pub struct Scene {
    pub pred_history: Trajectory,
    pub ego_history: Trajectory,
    pub surr_histories: Vec<Trajectory>,
    /// Every reference path in the scene, keyed by id.
    pub paths: Vec<ReferencePath>,
    /// Candidate path ids per vehicle (first entry: most likely).
    pub pred_path_ids: Vec<PathId>,
    pub ego_path_ids: Vec<PathId>,
    pub speed_limit: f64,
    pub pred_footprint: VehicleFootprint,
    pub ego_footprint: VehicleFootprint,
    /// Set when the candidate paths did not truly intersect and the frame
    /// origin fell back to the closest-approach midpoint.
    pub cross_degenerate: bool,
}

impl Scene {
    pub fn path(&self, id: PathId) -> &ReferencePath {
        self.paths
            .iter()
            .find(|p| p.id == id)
            .expect("path id belongs to the scene")
    }

    pub fn pred_path(&self) -> &ReferencePath {
        self.path(self.pred_history.path_id)
    }

    pub fn ego_path(&self) -> &ReferencePath {
        self.path(self.ego_history.path_id)
    }

    /// Current velocity estimate from the last history difference.
    pub fn pred_velocity(&self) -> f64 {
        self.pred_history.final_velocity().unwrap_or(0.0)
    }

    pub fn ego_velocity(&self) -> f64 {
        self.ego_history.final_velocity().unwrap_or(0.0)
    }

    /// Step-wise three-circle collision test between a predicted-vehicle
    /// trajectory and an ego trajectory. `include_initial` also checks the
    /// current (history-final) configuration.
    pub fn trajectories_collide(
        &self,
        pred: &Trajectory,
        ego: &Trajectory,
        include_initial: bool,
    ) -> bool {
        let pred_path = self.path(pred.path_id);
        let ego_path = self.path(ego.path_id);
        let check = |sp: &FrenetState, se: &FrenetState| {
            geometry::collision(
                sp,
                pred_path,
                se,
                ego_path,
                &self.pred_footprint,
                &self.ego_footprint,
            )
            .unwrap_or(true) // off-path states count as unsafe
        };
        if include_initial && check(self.pred_history.last(), self.ego_history.last()) {
            return true;
        }
        pred.states
            .iter()
            .zip(&ego.states)
            .any(|(sp, se)| check(sp, se))
    }

    pub fn collision_free(&self, pred: &Trajectory, ego: &Trajectory, include_initial: bool) -> bool {
        !self.trajectories_collide(pred, ego, include_initial)
    }
}

/// Behavior mode of the predicted vehicle's ground-truth future.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BehaviorMode {
    /// Brakes to yield before the cross point.
    RationalYield,
    /// Maintains speed; used when the gap is safe.
    RationalProceed,
    /// Maintains speed regardless of the conflict.
    IrrationalIgnore,
}

/// Parameters of one synthetic scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Ego (entering vehicle) speed, m/s.
    pub ego_speed: f64,
    /// Predicted (circulating vehicle) speed, m/s.
    pub pred_speed: f64,
    /// Current arc distance of the ego vehicle to the cross point, m.
    pub ego_gap: f64,
    /// Current arc distance of the predicted vehicle to the cross point, m.
    pub pred_gap: f64,
    pub mode: BehaviorMode,
    /// Gaussian position noise scale, m.
    pub noise: f64,
    /// Number of passive constant-velocity surrounding vehicles (0..=2).
    #[serde(default)]
    pub surrounders: usize,
    pub seed: u64,
}

/// A generated scene together with its ground-truth futures.
#[derive(Debug, Clone)]
pub struct LabeledScene {
    pub scene: Scene,
    pub pred_future: Trajectory,
    pub ego_future: Trajectory,
    pub mode: BehaviorMode,
    /// Ground-truth futures collide within the prediction horizon.
    pub collides: bool,
}

/// The standard synthetic path family: circulating arc (id 0), straight
/// entry lane (id 1) and a tangent exit alternative for the predicted
/// vehicle (id 2). Origins of the arc and the entry are aligned at their
/// cross point.
pub fn standard_paths() -> Vec<ReferencePath> {
    let mut arc_vertices = Vec::new();
    let steps = (2.0 * ARC_HALF_ANGLE / 1.0_f64.to_radians()).ceil() as usize;
    for k in 0..=steps {
        let phi = -ARC_HALF_ANGLE + 2.0 * ARC_HALF_ANGLE * k as f64 / steps as f64;
        arc_vertices.push(CartesianPoint::new(
            ARC_RADIUS * phi.sin(),
            ARC_RADIUS * (1.0 - phi.cos()),
        ));
    }
    let arc = ReferencePath::new(PRED_PATH_ID, arc_vertices, CORRIDOR_HALF_WIDTH)
        .expect("arc path is valid");
    let entry = ReferencePath::new(
        EGO_PATH_ID,
        vec![
            CartesianPoint::new(0.0, -ENTRY_BEHIND),
            CartesianPoint::new(0.0, ENTRY_AHEAD),
        ],
        CORRIDOR_HALF_WIDTH,
    )
    .expect("entry path is valid");
    let (arc, entry, cross) = align_origins(arc, entry).expect("arc and entry cross");
    debug_assert!(!cross.degenerate);

    // Exit alternative: tangent line leaving the ring before the cross point.
    let phi = -0.3_f64;
    let anchor = CartesianPoint::new(ARC_RADIUS * phi.sin(), ARC_RADIUS * (1.0 - phi.cos()));
    let dir = (phi.cos(), phi.sin());
    let exit = ReferencePath::new(
        EXIT_PATH_ID,
        vec![
            CartesianPoint::new(anchor.x - 15.0 * dir.0, anchor.y - 15.0 * dir.1),
            CartesianPoint::new(anchor.x + 25.0 * dir.0, anchor.y + 25.0 * dir.1),
        ],
        CORRIDOR_HALF_WIDTH,
    )
    .expect("exit path is valid");
    // Origin of the exit frame: its closest point to the shared cross point.
    let (s_abs, _, _) = exit.project_unchecked(&cross.point);
    let exit = exit.with_origin(s_abs).expect("projection is on the path");

    vec![arc, entry, exit]
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; deterministic per rng stream.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn noisy(states: &mut [FrenetState], noise: f64, rng: &mut ChaCha8Rng) {
    if noise == 0.0 {
        return;
    }
    for st in states {
        st.s += noise * gaussian(rng);
        st.d += noise * gaussian(rng);
    }
}

/// Constant-speed history ending at `s = -gap` at t = 0.
fn history(gap: f64, speed: f64) -> Vec<FrenetState> {
    (0..HISTORY_STEPS)
        .map(|k| {
            let t = (k as i64 - (HISTORY_STEPS as i64 - 1)) as f64 * DT;
            FrenetState::new(-gap + speed * t, 0.0)
        })
        .collect()
}

/// Deceleration a yielding vehicle applies to stop `YIELD_STOP_MARGIN` short
/// of the cross point, clamped to the control box.
pub fn yield_deceleration(speed: f64, gap: f64) -> f64 {
    let braking_distance = (gap - YIELD_STOP_MARGIN).max(0.3);
    (speed * speed / (2.0 * braking_distance)).clamp(0.5, 4.0)
}

/// Build one scene plus ground-truth futures for both vehicles.
pub fn generate_scene(spec: &ScenarioSpec) -> Result<LabeledScene, ScenarioError> {
    if spec.ego_speed < 0.0 || spec.pred_speed < 0.0 {
        return Err(ScenarioError::InfeasibleSpec("negative speed".into()));
    }
    if spec.ego_gap <= 0.0 || spec.pred_gap <= 0.0 {
        return Err(ScenarioError::InfeasibleSpec("non-positive gap".into()));
    }
    if spec.surrounders > 2 {
        return Err(ScenarioError::InfeasibleSpec(
            "at most 2 surrounding vehicles".into(),
        ));
    }
    let paths = standard_paths();
    let arc = &paths[0];
    let entry = &paths[1];

    // Histories and futures must stay on their paths.
    let (arc_lo, arc_hi) = arc.s_range();
    let pred_span_lo = -spec.pred_gap - spec.pred_speed * (HISTORY_STEPS - 1) as f64 * DT;
    let pred_span_hi = -spec.pred_gap + spec.pred_speed * HORIZON as f64 * DT;
    let surr_lo = -spec.pred_gap
        - 10.0
        - 7.0 * spec.surrounders.saturating_sub(1) as f64
        - 0.9 * spec.pred_speed * (HISTORY_STEPS - 1) as f64 * DT;
    if pred_span_lo < arc_lo + 1.0 || pred_span_hi > arc_hi - 1.0 {
        return Err(ScenarioError::InfeasibleSpec(format!(
            "predicted vehicle span [{pred_span_lo:.1}, {pred_span_hi:.1}] leaves the arc"
        )));
    }
    if spec.surrounders > 0 && surr_lo < arc_lo + 1.0 {
        return Err(ScenarioError::InfeasibleSpec(
            "surrounding vehicles leave the arc".into(),
        ));
    }
    let (entry_lo, entry_hi) = entry.s_range();
    let ego_span_lo = -spec.ego_gap - spec.ego_speed * (HISTORY_STEPS - 1) as f64 * DT;
    let ego_span_hi = -spec.ego_gap + spec.ego_speed * HORIZON as f64 * DT;
    if ego_span_lo < entry_lo + 1.0 || ego_span_hi > entry_hi - 1.0 {
        return Err(ScenarioError::InfeasibleSpec(format!(
            "ego span [{ego_span_lo:.1}, {ego_span_hi:.1}] leaves the entry lane"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let model = KinematicModel::default();

    let mut pred_hist = history(spec.pred_gap, spec.pred_speed);
    let mut ego_hist = history(spec.ego_gap, spec.ego_speed);

    // Ego ground truth: the entering vehicle holds its speed.
    let ego_controls = ControlSequence::zeros(HORIZON);
    let mut ego_future = rollout(
        &FrenetState::new(-spec.ego_gap, 0.0),
        spec.ego_speed,
        &ego_controls,
        &model,
        EGO_PATH_ID,
    );

    // Predicted vehicle ground truth by behavior mode.
    let pred_controls = match spec.mode {
        BehaviorMode::IrrationalIgnore | BehaviorMode::RationalProceed => {
            ControlSequence::zeros(HORIZON)
        }
        BehaviorMode::RationalYield => ControlSequence::constant_accel(
            -yield_deceleration(spec.pred_speed, spec.pred_gap),
            HORIZON,
        ),
    };
    let mut pred_future = rollout(
        &FrenetState::new(-spec.pred_gap, 0.0),
        spec.pred_speed,
        &pred_controls,
        &model,
        PRED_PATH_ID,
    );

    let mut surr_histories = Vec::new();
    for k in 0..spec.surrounders {
        let gap = spec.pred_gap + 10.0 + 7.0 * k as f64;
        let mut states = history(gap, spec.pred_speed * 0.9);
        noisy(&mut states, spec.noise, &mut rng);
        surr_histories.push(Trajectory::new(states, DT, PRED_PATH_ID));
    }

    noisy(&mut pred_hist, spec.noise, &mut rng);
    noisy(&mut ego_hist, spec.noise, &mut rng);
    noisy(&mut pred_future.states, spec.noise, &mut rng);
    noisy(&mut ego_future.states, spec.noise, &mut rng);

    let scene = Scene {
        pred_history: Trajectory::new(pred_hist, DT, PRED_PATH_ID),
        ego_history: Trajectory::new(ego_hist, DT, EGO_PATH_ID),
        surr_histories,
        paths,
        pred_path_ids: vec![PRED_PATH_ID, EXIT_PATH_ID],
        ego_path_ids: vec![EGO_PATH_ID],
        speed_limit: SPEED_LIMIT,
        pred_footprint: VehicleFootprint::default(),
        ego_footprint: VehicleFootprint::default(),
        cross_degenerate: false,
    };
    let collides = scene.trajectories_collide(&pred_future, &ego_future, false);
    Ok(LabeledScene {
        scene,
        pred_future,
        ego_future,
        mode: spec.mode,
        collides,
    })
}

/// Would a constant-speed predicted vehicle conflict with the constant-speed
/// ego within 3 s? Decides yield-vs-proceed for rational scenes.
pub fn has_conflict(spec: &ScenarioSpec) -> bool {
    let clean = ScenarioSpec {
        mode: BehaviorMode::IrrationalIgnore,
        noise: 0.0,
        surrounders: 0,
        ..spec.clone()
    };
    let Ok(labeled) = generate_scene(&clean) else {
        return false;
    };
    let model = KinematicModel::default();
    let steps = (3.0 / DT).round() as usize;
    let pred = rollout(
        &FrenetState::new(-spec.pred_gap, 0.0),
        spec.pred_speed,
        &ControlSequence::zeros(steps),
        &model,
        PRED_PATH_ID,
    );
    let ego = rollout(
        &FrenetState::new(-spec.ego_gap, 0.0),
        spec.ego_speed,
        &ControlSequence::zeros(steps),
        &model,
        EGO_PATH_ID,
    );
    labeled.scene.trajectories_collide(&pred, &ego, true)
}

/// Training/evaluation dataset of labeled scenes, split 80/20.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<LabeledScene>,
    pub test: Vec<LabeledScene>,
}

/// Sampling ranges for randomized scenes. The defaults cover the corner-case
/// suite's configurations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRanges {
    pub ego_speed: (f64, f64),
    pub pred_speed: (f64, f64),
    pub ego_gap: (f64, f64),
    pub pred_gap: (f64, f64),
    pub noise: f64,
    pub surrounders_max: usize,
}

impl Default for DatasetRanges {
    fn default() -> Self {
        Self {
            ego_speed: (3.5, 8.5),
            pred_speed: (2.6, 3.4),
            ego_gap: (3.0, 9.0),
            pred_gap: (5.0, 7.0),
            noise: 0.05,
            surrounders_max: 2,
        }
    }
}

/// Generate `n` randomized scenes; the fraction `mix` (by exact count) uses
/// the irrational-ignore mode, the rest behave rationally (yield under
/// conflict, proceed otherwise). Split 80/20 into train/test.
pub fn generate_dataset(n: usize, mix: f64, seed: u64) -> Result<Dataset, ScenarioError> {
    generate_dataset_with(n, mix, seed, &DatasetRanges::default())
}

pub fn generate_dataset_with(
    n: usize,
    mix: f64,
    seed: u64,
    ranges: &DatasetRanges,
) -> Result<Dataset, ScenarioError> {
    if n < 10 {
        return Err(ScenarioError::InfeasibleSpec(
            "dataset needs at least 10 scenes".into(),
        ));
    }
    if !(0.0..=1.0).contains(&mix) {
        return Err(ScenarioError::InfeasibleSpec("mix must be in [0,1]".into()));
    }
    let irrational_count = (n as f64 * mix).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::with_capacity(n);
    for i in 0..n {
        // Even striping gives exactly `irrational_count` irrational scenes.
        let irrational = (i + 1) * irrational_count / n > i * irrational_count / n;
        let (v_lo, v_hi) = ranges.pred_speed;
        let pred_speed = rng.random_range(v_lo..v_hi);
        // Keep the conflict inside the horizon and braking feasible:
        // the zone entry time u sits in [0.6, 0.95] s.
        let u: f64 = rng.random_range(0.6..0.95);
        let pred_gap = (YIELD_STOP_MARGIN + pred_speed * u)
            .clamp(ranges.pred_gap.0, ranges.pred_gap.1);
        let ego_speed = rng.random_range(ranges.ego_speed.0..ranges.ego_speed.1);
        // Ego arrival near the predicted vehicle's zone-entry time.
        let arrival = u + rng.random_range(-0.25..0.4);
        let ego_gap = (ego_speed * arrival).clamp(ranges.ego_gap.0, ranges.ego_gap.1);
        let surrounders = if ranges.surrounders_max == 0 {
            0
        } else {
            rng.random_range(0..=ranges.surrounders_max)
        };
        let mut spec = ScenarioSpec {
            ego_speed,
            pred_speed,
            ego_gap,
            pred_gap,
            mode: BehaviorMode::IrrationalIgnore,
            noise: ranges.noise,
            surrounders,
            seed: rng.random(),
        };
        spec.mode = if irrational {
            BehaviorMode::IrrationalIgnore
        } else if has_conflict(&spec) {
            BehaviorMode::RationalYield
        } else {
            BehaviorMode::RationalProceed
        };
        scenes.push(generate_scene(&spec)?);
    }
    let split = (n * 8) / 10;
    let test = scenes.split_off(split);
    Ok(Dataset {
        train: scenes,
        test,
    })
}

/// Corner-case suite: identical predicted-vehicle history, ego at constant
/// speeds {4, 6, 7, 8} m/s from a fixed initial position one second ago.
pub const CORNER_EGO_SPEEDS: [f64; 4] = [4.0, 6.0, 7.0, 8.0];
pub const CORNER_EGO_START: f64 = 12.2;
pub const CORNER_PRED_SPEED: f64 = 3.0;
pub const CORNER_PRED_GAP: f64 = 6.0;

pub fn corner_case_suite() -> Vec<LabeledScene> {
    CORNER_EGO_SPEEDS
        .iter()
        .map(|&v| {
            let spec = ScenarioSpec {
                ego_speed: v,
                pred_speed: CORNER_PRED_SPEED,
                ego_gap: CORNER_EGO_START - v * 1.0,
                pred_gap: CORNER_PRED_GAP,
                mode: BehaviorMode::IrrationalIgnore,
                noise: 0.0,
                surrounders: 0,
                seed: 0,
            };
            generate_scene(&spec).expect("corner specs are feasible")
        })
        .collect()
}

/// Engineered conflict scene for cost-ordering experiments: the ego creeps
/// across the cross point while the predicted vehicle approaches fast.
pub fn conflict_scene() -> LabeledScene {
    let spec = ScenarioSpec {
        ego_speed: 0.5,
        pred_speed: 8.0,
        ego_gap: 0.3,
        pred_gap: 8.0,
        mode: BehaviorMode::IrrationalIgnore,
        noise: 0.0,
        surrounders: 0,
        seed: 0,
    };
    generate_scene(&spec).expect("conflict spec is feasible")
}

// ---------------------------------------------------------------------------
// CSV import/export
// ---------------------------------------------------------------------------

const CSV_HEADER: &str = "scene_id,t,vehicle_id,role,x,y";

/// A scene parsed from CSV, with futures when the log contains them.
#[derive(Debug, Clone)]
pub struct ImportedScene {
    pub scene: Scene,
    pub pred_future: Option<Trajectory>,
    pub ego_future: Option<Trajectory>,
}

/// Write scenes (histories plus ground-truth futures) as
/// `scene_id, t, vehicle_id, role, x, y` rows at 5 Hz. History rows carry
/// t <= 0, future rows t > 0.
pub fn export_csv<W: Write>(scenes: &[LabeledScene], out: &mut W) -> Result<(), ScenarioError> {
    writeln!(out, "{CSV_HEADER}")?;
    for (sid, labeled) in scenes.iter().enumerate() {
        let scene = &labeled.scene;
        let mut write_traj = |traj: &Trajectory,
                              vehicle_id: usize,
                              role: &str,
                              t0: f64|
         -> Result<(), ScenarioError> {
            let path = scene.path(traj.path_id);
            for (k, st) in traj.states.iter().enumerate() {
                let t = t0 + k as f64 * traj.dt;
                let p = to_cartesian(st, path)?;
                writeln!(out, "{sid},{t},{vehicle_id},{role},{},{}", p.x, p.y)?;
            }
            Ok(())
        };
        let hist_t0 = -((HISTORY_STEPS - 1) as f64) * DT;
        write_traj(&scene.pred_history, 0, "pred", hist_t0)?;
        write_traj(&labeled.pred_future, 0, "pred", DT)?;
        write_traj(&scene.ego_history, 1, "ego", hist_t0)?;
        write_traj(&labeled.ego_future, 1, "ego", DT)?;
        for (k, surr) in scene.surr_histories.iter().enumerate() {
            write_traj(surr, 2 + k, "surr", hist_t0)?;
        }
    }
    Ok(())
}

/// Parse scenes from the CSV schema above. Vehicle roles are matched onto the
/// provided reference paths (defaults to [`standard_paths`]) via DTW path
/// likelihoods; positions are projected into the winning path's frame.
pub fn import_csv<R: BufRead>(
    input: R,
    paths: Option<Vec<ReferencePath>>,
) -> Result<Vec<ImportedScene>, ScenarioError> {
    let paths = paths.unwrap_or_else(standard_paths);
    let mut rows: BTreeMap<usize, BTreeMap<(usize, String), Vec<(f64, CartesianPoint)>>> =
        BTreeMap::new();

    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(schema_err(1, "scene_id", "empty file")),
    };
    let header_fields: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    for col in &expected {
        if !header_fields.contains(col) {
            return Err(schema_err(1, col, "missing column"));
        }
    }
    let col = |name: &str| header_fields.iter().position(|c| c == &name).unwrap();
    let (c_sid, c_t, c_vid, c_role, c_x, c_y) = (
        col("scene_id"),
        col("t"),
        col("vehicle_id"),
        col("role"),
        col("x"),
        col("y"),
    );

    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header_fields.len() {
            return Err(schema_err(row, "row", "wrong field count"));
        }
        let sid: usize = fields[c_sid]
            .parse()
            .map_err(|_| schema_err(row, "scene_id", "not an integer"))?;
        let t: f64 = fields[c_t]
            .parse()
            .map_err(|_| schema_err(row, "t", "not a number"))?;
        let vid: usize = fields[c_vid]
            .parse()
            .map_err(|_| schema_err(row, "vehicle_id", "not an integer"))?;
        let role = fields[c_role].to_string();
        if !["ego", "pred", "surr"].contains(&role.as_str()) {
            return Err(schema_err(row, "role", "expected ego|pred|surr"));
        }
        let x: f64 = fields[c_x]
            .parse()
            .map_err(|_| schema_err(row, "x", "not a number"))?;
        let y: f64 = fields[c_y]
            .parse()
            .map_err(|_| schema_err(row, "y", "not a number"))?;
        rows.entry(sid)
            .or_default()
            .entry((vid, role))
            .or_default()
            .push((t, CartesianPoint::new(x, y)));
    }

    rows.into_iter()
        .map(|(sid, vehicles)| build_scene(sid, vehicles, &paths))
        .collect()
}

fn schema_err(row: usize, column: &str, message: &str) -> ScenarioError {
    ScenarioError::Schema {
        row,
        column: column.to_string(),
        message: message.to_string(),
    }
}

fn build_scene(
    sid: usize,
    vehicles: BTreeMap<(usize, String), Vec<(f64, CartesianPoint)>>,
    paths: &[ReferencePath],
) -> Result<ImportedScene, ScenarioError> {
    let mut pred: Option<(Trajectory, Option<Trajectory>)> = None;
    let mut ego: Option<(Trajectory, Option<Trajectory>)> = None;
    let mut surr = Vec::new();

    for ((_vid, role), mut samples) in vehicles {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let hist_points: Vec<CartesianPoint> = samples
            .iter()
            .filter(|(t, _)| *t <= 1e-9)
            .map(|(_, p)| *p)
            .collect();
        let future_points: Vec<CartesianPoint> = samples
            .iter()
            .filter(|(t, _)| *t > 1e-9)
            .map(|(_, p)| *p)
            .collect();
        if hist_points.is_empty() {
            return Err(schema_err(0, "t", &format!("scene {sid}: no history rows")));
        }
        // Candidate paths by role, most likely first.
        let candidates: Vec<&ReferencePath> = match role.as_str() {
            "pred" | "surr" => paths
                .iter()
                .filter(|p| p.id != EGO_PATH_ID)
                .collect(),
            _ => paths.iter().filter(|p| p.id == EGO_PATH_ID).collect(),
        };
        let owned: Vec<ReferencePath> = candidates.iter().map(|p| (*p).clone()).collect();
        let likelihoods = dtw::path_likelihoods(&hist_points, &owned, 1.0)?;
        let best = likelihoods.most_likely();
        let path = paths.iter().find(|p| p.id == best).unwrap();
        let project = |pts: &[CartesianPoint]| -> Result<Vec<FrenetState>, ScenarioError> {
            pts.iter()
                .map(|p| geometry::project_to_frenet(p, path).map_err(ScenarioError::from))
                .collect()
        };
        let hist = Trajectory::new(project(&hist_points)?, DT, best);
        let future = if future_points.is_empty() {
            None
        } else {
            Some(Trajectory::new(project(&future_points)?, DT, best))
        };
        match role.as_str() {
            "pred" => pred = Some((hist, future)),
            "ego" => ego = Some((hist, future)),
            _ => surr.push(hist),
        }
    }

    let (pred_hist, pred_future) =
        pred.ok_or_else(|| schema_err(0, "role", &format!("scene {sid}: missing pred vehicle")))?;
    let (ego_hist, ego_future) =
        ego.ok_or_else(|| schema_err(0, "role", &format!("scene {sid}: missing ego vehicle")))?;

    let scene = Scene {
        pred_history: pred_hist,
        ego_history: ego_hist,
        surr_histories: surr,
        paths: paths.to_vec(),
        pred_path_ids: vec![PRED_PATH_ID, EXIT_PATH_ID],
        ego_path_ids: vec![EGO_PATH_ID],
        speed_limit: SPEED_LIMIT,
        pred_footprint: VehicleFootprint::default(),
        ego_footprint: VehicleFootprint::default(),
        cross_degenerate: false,
    };
    Ok(ImportedScene {
        scene,
        pred_future,
        ego_future,
    })
}
