//! Reference paths, Frenét-frame conversion, cross-point construction and
//! three-circle collision checks.
//!
//! A reference path is a polyline with linear interpolation between vertices.
//! Each path carries its own Frenét frame: `s` is arc length along the path
//! measured from the frame origin (usually the cross point of two vehicles'
//! paths), `d` is the signed lateral offset, positive to the left of the
//! direction of travel.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path as FsPath;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point is outside the path corridor (nearest distance {distance:.3} m)")]
    OutOfCorridor { distance: f64 },
    #[error("arc length {s:.3} m is beyond the path ends")]
    OffPathEnd { s: f64 },
    #[error("reference paths do not intersect")]
    NoIntersection,
    #[error("invalid reference path: {0}")]
    InvalidPath(String),
    #[error("path file error: {0}")]
    PathFile(String),
}

/// A position in the global Cartesian frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
}

impl CartesianPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &CartesianPoint) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

impl fmt::Display for CartesianPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// Path-relative state: longitudinal position `s` along the reference path
/// (relative to the frame origin) and signed lateral deviation `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrenetState {
    pub s: f64,
    pub d: f64,
}

impl FrenetState {
    pub fn new(s: f64, d: f64) -> Self {
        Self { s, d }
    }

    /// Euclidean distance in the (s, d) plane.
    pub fn distance(&self, other: &FrenetState) -> f64 {
        ((self.s - other.s).powi(2) + (self.d - other.d).powi(2)).sqrt()
    }
}

/// Identifier of a reference path within a scene.
pub type PathId = u32;

/// Arc-length-parameterized polyline with its own Frenét frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferencePath {
    pub id: PathId,
    vertices: Vec<CartesianPoint>,
    /// Cumulative arc length at each vertex; `cumulative[0] == 0`.
    cumulative: Vec<f64>,
    /// Arc length of the frame origin, within `[0, total_length]`.
    origin_arc_length: f64,
    corridor_half_width: f64,
}

impl ReferencePath {
    /// Build a path from at least two distinct vertices. The origin is placed
    /// at the first vertex; use [`ReferencePath::with_origin`] to move it.
    pub fn new(
        id: PathId,
        vertices: Vec<CartesianPoint>,
        corridor_half_width: f64,
    ) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::InvalidPath(
                "a reference path needs at least 2 vertices".into(),
            ));
        }
        if corridor_half_width <= 0.0 {
            return Err(GeometryError::InvalidPath(
                "corridor half width must be positive".into(),
            ));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(GeometryError::InvalidPath("non-finite vertex".into()));
        }
        let mut cumulative = Vec::with_capacity(vertices.len());
        cumulative.push(0.0);
        for i in 1..vertices.len() {
            let step = vertices[i - 1].distance(&vertices[i]);
            if step <= 0.0 {
                return Err(GeometryError::InvalidPath(format!(
                    "vertices {} and {} coincide",
                    i - 1,
                    i
                )));
            }
            cumulative.push(cumulative[i - 1] + step);
        }
        Ok(Self {
            id,
            vertices,
            cumulative,
            origin_arc_length: 0.0,
            corridor_half_width,
        })
    }

    /// Same path with the Frenét origin moved to `origin_arc_length`.
    pub fn with_origin(mut self, origin_arc_length: f64) -> Result<Self, GeometryError> {
        if origin_arc_length < 0.0 || origin_arc_length > self.total_length() {
            return Err(GeometryError::OffPathEnd {
                s: origin_arc_length,
            });
        }
        self.origin_arc_length = origin_arc_length;
        Ok(self)
    }

    pub fn vertices(&self) -> &[CartesianPoint] {
        &self.vertices
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn origin_arc_length(&self) -> f64 {
        self.origin_arc_length
    }

    pub fn corridor_half_width(&self) -> f64 {
        self.corridor_half_width
    }

    /// Valid `s` range of this frame: `[-origin, total - origin]`.
    pub fn s_range(&self) -> (f64, f64) {
        (
            -self.origin_arc_length,
            self.total_length() - self.origin_arc_length,
        )
    }

    /// Unit tangent of segment `i`.
    fn segment_dir(&self, i: usize) -> (f64, f64) {
        let a = self.vertices[i];
        let b = self.vertices[i + 1];
        let len = self.cumulative[i + 1] - self.cumulative[i];
        ((b.x - a.x) / len, (b.y - a.y) / len)
    }

    /// Index of the segment containing absolute arc length `s_abs`.
    fn segment_at(&self, s_abs: f64) -> usize {
        // partition_point returns the first vertex with cumulative > s_abs.
        let idx = self.cumulative.partition_point(|&c| c <= s_abs);
        idx.clamp(1, self.vertices.len() - 1) - 1
    }

    /// On-path point and unit tangent at frame coordinate `s`.
    pub fn point_and_tangent(&self, s: f64) -> Result<(CartesianPoint, (f64, f64)), GeometryError> {
        let s_abs = s + self.origin_arc_length;
        // Tolerate float dust at the ends; reject true overshoot.
        let eps = 1e-9 * (1.0 + self.total_length());
        if s_abs < -eps || s_abs > self.total_length() + eps {
            return Err(GeometryError::OffPathEnd { s });
        }
        let s_abs = s_abs.clamp(0.0, self.total_length());
        let i = self.segment_at(s_abs);
        let a = self.vertices[i];
        let dir = self.segment_dir(i);
        let along = s_abs - self.cumulative[i];
        let point = CartesianPoint::new(a.x + along * dir.0, a.y + along * dir.1);
        Ok((point, dir))
    }

    /// Heading (path tangent angle) at frame coordinate `s`.
    pub fn tangent_at(&self, s: f64) -> Result<(f64, f64), GeometryError> {
        Ok(self.point_and_tangent(s)?.1)
    }

    /// Nearest point on the polyline, ignoring the corridor limit.
    /// Returns (absolute arc length, signed lateral offset, distance).
    /// Ties between segments are broken toward the lower arc length.
    pub fn project_unchecked(&self, p: &CartesianPoint) -> (f64, f64, f64) {
        let mut best = (0.0, 0.0, f64::INFINITY);
        for i in 0..self.vertices.len() - 1 {
            let a = self.vertices[i];
            let b = self.vertices[i + 1];
            let len = self.cumulative[i + 1] - self.cumulative[i];
            let ux = (b.x - a.x) / len;
            let uy = (b.y - a.y) / len;
            let t = ((p.x - a.x) * ux + (p.y - a.y) * uy).clamp(0.0, len);
            let qx = a.x + t * ux;
            let qy = a.y + t * uy;
            let rx = p.x - qx;
            let ry = p.y - qy;
            let dist = (rx * rx + ry * ry).sqrt();
            // Signed offset: positive to the left of the travel direction.
            let d = ux * ry - uy * rx;
            if dist < best.2 {
                best = (self.cumulative[i] + t, d, dist);
            }
        }
        best
    }
}

/// Map a Cartesian position onto the path's Frenét frame.
///
/// Fails with [`GeometryError::OutOfCorridor`] when the nearest polyline point
/// is farther than the corridor half width.
pub fn project_to_frenet(
    p: &CartesianPoint,
    path: &ReferencePath,
) -> Result<FrenetState, GeometryError> {
    let (s_abs, d, dist) = path.project_unchecked(p);
    if dist > path.corridor_half_width {
        return Err(GeometryError::OutOfCorridor { distance: dist });
    }
    Ok(FrenetState::new(s_abs - path.origin_arc_length, d))
}

/// Map a Frenét state back to Cartesian coordinates. No extrapolation beyond
/// the path ends.
pub fn to_cartesian(
    f: &FrenetState,
    path: &ReferencePath,
) -> Result<CartesianPoint, GeometryError> {
    let (q, dir) = path.point_and_tangent(f.s)?;
    // Left normal of the travel direction.
    let (nx, ny) = (-dir.1, dir.0);
    Ok(CartesianPoint::new(q.x + f.d * nx, q.y + f.d * ny))
}

/// Result of intersecting two reference paths.
#[derive(Debug, Clone, Copy)]
pub struct CrossPoint {
    pub point: CartesianPoint,
    /// Absolute arc length of the intersection along each path.
    pub arc_length_a: f64,
    pub arc_length_b: f64,
    /// Set when the paths do not truly intersect and the closest-approach
    /// midpoint was used instead.
    pub degenerate: bool,
}

/// First intersection of two polylines by arc length along `a`.
///
/// Collinear overlaps count as intersections starting at the earliest
/// overlapping point (so identical paths intersect at their first vertex).
pub fn cross_point(a: &ReferencePath, b: &ReferencePath) -> Result<CrossPoint, GeometryError> {
    let mut best: Option<CrossPoint> = None;
    for i in 0..a.vertices.len() - 1 {
        let (pa, pb) = (a.vertices[i], a.vertices[i + 1]);
        for j in 0..b.vertices.len() - 1 {
            let (qa, qb) = (b.vertices[j], b.vertices[j + 1]);
            if let Some((ta, tb)) = segment_intersection(pa, pb, qa, qb) {
                let sa = a.cumulative[i] + ta * (a.cumulative[i + 1] - a.cumulative[i]);
                let sb = b.cumulative[j] + tb * (b.cumulative[j + 1] - b.cumulative[j]);
                let replace = match &best {
                    None => true,
                    Some(c) => sa < c.arc_length_a - 1e-12,
                };
                if replace {
                    let point = CartesianPoint::new(
                        pa.x + ta * (pb.x - pa.x),
                        pa.y + ta * (pb.y - pa.y),
                    );
                    best = Some(CrossPoint {
                        point,
                        arc_length_a: sa,
                        arc_length_b: sb,
                        degenerate: false,
                    });
                }
            }
        }
    }
    best.ok_or(GeometryError::NoIntersection)
}

/// Closest-approach fallback for disjoint paths: midpoint of the closest
/// vertex-to-segment pair, flagged as degenerate.
pub fn closest_approach(a: &ReferencePath, b: &ReferencePath) -> CrossPoint {
    let mut best = (f64::INFINITY, 0.0, 0.0, CartesianPoint::new(0.0, 0.0));
    // Dense enough for the desk-scale paths this library builds; both
    // directions are scanned so the result is symmetric in practice.
    let steps = 400;
    for k in 0..=steps {
        let sa = a.total_length() * k as f64 / steps as f64;
        let (pa, _) = a
            .point_and_tangent(sa - a.origin_arc_length)
            .expect("sa within range");
        let (sb_abs, _, dist) = b.project_unchecked(&pa);
        if dist < best.0 {
            let (pb, _) = b
                .point_and_tangent(sb_abs - b.origin_arc_length)
                .expect("sb within range");
            let mid = CartesianPoint::new((pa.x + pb.x) / 2.0, (pa.y + pb.y) / 2.0);
            best = (dist, sa, sb_abs, mid);
        }
    }
    CrossPoint {
        point: best.3,
        arc_length_a: best.1,
        arc_length_b: best.2,
        degenerate: true,
    }
}

/// Set both paths' Frenét origins at their cross point (or closest-approach
/// midpoint when disjoint). Returns the updated paths and the cross point.
pub fn align_origins(
    a: ReferencePath,
    b: ReferencePath,
) -> Result<(ReferencePath, ReferencePath, CrossPoint), GeometryError> {
    let cross = match cross_point(&a, &b) {
        Ok(c) => c,
        Err(GeometryError::NoIntersection) => closest_approach(&a, &b),
        Err(e) => return Err(e),
    };
    let a = a.with_origin(cross.arc_length_a)?;
    let b = b.with_origin(cross.arc_length_b)?;
    Ok((a, b, cross))
}

/// Parametric intersection of segments [p0,p1] and [q0,q1].
/// Returns (t along p, u along q), both in [0,1]. For collinear overlaps the
/// earliest overlapping point along p is returned.
fn segment_intersection(
    p0: CartesianPoint,
    p1: CartesianPoint,
    q0: CartesianPoint,
    q1: CartesianPoint,
) -> Option<(f64, f64)> {
    let rx = p1.x - p0.x;
    let ry = p1.y - p0.y;
    let sx = q1.x - q0.x;
    let sy = q1.y - q0.y;
    let denom = rx * sy - ry * sx;
    let qpx = q0.x - p0.x;
    let qpy = q0.y - p0.y;
    let scale = (rx * rx + ry * ry).sqrt() * (sx * sx + sy * sy).sqrt();
    if denom.abs() > 1e-12 * scale.max(1.0) {
        let t = (qpx * sy - qpy * sx) / denom;
        let u = (qpx * ry - qpy * rx) / denom;
        if (-1e-12..=1.0 + 1e-12).contains(&t) && (-1e-12..=1.0 + 1e-12).contains(&u) {
            return Some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)));
        }
        return None;
    }
    // Parallel. Check collinearity.
    let cross = qpx * ry - qpy * rx;
    if cross.abs() > 1e-9 * scale.max(1.0) {
        return None;
    }
    // Collinear: overlap interval in p's parameter.
    let rr = rx * rx + ry * ry;
    if rr == 0.0 {
        return None;
    }
    let t0 = (qpx * rx + qpy * ry) / rr;
    let t1 = t0 + (sx * rx + sy * ry) / rr;
    let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    let start = lo.max(0.0);
    if start > hi.min(1.0) + 1e-12 {
        return None;
    }
    let t = start.clamp(0.0, 1.0);
    // Recover q's parameter at that point.
    let u = if sx * sx + sy * sy > 0.0 {
        let px = p0.x + t * rx - q0.x;
        let py = p0.y + t * ry - q0.y;
        ((px * sx + py * sy) / (sx * sx + sy * sy)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Some((t, u))
}

/// Vehicle shape approximated by three circles placed along the heading.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VehicleFootprint {
    pub length: f64,
    pub width: f64,
    pub circle_radius: f64,
    /// Longitudinal circle offsets from the center of mass (rear, center, front).
    pub circle_offsets: [f64; 3],
}

impl Default for VehicleFootprint {
    /// Typical sedan; the circles cover the 4.5 m x 1.8 m rectangle.
    fn default() -> Self {
        Self {
            length: 4.5,
            width: 1.8,
            circle_radius: 1.0,
            circle_offsets: [-1.5, 0.0, 1.5],
        }
    }
}

impl VehicleFootprint {
    /// Circle centers for a vehicle at `state` on `path`, heading along the
    /// local path tangent.
    pub fn circle_centers(
        &self,
        state: &FrenetState,
        path: &ReferencePath,
    ) -> Result<[CartesianPoint; 3], GeometryError> {
        let center = to_cartesian(state, path)?;
        let (tx, ty) = path.tangent_at(state.s)?;
        Ok(self
            .circle_offsets
            .map(|o| CartesianPoint::new(center.x + o * tx, center.y + o * ty)))
    }
}

/// Three-circle collision test between two vehicles on their own paths.
/// True iff any of the 3x3 circle pairs overlap (distance < r_a + r_b).
pub fn collision(
    sa: &FrenetState,
    path_a: &ReferencePath,
    sb: &FrenetState,
    path_b: &ReferencePath,
    fa: &VehicleFootprint,
    fb: &VehicleFootprint,
) -> Result<bool, GeometryError> {
    let ca = fa.circle_centers(sa, path_a)?;
    let cb = fb.circle_centers(sb, path_b)?;
    let limit = fa.circle_radius + fb.circle_radius;
    for a in &ca {
        for b in &cb {
            if a.distance(b) < limit {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// A fixed-rate sequence of Frenét states for one vehicle.
///
/// The paper's ξ (history) and ξ̂ (future) both use this shape; futures hold
/// the states at t = dt, 2·dt, ..., N·dt, not the current state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<FrenetState>,
    pub dt: f64,
    pub path_id: PathId,
}

impl Trajectory {
    pub fn new(states: Vec<FrenetState>, dt: f64, path_id: PathId) -> Self {
        debug_assert!(dt > 0.0);
        debug_assert!(!states.is_empty());
        Self {
            states,
            dt,
            path_id,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &FrenetState {
        self.states.last().expect("trajectory is non-empty")
    }

    /// Velocity estimate at the final state from the last finite difference.
    pub fn final_velocity(&self) -> Option<f64> {
        if self.states.len() < 2 {
            return None;
        }
        let n = self.states.len();
        Some((self.states[n - 1].s - self.states[n - 2].s) / self.dt)
    }

    /// Root-mean-square Euclidean state distance to another trajectory of the
    /// same length.
    pub fn rmse(&self, other: &Trajectory) -> Option<f64> {
        if self.states.len() != other.states.len() || self.states.is_empty() {
            return None;
        }
        let sum: f64 = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| (a.s - b.s).powi(2) + (a.d - b.d).powi(2))
            .sum();
        Some((sum / self.states.len() as f64).sqrt())
    }
}

/// Sidecar metadata stored next to the path vertex CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PathMeta {
    origin_arc_length: f64,
    corridor_half_width: f64,
}

/// Write reference paths as `path_id, vertex_index, x, y` CSV plus a JSON
/// sidecar holding each path's origin and corridor width.
pub fn save_paths<W: Write, M: Write>(
    paths: &[ReferencePath],
    csv: &mut W,
    meta: &mut M,
) -> Result<(), GeometryError> {
    let io = |e: std::io::Error| GeometryError::PathFile(e.to_string());
    writeln!(csv, "path_id,vertex_index,x,y").map_err(io)?;
    let mut metas: BTreeMap<PathId, PathMeta> = BTreeMap::new();
    for path in paths {
        for (i, v) in path.vertices.iter().enumerate() {
            writeln!(csv, "{},{},{},{}", path.id, i, v.x, v.y).map_err(io)?;
        }
        metas.insert(
            path.id,
            PathMeta {
                origin_arc_length: path.origin_arc_length,
                corridor_half_width: path.corridor_half_width,
            },
        );
    }
    let json = serde_json::to_string_pretty(&metas)
        .map_err(|e| GeometryError::PathFile(e.to_string()))?;
    meta.write_all(json.as_bytes()).map_err(io)?;
    Ok(())
}

/// Load reference paths from the CSV + JSON sidecar format.
pub fn load_paths<R: BufRead>(csv: R, meta: &str) -> Result<Vec<ReferencePath>, GeometryError> {
    let metas: BTreeMap<PathId, PathMeta> =
        serde_json::from_str(meta).map_err(|e| GeometryError::PathFile(e.to_string()))?;
    let mut vertices: BTreeMap<PathId, Vec<(usize, CartesianPoint)>> = BTreeMap::new();
    for (lineno, line) in csv.lines().enumerate() {
        let line = line.map_err(|e| GeometryError::PathFile(e.to_string()))?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(GeometryError::PathFile(format!(
                "line {}: expected 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse_err = |col: &str| GeometryError::PathFile(format!("line {}: bad {col}", lineno + 1));
        let id: PathId = fields[0].trim().parse().map_err(|_| parse_err("path_id"))?;
        let idx: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err("vertex_index"))?;
        let x: f64 = fields[2].trim().parse().map_err(|_| parse_err("x"))?;
        let y: f64 = fields[3].trim().parse().map_err(|_| parse_err("y"))?;
        vertices
            .entry(id)
            .or_default()
            .push((idx, CartesianPoint::new(x, y)));
    }
    let mut out = Vec::new();
    for (id, mut verts) in vertices {
        verts.sort_by_key(|(i, _)| *i);
        let meta = metas
            .get(&id)
            .ok_or_else(|| GeometryError::PathFile(format!("path {id} missing from sidecar")))?;
        let path = ReferencePath::new(
            id,
            verts.into_iter().map(|(_, p)| p).collect(),
            meta.corridor_half_width,
        )?
        .with_origin(meta.origin_arc_length)?;
        out.push(path);
    }
    Ok(out)
}

/// Convenience wrapper writing to `<stem>.csv` and `<stem>.json`.
pub fn save_paths_to(paths: &[ReferencePath], stem: &FsPath) -> Result<(), GeometryError> {
    let io = |e: std::io::Error| GeometryError::PathFile(e.to_string());
    let mut csv = std::fs::File::create(stem.with_extension("csv")).map_err(io)?;
    let mut meta = std::fs::File::create(stem.with_extension("json")).map_err(io)?;
    save_paths(paths, &mut csv, &mut meta)
}

/// Convenience wrapper reading from `<stem>.csv` and `<stem>.json`.
pub fn load_paths_from(stem: &FsPath) -> Result<Vec<ReferencePath>, GeometryError> {
    let io = |e: std::io::Error| GeometryError::PathFile(e.to_string());
    let csv = std::fs::File::open(stem.with_extension("csv")).map_err(io)?;
    let meta = std::fs::read_to_string(stem.with_extension("json")).map_err(io)?;
    load_paths(std::io::BufReader::new(csv), &meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn straight_path(id: PathId) -> ReferencePath {
        // 10 m along +x.
        ReferencePath::new(
            id,
            vec![CartesianPoint::new(0.0, 0.0), CartesianPoint::new(10.0, 0.0)],
            4.0,
        )
        .unwrap()
    }

    /// Circle of radius 20 centered at the origin, discretized at `step_deg`.
    fn arc_path(id: PathId, step_deg: f64) -> ReferencePath {
        let mut vertices = Vec::new();
        let n = (360.0 / step_deg) as usize;
        for k in 0..=n {
            let a = (k as f64) * step_deg.to_radians();
            vertices.push(CartesianPoint::new(20.0 * a.cos(), 20.0 * a.sin()));
        }
        ReferencePath::new(id, vertices, 4.0).unwrap()
    }

    #[test]
    fn vertex_projects_to_its_own_arc_length() {
        let path = arc_path(0, 5.0).with_origin(3.0).unwrap();
        for (i, v) in path.vertices().iter().enumerate().take(20) {
            let f = project_to_frenet(v, &path).unwrap();
            assert_relative_eq!(f.s, path.cumulative[i] - 3.0, epsilon = 1e-9);
            assert_relative_eq!(f.d, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn straight_path_midpoint_offset() {
        let path = straight_path(0).with_origin(5.0).unwrap();
        // 1 m to the left of travel (+x direction) is +y.
        let p = CartesianPoint::new(5.0, 1.0);
        let f = project_to_frenet(&p, &path).unwrap();
        assert_relative_eq!(f.s, 0.0, epsilon = 1e-12);
        assert_relative_eq!(f.d, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_matches_dense_search_on_quarter_circle() {
        // Dense brute-force oracle: sample 10^6 points along the polyline and
        // pick the closest; agreement required within 1e-4 m of arc length.
        let path = arc_path(0, 1.0);
        let quarter = path.total_length() / 4.0;
        let path = path.with_origin(quarter).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let angle: f64 = rng.random_range(0.1..1.4);
            let radius: f64 = rng.random_range(17.0..23.0);
            let p = CartesianPoint::new(radius * angle.cos(), radius * angle.sin());
            let f = project_to_frenet(&p, &path).unwrap();

            let n = 1_000_000;
            let mut best = (f64::INFINITY, 0.0);
            for k in 0..=n {
                let s_abs = path.total_length() * k as f64 / n as f64;
                let (q, _) = path
                    .point_and_tangent(s_abs - path.origin_arc_length())
                    .unwrap();
                let dist = q.distance(&p);
                if dist < best.0 {
                    best = (dist, s_abs);
                }
            }
            assert!(
                (f.s + path.origin_arc_length() - best.1).abs() < 1e-4,
                "projection s {} vs dense {}",
                f.s + path.origin_arc_length(),
                best.1
            );
            assert_relative_eq!(f.d.abs(), best.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn out_of_corridor_rejected() {
        let path = straight_path(0);
        let p = CartesianPoint::new(5.0, 4.5);
        match project_to_frenet(&p, &path) {
            Err(GeometryError::OutOfCorridor { distance }) => {
                assert_relative_eq!(distance, 4.5, epsilon = 1e-12)
            }
            other => panic!("expected OutOfCorridor, got {other:?}"),
        }
    }

    #[test]
    fn to_cartesian_on_path() {
        let path = straight_path(0).with_origin(2.0).unwrap();
        let p = to_cartesian(&FrenetState::new(3.0, 0.0), &path).unwrap();
        assert_relative_eq!(p.x, 5.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn off_path_end_rejected() {
        let path = straight_path(0);
        assert!(matches!(
            to_cartesian(&FrenetState::new(10.5, 0.0), &path),
            Err(GeometryError::OffPathEnd { .. })
        ));
        assert!(matches!(
            to_cartesian(&FrenetState::new(-0.5, 0.0), &path),
            Err(GeometryError::OffPathEnd { .. })
        ));
    }

    #[test]
    fn round_trip_straight_path() {
        let path = straight_path(0).with_origin(5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let f = FrenetState::new(rng.random_range(-5.0..5.0), rng.random_range(-4.0..4.0));
            let p = to_cartesian(&f, &path).unwrap();
            let back = project_to_frenet(&p, &path).unwrap();
            assert!((back.s - f.s).abs() < 1e-6 && (back.d - f.d).abs() < 1e-6);
        }
    }

    #[test]
    fn round_trip_one_degree_arc() {
        let path = arc_path(0, 1.0).with_origin(30.0).unwrap();
        let (lo, hi) = path.s_range();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let f = FrenetState::new(
                rng.random_range(lo + 0.1..hi - 0.1),
                rng.random_range(-4.0..4.0),
            );
            let p = to_cartesian(&f, &path).unwrap();
            let back = project_to_frenet(&p, &path).unwrap();
            let err = to_cartesian(&back, &path).unwrap().distance(&p);
            assert!(err < 1e-3, "round-trip error {err}");
        }
    }

    #[test]
    fn projection_sign_flips_under_mirror() {
        let path = straight_path(0);
        let p = CartesianPoint::new(3.0, 1.2);
        let mirrored = CartesianPoint::new(3.0, -1.2);
        let f = project_to_frenet(&p, &path).unwrap();
        let g = project_to_frenet(&mirrored, &path).unwrap();
        assert_relative_eq!(f.d, -g.d, epsilon = 1e-12);
        assert_relative_eq!(f.s, g.s, epsilon = 1e-12);
    }

    #[test]
    fn perpendicular_paths_cross() {
        let a = ReferencePath::new(
            0,
            vec![CartesianPoint::new(3.0, -5.0), CartesianPoint::new(3.0, 10.0)],
            4.0,
        )
        .unwrap();
        let b = ReferencePath::new(
            1,
            vec![CartesianPoint::new(-5.0, 4.0), CartesianPoint::new(10.0, 4.0)],
            4.0,
        )
        .unwrap();
        let c = cross_point(&a, &b).unwrap();
        assert_relative_eq!(c.point.x, 3.0, epsilon = 1e-12);
        assert_relative_eq!(c.point.y, 4.0, epsilon = 1e-12);
        assert_relative_eq!(c.arc_length_a, 9.0, epsilon = 1e-12);
        assert_relative_eq!(c.arc_length_b, 8.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_paths_cross_at_first_vertex() {
        let a = straight_path(0);
        let b = straight_path(1);
        let c = cross_point(&a, &b).unwrap();
        assert_relative_eq!(c.arc_length_a, 0.0, epsilon = 1e-12);
        assert_relative_eq!(c.point.x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cross_point_matches_all_pairs_oracle() {
        // Entrance/circulating analog: straight vertical line crossing the arc.
        let arc = arc_path(0, 1.0);
        let entry = ReferencePath::new(
            1,
            vec![
                CartesianPoint::new(19.5, -30.0),
                CartesianPoint::new(19.5, 30.0),
            ],
            4.0,
        )
        .unwrap();
        let c = cross_point(&entry, &arc).unwrap();

        // Oracle: exhaustive segment-pair intersection keeping the earliest
        // hit along `entry`.
        let mut oracle: Option<(f64, CartesianPoint)> = None;
        let ev = entry.vertices();
        let av = arc.vertices();
        for i in 0..ev.len() - 1 {
            for j in 0..av.len() - 1 {
                if let Some((t, _)) = segment_intersection(ev[i], ev[i + 1], av[j], av[j + 1]) {
                    let s = entry.cumulative[i] + t * (entry.cumulative[i + 1] - entry.cumulative[i]);
                    let p = CartesianPoint::new(
                        ev[i].x + t * (ev[i + 1].x - ev[i].x),
                        ev[i].y + t * (ev[i + 1].y - ev[i].y),
                    );
                    if oracle.is_none() || s < oracle.as_ref().unwrap().0 {
                        oracle = Some((s, p));
                    }
                }
            }
        }
        let (os, op) = oracle.unwrap();
        assert_relative_eq!(c.arc_length_a, os, epsilon = 1e-9);
        assert!(c.point.distance(&op) < 1e-9);

        // The cross point must lie on both polylines.
        let (_, _, da) = entry.project_unchecked(&c.point);
        let (_, _, db) = arc.project_unchecked(&c.point);
        assert!(da < 1e-9 && db < 1e-9);
    }

    #[test]
    fn disjoint_paths_fall_back_to_closest_approach() {
        let a = straight_path(0);
        let b = ReferencePath::new(
            1,
            vec![CartesianPoint::new(0.0, 9.0), CartesianPoint::new(10.0, 9.0)],
            4.0,
        )
        .unwrap();
        assert!(matches!(
            cross_point(&a, &b),
            Err(GeometryError::NoIntersection)
        ));
        let (_, _, c) = align_origins(a, b).unwrap();
        assert!(c.degenerate);
        assert_relative_eq!(c.point.y, 4.5, epsilon = 1e-9);
    }

    #[test]
    fn collision_same_pose_and_far_apart() {
        let pa = straight_path(0);
        let pb = ReferencePath::new(
            1,
            vec![CartesianPoint::new(0.0, 0.0), CartesianPoint::new(10.0, 0.0)],
            4.0,
        )
        .unwrap();
        let f = VehicleFootprint::default();
        let s = FrenetState::new(2.0, 0.0);
        assert!(collision(&s, &pa, &s, &pb, &f, &f).unwrap());

        let far_a = ReferencePath::new(
            2,
            vec![CartesianPoint::new(0.0, 0.0), CartesianPoint::new(10.0, 0.0)],
            4.0,
        )
        .unwrap();
        let far_b = ReferencePath::new(
            3,
            vec![
                CartesianPoint::new(0.0, 100.0),
                CartesianPoint::new(10.0, 100.0),
            ],
            4.0,
        )
        .unwrap();
        assert!(!collision(&s, &far_a, &s, &far_b, &f, &f).unwrap());
    }

    #[test]
    fn collision_grazing_case_is_false() {
        // Parallel paths separated so every circle pair sits at exactly
        // r_a + r_b + 0.01; direct circle-distance computation says no overlap.
        let f = VehicleFootprint::default();
        let gap = 2.0 * f.circle_radius + 0.01;
        let pa = straight_path(0);
        let pb = ReferencePath::new(
            1,
            vec![
                CartesianPoint::new(0.0, gap),
                CartesianPoint::new(10.0, gap),
            ],
            4.0,
        )
        .unwrap();
        let s = FrenetState::new(5.0, 0.0);
        for (oa, ob) in [(0usize, 0usize), (1, 1), (2, 2)] {
            let ca = f.circle_centers(&s, &pa).unwrap()[oa];
            let cb = f.circle_centers(&s, &pb).unwrap()[ob];
            assert!(ca.distance(&cb) >= gap - 1e-12);
        }
        assert!(!collision(&s, &pa, &s, &pb, &f, &f).unwrap());
    }

    #[test]
    fn collision_is_symmetric() {
        let pa = straight_path(0);
        let pb = ReferencePath::new(
            1,
            vec![CartesianPoint::new(5.0, -5.0), CartesianPoint::new(5.0, 5.0)],
            4.0,
        )
        .unwrap();
        let f = VehicleFootprint::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let sa = FrenetState::new(rng.random_range(0.0..10.0), rng.random_range(-2.0..2.0));
            let sb = FrenetState::new(rng.random_range(0.0..10.0), rng.random_range(-2.0..2.0));
            let ab = collision(&sa, &pa, &sb, &pb, &f, &f).unwrap();
            let ba = collision(&sb, &pb, &sa, &pa, &f, &f).unwrap();
            assert_eq!(ab, ba);
        }
    }

    #[test]
    fn paths_round_trip_through_csv() {
        let paths = vec![
            straight_path(0).with_origin(5.0).unwrap(),
            arc_path(1, 10.0).with_origin(12.0).unwrap(),
        ];
        let mut csv = Vec::new();
        let mut meta = Vec::new();
        save_paths(&paths, &mut csv, &mut meta).unwrap();
        let loaded = load_paths(
            std::io::BufReader::new(csv.as_slice()),
            std::str::from_utf8(&meta).unwrap(),
        )
        .unwrap();
        assert_eq!(loaded.len(), 2);
        for (a, b) in paths.iter().zip(&loaded) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.vertices().len(), b.vertices().len());
            assert_relative_eq!(a.origin_arc_length(), b.origin_arc_length());
            assert_relative_eq!(a.corridor_half_width(), b.corridor_half_width());
            assert_relative_eq!(a.total_length(), b.total_length(), epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_paths_rejected() {
        assert!(ReferencePath::new(0, vec![CartesianPoint::new(0.0, 0.0)], 4.0).is_err());
        assert!(ReferencePath::new(
            0,
            vec![CartesianPoint::new(1.0, 1.0), CartesianPoint::new(1.0, 1.0)],
            4.0
        )
        .is_err());
        assert!(straight_path(0).with_origin(11.0).is_err());
    }
}
