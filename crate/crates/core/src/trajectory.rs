//! Spray-gun trajectories.
//!
//! A [`PathPolyline`] is a sequence of poses with a travel speed and a unit
//! offset direction (surface toward gun). [`discretize`] resamples it at equal
//! arc-length spacing `d` and assigns each waypoint its dwell time. The dwell
//! is `d / v` at interior waypoints and `d / (2 v)` at the two ends, so the
//! dwell times sum to the travel time of the discretized length.
//!
//! [`apply_control`] treats the polyline as a track on the workpiece surface
//! and lifts it by per-waypoint heights interpolated from control points.

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Default arc-length spacing between waypoints (cm).
pub const DEFAULT_SPACING: f64 = 0.2;

const FRAME_TOLERANCE: f64 = 1e-9;
const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    position: Vec3,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, position: Vec3) -> Result<Self> {
        let ortho = (rotation * rotation.transpose() - Matrix3::identity()).abs().max();
        if !(ortho <= FRAME_TOLERANCE) || !((rotation.determinant() - 1.0).abs() <= FRAME_TOLERANCE) {
            return Err(Error::domain("pose rotation is not a proper orthonormal matrix"));
        }
        if !position.iter().all(|c| c.is_finite()) {
            return Err(Error::domain("pose position is not finite"));
        }
        Ok(Self { rotation, position })
    }

    /// A pose whose tool −z axis is `axis`; the remaining frame axes are arbitrary.
    pub fn from_axis(position: Vec3, axis: Vec3) -> Result<Self> {
        let len = axis.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::domain("nozzle axis must be a non-zero finite vector"));
        }
        let z = -axis / len;
        let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let x = helper.cross(&z).normalize();
        let y = z.cross(&x);
        Self::new(Matrix3::from_columns(&[x, y, z]), position)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }
}

/// Direction of the spray: the negated third column of the rotation.
pub fn nozzle_axis(pose: &Pose) -> Vec3 {
    -pose.rotation.column(2).into_owned()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPose {
    pub pose: Pose,
    /// Travel speed (cm/s).
    pub speed: f64,
    /// Unit vector from the surface toward the gun.
    pub offset_dir: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPolyline {
    poses: Vec<PathPose>,
}

impl PathPolyline {
    pub fn new(poses: Vec<PathPose>) -> Result<Self> {
        if poses.len() < 2 {
            return Err(Error::domain("a path needs at least two poses"));
        }
        for (i, p) in poses.iter().enumerate() {
            if !(p.speed > 0.0) || !p.speed.is_finite() {
                return Err(Error::domain(format!("pose {i}: speed must be positive")));
            }
            if !((p.offset_dir.norm() - 1.0).abs() <= UNIT_TOLERANCE) {
                return Err(Error::domain(format!("pose {i}: offset direction is not unit length")));
            }
        }
        Ok(Self { poses })
    }

    /// Straight segment from `start` to `end` with a fixed nozzle axis and speed.
    /// The offset direction is the reversed nozzle axis.
    pub fn straight(start: Vec3, end: Vec3, axis: Vec3, speed: f64) -> Result<Self> {
        let a = Pose::from_axis(start, axis)?;
        let b = Pose::from_axis(end, axis)?;
        let offset_dir = -nozzle_axis(&a);
        Self::new(vec![
            PathPose { pose: a, speed, offset_dir },
            PathPose { pose: b, speed, offset_dir },
        ])
    }

    pub fn poses(&self) -> &[PathPose] {
        &self.poses
    }

    /// Cumulative arc length at each pose.
    pub fn stations(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.poses.len());
        let mut acc = 0.0;
        s.push(0.0);
        for w in self.poses.windows(2) {
            acc += (w[1].pose.position - w[0].pose.position).norm();
            s.push(acc);
        }
        s
    }

    pub fn length(&self) -> f64 {
        *self.stations().last().unwrap_or(&0.0)
    }

    /// Apply `rotation` then `translation` to every pose.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vec3) -> Result<Self> {
        let poses = self
            .poses
            .iter()
            .map(|p| {
                Ok(PathPose {
                    pose: Pose::new(rotation * p.pose.rotation, rotation * p.pose.position + translation)?,
                    speed: p.speed,
                    offset_dir: rotation * p.offset_dir,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(poses)
    }

    fn sample(&self, stations: &[f64], s: f64) -> Sample {
        let seg = stations
            .partition_point(|&x| x <= s)
            .saturating_sub(1)
            .min(self.poses.len() - 2);
        let (a, b) = (&self.poses[seg], &self.poses[seg + 1]);
        let len = stations[seg + 1] - stations[seg];
        let t = if len > 0.0 { ((s - stations[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let lerp = |x: Vec3, y: Vec3| x + (y - x) * t;
        let axis = lerp(nozzle_axis(&a.pose), nozzle_axis(&b.pose));
        let offset = lerp(a.offset_dir, b.offset_dir);
        Sample {
            position: lerp(a.pose.position, b.pose.position),
            axis: unit_or(axis, nozzle_axis(&a.pose)),
            speed: a.speed + (b.speed - a.speed) * t,
            offset_dir: unit_or(offset, a.offset_dir),
        }
    }
}

fn unit_or(v: Vec3, fallback: Vec3) -> Vec3 {
    let n = v.norm();
    if n > 1e-12 {
        v / n
    } else {
        fallback
    }
}

struct Sample {
    position: Vec3,
    axis: Vec3,
    speed: f64,
    offset_dir: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub position: Vec3,
    /// Unit spray direction.
    pub axis: Vec3,
    /// Unit direction from surface toward gun, carried from the path.
    pub offset_dir: Vec3,
    /// Travel speed (cm/s).
    pub speed: f64,
    /// Equivalent residence time (s).
    pub dwell: f64,
    pub gun_on: bool,
    /// Arc-length station along the source path (cm).
    pub station: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscretizedTrajectory {
    pub spacing: f64,
    pub waypoints: Vec<Waypoint>,
}

impl DiscretizedTrajectory {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Sum of dwell times over all waypoints, gun on or off.
    pub fn total_time(&self) -> f64 {
        self.waypoints.iter().map(|w| w.dwell).sum()
    }
}

fn dwell_weight(k: usize, count: usize) -> f64 {
    if count > 1 && (k == 0 || k + 1 == count) {
        0.5
    } else {
        1.0
    }
}

/// Waypoints at arc-length multiples of `d`; a trailing remainder shorter than
/// `d` is dropped.
pub fn discretize(path: &PathPolyline, d: f64) -> Result<DiscretizedTrajectory> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::domain(format!("spacing must be positive, got {d}")));
    }
    let stations = path.stations();
    let length = *stations.last().expect("path has >= 2 poses");
    if length < d {
        return Err(Error::domain(format!("path length {length} is shorter than spacing {d}")));
    }
    let intervals = (length / d * (1.0 + 1e-12)).floor() as usize;
    let count = intervals + 1;
    let waypoints = (0..count)
        .map(|k| {
            let s = (k as f64 * d).min(length);
            let sample = path.sample(&stations, s);
            Waypoint {
                position: sample.position,
                axis: sample.axis,
                offset_dir: sample.offset_dir,
                speed: sample.speed,
                dwell: dwell_weight(k, count) * d / sample.speed,
                gun_on: true,
                station: s,
            }
        })
        .collect();
    Ok(DiscretizedTrajectory { spacing: d, waypoints })
}

/// Box bounds on heights and speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub height: (f64, f64),
    pub speed: (f64, f64),
}

/// Per-control-point heights (cm), speeds (cm/s) and spray confidences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPoints {
    pub heights: Vec<f64>,
    pub speeds: Vec<f64>,
    pub confidences: Vec<f64>,
}

impl ControlPoints {
    pub fn uniform(count: usize, height: f64, speed: f64, confidence: f64) -> Self {
        Self {
            heights: vec![height; count],
            speeds: vec![speed; count],
            confidences: vec![confidence; count],
        }
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }
}

/// Piecewise-linear interpolation of control values pinned at equally spaced
/// stations `0, L/(n-1), ..., L`.
fn interp_controls(values: &[f64], length: f64, s: f64) -> f64 {
    let n = values.len();
    let u = if length > 0.0 { (s / length).clamp(0.0, 1.0) * (n - 1) as f64 } else { 0.0 };
    let i = (u.floor() as usize).min(n - 2);
    let t = u - i as f64;
    values[i] + (values[i + 1] - values[i]) * t
}

/// Discretize `path` as a surface track, then lift each waypoint by the
/// interpolated height along its offset direction, re-time it with the
/// interpolated speed, and switch the gun on where confidence >= 0.5.
pub fn apply_control(
    path: &PathPolyline,
    controls: &ControlPoints,
    bounds: &ControlBounds,
    d: f64,
) -> Result<DiscretizedTrajectory> {
    let n = controls.heights.len();
    if n < 2 || controls.speeds.len() != n || controls.confidences.len() != n {
        return Err(Error::domain(format!(
            "control vectors must share a length >= 2 (got {}, {}, {})",
            n,
            controls.speeds.len(),
            controls.confidences.len()
        )));
    }
    let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    for k in 0..n {
        if !inside(controls.heights[k], bounds.height) {
            return Err(Error::domain(format!("height {} out of bounds", controls.heights[k])));
        }
        if !inside(controls.speeds[k], bounds.speed) || !(controls.speeds[k] > 0.0) {
            return Err(Error::domain(format!("speed {} out of bounds", controls.speeds[k])));
        }
        if !inside(controls.confidences[k], (0.0, 1.0)) {
            return Err(Error::domain(format!(
                "confidence {} outside [0, 1]",
                controls.confidences[k]
            )));
        }
    }

    let mut traj = discretize(path, d)?;
    let length = path.length();
    let count = traj.waypoints.len();
    for (k, w) in traj.waypoints.iter_mut().enumerate() {
        let height = interp_controls(&controls.heights, length, w.station);
        let speed = interp_controls(&controls.speeds, length, w.station);
        let conf = interp_controls(&controls.confidences, length, w.station);
        w.position += w.offset_dir * height;
        w.speed = speed;
        w.dwell = dwell_weight(k, count) * d / speed;
        w.gun_on = conf >= 0.5;
    }
    Ok(traj)
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub p: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 9]>,
    pub speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_dir: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gun_on: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub poses: Vec<PoseRecord>,
}

impl TryFrom<&TrajectoryFile> for PathPolyline {
    type Error = Error;

    fn try_from(file: &TrajectoryFile) -> Result<Self> {
        let poses = file
            .poses
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let position = Vec3::from(rec.p);
                let pose = match (rec.rotation, rec.axis) {
                    (Some(t), _) => Pose::new(Matrix3::from_row_slice(&t), position)?,
                    (None, Some(a)) => Pose::from_axis(position, Vec3::from(a))?,
                    (None, None) => {
                        return Err(Error::Format(format!("pose {i} has neither `axis` nor `T`")))
                    }
                };
                let offset_dir = match rec.offset_dir {
                    Some(o) => {
                        let o = Vec3::from(o);
                        let n = o.norm();
                        if !(n > 0.0) {
                            return Err(Error::domain(format!("pose {i}: zero offset direction")));
                        }
                        o / n
                    }
                    None => -nozzle_axis(&pose),
                };
                Ok(PathPose {
                    pose,
                    speed: rec.speed,
                    offset_dir,
                })
            })
            .collect::<Result<_>>()?;
        PathPolyline::new(poses)
    }
}

impl From<&PathPolyline> for TrajectoryFile {
    fn from(path: &PathPolyline) -> Self {
        let poses = path
            .poses
            .iter()
            .map(|p| PoseRecord {
                p: p.pose.position.into(),
                axis: Some(nozzle_axis(&p.pose).into()),
                rotation: None,
                speed: p.speed,
                offset_dir: Some(p.offset_dir.into()),
                dwell: None,
                gun_on: None,
            })
            .collect();
        Self { poses }
    }
}

impl From<&DiscretizedTrajectory> for TrajectoryFile {
    fn from(traj: &DiscretizedTrajectory) -> Self {
        let poses = traj
            .waypoints
            .iter()
            .map(|w| PoseRecord {
                p: w.position.into(),
                axis: Some(w.axis.into()),
                rotation: None,
                speed: w.speed,
                offset_dir: Some(w.offset_dir.into()),
                dwell: Some(w.dwell),
                gun_on: Some(w.gun_on),
            })
            .collect();
        Self { poses }
    }
}

impl TryFrom<&TrajectoryFile> for DiscretizedTrajectory {
    type Error = Error;

    /// Explicit waypoints; every pose must carry a dwell time. Missing
    /// `gun_on` means on; missing offset direction means the reversed axis.
    fn try_from(file: &TrajectoryFile) -> Result<Self> {
        let mut station = 0.0;
        let mut prev: Option<Vec3> = None;
        let waypoints = file
            .poses
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let position = Vec3::from(rec.p);
                let pose = match (rec.rotation, rec.axis) {
                    (Some(t), _) => Pose::new(Matrix3::from_row_slice(&t), position)?,
                    (None, Some(a)) => Pose::from_axis(position, Vec3::from(a))?,
                    (None, None) => {
                        return Err(Error::Format(format!("pose {i} has neither `axis` nor `T`")))
                    }
                };
                let dwell = rec
                    .dwell
                    .ok_or_else(|| Error::Format(format!("pose {i} has no `dwell`")))?;
                if !(dwell >= 0.0) || !dwell.is_finite() {
                    return Err(Error::domain(format!("pose {i}: dwell must be finite and >= 0")));
                }
                let axis = nozzle_axis(&pose);
                let offset_dir = rec.offset_dir.map(|o| unit_or(Vec3::from(o), -axis)).unwrap_or(-axis);
                if let Some(p) = prev {
                    station += (position - p).norm();
                }
                prev = Some(position);
                Ok(Waypoint {
                    position,
                    axis,
                    offset_dir,
                    speed: rec.speed,
                    dwell,
                    gun_on: rec.gun_on.unwrap_or(true),
                    station,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if waypoints.is_empty() {
            return Err(Error::domain("trajectory has no waypoints"));
        }
        Ok(Self { spacing: 0.0, waypoints })
    }
}

/// Load a trajectory for simulation: a file whose poses all carry `dwell` is
/// taken as explicit waypoints, anything else as a path discretized at `d`.
pub fn load_trajectory(path: impl AsRef<Path>, d: f64) -> Result<DiscretizedTrajectory> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TrajectoryFile = serde_json::from_str(&text)?;
    if !file.poses.is_empty() && file.poses.iter().all(|p| p.dwell.is_some()) {
        DiscretizedTrajectory::try_from(&file)
    } else {
        discretize(&PathPolyline::try_from(&file)?, d)
    }
}

pub fn load_path(path: impl AsRef<Path>) -> Result<PathPolyline> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: TrajectoryFile = serde_json::from_str(&text)?;
    PathPolyline::try_from(&file)
}

pub fn save_trajectory_file(file: &TrajectoryFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(file)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
