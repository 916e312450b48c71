//! Beta-distribution spray deposition model.
//!
//! For a gun at `g` spraying along unit axis `a` onto a surface point `s` with
//! unit normal `n`:
//!
//! ```text
//! L = |s - g|,  cos θ = a·(s - g)/L,  r = H tan θ,  cos γ = n·(g - s)/L
//! q = A (1 - r²/R²) (H/L)² cos θ / cos³ γ     if r <= R, θ < π/2, γ < π/2
//! q = 0                                        otherwise
//! ```
//!
//! `H` is the calibration height at which the footprint radius is `R`; the
//! actual gun height only enters through `L` and `θ`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pointcloud::ColorPointCloud;
use crate::trajectory::DiscretizedTrajectory;
use crate::{Error, Result, Vec3};

/// Grazing-incidence cutoff: surface points whose γ is within this angle of
/// π/2 receive nothing.
pub const GRAZING_CUTOFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepositionParams {
    /// Deposition rate constant (cm/s).
    #[serde(rename = "A")]
    pub rate: f64,
    /// Calibration height (cm).
    #[serde(rename = "H")]
    pub height: f64,
    /// Footprint radius at the calibration height (cm).
    #[serde(rename = "R")]
    pub radius: f64,
}

impl Default for DepositionParams {
    fn default() -> Self {
        Self {
            rate: 0.01,
            height: 12.0,
            radius: 5.0,
        }
    }
}

impl DepositionParams {
    pub fn new(rate: f64, height: f64, radius: f64) -> Result<Self> {
        let p = Self { rate, height, radius };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("A", self.rate), ("H", self.height), ("R", self.radius)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("deposition parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Deposition rate (cm/s) at `surface` from a gun at `gun` spraying along `axis`.
pub fn deposition_rate(
    gun: &Vec3,
    axis: &Vec3,
    surface: &Vec3,
    normal: &Vec3,
    params: &DepositionParams,
) -> Result<f64> {
    let (al, nl) = (axis.norm(), normal.norm());
    if !(al > 0.0) || !(nl > 0.0) {
        return Err(Error::domain("nozzle axis and surface normal must be non-zero"));
    }
    let to_surface = surface - gun;
    if to_surface.norm_squared() == 0.0 {
        log::debug!("gun coincides with surface point {surface:?}; outside the model, rate set to 0");
        return Ok(0.0);
    }
    Ok(rate_unchecked(gun, &(axis / al), surface, &(normal / nl), params))
}

#[inline]
fn rate_unchecked(gun: &Vec3, axis: &Vec3, surface: &Vec3, normal: &Vec3, p: &DepositionParams) -> f64 {
    let ray = surface - gun;
    let dist2 = ray.norm_squared();
    if dist2 == 0.0 {
        return 0.0;
    }
    let dist = dist2.sqrt();
    let cos_theta = axis.dot(&ray) / dist;
    if cos_theta <= 0.0 {
        return 0.0;
    }
    let cos_gamma = -normal.dot(&ray) / dist;
    if cos_gamma <= GRAZING_CUTOFF.sin() {
        return 0.0;
    }
    let sin2 = (1.0 - cos_theta * cos_theta).max(0.0);
    let r2 = p.height * p.height * sin2 / (cos_theta * cos_theta);
    let radius2 = p.radius * p.radius;
    if r2 > radius2 {
        return 0.0;
    }
    let h_over_l2 = p.height * p.height / dist2;
    p.rate * (1.0 - r2 / radius2) * h_over_l2 * cos_theta / (cos_gamma * cos_gamma * cos_gamma)
}

/// Simulated film thickness (cm) per cloud point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThicknessField(Vec<f64>);

impl ThicknessField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain(format!("thickness {i} is negative or not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,thickness\n");
        for (i, t) in self.0.iter().enumerate() {
            let _ = writeln!(out, "{i},{t}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "index,thickness" => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "expected header `index,thickness`".into(),
                })
            }
        }
        let mut values = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: n + 1,
                msg: format!("malformed row `{line}`"),
            };
            let (idx, t) = line.split_once(',').ok_or_else(bad)?;
            let idx: usize = idx.trim().parse().map_err(|_| bad())?;
            if idx != values.len() {
                return Err(bad());
            }
            values.push(t.trim().parse::<f64>().map_err(|_| bad())?);
        }
        Self::new(values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Accumulate `rate × dwell` over every gun-on waypoint for every cloud point.
/// Each point sums its waypoints in trajectory order, so the result does not
/// depend on how points are partitioned across threads.
pub fn simulate_thickness(
    traj: &DiscretizedTrajectory,
    cloud: &ColorPointCloud,
    params: &DepositionParams,
) -> Result<ThicknessField> {
    params.validate()?;
    let normals = cloud.normals().ok_or_else(|| {
        Error::domain("cloud has no normals; run normal estimation first")
    })?;
    let active: Vec<_> = traj.waypoints.iter().filter(|w| w.gun_on).collect();
    for w in &active {
        if !((w.axis.norm() - 1.0).abs() < 1e-6) {
            return Err(Error::domain("waypoint nozzle axis is not unit length"));
        }
    }
    let values = cloud
        .points()
        .par_iter()
        .zip(normals.par_iter())
        .map(|(p, n)| {
            active
                .iter()
                .map(|w| rate_unchecked(&w.position, &w.axis, p, n, params) * w.dwell)
                .fold(0.0, |acc, x| acc + x)
        })
        .collect();
    Ok(ThicknessField(values))
}

/// Indices with positive thickness, in cloud order.
pub fn coverage_mask(field: &ThicknessField) -> Vec<usize> {
    field
        .values()
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| (t > 0.0).then_some(i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::Rgb8;
    use crate::trajectory::Waypoint;

    fn params() -> DepositionParams {
        DepositionParams::new(1.0, 12.0, 5.0).unwrap()
    }

    fn down() -> Vec3 {
        Vec3::new(0.0, 0.0, -1.0)
    }

    #[test]
    fn on_axis_rate_is_a() {
        let gun = Vec3::new(0.0, 0.0, 12.0);
        let q = deposition_rate(&gun, &down(), &Vec3::zeros(), &Vec3::z(), &params()).unwrap();
        assert!((q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lateral_offsets() {
        let gun = Vec3::new(0.0, 0.0, 12.0);
        let q = deposition_rate(&gun, &down(), &Vec3::new(3.0, 0.0, 0.0), &Vec3::z(), &params()).unwrap();
        assert!((q - 0.64).abs() < 1e-12);
        let q = deposition_rate(&gun, &down(), &Vec3::new(5.1, 0.0, 0.0), &Vec3::z(), &params()).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn behind_nozzle_and_back_faces_get_nothing() {
        let gun = Vec3::new(0.0, 0.0, 12.0);
        let up = Vec3::z();
        assert_eq!(deposition_rate(&gun, &up, &Vec3::zeros(), &Vec3::z(), &params()).unwrap(), 0.0);
        assert_eq!(deposition_rate(&gun, &down(), &Vec3::zeros(), &-Vec3::z(), &params()).unwrap(), 0.0);
        // Grazing normal.
        assert_eq!(deposition_rate(&gun, &down(), &Vec3::zeros(), &Vec3::x(), &params()).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        let gun = Vec3::zeros();
        assert!(deposition_rate(&gun, &Vec3::zeros(), &Vec3::z(), &Vec3::z(), &params()).is_err());
        assert!(deposition_rate(&gun, &down(), &Vec3::z(), &Vec3::zeros(), &params()).is_err());
        assert_eq!(deposition_rate(&gun, &down(), &gun, &Vec3::z(), &params()).unwrap(), 0.0);
        assert!(DepositionParams::new(0.0, 1.0, 1.0).is_err());
    }

    fn single_waypoint(dwell: f64, gun_on: bool) -> DiscretizedTrajectory {
        DiscretizedTrajectory {
            spacing: 1.0,
            waypoints: vec![Waypoint {
                position: Vec3::new(0.0, 0.0, 12.0),
                axis: down(),
                offset_dir: Vec3::z(),
                speed: 1.0,
                dwell,
                gun_on,
                station: 0.0,
            }],
        }
    }

    fn flat_cloud(points: Vec<Vec3>) -> ColorPointCloud {
        let n = points.len();
        ColorPointCloud::new(points, vec![Rgb8::default(); n])
            .unwrap()
            .with_normals(vec![Vec3::z(); n])
            .unwrap()
    }

    #[test]
    fn thickness_examples() {
        let cloud = flat_cloud(vec![Vec3::new(3.0, 0.0, 0.0), Vec3::new(9.0, 0.0, 0.0)]);
        let empty = DiscretizedTrajectory::default();
        assert_eq!(simulate_thickness(&empty, &cloud, &params()).unwrap().values(), &[0.0, 0.0]);

        let field = simulate_thickness(&single_waypoint(2.0, true), &cloud, &params()).unwrap();
        assert!((field.values()[0] - 1.28).abs() < 1e-12);
        assert_eq!(field.values()[1], 0.0);
        assert_eq!(coverage_mask(&field), vec![0]);

        let off = simulate_thickness(&single_waypoint(2.0, false), &cloud, &params()).unwrap();
        assert_eq!(off.values(), &[0.0, 0.0]);

        let bare = cloud.clone().without_normals();
        assert!(simulate_thickness(&empty, &bare, &params()).is_err());
    }

    #[test]
    fn mask_examples() {
        assert!(coverage_mask(&ThicknessField::zeros(4)).is_empty());
        let f = ThicknessField::new(vec![0.0, 0.1, 0.0, 0.2]).unwrap();
        assert_eq!(coverage_mask(&f), vec![1, 3]);
        assert!(ThicknessField::new(vec![-1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let f = ThicknessField::new(vec![0.0, 0.123_456_789_012_345_6, 3.5]).unwrap();
        let text = f.to_csv();
        assert!(text.starts_with("index,thickness\n0,0\n"));
        assert_eq!(ThicknessField::from_csv(&text).unwrap(), f);
        assert!(ThicknessField::from_csv("i,t\n").is_err());
        assert!(ThicknessField::from_csv("index,thickness\n1,0.5\n").is_err());
    }
}
