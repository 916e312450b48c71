//! Kubelka-Munk reflectance and a synthetic spraying-experiment generator.
//!
//! Each RGB channel is treated as an independent effective band with its own
//! absorption `K` and scattering `S` (1/cm). For background reflectance `Rg`
//! and layer thickness `X`:
//!
//! ```text
//! a = 1 + K/S,  b = sqrt(a² - 1),  c = b·coth(bSX)
//! R = (1 - Rg (a - c)) / (a - Rg + c)
//! ```
//!
//! `R(0) = Rg` and `R(∞) = a - b` (the masstone).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deposition::{simulate_thickness, DepositionParams, ThicknessField};
use crate::pointcloud::{ColorPointCloud, Rgb8};
use crate::trajectory::{discretize, DiscretizedTrajectory, PathPolyline, Waypoint};
use crate::{seed, Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmChannel {
    /// Absorption coefficient (1/cm).
    pub k: f64,
    /// Scattering coefficient (1/cm).
    pub s: f64,
}

impl KmChannel {
    pub fn new(k: f64, s: f64) -> Result<Self> {
        let ch = Self { k, s };
        ch.validate()?;
        Ok(ch)
    }

    fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::domain(format!("absorption K must be >= 0, got {}", self.k)));
        }
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(Error::domain(format!("scattering S must be > 0, got {}", self.s)));
        }
        Ok(())
    }

    fn ab(&self) -> (f64, f64) {
        let a = 1.0 + self.k / self.s;
        (a, (a * a - 1.0).sqrt())
    }

    /// Reflectance of an infinitely thick layer, `a - b`.
    pub fn masstone(&self) -> f64 {
        let (a, b) = self.ab();
        a - b
    }
}

pub fn km_reflectance(rg: f64, ch: &KmChannel, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rg) {
        return Err(Error::domain(format!("background reflectance {rg} outside [0, 1]")));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("thickness {x} must be >= 0")));
    }
    ch.validate()?;
    if x == 0.0 {
        return Ok(rg);
    }
    let (a, b) = ch.ab();
    let y = b * ch.s * x;
    // b·coth(y); for tiny y use the series 1/(SX) + b·y/3 so K = 0 stays finite.
    let c = if y < 1e-6 { 1.0 / (ch.s * x) + b * y / 3.0 } else { b / y.tanh() };
    let r = (1.0 - rg * (a - c)) / (a - rg + c);
    debug_assert!(r > -1e-9 && r < 1.0 + 1e-9, "reflectance {r} escaped [0, 1]");
    Ok(r.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmPaint {
    #[serde(rename = "class")]
    pub class_id: u32,
    #[serde(default)]
    pub name: String,
    #[serde(rename = "K")]
    pub absorption: [f64; 3],
    #[serde(rename = "S")]
    pub scattering: [f64; 3],
}

impl KmPaint {
    pub fn channel(&self, c: usize) -> KmChannel {
        KmChannel {
            k: self.absorption[c],
            s: self.scattering[c],
        }
    }

    pub fn validate(&self) -> Result<()> {
        (0..3).try_for_each(|c| self.channel(c).validate())
    }

    pub fn masstone(&self) -> [f64; 3] {
        [0, 1, 2].map(|c| self.channel(c).masstone())
    }
}

/// Painted color in normalized units, before quantization.
pub fn km_color_norm(base: [f64; 3], paint: &KmPaint, x: f64) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for c in 0..3 {
        out[c] = km_reflectance(base[c], &paint.channel(c), x)?;
    }
    Ok(out)
}

pub fn km_color(base: Rgb8, paint: &KmPaint, x: f64) -> Result<Rgb8> {
    Ok(Rgb8::from_norm(km_color_norm(base.to_norm(), paint, x)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub paints: Vec<KmPaint>,
}

impl Palette {
    pub fn get(&self, class_id: u32) -> Option<&KmPaint> {
        self.paints.iter().find(|p| p.class_id == class_id)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let palette: Palette = serde_json::from_str(&text)?;
        palette.paints.iter().try_for_each(KmPaint::validate)?;
        Ok(palette)
    }
}

/// Synthetic fixture paints: white, red, yellow, blue (classes 0-3).
/// Coefficients are illustrative, not measured.
pub fn default_palette() -> Palette {
    let paint = |class_id, name: &str, ks: [f64; 3]| KmPaint {
        class_id,
        name: name.to_string(),
        absorption: ks.map(|r| r * 60.0),
        scattering: [60.0; 3],
    };
    Palette {
        paints: vec![
            paint(0, "white", [0.02, 0.02, 0.03]),
            paint(1, "red", [0.05, 3.0, 2.5]),
            paint(2, "yellow", [0.05, 0.15, 4.0]),
            paint(3, "blue", [3.0, 1.0, 0.1]),
        ],
    }
}

// ---------------------------------------------------------------------------
// Synthetic experiments

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Each plate carries one uniform base color.
    Single,
    /// Each plate carries a first paint layer whose thickness ramps along x.
    Gradient,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Scenario::Single),
            "gradient" => Ok(Scenario::Gradient),
            other => Err(Error::Config(format!("unknown scenario `{other}` (expected single | gradient)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SprayProfile {
    /// Gun held still above the plate center for `dwell` seconds.
    StaticPoint { dwell: f64 },
    /// Straight pass along y across the plate at constant `speed`.
    LinePass { speed: f64, spacing: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientLayer {
    /// Class of the first-layer paint (looked up in the palette).
    pub paint: u32,
    /// First-layer thickness at the far x edge of the plate (cm).
    pub max_thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub scenario: Scenario,
    /// Plate base colors (single) or substrate colors under the first layer (gradient).
    pub base_colors: Vec<Rgb8>,
    #[serde(default)]
    pub gradient: Option<GradientLayer>,
    pub palette: Palette,
    /// Classes sprayed as the second layer; one plate per (base color, paint).
    pub spray_paints: Vec<u32>,
    pub spray: SprayProfile,
    /// Standard deviation of Gaussian camera noise in normalized color units.
    pub noise_sigma: f64,
    /// Grid points per plate.
    pub points_per_plate: usize,
    /// Plate side length (cm).
    pub plate_size: f64,
    pub gun_height: f64,
    pub deposition: DepositionParams,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Single,
            base_colors: vec![
                Rgb8::new(200, 200, 200),
                Rgb8::new(60, 160, 70),
                Rgb8::new(190, 40, 40),
                Rgb8::new(40, 60, 170),
            ],
            gradient: None,
            palette: default_palette(),
            spray_paints: vec![1, 3],
            spray: SprayProfile::StaticPoint { dwell: 10.0 },
            noise_sigma: 0.01,
            points_per_plate: 12_000,
            plate_size: 12.0,
            gun_height: 12.0,
            deposition: DepositionParams::default(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_plate == 0 {
            return Err(Error::Config("points_per_plate must be > 0".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        if !(self.plate_size > 0.0) || !(self.gun_height > 0.0) {
            return Err(Error::Config("plate_size and gun_height must be positive".into()));
        }
        if self.base_colors.is_empty() || self.spray_paints.is_empty() {
            return Err(Error::Config("need at least one base color and one spray paint".into()));
        }
        self.deposition.validate()?;
        self.palette.paints.iter().try_for_each(KmPaint::validate)?;
        for class in &self.spray_paints {
            if self.palette.get(*class).is_none() {
                return Err(Error::Config(format!("spray paint class {class} not in palette")));
            }
        }
        match (self.scenario, &self.gradient) {
            (Scenario::Gradient, None) => {
                return Err(Error::Config("gradient scenario needs a `gradient` layer".into()))
            }
            (Scenario::Gradient, Some(g)) => {
                if self.palette.get(g.paint).is_none() || !(g.max_thickness > 0.0) {
                    return Err(Error::Config("invalid gradient layer".into()));
                }
            }
            _ => {}
        }
        match self.spray {
            SprayProfile::StaticPoint { dwell } if !(dwell > 0.0) => {
                Err(Error::Config("static dwell must be positive".into()))
            }
            SprayProfile::LinePass { speed, spacing } if !(speed > 0.0) || !(spacing > 0.0) => {
                Err(Error::Config("line pass speed and spacing must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateInfo {
    pub base_color: Rgb8,
    pub paint: u32,
    /// First point index of this plate in the concatenated clouds.
    pub start: usize,
    pub len: usize,
    /// Plate center (cm).
    pub center: [f64; 3],
}

/// Before/after clouds (same geometry, +z normals), the simulated thickness on
/// the after cloud, and the paint class sprayed at each point.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub pre: ColorPointCloud,
    pub post: ColorPointCloud,
    pub thickness: ThicknessField,
    pub classes: Vec<u32>,
    pub plates: Vec<PlateInfo>,
}

/// Square grid of about `count` points with side `size`, centered at `center` in z = const.
pub fn plate_grid(count: usize, size: f64, center: Vec3) -> Vec<Vec3> {
    let side = (count as f64).sqrt().ceil().max(1.0) as usize;
    let step = if side > 1 { size / (side - 1) as f64 } else { 0.0 };
    let half = size / 2.0;
    let mut pts = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            pts.push(center + Vec3::new(i as f64 * step - half, j as f64 * step - half, 0.0));
        }
    }
    pts
}

fn spray_trajectory(cfg: &SyntheticConfig, center: Vec3) -> Result<DiscretizedTrajectory> {
    let down = Vec3::new(0.0, 0.0, -1.0);
    let gun_center = center + Vec3::new(0.0, 0.0, cfg.gun_height);
    match cfg.spray {
        SprayProfile::StaticPoint { dwell } => Ok(DiscretizedTrajectory {
            spacing: 0.0,
            waypoints: vec![Waypoint {
                position: gun_center,
                axis: down,
                offset_dir: Vec3::z(),
                speed: 0.0,
                dwell,
                gun_on: true,
                station: 0.0,
            }],
        }),
        SprayProfile::LinePass { speed, spacing } => {
            let half = Vec3::new(0.0, cfg.plate_size / 2.0, 0.0);
            let path = PathPolyline::straight(gun_center - half, gun_center + half, down, speed)?;
            discretize(&path, spacing)
        }
    }
}

/// Emulate a batch of spraying experiments, one plate per (base color, paint),
/// laid out side by side along x.
pub fn generate_synthetic_dataset(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut pre_points = Vec::new();
    let mut pre_colors = Vec::new();
    let mut classes = Vec::new();
    let mut plates = Vec::new();
    let mut trajectories = Vec::new();
    let pitch = cfg.plate_size + 2.0 * cfg.deposition.radius;
    let first_layer = cfg.gradient.as_ref().and_then(|g| cfg.palette.get(g.paint).map(|p| (g, p)));

    for base in &cfg.base_colors {
        for &paint in &cfg.spray_paints {
            let center = Vec3::new(plates.len() as f64 * pitch, 0.0, 0.0);
            let pts = plate_grid(cfg.points_per_plate, cfg.plate_size, center);
            let start = pre_points.len();
            for p in &pts {
                let color = match (cfg.scenario, first_layer) {
                    (Scenario::Gradient, Some((g, layer))) => {
                        let u = ((p.x - center.x) / cfg.plate_size + 0.5).clamp(0.0, 1.0);
                        km_color(*base, layer, u * g.max_thickness)?
                    }
                    _ => *base,
                };
                pre_colors.push(color);
            }
            classes.extend(std::iter::repeat_n(paint, pts.len()));
            plates.push(PlateInfo {
                base_color: *base,
                paint,
                start,
                len: pts.len(),
                center: center.into(),
            });
            trajectories.push(spray_trajectory(cfg, center)?);
            pre_points.extend(pts);
        }
    }

    let normals = vec![Vec3::z(); pre_points.len()];
    let pre = ColorPointCloud::new(pre_points, pre_colors)?.with_normals(normals)?;

    let mut thickness = vec![0.0; pre.len()];
    for (plate, traj) in plates.iter().zip(&trajectories) {
        let range = plate.start..plate.start + plate.len;
        let sub = ColorPointCloud::new(pre.points()[range.clone()].to_vec(), pre.colors()[range.clone()].to_vec())?
            .with_normals(vec![Vec3::z(); plate.len])?;
        let field = simulate_thickness(traj, &sub, &cfg.deposition)?;
        thickness[range].copy_from_slice(field.values());
    }
    let thickness = ThicknessField::new(thickness)?;

    let noise_seed = seed::derive(cfg.seed, "km-noise");
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let post_colors: Vec<Rgb8> = (0..pre.len())
        .into_par_iter()
        .map(|i| {
            let t = thickness.values()[i];
            let base = pre.colors()[i];
            if t <= 0.0 {
                return Ok(base);
            }
            let paint = cfg.palette.get(classes[i]).expect("validated");
            let mut c = km_color_norm(base.to_norm(), paint, t)?;
            if let Some(noise) = &noise {
                let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_indexed(noise_seed, i as u64));
                for v in &mut c {
                    *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
            Ok(Rgb8::from_norm(c))
        })
        .collect::<Result<_>>()?;
    let post = pre.recolored(post_colors)?;

    Ok(SyntheticDataset {
        pre,
        post,
        thickness,
        classes,
        plates,
    })
}
