use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fusion::WeatherContext;
use crate::metrics::{OccupancyLabels, VoxelLabel};
use crate::tensor::Tensor;
use crate::voxel::{GridSpec, Point, PointCloud};

use super::layout::{Primitive, SceneSpec};
use super::CLASS_NAMES;

pub const CAMERA_FEATURE_DIM: usize = 8;
/// Norm of a clean camera class signature.
pub const CAMERA_SIGNAL: f64 = 0.2;
/// `[1, normalized height, reflectance]`.
pub const LIDAR_FEATURE_DIM: usize = 3;
const DEPTH_SIGMA: f64 = 0.5;
const REFLECTANCE: [f64; 5] = [0.1, 0.8, 0.5, 0.35, 0.65];
const REFLECTANCE_NOISE: f64 = 0.02;
const SHADING_NOISE: f64 = 0.01;
const SURFACE_NUDGE: f64 = 1e-4;

/// Sensor data and labels of one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub points: PointCloud,
    /// `[CAMERA_FEATURE_DIM × H × W]`.
    pub image_features: Tensor<f64>,
    /// `[D_bin × H × W]`.
    pub depth_probs: Tensor<f64>,
    pub labels: OccupancyLabels,
    pub weather: WeatherContext,
}

/// Fixed per-class camera feature pattern, identical across scenes.
pub fn class_signature(class: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5163_0000 + class as u64);
    let raw: Vec<f64> = (0..CAMERA_FEATURE_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| v / n * CAMERA_SIGNAL).collect()
}

/// Label of every voxel from the primitive containing its centre.
pub fn rasterize_labels(layout: &[Primitive], grid: &GridSpec) -> OccupancyLabels {
    let labels = (0..grid.voxels())
        .map(|flat| {
            let c = grid.center(grid.unflatten(flat));
            layout
                .iter()
                .find(|p| p.contains(c))
                .map_or(VoxelLabel::Empty, |p| VoxelLabel::Class(p.class as u16))
        })
        .collect();
    OccupancyLabels::new(grid.dims(), CLASS_NAMES.len(), labels).expect("layout classes validated")
}

fn nearest_hit(layout: &[Primitive], o: [f64; 3], d: [f64; 3], max_range: f64) -> Option<(f64, &Primitive)> {
    layout
        .iter()
        .filter_map(|p| p.ray_entry(o, d).map(|t| (t, p)))
        .filter(|&(t, _)| t <= max_range)
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

fn add(a: [f64; 3], d: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]]
}

/// Clean observations of a scene; identical specs give identical output.
pub fn generate_scene(spec: &SceneSpec) -> Result<Observation> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let grid = &spec.grid;
    let z = grid.z_range;

    let refl_noise = Normal::new(0.0, REFLECTANCE_NOISE).expect("positive sigma");
    let mut points = Vec::new();
    for d in spec.lidar.directions() {
        let Some((t, prim)) = nearest_hit(&spec.layout, spec.lidar.origin, d, spec.lidar.max_range) else { continue };
        let p = add(spec.lidar.origin, d, t + SURFACE_NUDGE);
        let height = ((p[2] - z[0]) / (z[1] - z[0])).clamp(0.0, 1.0);
        let refl = REFLECTANCE[prim.class] + refl_noise.sample(&mut rng);
        points.push(Point { position: p, features: vec![1.0, height, refl], label: Some(prim.class) });
    }

    let cam = &spec.camera;
    let (w, h) = (cam.width, cam.height);
    let pixels = w * h;
    let bins = &cam.depth_bins;
    let forward = cam.rotation[2];
    let origin = cam.position();
    let signatures: Vec<Vec<f64>> = (0..CLASS_NAMES.len()).map(class_signature).collect();
    let shade = Normal::new(0.0, SHADING_NOISE).expect("positive sigma");
    let mut feats = vec![0.0; CAMERA_FEATURE_DIM * pixels];
    let mut probs = vec![0.0; bins.len() * pixels];
    for v in 0..h {
        for u in 0..w {
            let px = v * w + u;
            let ray = cam.pixel_ray(u, v);
            let Some((t, prim)) = nearest_hit(&spec.layout, origin, ray, f64::INFINITY) else { continue };
            let depth = t * (ray[0] * forward[0] + ray[1] * forward[1] + ray[2] * forward[2]);
            for (c, s) in signatures[prim.class].iter().enumerate() {
                feats[c * pixels + px] = s + shade.sample(&mut rng);
            }
            let weights: Vec<f64> =
                bins.iter().map(|b| (-(b - depth).powi(2) / (2.0 * DEPTH_SIGMA * DEPTH_SIGMA)).exp()).collect();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                for (k, wk) in weights.iter().enumerate() {
                    probs[k * pixels + px] = wk / total;
                }
            }
        }
    }

    Ok(Observation {
        points: PointCloud::new(points)?,
        image_features: Tensor::new(&[CAMERA_FEATURE_DIM, h, w], feats)?,
        depth_probs: Tensor::new(&[bins.len(), h, w], probs)?,
        labels: rasterize_labels(&spec.layout, grid),
        weather: spec.weather,
    })
}
