use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::WeatherContext;
use crate::voxel::{CameraModel, GridSpec};

use super::CLASS_NAMES;

/// Axis-aligned labelled box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub class: usize,
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Primitive {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] < self.max[a])
    }

    /// Entry distance of the ray `o + t·d`, `t > 0`, or `None` on a miss or
    /// when the origin is inside.
    pub fn ray_entry(&self, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if d[a].abs() < 1e-12 {
                if o[a] < self.min[a] || o[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let ta = (self.min[a] - o[a]) / d[a];
            let tb = (self.max[a] - o[a]) / d[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
        (t0 <= t1 && t0 > 0.0).then_some(t0)
    }

    fn overlaps(&self, other: &Primitive) -> bool {
        (0..3).all(|a| self.min[a] < other.max[a] && other.min[a] < self.max[a])
    }
}

/// Spinning-LiDAR ray pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarPattern {
    pub origin: [f64; 3],
    pub azimuth_steps: usize,
    pub elevations_deg: Vec<f64>,
    pub max_range: f64,
}

impl Default for LidarPattern {
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0, 0.0],
            azimuth_steps: 180,
            elevations_deg: vec![-32.0, -26.0, -21.0, -16.0, -12.0, -8.0, -5.0, -2.0, 1.0, 4.0],
            max_range: 30.0,
        }
    }
}

impl LidarPattern {
    /// Unit directions, elevation-major.
    pub fn directions(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.azimuth_steps * self.elevations_deg.len());
        for &e in &self.elevations_deg {
            let (se, ce) = e.to_radians().sin_cos();
            for k in 0..self.azimuth_steps {
                let az = 2.0 * std::f64::consts::PI * k as f64 / self.azimuth_steps as f64;
                let (sa, ca) = az.sin_cos();
                out.push([ce * ca, ce * sa, se]);
            }
        }
        out
    }
}

/// Oblique virtual camera behind the grid, looking across it.
pub fn desk_camera(grid: &GridSpec) -> CameraModel {
    let [x, _, z] = grid.ranges();
    let span = x[1] - x[0];
    let eye = [x[0] - 0.2 * span, 0.0, z[1] + 0.6 * (z[1] - z[0])];
    let target = [x[0] + 0.6 * span, 0.0, z[0]];
    let far = 1.6 * span;
    let bins = (1..=(far.ceil() as usize)).map(|d| d as f64).collect();
    CameraModel::look_at(eye, target, [0.0, 0.0, 1.0], (48, 32), 80.0, bins).expect("valid desk camera")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub layout: Vec<Primitive>,
    pub weather: WeatherContext,
    pub grid: GridSpec,
    pub camera: CameraModel,
    pub lidar: LidarPattern,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.camera.validate()?;
        if self.layout.is_empty() {
            return Err(Error::EmptyScene);
        }
        let r = self.grid.ranges();
        for (i, p) in self.layout.iter().enumerate() {
            if p.class >= CLASS_NAMES.len() {
                return Err(Error::OutOfRange(format!("primitive {i} has class {}", p.class)));
            }
            for a in 0..3 {
                let (lo, hi) = (r[a][0], r[a][1]);
                let half = (hi - lo) / 2.0;
                if !(p.min[a] < p.max[a]) || p.min[a] < lo - half || p.max[a] > hi + half {
                    return Err(Error::Config(format!("primitive {i} is degenerate or far outside the grid")));
                }
            }
        }
        Ok(())
    }

    /// Ground slab plus a seeded set of non-overlapping voxel-aligned
    /// objects. The objects avoid a small clearing around the LiDAR.
    pub fn random(seed: u64, weather: WeatherContext, grid: GridSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7_e000);
        let [xr, yr, zr] = grid.ranges();
        let [sx, sy, sz] = grid.voxel_size();
        let ground_top = zr[0] + sz;
        let mut layout = vec![Primitive { class: 0, min: [xr[0], yr[0], zr[0]], max: [xr[1], yr[1], ground_top] }];
        // (class, footprint in voxels, height in layers)
        let kinds: [(usize, [usize; 2], usize); 4] = [(1, [4, 2], 3), (2, [1, 1], 4), (3, [2, 3], 7), (4, [2, 2], 5)];
        let count = rng.random_range(6..=9);
        let mut tries = 0;
        while layout.len() < count + 1 && tries < 500 {
            tries += 1;
            let (class, mut fp, h) = kinds[layout.len() % kinds.len()];
            if rng.random_bool(0.5) {
                fp.swap(0, 1);
            }
            let ix = rng.random_range(0..=grid.nx - fp[0]);
            let iy = rng.random_range(0..=grid.ny - fp[1]);
            let min = [xr[0] + ix as f64 * sx, yr[0] + iy as f64 * sy, ground_top];
            let max = [min[0] + fp[0] as f64 * sx, min[1] + fp[1] as f64 * sy, (ground_top + h as f64 * sz).min(zr[1])];
            let candidate = Primitive { class, min, max };
            let clearing = Primitive { class: 0, min: [-2.0, -2.0, zr[0]], max: [2.0, 2.0, zr[1]] };
            if candidate.overlaps(&clearing) || layout[1..].iter().any(|p| p.overlaps(&candidate)) {
                continue;
            }
            layout.push(candidate);
        }
        Self { seed, layout, weather, grid, camera: desk_camera(&grid), lidar: LidarPattern::default() }
    }
}
