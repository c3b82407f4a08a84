use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{WeatherCondition, WeatherContext};
use crate::voxel::{Point, PointCloud};

use super::generate::Observation;

/// LiDAR degradation in precipitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RainModel {
    pub p_drop: f64,
    /// Standard deviation of the range perturbation, in metres.
    pub range_sigma: f64,
}

/// Camera degradation in low light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NightModel {
    pub gamma: f64,
    pub sigma_img: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionModel {
    pub rain: RainModel,
    pub night: NightModel,
}

impl Default for CorruptionModel {
    fn default() -> Self {
        Self { rain: RainModel { p_drop: 0.4, range_sigma: 0.1 }, night: NightModel { gamma: 0.2, sigma_img: 0.05 } }
    }
}

impl CorruptionModel {
    pub fn validate(&self) -> Result<()> {
        let r = self.rain;
        let n = self.night;
        if !(0.0..=1.0).contains(&r.p_drop) || !(r.range_sigma >= 0.0 && r.range_sigma.is_finite()) {
            return Err(Error::Config(format!("rain model out of range: {r:?}")));
        }
        if !(n.gamma > 0.0 && n.gamma <= 1.0) || !(n.sigma_img >= 0.0 && n.sigma_img.is_finite()) {
            return Err(Error::Config(format!("night model out of range: {n:?}")));
        }
        Ok(())
    }
}

/// Drops each point with probability `p_drop` and moves survivors along
/// their ray from `origin` by Gaussian range noise.
pub fn rain_points(cloud: &PointCloud, origin: [f64; 3], model: RainModel, rng: &mut impl Rng) -> PointCloud {
    let noise = Normal::new(0.0, model.range_sigma.max(f64::MIN_POSITIVE)).expect("sigma");
    let points = cloud
        .points
        .iter()
        .filter_map(|p| {
            if rng.random_bool(model.p_drop) {
                return None;
            }
            if model.range_sigma == 0.0 {
                return Some(p.clone());
            }
            let d = [p.position[0] - origin[0], p.position[1] - origin[1], p.position[2] - origin[2]];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let dr = noise.sample(rng);
            let s = if r > 0.0 { (r + dr) / r } else { 1.0 };
            let position = [0, 1, 2].map(|a| origin[a] + d[a] * s);
            Some(Point { position, ..p.clone() })
        })
        .collect();
    PointCloud { points }
}

/// Applies the corruption matching `ctx.condition`. Rain degrades LiDAR,
/// night degrades the camera; every other condition is the identity.
/// `seed` makes the draw reproducible.
pub fn apply_corruption(obs: &Observation, model: &CorruptionModel, ctx: &WeatherContext, lidar_origin: [f64; 3], seed: u64) -> Result<Observation> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0_4400);
    let mut out = obs.clone();
    out.weather = *ctx;
    match ctx.condition {
        WeatherCondition::Rain => out.points = rain_points(&obs.points, lidar_origin, model.rain, &mut rng),
        WeatherCondition::Night => {
            let n = model.night;
            let noise = Normal::new(0.0, n.sigma_img.max(f64::MIN_POSITIVE)).expect("sigma");
            for v in out.image_features.data_mut() {
                *v = n.gamma * *v + if n.sigma_img > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            }
        }
        WeatherCondition::ClearDay | WeatherCondition::Fog | WeatherCondition::Other => {}
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize) -> PointCloud {
        let points = (0..n)
            .map(|i| Point { position: [1.0 + i as f64 * 1e-3, 2.0, 0.5], features: vec![1.0], label: None })
            .collect();
        PointCloud { points }
    }

    #[test]
    fn certain_drop_empties_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = rain_points(&cloud(100), [0.0; 3], RainModel { p_drop: 1.0, range_sigma: 0.1 }, &mut rng);
        assert!(out.is_empty());
    }

    #[test]
    fn zero_rain_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = cloud(50);
        assert_eq!(rain_points(&c, [0.0; 3], RainModel { p_drop: 0.0, range_sigma: 0.0 }, &mut rng), c);
    }

    #[test]
    fn range_noise_keeps_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = cloud(1);
        let out = rain_points(&c, [0.0; 3], RainModel { p_drop: 0.0, range_sigma: 0.5 }, &mut rng);
        let (a, b) = (c.points[0].position, out.points[0].position);
        let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        assert!(cross.iter().all(|v| v.abs() < 1e-12));
        assert_ne!(a, b);
    }

    #[test]
    fn bad_parameters_rejected() {
        let mut m = CorruptionModel::default();
        m.rain.p_drop = 1.5;
        assert!(m.validate().is_err());
        let mut m = CorruptionModel::default();
        m.night.gamma = 0.0;
        assert!(m.validate().is_err());
    }
}
