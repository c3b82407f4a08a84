use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::voxel::{read_voxf, voxelize, write_voxf, GridSpec, SplatPlan, VoxelGrid};

use super::generate::{Observation, LIDAR_FEATURE_DIM};
use super::layout::SceneSpec;

/// JSON scene record; cached grids live next to it as VOXF files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub spec: SceneSpec,
    pub lidar_grid: String,
    pub camera_grid: String,
}

/// Writes `scene.json`, `lidar.voxf` and `camera.voxf` into `dir`.
pub fn save_scene(dir: &Path, spec: &SceneSpec, obs: &Observation) -> Result<SceneFile> {
    std::fs::create_dir_all(dir)?;
    let lidar: VoxelGrid<f64> = voxelize(&obs.points, &spec.grid.with_channels(LIDAR_FEATURE_DIM))?;
    let plan = SplatPlan::new(&spec.camera, &spec.grid)?;
    let mut tape = crate::tensor::Tape::new();
    let f = tape.constant(obs.image_features.clone());
    let p = tape.constant(obs.depth_probs.clone());
    let camera = plan.splat(&mut tape, f, p)?.to_grid(&tape);
    write_voxf(&lidar, std::io::BufWriter::new(std::fs::File::create(dir.join("lidar.voxf"))?))?;
    write_voxf(&camera, std::io::BufWriter::new(std::fs::File::create(dir.join("camera.voxf"))?))?;
    let file = SceneFile { spec: spec.clone(), lidar_grid: "lidar.voxf".into(), camera_grid: "camera.voxf".into() };
    std::fs::write(dir.join("scene.json"), serde_json::to_string_pretty(&file)?)?;
    Ok(file)
}

/// Reads a scene written by [`save_scene`], returning the layout and the
/// cached LiDAR and camera grids.
pub fn load_scene(dir: &Path) -> Result<(SceneSpec, VoxelGrid<f64>, VoxelGrid<f64>)> {
    let file: SceneFile = serde_json::from_str(&std::fs::read_to_string(dir.join("scene.json"))?)?;
    let open = |name: &str| -> Result<VoxelGrid<f64>> { read_voxf(std::io::BufReader::new(std::fs::File::open(dir.join(name))?)) };
    let lidar = open(&file.lidar_grid)?;
    let camera = open(&file.camera_grid)?;
    let check = |g: &GridSpec| g.same_extent(&file.spec.grid);
    if !(check(&lidar.spec) && check(&camera.spec)) {
        return Err(crate::error::Error::Format("cached grids do not match the scene grid".into()));
    }
    Ok((file.spec, lidar, camera))
}
