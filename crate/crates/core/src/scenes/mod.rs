//! Deterministic synthetic driving scenes: layouts of labelled boxes,
//! simulated LiDAR and camera observations, and weather corruption.

mod corruption;
mod generate;
mod io;
mod layout;

pub use corruption::{apply_corruption, rain_points, CorruptionModel, NightModel, RainModel};
pub use generate::{
    class_signature, generate_scene, rasterize_labels, Observation, CAMERA_FEATURE_DIM, CAMERA_SIGNAL, LIDAR_FEATURE_DIM,
};
pub use io::{load_scene, save_scene, SceneFile};
pub use layout::{desk_camera, LidarPattern, Primitive, SceneSpec};

/// Semantic classes of the synthetic world, in id order.
pub const CLASS_NAMES: [&str; 5] = ["driveable_surface", "car", "pedestrian", "manmade", "vegetation"];

pub fn class_names() -> Vec<String> {
    CLASS_NAMES.iter().map(|s| s.to_string()).collect()
}
