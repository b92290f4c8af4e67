//! Four-stage optimization, checkpoints, and posing with a trained field.

mod checkpoint;
mod config;
mod dataset;
mod posing;
mod trainer;

pub use checkpoint::{Checkpoint, Model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use dataset::{frame_image_path, frame_mask_path, Dataset, Frame, PoseFile, View};
pub use posing::{pose_mesh, pose_points, query_field};
pub use trainer::{DirObserver, LogRow, NullObserver, Prepared, TrainObserver, Trainer};
