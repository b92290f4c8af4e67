use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nn::NetConfig;
use crate::skinning::HeatConfig;

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Iterations of the four stages.
    pub stages: [u64; 4],
    pub lr: f64,
    /// Frames per iteration.
    pub batch_frames: usize,
    /// Cameras drawn per iteration (all cameras when larger than the rig).
    pub cameras_per_iter: usize,
    pub seed: u64,
    /// Recorded for reproducibility; reductions always run in frame order.
    pub deterministic: bool,
    /// Iterations fitting the skinning field to the initial weights before
    /// stage 1.
    pub skin_warmup: u64,
    /// `false` trains a pose-independent weight field.
    pub pose_conditioned: bool,
    /// `false` drops the rendering loss: stages 2 and 3 are skipped and
    /// stage 4 uses the stage-1 terms.
    pub rendering: bool,
    /// Keep every n-th frame of the dataset.
    pub frame_stride: usize,
    pub loss: LossWeights,
    pub net: NetConfig,
    pub heat: HeatConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stages: [50_000, 5_000, 5_000, 20_000],
            lr: 1e-3,
            batch_frames: 4,
            cameras_per_iter: 4,
            seed: 0,
            deterministic: true,
            skin_warmup: 300,
            pose_conditioned: true,
            rendering: true,
            frame_stride: 1,
            loss: LossWeights::default(),
            net: NetConfig::default(),
            heat: HeatConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Iteration counts sized for a single workstation.
    pub const DESK_STAGES: [u64; 4] = [2_000, 500, 500, 1_000];

    pub fn desk() -> Self {
        Self {
            stages: Self::DESK_STAGES,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_frames == 0 || self.cameras_per_iter == 0 || self.frame_stride == 0 {
            return Err(Error::Config("batch_frames, cameras_per_iter and frame_stride must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.net.hidden.is_empty() || self.net.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        self.loss.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = TrainConfig::desk();
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let partial = TrainConfig::from_toml("stages = [1, 2, 3, 4]\n[loss]\nlap = 2.0\n").unwrap();
        assert_eq!(partial.stages, [1, 2, 3, 4]);
        assert_eq!(partial.loss.lap, 2.0);
        assert_eq!(partial.loss.r, 3.0);
        assert_eq!(partial.batch_frames, 4);
        assert!(TrainConfig::from_toml("batch_frames = 0").is_err());
        assert!(TrainConfig::from_toml("no_such_key = 1").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainConfig::desk();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn long_schedule_is_the_default() {
        let c = TrainConfig::default();
        assert_eq!(c.stages, [50_000, 5_000, 5_000, 20_000]);
        assert_eq!((c.lr, c.batch_frames), (1e-3, 4));
    }
}
