//! Pose-dependent linear blend skinning fields learned from multi-view
//! silhouettes and images.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] – triangle meshes, adjacency, Laplacian, geodesics, sampling
//! * [`kinematics`] – skeletons, forward kinematics, pose normalization
//! * [`skinning`] – linear blend skinning and heat-diffusion initial weights
//! * [`nn`] – coordinate MLPs with a small reverse-mode tape and Adam
//! * [`render`] – pinhole cameras, z-buffer rasterization, distance transforms
//! * [`losses`] – silhouette, rendering, Laplacian, skinning and part losses
//! * [`training`] – the four-stage schedule, checkpoints and posing
//! * [`synthetic`] – a two-bone arm scene with known pose-dependent weights
//! * [`metrics`] – Chamfer and one-sided point-to-surface distances
//! * [`gradcheck`] – finite-difference suites for every differentiable piece
//!
//! The guide in `book/` walks through each stage; its code listings are
//! compiled as doctests.

pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod kinematics;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod render;
pub mod skinning;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    mod kinematics {}
    #[doc = include_str!("../../../book/src/skinning.md")]
    mod skinning {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/rendering.md")]
    mod rendering {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
