//! Single-demonstration learning for articulated mechanisms.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod demo_pipeline;
pub mod geometry;
pub mod mechanism;
pub mod perception;
pub mod scalar;

pub use scalar::Real;

pub type Pose = geometry::Pose<f64>;
pub type CameraModel = geometry::CameraModel<f64>;
pub type PixelBox = geometry::PixelBox<f64>;
pub type GraspLabel = geometry::GraspLabel<f64>;
