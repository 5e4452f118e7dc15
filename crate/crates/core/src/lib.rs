//! Multi-view pinhole camera calibration.
//!
//! Cameras are calibrated one at a time from 3D–2D correspondences with the
//! Direct Linear Transformation ([`dlt`]), moved from their local measurement
//! frames into one global frame by least-squares rigid fitting
//! ([`registration`]), and then checked for agreement: a fixed world point
//! must land on the same image coordinate through every registered camera.
//!
//! [`features`] finds calibration dots in grayscale images, [`simulator`]
//! produces scenes with known ground truth, and [`cli`] ties everything to
//! plain-text file formats.

pub mod cli;
pub mod dlt;
pub mod features;
pub mod geometry;
pub mod numeric;
pub mod projection;
pub mod registration;
pub mod simulator;

pub use dlt::{calibrate, CalibrationResult, Correspondence, DltError};
pub use geometry::{Point2, Point3, RigidTransform, Rotation3};
pub use projection::{Camera, CameraIntrinsics, ProjectionMatrix};
