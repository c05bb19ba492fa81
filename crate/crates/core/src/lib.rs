//! Deformable-object cutting toolkit.
//!
//! The crate is organised around the cutting loop: [`mpm`] advances an
//! elastoplastic body under a knife, [`topology`] turns damaged particles and
//! the knife sweep into persistent fragment labels, [`spectral`] scores the
//! fragments against a goal shape, and [`planner`] / [`datagen`] close the loop.
//! [`policy`] holds the discrete-diffusion action kernels and [`metrics`] the
//! point-set distances used as baselines.

pub mod blob;
pub mod datagen;
pub mod geometry;
pub mod metrics;
pub mod mpm;
pub mod planner;
pub mod policy;
pub mod scene;
pub mod spectral;
pub mod topology;

pub use geometry::{Mat3, Pose, Vec3};
