//! Simulation and control of an image-guided laser beam.
//!
//! A stereo camera pair observes the spot of a laser steered by an actuated
//! mirror. The mirror is treated as a one-pixel virtual camera, which turns the
//! three-view constraint into a cheap vector identity and yields a closed-form
//! servo law. On top of it sit a Frenet-frame path follower for each image and
//! a hybrid law that fuses both followers into one mirror command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod checks;
pub mod config;
pub mod error;
pub mod follow;
pub mod geometry;
pub mod hybrid;
pub mod metrics;
pub mod optics;
pub mod path;
pub mod sim;
pub mod trifocal;

pub use error::{Error, Result};
