//! Windowed CSI compression at an edge endpoint with joint reconstruction
//! and human-activity classification at a cloud endpoint.
//!
//! The crate is organized around the data path: [`data`] ingests or
//! synthesizes CSI recordings and slices them into fixed-length windows;
//! [`model`] holds the encoder / recurrent / decoder / classifier network
//! and its analytic cost accounting; [`train`] runs the multi-task
//! objective; [`eval`] computes NMSE and accuracy and drives experiment
//! sweeps; [`stream`] moves compressed windows between the edge and cloud
//! halves over a byte-exact wire format. Everything is built on the small
//! autodiff engine in [`numerics`].

pub mod error;
pub mod model;
pub mod data;
pub mod eval;
pub mod numerics;
pub mod stream;
pub mod train;

pub use error::{Error, Result};
