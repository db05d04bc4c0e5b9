//! Anchored radial observations for occupancy fields: anchor layouts,
//! conical point-cloud queries, visibility-based occupancy oracles,
//! iso-surface extraction, reconstruction metrics, and a small trainable
//! 2D attention model.

pub mod anchors;
pub mod bvh;
pub mod error;
pub mod field;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod nn2d;
pub mod obs;
pub mod par;
pub mod shapes;
pub mod spatial;
pub mod visibility;

mod mc_tables;

pub use error::{AroError, Result};
