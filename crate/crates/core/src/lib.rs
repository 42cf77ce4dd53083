//! Joint reconstruction of several implicit surfaces under pairwise contact
//! and separation constraints.
//!
//! Each component is a signed distance field family with a latent code.
//! Components are first fitted to their reference data one at a time, then
//! refined together with losses that pull designated surface regions into
//! contact, push the remaining near-band regions apart, and penalize
//! interpenetration or gaps below a minimum.

pub mod constraints;
pub mod error;
pub mod field;
pub mod geom;
pub mod geometry;
pub mod io;
pub mod oracle;
pub mod sampling;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use geom::{BoundingBox, Point3, Pose};
