//! Shape correspondence with spectral and learned per-vertex embeddings.
//!
//! The crate is organized bottom-up:
//!
//! - [`mesh`]: triangle meshes, file I/O, lumped vertex areas, components.
//! - [`spectral`]: cotangent Laplacian, generalized eigensolve, Dirichlet energy,
//!   hybrid learned/LBO bases and the basis file format.
//! - [`geodesics`]: graph geodesics, geodesic error and the geodesic-ball cutter.
//! - [`fmap`]: functional maps, point-map recovery, soft correspondences and losses.
//! - [`zoomout`]: ZoomOut refinement and functional-map block diagnostics.
//! - [`embed_opt`]: gradient-descent fitting of free per-vertex embeddings.
//! - [`harness`]: experiment configs, batch evaluation and CSV reports.

pub mod embed_opt;
pub mod error;
pub mod fmap;
pub mod geodesics;
pub mod harness;
pub mod knn;
pub mod linalg;
pub mod mesh;
pub mod spectral;
pub mod zoomout;

pub use error::{Error, Result};
