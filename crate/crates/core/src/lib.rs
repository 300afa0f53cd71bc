//! Core of a 3D face recognition pipeline that works on the sphere.
//!
//! Raw range scans are cleaned ([`extraction`]), rigidly registered against
//! an average face model ([`registration`]), projected onto an equiangular
//! spherical grid ([`sphere`]) and reduced to a handful of coefficients by
//! simultaneous matching pursuit over a dictionary of anisotropic spherical
//! Gaussians ([`dictionary`], [`pursuit`]). Recognition and verification use
//! L1 nearest-neighbour matching, optionally after LDA ([`recognition`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel drivers live in the `sphface` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dictionary;
pub mod error;
pub mod extraction;
pub mod kdtree;
pub mod pca;
pub mod pipeline;
pub mod pursuit;
pub mod recognition;
pub mod registration;
pub mod scan;
pub mod sphere;
pub mod synth;

mod math;

pub use error::{Error, Result};
pub use scan::{Dataset, PointCloud3D, ScanGrid};
