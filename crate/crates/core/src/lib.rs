//! Blaschke metrics on the genus-2 octagon surface: the Fuchsian group and its
//! fundamental domain, automorphic cubic differentials, a finite-element model
//! of the surface, Wang's equation along rays `tq`, the covariance metric on the
//! Blaschke locus and the geodesic flow used to cross-check it.

pub mod cubicdiff;
pub mod domain;
pub mod error;
pub mod flow;
pub mod fuchsian;
pub mod gamma;
pub mod io;
pub mod linalg;
pub mod spectral_covariance;
pub mod wang;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
