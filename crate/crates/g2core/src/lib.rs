//! Numerical engine for closed G2-structures on flat 7-tori.
//!
//! The crate is split along the natural layers of the problem:
//!
//! - [`pform`], [`metric`]: exact pointwise exterior algebra on R^7 and the
//!   metric/star machinery a definite 3-form induces;
//! - [`proj`], [`jmap`], [`variation`]: the irreducible-bundle projections,
//!   the traceless-symmetric isomorphism on 27-dimensional pieces, and the
//!   deformation split of 3-form variations;
//! - [`lattice`]: discretized form fields on a flat periodic 7-torus with a
//!   reduced set of active axes, spectral exterior calculus, quadrature;
//! - [`torsion`]: torsion components, the first-order operators between
//!   irreducible bundles, and calibration of the divergence constant;
//! - [`flow`]: Laplacian flow and its gauge-fixed variant with diagnostics,
//!   diffeomorphism pullback and the uniqueness gauge flow;
//! - [`linlab`]: plane-wave linearization checks: variation formulas and
//!   principal-symbol certificates.
//!
//! Everything is `no_std + alloc`; IO, file formats and the CLI live in the
//! companion binary crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod basis;
pub mod error;
pub mod flow;
pub mod jmap;
pub mod lattice;
pub mod linalg;
pub mod linlab;
pub mod metric;
pub mod pform;
pub mod proj;
pub mod rng;
pub mod torsion;
pub mod variation;

pub use error::G2Error;
pub use flow::{run_flow, FlowConfig, FlowGauge, PARABOLIC_LAMBDA, PARABOLIC_MU};
pub use lattice::{FormField, FrameField, LatticeSpec};
pub use metric::{is_definite, metric_from_sigma, Metric};
pub use pform::{standard_phi, PForm};
pub use proj::{project_2forms, project_3forms, G2Frame};
pub use torsion::{calibrate_divergence_constant, torsion_components, CalibrationReport};
pub use variation::{compose_variation, decompose_variation, g2_exp, JoyceTriple};
