//! Error type shared across the crate.

use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum G2Error {
    /// Wedge product past top degree.
    DegreeOverflow { left: usize, right: usize },
    /// Interior product of a 0-form.
    InteriorOfScalar,
    /// Mismatched degrees where equal degrees are required.
    DegreeMismatch { left: usize, right: usize },
    /// The 3-form does not induce a Riemannian metric. Carries the
    /// normalized determinant and the smallest eigenvalue of the candidate.
    NotDefinite { det: f64, min_eig: f64 },
    /// A field failed definiteness at a lattice site.
    NotDefiniteAt { site: usize, det: f64, min_eig: f64 },
    /// Input lies outside the required irreducible subspace.
    OutsideSubspace {
        expected: &'static str,
        residual: f64,
    },
    /// Pointwise linear solve inconsistent beyond tolerance, which flags a
    /// discretization failure rather than a modelling choice.
    InconsistentSolve { what: &'static str, residual: f64 },
    /// Exterior derivative of a top-degree field.
    TopDegreeDerivative,
    /// Codifferential of a 0-form field.
    CodifferentialOfScalar,
    /// Lattice description violates an invariant.
    BadLattice(&'static str),
    /// Mixed lattice specs in a binary field operation.
    LatticeMismatch,
    /// Flow configuration rejected before stepping.
    BadConfig(&'static str),
    /// Time step underflowed during a run.
    StepUnderflow { t: f64, dt: f64 },
    /// Calibration spread exceeded tolerance.
    CalibrationSpread { spread: f64 },
    /// A check that requires a torsion-free background was handed one with
    /// torsion (lower-order terms would pollute the identity).
    NotTorsionFree { residual: f64 },
    /// A vanished denominator (e.g. the DeTurck constant).
    ZeroConstant(&'static str),
    /// Semi-Lagrangian displacement too large for trustworthy interpolation.
    DisplacementTooLarge { max: f64, limit: f64 },
    /// Plane-wave probe could not be fit to the requested tolerance.
    ProbeFit { residual: f64 },
}

impl fmt::Display for G2Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            G2Error::DegreeOverflow { left, right } => {
                write!(f, "wedge degree overflow: {left} + {right} > 7")
            }
            G2Error::InteriorOfScalar => write!(f, "interior product of a 0-form"),
            G2Error::DegreeMismatch { left, right } => {
                write!(f, "degree mismatch: {left} vs {right}")
            }
            G2Error::NotDefinite { det, min_eig } => {
                write!(f, "3-form not definite (det {det:e}, min eig {min_eig:e})")
            }
            G2Error::NotDefiniteAt { site, det, min_eig } => write!(
                f,
                "3-form not definite at site {site} (det {det:e}, min eig {min_eig:e})"
            ),
            G2Error::OutsideSubspace { expected, residual } => {
                write!(f, "input outside {expected} (residual {residual:e})")
            }
            G2Error::InconsistentSolve { what, residual } => {
                write!(f, "inconsistent {what} solve (residual {residual:e})")
            }
            G2Error::TopDegreeDerivative => write!(f, "exterior derivative of a 7-form"),
            G2Error::CodifferentialOfScalar => write!(f, "codifferential of a 0-form"),
            G2Error::BadLattice(msg) => write!(f, "bad lattice: {msg}"),
            G2Error::LatticeMismatch => write!(f, "operands live on different lattices"),
            G2Error::BadConfig(msg) => write!(f, "bad flow config: {msg}"),
            G2Error::StepUnderflow { t, dt } => {
                write!(f, "time step underflow at t={t} (dt={dt:e})")
            }
            G2Error::CalibrationSpread { spread } => {
                write!(f, "calibration spread {spread:e} exceeds tolerance")
            }
            G2Error::NotTorsionFree { residual } => {
                write!(f, "background has torsion (residual {residual:e})")
            }
            G2Error::ZeroConstant(name) => write!(f, "constant {name} is zero"),
            G2Error::DisplacementTooLarge { max, limit } => {
                write!(f, "displacement {max} exceeds limit {limit}")
            }
            G2Error::ProbeFit { residual } => {
                write!(f, "plane-wave probe fit residual {residual:e} too large")
            }
        }
    }
}
