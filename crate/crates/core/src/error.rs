use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants fall in two classes: input/validation problems and numerical
/// failures. [`Error::is_numerical`] tells them apart; the CLI maps the two
/// classes onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {field}: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: usize,
        found: usize,
    },

    #[error("species mismatch at atom {index}: expected {expected}, found {found}")]
    SpeciesMismatch {
        index: usize,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {field}")]
    NonFiniteValue { field: String },

    #[error("invalid value for {field}: {reason}")]
    InvalidValue { field: String, reason: String },

    #[error("structure hash mismatch: hessian bound to {expected}, structure is {found}")]
    HashMismatch { expected: String, found: String },

    #[error("eigensolver did not converge for eigenvalue {index} after {iterations} iterations")]
    NonConvergence { index: usize, iterations: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("mode {mode} has imaginary frequency ({omega_mev} meV)")]
    ImaginaryModePresent { mode: usize, omega_mev: f64 },

    #[error("negative frequency {omega_mev} meV at entry {index}")]
    NegativeFrequency { index: usize, omega_mev: f64 },

    #[error("grid too narrow: {0}")]
    GridTooNarrow(String),

    #[error("aliased grid: {0}")]
    AliasedGrid(String),

    #[error("lorentzian damping must be positive, got {0} meV")]
    NonPositiveGamma(f64),

    #[error("{count} modes exceed the enumeration limit of {max}")]
    TooManyModes { count: usize, max: usize },

    #[error("quanta cap {cap} outside the supported range 0..={max}")]
    CapOutOfRange { cap: usize, max: usize },

    #[error("quanta cap too small: residual tail mass {tail:e}")]
    CapTooSmall { tail: f64 },

    #[error("no chemical potential for species {0}")]
    MissingChemicalPotential(String),

    #[error("dielectric constant must exceed 1, got {0}")]
    InvalidDielectric(f64),

    #[error("charge transition level needs two different charges (both {0})")]
    EqualCharges(i32),

    #[error("no charge states for defect {0}")]
    EmptyGroup(String),

    #[error("duplicate entry: {0}")]
    DuplicateEntry(String),

    #[error("analytic correction for {label} q={charge} needs a dielectric constant and supercell volume")]
    UnresolvedCorrection { label: String, charge: i32 },

    #[error("unknown species {0} and no explicit mass given")]
    UnknownSpecies(String),

    #[error("parse error at {locus}: {message}")]
    Parse { locus: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for solver and grid failures, false for bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::ImaginaryModePresent { .. }
                | Error::AliasedGrid(_)
                | Error::CapTooSmall { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(locus: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            locus: locus.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidValue {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_finite(field: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFiniteValue {
            field: format!("{field}[{i}]"),
        }),
        None => Ok(()),
    }
}
