use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice geometry is inconsistent: {0}")]
    Geometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("no degenerate band pair within tolerance {tol:e} (closest adjacent gap {closest_gap:e})")]
    NoDegeneracy { tol: f64, closest_gap: f64 },

    #[error(
        "degenerate pair at bands {lower}/{upper} is not isolated: neighbour gap {neighbour_gap:e} \
         (possible higher multiplicity)",
        lower = .lower + 1,
        upper = .lower + 2
    )]
    NotIsolated { lower: usize, neighbour_gap: f64 },

    #[error("rotation eigenvalues {found:?} on the degenerate subspace are not {{tau, conj(tau)}}")]
    RotationEigenvalueMismatch { found: [(f64, f64); 2] },

    #[error("Dirac velocity pairing vanishes (|c| = {magnitude:e})")]
    DegenerateVelocity { magnitude: f64 },

    #[error("{what}: symmetry structure violated (residual {residual:e} > {tol:e})")]
    StructureViolation {
        what: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("cone fit failed: {0}")]
    FitFailure(String),

    #[error("eigensolver failure on a {size}x{size} matrix: {message}")]
    Solver { size: usize, message: String },

    #[error("row {row}: {source}")]
    Sweep {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("grid is not commensurate with the lattice: {0}")]
    NonCommensurateGrid(String),

    #[error("envelope spectrum too wide: relative energy {fraction:e} outside a quarter of the micro band")]
    Nyquist { fraction: f64 },

    #[error("non-finite value encountered at frame {frame} (t = {time})")]
    NonFinite { frame: usize, time: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("missing corrector profiles")]
    MissingProfiles,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for structured
    /// numerical-contract failures, 4 for solver breakdowns and I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidInput(_) => 2,
            Error::Sweep { source, .. } => source.exit_code(),
            Error::Geometry(_)
            | Error::NoDegeneracy { .. }
            | Error::NotIsolated { .. }
            | Error::RotationEigenvalueMismatch { .. }
            | Error::DegenerateVelocity { .. }
            | Error::StructureViolation { .. }
            | Error::FitFailure(_)
            | Error::NonCommensurateGrid(_)
            | Error::Nyquist { .. }
            | Error::GridMismatch(_)
            | Error::MissingProfiles => 3,
            Error::Solver { .. } | Error::NonFinite { .. } | Error::Io { .. } | Error::Serialize(_) => 4,
        }
    }
}
