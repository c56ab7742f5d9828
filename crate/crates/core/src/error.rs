use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("operation requires the self-consistent level, got {0}")]
    RequiresSelfConsistent(String),

    #[error(
        "molecule is not charge neutral (sum of nuclear charges {nuclear_total} != electron charge {electron}); \
         the normal-mode fast path only supports neutral molecules"
    )]
    NonNeutral { nuclear_total: f64, electron: f64 },

    #[error(
        "displacement-only coupling is unstable here: gamma^2 = {gamma2} <= 1/2 puts the \
         renormalized photon frequency in the imaginary regime"
    )]
    DisplacementUnstable { gamma2: f64 },

    #[error("trajectory diverged at step {step}: |{coordinate}| = {value:.3e} exceeds bound {bound:.3e}")]
    Diverged {
        step: u64,
        coordinate: String,
        value: f64,
        bound: f64,
    },

    #[error("time series contains non-finite values")]
    NonFiniteSeries,

    #[error("time series too short: {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("no pair of peaks brackets the reference frequency {omega_ref}")]
    NoBracketingPeaks { omega_ref: f64 },

    #[error("dense oracle limited to {max} molecules, got {n}")]
    TooManyMolecules { n: usize, max: usize },

    #[error("electron sub-block is not positive definite; no electronic ground state")]
    IndefiniteElectronBlock,

    #[error(
        "scaling recipe violated: sc(N={n}, lambda_col/sqrt(N)) = {sc_at_n}, sc(1, lambda_col) = {sc_at_1}, \
         pert(1, lambda_col) = {pert_at_1} disagree beyond 1e-12 relative"
    )]
    ScalingRecipeViolation {
        n: usize,
        sc_at_n: f64,
        sc_at_1: f64,
        pert_at_1: f64,
    },

    #[error("finite-difference response inconsistent between step sizes: {coarse} vs {fine}")]
    ResponseInconsistent { coarse: f64, fine: f64 },

    #[error("spectra on mismatched frequency grids cannot be averaged")]
    GridMismatch,

    #[error("fixed-point iteration did not converge within {max_iter} iterations (residual {residual:.3e})")]
    FixedPointDiverged { max_iter: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
