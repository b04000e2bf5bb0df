use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("eigenvalue collision: sI - A is singular at s = {s}")]
    EigenvalueCollision { s: Complex64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("resonant Sylvester equation: spectra overlap (min gap {gap:.3e})")]
    ResonantSylvester { gap: f64 },

    #[error("capacity exceeded: {what} has size {size} (limit {limit})")]
    Capacity {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("plant not stable: spectral abscissa {abscissa:.6e}")]
    PlantNotStable { abscissa: f64 },

    #[error("matrix is not Hurwitz: spectral abscissa {abscissa:.6e}")]
    NotHurwitz { abscissa: f64 },

    #[error("divergence: non-finite value at t = {time}")]
    Divergence { time: f64 },

    #[error("non-resonance violated: singular values {singular_values:?}")]
    NonResonance { singular_values: Vec<f64> },

    #[error("pair is not controllable: controllability rank {rank} < {expected}")]
    Uncontrollable { rank: usize, expected: usize },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("stage {stage} destabilized the loop (spectral abscissa {abscissa:.6e})")]
    StageDestabilized { stage: usize, abscissa: f64 },

    #[error("internal consistency: imaginary residue {residue:.3e} in real-valued result")]
    ImaginaryResidue { residue: f64 },

    #[error("closed loop unstable at eps = {eps}: spectral abscissa {abscissa:.6e}")]
    UnstableAtEps { eps: f64, abscissa: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Validation(_) | Error::Dimension(_) => 2,
            Error::NonResonance { .. } | Error::RankDeficient(_) => 3,
            Error::UnstableAtEps { .. }
            | Error::StageDestabilized { .. }
            | Error::Divergence { .. }
            | Error::NotHurwitz { .. }
            | Error::PlantNotStable { .. } => 4,
            _ => 1,
        }
    }
}
