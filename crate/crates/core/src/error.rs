use thiserror::Error;

/// Failures while reading or writing the binary tensor container and its
/// sidecar manifests. Each structural defect gets its own variant so callers
/// can tell a wrong file apart from a damaged one.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}, expected b\"POTT\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported container version {found}, expected {expected}")]
    Version { expected: u32, found: u32 },
    #[error("unexpected record kind {found}, expected {expected}")]
    RecordKind { expected: u32, found: u32 },
    #[error("truncated record: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Failures of the deterministic PDE solvers and spectral samplers.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("time integration blew up at step {step} (max |u| = {amplitude:.3e})")]
    Blowup { step: usize, amplitude: f64 },
    #[error("conjugate gradient stalled at residual {residual:.3e} after {iters} iterations (target {target:.3e})")]
    CgStall {
        iters: usize,
        residual: f64,
        target: f64,
    },
    #[error("coefficient field must be strictly positive, found min {found:.3e}")]
    NonPositiveCoefficient { found: f64 },
    #[error("eigensolver failed to converge within {iters} iterations")]
    EigStall { iters: usize },
    #[error("covariance eigenvalue {lambda:.3e} below the positive-semidefinite tolerance")]
    IndefiniteKernel { lambda: f64 },
}

/// Anything that can stop an end-to-end experiment run.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Failures of gradient-based optimization. `Diverged` carries the tail of the
/// loss history so the caller can see how the run came apart.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient in parameter {param}")]
    NonFiniteGrad { param: String },
    #[error("training diverged at step {step}: loss {loss:.3e}")]
    Diverged {
        step: usize,
        loss: f64,
        trace: Vec<f64>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}
