use thiserror::Error;

/// Errors raised by the toolkit. Every message names the invariant that failed.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("bipartite dimensions required but missing")]
    MissingDims,

    #[error("invalid bipartite dimensions ({0}, {1}) for a {2}x{2} matrix")]
    InvalidDims(usize, usize, usize),

    #[error("matrix is not self-adjoint: residual {residual:.3e} exceeds tolerance {tol:.1e}")]
    NotSelfAdjoint { residual: f64, tol: f64 },

    #[error("matrix is not positive semidefinite: minimal eigenvalue {min_eig:.3e}")]
    NotPsd { min_eig: f64 },

    #[error("map is not completely positive: minimal Choi eigenvalue {min_eig:.3e}")]
    NotCompletelyPositive { min_eig: f64 },

    #[error("map is not unital: |phi(I) - I| = {residual:.3e}")]
    NotUnital { residual: f64 },

    #[error("algebra does not contain the unit: projection residual {residual:.3e}")]
    UnitNotInAlgebra { residual: f64 },

    #[error("algebra is not abelian: commutator norm {residual:.3e}")]
    NonAbelian { residual: f64 },

    #[error("state is not faithful: minimal density eigenvalue {min_eig:.3e}")]
    NotFaithful { min_eig: f64 },

    #[error("projection e_{index} is not in the centralizer of rho: residual {residual:.3e}")]
    CentralizerViolation { index: usize, residual: f64 },

    #[error("projection e_{index} has weight {weight:.3e} below the floor")]
    ZeroWeight { index: usize, weight: f64 },

    #[error("projections do not form an orthogonal resolution of the identity: residual {residual:.3e}")]
    NotResolution { residual: f64 },

    #[error("unsupported bipartite dimensions ({0}, {1}) for the exact oracle")]
    UnsupportedDims(usize, usize),

    #[error("cone equality needs dim K <= dim H, got dim K = {dim_k} > dim H = {dim_h}")]
    DimensionHypothesis { dim_k: usize, dim_h: usize },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Inconsistency(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
