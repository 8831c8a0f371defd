use core::fmt;

/// Errors raised by the core numerical routines.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    DimensionMismatch { expected: usize, found: usize },
    IndexOutOfRange { index: usize, n: usize },
    NonFiniteWeight { u: usize, v: usize },
    /// The same unordered pair was given twice (with different weights, or
    /// twice in the same orientation).
    AsymmetricDuplicate { u: usize, v: usize },
    NegativeWeight { u: usize, v: usize },
    /// Node has no two-hop neighbour, so degree normalisation is undefined.
    IsolatedNode { node: usize },
    NonSymmetricInput,
    InvalidParameter(&'static str),
    /// An iterate became NaN or infinite.
    NonFiniteIterate,
    IndefiniteInput { min_eigenvalue: f64 },
    ZeroMatrix,
    LengthMismatch { left: usize, right: usize },
    DegenerateInput { distinct: usize, k: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::IndexOutOfRange { index, n } => {
                write!(f, "node index {index} out of range for {n} nodes")
            }
            Error::NonFiniteWeight { u, v } => write!(f, "non-finite weight on edge ({u}, {v})"),
            Error::AsymmetricDuplicate { u, v } => {
                write!(f, "duplicate or asymmetric entry for pair ({u}, {v})")
            }
            Error::NegativeWeight { u, v } => write!(f, "negative weight on edge ({u}, {v})"),
            Error::IsolatedNode { node } => {
                write!(f, "node {node} has no two-hop neighbour (zero row sum of A²)")
            }
            Error::NonSymmetricInput => f.write_str("input matrix is not symmetric"),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::NonFiniteIterate => f.write_str("iterate became non-finite"),
            Error::IndefiniteInput { min_eigenvalue } => {
                write!(f, "matrix is indefinite (smallest eigenvalue {min_eigenvalue:e})")
            }
            Error::ZeroMatrix => f.write_str("matrix has no positive eigenvalue"),
            Error::LengthMismatch { left, right } => {
                write!(f, "label vectors differ in length ({left} vs {right})")
            }
            Error::DegenerateInput { distinct, k } => {
                write!(f, "only {distinct} distinct points for k = {k}")
            }
        }
    }
}

impl core::error::Error for Error {}

