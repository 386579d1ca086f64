use thiserror::Error;

use crate::parse::ParseError;
use crate::symbolic::Sym;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("symbol {0:?} has no value at the evaluation point")]
    UnboundSymbol(Sym),
    #[error("denominator vanishes at the evaluation point")]
    EvaluationSingular,
    #[error("substitution makes the denominator identically zero")]
    SubstitutionSingular,
    #[error("expression has {terms} terms, above the expansion limit of {limit}")]
    ExpansionLimit { terms: usize, limit: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix does not have full row rank over the function field")]
    NotFullRowRank,
    #[error("no annihilator exists: the remaining rows are not in the row space of the pivot block")]
    AnnihilatorInfeasible,
    #[error("no left inverse: the structure algorithm did not terminate")]
    InversionUnavailable,
    #[error("operation requires an affine-mode inverse")]
    AffineInverseRequired,
    #[error("system failed validation: {0}")]
    Validation(String),
    #[error("bound estimate unreliable: {skipped} of {total} samples were singular")]
    UnreliableEstimate { skipped: usize, total: usize },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("internal invariant broken: {0}")]
    Invariant(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}
