//! Exact computer algebra: sparse polynomials over the rationals, rational
//! functions, and matrices over the rational-function field.

mod eval;
mod gcd;
mod matrix;
mod poly;
mod ratfn;
mod sym;

pub use eval::{CompiledPoly, CompiledRational, SlotMap};
pub use gcd::{associated, content_in, gcd, squarefree_factors};
pub use matrix::{
    adjugate, det, generic_rank, inverse, lie_derivative_matrix, solve_annihilator,
    RankWitness, SymMatrix,
};
pub use poly::{fmt_rational, rat, Monomial, Polynomial};
pub use ratfn::{substitute, RationalFn};
pub use sym::{is_reserved_name, resolve_reserved, Sym, SymbolNames};

use crate::error::{Error, Result};

/// Environment variable overriding the default expansion limit.
pub const MAX_TERMS_ENV: &str = "OISTAB_MAX_TERMS";

/// Upper bound on the number of terms any intermediate expression may carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpansionGuard {
    pub max_terms: usize,
}

impl Default for ExpansionGuard {
    fn default() -> Self {
        ExpansionGuard { max_terms: 100_000 }
    }
}

impl ExpansionGuard {
    /// Default guard, overridden by `OISTAB_MAX_TERMS` when set to a positive
    /// integer.
    pub fn from_env() -> Self {
        std::env::var(MAX_TERMS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&v| v > 0)
            .map(|max_terms| ExpansionGuard { max_terms })
            .unwrap_or_default()
    }

    pub fn check_terms(&self, terms: usize) -> Result<()> {
        if terms > self.max_terms {
            Err(Error::ExpansionLimit {
                terms,
                limit: self.max_terms,
            })
        } else {
            Ok(())
        }
    }

    pub fn check_poly(&self, p: &Polynomial) -> Result<()> {
        self.check_terms(p.num_terms())
    }

    pub fn check_ratfn(&self, r: &RationalFn) -> Result<()> {
        self.check_terms(r.num_terms())
    }

    pub fn check_matrix(&self, m: &SymMatrix) -> Result<()> {
        m.entries().iter().try_for_each(|e| self.check_ratfn(e))
    }
}
