//! System definitions, validation, Lie derivatives and the output-derivative chain.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::symbolic::{ExpansionGuard, Polynomial, RationalFn, Sym, SymMatrix, SymbolNames};

/// `x' = f(x) + sum_i g_i(x) u_i`, `y = h(x)`, with polynomial data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineSystem {
    pub name: Option<String>,
    pub names: SymbolNames,
    pub f: Vec<Polynomial>,
    /// Input columns `g_1..g_m`, each with `n` entries.
    pub g: Vec<Vec<Polynomial>>,
    pub h: Vec<Polynomial>,
}

/// `x' = f(x, u)`, `y = h(x)`, where `f` may use the `u_0` symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneralSystem {
    pub names: SymbolNames,
    pub n: usize,
    pub m: usize,
    pub f: Vec<Polynomial>,
    pub h: Vec<Polynomial>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn into_result(self) -> Result<Vec<String>> {
        if self.errors.is_empty() {
            Ok(self.warnings)
        } else {
            Err(Error::Validation(self.errors.join("; ")))
        }
    }
}

/// Pairs a state vector field with the state symbols, in the form expected by
/// `derive_along`.
pub fn state_field(v: &[Polynomial]) -> Vec<(Sym, Polynomial)> {
    v.iter()
        .enumerate()
        .map(|(i, p)| (Sym::state(i), p.clone()))
        .collect()
}

fn check_symbols(
    what: &str,
    p: &Polynomial,
    allowed: &dyn Fn(Sym) -> bool,
    names: &SymbolNames,
    errors: &mut Vec<String>,
) {
    for s in p.symbols() {
        if !allowed(s) {
            errors.push(format!("{what} uses stray symbol {}", names.name(s)));
        }
    }
}

impl AffineSystem {
    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn p(&self) -> usize {
        self.h.len()
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "system".to_string())
    }

    /// Entry `G[row][col]`.
    pub fn g_entry(&self, row: usize, col: usize) -> &Polynomial {
        &self.g[col][row]
    }

    pub fn drift_field(&self) -> Vec<(Sym, Polynomial)> {
        state_field(&self.f)
    }

    pub fn input_field(&self, i: usize) -> Vec<(Sym, Polynomial)> {
        state_field(&self.g[i])
    }

    /// Standing-assumption checks: dimensions, `m <= p`, `f(0) = 0`, state-only
    /// data; `h(0) != 0` is only a warning.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let (n, m, p) = (self.n(), self.m(), self.p());
        if n == 0 {
            r.errors.push("system has no states".into());
        }
        if m == 0 {
            r.errors.push("system has no inputs".into());
        }
        if p == 0 {
            r.errors.push("system has no outputs".into());
        }
        if m > p {
            r.errors
                .push(format!("more inputs than outputs (m = {m} > p = {p})"));
        }
        if self.names.states().len() != n {
            r.errors.push(format!(
                "{} state names for {n} states",
                self.names.states().len()
            ));
        }
        for (i, col) in self.g.iter().enumerate() {
            if col.len() != n {
                r.errors.push(format!(
                    "g{} has {} entries, expected {n}",
                    i + 1,
                    col.len()
                ));
            }
        }
        let is_state = |s: Sym| matches!(s, Sym::State(i) if (i as usize) < n);
        for (i, fi) in self.f.iter().enumerate() {
            check_symbols(&format!("f{}", i + 1), fi, &is_state, &self.names, &mut r.errors);
            if !fi.constant_term().eq(&num_traits::Zero::zero()) {
                r.errors.push(format!("f(0) != 0 (component {})", i + 1));
            }
        }
        for (j, col) in self.g.iter().enumerate() {
            for (i, gij) in col.iter().enumerate() {
                check_symbols(
                    &format!("g{}[{}]", j + 1, i + 1),
                    gij,
                    &is_state,
                    &self.names,
                    &mut r.errors,
                );
            }
        }
        for (i, hi) in self.h.iter().enumerate() {
            check_symbols(&format!("h{}", i + 1), hi, &is_state, &self.names, &mut r.errors);
            if !hi.constant_term().eq(&num_traits::Zero::zero()) {
                r.warnings.push(format!("h(0) != 0 (component {})", i + 1));
            }
        }
        r
    }

    /// `f(x) + G(x) u_0` as a general system.
    pub fn lift(&self) -> GeneralSystem {
        let f = (0..self.n())
            .map(|i| {
                let mut fi = self.f[i].clone();
                for (j, col) in self.g.iter().enumerate() {
                    fi = &fi + &(&col[i] * &Polynomial::var(Sym::input(0, j)));
                }
                fi
            })
            .collect();
        GeneralSystem {
            names: self.names.clone(),
            n: self.n(),
            m: self.m(),
            f,
            h: self.h.clone(),
        }
    }

    /// `L_v R = sum_i dR/dx_i v_i` for a scalar.
    pub fn lie_derivative(&self, r: &Polynomial, v: &[Polynomial]) -> Result<Polynomial> {
        self.check_field(v)?;
        Ok(r.derive_along(&state_field(v)))
    }

    /// Componentwise Lie derivative of a matrix.
    pub fn lie_derivative_matrix(&self, r: &SymMatrix, v: &[Polynomial]) -> Result<SymMatrix> {
        self.check_field(v)?;
        let field = state_field(v);
        Ok(r.map(|e: &RationalFn| e.derive_along(&field)))
    }

    fn check_field(&self, v: &[Polynomial]) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::Dimension(format!(
                "vector field has {} components, system has {} states",
                v.len(),
                self.n()
            )));
        }
        Ok(())
    }
}

impl GeneralSystem {
    pub fn p(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        if self.f.len() != self.n {
            r.errors.push(format!(
                "f has {} components, expected {}",
                self.f.len(),
                self.n
            ));
        }
        let n = self.n;
        let m = self.m;
        let in_f = |s: Sym| match s {
            Sym::State(i) => (i as usize) < n,
            Sym::Input { order: 0, channel } => (channel as usize) < m,
            _ => false,
        };
        let in_h = |s: Sym| matches!(s, Sym::State(i) if (i as usize) < n);
        for (i, fi) in self.f.iter().enumerate() {
            check_symbols(&format!("f{}", i + 1), fi, &in_f, &self.names, &mut r.errors);
        }
        for (i, hi) in self.h.iter().enumerate() {
            check_symbols(&format!("h{}", i + 1), hi, &in_h, &self.names, &mut r.errors);
        }
        r
    }
}

/// The maps `H_0 .. H_N`: `H_0 = h` and
/// `H_{i+1} = dH_i/dx f(x, u_0) + sum_{j<i} dH_i/du_j u_{j+1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivativeChain {
    m: usize,
    drift: Vec<(Sym, Polynomial)>,
    levels: Vec<Vec<Polynomial>>,
}

impl DerivativeChain {
    pub fn new(sys: &GeneralSystem, depth: usize, guard: &ExpansionGuard) -> Result<Self> {
        let mut chain = DerivativeChain {
            m: sys.m,
            drift: state_field(&sys.f),
            levels: vec![sys.h.clone()],
        };
        chain.extend_to(depth, guard)?;
        Ok(chain)
    }

    pub fn for_affine(sys: &AffineSystem, depth: usize, guard: &ExpansionGuard) -> Result<Self> {
        Self::new(&sys.lift(), depth, guard)
    }

    /// Computes further levels, reusing the ones already built.
    pub fn extend_to(&mut self, depth: usize, guard: &ExpansionGuard) -> Result<()> {
        while self.levels.len() <= depth {
            let i = self.levels.len() - 1;
            let mut field = self.drift.clone();
            for j in 0..i {
                for c in 0..self.m {
                    field.push((Sym::input(j, c), Polynomial::var(Sym::input(j + 1, c))));
                }
            }
            let next = self.levels[i]
                .iter()
                .map(|hi| {
                    let d = hi.derive_along(&field);
                    guard.check_poly(&d)?;
                    Ok(d)
                })
                .collect::<Result<Vec<_>>>()?;
            self.levels.push(next);
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> &[Polynomial] {
        &self.levels[i]
    }

    pub fn levels(&self) -> &[Vec<Polynomial>] {
        &self.levels
    }

    /// `y_c^(d) -> H_d[c]` for all `d <= k`.
    pub fn output_substitution(&self, k: usize) -> BTreeMap<Sym, Polynomial> {
        let mut map = BTreeMap::new();
        for (d, level) in self.levels.iter().enumerate().take(k + 1) {
            for (c, hc) in level.iter().enumerate() {
                map.insert(Sym::output(d, c), hc.clone());
            }
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_system;

    const EXAMPLE1: &str = include_str!("../../../corpus/example1.sys");
    const EXAMPLE2: &str = include_str!("../../../corpus/example2.sys");

    #[test]
    fn example_one_is_valid() {
        let sys = parse_system(EXAMPLE1).unwrap();
        let r = sys.validate();
        assert!(r.errors.is_empty(), "{:?}", r.errors);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn shifted_output_is_a_warning() {
        let mut sys = parse_system(EXAMPLE1).unwrap();
        sys.h[1] = &sys.h[1] + &Polynomial::one();
        let r = sys.validate();
        assert!(r.is_ok());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn shifted_drift_is_an_error() {
        let mut sys = parse_system(EXAMPLE1).unwrap();
        sys.f[3] = &sys.f[3] + &Polynomial::one();
        let r = sys.validate();
        assert!(!r.is_ok());
        assert!(r.errors[0].contains("f(0)"));
    }

    #[test]
    fn more_inputs_than_outputs_rejected() {
        let mut sys = parse_system(EXAMPLE1).unwrap();
        sys.h.pop();
        assert!(sys.validate().errors.iter().any(|e| e.contains("more inputs")));
    }

    #[test]
    fn lie_derivatives_of_example_one() {
        let sys = parse_system(EXAMPLE1).unwrap();
        let x = |i| Polynomial::var(Sym::state(i));
        assert!(sys.lie_derivative(&x(2), &sys.f).unwrap().is_zero());
        assert_eq!(
            sys.lie_derivative(&x(3), &sys.f).unwrap().to_string(),
            "x1^2 - x4"
        );
        assert!(sys
            .lie_derivative(&Polynomial::int(7), &sys.g[0])
            .unwrap()
            .is_zero());
        assert!(sys.lie_derivative(&x(0), &sys.f[..2]).is_err());
    }

    #[test]
    fn first_output_derivatives() {
        let guard = ExpansionGuard::default();
        let sys = parse_system(EXAMPLE1).unwrap();
        let chain = DerivativeChain::for_affine(&sys, 2, &guard).unwrap();
        assert_eq!(chain.level(0), &sys.h[..]);
        let h1: Vec<String> = chain.level(1).iter().map(|p| p.to_string()).collect();
        assert_eq!(h1, vec!["u1", "x4*u1 + x3"]);

        let sys2 = parse_system(EXAMPLE2).unwrap();
        let chain2 = DerivativeChain::for_affine(&sys2, 1, &guard).unwrap();
        let h1: Vec<String> = chain2.level(1).iter().map(|p| p.to_string()).collect();
        assert_eq!(h1, vec!["u1", "x2*u2 + x3"]);
    }

    #[test]
    fn extend_reuses_levels() {
        let guard = ExpansionGuard::default();
        let sys = parse_system(EXAMPLE1).unwrap();
        let mut a = DerivativeChain::for_affine(&sys, 1, &guard).unwrap();
        a.extend_to(3, &guard).unwrap();
        let b = DerivativeChain::for_affine(&sys, 3, &guard).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn guard_trips_on_growth() {
        let sys = parse_system(EXAMPLE1).unwrap();
        let guard = ExpansionGuard { max_terms: 2 };
        assert!(matches!(
            DerivativeChain::for_affine(&sys, 3, &guard),
            Err(Error::ExpansionLimit { .. })
        ));
    }
}
