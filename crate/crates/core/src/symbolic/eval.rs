//! Floating-point evaluation of exact expressions on hot paths (integration,
//! sampling). Symbols are mapped to slots of a flat value array once, up front.

use std::collections::BTreeMap;

use num_traits::ToPrimitive;

use super::poly::Polynomial;
use super::ratfn::RationalFn;
use super::sym::Sym;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct SlotMap {
    index: BTreeMap<Sym, usize>,
}

impl SlotMap {
    pub fn new<I: IntoIterator<Item = Sym>>(syms: I) -> Self {
        let mut index = BTreeMap::new();
        for s in syms {
            let next = index.len();
            index.entry(s).or_insert(next);
        }
        SlotMap { index }
    }

    pub fn slot(&self, s: Sym) -> Option<usize> {
        self.index.get(&s).copied()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub fn new(p: &Polynomial, slots: &SlotMap) -> Result<Self> {
        let terms = p
            .terms()
            .map(|(m, c)| {
                let powers = m
                    .powers()
                    .iter()
                    .map(|&(s, e)| {
                        slots
                            .slot(s)
                            .map(|i| (i, e as i32))
                            .ok_or(Error::UnboundSymbol(s))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((c.to_f64().unwrap_or(f64::NAN), powers))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledPoly { terms })
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, powers)| {
                powers
                    .iter()
                    .fold(*c, |acc, &(i, e)| acc * values[i].powi(e))
            })
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct CompiledRational {
    num: CompiledPoly,
    den: CompiledPoly,
}

impl CompiledRational {
    pub fn new(r: &RationalFn, slots: &SlotMap) -> Result<Self> {
        Ok(CompiledRational {
            num: CompiledPoly::new(r.num(), slots)?,
            den: CompiledPoly::new(r.den(), slots)?,
        })
    }

    /// Returns `(value, denominator)` so callers can apply their own singularity
    /// threshold.
    pub fn eval_parts(&self, values: &[f64]) -> (f64, f64) {
        let d = self.den.eval(values);
        (self.num.eval(values) / d, d)
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.eval_parts(values).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::poly::rat;

    #[test]
    fn compiled_matches_exact() {
        let x = Polynomial::var(Sym::state(0));
        let y = Polynomial::var(Sym::output(1, 0));
        let p = &(&x.pow(3) * &y) - &x.scale(&rat(1, 4));
        let slots = SlotMap::new([Sym::state(0), Sym::output(1, 0)]);
        let cp = CompiledPoly::new(&p, &slots).unwrap();
        let v = cp.eval(&[2.0, -1.5]);
        let mut pt = BTreeMap::new();
        pt.insert(Sym::state(0), rat(2, 1));
        pt.insert(Sym::output(1, 0), rat(-3, 2));
        assert_eq!(v, p.evaluate(&pt).unwrap().to_f64().unwrap());
        assert!(CompiledPoly::new(&p, &SlotMap::new([Sym::state(0)])).is_err());
    }
}
