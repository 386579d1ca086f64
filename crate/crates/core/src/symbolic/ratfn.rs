use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::gcd::gcd;
use super::poly::Polynomial;
use super::sym::{Sym, SymbolNames};
use crate::error::{Error, Result};

/// Quotient of two polynomials, kept normalized by integer content and sign only:
/// the numerator and denominator have jointly coprime integer coefficients and the
/// denominator's leading coefficient is positive. Common polynomial factors are not
/// cancelled, so equality is decided by cross-multiplication.
#[derive(Clone)]
pub struct RationalFn {
    num: Polynomial,
    den: Polynomial,
}

impl RationalFn {
    /// Builds `num / den`. Panics if `den` is the zero polynomial; use
    /// [`RationalFn::checked_new`] for untrusted input.
    pub fn new(num: Polynomial, den: Polynomial) -> Self {
        Self::checked_new(num, den).expect("zero denominator")
    }

    pub fn checked_new(num: Polynomial, den: Polynomial) -> Option<Self> {
        if den.is_zero() {
            return None;
        }
        Some(normalize(num, den))
    }

    pub fn zero() -> Self {
        RationalFn {
            num: Polynomial::zero(),
            den: Polynomial::one(),
        }
    }

    pub fn one() -> Self {
        Self::from_poly(Polynomial::one())
    }

    pub fn from_poly(p: Polynomial) -> Self {
        normalize(p, Polynomial::one())
    }

    pub fn int(c: i64) -> Self {
        Self::from_poly(Polynomial::int(c))
    }

    pub fn constant(c: BigRational) -> Self {
        Self::from_poly(Polynomial::constant(c))
    }

    pub fn var(s: Sym) -> Self {
        Self::from_poly(Polynomial::var(s))
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    /// True iff the numerator is the zero polynomial. Exact; no sampling.
    pub fn is_identically_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_constant(&self) -> bool {
        self.num.is_constant() && self.den.is_constant()
    }

    pub fn constant_value(&self) -> Option<BigRational> {
        if self.num.is_zero() {
            return Some(BigRational::zero());
        }
        Some(self.num.constant_value()? / self.den.constant_value()?)
    }

    /// The expression as a polynomial, when the denominator is a constant.
    pub fn as_polynomial(&self) -> Option<Polynomial> {
        let d = self.den.constant_value()?;
        Some(self.num.scale(&d.recip()))
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_constant()
    }

    pub fn symbols(&self) -> std::collections::BTreeSet<Sym> {
        let mut s = self.num.symbols();
        s.extend(self.den.symbols());
        s
    }

    pub fn num_terms(&self) -> usize {
        self.num.num_terms() + self.den.num_terms()
    }

    pub fn recip(&self) -> Option<RationalFn> {
        Self::checked_new(self.den.clone(), self.num.clone())
    }

    pub fn checked_div(&self, other: &RationalFn) -> Option<RationalFn> {
        Self::checked_new(&self.num * &other.den, &self.den * &other.num)
    }

    /// Cancels the polynomial GCD of numerator and denominator. Arithmetic never
    /// does this implicitly; callers use it on final results.
    pub fn reduced(&self) -> RationalFn {
        if self.den.is_constant() || self.num.is_zero() {
            return self.clone();
        }
        let g = gcd(&self.num, &self.den);
        if g.is_constant() {
            return self.clone();
        }
        normalize(
            self.num.div_exact(&g).expect("gcd divides"),
            self.den.div_exact(&g).expect("gcd divides"),
        )
    }

    pub fn differentiate(&self, s: Sym) -> RationalFn {
        let dn = self.num.differentiate(s);
        if self.den.is_constant() {
            return normalize(dn, self.den.clone());
        }
        let dd = self.den.differentiate(s);
        normalize(
            &(&dn * &self.den) - &(&self.num * &dd),
            &self.den * &self.den,
        )
    }

    /// Derivative along a vector field `(symbol, component)`.
    pub fn derive_along(&self, field: &[(Sym, Polynomial)]) -> RationalFn {
        let dn = self.num.derive_along(field);
        if self.den.is_constant() {
            return normalize(dn, self.den.clone());
        }
        let dd = self.den.derive_along(field);
        normalize(
            &(&dn * &self.den) - &(&self.num * &dd),
            &self.den * &self.den,
        )
    }

    /// Composes with a substitution map; unmapped symbols stay.
    pub fn substitute(&self, map: &BTreeMap<Sym, RationalFn>) -> Result<RationalFn> {
        let n = substitute(&self.num, map)?;
        let d = substitute(&self.den, map)?;
        n.checked_div(&d).ok_or(Error::SubstitutionSingular)
    }

    pub fn substitute_poly(&self, map: &BTreeMap<Sym, Polynomial>) -> Result<RationalFn> {
        Self::checked_new(self.num.substitute_poly(map), self.den.substitute_poly(map))
            .ok_or(Error::SubstitutionSingular)
    }

    /// Exact evaluation; a vanishing denominator is an evaluation singularity.
    pub fn evaluate(&self, point: &BTreeMap<Sym, BigRational>) -> Result<BigRational> {
        let d = self.den.evaluate(point)?;
        if d.is_zero() {
            return Err(Error::EvaluationSingular);
        }
        Ok(self.num.evaluate(point)? / d)
    }

    pub fn fmt_with(&self, names: &SymbolNames) -> String {
        if let Some(p) = self.as_polynomial() {
            return p.fmt_with(names);
        }
        let num = self.num.fmt_with(names);
        let num = if self.num.num_terms() > 1 {
            format!("({num})")
        } else {
            num
        };
        let den = self.den.fmt_with(names);
        let bare = self.den.num_terms() == 1 && !den.contains(['*', '/']);
        let den = if bare { den } else { format!("({den})") };
        format!("{num}/{den}")
    }
}

fn normalize(num: Polynomial, den: Polynomial) -> RationalFn {
    debug_assert!(!den.is_zero());
    if num.is_zero() {
        return RationalFn {
            num,
            den: Polynomial::one(),
        };
    }
    // Joint primitive part: scale so all coefficients are coprime integers and the
    // denominator leads positively.
    let (cn, pn) = num.primitive();
    let (cd, pd) = den.primitive();
    let ratio = cn / cd;
    let numer = BigRational::from_integer(ratio.numer().clone());
    let denom = BigRational::from_integer(ratio.denom().clone());
    RationalFn {
        num: pn.scale(&numer),
        den: pd.scale(&denom),
    }
}

/// Substitutes rational functions for symbols of a polynomial, combining all terms
/// over the common denominator `prod d_s^{deg_s p}`.
pub fn substitute(p: &Polynomial, map: &BTreeMap<Sym, RationalFn>) -> Result<RationalFn> {
    let mut max_exp: BTreeMap<Sym, u32> = BTreeMap::new();
    for (m, _) in p.terms() {
        for &(s, e) in m.powers() {
            if map.contains_key(&s) {
                let slot = max_exp.entry(s).or_insert(0);
                *slot = (*slot).max(e);
            }
        }
    }
    let mut pow_cache: BTreeMap<(Sym, u32, bool), Polynomial> = BTreeMap::new();
    let mut power = |s: Sym, e: u32, numerator: bool| -> Polynomial {
        pow_cache
            .entry((s, e, numerator))
            .or_insert_with(|| {
                let r = &map[&s];
                if numerator {
                    r.num.pow(e)
                } else {
                    r.den.pow(e)
                }
            })
            .clone()
    };
    let mut num = Polynomial::zero();
    for (m, c) in p.terms() {
        let mut acc = Polynomial::constant(c.clone());
        let mut keep = Vec::new();
        for &(s, e) in m.powers() {
            if map.contains_key(&s) {
                acc = &acc * &power(s, e, true);
            } else {
                keep.push((s, e));
            }
        }
        for (&s, &emax) in &max_exp {
            let e = m.exponent(s);
            if emax > e {
                acc = &acc * &power(s, emax - e, false);
            }
        }
        if !keep.is_empty() {
            acc = acc.mul_monomial(&super::poly::Monomial::from_powers(keep));
        }
        num = &num + &acc;
    }
    let mut den = Polynomial::one();
    for (&s, &emax) in &max_exp {
        den = &den * &power(s, emax, false);
    }
    RationalFn::checked_new(num, den).ok_or(Error::SubstitutionSingular)
}

impl PartialEq for RationalFn {
    fn eq(&self, other: &Self) -> bool {
        if self.den == other.den {
            return self.num == other.num;
        }
        &self.num * &other.den == &other.num * &self.den
    }
}

impl Eq for RationalFn {}

impl fmt::Display for RationalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fmt_with(&SymbolNames::default()))
    }
}

impl fmt::Debug for RationalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RationalFn({self})")
    }
}

impl From<Polynomial> for RationalFn {
    fn from(p: Polynomial) -> Self {
        RationalFn::from_poly(p)
    }
}

impl Add<&RationalFn> for &RationalFn {
    type Output = RationalFn;
    fn add(self, rhs: &RationalFn) -> RationalFn {
        if self.den == rhs.den {
            return normalize(&self.num + &rhs.num, self.den.clone());
        }
        normalize(
            &(&self.num * &rhs.den) + &(&rhs.num * &self.den),
            &self.den * &rhs.den,
        )
    }
}

impl Sub<&RationalFn> for &RationalFn {
    type Output = RationalFn;
    fn sub(self, rhs: &RationalFn) -> RationalFn {
        self + &(-rhs)
    }
}

impl Mul<&RationalFn> for &RationalFn {
    type Output = RationalFn;
    fn mul(self, rhs: &RationalFn) -> RationalFn {
        if self.num.is_zero() || rhs.num.is_zero() {
            return RationalFn::zero();
        }
        normalize(&self.num * &rhs.num, &self.den * &rhs.den)
    }
}

impl Div<&RationalFn> for &RationalFn {
    type Output = RationalFn;
    /// Panics on division by the zero function.
    fn div(self, rhs: &RationalFn) -> RationalFn {
        self.checked_div(rhs).expect("division by zero rational function")
    }
}

impl Neg for &RationalFn {
    type Output = RationalFn;
    fn neg(self) -> RationalFn {
        RationalFn {
            num: -&self.num,
            den: self.den.clone(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr<RationalFn> for RationalFn {
            type Output = RationalFn;
            fn $f(self, rhs: RationalFn) -> RationalFn {
                (&self).$f(&rhs)
            }
        }
        impl $tr<&RationalFn> for RationalFn {
            type Output = RationalFn;
            fn $f(self, rhs: &RationalFn) -> RationalFn {
                (&self).$f(rhs)
            }
        }
        impl $tr<RationalFn> for &RationalFn {
            type Output = RationalFn;
            fn $f(self, rhs: RationalFn) -> RationalFn {
                self.$f(&rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for RationalFn {
    type Output = RationalFn;
    fn neg(self) -> RationalFn {
        -&self
    }
}

impl Zero for RationalFn {
    fn zero() -> Self {
        RationalFn::zero()
    }
    fn is_zero(&self) -> bool {
        self.is_identically_zero()
    }
}

impl One for RationalFn {
    fn one() -> Self {
        RationalFn::one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::poly::rat;

    fn x(i: usize) -> RationalFn {
        RationalFn::var(Sym::state(i))
    }

    #[test]
    fn cross_multiplied_cancellation() {
        let a = &x(0) / &x(1);
        let b = &(&x(0) * &x(2)) / &(&x(1) * &x(2));
        assert!((&a - &b).is_identically_zero());
        assert_eq!(a, b);
    }

    #[test]
    fn normalization_content_and_sign() {
        let r = RationalFn::new(
            Polynomial::var(Sym::state(0)).scale(&rat(2, 3)),
            Polynomial::var(Sym::state(1)).scale(&rat(-4, 9)),
        );
        assert_eq!(r.num().to_string(), "-3*x1");
        assert_eq!(r.den().to_string(), "2*x2");
        assert_eq!(r.to_string(), "-3*x1/(2*x2)");
    }

    #[test]
    fn substitution_into_output_derivative() {
        // x3 + x4*u1 with u1 -> y1'
        let p = &Polynomial::var(Sym::state(2))
            + &(&Polynomial::var(Sym::state(3)) * &Polynomial::var(Sym::input(0, 0)));
        let mut map = BTreeMap::new();
        map.insert(Sym::input(0, 0), RationalFn::var(Sym::output(1, 0)));
        let r = substitute(&p, &map).unwrap();
        assert_eq!(r.to_string(), "x4*y1' + x3");
    }

    #[test]
    fn singular_substitution_is_an_error() {
        let r = &RationalFn::one() / &x(0);
        let mut map = BTreeMap::new();
        map.insert(Sym::state(0), RationalFn::zero());
        assert_eq!(r.substitute(&map), Err(Error::SubstitutionSingular));
    }

    #[test]
    fn evaluate_singularity() {
        let r = &x(0) / &x(1);
        let mut pt = BTreeMap::new();
        pt.insert(Sym::state(0), rat(1, 1));
        pt.insert(Sym::state(1), rat(0, 1));
        assert_eq!(r.evaluate(&pt), Err(Error::EvaluationSingular));
        pt.insert(Sym::state(1), rat(2, 1));
        assert_eq!(r.evaluate(&pt).unwrap(), rat(1, 2));
    }

    #[test]
    fn reduced_cancels_common_factor() {
        let f = &x(0) + &RationalFn::int(1);
        let r = &(&f * &x(1)) / &(&f * &x(2));
        let red = r.reduced();
        assert_eq!(red.to_string(), "x2/x3");
        assert_eq!(red, r);
    }

    #[test]
    fn quotient_rule() {
        let r = &x(0) / &x(1);
        let d = r.differentiate(Sym::state(1));
        assert_eq!(d, &(-&x(0)) / &(&x(1) * &x(1)));
    }
}
