//! Multivariate polynomial GCD over the rationals (recursive primitive remainder
//! sequences) and squarefree decomposition by derivative (Yun).

use super::poly::{Monomial, Polynomial};
use super::sym::Sym;

fn normalized(p: &Polynomial) -> Polynomial {
    p.primitive().1
}

fn main_var(a: &Polynomial, b: &Polynomial) -> Option<Sym> {
    a.symbols().into_iter().chain(b.symbols()).min()
}

/// Greatest common divisor, normalized to coprime integer coefficients and a
/// positive leading coefficient. `gcd(0, 0) = 0`.
pub fn gcd(a: &Polynomial, b: &Polynomial) -> Polynomial {
    if a.is_zero() {
        return normalized(b);
    }
    if b.is_zero() {
        return normalized(a);
    }
    if a.is_constant() || b.is_constant() {
        return Polynomial::one();
    }
    let v = main_var(a, b).expect("nonconstant operands");
    match (a.contains(v), b.contains(v)) {
        (false, _) => gcd(a, &content_in(b, v)),
        (_, false) => gcd(&content_in(a, v), b),
        (true, true) => {
            let ca = content_in(a, v);
            let cb = content_in(b, v);
            let pa = a.div_exact(&ca).expect("content divides");
            let pb = b.div_exact(&cb).expect("content divides");
            let c = gcd(&ca, &cb);
            let g = primitive_prs(pa, pb, v);
            normalized(&(&c * &g))
        }
    }
}

/// GCD of the coefficients of `p` viewed as a polynomial in `v`.
pub fn content_in(p: &Polynomial, v: Sym) -> Polynomial {
    p.coeffs_in(v)
        .iter()
        .filter(|c| !c.is_zero())
        .fold(Polynomial::zero(), |acc, c| {
            if acc.is_constant() && !acc.is_zero() {
                acc
            } else {
                gcd(&acc, c)
            }
        })
}

fn primitive_part_in(p: &Polynomial, v: Sym) -> Polynomial {
    let c = content_in(p, v);
    normalized(&p.div_exact(&c).expect("content divides"))
}

fn lead_in(p: &Polynomial, v: Sym) -> (u32, Polynomial) {
    let d = p.degree_in(v);
    (d, p.coeffs_in(v).swap_remove(d as usize))
}

/// Pseudo-remainder of `a` by `b` in the variable `v`.
fn prem(a: &Polynomial, b: &Polynomial, v: Sym) -> Polynomial {
    let (db, lb) = lead_in(b, v);
    let mut r = a.clone();
    while !r.is_zero() && r.contains(v) && r.degree_in(v) >= db {
        let (dr, lr) = lead_in(&r, v);
        let shift = Monomial::from_powers(vec![(v, dr - db)]);
        r = &(&lb * &r) - &(&lr * &b.mul_monomial(&shift));
    }
    if db == 0 {
        Polynomial::zero()
    } else {
        r
    }
}

fn primitive_prs(a: Polynomial, b: Polynomial, v: Sym) -> Polynomial {
    let (mut a, mut b) = if a.degree_in(v) >= b.degree_in(v) {
        (a, b)
    } else {
        (b, a)
    };
    loop {
        if b.is_zero() {
            return primitive_part_in(&a, v);
        }
        if b.degree_in(v) == 0 {
            return Polynomial::one();
        }
        let r = prem(&a, &b, v);
        a = b;
        b = if r.is_zero() {
            r
        } else {
            primitive_part_in(&r, v)
        };
    }
}

/// Distinct squarefree factors of `p`, each primitive with positive leading
/// coefficient, sorted. Multiplicities are dropped; constants yield no factor.
pub fn squarefree_factors(p: &Polynomial) -> Vec<Polynomial> {
    let mut out = Vec::new();
    collect_squarefree(p, &mut out);
    out.sort();
    out.dedup();
    out
}

fn collect_squarefree(p: &Polynomial, out: &mut Vec<Polynomial>) {
    if p.is_zero() || p.is_constant() {
        return;
    }
    let v = *p.symbols().iter().next().expect("nonconstant");
    let c = content_in(p, v);
    collect_squarefree(&c, out);
    let pp = normalized(&p.div_exact(&c).expect("content divides"));
    yun(&pp, v, out);
}

fn yun(f: &Polynomial, v: Sym, out: &mut Vec<Polynomial>) {
    let df = f.differentiate(v);
    let a = gcd(f, &df);
    let mut b = f.div_exact(&a).expect("gcd divides");
    let c = df.div_exact(&a).expect("gcd divides");
    let mut d = &c - &b.differentiate(v);
    while b.contains(v) {
        let ai = gcd(&b, &d);
        if !ai.is_constant() {
            out.push(normalized(&ai));
        }
        b = b.div_exact(&ai).expect("gcd divides");
        let c = d.div_exact(&ai).expect("gcd divides");
        d = &c - &b.differentiate(v);
    }
}

/// Whether two nonzero polynomials agree up to a nonzero constant factor.
pub fn associated(a: &Polynomial, b: &Polynomial) -> bool {
    !a.is_zero() && !b.is_zero() && normalized(a) == normalized(b)
}
