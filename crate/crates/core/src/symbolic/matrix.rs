use std::fmt;

use super::gcd::{gcd, squarefree_factors};
use super::poly::Polynomial;
use super::ratfn::RationalFn;
use super::sym::{Sym, SymbolNames};
use crate::error::{Error, Result};

/// Dense matrix over the rational-function field.
#[derive(Clone, PartialEq, Eq)]
pub struct SymMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<RationalFn>,
}

impl SymMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<RationalFn>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(SymMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SymMatrix {
            rows,
            cols,
            entries: vec![RationalFn::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, RationalFn::one());
        }
        m
    }

    /// Panics on ragged input.
    pub fn from_rows(rows: Vec<Vec<RationalFn>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        SymMatrix {
            rows: r,
            cols: c,
            entries: rows.into_iter().flatten().collect(),
        }
    }

    pub fn from_poly_rows(rows: Vec<Vec<Polynomial>>) -> Self {
        Self::from_rows(
            rows.into_iter()
                .map(|r| r.into_iter().map(RationalFn::from_poly).collect())
                .collect(),
        )
    }

    /// Column vector.
    pub fn column(entries: Vec<RationalFn>) -> Self {
        let n = entries.len();
        SymMatrix {
            rows: n,
            cols: 1,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &RationalFn {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: RationalFn) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[RationalFn] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[RationalFn] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(RationalFn::is_identically_zero)
    }

    pub fn num_terms(&self) -> usize {
        self.entries.iter().map(RationalFn::num_terms).sum()
    }

    pub fn map(&self, f: impl Fn(&RationalFn) -> RationalFn) -> SymMatrix {
        SymMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn try_map(&self, f: impl Fn(&RationalFn) -> Result<RationalFn>) -> Result<SymMatrix> {
        Ok(SymMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(f).collect::<Result<_>>()?,
        })
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> SymMatrix {
        let mut entries = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                entries.push(self.get(i, j).clone());
            }
        }
        SymMatrix {
            rows: rows.len(),
            cols: cols.len(),
            entries,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> SymMatrix {
        let cols: Vec<usize> = (0..self.cols).collect();
        self.select(rows, &cols)
    }

    pub fn select_cols(&self, cols: &[usize]) -> SymMatrix {
        let rows: Vec<usize> = (0..self.rows).collect();
        self.select(&rows, cols)
    }

    /// Stacks `self` over `below`.
    pub fn vstack(&self, below: &SymMatrix) -> Result<SymMatrix> {
        if self.rows > 0 && below.rows > 0 && self.cols != below.cols {
            return Err(Error::Dimension(format!(
                "cannot stack {} columns over {}",
                self.cols, below.cols
            )));
        }
        let cols = if self.rows > 0 { self.cols } else { below.cols };
        let mut entries = self.entries.clone();
        entries.extend(below.entries.iter().cloned());
        Ok(SymMatrix {
            rows: self.rows + below.rows,
            cols,
            entries,
        })
    }

    pub fn mul(&self, rhs: &SymMatrix) -> Result<SymMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = SymMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = RationalFn::zero();
                for k in 0..self.cols {
                    let (a, b) = (self.get(i, k), rhs.get(k, j));
                    if a.is_identically_zero() || b.is_identically_zero() {
                        continue;
                    }
                    acc = &acc + &(a * b);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &SymMatrix) -> Result<SymMatrix> {
        if (self.rows, self.cols) != (rhs.rows, rhs.cols) {
            return Err(Error::Dimension("shape mismatch in addition".into()));
        }
        Ok(SymMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn neg(&self) -> SymMatrix {
        self.map(|e| -e)
    }

    pub fn scale(&self, c: &RationalFn) -> SymMatrix {
        self.map(|e| e * c)
    }

    pub fn to_strings(&self, names: &SymbolNames) -> Vec<Vec<String>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|e| e.fmt_with(names)).collect())
            .collect()
    }

    pub fn fmt_with(&self, names: &SymbolNames) -> String {
        let rows: Vec<String> = self
            .to_strings(names)
            .into_iter()
            .map(|r| format!("[{}]", r.join(", ")))
            .collect();
        format!("[{}]", rows.join(", "))
    }

    /// Matrix with polynomial rows and the per-row common denominators that were
    /// cleared: `self[i][j] = out[i][j] / dens[i]`.
    fn cleared_rows(&self) -> (Vec<Vec<Polynomial>>, Vec<Polynomial>) {
        let mut rows = Vec::with_capacity(self.rows);
        let mut dens = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let mut factors: Vec<&Polynomial> = Vec::new();
            for e in self.row(i) {
                if !e.is_identically_zero() && !factors.contains(&e.den()) {
                    factors.push(e.den());
                }
            }
            let d = factors
                .iter()
                .fold(Polynomial::one(), |acc, f| &acc * *f);
            let row = self
                .row(i)
                .iter()
                .map(|e| {
                    if e.is_identically_zero() {
                        Polynomial::zero()
                    } else {
                        e.num() * &d.div_exact(e.den()).expect("denominator divides product")
                    }
                })
                .collect();
            rows.push(row);
            dens.push(d);
        }
        (rows, dens)
    }
}

impl fmt::Display for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fmt_with(&SymbolNames::default()))
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{}x{}({self})", self.rows, self.cols)
    }
}

/// Fraction-free (Bareiss) determinant of a square polynomial matrix.
fn bareiss_det(mut m: Vec<Vec<Polynomial>>) -> Polynomial {
    let n = m.len();
    if n == 0 {
        return Polynomial::one();
    }
    let mut negate = false;
    let mut prev = Polynomial::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                Some(i) => {
                    m.swap(i, k);
                    negate = !negate;
                }
                None => return Polynomial::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &(&m[i][j] * &m[k][k]) - &(&m[i][k] * &m[k][j]);
                m[i][j] = v.div_exact(&prev).expect("Bareiss division is exact");
            }
        }
        prev = m[k][k].clone();
    }
    let d = m[n - 1][n - 1].clone();
    if negate {
        -d
    } else {
        d
    }
}

/// Determinant over the rational-function field.
pub fn det(m: &SymMatrix) -> Result<RationalFn> {
    if m.rows != m.cols {
        return Err(Error::Dimension("determinant of a non-square matrix".into()));
    }
    let (rows, dens) = m.cleared_rows();
    let num = bareiss_det(rows);
    let den = dens.iter().fold(Polynomial::one(), |acc, d| &acc * d);
    Ok(RationalFn::new(num, den))
}

/// Classical adjugate: `adj[j][i] = (-1)^(i+j) * det(minor(i, j))`.
pub fn adjugate(m: &SymMatrix) -> Result<SymMatrix> {
    if m.rows != m.cols {
        return Err(Error::Dimension("adjugate of a non-square matrix".into()));
    }
    let n = m.rows;
    let mut out = SymMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let rs: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let cs: Vec<usize> = (0..n).filter(|&c| c != j).collect();
            let c = det(&m.select(&rs, &cs))?;
            out.set(j, i, if (i + j) % 2 == 0 { c } else { -c });
        }
    }
    Ok(out)
}

/// Inverse via the adjugate; `None` when the determinant is identically zero.
pub fn inverse(m: &SymMatrix) -> Result<Option<SymMatrix>> {
    let d = det(m)?;
    let Some(inv_d) = d.recip() else {
        return Ok(None);
    };
    Ok(Some(adjugate(m)?.scale(&inv_d)))
}

/// Rank certificate over the rational-function field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankWitness {
    pub rank: usize,
    pub pivot_rows: Vec<usize>,
    pub pivot_cols: Vec<usize>,
    /// Numerator of the reduced determinant at the pivots.
    pub pivot_minor: Polynomial,
    /// Squarefree factors of the pivot minor; empty when it is a nonzero constant.
    pub locus: Vec<Polynomial>,
}

impl RankWitness {
    /// Re-checks the witness against `m`: the pivot minor is not identically zero
    /// and every minor obtained by adjoining one more row and column vanishes.
    pub fn verify(&self, m: &SymMatrix) -> Result<bool> {
        if self.pivot_rows.len() != self.rank || self.pivot_cols.len() != self.rank {
            return Ok(false);
        }
        if det(&m.select(&self.pivot_rows, &self.pivot_cols))?.is_identically_zero() {
            return Ok(false);
        }
        for i in (0..m.rows).filter(|i| !self.pivot_rows.contains(i)) {
            for j in (0..m.cols).filter(|j| !self.pivot_cols.contains(j)) {
                let mut rs = self.pivot_rows.clone();
                rs.push(i);
                let mut cs = self.pivot_cols.clone();
                cs.push(j);
                if !det(&m.select(&rs, &cs))?.is_identically_zero() {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    pub fn has_locus(&self) -> bool {
        !self.locus.is_empty()
    }
}

fn row_primitive(row: &mut [Polynomial]) {
    let g = row
        .iter()
        .filter(|p| !p.is_zero())
        .fold(Polynomial::zero(), |acc, p| {
            if acc.is_constant() && !acc.is_zero() {
                acc
            } else {
                gcd(&acc, p)
            }
        });
    if g.is_zero() || g.is_constant() {
        return;
    }
    for p in row.iter_mut() {
        *p = p.div_exact(&g).expect("row gcd divides");
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn minor_numerator(m: &SymMatrix, rows: &[usize], cols: &[usize]) -> Result<Polynomial> {
    Ok(det(&m.select(rows, cols))?.reduced().num().primitive().1)
}

/// Generic rank over the rational-function field by fraction-free row reduction.
///
/// Rows are scanned in order; each row that is not in the span of the earlier
/// pivot rows contributes a pivot at its lowest-index nonzero column. When the
/// resulting pivot minor is not constant, the remaining column choices for the same
/// rows are tried in lexicographic order and the first constant minor is preferred.
pub fn generic_rank(m: &SymMatrix) -> Result<RankWitness> {
    let (mut w, _) = m.cleared_rows();
    let mut used = vec![false; m.cols];
    let mut pivot_rows = Vec::new();
    let mut pivot_cols = Vec::new();
    for i in 0..m.rows {
        let Some(c) = (0..m.cols).find(|&c| !used[c] && !w[i][c].is_zero()) else {
            continue;
        };
        used[c] = true;
        pivot_rows.push(i);
        pivot_cols.push(c);
        let pivot_row = w[i].clone();
        for row in w.iter_mut().skip(i + 1) {
            if row[c].is_zero() {
                continue;
            }
            let factor = row[c].clone();
            for (j, e) in row.iter_mut().enumerate() {
                *e = &(&pivot_row[c] * &*e) - &(&factor * &pivot_row[j]);
            }
            row_primitive(row);
        }
    }
    pivot_cols.sort_unstable();
    let rank = pivot_rows.len();
    let mut minor = minor_numerator(m, &pivot_rows, &pivot_cols)?;
    if !minor.is_constant() {
        for cols in combinations(m.cols, rank) {
            if cols == pivot_cols {
                continue;
            }
            let alt = minor_numerator(m, &pivot_rows, &cols)?;
            if !alt.is_zero() && alt.is_constant() {
                pivot_cols = cols;
                minor = alt;
                break;
            }
        }
    }
    let locus = squarefree_factors(&minor);
    Ok(RankWitness {
        rank,
        pivot_rows,
        pivot_cols,
        pivot_minor: minor,
        locus,
    })
}

/// Finds `F` with `F * jbar + jtilde == 0`, where `jbar` has full row rank.
pub fn solve_annihilator(jbar: &SymMatrix, jtilde: &SymMatrix) -> Result<SymMatrix> {
    let r = jbar.rows();
    let q = jtilde.rows();
    if r > 0 && q > 0 && jbar.cols() != jtilde.cols() {
        return Err(Error::Dimension("annihilator blocks differ in width".into()));
    }
    if r == 0 {
        return if jtilde.is_zero() {
            Ok(SymMatrix::zeros(q, 0))
        } else {
            Err(Error::AnnihilatorInfeasible)
        };
    }
    let witness = generic_rank(jbar)?;
    if witness.rank != r {
        return Err(Error::NotFullRowRank);
    }
    let pivot_block = jbar.select_cols(&witness.pivot_cols);
    let inv = inverse(&pivot_block)?.ok_or(Error::NotFullRowRank)?;
    let f = jtilde.select_cols(&witness.pivot_cols).mul(&inv)?.neg();
    let check = f.mul(jbar)?.add(jtilde)?;
    if !check.is_zero() {
        return Err(Error::AnnihilatorInfeasible);
    }
    Ok(f)
}

/// Lie derivative of every entry along a state vector field.
pub fn lie_derivative_matrix(m: &SymMatrix, field: &[(Sym, Polynomial)]) -> SymMatrix {
    m.map(|e| e.derive_along(field))
}
