//! Seeded random linear systems `x' = A x + B u`, `y = C x` with small integer
//! entries, used as fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::AffineSystem;
use crate::structure::{run, StructureConfig};
use crate::symbolic::{generic_rank, Polynomial, RationalFn, Sym, SymMatrix, SymbolNames};

/// Dense integer matrices of a linear system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearData {
    pub a: Vec<Vec<i64>>,
    pub b: Vec<Vec<i64>>,
    pub c: Vec<Vec<i64>>,
}

impl LinearData {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn to_system(&self, name: Option<String>) -> AffineSystem {
        let n = self.n();
        let m = self.b.first().map_or(0, Vec::len);
        let x = |i: usize| Polynomial::var(Sym::state(i));
        let combo = |row: &[i64]| {
            row.iter()
                .enumerate()
                .fold(Polynomial::zero(), |acc, (j, &v)| {
                    &acc + &x(j).scale(&num_rational::BigRational::from_integer(v.into()))
                })
        };
        AffineSystem {
            name,
            names: SymbolNames::default_states(n),
            f: self.a.iter().map(|r| combo(r)).collect(),
            g: (0..m)
                .map(|j| (0..n).map(|i| Polynomial::int(self.b[i][j])).collect())
                .collect(),
            h: self.c.iter().map(|r| combo(r)).collect(),
        }
    }
}

fn int_matrix(rows: &[Vec<i64>]) -> SymMatrix {
    SymMatrix::from_rows(
        rows.iter()
            .map(|r| r.iter().map(|&v| RationalFn::int(v)).collect())
            .collect(),
    )
}

fn mat_mul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

fn transpose(a: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols)
        .map(|j| a.iter().map(|r| r[j]).collect())
        .collect()
}

/// Rank of `[B, AB, .., A^{n-1}B]`.
pub fn controllability_rank(d: &LinearData) -> usize {
    let n = d.n();
    let mut blocks = Vec::new();
    let mut cur = d.b.clone();
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = mat_mul(&d.a, &cur);
    }
    let wide: Vec<Vec<i64>> = (0..n)
        .map(|i| blocks.iter().flat_map(|blk| blk[i].clone()).collect())
        .collect();
    generic_rank(&int_matrix(&wide)).expect("constant matrix").rank
}

/// Rank of `[C; CA; ..; CA^{n-1}]`.
pub fn observability_rank(d: &LinearData) -> usize {
    let dual = LinearData {
        a: transpose(&d.a),
        b: transpose(&d.c),
        c: transpose(&d.b),
    };
    controllability_rank(&dual)
}

fn draw(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<i64>> {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    if rng.gen_bool(0.4) {
                        0
                    } else {
                        rng.gen_range(-2..=2)
                    }
                })
                .collect()
        })
        .collect()
}

/// A controllable, observable, left-invertible system with `p = m`, drawn
/// deterministically from `seed`.
pub fn random_linear(seed: u64, n: usize, m: usize) -> LinearData {
    assert!(n >= 1 && m >= 1 && m <= n, "need 1 <= m <= n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let d = LinearData {
            a: draw(&mut rng, n, n),
            b: draw(&mut rng, n, m),
            c: draw(&mut rng, m, n),
        };
        if controllability_rank(&d) != n || observability_rank(&d) != n {
            continue;
        }
        let sys = d.to_system(None);
        let terminated = run(&sys, &StructureConfig::default())
            .map(|r| r.k_star().is_some())
            .unwrap_or(false);
        if terminated {
            return d;
        }
    }
}
