//! Halton sequences, in floating point and in exact rationals.

use num_bigint::BigInt;
use num_rational::BigRational;

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

/// Largest supported dimension.
pub const MAX_DIM: usize = PRIMES.len();

fn digits(mut index: u64, base: u64) -> Vec<u64> {
    let mut out = Vec::new();
    while index > 0 {
        out.push(index % base);
        index /= base;
    }
    out
}

/// Van der Corput radical inverse of `index` in `base`, in `[0, 1)`.
pub fn radical_inverse(index: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut acc = 0.0;
    for d in digits(index, base) {
        acc += d as f64 * inv;
        inv /= base as f64;
    }
    acc
}

/// Exact radical inverse; the denominator is a power of `base`.
pub fn radical_inverse_exact(index: u64, base: u64) -> BigRational {
    let mut n = BigInt::from(0u32);
    let mut den = BigInt::from(1u32);
    for d in digits(index, base) {
        n = n * base + d;
        den *= base;
    }
    BigRational::new(n, den)
}

/// Points of the `dim`-dimensional Halton sequence, starting at `1 + offset`.
#[derive(Clone, Debug)]
pub struct Halton {
    dim: usize,
    next: u64,
}

impl Halton {
    /// Panics if `dim` exceeds [`MAX_DIM`].
    pub fn new(dim: usize, offset: u64) -> Self {
        assert!(dim <= MAX_DIM, "Halton dimension {dim} above {MAX_DIM}");
        Halton {
            dim,
            next: offset + 1,
        }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.next;
        self.next += 1;
        PRIMES[..self.dim]
            .iter()
            .map(|&b| radical_inverse(i, b))
            .collect()
    }

    pub fn next_exact(&mut self) -> Vec<BigRational> {
        let i = self.next;
        self.next += 1;
        PRIMES[..self.dim]
            .iter()
            .map(|&b| radical_inverse_exact(i, b))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    #[test]
    fn first_points() {
        let mut h = Halton::new(2, 0);
        assert_eq!(h.next_point(), vec![0.5, 1.0 / 3.0]);
        assert_eq!(h.next_point(), vec![0.25, 2.0 / 3.0]);
        assert_eq!(h.next_point(), vec![0.75, 1.0 / 9.0]);
    }

    #[test]
    fn exact_matches_float() {
        for i in 1..500u64 {
            for &b in &PRIMES[..6] {
                let e = radical_inverse_exact(i, b);
                assert!((e.to_f64().unwrap() - radical_inverse(i, b)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn offset_shifts_sequence() {
        let mut a = Halton::new(3, 0);
        a.next_point();
        let mut b = Halton::new(3, 1);
        assert_eq!(a.next_point(), b.next_point());
    }
}
