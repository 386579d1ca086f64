//! Explicit left inverse from a terminated structure run, and sampled bound tables
//! for the input-bounding inequality.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::lowdisc::Halton;
use crate::model::{AffineSystem, DerivativeChain};
use crate::structure::{output_symbols, Mode, StructureReport};
use crate::symbolic::{
    inverse, CompiledPoly, CompiledRational, ExpansionGuard, RationalFn, SlotMap, Sym, SymMatrix,
};

/// `u = A(x) + B(x) y^k` in affine mode; in the modified mode only `u` is kept.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InverseMap {
    pub k_star: usize,
    pub mode: Mode,
    pub p: usize,
    /// One expression per input, in the state and output-derivative symbols.
    pub u: Vec<RationalFn>,
    pub a: Option<Vec<RationalFn>>,
    /// Columns follow the stack `y^(d)_c` at index `d * p + c`.
    pub b: Option<SymMatrix>,
    /// Every denominator of `u` is a constant.
    pub polynomial_in_y: bool,
}

impl InverseMap {
    pub fn m(&self) -> usize {
        self.u.len()
    }

    pub fn output_symbols(&self) -> Vec<Sym> {
        output_symbols(self.p, self.k_star)
    }
}

pub fn build_inverse(report: &StructureReport, sys: &AffineSystem) -> Result<InverseMap> {
    let Some(k_star) = report.k_star() else {
        return Err(Error::InversionUnavailable);
    };
    let last = report.final_step();
    let jinv = inverse(&last.jbar)?.ok_or(Error::NotFullRowRank)?;
    let diff: Vec<RationalFn> = last
        .zbar
        .iter()
        .zip(&last.hbar)
        .map(|(z, h)| z - h)
        .collect();
    let u: Vec<RationalFn> = jinv
        .mul(&SymMatrix::column(diff))?
        .entries()
        .iter()
        .map(RationalFn::reduced)
        .collect();
    let polynomial_in_y = u.iter().all(|e| e.den().is_constant());
    let p = sys.p();

    let (a, b) = match last.mode {
        Mode::Affine => {
            let mbar = last
                .mbar
                .as_ref()
                .ok_or_else(|| Error::Invariant("affine step without M".into()))?;
            let hbar = SymMatrix::column(last.hbar.clone());
            let a: Vec<RationalFn> = jinv
                .mul(&hbar)?
                .neg()
                .entries()
                .iter()
                .map(RationalFn::reduced)
                .collect();
            let b = jinv.mul(mbar)?.map(RationalFn::reduced);
            let ys = output_symbols(p, k_star);
            for (i, ui) in u.iter().enumerate() {
                let mut rhs = a[i].clone();
                for (c, &y) in ys.iter().enumerate() {
                    rhs = &rhs + &(b.get(i, c) * &RationalFn::var(y));
                }
                if &rhs != ui {
                    return Err(Error::Invariant(format!("u{} differs from A + B y", i + 1)));
                }
            }
            let origin: BTreeMap<Sym, BigRational> = (0..sys.n())
                .map(|i| (Sym::state(i), BigRational::zero()))
                .collect();
            for ai in &a {
                match ai.evaluate(&origin) {
                    Ok(v) if !v.is_zero() => {
                        return Err(Error::Invariant("A(0) is not zero".into()))
                    }
                    _ => {}
                }
            }
            (Some(a), Some(b))
        }
        Mode::Singh => (None, None),
    };
    Ok(InverseMap {
        k_star,
        mode: last.mode,
        p,
        u,
        a,
        b,
        polynomial_in_y,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundTrip {
    pub identity: bool,
    /// `u_i(H) - u_{0,i}` for each input.
    pub residuals: Vec<RationalFn>,
}

/// Replaces `y^(d)` by `H_d` and checks that the result is `u_0`.
pub fn verify_inverse_symbolic(
    inv: &InverseMap,
    sys: &AffineSystem,
    guard: &ExpansionGuard,
) -> Result<RoundTrip> {
    let chain = DerivativeChain::for_affine(sys, inv.k_star, guard)?;
    let map = chain.output_substitution(inv.k_star);
    let residuals = inv
        .u
        .iter()
        .enumerate()
        .map(|(i, ui)| {
            let v = ui.substitute_poly(&map)?;
            guard.check_ratfn(&v)?;
            Ok(&v - &RationalFn::var(Sym::input(0, i)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RoundTrip {
        identity: residuals.iter().all(RationalFn::is_identically_zero),
        residuals,
    })
}

/// A nondecreasing function sampled on an increasing grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneTable {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl MonotoneTable {
    /// Fails when the grid is not strictly increasing, the values decrease, or
    /// the lengths differ.
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::Contract("table grid and values differ in length".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Contract("table grid is not increasing".into()));
        }
        if values.windows(2).any(|w| !(w[0] <= w[1])) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("table values are not nondecreasing".into()));
        }
        Ok(MonotoneTable { grid, values })
    }

    pub fn from_fn(grid: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.to_vec(), grid.iter().map(|&s| f(s)).collect())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Class-K surrogate check: starts at radius 0 with value 0.
    pub fn vanishes_at_zero(&self) -> bool {
        self.grid[0] == 0.0 && self.values[0] == 0.0
    }

    /// Linear interpolation, clamped at both ends.
    pub fn interp(&self, s: f64) -> f64 {
        let g = &self.grid;
        if s <= g[0] {
            return self.values[0];
        }
        let last = g.len() - 1;
        if s >= g[last] {
            return self.values[last];
        }
        let i = g.partition_point(|&v| v <= s);
        let (g0, g1) = (g[i - 1], g[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (s - g0) / (g1 - g0)
    }

    /// Value at the first grid point at or above `s`; the last value beyond the grid.
    pub fn upper(&self, s: f64) -> f64 {
        let i = self.grid.partition_point(|&v| v < s);
        self.values[i.min(self.values.len() - 1)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundConfig {
    /// Per-state sampling interval; must contain 0.
    pub state_box: Vec<(f64, f64)>,
    pub grid: Vec<f64>,
    pub samples: usize,
    /// Offset into the low-discrepancy sequence.
    pub seed: u64,
}

impl BoundConfig {
    /// Box `[-r, r]^n` with `points` radii from 0 to the box corner.
    pub fn symmetric(n: usize, r: f64, points: usize, samples: usize) -> Self {
        let state_box = vec![(-r, r); n];
        BoundConfig {
            grid: default_grid(&state_box, points),
            state_box,
            samples,
            seed: 0,
        }
    }
}

/// Evenly spaced radii from 0 to the largest norm reached in the box.
pub fn default_grid(state_box: &[(f64, f64)], points: usize) -> Vec<f64> {
    let corner = state_box
        .iter()
        .map(|&(lo, hi)| lo.abs().max(hi.abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    let points = points.max(2);
    if corner == 0.0 {
        return vec![0.0, 1.0];
    }
    (0..points)
        .map(|i| corner * i as f64 / (points - 1) as f64)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundEstimate {
    pub radius_grid: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    /// Frobenius norm of `B(0)`.
    pub b_norm: f64,
    pub state_box: Vec<(f64, f64)>,
    pub sample_count: usize,
    pub skipped: usize,
    pub seed: u64,
}

impl BoundEstimate {
    pub fn rho1_table(&self) -> MonotoneTable {
        MonotoneTable::new(self.radius_grid.clone(), self.rho1.clone()).expect("monotone")
    }

    pub fn rho2_at(&self, s: f64) -> f64 {
        self.b_norm * s + 0.5 * s * s
    }

    /// `rho1(|x|) + rho2(|y|)`, reading `rho1` at the next grid radius up.
    pub fn input_bound(&self, x_norm: f64, y_norm: f64) -> f64 {
        self.rho1_table().upper(x_norm) + self.rho2_at(y_norm)
    }

    pub fn covers(&self, x: &[f64]) -> bool {
        x.len() == self.state_box.len()
            && x
                .iter()
                .zip(&self.state_box)
                .all(|(v, &(lo, hi))| lo <= *v && *v <= hi)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Compiled `A` and `B` of an affine inverse, evaluated in floating point.
pub(crate) struct CompiledAffine {
    a: Vec<CompiledRational>,
    b: Vec<CompiledRational>,
}

impl CompiledAffine {
    pub(crate) fn new(inv: &InverseMap, n: usize) -> Result<Self> {
        let (Some(a), Some(b)) = (&inv.a, &inv.b) else {
            return Err(Error::AffineInverseRequired);
        };
        let slots = SlotMap::new((0..n).map(Sym::state));
        Ok(CompiledAffine {
            a: a.iter()
                .map(|e| CompiledRational::new(e, &slots))
                .collect::<Result<_>>()?,
            b: b.entries()
                .iter()
                .map(|e| CompiledRational::new(e, &slots))
                .collect::<Result<_>>()?,
        })
    }

    /// `(|A(x)|, |B(x)|_F)`, or `None` where a denominator vanishes.
    pub(crate) fn norms(&self, x: &[f64]) -> Option<(f64, f64)> {
        let mut a2 = 0.0;
        for e in &self.a {
            let (v, d) = e.eval_parts(x);
            if d.abs() < 1e-12 || !v.is_finite() {
                return None;
            }
            a2 += v * v;
        }
        let mut b2 = 0.0;
        for e in &self.b {
            let (v, d) = e.eval_parts(x);
            if d.abs() < 1e-12 || !v.is_finite() {
                return None;
            }
            b2 += v * v;
        }
        Some((a2.sqrt(), b2.sqrt()))
    }
}

/// Sampled maxima of `|A(x)|` and `|B(x)| - |B(0)|` over `|x| <= r` in the box.
pub fn estimate_bounds(inv: &InverseMap, n: usize, config: &BoundConfig) -> Result<BoundEstimate> {
    if config.state_box.len() != n {
        return Err(Error::Dimension(format!(
            "box has {} intervals for {n} states",
            config.state_box.len()
        )));
    }
    if config
        .state_box
        .iter()
        .any(|&(lo, hi)| !(lo <= 0.0 && 0.0 <= hi))
    {
        return Err(Error::Contract("sampling box must contain the origin".into()));
    }
    let grid = MonotoneTable::new(config.grid.clone(), vec![0.0; config.grid.len()])?
        .grid()
        .to_vec();
    if grid[0] != 0.0 {
        return Err(Error::Contract("radius grid must start at 0".into()));
    }
    let compiled = CompiledAffine::new(inv, n)?;
    let (_, b_norm) = compiled
        .norms(&vec![0.0; n])
        .ok_or(Error::EvaluationSingular)?;

    let mut gamma1 = vec![0.0f64; grid.len()];
    let mut gamma2 = vec![0.0f64; grid.len()];
    let mut skipped = 0;
    let mut halton = Halton::new(n, config.seed);
    for _ in 0..config.samples {
        let x: Vec<f64> = halton
            .next_point()
            .iter()
            .zip(&config.state_box)
            .map(|(h, &(lo, hi))| lo + (hi - lo) * h)
            .collect();
        let Some((an, bn)) = compiled.norms(&x) else {
            skipped += 1;
            continue;
        };
        let r = norm(&x);
        let g2 = (bn - b_norm).max(0.0);
        let first = grid.partition_point(|&g| g < r);
        for i in first..grid.len() {
            gamma1[i] = gamma1[i].max(an);
            gamma2[i] = gamma2[i].max(g2);
        }
    }
    if skipped * 10 > config.samples {
        return Err(Error::UnreliableEstimate {
            skipped,
            total: config.samples,
        });
    }
    let rho1 = gamma1
        .iter()
        .zip(&gamma2)
        .map(|(g1, g2)| g1 + 0.5 * g2 * g2)
        .collect();
    let rho2 = grid.iter().map(|&r| b_norm * r + 0.5 * r * r).collect();
    Ok(BoundEstimate {
        radius_grid: grid,
        gamma1,
        gamma2,
        rho1,
        rho2,
        b_norm,
        state_box: config.state_box.clone(),
        sample_count: config.samples,
        skipped,
        seed: config.seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComposedBounds {
    pub gamma: MonotoneTable,
    /// One table in `s` per time slice of the supplied `beta_bar`.
    pub beta: Vec<MonotoneTable>,
}

/// `gamma(s) = rho1(2 gbar(s)) + rho2(s) + gbar(s)` and
/// `beta(s, t) = rho1(2 bbar(s, t)) + bbar(s, t)`.
pub fn compose_bounds(
    rho1: &MonotoneTable,
    rho2: &MonotoneTable,
    beta_bar: &[MonotoneTable],
    gamma_bar: &MonotoneTable,
) -> Result<ComposedBounds> {
    for t in [rho1, rho2, gamma_bar].into_iter().chain(beta_bar) {
        MonotoneTable::new(t.grid.clone(), t.values.clone())?;
        if !t.vanishes_at_zero() {
            return Err(Error::Contract("bound tables must vanish at 0".into()));
        }
    }
    let gamma = MonotoneTable::from_fn(gamma_bar.grid(), |s| {
        let g = gamma_bar.interp(s);
        rho1.interp(2.0 * g) + rho2.interp(s) + g
    })?;
    let beta = beta_bar
        .iter()
        .map(|bb| {
            MonotoneTable::from_fn(bb.grid(), |s| {
                let b = bb.interp(s);
                rho1.interp(2.0 * b) + b
            })
        })
        .collect::<Result<_>>()?;
    Ok(ComposedBounds { gamma, beta })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseCheck {
    pub checked: usize,
    /// Largest `|u| / bound` seen; at most 1 when every sample passes.
    pub worst_ratio: f64,
    pub violations: Vec<Vec<f64>>,
}

/// Samples `(x, u_0, .., u_{k-1})`, computes `u_0` and the output stack through the
/// derivative chain, and checks `|u_0| <= rho1(|x|) + rho2(|y^k|)`. The state part of
/// the samples reuses the sequence that produced the tables.
pub fn check_bounds_pointwise(
    inv: &InverseMap,
    sys: &AffineSystem,
    bounds: &BoundEstimate,
    input_range: (f64, f64),
    samples: usize,
    guard: &ExpansionGuard,
) -> Result<PointwiseCheck> {
    let n = sys.n();
    let m = sys.m();
    let k = inv.k_star;
    let chain = DerivativeChain::for_affine(sys, k, guard)?;
    let mut slot_syms: Vec<Sym> = (0..n).map(Sym::state).collect();
    for j in 0..k.max(1) {
        for c in 0..m {
            slot_syms.push(Sym::input(j, c));
        }
    }
    let slots = SlotMap::new(slot_syms.iter().copied());
    let levels: Vec<Vec<CompiledPoly>> = chain
        .levels()
        .iter()
        .map(|l| l.iter().map(|p| CompiledPoly::new(p, &slots)).collect())
        .collect::<Result<_>>()?;

    let dim = slot_syms.len();
    let mut halton = Halton::new(dim, bounds.seed);
    let (ulo, uhi) = input_range;
    let mut out = PointwiseCheck {
        checked: 0,
        worst_ratio: 0.0,
        violations: Vec::new(),
    };
    for _ in 0..samples {
        let h = halton.next_point();
        let point: Vec<f64> = h
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (lo, hi) = if i < n {
                    bounds.state_box[i]
                } else {
                    (ulo, uhi)
                };
                lo + (hi - lo) * v
            })
            .collect();
        let y: Vec<f64> = levels
            .iter()
            .flat_map(|l| l.iter().map(|p| p.eval(&point)))
            .collect();
        let u0 = &point[n..n + m];
        let lhs = norm(u0);
        let rhs = bounds.input_bound(norm(&point[..n]), norm(&y));
        out.checked += 1;
        if rhs > 0.0 {
            out.worst_ratio = out.worst_ratio.max(lhs / rhs);
        } else if lhs > 0.0 {
            out.worst_ratio = f64::INFINITY;
        }
        if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
            out.violations.push(point);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_system;
    use crate::structure::{run, StructureConfig};

    const EXAMPLE1: &str = include_str!("../../../corpus/example1.sys");
    const EXAMPLE3: &str = include_str!("../../../corpus/example3.sys");
    const DOUBLE: &str = include_str!("../../../corpus/double_integrator.sys");

    fn inverse_of(text: &str) -> (AffineSystem, InverseMap) {
        let sys = parse_system(text).unwrap();
        let rep = run(&sys, &StructureConfig::default()).unwrap();
        let inv = build_inverse(&rep, &sys).unwrap();
        (sys, inv)
    }

    fn strings(inv: &InverseMap, sys: &AffineSystem) -> Vec<String> {
        inv.u.iter().map(|e| e.fmt_with(&sys.names)).collect()
    }

    #[test]
    fn example_one_inverse() {
        let (sys, inv) = inverse_of(EXAMPLE1);
        assert_eq!(
            strings(&inv, &sys),
            vec!["y1'", "-x1^2*y1' + x4*y1' - x4*y1'' + y2''"]
        );
        assert!(inv.a.as_ref().unwrap().iter().all(|e| e.is_identically_zero()));
        let rt = verify_inverse_symbolic(&inv, &sys, &ExpansionGuard::default()).unwrap();
        assert!(rt.identity);
    }

    #[test]
    fn example_three_inverse() {
        let (sys, inv) = inverse_of(EXAMPLE3);
        assert_eq!(inv.mode, Mode::Singh);
        assert_eq!(
            strings(&inv, &sys),
            vec!["y1'", "-x2*y1'^2 - x2*y1'' - x3*y1' + y2''"]
        );
        assert!(inv.polynomial_in_y);
        assert!(inv.a.is_none());
        let rt = verify_inverse_symbolic(&inv, &sys, &ExpansionGuard::default()).unwrap();
        assert!(rt.identity);
    }

    #[test]
    fn double_integrator_inverse() {
        let (sys, inv) = inverse_of(DOUBLE);
        assert_eq!(strings(&inv, &sys), vec!["y1''"]);
        assert_eq!(inv.b.as_ref().unwrap().fmt_with(&sys.names), "[[0, 0, 1]]");
        let rt = verify_inverse_symbolic(&inv, &sys, &ExpansionGuard::default()).unwrap();
        assert!(rt.identity);
    }

    #[test]
    fn inversion_unavailable_without_termination() {
        let sys = parse_system(include_str!("../../../corpus/example2.sys")).unwrap();
        let rep = run(&sys, &StructureConfig::default()).unwrap();
        assert_eq!(build_inverse(&rep, &sys), Err(Error::InversionUnavailable));
    }

    #[test]
    fn degenerate_box() {
        let (_, inv) = inverse_of(EXAMPLE1);
        let config = BoundConfig {
            state_box: vec![(0.0, 0.0); 4],
            grid: vec![0.0, 1.0, 2.0],
            samples: 50,
            seed: 0,
        };
        let b = estimate_bounds(&inv, 4, &config).unwrap();
        assert_eq!(b.gamma1, vec![0.0; 3]);
        assert_eq!(b.gamma2, vec![0.0; 3]);
        for (r, v) in b.radius_grid.iter().zip(&b.rho2) {
            assert_eq!(*v, b.b_norm * r + 0.5 * r * r);
        }
    }

    #[test]
    fn table_lookups() {
        let t = MonotoneTable::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 4.0]).unwrap();
        assert_eq!(t.interp(0.5), 1.0);
        assert_eq!(t.interp(2.0), 3.0);
        assert_eq!(t.interp(10.0), 4.0);
        assert_eq!(t.interp(-1.0), 0.0);
        assert_eq!(t.upper(0.5), 2.0);
        assert_eq!(t.upper(1.0), 2.0);
        assert_eq!(t.upper(9.0), 4.0);
        assert!(MonotoneTable::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(MonotoneTable::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn composition_formulas() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 2.0).collect();
        let big: Vec<f64> = (0..=40).map(|i| i as f64 / 2.0).collect();
        let id = MonotoneTable::from_fn(&big, |s| s).unwrap();
        let zero = MonotoneTable::from_fn(&big, |_| 0.0).unwrap();
        let gbar = MonotoneTable::from_fn(&grid, |s| s).unwrap();
        let c = compose_bounds(&zero, &id, &[], &gbar).unwrap();
        for (s, g) in grid.iter().zip(c.gamma.values()) {
            assert!((g - 2.0 * s).abs() < 1e-12);
        }
        let sq = MonotoneTable::from_fn(&big, |s| s * s).unwrap();
        let c = compose_bounds(&id, &sq, &[gbar.clone()], &gbar).unwrap();
        for (s, g) in grid.iter().zip(c.gamma.values()) {
            assert!((g - (2.0 * s + sq.interp(*s) + s)).abs() < 1e-12);
        }
        for (s, b) in grid.iter().zip(c.beta[0].values()) {
            assert!((b - 3.0 * s).abs() < 1e-12);
        }
        let bumpy = MonotoneTable {
            grid: vec![0.0, 1.0],
            values: vec![0.0, -1.0],
        };
        assert!(compose_bounds(&id, &id, &[], &bumpy).is_err());
    }
}
