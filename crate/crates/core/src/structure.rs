//! The structure algorithm: repeated differentiation of the output rows that do
//! not yet see the input, followed by row reduction of the input-coefficient block.
//!
//! Step `k` carries `z_k = (zbar; zhat)` as expressions in the state and the
//! output-derivative symbols, together with `h_k = (hbar; hhat)` and `jbar`, such
//! that `z_k = h_k + (jbar; 0) u` along every trajectory. While Assumption 1 holds
//! `z_k = M_k y^k` is linear in the output derivatives; once it fails the
//! input-dependent coefficients are moved into `jbar` and every later quantity
//! may depend on output derivatives as well.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::model::{AffineSystem, DerivativeChain};
use crate::symbolic::{
    generic_rank, solve_annihilator, ExpansionGuard, Polynomial, RankWitness, RationalFn, Sym,
    SymMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Affine,
    Singh,
}

/// What to do when Assumption 1 fails.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ModePolicy {
    /// Switch to the modified algorithm and keep going.
    #[default]
    Auto,
    /// Halt with an Assumption-1 outcome.
    AffineOnly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureConfig {
    pub policy: ModePolicy,
    /// Halt when a pivot minor has a vanishing locus.
    pub strict: bool,
    /// Defaults to `n + p`.
    pub max_iter: Option<usize>,
    pub guard: ExpansionGuard,
    /// Re-check the defining relation symbolically after every step.
    pub check_invariants: bool,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            policy: ModePolicy::Auto,
            strict: true,
            max_iter: None,
            guard: ExpansionGuard::default(),
            check_invariants: true,
        }
    }
}

impl StructureConfig {
    pub fn effective_max_iter(&self, sys: &AffineSystem) -> usize {
        self.max_iter.unwrap_or(sys.n() + sys.p()).max(1)
    }
}

/// A nonzero `L_{g_i}` of a row that should not see the input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct A1Violation {
    /// Row index within `z_k`.
    pub row: usize,
    pub input: usize,
    /// `L_{g_i}` applied to the row expression.
    pub expression: RationalFn,
    /// `L_{g_i}` applied to the row of `M_k`, when `z_k` is linear in the output derivatives.
    pub coefficients: Option<Vec<RationalFn>>,
}

/// The passage from step `k - 1` to step `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    /// Input coefficients of the freshly differentiated rows.
    pub jhat: SymMatrix,
    pub witness: RankWitness,
    /// Row order applied to the stacked rows: pivots first, then the rest.
    pub e: Vec<usize>,
    pub f: SymMatrix,
    /// `[[I, 0], [F, I]]` times the permutation `e`.
    pub r: SymMatrix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureStep {
    pub k: usize,
    pub rank: usize,
    pub mode: Mode,
    pub zbar: Vec<RationalFn>,
    pub zhat: Vec<RationalFn>,
    /// Rows of `M_k`; present while `z_k` is linear in the output derivatives.
    pub mbar: Option<SymMatrix>,
    pub mhat: Option<SymMatrix>,
    pub hbar: Vec<RationalFn>,
    pub hhat: Vec<RationalFn>,
    pub jbar: SymMatrix,
    /// How this step was reached; absent at `k = 0`.
    pub transition: Option<Transition>,
    /// Assumption-1 failures found when differentiating `zhat`.
    pub a1_violations: Vec<A1Violation>,
}

impl StructureStep {
    pub fn z(&self) -> Vec<RationalFn> {
        self.zbar.iter().chain(&self.zhat).cloned().collect()
    }

    pub fn h(&self) -> Vec<RationalFn> {
        self.hbar.iter().chain(&self.hhat).cloned().collect()
    }

    /// `(jbar; 0)`.
    pub fn j(&self) -> SymMatrix {
        let m = self.jbar.cols();
        self.jbar
            .vstack(&SymMatrix::zeros(self.zhat.len(), m))
            .expect("widths agree")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Terminated {
        k_star: usize,
    },
    IterationCap {
        max_k: usize,
    },
    Assumption2Violation {
        step: usize,
        locus: Vec<Polynomial>,
        /// Generic rank first, then ranks seen after setting a single-variable
        /// linear locus factor to zero.
        rank_candidates: Vec<usize>,
    },
    Assumption1Violation {
        step: usize,
        violations: Vec<A1Violation>,
    },
}

impl Outcome {
    pub fn kind(&self) -> &'static str {
        match self {
            Outcome::Terminated { .. } => "terminated",
            Outcome::IterationCap { .. } => "iteration-cap",
            Outcome::Assumption2Violation { .. } => "assumption2-violation",
            Outcome::Assumption1Violation { .. } => "assumption1-violation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureReport {
    pub steps: Vec<StructureStep>,
    pub outcome: Outcome,
    pub singh_activated_at: Option<usize>,
    pub max_iter: usize,
    pub strict: bool,
    pub policy: ModePolicy,
}

impl StructureReport {
    pub fn ranks(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.rank).collect()
    }

    pub fn k_star(&self) -> Option<usize> {
        match self.outcome {
            Outcome::Terminated { k_star } => Some(k_star),
            _ => None,
        }
    }

    pub fn final_step(&self) -> &StructureStep {
        self.steps.last().expect("at least the initial step")
    }
}

/// Output-derivative symbols `y_c^(d)` for `d <= k`, ordered `d * p + c`.
pub fn output_symbols(p: usize, k: usize) -> Vec<Sym> {
    (0..=k)
        .flat_map(|d| (0..p).map(move |c| Sym::output(d, c)))
        .collect()
}

/// Jacobian of `z` with respect to the output-derivative stack up to order `k`,
/// or `None` if `z` is not linear in it.
fn output_jacobian(z: &[RationalFn], p: usize, k: usize) -> Option<SymMatrix> {
    let ys = output_symbols(p, k);
    let mut rows = Vec::with_capacity(z.len());
    for zi in z {
        if !zi.den().symbols().iter().all(Sym::is_state) {
            return None;
        }
        let row: Vec<RationalFn> = ys.iter().map(|&y| zi.differentiate(y)).collect();
        let mut rest = zi.clone();
        for (c, &y) in row.iter().zip(&ys) {
            if c.symbols().iter().any(|s| !s.is_state()) {
                return None;
            }
            rest = &rest - &(c * &RationalFn::var(y));
        }
        if !rest.is_identically_zero() {
            return None;
        }
        rows.push(row);
    }
    Some(SymMatrix::new(z.len(), ys.len(), rows.into_iter().flatten().collect()).expect("shape"))
}

fn tidy(r: RationalFn) -> RationalFn {
    if r.den().is_constant() {
        r
    } else {
        r.reduced()
    }
}

/// `k = 0`: `M_0 = I`, `h_0 = h`, rank 0.
pub fn init(sys: &AffineSystem) -> StructureStep {
    let p = sys.p();
    let zhat: Vec<RationalFn> = (0..p).map(|c| RationalFn::var(Sym::output(0, c))).collect();
    StructureStep {
        k: 0,
        rank: 0,
        mode: Mode::Affine,
        mbar: Some(SymMatrix::zeros(0, p)),
        mhat: Some(SymMatrix::identity(p)),
        zbar: Vec::new(),
        zhat,
        hbar: Vec::new(),
        hhat: sys.h.iter().cloned().map(RationalFn::from_poly).collect(),
        jbar: SymMatrix::zeros(0, sys.m()),
        transition: None,
        a1_violations: Vec::new(),
    }
}

/// `L_{g_i} zhat` for every row and input; an empty list means Assumption 1 holds.
pub fn check_assumption1(step: &StructureStep, sys: &AffineSystem) -> Vec<A1Violation> {
    let mut out = Vec::new();
    for (j, zj) in step.zhat.iter().enumerate() {
        for i in 0..sys.m() {
            let field = sys.input_field(i);
            let d = zj.derive_along(&field);
            if d.is_identically_zero() {
                continue;
            }
            let coefficients = step
                .mhat
                .as_ref()
                .map(|mh| mh.row(j).iter().map(|e| e.derive_along(&field)).collect());
            out.push(A1Violation {
                row: step.rank + j,
                input: i,
                expression: d,
                coefficients,
            });
        }
    }
    out
}

pub enum StepResult {
    Advanced(StructureStep),
    /// Strict mode and the new pivot minor may vanish.
    Assumption2 {
        tentative: StructureStep,
        locus: Vec<Polynomial>,
        rank_candidates: Vec<usize>,
    },
    /// Affine-only policy and Assumption 1 failed.
    Assumption1(Vec<A1Violation>),
}

/// Ranks obtained by zeroing one single-variable linear locus factor at a time.
fn rank_candidates(m: &SymMatrix, w: &RankWitness) -> Result<Vec<usize>> {
    let mut out = vec![w.rank];
    for factor in &w.locus {
        let syms = factor.symbols();
        if syms.len() != 1 || factor.degree() != 1 {
            continue;
        }
        let s = *syms.iter().next().expect("one symbol");
        // a*s + b = 0
        let coeffs = factor.coeffs_in(s);
        let root = -(coeffs[0].constant_value().unwrap_or_else(BigRational::zero))
            / coeffs[1].constant_value().expect("linear coefficient is constant");
        let map = BTreeMap::from([(s, RationalFn::constant(root))]);
        let Ok(sub) = m.try_map(|e| e.substitute(&map)) else {
            continue;
        };
        let r = generic_rank(&sub)?.rank;
        if !out.contains(&r) {
            out.push(r);
        }
    }
    Ok(out)
}

/// One iteration from step `k` to `k + 1`.
pub fn step(
    cur: &StructureStep,
    sys: &AffineSystem,
    config: &StructureConfig,
) -> Result<(StepResult, Vec<A1Violation>, Mode)> {
    let p = sys.p();
    let m = sys.m();
    let k = cur.k;
    let r = cur.rank;
    if r >= m {
        return Err(Error::Contract("step requires r_k < m".into()));
    }
    let guard = &config.guard;

    let violations = check_assumption1(cur, sys);
    let mut mode = cur.mode;
    if !violations.is_empty() && mode == Mode::Affine {
        match config.policy {
            ModePolicy::AffineOnly => {
                return Ok((StepResult::Assumption1(violations.clone()), violations, mode))
            }
            ModePolicy::Auto => mode = Mode::Singh,
        }
    }

    // total derivative along the drift, with y^(d) -> y^(d+1)
    let mut total = sys.drift_field();
    for d in 0..=k {
        for c in 0..p {
            total.push((Sym::output(d, c), Polynomial::var(Sym::output(d + 1, c))));
        }
    }
    let zhat_new: Vec<RationalFn> = cur.zhat.iter().map(|z| z.derive_along(&total)).collect();
    let hhat_new: Vec<RationalFn> = cur.hhat.iter().map(|h| h.derive_along(&total)).collect();

    let mut jhat = SymMatrix::zeros(cur.zhat.len(), m);
    for i in 0..m {
        let field = sys.input_field(i);
        for (j, (z, h)) in cur.zhat.iter().zip(&cur.hhat).enumerate() {
            let v = &h.derive_along(&field) - &z.derive_along(&field);
            jhat.set(j, i, tidy(v));
        }
    }
    guard.check_matrix(&jhat)?;

    let stacked = cur.jbar.vstack(&jhat)?;
    let witness = generic_rank(&stacked)?;
    if witness.pivot_rows.len() < r || witness.pivot_rows[..r] != (0..r).collect::<Vec<_>>()[..] {
        return Err(Error::Invariant(
            "previous pivot rows are no longer independent".into(),
        ));
    }
    let pivots = witness.pivot_rows.clone();
    let rest: Vec<usize> = (0..p).filter(|i| !pivots.contains(i)).collect();
    let e: Vec<usize> = pivots.iter().chain(&rest).copied().collect();
    let r_new = pivots.len();

    let f = solve_annihilator(&stacked.select_rows(&pivots), &stacked.select_rows(&rest))?
        .map(|x| tidy(x.clone()));

    let mut rmat = SymMatrix::zeros(p, p);
    for (row, &src) in e.iter().enumerate() {
        rmat.set(row, src, RationalFn::one());
    }
    for (q, &src_q) in rest.iter().enumerate() {
        for (l, &src_l) in pivots.iter().enumerate() {
            rmat.set(r_new + q, src_l, f.get(q, l).clone());
        }
        rmat.set(r_new + q, src_q, RationalFn::one());
    }

    let apply = |top: &[RationalFn], bottom: &[RationalFn]| -> (Vec<RationalFn>, Vec<RationalFn>) {
        let all: Vec<&RationalFn> = top.iter().chain(bottom).collect();
        let bar: Vec<RationalFn> = pivots.iter().map(|&i| all[i].clone()).collect();
        let hat = rest
            .iter()
            .enumerate()
            .map(|(q, &i)| {
                let mut acc = all[i].clone();
                for (l, b) in bar.iter().enumerate() {
                    let c = f.get(q, l);
                    if !c.is_identically_zero() {
                        acc = &acc + &(c * b);
                    }
                }
                tidy(acc)
            })
            .collect();
        (bar, hat)
    };
    let (zbar, zhat) = apply(&cur.zbar, &zhat_new);
    let (hbar, hhat) = apply(&cur.hbar, &hhat_new);
    for v in zbar.iter().chain(&zhat).chain(&hbar).chain(&hhat) {
        guard.check_ratfn(v)?;
    }

    let jbar = stacked.select_rows(&pivots);
    let (mbar, mhat) = match mode {
        Mode::Affine => {
            let mb = output_jacobian(&zbar, p, k + 1);
            let mh = output_jacobian(&zhat, p, k + 1);
            if mb.is_none() || mh.is_none() {
                return Err(Error::Invariant(
                    "affine-mode rows are not linear in the output derivatives".into(),
                ));
            }
            (mb, mh)
        }
        Mode::Singh => (None, None),
    };

    let locus = witness.locus.clone();
    let next = StructureStep {
        k: k + 1,
        rank: r_new,
        mode,
        zbar,
        zhat,
        mbar,
        mhat,
        hbar,
        hhat,
        jbar,
        transition: Some(Transition {
            jhat,
            witness,
            e,
            f,
            r: rmat,
        }),
        a1_violations: Vec::new(),
    };
    if config.strict && !locus.is_empty() {
        let w = &next.transition.as_ref().expect("just set").witness;
        let candidates = rank_candidates(&stacked, w)?;
        return Ok((
            StepResult::Assumption2 {
                tentative: next,
                locus,
                rank_candidates: candidates,
            },
            violations,
            mode,
        ));
    }
    Ok((StepResult::Advanced(next), violations, mode))
}

/// Checks `z_k(H) = h_k(H) + J_k(H) u_0` with the output-derivative symbols replaced
/// by the derivative chain, plus affine-mode purity.
pub fn check_defining_relation(step: &StructureStep, chain: &DerivativeChain) -> Result<()> {
    if chain.depth() < step.k {
        return Err(Error::Contract("derivative chain too short".into()));
    }
    let map = chain.output_substitution(step.k);
    let j = step.j();
    let m = j.cols();
    for (i, (z, h)) in step.z().iter().zip(step.h()).enumerate() {
        let mut residual = &z.substitute_poly(&map)? - &h.substitute_poly(&map)?;
        for l in 0..m {
            let u = RationalFn::var(Sym::input(0, l));
            residual = &residual - &(&j.get(i, l).substitute_poly(&map)? * &u);
        }
        if !residual.is_identically_zero() {
            return Err(Error::Invariant(format!(
                "defining relation fails in row {i} at step {}",
                step.k
            )));
        }
    }
    if step.mode == Mode::Affine {
        let pure = step
            .h()
            .iter()
            .chain(step.jbar.entries())
            .all(|e| e.symbols().iter().all(Sym::is_state));
        if !pure || step.mbar.is_none() || step.mhat.is_none() {
            return Err(Error::Invariant(format!(
                "affine-mode step {} depends on output derivatives",
                step.k
            )));
        }
    }
    Ok(())
}

/// Iterates until `r_k = m`, an assumption fails, or the iteration cap is hit.
pub fn run(sys: &AffineSystem, config: &StructureConfig) -> Result<StructureReport> {
    sys.validate().into_result()?;
    let max_iter = config.effective_max_iter(sys);
    let m = sys.m();
    let mut chain = DerivativeChain::for_affine(sys, 0, &config.guard)?;
    let mut steps: Vec<StructureStep> = Vec::new();
    let mut cur = init(sys);
    let mut singh_activated_at = None;
    let report = |steps, outcome, singh| StructureReport {
        steps,
        outcome,
        singh_activated_at: singh,
        max_iter,
        strict: config.strict,
        policy: config.policy,
    };
    if config.check_invariants {
        check_defining_relation(&cur, &chain)?;
    }
    loop {
        if cur.rank == m {
            let k_star = cur.k;
            steps.push(cur);
            return Ok(report(steps, Outcome::Terminated { k_star }, singh_activated_at));
        }
        if cur.k >= max_iter {
            steps.push(cur);
            return Ok(report(
                steps,
                Outcome::IterationCap { max_k: max_iter },
                singh_activated_at,
            ));
        }
        let (result, violations, mode) = step(&cur, sys, config)?;
        if mode == Mode::Singh && singh_activated_at.is_none() {
            singh_activated_at = Some(cur.k);
        }
        cur.a1_violations = violations;
        let k = cur.k;
        match result {
            StepResult::Assumption1(violations) => {
                steps.push(cur);
                return Ok(report(
                    steps,
                    Outcome::Assumption1Violation {
                        step: k,
                        violations,
                    },
                    singh_activated_at,
                ));
            }
            StepResult::Assumption2 {
                tentative: _,
                locus,
                rank_candidates,
            } => {
                steps.push(cur);
                return Ok(report(
                    steps,
                    Outcome::Assumption2Violation {
                        step: k,
                        locus,
                        rank_candidates,
                    },
                    singh_activated_at,
                ));
            }
            StepResult::Advanced(next) => {
                if next.rank < cur.rank {
                    return Err(Error::Invariant("rank decreased".into()));
                }
                if config.check_invariants {
                    chain.extend_to(next.k, &config.guard)?;
                    check_defining_relation(&next, &chain)?;
                }
                steps.push(cur);
                cur = next;
            }
        }
    }
}
