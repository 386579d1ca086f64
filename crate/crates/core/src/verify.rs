//! Numerical checks: fixed-step simulation, input recovery along trajectories,
//! the input-bounding inequality, and sampled dissipation certificates.

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::inversion::{norm, BoundEstimate, InverseMap};
use crate::lowdisc::Halton;
use crate::model::{AffineSystem, DerivativeChain};
use crate::symbolic::{
    CompiledPoly, CompiledRational, ExpansionGuard, Polynomial, SlotMap, Sym,
};

/// Default blowup guard on `|x|_inf`.
pub const BLOWUP_GUARD: f64 = 1e9;

/// One polynomial in `t` per input channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputSignal {
    channels: Vec<Polynomial>,
}

impl InputSignal {
    pub fn new(channels: Vec<Polynomial>) -> Result<Self> {
        for c in &channels {
            if c.symbols().iter().any(|s| *s != Sym::Time) {
                return Err(Error::Validation(
                    "input signals may only depend on t".into(),
                ));
            }
        }
        Ok(InputSignal { channels })
    }

    pub fn zero(m: usize) -> Self {
        InputSignal {
            channels: vec![Polynomial::zero(); m],
        }
    }

    pub fn channels(&self) -> &[Polynomial] {
        &self.channels
    }

    pub fn derivative(&self, order: usize) -> InputSignal {
        let mut channels = self.channels.clone();
        for _ in 0..order {
            channels = channels.iter().map(|c| c.differentiate(Sym::Time)).collect();
        }
        InputSignal { channels }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.channels
            .iter()
            .map(|c| c.eval_f64(&|_| t))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// `u[s][j][c]`: the `j`-th derivative of input `c` at sample `s`, for `j < order`
    /// (at least the input itself).
    pub u: Vec<Vec<Vec<f64>>>,
    /// `y[s][d][c]`: `H_d` evaluated at sample `s`, for `d <= order`.
    pub y: Vec<Vec<Vec<f64>>>,
    pub order: usize,
    /// Time at which `|x|_inf` exceeded the guard.
    pub truncated_at: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The stacked outputs `(y, y', .., y^(k))` at sample `s`.
    pub fn output_stack(&self, s: usize, k: usize) -> Vec<f64> {
        self.y[s][..=k].iter().flatten().copied().collect()
    }
}

/// Compiled vector field and derivative chain of an affine system.
pub struct Simulator {
    n: usize,
    m: usize,
    order: usize,
    f: Vec<CompiledPoly>,
    g: Vec<Vec<CompiledPoly>>,
    chain: Vec<Vec<CompiledPoly>>,
}

impl Simulator {
    /// Output derivatives are produced up to `order`.
    pub fn new(sys: &AffineSystem, order: usize, guard: &ExpansionGuard) -> Result<Self> {
        let n = sys.n();
        let m = sys.m();
        let states = SlotMap::new((0..n).map(Sym::state));
        let compile = |v: &[Polynomial], slots: &SlotMap| {
            v.iter()
                .map(|p| CompiledPoly::new(p, slots))
                .collect::<Result<Vec<_>>>()
        };
        let chain = DerivativeChain::for_affine(sys, order, guard)?;
        let slots = SlotMap::new(chain_slots(n, m, order));
        Ok(Simulator {
            n,
            m,
            order,
            f: compile(&sys.f, &states)?,
            g: sys
                .g
                .iter()
                .map(|col| compile(col, &states))
                .collect::<Result<_>>()?,
            chain: chain
                .levels()
                .iter()
                .map(|l| compile(l, &slots))
                .collect::<Result<_>>()?,
        })
    }

    fn field(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let mut v = self.f[i].eval(x);
                for (c, uc) in u.iter().enumerate() {
                    if *uc != 0.0 {
                        v += self.g[c][i].eval(x) * uc;
                    }
                }
                v
            })
            .collect()
    }

    fn sample(
        &self,
        x: &[f64],
        t: f64,
        derivs: &[InputSignal],
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let u: Vec<Vec<f64>> = derivs.iter().map(|d| d.eval(t)).collect();
        let mut slots = x.to_vec();
        for uj in u.iter().take(self.order.max(1)) {
            slots.extend(uj);
        }
        let y = self
            .chain
            .iter()
            .map(|l| l.iter().map(|p| p.eval(&slots)).collect())
            .collect();
        (u, y)
    }

    /// Classical RK4 with step `dt`; the last step is shortened to land on `t_final`.
    pub fn integrate(
        &self,
        x0: &[f64],
        input: &InputSignal,
        t_final: f64,
        dt: f64,
    ) -> Result<Trajectory> {
        if x0.len() != self.n {
            return Err(Error::Dimension(format!(
                "initial state has {} entries, expected {}",
                x0.len(),
                self.n
            )));
        }
        if input.channels().len() != self.m {
            return Err(Error::Dimension(format!(
                "{} input signals for {} inputs",
                input.channels().len(),
                self.m
            )));
        }
        if !(dt > 0.0) || !(t_final >= dt) {
            return Err(Error::Contract("need dt > 0 and t_final >= dt".into()));
        }
        let derivs: Vec<InputSignal> = (0..self.order.max(1)).map(|j| input.derivative(j)).collect();
        let steps = (t_final / dt - 1e-9).ceil() as usize;
        let mut traj = Trajectory {
            dt,
            times: Vec::with_capacity(steps + 1),
            x: Vec::with_capacity(steps + 1),
            u: Vec::with_capacity(steps + 1),
            y: Vec::with_capacity(steps + 1),
            order: self.order,
            truncated_at: None,
        };
        let mut x = x0.to_vec();
        let mut t = 0.0;
        for s in 0..=steps {
            let (u, y) = self.sample(&x, t, &derivs);
            traj.times.push(t);
            traj.x.push(x.clone());
            traj.u.push(u);
            traj.y.push(y);
            if s == steps {
                break;
            }
            let h = if s + 1 == steps { t_final - t } else { dt };
            let k1 = self.field(&x, &input.eval(t));
            let mid = |k: &[f64], a: f64| -> Vec<f64> {
                x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect()
            };
            let um = input.eval(t + h / 2.0);
            let k2 = self.field(&mid(&k1, h / 2.0), &um);
            let k3 = self.field(&mid(&k2, h / 2.0), &um);
            let k4 = self.field(&mid(&k3, h), &input.eval(t + h));
            for i in 0..self.n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            t = (s + 1) as f64 * dt;
            if s + 1 == steps {
                t = t_final;
            }
            if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_GUARD) {
                traj.truncated_at = Some(t);
                break;
            }
        }
        Ok(traj)
    }
}

fn chain_slots(n: usize, m: usize, order: usize) -> Vec<Sym> {
    let mut out: Vec<Sym> = (0..n).map(Sym::state).collect();
    for j in 0..order.max(1) {
        for c in 0..m {
            out.push(Sym::input(j, c));
        }
    }
    out
}

/// Simulates `x' = f(x) + G(x) u(t)` without output derivatives beyond `y`.
pub fn integrate(
    sys: &AffineSystem,
    x0: &[f64],
    input: &InputSignal,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    Simulator::new(sys, 0, &ExpansionGuard::default())?.integrate(x0, input, t_final, dt)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    /// `recovered[s][c]`.
    pub recovered: Vec<Vec<f64>>,
    /// Max over samples of `|u_rec - u| / (1 + |u|)`.
    pub max_relative_error: f64,
    pub singular_samples: Vec<usize>,
}

/// Evaluates the inverse at `(x(t), y^k(t))` along the trajectory.
pub fn recover_input(traj: &Trajectory, inv: &InverseMap) -> Result<Recovery> {
    if traj.order < inv.k_star {
        return Err(Error::Contract(format!(
            "trajectory carries output derivatives to order {}, inverse needs {}",
            traj.order, inv.k_star
        )));
    }
    let n = traj.x.first().map_or(0, Vec::len);
    let mut syms: Vec<Sym> = (0..n).map(Sym::state).collect();
    syms.extend(inv.output_symbols());
    let slots = SlotMap::new(syms);
    let compiled: Vec<CompiledRational> = inv
        .u
        .iter()
        .map(|e| CompiledRational::new(e, &slots))
        .collect::<Result<_>>()?;
    let mut out = Recovery {
        recovered: Vec::with_capacity(traj.len()),
        max_relative_error: 0.0,
        singular_samples: Vec::new(),
    };
    for s in 0..traj.len() {
        let mut values = traj.x[s].clone();
        values.extend(traj.output_stack(s, inv.k_star));
        let mut rec = Vec::with_capacity(compiled.len());
        let mut singular = false;
        for c in &compiled {
            let (v, d) = c.eval_parts(&values);
            if d.abs() < 1e-12 || !v.is_finite() {
                singular = true;
            }
            rec.push(v);
        }
        if singular {
            out.singular_samples.push(s);
            out.recovered.push(rec);
            continue;
        }
        let truth = &traj.u[s][0];
        let diff: Vec<f64> = rec.iter().zip(truth).map(|(a, b)| a - b).collect();
        let err = norm(&diff) / (1.0 + norm(truth));
        out.max_relative_error = out.max_relative_error.max(err);
        out.recovered.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundingCheck {
    pub checked: usize,
    /// `(t, |u|, bound)` for every failing sample.
    pub violations: Vec<(f64, f64, f64)>,
    /// First time the state left the sampling box; later samples are not checked.
    pub left_box_at: Option<f64>,
}

impl BoundingCheck {
    pub fn inconclusive(&self) -> bool {
        self.left_box_at.is_some()
    }
}

/// Checks `|u(t)| <= rho1(|x(t)|) + rho2(|y^k(t)|)` at every sample inside the box.
pub fn check_input_bounding(
    traj: &Trajectory,
    k_star: usize,
    bounds: &BoundEstimate,
) -> Result<BoundingCheck> {
    if traj.order < k_star {
        return Err(Error::Contract("trajectory lacks output derivatives".into()));
    }
    let mut out = BoundingCheck {
        checked: 0,
        violations: Vec::new(),
        left_box_at: None,
    };
    for s in 0..traj.len() {
        if !bounds.covers(&traj.x[s]) {
            out.left_box_at = Some(traj.times[s]);
            break;
        }
        let lhs = norm(&traj.u[s][0]);
        let rhs = bounds.input_bound(norm(&traj.x[s]), norm(&traj.output_stack(s, k_star)));
        out.checked += 1;
        if lhs > rhs * (1.0 + 1e-9) + 1e-12 {
            out.violations.push((traj.times[s], lhs, rhs));
        }
    }
    Ok(out)
}

/// `c * s^q` with `c >= 0`, `q >= 1`; `c = 0` stands for the zero function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PowerForm {
    pub c: BigRational,
    pub q: u32,
}

impl PowerForm {
    pub fn new(c: BigRational, q: u32) -> Result<Self> {
        if c.is_negative() || q == 0 {
            return Err(Error::Contract(
                "comparison functions need c >= 0 and q >= 1".into(),
            ));
        }
        Ok(PowerForm { c, q })
    }

    /// `c * |v|^q`, exact when `q` is even.
    fn exact_of_squared_norm(&self, sq: &BigRational) -> Option<BigRational> {
        self.q.is_multiple_of(2).then(|| &self.c * pow(sq, self.q / 2))
    }

    fn f64_of_norm(&self, r: f64) -> f64 {
        self.c.to_f64().unwrap_or(f64::NAN) * r.powi(self.q as i32)
    }
}

fn pow(b: &BigRational, e: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..e {
        acc = &acc * b;
    }
    acc
}

/// `dV/dx f(x, u_0) <= -alpha(|x|) + chi(|(H_0, .., H_N)|)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub v: Polynomial,
    pub alpha: PowerForm,
    pub chi: PowerForm,
    pub order: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateConfig {
    /// Sampling interval for every state and input-derivative coordinate.
    pub range: (BigRational, BigRational),
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dissipation {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`, exact when both comparison exponents are even.
    pub slack_exact: Option<BigRational>,
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateResult {
    pub passed: bool,
    pub samples: usize,
    pub worst_slack: f64,
    pub worst_point: Vec<BigRational>,
    /// First sample with negative slack.
    pub violation: Option<Vec<BigRational>>,
    pub exact: bool,
    pub warnings: Vec<String>,
}

/// Sample coordinates: the states, then `u_{j,c}` for `j < max(order, 1)`.
pub fn certificate_symbols(sys: &AffineSystem, order: usize) -> Vec<Sym> {
    chain_slots(sys.n(), sys.m(), order)
}

/// Both sides of the dissipation inequality at an exact point.
pub fn evaluate_dissipation(
    sys: &AffineSystem,
    chain: &DerivativeChain,
    cert: &Certificate,
    point: &[BigRational],
) -> Result<Dissipation> {
    let syms = certificate_symbols(sys, cert.order);
    if point.len() != syms.len() {
        return Err(Error::Dimension("sample point has the wrong length".into()));
    }
    let at: std::collections::BTreeMap<Sym, BigRational> =
        syms.iter().copied().zip(point.iter().cloned()).collect();
    let lifted = sys.lift();
    let mut lhs = BigRational::zero();
    for (i, fi) in lifted.f.iter().enumerate() {
        let dv = cert.v.differentiate(Sym::state(i));
        if dv.is_zero() {
            continue;
        }
        lhs += dv.evaluate(&at)? * fi.evaluate(&at)?;
    }
    let x_sq: BigRational = point[..sys.n()].iter().map(|v| v * v).sum();
    let mut y_sq = BigRational::zero();
    for level in chain.levels().iter().take(cert.order + 1) {
        for h in level {
            let v = h.evaluate(&at)?;
            y_sq += &v * &v;
        }
    }
    let lhs_f = lhs.to_f64().unwrap_or(f64::NAN);
    match (
        cert.alpha.exact_of_squared_norm(&x_sq),
        cert.chi.exact_of_squared_norm(&y_sq),
    ) {
        (Some(a), Some(c)) => {
            let rhs = c - a;
            let slack = &rhs - &lhs;
            Ok(Dissipation {
                lhs: lhs_f,
                rhs: rhs.to_f64().unwrap_or(f64::NAN),
                slack: slack.to_f64().unwrap_or(f64::NAN),
                slack_exact: Some(slack),
            })
        }
        _ => {
            let xn = x_sq.to_f64().unwrap_or(f64::NAN).sqrt();
            let yn = y_sq.to_f64().unwrap_or(f64::NAN).sqrt();
            let rhs = cert.chi.f64_of_norm(yn) - cert.alpha.f64_of_norm(xn);
            Ok(Dissipation {
                lhs: lhs_f,
                rhs,
                slack: rhs - lhs_f,
                slack_exact: None,
            })
        }
    }
}

fn scale_exact(h: &BigRational, lo: &BigRational, hi: &BigRational) -> BigRational {
    lo + (hi - lo) * h
}

/// Samples the dissipation inequality at exact low-discrepancy points. A negative
/// slack disproves the certificate on the box; passing is evidence only.
pub fn check_certificate(
    sys: &AffineSystem,
    cert: &Certificate,
    config: &CertificateConfig,
    guard: &ExpansionGuard,
) -> Result<CertificateResult> {
    let n = sys.n();
    let origin: std::collections::BTreeMap<Sym, BigRational> =
        (0..n).map(|i| (Sym::state(i), BigRational::zero())).collect();
    if !cert.v.evaluate(&origin)?.is_zero() {
        return Err(Error::Contract("V(0) must be 0".into()));
    }
    if cert.v.symbols().iter().any(|s| !matches!(s, Sym::State(i) if (*i as usize) < n)) {
        return Err(Error::Contract("V may only depend on the state".into()));
    }
    let chain = DerivativeChain::for_affine(sys, cert.order, guard)?;
    let dim = certificate_symbols(sys, cert.order).len();
    let (lo, hi) = &config.range;
    let exact = cert.alpha.q.is_multiple_of(2) && cert.chi.q.is_multiple_of(2);
    let mut halton = Halton::new(dim, config.seed);
    let mut out = CertificateResult {
        passed: true,
        samples: 0,
        worst_slack: f64::INFINITY,
        worst_point: Vec::new(),
        violation: None,
        exact,
        warnings: Vec::new(),
    };
    let mut worst_exact: Option<BigRational> = None;
    let mut positive_definite = true;
    let mut radial = true;
    for _ in 0..config.samples {
        let point: Vec<BigRational> = halton
            .next_exact()
            .iter()
            .map(|h| scale_exact(h, lo, hi))
            .collect();
        let d = evaluate_dissipation(sys, &chain, cert, &point)?;
        out.samples += 1;
        let worse = match (&d.slack_exact, &worst_exact) {
            (Some(s), Some(w)) => s < w,
            (Some(_), None) => true,
            (None, _) => d.slack < out.worst_slack,
        };
        if worse {
            out.worst_slack = d.slack;
            out.worst_point = point.clone();
            worst_exact = d.slack_exact.clone();
        }
        let negative = match &d.slack_exact {
            Some(s) => s.is_negative(),
            None => d.slack < 0.0,
        };
        if negative && out.violation.is_none() {
            out.passed = false;
            out.violation = Some(point.clone());
        }

        let x: std::collections::BTreeMap<Sym, BigRational> = point[..n]
            .iter()
            .enumerate()
            .map(|(i, v)| (Sym::state(i), v.clone()))
            .collect();
        if x.values().any(|v| !v.is_zero()) && !cert.v.evaluate(&x)?.is_positive() {
            positive_definite = false;
        }
        // push the state to the box boundary along its own direction
        let peak = point[..n]
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(BigRational::zero);
        if !peak.is_zero() {
            let edge = lo.abs().min(hi.abs());
            if !edge.is_zero() {
                let scale = &edge / &peak;
                let outer: std::collections::BTreeMap<Sym, BigRational> = x
                    .iter()
                    .map(|(s, v)| (*s, v * &scale))
                    .collect();
                let inner: std::collections::BTreeMap<Sym, BigRational> = outer
                    .iter()
                    .map(|(s, v)| (*s, v / BigRational::from_integer(2.into())))
                    .collect();
                if cert.v.evaluate(&outer)? < cert.v.evaluate(&inner)? {
                    radial = false;
                }
            }
        }
    }
    if !positive_definite {
        out.warnings
            .push("V is not positive at every nonzero sampled state".into());
    }
    if !radial {
        out.warnings
            .push("V does not grow towards the box boundary at every sample".into());
    }
    if out.samples == 0 {
        out.worst_slack = 0.0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_system, parse_time_polynomial};
    use crate::symbolic::rat;

    const DECAY: &str = "affine\nstates: x\ninputs: 1\nf: [-x]\ng1: [0]\nh: [x]\n";

    #[test]
    fn exponential_decay_endpoint() {
        let sys = parse_system(DECAY).unwrap();
        let traj = integrate(&sys, &[1.0], &InputSignal::zero(1), 1.0, 0.1).unwrap();
        let end = traj.x.last().unwrap()[0];
        assert!((end - (-1.0f64).exp()).abs() < 1e-5);
        assert_eq!(traj.len(), 11);
        assert!((traj.times[10] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rk4_error_ratio() {
        let sys = parse_system(DECAY).unwrap();
        let err = |dt: f64| {
            let traj = integrate(&sys, &[1.0], &InputSignal::zero(1), 1.0, dt).unwrap();
            (traj.x.last().unwrap()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn equilibrium_stays_put() {
        let sys = parse_system(include_str!("../../../corpus/example1.sys")).unwrap();
        let traj = integrate(&sys, &[0.0; 4], &InputSignal::zero(2), 1.0, 0.01).unwrap();
        assert!(traj.x.iter().flatten().all(|v| *v == 0.0));
        assert!(traj.y.iter().flatten().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn blowup_is_flagged() {
        let sys =
            parse_system("affine\nstates: x\ninputs: 1\nf: [x^2]\ng1: [0]\nh: [x]\n").unwrap();
        let traj = integrate(&sys, &[1.0], &InputSignal::zero(1), 2.0, 1e-3).unwrap();
        let t = traj.truncated_at.unwrap();
        assert!(t > 0.9 && t < 1.01, "{t}");
    }

    #[test]
    fn input_signal_derivatives() {
        let u = InputSignal::new(vec![
            parse_time_polynomial("1 + t").unwrap(),
            parse_time_polynomial("t^2").unwrap(),
        ])
        .unwrap();
        assert_eq!(u.eval(2.0), vec![3.0, 4.0]);
        assert_eq!(u.derivative(1).eval(2.0), vec![1.0, 4.0]);
        assert_eq!(u.derivative(3).eval(2.0), vec![0.0, 0.0]);
        assert!(InputSignal::new(vec![Polynomial::var(Sym::state(0))]).is_err());
    }

    fn decay_cert(alpha: (i64, u32), chi: (i64, u32)) -> Certificate {
        let x = Polynomial::var(Sym::state(0));
        Certificate {
            v: &x * &x,
            alpha: PowerForm::new(rat(alpha.0, 1), alpha.1).unwrap(),
            chi: PowerForm::new(rat(chi.0, 1), chi.1).unwrap(),
            order: 0,
        }
    }

    #[test]
    fn decay_certificate_passes() {
        let sys = parse_system(DECAY).unwrap();
        let config = CertificateConfig {
            range: (rat(-10, 1), rat(10, 1)),
            samples: 200,
            seed: 0,
        };
        let r = check_certificate(&sys, &decay_cert((1, 2), (2, 2)), &config, &Default::default())
            .unwrap();
        assert!(r.passed);
        assert!(r.exact);
        // the first sample sits at x = 0
        assert_eq!(r.worst_slack, 0.0);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn falsified_certificate_reproduces() {
        let sys = parse_system(DECAY).unwrap();
        let config = CertificateConfig {
            range: (rat(-10, 1), rat(10, 1)),
            samples: 50,
            seed: 0,
        };
        let x = Polynomial::var(Sym::state(0));
        let cert = Certificate {
            v: &x * &x,
            alpha: PowerForm::new(rat(3, 1), 2).unwrap(),
            chi: PowerForm::new(rat(0, 1), 2).unwrap(),
            order: 0,
        };
        let r = check_certificate(&sys, &cert, &config, &Default::default()).unwrap();
        assert!(!r.passed);
        let p = r.violation.unwrap();
        let chain = DerivativeChain::for_affine(&sys, 0, &Default::default()).unwrap();
        let d = evaluate_dissipation(&sys, &chain, &cert, &p).unwrap();
        assert!(d.slack_exact.unwrap().is_negative());
    }
}
