//! Command pipelines. Each returns a report plus an exit status; nothing here
//! prints.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_rational::BigRational;
use oistab::inversion::{
    build_inverse, check_bounds_pointwise, estimate_bounds, verify_inverse_symbolic,
    BoundConfig, BoundEstimate, InverseMap,
};
use oistab::linear::random_linear;
use oistab::model::AffineSystem;
use oistab::parse::{parse_system, parse_time_polynomial, parse_with_names, write_system};
use oistab::structure::{run, ModePolicy, StructureConfig, StructureReport};
use oistab::symbolic::{fmt_rational, ExpansionGuard};
use oistab::verify::{
    certificate_symbols, check_certificate, check_input_bounding, recover_input, Certificate,
    CertificateConfig, InputSignal, PowerForm, Simulator,
};

use crate::report::{
    bounds_record, inverse_record, outcome_record, policy_name, step_record, system_echo,
    BoundingRecord, CertificateRecord, ConfigEcho, Meta, PointwiseRecord, Report,
    SimulationRecord, VerificationRecord,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 5;

/// A run that produced no report: parse errors, validation errors, resource
/// limits and bad flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn fail(e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_ERROR, e.to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundOptions {
    /// Half-width of the symmetric state box.
    pub half_width: f64,
    pub samples: usize,
    pub seed: u64,
    pub grid_points: usize,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            half_width: 4.0,
            samples: 10_000,
            seed: 0,
            grid_points: 17,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzeOptions {
    pub policy: ModePolicy,
    pub strict: bool,
    pub max_iter: Option<usize>,
    pub bounds: Option<BoundOptions>,
    pub guard: ExpansionGuard,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            policy: ModePolicy::Auto,
            strict: true,
            max_iter: None,
            bounds: None,
            guard: ExpansionGuard::default(),
        }
    }
}

impl AnalyzeOptions {
    fn structure_config(&self) -> StructureConfig {
        StructureConfig {
            policy: self.policy,
            strict: self.strict,
            max_iter: self.max_iter,
            guard: self.guard,
            ..StructureConfig::default()
        }
    }
}

/// Everything an analysis produced, kept alongside the report for the
/// follow-up commands.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub system: AffineSystem,
    pub structure: StructureReport,
    pub inverse: Option<InverseMap>,
    pub bounds: Option<BoundEstimate>,
    pub report: Report,
    /// Diagnostics for standard error.
    pub notes: Vec<String>,
}

impl Analysis {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code()
    }
}

impl Report {
    /// Outcome status, raised to 5 when a verification section failed.
    pub fn exit_code(&self) -> i32 {
        let base = self.outcome.exit_code;
        let failed = self.verification.as_ref().is_some_and(|v| {
            v.simulation.as_ref().is_some_and(|s| !s.passed)
                || v.input_bounding.as_ref().is_some_and(|b| b.violations > 0)
                || v.certificate.as_ref().is_some_and(|c| !c.passed)
        });
        if failed {
            EXIT_VERIFICATION
        } else {
            base
        }
    }
}

pub fn source_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn analyze_text(text: &str, source: &str, opts: &AnalyzeOptions) -> Result<Analysis, Failure> {
    let sys = parse_system(text).map_err(|e| fail(format!("{source}:{e}")))?;
    let warnings = sys
        .validate()
        .into_result()
        .map_err(|e| fail(format!("{source}: {e}")))?;
    let config = opts.structure_config();
    let structure = run(&sys, &config).map_err(|e| fail(format!("{source}: {e}")))?;
    let names = &sys.names;
    let mut notes = Vec::new();

    let mut inverse = None;
    let mut inverse_rec = None;
    if structure.k_star().is_some() {
        let inv = build_inverse(&structure, &sys).map_err(|e| fail(format!("{source}: {e}")))?;
        let rt = verify_inverse_symbolic(&inv, &sys, &opts.guard)
            .map_err(|e| fail(format!("{source}: {e}")))?;
        inverse_rec = Some(inverse_record(&inv, &rt, names));
        inverse = Some(inv);
    }

    let mut bounds = None;
    let mut bounds_rec = None;
    if let (Some(bo), Some(inv)) = (&opts.bounds, &inverse) {
        if inv.a.is_none() {
            notes.push(format!(
                "{source}: bounds skipped, the inverse is not affine in the output derivatives"
            ));
        } else {
            let mut cfg = BoundConfig::symmetric(sys.n(), bo.half_width, bo.grid_points, bo.samples);
            cfg.seed = bo.seed;
            let est = estimate_bounds(inv, sys.n(), &cfg).map_err(|e| fail(format!("{source}: {e}")))?;
            let pw = check_bounds_pointwise(
                inv,
                &sys,
                &est,
                (-bo.half_width, bo.half_width),
                bo.samples,
                &opts.guard,
            )
            .map_err(|e| fail(format!("{source}: {e}")))?;
            let mut rec = bounds_record(&est);
            rec.pointwise = Some(PointwiseRecord {
                checked: pw.checked,
                violations: pw.violations.len(),
                worst_ratio: finite(pw.worst_ratio),
            });
            bounds_rec = Some(rec);
            bounds = Some(est);
        }
    }

    let report = Report {
        system: system_echo(&sys, source, warnings),
        steps: structure.steps.iter().map(|s| step_record(s, names)).collect(),
        outcome: outcome_record(&structure, names),
        inverse: inverse_rec,
        bounds: bounds_rec,
        verification: None,
        meta: meta(&structure, &opts.guard),
    };
    Ok(Analysis {
        system: sys,
        structure,
        inverse,
        bounds,
        report,
        notes,
    })
}

fn meta(structure: &StructureReport, guard: &ExpansionGuard) -> Meta {
    Meta {
        tool: "oistab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: ConfigEcho {
            mode: policy_name(structure.policy),
            strict: structure.strict,
            max_iter: structure.max_iter,
            max_terms: guard.max_terms,
            matrix_norm: "frobenius".into(),
        },
    }
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::MAX.copysign(v)
    }
}

pub fn analyze_file(path: &Path, opts: &AnalyzeOptions) -> Result<Analysis, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(format!("{}: {e}", path.display())))?;
    analyze_text(&text, &source_name(path), opts)
}

/// Expands directories to their `.sys` files (non-recursive) and sorts the result.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| fail(format!("{}: {e}", p.display())))?;
            for entry in entries {
                let path = entry.map_err(fail)?.path();
                if path.is_file() && path.extension().is_some_and(|e| e == "sys") {
                    out.push(path);
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(fail("no system files given"));
    }
    Ok(out)
}

/// Analyzes files on a small worker pool; results come back in input order.
pub fn analyze_many(paths: &[PathBuf], opts: &AnalyzeOptions) -> Vec<Result<Analysis, Failure>> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(paths.len())
        .max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Analysis, Failure>>>> =
        paths.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= paths.len() {
                    break;
                }
                let r = analyze_file(&paths[i], opts);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateOptions {
    pub x0: Vec<f64>,
    /// Polynomials in `t`, one per input channel; missing channels are zero.
    pub inputs: Vec<(usize, String)>,
    pub dt: f64,
    pub t_final: f64,
    pub tol: f64,
    pub bounds: Option<BoundOptions>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            x0: Vec::new(),
            inputs: Vec::new(),
            dt: 1e-3,
            t_final: 1.0,
            tol: 1e-6,
            bounds: None,
        }
    }
}

/// Analysis, then integration and input recovery. Fails with the analysis exit
/// code when no inverse is available.
pub fn simulate_text(
    text: &str,
    source: &str,
    analyze: &AnalyzeOptions,
    sim: &SimulateOptions,
) -> Result<Analysis, Failure> {
    let mut opts = analyze.clone();
    opts.bounds = sim.bounds.clone();
    let mut a = analyze_text(text, source, &opts)?;
    let Some(inv) = a.inverse.clone() else {
        return Err(Failure::new(
            a.report.outcome.exit_code.max(EXIT_ERROR),
            format!(
                "{source}: {} ({})",
                oistab::Error::InversionUnavailable,
                a.structure.outcome.kind()
            ),
        ));
    };
    let n = a.system.n();
    let m = a.system.m();
    let x0 = if sim.x0.is_empty() {
        vec![0.0; n]
    } else {
        sim.x0.clone()
    };
    if x0.len() != n {
        return Err(fail(format!("--x0 has {} entries, the system has {n} states", x0.len())));
    }
    let mut channels = vec![String::from("0"); m];
    for (i, expr) in &sim.inputs {
        if *i == 0 || *i > m {
            return Err(fail(format!("--u{i}: the system has {m} inputs")));
        }
        channels[i - 1] = expr.clone();
    }
    let polys = channels
        .iter()
        .enumerate()
        .map(|(i, e)| parse_time_polynomial(e).map_err(|err| fail(format!("--u{}: {err}", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    let signal = InputSignal::new(polys).map_err(fail)?;
    if !(sim.dt > 0.0 && sim.t_final >= 0.0) {
        return Err(fail("--dt must be positive and --t-final non-negative"));
    }
    let simulator = Simulator::new(&a.system, inv.k_star, &analyze.guard).map_err(fail)?;
    let traj = simulator
        .integrate(&x0, &signal, sim.t_final, sim.dt)
        .map_err(fail)?;
    let rec = recover_input(&traj, &inv).map_err(fail)?;
    let max_err = finite(rec.max_relative_error);
    let simulation = SimulationRecord {
        x0,
        inputs: channels,
        dt: sim.dt,
        t_final: sim.t_final,
        samples: traj.len(),
        truncated_at: traj.truncated_at,
        max_relative_error: max_err,
        tol: sim.tol,
        passed: rec.max_relative_error <= sim.tol && traj.truncated_at.is_none(),
        singular_samples: rec.singular_samples.clone(),
    };
    if traj.truncated_at.is_some() {
        a.notes.push(format!("{source}: trajectory left the safe region and was truncated"));
    }
    let input_bounding = match &a.bounds {
        Some(b) => {
            let check = check_input_bounding(&traj, inv.k_star, b).map_err(fail)?;
            if check.inconclusive() {
                a.notes.push(format!(
                    "{source}: trajectory left the bound box, later samples are inconclusive"
                ));
            }
            Some(BoundingRecord {
                checked: check.checked,
                violations: check.violations.len(),
                first_violations: check
                    .violations
                    .iter()
                    .take(5)
                    .map(|&(t, l, r)| [t, l, r])
                    .collect(),
                left_box_at: check.left_box_at,
                inconclusive: check.inconclusive(),
            })
        }
        None => None,
    };
    a.report.verification = Some(VerificationRecord {
        simulation: Some(simulation),
        input_bounding,
        certificate: None,
    });
    Ok(a)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyOptions {
    pub v: String,
    pub alpha: String,
    pub chi: String,
    pub order: usize,
    pub range: String,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            v: String::new(),
            alpha: String::new(),
            chi: String::new(),
            order: 0,
            range: "-10,10".into(),
            samples: 1000,
            seed: 0,
        }
    }
}

/// Integers, `p/q` or decimals (converted exactly).
pub fn parse_rational(text: &str) -> Result<BigRational, Failure> {
    let t = text.trim();
    if let Ok(q) = BigRational::from_str(t) {
        return Ok(q);
    }
    let bad = || fail(format!("not a rational number: {text:?}"));
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int, frac) = body.split_once('.').ok_or_else(bad)?;
    if int.is_empty() && frac.is_empty()
        || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let num = num_bigint_from(&digits).ok_or_else(bad)?;
    let den = num_bigint_from(&format!("1{}", "0".repeat(frac.len()))).ok_or_else(bad)?;
    let q = BigRational::new(num, den);
    Ok(if neg { -q } else { q })
}

fn num_bigint_from(digits: &str) -> Option<num_bigint::BigInt> {
    num_bigint::BigInt::from_str(if digits.is_empty() { "0" } else { digits }).ok()
}

fn split_pair(text: &str, flag: &str) -> Result<(String, String), Failure> {
    let parts: Vec<&str> = text.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok((a.trim().to_string(), b.trim().to_string())),
        _ => Err(fail(format!("{flag} expects two comma-separated values, got {text:?}"))),
    }
}

pub fn parse_power_form(text: &str, flag: &str) -> Result<PowerForm, Failure> {
    let (c, q) = split_pair(text, flag)?;
    let c = parse_rational(&c)?;
    let q: u32 = q
        .parse()
        .map_err(|_| fail(format!("{flag}: exponent must be a positive integer")))?;
    PowerForm::new(c, q).map_err(|e| fail(format!("{flag}: {e}")))
}

fn power_string(p: &PowerForm) -> String {
    format!("{}*s^{}", fmt_rational(&p.c), p.q)
}

/// Analysis plus a sampled check of a dissipation certificate. The exit code
/// reflects only the certificate: 0 when every sample passes, 5 otherwise.
pub fn certify_text(
    text: &str,
    source: &str,
    analyze: &AnalyzeOptions,
    cert: &CertifyOptions,
) -> Result<Analysis, Failure> {
    let mut a = analyze_text(text, source, analyze)?;
    let sys = &a.system;
    let v = parse_with_names(&cert.v, &sys.names).map_err(|e| fail(format!("--V: {e}")))?;
    let alpha = parse_power_form(&cert.alpha, "--alpha")?;
    let chi = parse_power_form(&cert.chi, "--chi")?;
    let (lo, hi) = split_pair(&cert.range, "--box")?;
    let (lo, hi) = (parse_rational(&lo)?, parse_rational(&hi)?);
    if lo >= hi {
        return Err(fail("--box needs lo < hi"));
    }
    let certificate = Certificate {
        v,
        alpha,
        chi,
        order: cert.order,
    };
    let config = CertificateConfig {
        range: (lo.clone(), hi.clone()),
        samples: cert.samples,
        seed: cert.seed,
    };
    let res = check_certificate(sys, &certificate, &config, &analyze.guard).map_err(fail)?;
    let names = &sys.names;
    let point = |p: &[BigRational]| p.iter().map(fmt_rational).collect::<Vec<_>>();
    let record = CertificateRecord {
        v: certificate.v.fmt_with(names),
        alpha: power_string(&certificate.alpha),
        chi: power_string(&certificate.chi),
        order: cert.order,
        range: [fmt_rational(&lo), fmt_rational(&hi)],
        coordinates: certificate_symbols(sys, cert.order)
            .into_iter()
            .map(|s| names.name(s))
            .collect(),
        samples: res.samples,
        exact: res.exact,
        passed: res.passed,
        worst_slack: finite(res.worst_slack),
        worst_point: point(&res.worst_point),
        violation: res.violation.as_deref().map(point),
        warnings: res.warnings.clone(),
    };
    a.report.verification = Some(VerificationRecord {
        certificate: Some(record),
        ..VerificationRecord::default()
    });
    Ok(a)
}

impl Analysis {
    /// Certificate runs report only the certificate verdict.
    pub fn certify_exit_code(&self) -> i32 {
        match self
            .report
            .verification
            .as_ref()
            .and_then(|v| v.certificate.as_ref())
        {
            Some(c) if c.passed => EXIT_OK,
            Some(_) => EXIT_VERIFICATION,
            None => self.exit_code(),
        }
    }
}

/// A seeded random linear system in the system-file format.
pub fn gen_linear(seed: u64, states: usize, inputs: usize, name: Option<String>) -> Result<String, Failure> {
    if states == 0 || inputs == 0 || inputs > states {
        return Err(fail("need 1 <= inputs <= states"));
    }
    let data = random_linear(seed, states, inputs);
    let sys = data.to_system(name);
    Ok(format!(
        "# random linear system, seed {seed}\n{}",
        write_system(&sys)
    ))
}
