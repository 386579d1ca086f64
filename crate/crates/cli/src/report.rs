//! Serializable analysis reports. Expressions are stored as canonical strings.

use oistab::inversion::{BoundEstimate, InverseMap, RoundTrip};
use oistab::model::AffineSystem;
use oistab::structure::{Mode, ModePolicy, Outcome, StructureReport, StructureStep};
use oistab::symbolic::{RationalFn, SymMatrix, SymbolNames};
use serde::{Deserialize, Serialize};

pub type Matrix = Vec<Vec<String>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub system: SystemEcho,
    pub steps: Vec<StepRecord>,
    pub outcome: OutcomeRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<InverseRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationRecord>,
    pub meta: Meta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemEcho {
    pub name: String,
    pub source: String,
    pub states: Vec<String>,
    pub inputs: usize,
    pub outputs: usize,
    pub f: Vec<String>,
    pub g: Matrix,
    pub h: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub rank: usize,
    pub mode: String,
    #[serde(rename = "Jhat", default, skip_serializing_if = "Option::is_none")]
    pub jhat: Option<Matrix>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<usize>>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Matrix>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pivot_rows: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pivot_cols: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pivot_minor: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub locus: Vec<String>,
    #[serde(rename = "Mbar", default, skip_serializing_if = "Option::is_none")]
    pub mbar: Option<Matrix>,
    #[serde(rename = "Mhat", default, skip_serializing_if = "Option::is_none")]
    pub mhat: Option<Matrix>,
    pub zbar: Vec<String>,
    pub zhat: Vec<String>,
    pub hbar: Vec<String>,
    pub hhat: Vec<String>,
    #[serde(rename = "Jbar")]
    pub jbar: Matrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumption1_violations: Vec<ViolationRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub row: usize,
    pub input: usize,
    pub lie_derivative: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutcomeKind {
    Terminated {
        k_star: usize,
    },
    IterationCap {
        max_k: usize,
    },
    Assumption2Violation {
        step: usize,
        locus: Vec<String>,
        rank_candidates: Vec<usize>,
    },
    Assumption1Violation {
        step: usize,
        violations: Vec<ViolationRecord>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    #[serde(flatten)]
    pub kind: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singh_activated_at: Option<usize>,
    pub exit_code: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseRecord {
    pub k_star: usize,
    pub mode: String,
    pub y_stack: Vec<String>,
    pub u: Vec<String>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<String>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Matrix>,
    pub polynomial_in_y: bool,
    pub round_trip_identity: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub round_trip_residuals: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsRecord {
    pub norm: String,
    #[serde(rename = "box")]
    pub state_box: Vec<[f64; 2]>,
    pub samples: usize,
    pub skipped: usize,
    pub seed: u64,
    pub b_norm: f64,
    pub radius_grid: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointwise: Option<PointwiseRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseRecord {
    pub checked: usize,
    pub violations: usize,
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_bounding: Option<BoundingRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub x0: Vec<f64>,
    pub inputs: Vec<String>,
    pub dt: f64,
    pub t_final: f64,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_at: Option<f64>,
    pub max_relative_error: f64,
    pub tol: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub singular_samples: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingRecord {
    pub checked: usize,
    pub violations: usize,
    /// `(t, |u|, bound)` of the first few violations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub first_violations: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_box_at: Option<f64>,
    pub inconclusive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    #[serde(rename = "V")]
    pub v: String,
    pub alpha: String,
    pub chi: String,
    pub order: usize,
    pub range: [String; 2],
    pub coordinates: Vec<String>,
    pub samples: usize,
    pub exact: bool,
    pub passed: bool,
    pub worst_slack: f64,
    pub worst_point: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub config: ConfigEcho,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub mode: String,
    pub strict: bool,
    pub max_iter: usize,
    pub max_terms: usize,
    pub matrix_norm: String,
}

pub fn exprs(v: &[RationalFn], names: &SymbolNames) -> Vec<String> {
    v.iter().map(|e| e.fmt_with(names)).collect()
}

pub fn matrix(m: &SymMatrix, names: &SymbolNames) -> Matrix {
    m.to_strings(names)
}

pub fn mode_name(m: Mode) -> String {
    match m {
        Mode::Affine => "affine".into(),
        Mode::Singh => "singh".into(),
    }
}

pub fn policy_name(p: ModePolicy) -> String {
    match p {
        ModePolicy::Auto => "auto".into(),
        ModePolicy::AffineOnly => "affine-only".into(),
    }
}

pub fn system_echo(sys: &AffineSystem, source: &str, warnings: Vec<String>) -> SystemEcho {
    let names = &sys.names;
    let polys = |v: &[oistab::symbolic::Polynomial]| v.iter().map(|p| p.fmt_with(names)).collect();
    SystemEcho {
        name: sys.label(),
        source: source.to_string(),
        states: names.states().to_vec(),
        inputs: sys.m(),
        outputs: sys.p(),
        f: polys(&sys.f),
        g: sys.g.iter().map(|c| polys(c)).collect(),
        h: polys(&sys.h),
        warnings,
    }
}

fn violation_record(v: &oistab::structure::A1Violation, names: &SymbolNames) -> ViolationRecord {
    ViolationRecord {
        row: v.row,
        input: v.input,
        lie_derivative: v.expression.fmt_with(names),
        coefficients: v.coefficients.as_ref().map(|c| exprs(c, names)),
    }
}

pub fn step_record(s: &StructureStep, names: &SymbolNames) -> StepRecord {
    let t = s.transition.as_ref();
    StepRecord {
        k: s.k,
        rank: s.rank,
        mode: mode_name(s.mode),
        jhat: t.map(|t| matrix(&t.jhat, names)),
        e: t.map(|t| t.e.clone()),
        f: t.map(|t| matrix(&t.f, names)),
        r: t.map(|t| matrix(&t.r, names)),
        pivot_rows: t.map(|t| t.witness.pivot_rows.clone()),
        pivot_cols: t.map(|t| t.witness.pivot_cols.clone()),
        pivot_minor: t.map(|t| t.witness.pivot_minor.fmt_with(names)),
        locus: t
            .map(|t| t.witness.locus.iter().map(|p| p.fmt_with(names)).collect())
            .unwrap_or_default(),
        mbar: s.mbar.as_ref().map(|m| matrix(m, names)),
        mhat: s.mhat.as_ref().map(|m| matrix(m, names)),
        zbar: exprs(&s.zbar, names),
        zhat: exprs(&s.zhat, names),
        hbar: exprs(&s.hbar, names),
        hhat: exprs(&s.hhat, names),
        jbar: matrix(&s.jbar, names),
        assumption1_violations: s
            .a1_violations
            .iter()
            .map(|v| violation_record(v, names))
            .collect(),
    }
}

/// Exit status: 0 terminated, 2 Assumption 2, 3 iteration cap, 4 Assumption 1.
pub fn outcome_exit_code(o: &Outcome) -> i32 {
    match o {
        Outcome::Terminated { .. } => 0,
        Outcome::Assumption2Violation { .. } => 2,
        Outcome::IterationCap { .. } => 3,
        Outcome::Assumption1Violation { .. } => 4,
    }
}

pub fn outcome_record(rep: &StructureReport, names: &SymbolNames) -> OutcomeRecord {
    let kind = match &rep.outcome {
        Outcome::Terminated { k_star } => OutcomeKind::Terminated { k_star: *k_star },
        Outcome::IterationCap { max_k } => OutcomeKind::IterationCap { max_k: *max_k },
        Outcome::Assumption2Violation {
            step,
            locus,
            rank_candidates,
        } => OutcomeKind::Assumption2Violation {
            step: *step,
            locus: locus.iter().map(|p| p.fmt_with(names)).collect(),
            rank_candidates: rank_candidates.clone(),
        },
        Outcome::Assumption1Violation { step, violations } => OutcomeKind::Assumption1Violation {
            step: *step,
            violations: violations
                .iter()
                .map(|v| violation_record(v, names))
                .collect(),
        },
    };
    OutcomeRecord {
        kind,
        singh_activated_at: rep.singh_activated_at,
        exit_code: outcome_exit_code(&rep.outcome),
    }
}

pub fn inverse_record(inv: &InverseMap, rt: &RoundTrip, names: &SymbolNames) -> InverseRecord {
    InverseRecord {
        k_star: inv.k_star,
        mode: mode_name(inv.mode),
        y_stack: inv.output_symbols().iter().map(|&s| names.name(s)).collect(),
        u: exprs(&inv.u, names),
        a: inv.a.as_ref().map(|a| exprs(a, names)),
        b: inv.b.as_ref().map(|b| matrix(b, names)),
        polynomial_in_y: inv.polynomial_in_y,
        round_trip_identity: rt.identity,
        round_trip_residuals: if rt.identity {
            Vec::new()
        } else {
            exprs(&rt.residuals, names)
        },
    }
}

pub fn bounds_record(b: &BoundEstimate) -> BoundsRecord {
    BoundsRecord {
        norm: "frobenius".into(),
        state_box: b.state_box.iter().map(|&(lo, hi)| [lo, hi]).collect(),
        samples: b.sample_count,
        skipped: b.skipped,
        seed: b.seed,
        b_norm: b.b_norm,
        radius_grid: b.radius_grid.clone(),
        gamma1: b.gamma1.clone(),
        gamma2: b.gamma2.clone(),
        rho1: b.rho1.clone(),
        rho2: b.rho2.clone(),
        pointwise: None,
    }
}
