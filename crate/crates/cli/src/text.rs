//! Human-readable rendering of a report, one block per step.

use std::fmt::Write;

use crate::report::{Matrix, OutcomeKind, Report, StepRecord};

fn vector(v: &[String]) -> String {
    format!("({})", v.join(", "))
}

fn matrix(m: &Matrix) -> String {
    let rows: Vec<String> = m.iter().map(|r| format!("[{}]", r.join(", "))).collect();
    format!("[{}]", rows.join(", "))
}

fn step(out: &mut String, s: &StepRecord) {
    let k = s.k;
    let _ = writeln!(out, "step {k}: r_{k} = {}, mode {}", s.rank, s.mode);
    if let (Some(jhat), Some(e), Some(f), Some(r)) = (&s.jhat, &s.e, &s.f, &s.r) {
        let prev = k - 1;
        let _ = writeln!(out, "  Jhat_{prev} = {}", matrix(jhat));
        if let Some(minor) = &s.pivot_minor {
            let _ = writeln!(out, "  pivot minor = {minor}");
        }
        let _ = writeln!(out, "  E_{prev} = {:?}", e);
        let _ = writeln!(out, "  F_{prev} = {}", matrix(f));
        let _ = writeln!(out, "  R_{prev} = {}", matrix(r));
    }
    if !s.locus.is_empty() {
        let _ = writeln!(out, "  rank drops where {} = 0", s.locus.join(" * "));
    }
    let _ = writeln!(out, "  zbar_{k} = {}", vector(&s.zbar));
    let _ = writeln!(out, "  zhat_{k} = {}", vector(&s.zhat));
    if let (Some(mb), Some(mh)) = (&s.mbar, &s.mhat) {
        let _ = writeln!(out, "  Mbar_{k} = {}", matrix(mb));
        let _ = writeln!(out, "  Mhat_{k} = {}", matrix(mh));
    }
    let _ = writeln!(out, "  hbar_{k} = {}", vector(&s.hbar));
    let _ = writeln!(out, "  hhat_{k} = {}", vector(&s.hhat));
    let _ = writeln!(out, "  Jbar_{k} = {}", matrix(&s.jbar));
    for v in &s.assumption1_violations {
        let _ = writeln!(
            out,
            "  row {} depends on u{}: {}",
            v.row, v.input + 1, v.lie_derivative
        );
    }
}

pub fn render(report: &Report) -> String {
    let mut out = String::new();
    let sys = &report.system;
    let _ = writeln!(
        out,
        "system {} ({}): n = {}, m = {}, p = {}",
        sys.name,
        sys.source,
        sys.states.len(),
        sys.inputs,
        sys.outputs
    );
    for w in &sys.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    for s in &report.steps {
        step(&mut out, s);
    }
    let o = &report.outcome;
    let line = match &o.kind {
        OutcomeKind::Terminated { k_star } => format!("terminated, k* = {k_star}"),
        OutcomeKind::IterationCap { max_k } => {
            format!("no termination within {max_k} iterations")
        }
        OutcomeKind::Assumption2Violation {
            step,
            locus,
            rank_candidates,
        } => format!(
            "Assumption 2 fails at step {step}: rank {:?} depending on {}",
            rank_candidates,
            locus.join(", ")
        ),
        OutcomeKind::Assumption1Violation { step, violations } => format!(
            "Assumption 1 fails at step {step} ({} entries depend on u)",
            violations.len()
        ),
    };
    let _ = writeln!(out, "outcome: {line} [exit {}]", o.exit_code);
    if let Some(k) = o.singh_activated_at {
        let _ = writeln!(out, "Singh's modification from step {k}");
    }
    if let Some(inv) = &report.inverse {
        let _ = writeln!(out, "inverse ({} mode, Y = {}):", inv.mode, vector(&inv.y_stack));
        for (i, u) in inv.u.iter().enumerate() {
            let _ = writeln!(out, "  u{} = {u}", i + 1);
        }
        if let (Some(a), Some(b)) = (&inv.a, &inv.b) {
            let _ = writeln!(out, "  A = {}", vector(a));
            let _ = writeln!(out, "  B = {}", matrix(b));
        }
        let _ = writeln!(
            out,
            "  polynomial in Y: {}, round trip: {}",
            inv.polynomial_in_y,
            if inv.round_trip_identity { "identity" } else { "FAILED" }
        );
    }
    if let Some(b) = &report.bounds {
        let _ = writeln!(
            out,
            "bounds on box of {} states, {} samples ({} skipped), |B(0)| = {}",
            b.state_box.len(),
            b.samples,
            b.skipped,
            b.b_norm
        );
        for (i, r) in b.radius_grid.iter().enumerate() {
            let _ = writeln!(
                out,
                "  s = {r:.4}: gamma1 = {:.6}, gamma2 = {:.6}, rho1 = {:.6}, rho2 = {:.6}",
                b.gamma1[i], b.gamma2[i], b.rho1[i], b.rho2[i]
            );
        }
        if let Some(p) = &b.pointwise {
            let _ = writeln!(
                out,
                "  pointwise: {} checked, {} violations, worst ratio {:.6}",
                p.checked, p.violations, p.worst_ratio
            );
        }
    }
    if let Some(v) = &report.verification {
        if let Some(s) = &v.simulation {
            let _ = writeln!(
                out,
                "simulation: {} samples, dt = {}, max relative error {:e} (tol {:e}) {}",
                s.samples,
                s.dt,
                s.max_relative_error,
                s.tol,
                if s.passed { "PASS" } else { "FAIL" }
            );
        }
        if let Some(b) = &v.input_bounding {
            let _ = writeln!(
                out,
                "input bounding: {} checked, {} violations{}",
                b.checked,
                b.violations,
                if b.inconclusive { ", left box (inconclusive)" } else { "" }
            );
        }
        if let Some(c) = &v.certificate {
            let _ = writeln!(
                out,
                "certificate V = {}, alpha = {}, chi = {}: {} over {} samples, worst slack {}",
                c.v,
                c.alpha,
                c.chi,
                if c.passed { "PASS" } else { "FAIL" },
                c.samples,
                c.worst_slack
            );
            if let Some(p) = &c.violation {
                let _ = writeln!(out, "  violated at {} = {}", vector(&c.coordinates), vector(p));
            }
            for w in &c.warnings {
                let _ = writeln!(out, "  warning: {w}");
            }
        }
    }
    out
}
