//! `cheillini`: solve the Liénard integrability condition and print both
//! closed-form multipliers.

use std::fmt::Write as _;

use jlm_core::flow::uniform_grid;
use jlm_core::multiplier::{
    cheillini_roots, multiplier_lienard, LienardMultiplier, MultiplierError,
};
use jlm_core::LienardSystem;

use crate::run::{EXIT_PASS, EXIT_VERIFICATION};

/// Round to 12 significant digits for display, so `-0.7999999999999999`
/// prints as `-0.8`.
pub fn display_number(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{}", if x == 0.0 { 0.0 } else { x });
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float");
    format!("{rounded}")
}

fn profile_lines(out: &mut String, profile: &[(f64, f64)]) {
    out.push_str("profile (q, c(q)):\n");
    for (q, c) in profile {
        writeln!(out, "  {}, {}", display_number(*q), display_number(*c)).unwrap();
    }
}

/// `p - G(q)` written out when `G` is affine on the sampled range.
fn base_text(m: &LienardMultiplier, qs: &[f64]) -> Option<String> {
    let mut slope = None;
    for &q in qs {
        let jet = m.g.eval_jet2(&[q, 0.0]).ok()?;
        let (d1, d2) = (jet.grad()[0], jet.hess(0, 0));
        if d2.abs() > 1e-12 * (1.0 + d1.abs()) {
            return None;
        }
        slope.get_or_insert(d1);
    }
    let a = slope?;
    let b = m.g.eval(&[0.0, 0.0]).ok()?;
    let mut text = "p".to_string();
    let a = display_number(-a);
    match a.as_str() {
        "0" => {}
        "1" => text.push_str(" + q"),
        "-1" => text.push_str(" - q"),
        _ => match a.strip_prefix('-') {
            Some(abs) => write!(text, " - {abs}*q").unwrap(),
            None => write!(text, " + {a}*q").unwrap(),
        },
    }
    let b = display_number(-b);
    if b != "0" {
        match b.strip_prefix('-') {
            Some(abs) => write!(text, " - {abs}").unwrap(),
            None => write!(text, " + {b}").unwrap(),
        }
    }
    Some(text)
}

/// The base `u = (p − G)/m`, simplified when `G` is affine.
pub fn base_display(m: &LienardMultiplier, mass: f64, qs: &[f64]) -> String {
    match base_text(m, qs) {
        Some(b) if mass == 1.0 => b,
        Some(b) => format!("({b})/{}", display_number(mass)),
        None => m.u.to_string(),
    }
}

/// `(base)^(1/l)` for display, e.g. `(p + 4*q)^(-5)`.
pub fn lienard_form(m: &LienardMultiplier, mass: f64, qs: &[f64]) -> String {
    format!(
        "({})^({})",
        base_display(m, mass, qs),
        display_number(1.0 / m.l)
    )
}

/// Text report and exit code for the `cheillini` subcommand.
pub fn cheillini_report(
    system: &LienardSystem,
    qmin: f64,
    qmax: f64,
    samples: usize,
) -> (String, u8) {
    let qs = uniform_grid(qmin, qmax, samples);
    let mut out = String::new();
    let roots = match cheillini_roots(system, &qs) {
        Ok(r) => r,
        Err(MultiplierError::NotSatisfied { residual, profile }) => {
            writeln!(
                out,
                "NotSatisfied: c(q) = (d/dq[V'/(mK)])/K is not constant on [{}, {}] (max deviation {})",
                display_number(qmin),
                display_number(qmax),
                display_number(residual)
            )
            .unwrap();
            profile_lines(&mut out, &profile);
            return (out, EXIT_VERIFICATION);
        }
        Err(e) => {
            writeln!(out, "{e}").unwrap();
            return (out, EXIT_VERIFICATION);
        }
    };
    writeln!(out, "c = {}", display_number(roots.c)).unwrap();
    writeln!(
        out,
        "discriminant = {}",
        display_number(roots.discriminant())
    )
    .unwrap();
    writeln!(
        out,
        "constancy residual = {}",
        display_number(roots.residual)
    )
    .unwrap();
    writeln!(
        out,
        "l = {}, {}",
        display_number(roots.l_plus),
        display_number(roots.l_minus)
    )
    .unwrap();
    for (label, l) in [("M1", roots.l_plus), ("M2", roots.l_minus)] {
        let m = match multiplier_lienard(system, l) {
            Ok(m) => m,
            Err(e) => {
                writeln!(out, "{label}: {e}").unwrap();
                return (out, EXIT_VERIFICATION);
            }
        };
        let base = base_display(&m, system.mass, &qs);
        writeln!(
            out,
            "{label} = {}    l = {}, root residual {}, valid where {base} > 0",
            lienard_form(&m, system.mass, &qs),
            display_number(l),
            display_number(roots.root_residual(l))
        )
        .unwrap();
    }
    profile_lines(&mut out, &roots.profile);
    (out, EXIT_PASS)
}
