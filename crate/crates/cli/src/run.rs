use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use jlm_core::multiplier::{multiplier_transport, MultiplierError};
use jlm_core::verify::{
    check_contact_decay, check_div_mx, check_level_set, check_negative_control, check_transport,
    check_transport_consistency, check_transported_multiplier, check_u_substitution,
    check_volume_law,
};
use jlm_core::{Method, Trajectory, VerificationReport, VerifyError};

use crate::config::{Check, MultiplierSource, NamedMultiplier, Scenario, ScenarioConfig};
use crate::report::{
    CheckBlock, CheilliniBlock, IntegrationBlock, MultiplierBlock, ScenarioReport, Verdict,
};
use crate::LabError;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_VERIFICATION: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: u8,
    pub report: ScenarioReport,
    pub trajectory_path: PathBuf,
    pub report_path: PathBuf,
}

/// Validate, integrate, verify and write the trajectory CSV and report.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<RunOutcome, LabError> {
    let scenario = config.build()?;
    let context = |what: &str| format!("scenario `{}`, {what}", scenario.name);

    let trajectory = multiplier_transport(
        &scenario.field,
        &scenario.x0,
        &scenario.grid,
        &scenario.settings,
    )
    .map_err(|e| LabError::Numerical {
        context: context("trajectory"),
        message: e.to_string(),
    })?;
    let csv = trajectory_csv(&scenario, &trajectory).map_err(|e| LabError::Numerical {
        context: context("trajectory output"),
        message: e.to_string(),
    })?;

    let mut checks = Vec::new();
    for &check in &scenario.checks {
        run_check(&scenario, check, &mut checks);
    }
    let exit_code = if checks.iter().any(|c| c.verdict == Verdict::Error) {
        EXIT_NUMERICAL
    } else if checks.iter().any(|c| c.verdict == Verdict::Fail) {
        EXIT_VERIFICATION
    } else {
        EXIT_PASS
    };
    let report = ScenarioReport {
        scenario: scenario.name.clone(),
        description: scenario.description.clone(),
        family: scenario.field.family().to_string(),
        n: scenario.field.n(),
        verdict: match exit_code {
            EXIT_PASS => Verdict::Pass,
            EXIT_VERIFICATION => Verdict::Fail,
            _ => Verdict::Error,
        },
        exit_code,
        integration: integration_block(&scenario, &trajectory),
        cheillini: scenario.cheillini.as_ref().map(CheilliniBlock::from),
        multipliers: multiplier_blocks(&scenario),
        checks,
    };

    std::fs::create_dir_all(out_dir).map_err(|e| LabError::io(out_dir, e))?;
    let trajectory_path = out_dir.join(&scenario.trajectory_file);
    let report_path = out_dir.join(&scenario.report_file);
    std::fs::write(&trajectory_path, csv).map_err(|e| LabError::io(&trajectory_path, e))?;
    std::fs::write(&report_path, report.to_toml()).map_err(|e| LabError::io(&report_path, e))?;
    Ok(RunOutcome {
        exit_code,
        report,
        trajectory_path,
        report_path,
    })
}

fn integration_block(scenario: &Scenario, tr: &Trajectory) -> IntegrationBlock {
    let (method, dt, rtol, atol) = match scenario.settings.method {
        Method::Rk4 { dt } => ("rk4", Some(dt), None, None),
        Method::Dopri5 { rtol, atol } => ("dopri5", None, Some(rtol), Some(atol)),
    };
    IntegrationBlock {
        method: method.into(),
        dt,
        rtol,
        atol,
        t_start: scenario.grid[0],
        t_end: *scenario.grid.last().expect("at least two samples"),
        samples: scenario.grid.len(),
        x0: scenario.x0.clone(),
        steps_accepted: tr.stats.accepted,
        steps_rejected: tr.stats.rejected,
    }
}

fn multiplier_blocks(scenario: &Scenario) -> Vec<MultiplierBlock> {
    match scenario.source {
        MultiplierSource::None => Vec::new(),
        MultiplierSource::Transport => vec![MultiplierBlock {
            label: "M".into(),
            source: "transport".into(),
            form: None,
            expr: None,
            region: None,
            k: None,
            l: None,
            note: Some("no closed form claimed; ln M transported along the trajectory".into()),
        }],
        MultiplierSource::ClosedForm => scenario
            .multipliers
            .iter()
            .map(|m| MultiplierBlock {
                label: m.label.clone(),
                source: "closed_form".into(),
                form: m.form.clone(),
                expr: m.spec.expr().map(ToString::to_string),
                region: m.spec.constraint().map(|c| format!("{c} > 0")),
                k: m.spec.params.k,
                l: m.spec.params.l,
                note: None,
            })
            .collect(),
    }
}

/// `ln |M(x0)|` for the first closed form, which anchors the `ln_M` column.
fn ln_m_anchor(scenario: &Scenario) -> Result<f64, MultiplierError> {
    match scenario.multipliers.first() {
        Some(m) => m.spec.ln_abs(&scenario.x0),
        None => Ok(0.0),
    }
}

fn trajectory_csv(scenario: &Scenario, tr: &Trajectory) -> Result<String, MultiplierError> {
    let field = &scenario.field;
    let layout = field.layout();
    let n = layout.n;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("q{i}")));
    header.extend((1..=n).map(|i| format!("p{i}")));
    if layout.contact {
        header.push("s".into());
    }
    header.push("ln_det_J".into());
    let with_m = scenario.source != MultiplierSource::None;
    if with_m {
        header.push("ln_M".into());
    }
    let hamiltonian = field.hamiltonian();
    if hamiltonian.is_some() {
        header.push(if layout.contact { "h" } else { "H" }.into());
    }
    let anchor = ln_m_anchor(scenario)?;
    let log_volume = tr.log_volume.as_ref().expect("requested");
    let log_multiplier = tr.log_multiplier.as_ref().expect("requested");

    let mut out = header.join(",");
    out.push('\n');
    for (i, (t, x)) in tr.times.iter().zip(&tr.states).enumerate() {
        write!(out, "{t:?}").unwrap();
        for v in x {
            write!(out, ",{v:?}").unwrap();
        }
        write!(out, ",{:?}", log_volume[i]).unwrap();
        if with_m {
            write!(out, ",{:?}", anchor + log_multiplier[i]).unwrap();
        }
        if let Some(h) = hamiltonian {
            write!(out, ",{:?}", h.eval(x)?).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

fn outcome(
    check: Check,
    label: Option<&str>,
    result: Result<VerificationReport, VerifyError>,
) -> CheckBlock {
    match result {
        Ok(report) => CheckBlock::from_report(&report, label),
        Err(VerifyError::NotConstantDivergence(family)) => CheckBlock::without_report(
            check.name(),
            label,
            Verdict::Skipped,
            format!("divergence is not constant for this {family} field; the linear volume law does not apply"),
        ),
        Err(e) => CheckBlock::without_report(check.name(), label, Verdict::Error, e.to_string()),
    }
}

fn run_check(scenario: &Scenario, check: Check, out: &mut Vec<CheckBlock>) {
    let field = &scenario.field;
    let (x0, grid, settings, tol) = (
        &scenario.x0,
        &scenario.grid,
        &scenario.settings,
        &scenario.tolerances,
    );
    let per_multiplier =
        |f: &dyn Fn(&NamedMultiplier) -> Result<VerificationReport, VerifyError>| {
            scenario
                .multipliers
                .iter()
                .map(|m| outcome(check, Some(&m.label), f(m)))
                .collect::<Vec<_>>()
        };
    let sampler = |m: &NamedMultiplier| m.sampler.clone().expect("built for sampling checks");
    match check {
        Check::DivMx => out.extend(per_multiplier(&|m| {
            check_div_mx(field, &m.spec, &sampler(m), tol.div_mx)
        })),
        Check::NegativeControl => out.extend(per_multiplier(&|m| {
            check_negative_control(field, &m.spec, &sampler(m), tol.div_mx)
        })),
        Check::Transport if scenario.source == MultiplierSource::Transport => out.push(outcome(
            check,
            Some("M"),
            check_transported_multiplier(field, x0, grid, settings, tol.transport),
        )),
        Check::Transport => out.extend(per_multiplier(&|m| {
            check_transport(field, &m.spec, x0, grid, settings, tol.transport)
        })),
        Check::TransportConsistency => out.extend(per_multiplier(&|m| {
            check_transport_consistency(
                field,
                &m.spec,
                x0,
                grid,
                settings,
                tol.transport_consistency,
            )
        })),
        Check::USubstitution => out.extend(per_multiplier(&|m| {
            let lm = m.lienard.as_ref().expect("validated: Liénard closed form");
            check_u_substitution(field, lm, x0, grid, settings, tol.u_substitution)
        })),
        Check::LevelSet => {
            let n = field.n();
            out.push(outcome(
                check,
                None,
                check_level_set(
                    field,
                    &x0[..n],
                    &x0[n..2 * n],
                    grid,
                    settings,
                    tol.level_set,
                ),
            ))
        }
        Check::ContactDecay => out.push(outcome(
            check,
            None,
            check_contact_decay(field, x0, grid, settings, tol.contact_decay),
        )),
        Check::VolumeLaw => out.push(outcome(
            check,
            None,
            check_volume_law(field, x0, grid, settings, tol.volume_law),
        )),
    }
}
