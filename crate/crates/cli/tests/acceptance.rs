//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the verdict lines are always printed.

// Positivity tests are written `!(x > 0.0)` so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use jlm_core::flow::{integrate_with_logvolume, monodromy, uniform_grid};
use jlm_core::multiplier::{cheillini_roots, MultiplierError};
use jlm_core::systems::{
    build_conformal_field, build_contact_field, build_hamiltonian_field, parse_phase,
};
use jlm_core::{FieldSpec, IntegratorSettings, LienardSystem, PhaseLayout};
use jlm_lab::report::{CheckBlock, Verdict};
use jlm_lab::{run_scenario, RunOutcome, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&Runs) -> Outcome);

const SCENARIOS: [&str; 9] = [
    "harmonic_conservative",
    "damped_oscillator_conformal",
    "damped_oscillator_contact",
    "free_particle_conformal",
    "contact_level_set",
    "contact_n2",
    "lienard_cheillini",
    "lienard_cheillini_unstable",
    "van_der_pol",
];

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn run_in(name: &str, dir: &Path) -> Result<RunOutcome, String> {
    let cfg = ScenarioConfig::load(&scenario_path(name)).map_err(|e| e.to_string())?;
    run_scenario(&cfg, dir).map_err(|e| format!("{name}: {e}"))
}

struct Runs {
    _dir: tempfile::TempDir,
    outcomes: BTreeMap<&'static str, RunOutcome>,
}

impl Runs {
    fn new() -> Result<Runs, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut outcomes = BTreeMap::new();
        for name in SCENARIOS {
            outcomes.insert(name, run_in(name, dir.path())?);
        }
        Ok(Runs {
            _dir: dir,
            outcomes,
        })
    }

    fn checks(&self, scenario: &str, check: &str) -> Vec<&CheckBlock> {
        self.outcomes[scenario]
            .report
            .checks
            .iter()
            .filter(|c| c.name == check)
            .collect()
    }

    /// Every instance of `check` in `scenario` exists, passes and has
    /// `max <= tol`; returns the largest residual.
    fn require(&self, scenario: &str, check: &str, tol: f64) -> Result<f64, String> {
        let found = self.checks(scenario, check);
        if found.is_empty() {
            return Err(format!("{scenario} has no {check} check"));
        }
        let mut worst = 0.0f64;
        for c in found {
            let stats = c
                .stats
                .as_ref()
                .ok_or(format!("{scenario}/{check}: no statistics"))?;
            let label = c.multiplier.as_deref().unwrap_or("-");
            if c.verdict != Verdict::Pass || !(stats.max <= tol) {
                return Err(format!(
                    "{scenario}/{check}[{label}]: max {:e} > {tol:e}",
                    stats.max
                ));
            }
            if c.domain_exit.is_some() {
                return Err(format!(
                    "{scenario}/{check}[{label}]: trajectory left the region"
                ));
            }
            worst = worst.max(stats.max);
        }
        Ok(worst)
    }
}

fn tight() -> IntegratorSettings {
    IntegratorSettings::dopri5(1e-10, 1e-12)
}

fn sym(src: &str, n: usize) -> jlm_core::Expr {
    parse_phase(src, PhaseLayout::symplectic(n)).unwrap()
}

fn slope_error(field: &FieldSpec, x0: &[f64], slope: f64) -> Result<f64, String> {
    let tr = integrate_with_logvolume(field, x0, &uniform_grid(0.0, 10.0, 201), &tight())
        .map_err(|e| e.to_string())?;
    let lv = tr.log_volume.unwrap();
    Ok(tr
        .times
        .iter()
        .zip(&lv)
        .map(|(t, v)| (v - slope * t).abs())
        .fold(0.0, f64::max))
}

fn liouville_baseline(runs: &Runs) -> Outcome {
    let field = build_hamiltonian_field(&sym("p^2/2 + q^2/2", 1), 1).unwrap();
    let lv = slope_error(&field, &[1.0, 0.0], 0.0)?;
    let det = monodromy(&field, &[1.0, 0.0], 0.0, 10.0, &tight())
        .map_err(|e| e.to_string())?
        .determinant();
    if !(lv <= 1e-8) || !((det - 1.0).abs() <= 1e-6) {
        return Err(format!("|ln det| = {lv:e}, det = {det}"));
    }
    runs.require("harmonic_conservative", "volume_law", 1e-8)?;
    Ok(format!(
        "max |ln det Dphi| = {lv:e}, det(monodromy) - 1 = {:e}",
        det - 1.0
    ))
}

fn conformal_volume_law(runs: &Runs) -> Outcome {
    let one = build_conformal_field(&sym("p^2/2 + q^2/2", 1), 0.3, 1).unwrap();
    let two = build_conformal_field(&sym("p1^2/2 + p2^2/2 + q1^2/2 + q2^2/2", 2), 0.3, 2).unwrap();
    let e1 = slope_error(&one, &[1.0, 0.0], -0.3)?;
    let e2 = slope_error(&two, &[1.0, 0.0, 0.0, 1.0], -0.6)?;
    if !(e1 <= 1e-8 && e2 <= 1e-8) {
        return Err(format!("n=1 error {e1:e}, n=2 error {e2:e}"));
    }
    runs.require("damped_oscillator_conformal", "volume_law", 1e-8)?;
    Ok(format!(
        "slope -0.3 within {e1:e}, slope -0.6 within {e2:e}"
    ))
}

fn conformal_measure(runs: &Runs) -> Outcome {
    let name = "free_particle_conformal";
    let tr = runs.require(name, "transport", 1e-6)?;
    let div = runs.require(name, "div_mx", 1e-8)?;
    let count = runs.checks(name, "div_mx")[0].stats.as_ref().unwrap().count;
    if count != 1000 {
        return Err(format!("div_mx used {count} samples"));
    }
    let form = runs.outcomes[name].report.multipliers[0]
        .expr
        .clone()
        .unwrap_or_default();
    if !form.contains("^(-0.5)") {
        return Err(format!("unexpected multiplier {form}"));
    }
    Ok(format!(
        "M = H^(-1/2): transport {tr:e}, div(MX) {div:e} over {count} samples"
    ))
}

fn contact_measure(runs: &Runs) -> Outcome {
    let field = build_contact_field(
        &parse_phase("p^2/2 + q^2/2 + 0.3*s", PhaseLayout::contact(1)).unwrap(),
        1,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        worst = worst.max((field.divergence(&x).map_err(|e| e.to_string())? + 0.6).abs());
    }
    if !(worst < 1e-12) {
        return Err(format!("divergence error {worst:e}"));
    }
    let mut parts = vec![format!("div = -0.6 within {worst:e}")];
    for (name, exponent) in [
        ("damped_oscillator_contact", "^(-2"),
        ("contact_n2", "^(-3"),
    ] {
        let expr = runs.outcomes[name].report.multipliers[0]
            .expr
            .clone()
            .unwrap_or_default();
        if !expr.contains(exponent) {
            return Err(format!("{name}: unexpected multiplier {expr}"));
        }
        let d = runs.require(name, "div_mx", 1e-8)?;
        let t = runs.require(name, "transport", 1e-6)?;
        parts.push(format!("{name}: div {d:e}, transport {t:e}"));
    }
    Ok(parts.join("; "))
}

fn level_set(runs: &Runs) -> Outcome {
    let confined = runs.require("contact_level_set", "level_set", 1e-8)?;
    let s0: f64 = runs.checks("contact_level_set", "level_set")[0].metadata["s0"]
        .parse()
        .map_err(|_| "s0 missing".to_string())?;
    if !((s0 + 5.0 / 3.0).abs() < 1e-12) {
        return Err(format!("s0 = {s0}"));
    }
    let decay = runs.require("damped_oscillator_contact", "contact_decay", 1e-6)?;
    let h0 = &runs.checks("damped_oscillator_contact", "contact_decay")[0].metadata["h0"];
    if h0 != "2" {
        return Err(format!("decay run starts at h = {h0}"));
    }
    Ok(format!(
        "|h(t)| <= {confined:e} from s0 = -5/3; h(t) - 2e^(-0.3t) within {decay:e}"
    ))
}

fn cheillini(_: &Runs) -> Outcome {
    let qs = uniform_grid(-2.0, 2.0, 41);
    let solve =
        |vp: &str, k: &str| cheillini_roots(&LienardSystem::parse(vp, k, 1.0).unwrap(), &qs);
    let a = solve("4*q", "5").map_err(|e| e.to_string())?;
    let disc: f64 = 9.0 / 25.0;
    let oracle = [(-1.0 - disc.sqrt()) / 2.0, (-1.0 + disc.sqrt()) / 2.0];
    let b = solve("-2*q", "1").map_err(|e| e.to_string())?;
    let errs = [
        (a.l_minus - oracle[0]).abs(),
        (a.l_plus - oracle[1]).abs(),
        (a.discriminant() - disc).abs(),
        (b.l_minus + 2.0).abs(),
        (b.l_plus - 1.0).abs(),
    ];
    let residual = [a.l_minus, a.l_plus]
        .map(|l| a.root_residual(l))
        .into_iter()
        .chain([b.l_minus, b.l_plus].map(|l| b.root_residual(l)))
        .fold(0.0, f64::max);
    if errs.iter().any(|e| !(*e <= 1e-12)) || !(residual <= 1e-12) {
        return Err(format!("root errors {errs:?}, residual {residual:e}"));
    }
    match solve("q^3", "1") {
        Err(MultiplierError::NotSatisfied { .. }) => {}
        other => return Err(format!("V' = q^3 gave {other:?}")),
    }
    Ok(format!(
        "{{{}, {}}} and {{{}, {}}}, root residual {residual:e}; V' = q^3 NotSatisfied",
        a.l_minus, a.l_plus, b.l_minus, b.l_plus
    ))
}

fn lienard_measures(runs: &Runs) -> Outcome {
    let mut parts = Vec::new();
    for name in ["lienard_cheillini", "lienard_cheillini_unstable"] {
        let forms: Vec<String> = runs.outcomes[name]
            .report
            .multipliers
            .iter()
            .map(|m| m.form.clone().unwrap_or_default())
            .collect();
        if forms.len() != 2 {
            return Err(format!("{name}: expected two multipliers, got {forms:?}"));
        }
        for (check, tol) in [
            ("div_mx", 1e-8),
            ("transport", 1e-6),
            ("u_substitution", 1e-6),
        ] {
            if runs.checks(name, check).len() != 2 {
                return Err(format!("{name}: {check} not run for both roots"));
            }
            runs.require(name, check, tol)?;
        }
        parts.push(forms.join(" and "));
    }
    Ok(format!(
        "div, transport and u-substitution pass for {}",
        parts.join("; ")
    ))
}

fn transport_consistency(runs: &Runs) -> Outcome {
    let mut count = 0;
    let mut worst = 0.0f64;
    for (name, outcome) in &runs.outcomes {
        let closed = outcome
            .report
            .multipliers
            .iter()
            .filter(|m| m.source == "closed_form")
            .count();
        if closed == 0 {
            continue;
        }
        if runs.checks(name, "transport_consistency").len() != closed {
            return Err(format!(
                "{name}: consistency not checked for every closed form"
            ));
        }
        worst = worst.max(runs.require(name, "transport_consistency", 1e-6)?);
        count += closed;
    }
    Ok(format!(
        "{count} closed forms, max |transported - closed| = {worst:e}"
    ))
}

fn negative_control(runs: &Runs) -> Outcome {
    let mut count = 0;
    let mut weakest = f64::INFINITY;
    let mut transport_only = Vec::new();
    for (name, outcome) in &runs.outcomes {
        let closed = outcome
            .report
            .multipliers
            .iter()
            .filter(|m| m.source == "closed_form")
            .count();
        if closed == 0 {
            transport_only.push(*name);
            continue;
        }
        let controls = runs.checks(name, "negative_control");
        if controls.len() != closed {
            return Err(format!("{name}: negative control missing"));
        }
        for c in controls {
            let stats = c.stats.as_ref().unwrap();
            let tol = c.tolerance.unwrap();
            if c.within_tolerance != Some(false)
                || !(stats.max >= 1e3 * tol)
                || c.verdict != Verdict::Pass
            {
                return Err(format!(
                    "{name}: perturbed multiplier residual {:e}",
                    stats.max
                ));
            }
            weakest = weakest.min(stats.max / tol);
            count += 1;
        }
        // The independent checks agree on the unperturbed multiplier.
        let div_ok = runs
            .checks(name, "div_mx")
            .iter()
            .all(|c| c.verdict == Verdict::Pass);
        let tr_ok = runs
            .checks(name, "transport")
            .iter()
            .all(|c| c.verdict == Verdict::Pass);
        if div_ok != tr_ok {
            return Err(format!("{name}: div_mx and transport disagree"));
        }
    }
    Ok(format!(
        "{count} perturbed multipliers fail by at least {weakest:.0}x tolerance; no closed form in {}",
        transport_only.join(", ")
    ))
}

fn determinism(runs: &Runs) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    for name in SCENARIOS {
        let again = single.install(|| run_in(name, dir.path()))?;
        let first = &runs.outcomes[name];
        for (a, b) in [
            (&first.trajectory_path, &again.trajectory_path),
            (&first.report_path, &again.report_path),
        ] {
            let (x, y) = (std::fs::read(a), std::fs::read(b));
            match (x, y) {
                (Ok(x), Ok(y)) if x == y => {}
                _ => return Err(format!("{} differs between runs", a.display())),
            }
        }
        if first.exit_code != 0 {
            return Err(format!("{name} exited with {}", first.exit_code));
        }
    }
    Ok(format!(
        "{} scenarios byte-identical across runs and thread counts, all exit 0",
        SCENARIOS.len()
    ))
}

fn main() {
    let runs = match Runs::new() {
        Ok(r) => r,
        Err(e) => {
            println!("FAIL: bundled scenarios did not run: {e}");
            std::process::exit(1);
        }
    };
    let criteria: [Criterion; 10] = [
        ("Liouville baseline", liouville_baseline),
        ("conformal volume law", conformal_volume_law),
        ("conformal measure", conformal_measure),
        ("contact divergence and measure", contact_measure),
        ("level-set invariance", level_set),
        ("Cheillini solver", cheillini),
        ("Liénard measures", lienard_measures),
        ("multiplier-transport consistency", transport_consistency),
        ("negative control", negative_control),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        match criterion(&runs) {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
