//! Scenario files: TOML with `[system]`, `[integrate]`, `[multiplier]`,
//! `[verify]` and `[output]` sections.

use std::path::Path;

use jlm_core::flow::uniform_grid;
use jlm_core::multiplier::{
    cheillini_roots, multiplier_conformal_homogeneous, multiplier_contact, multiplier_lienard,
    CheilliniRoots, LienardMultiplier, Side,
};
use jlm_core::systems::{
    build_conformal_field, build_contact_field, build_generalized_conformal_field,
    build_hamiltonian_field, build_lienard_field, parse_phase, PhaseLayout,
};
use jlm_core::{
    Expr, Family, FieldSpec, IntegratorSettings, LienardSystem, MultiplierSpec, RegionSampler,
};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("{0}")]
    Parse(String),
    #[error("missing required field `{0}`")]
    Missing(String),
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: &str, message: impl ToString) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub system: SystemSection,
    pub integrate: IntegrateSection,
    #[serde(default)]
    pub multiplier: MultiplierSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub family: String,
    #[serde(default = "one")]
    pub n: usize,
    pub hamiltonian: Option<String>,
    pub gamma: Option<f64>,
    pub damping: Option<String>,
    pub vprime: Option<String>,
    pub f: Option<String>,
    pub g: Option<String>,
    pub mass: Option<f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateSection {
    #[serde(default = "default_method")]
    pub method: String,
    pub dt: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub max_steps: Option<usize>,
    pub initial: InitialCondition,
}

fn default_method() -> String {
    "dopri5".into()
}

fn default_samples() -> usize {
    101
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub s: Option<f64>,
    /// Solve `h(q, p, s) = 0` for `s` instead of giving it.
    #[serde(default)]
    pub on_level_set: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierSource {
    #[default]
    None,
    ClosedForm,
    Transport,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootChoice {
    #[default]
    Both,
    Minus,
    Plus,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierSection {
    #[serde(default)]
    pub source: MultiplierSource,
    /// Momentum homogeneity degree for conformal closed forms.
    pub k: Option<f64>,
    #[serde(default)]
    pub root: RootChoice,
    #[serde(default = "default_side")]
    pub side: String,
    #[serde(default = "default_q_range")]
    pub q_range: [f64; 2],
    #[serde(default = "default_q_samples")]
    pub q_samples: usize,
}

impl Default for MultiplierSection {
    fn default() -> Self {
        MultiplierSection {
            source: MultiplierSource::None,
            k: None,
            root: RootChoice::Both,
            side: default_side(),
            q_range: default_q_range(),
            q_samples: default_q_samples(),
        }
    }
}

fn default_side() -> String {
    "positive".into()
}

fn default_q_range() -> [f64; 2] {
    [-2.0, 2.0]
}

fn default_q_samples() -> usize {
    41
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub checks: Vec<String>,
    pub bounds: Option<Vec<[f64; 2]>>,
    /// Sampler region; defaults to the multiplier's own region shrunk by
    /// `region_margin`.
    pub constraint: Option<String>,
    #[serde(default)]
    pub region_margin: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            checks: Vec::new(),
            bounds: None,
            constraint: None,
            region_margin: 0.0,
            seed: 0,
            count: default_count(),
            tolerances: Tolerances::default(),
        }
    }
}

fn default_count() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub div_mx: f64,
    pub transport: f64,
    pub transport_consistency: f64,
    pub level_set: f64,
    pub contact_decay: f64,
    pub volume_law: f64,
    pub u_substitution: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            div_mx: 1e-8,
            transport: 1e-6,
            transport_consistency: 1e-6,
            level_set: 1e-8,
            contact_decay: 1e-6,
            volume_law: 1e-8,
            u_substitution: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub trajectory: Option<String>,
    pub report: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    DivMx,
    Transport,
    TransportConsistency,
    LevelSet,
    ContactDecay,
    VolumeLaw,
    USubstitution,
    NegativeControl,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::DivMx,
        Check::Transport,
        Check::TransportConsistency,
        Check::LevelSet,
        Check::ContactDecay,
        Check::VolumeLaw,
        Check::USubstitution,
        Check::NegativeControl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::DivMx => "div_mx",
            Check::Transport => "transport",
            Check::TransportConsistency => "transport_consistency",
            Check::LevelSet => "level_set",
            Check::ContactDecay => "contact_decay",
            Check::VolumeLaw => "volume_law",
            Check::USubstitution => "u_substitution",
            Check::NegativeControl => "negative_control",
        }
    }

    fn needs_closed_form(self) -> bool {
        matches!(
            self,
            Check::DivMx
                | Check::TransportConsistency
                | Check::USubstitution
                | Check::NegativeControl
        )
    }

    fn needs_sampler(self) -> bool {
        matches!(self, Check::DivMx | Check::NegativeControl)
    }
}

/// A closed-form multiplier together with the data needed to check it.
#[derive(Debug, Clone)]
pub struct NamedMultiplier {
    pub label: String,
    /// Readable form for reports.
    pub form: Option<String>,
    pub spec: MultiplierSpec,
    pub lienard: Option<LienardMultiplier>,
    pub sampler: Option<RegionSampler>,
}

impl NamedMultiplier {
    fn new(label: &str, spec: MultiplierSpec) -> Self {
        NamedMultiplier {
            label: label.to_string(),
            form: None,
            spec,
            lienard: None,
            sampler: None,
        }
    }
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub field: FieldSpec,
    pub settings: IntegratorSettings,
    pub grid: Vec<f64>,
    pub x0: Vec<f64>,
    pub source: MultiplierSource,
    pub cheillini: Option<CheilliniRoots>,
    pub multipliers: Vec<NamedMultiplier>,
    pub checks: Vec<Check>,
    pub tolerances: Tolerances,
    pub trajectory_file: String,
    pub report_file: String,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// The vector field described by `[system]`.
    pub fn field(&self) -> Result<(FieldSpec, Option<LienardSystem>), ConfigError> {
        let sys = &self.system;
        let family = Family::from_name(&sys.family).ok_or_else(|| {
            ConfigError::invalid(
                "system.family",
                format!(
                    "unknown family `{}`; expected conservative, conformal, contact, \
                     generalized_conformal or lienard",
                    sys.family
                ),
            )
        })?;
        if sys.n == 0 {
            return Err(ConfigError::invalid("system.n", "must be at least 1"));
        }
        let layout = if family.is_contact() {
            PhaseLayout::contact(sys.n)
        } else {
            PhaseLayout::symplectic(sys.n)
        };
        let expr = |field: &str, value: &Option<String>| -> Result<Expr, ConfigError> {
            let src = value
                .as_ref()
                .ok_or_else(|| ConfigError::Missing(format!("system.{field}")))?;
            parse_phase(src, layout)
                .map_err(|e| ConfigError::invalid(&format!("system.{field}"), e))
        };
        let field_err = |e: jlm_core::FieldError| ConfigError::invalid("system", e);
        let field = match family {
            Family::Conservative => {
                build_hamiltonian_field(&expr("hamiltonian", &sys.hamiltonian)?, sys.n)
            }
            Family::Conformal => {
                let gamma = sys
                    .gamma
                    .ok_or_else(|| ConfigError::Missing("system.gamma".into()))?;
                build_conformal_field(&expr("hamiltonian", &sys.hamiltonian)?, gamma, sys.n)
            }
            Family::Contact => build_contact_field(&expr("hamiltonian", &sys.hamiltonian)?, sys.n),
            Family::GeneralizedConformal => build_generalized_conformal_field(
                &expr("hamiltonian", &sys.hamiltonian)?,
                &expr("damping", &sys.damping)?,
                sys.n,
            ),
            Family::Lienard => {
                if sys.n != 1 {
                    return Err(ConfigError::invalid(
                        "system.n",
                        "Liénard systems have n = 1",
                    ));
                }
                let mass = sys.mass.unwrap_or(1.0);
                if sys.vprime.is_some() {
                    let lienard = LienardSystem::new(
                        &expr("vprime", &sys.vprime)?,
                        &expr("damping", &sys.damping)?,
                        mass,
                    )
                    .map_err(field_err)?;
                    return Ok((lienard.field(), Some(lienard)));
                }
                build_lienard_field(&expr("f", &sys.f)?, &expr("g", &sys.g)?, mass)
            }
        };
        Ok((field.map_err(field_err)?, None))
    }

    fn settings(&self) -> Result<IntegratorSettings, ConfigError> {
        let int = &self.integrate;
        let mut settings = match int.method.as_str() {
            "rk4" => IntegratorSettings::rk4(
                int.dt
                    .ok_or_else(|| ConfigError::Missing("integrate.dt".into()))?,
            ),
            "dopri5" => {
                IntegratorSettings::dopri5(int.rtol.unwrap_or(1e-10), int.atol.unwrap_or(1e-12))
            }
            other => {
                return Err(ConfigError::invalid(
                    "integrate.method",
                    format!("unknown method `{other}`; expected rk4 or dopri5"),
                ))
            }
        };
        if let Some(max) = int.max_steps {
            settings.max_steps = max;
        }
        settings
            .validate()
            .map_err(|e| ConfigError::invalid("integrate", e))?;
        Ok(settings)
    }

    fn initial_state(&self, field: &FieldSpec) -> Result<Vec<f64>, ConfigError> {
        let init = &self.integrate.initial;
        let n = field.n();
        for (name, v) in [("q", &init.q), ("p", &init.p)] {
            if v.len() != n {
                return Err(ConfigError::invalid(
                    &format!("integrate.initial.{name}"),
                    format!("expected {n} values, got {}", v.len()),
                ));
            }
        }
        let mut x0: Vec<f64> = init.q.iter().chain(&init.p).copied().collect();
        if field.family().is_contact() {
            let s = if init.on_level_set {
                if init.s.is_some() {
                    return Err(ConfigError::invalid(
                        "integrate.initial.s",
                        "cannot be given together with on_level_set",
                    ));
                }
                jlm_core::verify::find_level_set_s(field, &init.q, &init.p)
                    .map_err(|e| ConfigError::invalid("integrate.initial.on_level_set", e))?
            } else {
                init.s
                    .ok_or_else(|| ConfigError::Missing("integrate.initial.s".into()))?
            };
            x0.push(s);
        } else if init.s.is_some() || init.on_level_set {
            return Err(ConfigError::invalid(
                "integrate.initial.s",
                format!("the {} family has no s coordinate", field.family()),
            ));
        }
        Ok(x0)
    }

    fn multipliers(
        &self,
        field: &FieldSpec,
        lienard: Option<&LienardSystem>,
    ) -> Result<(Option<CheilliniRoots>, Vec<NamedMultiplier>), ConfigError> {
        let m = &self.multiplier;
        if m.source != MultiplierSource::ClosedForm {
            return Ok((None, Vec::new()));
        }
        let family = field.family();
        let unavailable = || {
            ConfigError::invalid(
                "multiplier.source",
                format!("no closed-form multiplier for this {family} system; use \"transport\""),
            )
        };
        let single = |spec| Ok((None, vec![NamedMultiplier::new("M", spec)]));
        match family {
            Family::Conservative => {
                let vars = field.variables();
                let one = Expr::constant(1.0, &vars);
                single(MultiplierSpec::closed_form(one.clone(), one, family))
            }
            Family::Conformal => {
                let k =
                    m.k.ok_or_else(|| ConfigError::Missing("multiplier.k".into()))?;
                let h = field.hamiltonian().expect("conformal fields have H");
                let spec = multiplier_conformal_homogeneous(h, k, field.n())
                    .map_err(|e| ConfigError::invalid("multiplier.k", e))?;
                single(spec)
            }
            Family::Contact => {
                let side = match m.side.as_str() {
                    "positive" => Side::Positive,
                    "negative" => Side::Negative,
                    other => {
                        return Err(ConfigError::invalid(
                            "multiplier.side",
                            format!("expected positive or negative, got `{other}`"),
                        ))
                    }
                };
                let h = field.hamiltonian().expect("contact fields have h");
                let spec = multiplier_contact(h, field.n(), side)
                    .map_err(|e| ConfigError::invalid("multiplier", e))?;
                single(spec)
            }
            Family::GeneralizedConformal => Err(unavailable()),
            Family::Lienard => {
                let sys = lienard.ok_or_else(unavailable)?;
                let [lo, hi] = m.q_range;
                if !(hi > lo) || m.q_samples < 2 {
                    return Err(ConfigError::invalid(
                        "multiplier.q_range",
                        "needs q_range[1] > q_range[0] and at least 2 samples",
                    ));
                }
                let qs: Vec<f64> = uniform_grid(lo, hi, m.q_samples);
                let roots = cheillini_roots(sys, &qs).map_err(|e| {
                    ConfigError::invalid("multiplier.source", format!("Cheillini: {e}"))
                })?;
                let chosen: Vec<(&str, f64)> = match m.root {
                    RootChoice::Both => vec![("M1", roots.l_plus), ("M2", roots.l_minus)],
                    RootChoice::Plus => vec![("M1", roots.l_plus)],
                    RootChoice::Minus => vec![("M2", roots.l_minus)],
                };
                let mut out = Vec::new();
                for (label, l) in chosen {
                    let lm = multiplier_lienard(sys, l)
                        .map_err(|e| ConfigError::invalid("multiplier.root", e))?;
                    let mut named = NamedMultiplier::new(label, lm.spec.clone());
                    named.form = Some(crate::cheillini::lienard_form(&lm, sys.mass, &qs));
                    named.lienard = Some(lm);
                    out.push(named);
                }
                Ok((Some(roots), out))
            }
        }
    }

    fn checks(&self, field: &FieldSpec, has_lienard: bool) -> Result<Vec<Check>, ConfigError> {
        let mut checks = Vec::new();
        for name in &self.verify.checks {
            let check = Check::ALL
                .into_iter()
                .find(|c| c.name() == name)
                .ok_or_else(|| {
                    ConfigError::invalid("verify.checks", format!("unknown check `{name}`"))
                })?;
            if checks.contains(&check) {
                return Err(ConfigError::invalid(
                    "verify.checks",
                    format!("`{name}` listed twice"),
                ));
            }
            let why = if check.needs_closed_form()
                && self.multiplier.source != MultiplierSource::ClosedForm
            {
                Some("needs multiplier.source = \"closed_form\"")
            } else if check == Check::Transport && self.multiplier.source == MultiplierSource::None
            {
                Some("needs a multiplier source")
            } else if matches!(check, Check::LevelSet | Check::ContactDecay)
                && !field.family().is_contact()
            {
                Some("applies to contact systems only")
            } else if check == Check::USubstitution && !has_lienard {
                Some("needs a Liénard system given by vprime and damping")
            } else {
                None
            };
            if let Some(why) = why {
                return Err(ConfigError::invalid(
                    "verify.checks",
                    format!("`{name}` {why}"),
                ));
            }
            checks.push(check);
        }
        Ok(checks)
    }

    fn sampler(
        &self,
        field: &FieldSpec,
        spec: &MultiplierSpec,
    ) -> Result<RegionSampler, ConfigError> {
        let v = &self.verify;
        let bounds = v
            .bounds
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("verify.bounds".into()))?;
        if bounds.len() != field.dim() {
            return Err(ConfigError::invalid(
                "verify.bounds",
                format!("expected {} intervals, got {}", field.dim(), bounds.len()),
            ));
        }
        if let Some(b) = bounds.iter().find(|[lo, hi]| !(hi >= lo)) {
            return Err(ConfigError::invalid(
                "verify.bounds",
                format!("empty interval {b:?}"),
            ));
        }
        if v.count == 0 {
            return Err(ConfigError::invalid("verify.count", "must be positive"));
        }
        let constraint = match &v.constraint {
            Some(src) => parse_phase(src, field.layout())
                .map_err(|e| ConfigError::invalid("verify.constraint", e))?,
            None => {
                let region = spec.constraint().expect("closed form");
                region - &Expr::constant(v.region_margin, &field.variables())
            }
        };
        Ok(RegionSampler::new(
            bounds.iter().map(|&[lo, hi]| (lo, hi)).collect(),
            v.seed,
            v.count,
        )
        .with_constraint(constraint))
    }

    /// Validate the whole file and assemble a runnable scenario.
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let (field, lienard) = self.field()?;
        let settings = self.settings()?;
        let int = &self.integrate;
        if !(int.t_end.is_finite() && int.t_start.is_finite()) || int.t_end == int.t_start {
            return Err(ConfigError::invalid(
                "integrate.t_end",
                "must differ from t_start",
            ));
        }
        if int.samples < 2 {
            return Err(ConfigError::invalid(
                "integrate.samples",
                "must be at least 2",
            ));
        }
        let x0 = self.initial_state(&field)?;
        let checks = self.checks(&field, lienard.is_some())?;
        let (cheillini, mut multipliers) = self.multipliers(&field, lienard.as_ref())?;
        if checks.iter().any(|c| c.needs_sampler()) {
            for m in &mut multipliers {
                m.sampler = Some(self.sampler(&field, &m.spec)?);
            }
        }
        let name = &self.name;
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(ConfigError::invalid(
                "name",
                "must be a non-empty file stem",
            ));
        }
        Ok(Scenario {
            name: name.clone(),
            description: self.description.clone(),
            field,
            settings,
            grid: uniform_grid(int.t_start, int.t_end, int.samples),
            x0,
            source: self.multiplier.source,
            cheillini,
            multipliers,
            checks,
            tolerances: self.verify.tolerances,
            trajectory_file: self
                .output
                .trajectory
                .clone()
                .unwrap_or(format!("{name}.csv")),
            report_file: self
                .output
                .report
                .clone()
                .unwrap_or(format!("{name}.report.toml")),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONTACT: &str = r#"
        name = "c"
        [system]
        family = "contact"
        hamiltonian = "p^2/2 + q^2/2 + 0.3*s"
        [integrate]
        t_end = 1.0
        initial = { q = [1.0], p = [0.0] }
    "#;

    #[test]
    fn contact_without_s_names_the_coordinate() {
        let err = ScenarioConfig::from_toml(CONTACT)
            .unwrap()
            .build()
            .unwrap_err();
        assert_eq!(err, ConfigError::Missing("integrate.initial.s".into()));
    }

    #[test]
    fn level_set_seed_is_solved() {
        let text = CONTACT.replace("p = [0.0] }", "p = [0.0], on_level_set = true }");
        let sc = ScenarioConfig::from_toml(&text).unwrap().build().unwrap();
        assert!((sc.x0[2] + 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn family_fields_are_required() {
        let text = CONTACT.replace("family = \"contact\"", "family = \"conformal\"");
        let err = ScenarioConfig::from_toml(&text)
            .unwrap()
            .build()
            .unwrap_err();
        assert_eq!(err, ConfigError::Missing("system.gamma".into()));

        let text = CONTACT.replace(
            "family = \"contact\"\n        hamiltonian = \"p^2/2 + q^2/2 + 0.3*s\"",
            "family = \"lienard\"\n        vprime = \"4*q\"",
        );
        let err = ScenarioConfig::from_toml(&text)
            .unwrap()
            .build()
            .unwrap_err();
        assert_eq!(err, ConfigError::Missing("system.damping".into()));
    }

    #[test]
    fn checks_are_validated() {
        let text = format!("{CONTACT}\n[verify]\nchecks = [\"div_mx\"]\n")
            .replace("p = [0.0] }", "p = [0.0], s = 0.0 }");
        let err = ScenarioConfig::from_toml(&text)
            .unwrap()
            .build()
            .unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "verify.checks"));

        let text = text.replace(
            "[verify]",
            "[multiplier]\nsource = \"closed_form\"\n[verify]",
        );
        let err = ScenarioConfig::from_toml(&text)
            .unwrap()
            .build()
            .unwrap_err();
        assert_eq!(err, ConfigError::Missing("verify.bounds".into()));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = CONTACT.replace("[integrate]", "[integrate]\nrtoll = 1e-9");
        assert!(
            matches!(ScenarioConfig::from_toml(&text), Err(ConfigError::Parse(m)) if m.contains("rtoll"))
        );
    }
}
