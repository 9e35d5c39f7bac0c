//! Serializable scenario report, written as TOML with one `[[checks]]`
//! block per check.

use std::collections::BTreeMap;

use jlm_core::multiplier::CheilliniRoots;
use jlm_core::verify::ResidualStats;
use jlm_core::VerificationReport;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub description: String,
    pub family: String,
    pub n: usize,
    pub verdict: Verdict,
    pub exit_code: u8,
    pub integration: IntegrationBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cheillini: Option<CheilliniBlock>,
    pub multipliers: Vec<MultiplierBlock>,
    pub checks: Vec<CheckBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrationBlock {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
    pub x0: Vec<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheilliniBlock {
    pub c: f64,
    pub discriminant: f64,
    pub l_minus: f64,
    pub l_plus: f64,
    pub constancy_residual: f64,
    pub root_residuals: [f64; 2],
}

impl From<&CheilliniRoots> for CheilliniBlock {
    fn from(r: &CheilliniRoots) -> Self {
        CheilliniBlock {
            c: r.c,
            discriminant: r.discriminant(),
            l_minus: r.l_minus,
            l_plus: r.l_plus,
            constancy_residual: r.residual,
            root_residuals: [r.root_residual(r.l_minus), r.root_residual(r.l_plus)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierBlock {
    pub label: String,
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub form: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsBlock {
    pub count: usize,
    pub max: f64,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

impl From<&ResidualStats> for StatsBlock {
    fn from(s: &ResidualStats) -> Self {
        StatsBlock {
            count: s.count,
            max: s.max,
            mean: s.mean,
            p50: s.p50,
            p90: s.p90,
            p99: s.p99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessBlock {
    pub point: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckBlock {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<String>,
    pub verdict: Verdict,
    /// `max <= tolerance`; negative controls pass when this is false.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_tolerance: Option<bool>,
    pub expect_failure: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_exit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<StatsBlock>,
    pub metadata: BTreeMap<String, String>,
    pub witnesses: Vec<WitnessBlock>,
}

impl CheckBlock {
    pub fn from_report(report: &VerificationReport, multiplier: Option<&str>) -> Self {
        CheckBlock {
            name: report.check.clone(),
            multiplier: multiplier.map(str::to_string),
            verdict: if report.meets_expectation() {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            within_tolerance: Some(report.pass),
            expect_failure: report.expect_failure,
            tolerance: Some(report.tolerance),
            domain_exit: report.domain_exit,
            reason: None,
            stats: Some((&report.stats).into()),
            metadata: report.metadata.clone(),
            witnesses: report
                .witnesses
                .iter()
                .map(|w| WitnessBlock {
                    point: w.point.clone(),
                    time: w.time,
                    residual: w.residual,
                })
                .collect(),
        }
    }

    pub fn without_report(
        name: &str,
        multiplier: Option<&str>,
        verdict: Verdict,
        reason: String,
    ) -> Self {
        CheckBlock {
            name: name.to_string(),
            multiplier: multiplier.map(str::to_string),
            verdict,
            within_tolerance: None,
            expect_failure: false,
            tolerance: None,
            domain_exit: None,
            reason: Some(reason),
            stats: None,
            metadata: BTreeMap::new(),
            witnesses: Vec::new(),
        }
    }
}

impl ScenarioReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are all representable in TOML")
    }
}
