//! Experiment reports and their two serializations.
//!
//! Tabular output has one row per sample record under a fixed header:
//!
//! ```text
//! domain,n,D,N,seed,d,xi_spec,method,kappa_conv,normal_conv,K,M,dB,prediction,ratio,s_low,verdict
//! ```
//!
//! Floats are printed with 17 significant digits and absent values are empty.
//! Structured output is JSON with a top-level `schema_version`.

use std::fmt::{self, Write as _};

use bergman_lab::{EnvelopeFit, KappaConvention, NormalTermConvention};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, OutputFormat};

pub const SCHEMA_VERSION: u32 = 1;

pub const TABULAR_HEADER: &str =
    "domain,n,D,N,seed,d,xi_spec,method,kappa_conv,normal_conv,K,M,dB,prediction,ratio,s_low,verdict";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    /// A recorded failure of an uncorrected convention.
    ExpectedFail,
    Fail,
    /// The inputs make the check meaningless (squeezing value at the floor).
    Invalid,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Verdict::Fail | Verdict::Invalid)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::ExpectedFail => "expected-fail",
            Verdict::Fail => "fail",
            Verdict::Invalid => "invalid",
        })
    }
}

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Experiment part that produced the record.
    pub experiment: String,
    pub domain: String,
    pub n: usize,
    pub degree: u32,
    pub samples: u64,
    pub seed: u64,
    /// `|δ(z)|`, absent where the defining function is singular.
    pub d: Option<f64>,
    pub xi_spec: String,
    pub method: String,
    pub kappa_conv: KappaConvention,
    pub normal_conv: NormalTermConvention,
    /// `(re, im)` coordinates of `z`.
    pub point: Vec<[f64; 2]>,
    pub vector: Vec<[f64; 2]>,
    pub kernel: Option<f64>,
    pub kernel_std_error: Option<f64>,
    pub m: Option<f64>,
    pub m_std_error: Option<f64>,
    pub metric: Option<f64>,
    pub metric_std_error: Option<f64>,
    /// Second metric route on the same model.
    pub cross_check: Option<f64>,
    /// Closed-form value of the quantity the row measures, where known.
    pub reference: Option<f64>,
    /// Asymptotic prediction or lower sandwich bound.
    pub prediction: Option<f64>,
    pub upper_bound: Option<f64>,
    pub ratio: Option<f64>,
    pub levi: Option<f64>,
    pub s_low: Option<f64>,
    pub squeezing_source: Option<String>,
    pub extrapolation_risk: bool,
    pub verdict: Verdict,
}

impl SampleRecord {
    /// Value printed in the `prediction` column.
    pub fn tabular_prediction(&self) -> Option<f64> {
        self.prediction.or(self.reference)
    }
}

/// Invariant checks that are not tied to a single row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub verdict: Verdict,
    pub value: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub std_error: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRecord {
    pub xi_spec: String,
    pub kappa_conv: KappaConvention,
    pub normal_conv: NormalTermConvention,
    pub metric_method: String,
    pub fit: EnvelopeFit,
    pub max_constant: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub degree: u32,
    pub basis_size: usize,
    pub rank: usize,
    pub condition_number: Option<f64>,
    pub accepted: u64,
    pub volume: f64,
    pub volume_std_error: f64,
    pub blocks: usize,
}

/// Wall-clock fields; excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub domain: String,
    pub model: Option<ModelSummary>,
    pub records: Vec<SampleRecord>,
    pub envelopes: Vec<EnvelopeRecord>,
    pub checks: Vec<CheckRecord>,
    pub notes: Vec<String>,
    /// Any squeezing value at the floor.
    pub invalid: bool,
    pub verdict: Verdict,
    pub timing: Timing,
}

impl ExperimentReport {
    /// The report with timing fields zeroed.
    pub fn without_timing(&self) -> Self {
        Self { timing: Timing::default(), ..self.clone() }
    }

    pub fn verdicts(&self) -> impl Iterator<Item = Verdict> + '_ {
        self.records
            .iter()
            .map(|r| r.verdict)
            .chain(self.checks.iter().map(|c| c.verdict))
            .chain(self.envelopes.iter().map(|e| e.verdict))
    }

    /// Overall verdict from the invalid flag and all individual verdicts.
    pub fn summarize(&mut self) {
        self.verdict = if self.invalid {
            Verdict::Invalid
        } else if self.verdicts().any(Verdict::is_failure) {
            Verdict::Fail
        } else {
            Verdict::Pass
        };
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn float(out: &mut String, x: Option<f64>) {
    if let Some(x) = x {
        write!(out, "{x:.16e}").unwrap();
    }
}

/// Serializes a report; identical reports give identical bytes.
pub fn emit_report(report: &ExperimentReport, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Structured => {
            let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
            bytes.push(b'\n');
            bytes
        }
        OutputFormat::Tabular => {
            let mut out = String::with_capacity(256 * (report.records.len() + 1));
            out.push_str(TABULAR_HEADER);
            out.push('\n');
            for r in &report.records {
                write!(
                    out,
                    "{},{},{},{},{},",
                    r.domain, r.n, r.degree, r.samples, r.seed
                )
                .unwrap();
                float(&mut out, r.d);
                write!(out, ",{},{},{},{},", r.xi_spec, r.method, r.kappa_conv.tag(), r.normal_conv.tag()).unwrap();
                for x in [r.kernel, r.m, r.metric, r.tabular_prediction(), r.ratio, r.s_low] {
                    float(&mut out, x);
                    out.push(',');
                }
                writeln!(out, "{}", r.verdict).unwrap();
            }
            out.into_bytes()
        }
    }
}

pub fn parse_structured(bytes: &[u8]) -> Result<ExperimentReport, serde_json::Error> {
    serde_json::from_slice(bytes)
}
