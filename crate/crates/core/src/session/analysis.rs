//! Aggregates finished sessions per condition and runs the rank tests.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stats::{friedman_test, mann_whitney_u, FriedmanResult, MannWhitneyResult, StatsError};
use super::SessionMetrics;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no sessions to analyze")]
    Empty,
    #[error("session {index} has no subject id")]
    NoSubject { index: usize },
    #[error("missing cells for Friedman pairing: {}", .0.join(", "))]
    MissingCells(Vec<String>),
    #[error("group `{0}` has no sessions with a {1}")]
    EmptyGroup(String, &'static str),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Outcome compared by the rank tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    #[default]
    Duration,
    Distance,
}

impl Measure {
    fn name(self) -> &'static str {
        match self {
            Measure::Duration => "duration",
            Measure::Distance => "distance",
        }
    }

    fn of(self, m: &SessionMetrics) -> Option<f64> {
        match self {
            Measure::Duration => Some(m.duration_s),
            Measure::Distance => m.tip_to_target_mm,
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "duration" => Ok(Measure::Duration),
            "distance" => Ok(Measure::Distance),
            _ => Err(format!("unknown measure `{s}` (expected duration or distance)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisOptions {
    pub measure: Measure,
    pub friedman: bool,
    pub groups: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition_label: String,
    pub n: usize,
    pub mean_duration_s: f64,
    pub success_rate: f64,
    /// Over sessions with at least one declared attempt.
    pub mean_distance_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanReport {
    pub conditions: Vec<String>,
    pub subjects: Vec<String>,
    #[serde(flatten)]
    pub result: FriedmanResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyReport {
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    #[serde(flatten)]
    pub result: MannWhitneyResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub sessions: usize,
    pub measure: Measure,
    pub conditions: Vec<ConditionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub friedman: Option<FriedmanReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mann_whitney: Option<MannWhitneyReport>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (n, sum) = xs.into_iter().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| sum / n as f64)
}

pub fn analyze(metrics: &[SessionMetrics], opts: &AnalysisOptions) -> Result<AnalysisReport, AnalysisError> {
    if metrics.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut by_condition: BTreeMap<&str, Vec<&SessionMetrics>> = BTreeMap::new();
    for m in metrics {
        by_condition.entry(&m.condition_label).or_default().push(m);
    }
    let conditions = by_condition
        .iter()
        .map(|(label, ms)| ConditionSummary {
            condition_label: label.to_string(),
            n: ms.len(),
            mean_duration_s: mean(ms.iter().map(|m| m.duration_s)).unwrap_or(0.0),
            success_rate: ms.iter().filter(|m| m.success).count() as f64 / ms.len() as f64,
            mean_distance_mm: mean(ms.iter().filter_map(|m| m.tip_to_target_mm)),
        })
        .collect();

    let friedman = if opts.friedman {
        Some(friedman_by_subject(metrics, opts.measure)?)
    } else {
        None
    };

    let mann_whitney = match &opts.groups {
        Some((a, b)) => {
            let sample = |g: &str| -> Result<Vec<f64>, AnalysisError> {
                let xs: Vec<f64> = metrics
                    .iter()
                    .filter(|m| m.group.as_deref() == Some(g))
                    .filter_map(|m| opts.measure.of(m))
                    .collect();
                if xs.is_empty() {
                    return Err(AnalysisError::EmptyGroup(g.to_owned(), opts.measure.name()));
                }
                Ok(xs)
            };
            let (xa, xb) = (sample(a)?, sample(b)?);
            Some(MannWhitneyReport {
                group_a: a.clone(),
                group_b: b.clone(),
                n_a: xa.len(),
                n_b: xb.len(),
                result: mann_whitney_u(&xa, &xb)?,
            })
        }
        None => None,
    };

    Ok(AnalysisReport {
        sessions: metrics.len(),
        measure: opts.measure,
        conditions,
        friedman,
        mann_whitney,
    })
}

/// Subjects are blocks, conditions are treatments. Repeated sessions of
/// one subject under one condition are averaged.
fn friedman_by_subject(metrics: &[SessionMetrics], measure: Measure) -> Result<FriedmanReport, AnalysisError> {
    let mut cells: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    let mut subjects = BTreeSet::new();
    let mut conditions = BTreeSet::new();
    for (index, m) in metrics.iter().enumerate() {
        let subject = m.subject.as_deref().ok_or(AnalysisError::NoSubject { index })?;
        subjects.insert(subject);
        conditions.insert(m.condition_label.as_str());
        if let Some(x) = measure.of(m) {
            cells.entry((subject, m.condition_label.as_str())).or_default().push(x);
        }
    }
    let mut missing = Vec::new();
    let mut scores = Vec::new();
    for &s in &subjects {
        let mut row = Vec::new();
        for &c in &conditions {
            match cells.get(&(s, c)).and_then(|xs| mean(xs.iter().copied())) {
                Some(x) => row.push(x),
                None => missing.push(format!("subject {s} / condition {c}")),
            }
        }
        scores.push(row);
    }
    if !missing.is_empty() {
        return Err(AnalysisError::MissingCells(missing));
    }
    Ok(FriedmanReport {
        conditions: conditions.iter().map(|s| s.to_string()).collect(),
        subjects: subjects.iter().map(|s| s.to_string()).collect(),
        result: friedman_test(&scores)?,
    })
}
