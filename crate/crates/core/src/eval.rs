//! Confusion matrices, exact per-class metrics and the regime comparison.
//!
//! Counts are integers and every metric is kept as a [`Ratio<u64>`]; floats
//! only appear when a value is rendered. Rendering is fixed at two decimals
//! of a percentage, rounded half up.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassProbabilities;
use crate::corpus::AbsLabel;
use crate::error::{Error, Result};
use crate::model::{AbsNet, Sample};
use crate::nn::ParameterStore;

/// `counts[i][j]`: pairs of true class `i` predicted as class `j`, classes in
/// [`AbsLabel::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix3 {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix3 {
    pub fn from_rows(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, truth: AbsLabel, predicted: AbsLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Relabels classes: class `i` becomes class `perm[i]` on both axes.
    pub fn permuted(&self, perm: [usize; 3]) -> Self {
        let mut out = Self::default();
        for i in 0..3 {
            for j in 0..3 {
                out.counts[perm[i]][perm[j]] = self.counts[i][j];
            }
        }
        out
    }
}

/// Exact metrics of one confusion matrix. A precision or recall whose
/// denominator is zero is `None`, which is not the same thing as zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsReport {
    pub regime: Option<String>,
    pub matrix: ConfusionMatrix3,
    pub precision: [Option<Ratio<u64>>; 3],
    pub recall: [Option<Ratio<u64>>; 3],
    pub accuracy: Ratio<u64>,
}

pub fn metrics(cm: &ConfusionMatrix3) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    let ratio = |num: u64, den: u64| (den > 0).then(|| Ratio::new(num, den));
    Ok(MetricsReport {
        regime: None,
        matrix: *cm,
        precision: std::array::from_fn(|j| ratio(cm.counts[j][j], cm.col_sum(j))),
        recall: std::array::from_fn(|i| ratio(cm.counts[i][i], cm.row_sum(i))),
        accuracy: Ratio::new(cm.trace(), total),
    })
}

/// `r` as a percentage with two decimals, rounded half up, e.g. `78.95`.
pub fn percent(r: Ratio<u64>) -> String {
    let (num, den) = (*r.numer() as u128, *r.denom() as u128);
    let hundredths = (num * 20_000 + den) / (2 * den);
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

fn percent_or_undefined(r: Option<Ratio<u64>>) -> String {
    r.map_or_else(|| "undefined".to_owned(), percent)
}

/// Machine-readable form of a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub regime: Option<String>,
    pub classes: Vec<String>,
    pub counts: [[u64; 3]; 3],
    pub total: u64,
    /// Percentages at two decimals; `null` when undefined.
    pub precision: Vec<Option<String>>,
    pub recall: Vec<Option<String>>,
    pub accuracy: String,
    /// Exact fractions as `"num/den"`.
    pub precision_exact: Vec<Option<String>>,
    pub recall_exact: Vec<Option<String>>,
    pub accuracy_exact: String,
}

fn frac(r: Ratio<u64>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

impl MetricsReport {
    pub fn with_regime(mut self, regime: impl Into<String>) -> Self {
        self.regime = Some(regime.into());
        self
    }

    pub fn to_json(&self) -> ReportJson {
        ReportJson {
            regime: self.regime.clone(),
            classes: AbsLabel::ALL.iter().map(|l| l.to_string()).collect(),
            counts: self.matrix.counts,
            total: self.matrix.total(),
            precision: self.precision.iter().map(|p| p.map(percent)).collect(),
            recall: self.recall.iter().map(|r| r.map(percent)).collect(),
            accuracy: percent(self.accuracy),
            precision_exact: self.precision.iter().map(|p| p.map(frac)).collect(),
            recall_exact: self.recall.iter().map(|r| r.map(frac)).collect(),
            accuracy_exact: frac(self.accuracy),
        }
    }

    /// Confusion matrix with precision and recall rows, then accuracy.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        if let Some(r) = &self.regime {
            writeln!(s, "## {r}\n").unwrap();
        }
        let names: Vec<String> = AbsLabel::ALL.iter().map(|l| format!("pred {l}")).collect();
        writeln!(s, "| true \\ predicted | {} |", names.join(" | ")).unwrap();
        writeln!(s, "|---|---:|---:|---:|").unwrap();
        for (i, label) in AbsLabel::ALL.iter().enumerate() {
            let row = self.matrix.counts[i].map(|c| c.to_string());
            writeln!(s, "| {label} | {} |", row.join(" | ")).unwrap();
        }
        let p = self.precision.map(percent_or_undefined);
        let r = self.recall.map(percent_or_undefined);
        writeln!(s, "| precision (%) | {} |", p.join(" | ")).unwrap();
        writeln!(s, "| recall (%) | {} |", r.join(" | ")).unwrap();
        writeln!(s, "\naccuracy: {}%", percent(self.accuracy)).unwrap();
        s
    }
}

/// One classified pair, as written to `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pair_id: String,
    pub label: AbsLabel,
    pub predicted: AbsLabel,
    pub probabilities: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix3,
    /// Sorted by `pair_id`.
    pub predictions: Vec<Prediction>,
}

/// Classifies every sample (in parallel) and tallies the predictions in
/// `pair_id` order.
pub fn evaluate(
    net: &AbsNet,
    params: &ParameterStore<f32>,
    test: &[Sample<f32>],
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(s) = test.iter().find(|s| s.label.is_none()) {
        return Err(Error::UnlabeledPair(s.pair_id.clone()));
    }
    let mut predictions = test
        .par_iter()
        .map(|s| {
            let probs: ClassProbabilities = net.classify(params, s)?;
            Ok(Prediction {
                pair_id: s.pair_id.clone(),
                label: s.label.expect("checked above"),
                predicted: probs.predict(),
                probabilities: probs.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    predictions.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    Ok(Evaluation {
        matrix: tally(&predictions),
        predictions,
    })
}

pub fn tally(predictions: &[Prediction]) -> ConfusionMatrix3 {
    let mut cm = ConfusionMatrix3::default();
    for p in predictions {
        cm.record(p.label, p.predicted);
    }
    cm
}

/// Writes `report.json`, `report.md` and `predictions.jsonl` into `dir`.
pub fn write_report(dir: &Path, report: &MetricsReport, predictions: &[Prediction]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(path, e))
    };
    write(
        "report.json",
        serde_json::to_string_pretty(&report.to_json())? + "\n",
    )?;
    write("report.md", report.to_markdown())?;
    let mut lines = String::new();
    for p in predictions {
        lines.push_str(&serde_json::to_string(p)?);
        lines.push('\n');
    }
    write("predictions.jsonl", lines)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    body.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Accuracies reported for the original full-scale corpus. They are shown
/// next to desk results for orientation only.
pub const REFERENCE_ACCURACY: [(&str, &str); 3] = [
    ("cl_transfer", "80.33"),
    ("cl_freeze", "77.33"),
    ("cl_scratch", "77.00"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub regime: String,
    pub accuracy: String,
    pub accuracy_exact: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Highest accuracy first; ties ordered by regime name.
    pub rows: Vec<ComparisonRow>,
    pub reference: Vec<ComparisonRow>,
}

pub fn compare_regimes(reports: &[MetricsReport]) -> Comparison {
    let mut sorted: Vec<&MetricsReport> = reports.iter().collect();
    sorted.sort_by(|a, b| {
        b.accuracy
            .cmp(&a.accuracy)
            .then_with(|| a.regime.cmp(&b.regime))
    });
    let rows = sorted
        .into_iter()
        .map(|r| ComparisonRow {
            regime: r.regime.clone().unwrap_or_default(),
            accuracy: percent(r.accuracy),
            accuracy_exact: frac(r.accuracy),
        })
        .collect();
    let reference = REFERENCE_ACCURACY
        .iter()
        .map(|&(regime, acc)| ComparisonRow {
            regime: regime.to_owned(),
            accuracy: acc.to_owned(),
            accuracy_exact: String::new(),
        })
        .collect();
    Comparison { rows, reference }
}

impl Comparison {
    pub fn to_markdown(&self) -> String {
        let table = |rows: &[ComparisonRow]| {
            let head: Vec<&str> = rows.iter().map(|r| r.regime.as_str()).collect();
            let vals: Vec<&str> = rows.iter().map(|r| r.accuracy.as_str()).collect();
            format!(
                "| | {} |\n|---|{}\n| accuracy (%) | {} |\n",
                head.join(" | "),
                "---:|".repeat(rows.len()),
                vals.join(" | ")
            )
        };
        format!(
            "## Regime comparison\n\n{}\n### Reference (full-scale corpus, not reproduced)\n\n{}",
            table(&self.rows),
            table(&self.reference)
        )
    }

    /// Writes `comparison.json` and `comparison.md` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("comparison.json");
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(json, e))?;
        let md = dir.join("comparison.md");
        fs::write(&md, self.to_markdown()).map_err(|e| Error::io(md, e))
    }
}
