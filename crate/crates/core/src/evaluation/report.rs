//! Multi-seed aggregation of mass accuracy into a benchmark report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{mass_accuracy, relative_mass_accuracy, EvaluationError, WordExplanation};
use crate::attribution::{Method, Task};
use crate::corpus::{LabeledSentence, Scope};
use crate::model::TrainScheme;

pub const CSV_HEADER: &str = "scheme,method,seed,mean_MA,std_MA,RMA";

/// Ground-truth word masks keyed by sentence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    masks: BTreeMap<Task, Vec<bool>>,
}

impl GroundTruth {
    pub fn from_sentences(sentences: &[LabeledSentence]) -> Self {
        let masks = sentences.iter().map(|s| (Task::of(s), s.ground_truth.clone())).collect();
        Self { masks }
    }

    pub fn get(&self, task: Task) -> Option<&[bool]> {
        self.masks.get(&task).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Mean over sentences of the ground-truth share `k / d`: the expected
    /// mass accuracy of a uniformly random explanation.
    pub fn mean_positive_share(&self) -> f64 {
        let n = self.masks.len().max(1) as f64;
        self.masks
            .values()
            .map(|m| m.iter().filter(|&&h| h).count() as f64 / m.len().max(1) as f64)
            .sum::<f64>()
            / n
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub scope: Scope,
    pub config_hash: String,
    pub baseline: TrainScheme,
}

/// Statistics across the sentences of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub scheme: TrainScheme,
    pub method: Method,
    pub seed: u64,
    pub n_sentences: usize,
    pub mean_ma: f64,
    pub std_ma: f64,
}

/// Statistics across the seed means of one (scheme, method) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scheme: TrainScheme,
    pub method: Method,
    pub n_seeds: usize,
    pub mean_ma: f64,
    pub std_ma: f64,
    /// Absent when the baseline cell is missing or has zero mean.
    pub rma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metadata: ReportMetadata,
    /// Ordered by scheme, method, seed.
    pub seeds: Vec<SeedSummary>,
    /// Ordered by scheme, method.
    pub cells: Vec<CellSummary>,
}

/// Relative mass accuracy of one method along a sequence of schemes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub method: Method,
    pub rma: Vec<(TrainScheme, Option<f64>)>,
}

impl TrendRow {
    /// True when every step is present and no step decreases.
    pub fn is_non_decreasing(&self) -> bool {
        let values: Option<Vec<f64>> = self.rma.iter().map(|(_, v)| *v).collect();
        values.is_some_and(|v| v.windows(2).all(|w| w[0] <= w[1]))
    }
}

/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

type RunKey = (TrainScheme, Method, u64);

/// Requires an explanation for every ground-truth sentence in every
/// (scheme, method, seed) run; gaps are reported together.
pub fn summarize(
    explanations: &[WordExplanation],
    truth: &GroundTruth,
    schemes: &[TrainScheme],
    methods: &[Method],
    seeds: &[u64],
    metadata: ReportMetadata,
) -> Result<BenchmarkReport, EvaluationError> {
    if truth.is_empty() || schemes.is_empty() || methods.is_empty() || seeds.is_empty() {
        return Err(EvaluationError::Contract("empty evaluation grid".into()));
    }
    let mut runs: BTreeMap<RunKey, BTreeMap<Task, f64>> = BTreeMap::new();
    for &scheme in schemes {
        for &method in methods {
            for &seed in seeds {
                runs.insert((scheme, method, seed), BTreeMap::new());
            }
        }
    }
    for e in explanations {
        let Some(run) = runs.get_mut(&(e.scheme, e.method, e.seed)) else {
            continue;
        };
        let task = e.task();
        let mask = truth.get(task).ok_or_else(|| {
            EvaluationError::Contract(format!(
                "no ground truth for sentence {} label {}",
                task.sentence_idx, task.label
            ))
        })?;
        let ma = mass_accuracy(mask, e)?;
        if run.insert(task, ma).is_some() {
            return Err(EvaluationError::Contract(format!(
                "duplicate explanation for {}/{}/seed{} sentence {} label {}",
                e.scheme, e.method, e.seed, task.sentence_idx, task.label
            )));
        }
    }
    let gaps: Vec<String> = runs
        .iter()
        .filter(|(_, r)| r.len() != truth.len())
        .map(|((scheme, method, seed), r)| {
            format!("{scheme}/{method}/seed{seed} ({} of {} sentences)", r.len(), truth.len())
        })
        .collect();
    if !gaps.is_empty() {
        return Err(EvaluationError::IncompleteGrid(gaps));
    }

    let seed_rows: Vec<SeedSummary> = runs
        .iter()
        .map(|(&(scheme, method, seed), r)| {
            let values: Vec<f64> = r.values().copied().collect();
            let (mean_ma, std_ma) = mean_std(&values);
            SeedSummary {
                scheme,
                method,
                seed,
                n_sentences: values.len(),
                mean_ma,
                std_ma,
            }
        })
        .collect();

    let mut by_cell: BTreeMap<(TrainScheme, Method), Vec<f64>> = BTreeMap::new();
    for row in &seed_rows {
        by_cell.entry((row.scheme, row.method)).or_default().push(row.mean_ma);
    }
    let means: BTreeMap<(TrainScheme, Method), (f64, f64)> =
        by_cell.iter().map(|(k, v)| (*k, mean_std(v))).collect();
    let cells = by_cell
        .iter()
        .map(|(&(scheme, method), v)| {
            let (mean_ma, std_ma) = means[&(scheme, method)];
            let rma = means.get(&(metadata.baseline, method)).and_then(|(base, _)| {
                relative_mass_accuracy(mean_ma, *base)
                    .map_err(|e| log::warn!("{scheme}/{method}: {e}"))
                    .ok()
            });
            CellSummary {
                scheme,
                method,
                n_seeds: v.len(),
                mean_ma,
                std_ma,
                rma,
            }
        })
        .collect();
    Ok(BenchmarkReport {
        metadata,
        seeds: seed_rows,
        cells,
    })
}

/// Per-method relative mass accuracy along `schemes`, in method order.
pub fn trend_ladder(report: &BenchmarkReport, schemes: &[TrainScheme]) -> Vec<TrendRow> {
    let mut methods: Vec<Method> = report.cells.iter().map(|c| c.method).collect();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| TrendRow {
            method,
            rma: schemes
                .iter()
                .map(|&s| (s, report.cell(s, method).and_then(|c| c.rma)))
                .collect(),
        })
        .collect()
}

impl BenchmarkReport {
    pub fn cell(&self, scheme: TrainScheme, method: Method) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.scheme == scheme && c.method == method)
    }

    /// Seed rows carry an empty RMA field; cell rows use the seed `all`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.seeds {
            let _ = writeln!(out, "{},{},{},{:.6},{:.6},", r.scheme, r.method, r.seed, r.mean_ma, r.std_ma);
        }
        for c in &self.cells {
            let rma = c.rma.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{},all,{:.6},{:.6},{}", c.scheme, c.method, c.mean_ma, c.std_ma, rma);
        }
        out
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fixed-width table of [`trend_ladder`] over the trained schemes.
    pub fn trend_text(&self) -> String {
        let ladder = [TrainScheme::C, TrainScheme::CE, TrainScheme::CEA];
        let mut out = format!("RMA vs {}\n{:<22}", self.metadata.baseline, "method");
        for s in ladder {
            let _ = write!(out, "{:>10}", s.as_str());
        }
        out.push_str("  trend\n");
        for row in trend_ladder(self, &ladder) {
            let _ = write!(out, "{:<22}", row.method.id());
            for (_, v) in &row.rma {
                match v {
                    Some(v) => {
                        let _ = write!(out, "{v:>10.3}");
                    }
                    None => {
                        let _ = write!(out, "{:>10}", "-");
                    }
                }
            }
            out.push_str(if row.is_non_decreasing() { "  rising\n" } else { "  mixed\n" });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(n: usize) -> GroundTruth {
        GroundTruth {
            masks: (0..n).map(|i| (Task::new(i, 0), vec![true, false])).collect(),
        }
    }

    fn expl(scheme: TrainScheme, method: Method, seed: u64, idx: usize, ma: f64) -> WordExplanation {
        WordExplanation {
            word_scores: vec![ma, 1.0 - ma],
            sentence_idx: idx,
            label: 0,
            method,
            scheme,
            seed,
        }
    }

    fn meta() -> ReportMetadata {
        ReportMetadata {
            scope: Scope::AllWords,
            config_hash: "abc".into(),
            baseline: TrainScheme::ZS,
        }
    }

    #[test]
    fn population_std_over_two_sentences() {
        let ex = [
            expl(TrainScheme::C, Method::Lime, 1, 0, 0.4),
            expl(TrainScheme::C, Method::Lime, 1, 1, 0.6),
        ];
        let r = summarize(&ex, &truth(2), &[TrainScheme::C], &[Method::Lime], &[1], meta()).unwrap();
        assert!((r.seeds[0].mean_ma - 0.5).abs() < 1e-15);
        assert!((r.seeds[0].std_ma - 0.1).abs() < 1e-15);
        assert_eq!(r.cells[0].rma, None);
    }

    #[test]
    fn baseline_cells_have_unit_rma_and_order_is_stable() {
        let schemes = [TrainScheme::CE, TrainScheme::ZS];
        let methods = [Method::KernelShap, Method::Saliency];
        let mut ex = Vec::new();
        for &s in &schemes {
            for &m in &methods {
                for seed in [3, 1] {
                    for i in 0..3 {
                        ex.push(expl(s, m, seed, i, 0.1 + 0.07 * (i as f64 + seed as f64)));
                    }
                }
            }
        }
        let r = summarize(&ex, &truth(3), &schemes, &methods, &[3, 1], meta()).unwrap();
        for c in &r.cells {
            if c.scheme == TrainScheme::ZS {
                assert_eq!(c.rma, Some(1.0));
            }
        }
        let order: Vec<_> = r.seeds.iter().map(|s| (s.scheme, s.method, s.seed)).collect();
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted);
        ex.reverse();
        let again = summarize(&ex, &truth(3), &schemes, &methods, &[1, 3], meta()).unwrap();
        assert_eq!(again.to_csv(), r.to_csv());
        assert_eq!(BenchmarkReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn gaps_are_listed() {
        let ex = [expl(TrainScheme::C, Method::Lime, 1, 0, 0.4)];
        let err = summarize(&ex, &truth(2), &[TrainScheme::C], &[Method::Lime, Method::Saliency], &[1], meta())
            .unwrap_err();
        match err {
            EvaluationError::IncompleteGrid(gaps) => {
                assert_eq!(gaps.len(), 2);
                assert!(gaps[0].contains("saliency") && gaps[0].contains("0 of 2"));
                assert!(gaps[1].contains("lime") && gaps[1].contains("1 of 2"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicates_rejected() {
        let ex = [
            expl(TrainScheme::C, Method::Lime, 1, 0, 0.4),
            expl(TrainScheme::C, Method::Lime, 1, 0, 0.4),
        ];
        assert!(summarize(&ex, &truth(1), &[TrainScheme::C], &[Method::Lime], &[1], meta()).is_err());
    }

    #[test]
    fn csv_shape() {
        let ex = [
            expl(TrainScheme::ZS, Method::Lime, 1, 0, 0.25),
            expl(TrainScheme::C, Method::Lime, 1, 0, 0.5),
        ];
        let r = summarize(&ex, &truth(1), &[TrainScheme::ZS, TrainScheme::C], &[Method::Lime], &[1], meta()).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "ZS,lime,1,0.250000,0.000000,");
        assert_eq!(lines[4], "C,lime,all,0.500000,0.000000,2.000000");
        let trend = trend_ladder(&r, &[TrainScheme::C, TrainScheme::CE]);
        assert_eq!(trend[0].rma, [(TrainScheme::C, Some(2.0)), (TrainScheme::CE, None)]);
        assert!(!trend[0].is_non_decreasing());
        assert!(r.trend_text().contains("lime"));
    }

    #[test]
    fn positive_share() {
        assert_eq!(truth(4).mean_positive_share(), 0.5);
    }
}
