//! Scoring a manifest with a model and summarizing per-class correlations.

use std::collections::HashSet;
use std::fmt::Write as _;

use super::correlation::{correlations, Correlations, MIN_PAIRS};
use super::manifest::{DatasetManifest, DistortionClass};
use crate::error::Result;
use crate::features::{extract_batch, fmt_f64, FeatureConfig};
use crate::net::NetworkModel;
use crate::par::{map_ordered, Jobs};

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub path: String,
    pub class: DistortionClass,
    pub target: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFailure {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scored {
    /// In manifest order.
    pub predictions: Vec<Prediction>,
    pub failures: Vec<ScoreFailure>,
}

/// Extracts features and predicts every record. Per-record failures are
/// collected rather than aborting.
pub fn score_manifest(model: &NetworkModel, manifest: &DatasetManifest, jobs: Jobs) -> Scored {
    let cfg = FeatureConfig {
        gradient: model.meta.gradient,
    };
    let paths = manifest.resolved_paths();
    let features = extract_batch(&paths, &cfg, jobs);
    let mut out = Scored::default();
    for (rec, f) in manifest.records().iter().zip(features) {
        match f.and_then(|v| model.forward(&v)) {
            Ok(predicted) => out.predictions.push(Prediction {
                path: rec.path.clone(),
                class: rec.class,
                target: rec.target,
                predicted,
            }),
            Err(e) => out.failures.push(ScoreFailure {
                path: rec.path.clone(),
                message: e.to_string(),
            }),
        }
    }
    out
}

/// Predicts from precomputed raw feature rows, in parallel, in order.
pub fn predict_rows<R: AsRef<[f64]> + Sync>(model: &NetworkModel, rows: &[R], jobs: Jobs) -> Result<Vec<f64>> {
    map_ordered(rows, jobs, |_, r| model.forward(r.as_ref())).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub n: usize,
    pub correlations: Correlations,
    /// Set when the group is too small or constant for all three metrics.
    pub flagged: bool,
}

impl GroupStats {
    fn compute(preds: &[&Prediction]) -> Result<Self> {
        let x: Vec<f64> = preds.iter().map(|p| p.predicted).collect();
        let y: Vec<f64> = preds.iter().map(|p| p.target).collect();
        let c = correlations(&x, &y)?;
        Ok(Self {
            n: preds.len(),
            correlations: c,
            flagged: preds.len() < MIN_PAIRS || !c.is_complete(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// Which records the report covers, e.g. `full` or `held_out`.
    pub subset: String,
    /// Classes present, in canonical order.
    pub classes: Vec<(DistortionClass, GroupStats)>,
    pub all: GroupStats,
    pub predictions: Vec<Prediction>,
    pub failures: Vec<ScoreFailure>,
    /// Records the subset was drawn from, including failures.
    pub records: usize,
}

impl EvaluationReport {
    pub fn from_predictions(
        subset: impl Into<String>,
        predictions: Vec<Prediction>,
        failures: Vec<ScoreFailure>,
    ) -> Result<Self> {
        let mut classes = Vec::new();
        for class in DistortionClass::ALL {
            let group: Vec<&Prediction> = predictions.iter().filter(|p| p.class == class).collect();
            if !group.is_empty() {
                classes.push((class, GroupStats::compute(&group)?));
            }
        }
        let all = GroupStats::compute(&predictions.iter().collect::<Vec<_>>())?;
        Ok(Self {
            subset: subset.into(),
            classes,
            all,
            records: predictions.len() + failures.len(),
            predictions,
            failures,
        })
    }

    /// Fraction of records that were scored.
    pub fn coverage(&self) -> f64 {
        if self.records == 0 {
            return 0.0;
        }
        self.predictions.len() as f64 / self.records as f64
    }

    /// Correlation table: metrics as rows, classes plus `All` as columns.
    pub fn to_table(&self) -> String {
        let mut heads: Vec<&str> = self.classes.iter().map(|(c, _)| c.label()).collect();
        heads.push("All");
        let stats: Vec<&GroupStats> = self.classes.iter().map(|(_, s)| s).chain([&self.all]).collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "subset: {} ({} of {} records scored)",
            self.subset,
            self.predictions.len(),
            self.records
        );
        let _ = write!(out, "{:<10}", "");
        for h in &heads {
            let _ = write!(out, "{h:>10}");
        }
        out.push('\n');
        type Metric = fn(&Correlations) -> Option<f64>;
        let metrics: [(&str, Metric); 3] = [
            ("Pearson", |c| c.pearson),
            ("Kendall", |c| c.kendall),
            ("Spearman", |c| c.spearman),
        ];
        for (name, get) in metrics {
            let _ = write!(out, "{name:<10}");
            for s in &stats {
                match get(&s.correlations) {
                    Some(v) => {
                        let _ = write!(out, "{v:>10.4}");
                    }
                    None => {
                        let _ = write!(out, "{:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<10}", "n");
        for s in &stats {
            let _ = write!(out, "{:>10}", s.n);
        }
        out.push('\n');
        if stats.iter().any(|s| s.flagged) {
            out.push_str("- : fewer than 3 images or constant scores\n");
        }
        out
    }

    pub const CSV_HEADER: &'static str = "subset,class,n,pearson,spearman,kendall,flagged";

    /// One row per class plus `all`.
    pub fn to_csv_rows(&self) -> String {
        let cell = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let rows = self.classes.iter().map(|(c, s)| (c.as_str(), s)).chain([("all", &self.all)]);
        let mut out = String::new();
        for (name, s) in rows {
            let c = &s.correlations;
            let _ = writeln!(
                out,
                "{},{name},{},{},{},{},{}",
                self.subset,
                s.n,
                cell(c.pearson),
                cell(c.spearman),
                cell(c.kendall),
                s.flagged
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.to_csv_rows())
    }

    pub fn predictions_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["path", "class", "target", "predicted"]).expect("in-memory write");
        for p in &self.predictions {
            w.write_record([p.path.as_str(), p.class.as_str(), &fmt_f64(p.target), &fmt_f64(p.predicted)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Report over every record of the manifest.
pub fn evaluate(model: &NetworkModel, manifest: &DatasetManifest, jobs: Jobs) -> Result<EvaluationReport> {
    let s = score_manifest(model, manifest, jobs);
    EvaluationReport::from_predictions("full", s.predictions, s.failures)
}

/// A `held_out` report restricted to `held_out` paths (when any are in the
/// manifest) followed by the `full` report, from a single scoring pass.
pub fn evaluate_with_held_out(
    model: &NetworkModel,
    manifest: &DatasetManifest,
    held_out: &HashSet<String>,
    jobs: Jobs,
) -> Result<Vec<EvaluationReport>> {
    let s = score_manifest(model, manifest, jobs);
    let mut reports = Vec::new();
    if manifest.records().iter().any(|r| held_out.contains(&r.path)) {
        let preds = s.predictions.iter().filter(|p| held_out.contains(&p.path)).cloned().collect();
        let fails = s.failures.iter().filter(|f| held_out.contains(&f.path)).cloned().collect();
        reports.push(EvaluationReport::from_predictions("held_out", preds, fails)?);
    }
    reports.push(EvaluationReport::from_predictions("full", s.predictions, s.failures)?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(path: &str, class: DistortionClass, target: f64, predicted: f64) -> Prediction {
        Prediction {
            path: path.into(),
            class,
            target,
            predicted,
        }
    }

    #[test]
    fn exact_predictions_correlate_perfectly() {
        let preds: Vec<Prediction> = (0..12)
            .map(|i| {
                let class = if i % 2 == 0 { DistortionClass::Wn } else { DistortionClass::Gblur };
                pred(&format!("{i}.pgm"), class, i as f64 * 1.7, i as f64 * 1.7)
            })
            .collect();
        let r = EvaluationReport::from_predictions("full", preds, vec![]).unwrap();
        assert_eq!(r.classes.len(), 2);
        for s in r.classes.iter().map(|(_, s)| s).chain([&r.all]) {
            let c = s.correlations;
            for v in [c.pearson, c.spearman, c.kendall] {
                assert!((v.unwrap() - 1.0).abs() < 1e-12);
            }
            assert!(!s.flagged);
        }
        assert_eq!(r.classes.iter().map(|(_, s)| s.n).sum::<usize>(), r.all.n);
    }

    #[test]
    fn single_class_matches_all() {
        let preds: Vec<Prediction> = [3.0, 1.0, 4.0, 1.5, 5.0]
            .iter()
            .enumerate()
            .map(|(i, &p)| pred(&format!("{i}"), DistortionClass::Jpeg, i as f64, p))
            .collect();
        let r = EvaluationReport::from_predictions("full", preds, vec![]).unwrap();
        assert_eq!(r.classes.len(), 1);
        assert_eq!(r.classes[0].1, r.all);
    }

    #[test]
    fn small_class_is_flagged() {
        let mut preds: Vec<Prediction> =
            (0..5).map(|i| pred(&format!("a{i}"), DistortionClass::Wn, i as f64, i as f64)).collect();
        preds.push(pred("b0", DistortionClass::Pristine, 0.0, 0.3));
        preds.push(pred("b1", DistortionClass::Pristine, 0.0, 0.1));
        let fails = vec![ScoreFailure {
            path: "c".into(),
            message: "gone".into(),
        }];
        let r = EvaluationReport::from_predictions("full", preds, fails).unwrap();
        let pristine = r.classes.iter().find(|(c, _)| *c == DistortionClass::Pristine).unwrap().1;
        assert!(pristine.flagged && pristine.correlations.pearson.is_none());
        assert_eq!(r.records, 8);
        assert!((r.coverage() - 7.0 / 8.0).abs() < 1e-15);
        let table = r.to_table();
        assert!(table.contains("Pearson") && table.contains("All") && table.contains(" -"));
        let csv = r.to_csv();
        assert!(csv.starts_with(EvaluationReport::CSV_HEADER));
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.contains("full,pristine,2,,,,true"));
    }

    #[test]
    fn predictions_csv_quotes_paths() {
        let r = EvaluationReport::from_predictions("full", vec![pred("a,b", DistortionClass::Wn, 1.0, 2.0)], vec![])
            .unwrap();
        assert!(r.predictions_csv().contains("\"a,b\",wn,"));
    }
}
