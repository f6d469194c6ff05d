use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A maximal stretch of samples sharing the same wrong prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisclassifiedRun {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub truth: usize,
    pub predicted: usize,
    /// Every sample of the run falls in a lenient band.
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Wrong predictions accepted because they match a nearby true label.
    pub lenient_accepted: usize,
    pub lenient_accuracy: f64,
    pub boundary: usize,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub misclassified_runs: Vec<MisclassifiedRun>,
}

/// Scores predictions against ground truth.
///
/// A wrong prediction at sample `i` is lenient-accepted when the true labels
/// within `±boundary` of `i` change and include the prediction. Warm-up
/// samples (negative labels) are skipped when `warmup_excluded`, otherwise
/// their presence is an error.
pub fn evaluate(
    predicted: &[i64],
    truth: &[usize],
    num_classes: usize,
    warmup_excluded: bool,
    boundary: usize,
) -> Result<EvaluationReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape {
            expected: format!("{} predictions", truth.len()),
            got: format!("{}", predicted.len()),
        });
    }
    if let Some(&t) = truth.iter().find(|&&t| t >= num_classes) {
        return Err(Error::Parameter(format!(
            "true label {t} >= {num_classes} classes"
        )));
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    let mut lenient_accepted = 0;
    let mut runs: Vec<MisclassifiedRun> = Vec::new();
    let n = truth.len();
    for i in 0..n {
        let p = predicted[i];
        if p < 0 {
            if warmup_excluded {
                continue;
            }
            return Err(Error::Parameter(format!("warm-up label at sample {i}")));
        }
        let p = p as usize;
        if p >= num_classes {
            return Err(Error::Parameter(format!(
                "predicted label {p} >= {num_classes} classes"
            )));
        }
        let t = truth[i];
        confusion[t][p] += 1;
        if p == t {
            continue;
        }
        let band = &truth[i.saturating_sub(boundary)..(i + boundary + 1).min(n)];
        let lenient = band.iter().any(|&b| b != t) && band.contains(&p);
        if lenient {
            lenient_accepted += 1;
        }
        match runs.last_mut() {
            Some(r) if r.end == i && r.truth == t && r.predicted == p => {
                r.end = i + 1;
                r.lenient &= lenient;
            }
            _ => runs.push(MisclassifiedRun {
                start: i,
                end: i + 1,
                truth: t,
                predicted: p,
                lenient,
            }),
        }
    }
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..num_classes).map(|k| confusion[k][k]).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = (0..num_classes)
        .map(|k| ratio(confusion[k][k], confusion.iter().map(|row| row[k]).sum()))
        .collect();
    let recall = (0..num_classes)
        .map(|k| ratio(confusion[k][k], confusion[k].iter().sum()))
        .collect();
    Ok(EvaluationReport {
        confusion,
        total,
        correct,
        accuracy: ratio(correct, total),
        lenient_accepted,
        lenient_accuracy: ratio(correct + lenient_accepted, total),
        boundary,
        precision,
        recall,
        misclassified_runs: runs,
    })
}

impl EvaluationReport {
    /// Pools several reports over the same classes.
    pub fn merge(reports: &[EvaluationReport]) -> Result<EvaluationReport> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Parameter("nothing to merge".into()))?;
        let k = first.confusion.len();
        let mut confusion = vec![vec![0usize; k]; k];
        let mut lenient = 0;
        let mut runs = Vec::new();
        for r in reports {
            if r.confusion.len() != k {
                return Err(Error::Shape {
                    expected: format!("{k} classes"),
                    got: format!("{}", r.confusion.len()),
                });
            }
            for (a, b) in confusion.iter_mut().flatten().zip(r.confusion.iter().flatten()) {
                *a += b;
            }
            lenient += r.lenient_accepted;
            runs.extend(r.misclassified_runs.iter().cloned());
        }
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Ok(EvaluationReport {
            precision: (0..k)
                .map(|c| ratio(confusion[c][c], confusion.iter().map(|row| row[c]).sum()))
                .collect(),
            recall: (0..k)
                .map(|c| ratio(confusion[c][c], confusion[c].iter().sum()))
                .collect(),
            total,
            correct,
            accuracy: ratio(correct, total),
            lenient_accepted: lenient,
            lenient_accuracy: ratio(correct + lenient, total),
            boundary: first.boundary,
            confusion,
            misclassified_runs: runs,
        })
    }
}
