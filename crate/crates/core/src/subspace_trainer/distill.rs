use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dictionary::LabeledDictionary;
use super::osc::{osc_solve, OscParams};
use super::spectral::{build_affinity, spectral_cluster, DEFAULT_KMEANS_RESTARTS};
use crate::error::{Error, Result};
use crate::hankel_embedding::{ChannelScaler, TrainingMatrix};

/// What one cluster of a pass becomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    Class(String),
    Discard,
    /// Cluster this cluster's columns again.
    Recluster(Schedule),
}

/// Cluster count and the fate of each cluster, ranked by duration (largest
/// first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub k: usize,
    pub assign: Vec<Assignment>,
}

impl Schedule {
    pub fn validate(&self, class_names: &[String]) -> Result<()> {
        if self.k < 2 || self.assign.len() != self.k {
            return Err(Error::Config(format!(
                "schedule needs k >= 2 and exactly k assignments (k={}, {} given)",
                self.k,
                self.assign.len()
            )));
        }
        for a in &self.assign {
            match a {
                Assignment::Class(name) if !class_names.contains(name) => {
                    return Err(Error::Config(format!("schedule names unknown class `{name}`")));
                }
                Assignment::Recluster(s) => s.validate(class_names)?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// A normalized training matrix from one recording, with its schedule.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub matrix: TrainingMatrix,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillParams {
    pub osc: OscParams,
    pub per_class: usize,
    /// Half-width, in columns, of the neighbourhood that must share a
    /// column's final class for it to be kept.
    pub boundary_trim: usize,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl Default for DistillParams {
    fn default() -> Self {
        Self {
            osc: OscParams::default(),
            per_class: 30,
            boundary_trim: 5,
            kmeans_restarts: DEFAULT_KMEANS_RESTARTS,
            seed: 0,
        }
    }
}

/// One clustering pass over a set of columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PassReport {
    pub depth: usize,
    pub columns: usize,
    /// Cluster sizes, largest first.
    pub sizes: Vec<usize>,
    pub osc_converged: bool,
    pub osc_iterations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Final class per column; `None` for discarded columns.
    pub assignment: Vec<Option<usize>>,
    /// Columns surviving the boundary trim.
    pub kept: Vec<bool>,
    pub passes: Vec<PassReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillReport {
    pub runs: Vec<RunReport>,
    /// `(run, column)` each dictionary column was copied from.
    pub sources: Vec<(usize, usize)>,
}

struct PassContext<'a> {
    matrix: &'a TrainingMatrix,
    class_names: &'a [String],
    params: &'a DistillParams,
    seconds_per_column: f64,
    seed: u64,
    passes: Vec<PassReport>,
}

impl PassContext<'_> {
    fn run(
        &mut self,
        cols: &[usize],
        schedule: &Schedule,
        depth: usize,
        out: &mut [Option<usize>],
    ) -> Result<()> {
        if cols.len() < schedule.k.max(3) {
            return Err(Error::Training(format!(
                "cannot split {} columns into {} clusters",
                cols.len(),
                schedule.k
            )));
        }
        let sub = self.matrix.x.select_columns(cols);
        let coeffs = osc_solve(&sub, &self.params.osc)?;
        let graph = build_affinity(&coeffs.z)?;
        self.seed = self.seed.wrapping_add(1);
        let spectral = spectral_cluster(&graph, schedule.k, self.params.kmeans_restarts, self.seed)?;

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); schedule.k];
        for (i, &l) in spectral.labels.iter().enumerate() {
            members[l].push(cols[i]);
        }
        // Stable sort keeps first-appearance order among equal sizes.
        members.sort_by_key(|m| std::cmp::Reverse(m.len()));
        for r in 1..members.len() {
            if members[r].len() == members[r - 1].len() && schedule.assign[r] != schedule.assign[r - 1] {
                return Err(Error::AmbiguousMapping {
                    durations: members
                        .iter()
                        .map(|m| m.len() as f64 * self.seconds_per_column)
                        .collect(),
                });
            }
        }
        self.passes.push(PassReport {
            depth,
            columns: cols.len(),
            sizes: members.iter().map(|m| m.len()).collect(),
            osc_converged: coeffs.converged,
            osc_iterations: coeffs.iterations,
            warnings: spectral.warnings,
        });

        for (group, assign) in members.iter().zip(&schedule.assign) {
            match assign {
                Assignment::Class(name) => {
                    let id = self.class_names.iter().position(|c| c == name).unwrap();
                    for &c in group {
                        out[c] = Some(id);
                    }
                }
                Assignment::Discard => {
                    for &c in group {
                        out[c] = None;
                    }
                }
                Assignment::Recluster(s) => self.run(group, s, depth + 1, out)?,
            }
        }
        Ok(())
    }
}

/// Keeps columns whose whole `±half` neighbourhood carries the same class.
pub fn boundary_trim(assignment: &[Option<usize>], half: usize) -> Vec<bool> {
    let n = assignment.len();
    (0..n)
        .map(|j| {
            assignment[j].is_some() && {
                let lo = j.saturating_sub(half);
                let hi = (j + half).min(n - 1);
                assignment[lo..=hi].iter().all(|a| *a == assignment[j])
            }
        })
        .collect()
}

/// Greedy farthest-point subset of `x`'s columns, starting from the column
/// closest to the centroid. Returns column indices in selection order.
pub fn farthest_point_sample(x: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let n = x.ncols();
    let count = count.min(n);
    if count == 0 {
        return Vec::new();
    }
    let centroid = x.column_mean();
    let first = (0..n)
        .min_by(|&a, &b| {
            (x.column(a) - &centroid)
                .norm_squared()
                .total_cmp(&(x.column(b) - &centroid).norm_squared())
        })
        .unwrap();
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = (0..n)
        .map(|j| (x.column(j) - x.column(first)).norm_squared())
        .collect();
    while chosen.len() < count {
        let next = (0..n)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .unwrap();
        chosen.push(next);
        for (j, d) in dist.iter_mut().enumerate() {
            *d = d.min((x.column(j) - x.column(next)).norm_squared());
        }
    }
    chosen
}

/// Clusters each run per its schedule, trims class boundaries, and samples
/// up to `per_class` spanning representatives per class.
pub fn distill_dictionary(
    runs: &[TrainingRun],
    class_names: &[String],
    scaler: &ChannelScaler,
    fs: f64,
    params: &DistillParams,
) -> Result<(LabeledDictionary, DistillReport)> {
    if runs.is_empty() {
        return Err(Error::Training("no training runs".into()));
    }
    if class_names.is_empty() {
        return Err(Error::Config("no class names".into()));
    }
    if params.per_class == 0 {
        return Err(Error::Parameter("per_class must be at least 1".into()));
    }
    let first = &runs[0].matrix;
    for r in runs {
        r.schedule.validate(class_names)?;
        let m = &r.matrix;
        if m.window != first.window || m.channel_names != first.channel_names {
            return Err(Error::Config(
                "training runs disagree on window or channels".into(),
            ));
        }
    }

    // Runs are clustered independently with per-run seeds, so the result
    // does not depend on the thread count.
    let reports: Vec<RunReport> = runs
        .par_iter()
        .enumerate()
        .map(|(ri, run)| {
            let n = run.matrix.cols();
            let mut assignment = vec![None; n];
            let mut ctx = PassContext {
                matrix: &run.matrix,
                class_names,
                params,
                seconds_per_column: run.matrix.stride as f64 / fs,
                seed: params
                    .seed
                    .wrapping_mul(0x9E37_79B9)
                    .wrapping_add(1000 * ri as u64),
                passes: Vec::new(),
            };
            let all: Vec<usize> = (0..n).collect();
            ctx.run(&all, &run.schedule, 0, &mut assignment)?;
            let kept = boundary_trim(&assignment, params.boundary_trim);
            Ok(RunReport {
                assignment,
                kept,
                passes: ctx.passes,
            })
        })
        .collect::<Result<_>>()?;
    let mut pools: Vec<Vec<(usize, usize)>> = vec![Vec::new(); class_names.len()];
    for (ri, r) in reports.iter().enumerate() {
        for (j, a) in r.assignment.iter().enumerate() {
            if r.kept[j] {
                pools[a.unwrap()].push((ri, j));
            }
        }
    }

    let rows = first.x.nrows();
    let mut blocks = Vec::with_capacity(class_names.len());
    let mut sources = Vec::new();
    for (ci, pool) in pools.iter().enumerate() {
        if pool.is_empty() {
            return Err(Error::EmptyClass {
                class: class_names[ci].clone(),
            });
        }
        let pooled = DMatrix::from_fn(rows, pool.len(), |i, j| {
            let (r, c) = pool[j];
            runs[r].matrix.x[(i, c)]
        });
        let picks = farthest_point_sample(&pooled, params.per_class);
        let mut block = pooled.select_columns(&picks);
        for mut col in block.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        sources.extend(picks.iter().map(|&p| pool[p]));
        blocks.push(block);
    }
    let dict = LabeledDictionary::from_classes(
        blocks,
        class_names.to_vec(),
        first.channel_names.clone(),
        first.window,
        fs,
        scaler.clone(),
    )?;
    Ok((
        dict,
        DistillReport {
            runs: reports,
            sources,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trim_drops_boundaries_and_discards() {
        let a = [
            Some(0),
            Some(0),
            Some(0),
            Some(1),
            Some(1),
            None,
            Some(1),
            Some(1),
        ];
        assert_eq!(
            boundary_trim(&a, 1),
            vec![true, true, false, false, false, false, false, true]
        );
        assert_eq!(
            boundary_trim(&a, 0),
            a.iter().map(|v| v.is_some()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn fps_spans_and_clamps() {
        let x = DMatrix::from_column_slice(2, 4, &[1.0, 0.0, 0.99, 0.141, 0.0, 1.0, -1.0, 0.0]);
        let picks = farthest_point_sample(&x, 10);
        assert_eq!(picks.len(), 4);
        let mut sorted = picks.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        let two = farthest_point_sample(&x, 2);
        // the centroid-nearest start, then its antipode
        assert_eq!(two[1], 3);
    }

    #[test]
    fn schedule_json_shape() {
        let s = Schedule {
            k: 2,
            assign: vec![
                Assignment::Class("cruise".into()),
                Assignment::Recluster(Schedule {
                    k: 2,
                    assign: vec![Assignment::Class("sudden".into()), Assignment::Discard],
                }),
            ],
        };
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(
            text,
            r#"{"k":2,"assign":[{"class":"cruise"},{"recluster":{"k":2,"assign":[{"class":"sudden"},"discard"]}}]}"#
        );
        assert_eq!(serde_json::from_str::<Schedule>(&text).unwrap(), s);
        let names = vec!["cruise".to_string(), "sudden".to_string()];
        s.validate(&names).unwrap();
        assert!(s.validate(&names[..1]).is_err());
    }
}
