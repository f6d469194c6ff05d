use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 200;

/// Symmetric, nonnegative affinity with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    pub w: DMatrix<f64>,
}

impl AffinityGraph {
    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }
}

/// `|Z| + |Zᵀ|` with the diagonal cleared.
pub fn build_affinity(z: &DMatrix<f64>) -> Result<AffinityGraph> {
    if z.nrows() != z.ncols() {
        return Err(Error::Shape {
            expected: "square coefficient matrix".into(),
            got: format!("{}×{}", z.nrows(), z.ncols()),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("coefficient matrix".into()));
    }
    let a = z.abs();
    let mut w = &a + a.transpose();
    w.fill_diagonal(0.0);
    Ok(AffinityGraph { w })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLabels {
    pub labels: Vec<usize>,
    /// Zero-degree nodes, labeled from their nearest connected neighbour in time.
    pub isolated: Vec<usize>,
    /// Connected components among the nodes with nonzero degree.
    pub components: usize,
    pub warnings: Vec<String>,
}

fn count_components(w: &DMatrix<f64>) -> usize {
    let n = w.nrows();
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && w[(i, j)] > 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from a k-means++ start; returns labels and inertia.
fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }

    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                .unwrap();
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point worst served by its centre.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centers[labels[a]])
                            .total_cmp(&sq_dist(&points[b], &centers[labels[b]]))
                    })
                    .unwrap();
                centers[c] = points[far].clone();
                labels[far] = c;
                changed = true;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    (labels, inertia)
}

/// Best-of-`restarts` k-means; ties keep the earliest restart.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > points.len() {
        return Err(Error::Parameter(format!(
            "k-means needs 1 <= k <= {} points, got k={k}",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..restarts.max(1) {
        let (labels, inertia) = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    Ok(canonical_labels(&best.unwrap().0))
}

/// Renumbers labels in order of first appearance.
fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Normalized-cuts labeling: bottom-`k` eigenvectors of
/// `I − D^{-1/2} W D^{-1/2}`, rows scaled to unit length, then k-means.
pub fn spectral_cluster(
    graph: &AffinityGraph,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<SpectralLabels> {
    let w = &graph.w;
    let n = w.nrows();
    if k < 2 || k > n {
        return Err(Error::Parameter(format!(
            "cluster count must satisfy 2 <= k <= {n}, got {k}"
        )));
    }
    if w.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("affinity graph has no edges".into()));
    }
    if k == n {
        return Ok(SpectralLabels {
            labels: (0..n).collect(),
            isolated: Vec::new(),
            components: count_components(w),
            warnings: Vec::new(),
        });
    }

    let degree: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    let active: Vec<usize> = (0..n).filter(|&i| degree[i] > 0.0).collect();
    let isolated: Vec<usize> = (0..n).filter(|&i| degree[i] <= 0.0).collect();
    if active.len() < k {
        return Err(Error::DegenerateInput(format!(
            "only {} connected nodes for {k} clusters",
            active.len()
        )));
    }
    let m = active.len();
    let sub = DMatrix::from_fn(m, m, |a, b| w[(active[a], active[b])]);
    let components = count_components(&sub);
    let mut warnings = Vec::new();
    if components > k {
        let msg = format!("affinity graph has {components} components, more than k={k}");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if !isolated.is_empty() {
        let msg = format!(
            "{} zero-degree nodes assigned by temporal neighbour",
            isolated.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let inv_sqrt: Vec<f64> = active.iter().map(|&i| 1.0 / degree[i].sqrt()).collect();
    let lap = DMatrix::from_fn(m, m, |a, b| {
        let v = -sub[(a, b)] * inv_sqrt[a] * inv_sqrt[b];
        if a == b {
            1.0 + v
        } else {
            v
        }
    });
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let points: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let row: Vec<f64> = order[..k].iter().map(|&c| eig.eigenvectors[(r, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect();
    let sub_labels = kmeans(&points, k, restarts, seed)?;

    let mut labels = vec![0usize; n];
    for (a, &i) in active.iter().enumerate() {
        labels[i] = sub_labels[a];
    }
    for &i in &isolated {
        let nearest = active
            .iter()
            .min_by_key(|&&a| (a.abs_diff(i), a))
            .copied()
            .unwrap();
        labels[i] = labels[nearest];
    }
    Ok(SpectralLabels {
        labels: canonical_labels(&labels),
        isolated,
        components,
        warnings,
    })
}
