//! Minimum-residual labeling of windows against a class-blocked dictionary.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace_trainer::LabeledDictionary;

/// Largest `AᵀA` condition number for which an unregularized solve is allowed.
pub const MAX_UNREGULARIZED_CONDITION: f64 = 1e8;

pub const DEFAULT_CRC_LAMBDA: f64 = 0.01;

/// `(AᵀA + λI)⁻¹Aᵀ`, tied to the dictionary it came from.
#[derive(Debug, Clone)]
pub struct ProjectionOperator {
    pub p: DMatrix<f64>,
    pub lambda: f64,
    pub fingerprint: [u8; 32],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub label: usize,
    pub residuals: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// Runner-up residual minus winning residual.
    pub margin: f64,
    pub converged: bool,
}

/// Argmin with ties to the lowest index, and the gap to the runner-up.
pub fn label_from_residuals(residuals: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &r) in residuals.iter().enumerate() {
        if r < residuals[best] {
            best = i;
        }
    }
    let runner_up = residuals
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &r)| r)
        .fold(f64::INFINITY, f64::min);
    let margin = if runner_up.is_finite() {
        runner_up - residuals[best]
    } else {
        0.0
    };
    (best, margin)
}

/// `‖y − A·δ_i(x)‖` for every class block.
pub fn class_residuals(dict: &LabeledDictionary, x: &[f64], y: &[f64]) -> Vec<f64> {
    let m = dict.a.nrows();
    let mut recon = vec![0.0; m];
    dict.blocks
        .iter()
        .map(|block| {
            recon.copy_from_slice(y);
            for j in block.clone() {
                let xj = x[j];
                if xj != 0.0 {
                    let col = dict.a.column(j);
                    for (r, a) in recon.iter_mut().zip(col.iter()) {
                        *r -= a * xj;
                    }
                }
            }
            recon.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect()
}

/// Builds the ridge projection with a Cholesky factorization.
pub fn crc_precompute(dict: &LabeledDictionary, lambda: f64) -> Result<ProjectionOperator> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Parameter(format!(
            "ridge weight must be positive, got {lambda}"
        )));
    }
    let a = &dict.a;
    if a.ncols() == 0 {
        return Err(Error::Parameter("empty dictionary".into()));
    }
    let gram = a.transpose() * a;
    if lambda == 0.0 {
        let eig = SymmetricEigen::new(gram.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(min > 0.0 && max / min < MAX_UNREGULARIZED_CONDITION) {
            return Err(Error::Parameter(format!(
                "ridge weight 0 needs a well-conditioned dictionary (condition estimate {:.3e})",
                max / min.max(0.0)
            )));
        }
    }
    let n = a.ncols();
    let chol = (gram + DMatrix::identity(n, n) * lambda)
        .cholesky()
        .ok_or_else(|| Error::Parameter("ridge system is not positive definite".into()))?;
    let p = chol.solve(&a.transpose());
    Ok(ProjectionOperator {
        p,
        lambda,
        fingerprint: dict.fingerprint(),
    })
}

fn check_window(dict: &LabeledDictionary, y: &[f64]) -> Result<()> {
    if y.len() != dict.a.nrows() {
        return Err(Error::Shape {
            expected: format!("window of length {}", dict.a.nrows()),
            got: format!("length {}", y.len()),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observation window".into()));
    }
    Ok(())
}

/// CRC labeling; verifies the operator's fingerprint on every call.
pub fn crc_classify(
    op: &ProjectionOperator,
    dict: &LabeledDictionary,
    y: &[f64],
) -> Result<ClassificationResult> {
    CrcClassifier::new(op, dict)?.classify(y)
}

/// Operator and dictionary checked against each other once, for repeated use.
#[derive(Debug, Clone, Copy)]
pub struct CrcClassifier<'a> {
    op: &'a ProjectionOperator,
    dict: &'a LabeledDictionary,
}

impl<'a> CrcClassifier<'a> {
    pub fn new(op: &'a ProjectionOperator, dict: &'a LabeledDictionary) -> Result<Self> {
        if op.p.shape() != (dict.a.ncols(), dict.a.nrows()) || op.fingerprint != dict.fingerprint() {
            return Err(Error::StaleOperator);
        }
        Ok(Self { op, dict })
    }

    pub fn dictionary(&self) -> &LabeledDictionary {
        self.dict
    }

    pub fn classify(&self, y: &[f64]) -> Result<ClassificationResult> {
        check_window(self.dict, y)?;
        let x = &self.op.p * DVector::from_column_slice(y);
        let residuals = class_residuals(self.dict, x.as_slice(), y);
        let (label, margin) = label_from_residuals(&residuals);
        Ok(ClassificationResult {
            label,
            residuals,
            coefficients: x.as_slice().to_vec(),
            margin,
            converged: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SrcParams {
    pub lambda: f64,
    pub max_iter: usize,
    /// Relative change in the coefficients that ends the iteration.
    pub tol: f64,
}

impl Default for SrcParams {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            max_iter: 2000,
            tol: 1e-7,
        }
    }
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Minimizes `½‖y − Ax‖² + λ‖x‖₁` by FISTA with a backtracking Lipschitz
/// estimate. Returns the coefficients and whether the tolerance was met.
pub fn lasso_fista(a: &DMatrix<f64>, y: &DVector<f64>, params: &SrcParams) -> (DVector<f64>, bool) {
    let n = a.ncols();
    let lambda = params.lambda;
    let aty = a.transpose() * y;
    if aty.amax() <= lambda {
        return (DVector::zeros(n), true);
    }
    let smooth = |x: &DVector<f64>| 0.5 * (y - a * x).norm_squared();
    let mut l = 1.0;
    let mut x = DVector::zeros(n);
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..params.max_iter {
        let resid = a * &z - y;
        let grad = a.transpose() * &resid;
        let fz = 0.5 * resid.norm_squared();
        let x_new = loop {
            let cand = (&z - &grad / l).map(|v| soft(v, lambda / l));
            let d = &cand - &z;
            if smooth(&cand) <= fz + grad.dot(&d) + 0.5 * l * d.norm_squared() {
                break cand;
            }
            l *= 2.0;
        };
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let step = (&x_new - &x).norm();
        z = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
        x = x_new;
        t = t_new;
        if step <= params.tol * x.norm().max(1.0) {
            return (x, true);
        }
    }
    (x, false)
}

/// SRC labeling with the same residual rule as CRC.
pub fn src_classify(dict: &LabeledDictionary, y: &[f64], params: &SrcParams) -> Result<ClassificationResult> {
    if !(params.lambda.is_finite() && params.lambda >= 0.0 && params.tol > 0.0 && params.max_iter >= 1) {
        return Err(Error::Parameter(format!("invalid SRC parameters {params:?}")));
    }
    check_window(dict, y)?;
    let (x, converged) = lasso_fista(&dict.a, &DVector::from_column_slice(y), params);
    let residuals = class_residuals(dict, x.as_slice(), y);
    let (label, margin) = label_from_residuals(&residuals);
    Ok(ClassificationResult {
        label,
        residuals,
        coefficients: x.as_slice().to_vec(),
        margin,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel_embedding::ChannelScaler;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dict_from(a: DMatrix<f64>, sizes: &[usize]) -> LabeledDictionary {
        let mut blocks = Vec::new();
        let mut start = 0;
        for &s in sizes {
            blocks.push(a.columns(start, s).clone_owned());
            start += s;
        }
        LabeledDictionary::from_classes(
            blocks,
            (0..sizes.len()).map(|i| format!("c{i}")).collect(),
            vec!["x".into()],
            a.nrows(),
            20.0,
            ChannelScaler::identity(1),
        )
        .unwrap()
    }

    fn random_unit(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        for mut c in a.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        a
    }

    #[test]
    fn identity_dictionary() {
        let d = dict_from(DMatrix::identity(4, 4), &[2, 2]);
        let op = crc_precompute(&d, 1e-12).unwrap();
        assert!((&op.p - DMatrix::<f64>::identity(4, 4)).amax() < 1e-10);
        let op0 = crc_precompute(&d, 0.0).unwrap();
        assert!((&op0.p - DMatrix::<f64>::identity(4, 4)).amax() < 1e-15);
    }

    #[test]
    fn orthonormal_halves() {
        let q = random_unit(6, 3, 1).qr().q();
        let d = dict_from(q.clone(), &[1, 2]);
        let op = crc_precompute(&d, 1.0).unwrap();
        assert!((&op.p - q.transpose() / 2.0).amax() < 1e-12);
    }

    #[test]
    fn matches_dense_solve() {
        let a = random_unit(40, 12, 2);
        let d = dict_from(a.clone(), &[4, 4, 4]);
        let op = crc_precompute(&d, 0.01).unwrap();
        let sys = a.transpose() * &a + DMatrix::identity(12, 12) * 0.01;
        let oracle = sys.lu().solve(&a.transpose()).unwrap();
        assert!((&op.p - &oracle).norm() / oracle.norm() < 1e-10);
    }

    #[test]
    fn rejects_bad_lambda() {
        let a = random_unit(5, 8, 3);
        let d = dict_from(a, &[4, 4]);
        assert!(crc_precompute(&d, -1.0).is_err());
        assert!(crc_precompute(&d, f64::NAN).is_err());
        // 8 columns in 5 dimensions: singular Gram matrix
        assert!(crc_precompute(&d, 0.0).is_err());
    }

    #[test]
    fn exact_member_wins() {
        let a = random_unit(30, 9, 4);
        let d = dict_from(a.clone(), &[3, 3, 3]);
        let op = crc_precompute(&d, 1e-6).unwrap();
        let y: Vec<f64> = a.column(7).iter().copied().collect();
        let r = crc_classify(&op, &d, &y).unwrap();
        assert_eq!(r.label, 2);
        assert!(r.residuals[2] <= 1e-3);
        assert!(r.margin > 0.0);
    }

    #[test]
    fn orthogonal_query_ties_to_class_zero() {
        let mut a = DMatrix::zeros(6, 4);
        for j in 0..4 {
            a[(j, j)] = 1.0;
        }
        let d = dict_from(a, &[2, 2]);
        let op = crc_precompute(&d, 0.01).unwrap();
        let y = [0.0, 0.0, 0.0, 0.0, 0.6, 0.8];
        let r = crc_classify(&op, &d, &y).unwrap();
        assert_eq!(r.label, 0);
        for v in &r.residuals {
            assert!((v - 1.0).abs() < 1e-9);
        }
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn in_span_combination() {
        let a = random_unit(25, 8, 5);
        let d = dict_from(a.clone(), &[4, 4]);
        let mut y = a.column(4) * 0.6 + a.column(6) * 0.8;
        y /= y.norm();
        let op = crc_precompute(&d, 0.01).unwrap();
        assert_eq!(crc_classify(&op, &d, y.as_slice()).unwrap().label, 1);
    }

    #[test]
    fn stale_operator_and_shape() {
        let a = random_unit(10, 4, 6);
        let d = dict_from(a, &[2, 2]);
        let op = crc_precompute(&d, 0.01).unwrap();
        let mut other = d.clone();
        other.a.swap_columns(0, 1);
        assert!(matches!(
            crc_classify(&op, &other, &[0.0; 10]),
            Err(Error::StaleOperator)
        ));
        assert!(matches!(
            crc_classify(&op, &d, &[0.0; 9]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn src_zero_above_threshold() {
        let a = random_unit(12, 6, 7);
        let d = dict_from(a.clone(), &[3, 3]);
        let y = random_unit(12, 1, 8);
        let thresh = (a.transpose() * &y).amax();
        let p = SrcParams {
            lambda: thresh,
            ..Default::default()
        };
        let r = src_classify(&d, y.as_slice(), &p).unwrap();
        assert!(r.coefficients.iter().all(|&v| v == 0.0));
        assert!(r.converged);
        // just below the threshold the solution is no longer zero
        let p = SrcParams {
            lambda: thresh * 0.9,
            ..Default::default()
        };
        let r = src_classify(&d, y.as_slice(), &p).unwrap();
        assert!(r.coefficients.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn src_recovers_atom() {
        let a = random_unit(30, 10, 9);
        let d = dict_from(a.clone(), &[5, 5]);
        let y: Vec<f64> = a.column(3).iter().copied().collect();
        let p = SrcParams {
            lambda: 1e-4,
            ..Default::default()
        };
        let r = src_classify(&d, &y, &p).unwrap();
        assert_eq!(r.label, 0);
        for (j, &c) in r.coefficients.iter().enumerate() {
            if j != 3 {
                assert!(c.abs() <= 1e-3, "coefficient {j} = {c}");
            }
        }
        assert!(r.coefficients[3] > 0.99);
    }

    #[test]
    fn src_matches_subgradient_optimality() {
        let a = random_unit(15, 8, 10);
        let y = random_unit(15, 1, 11).column(0).clone_owned();
        let p = SrcParams {
            lambda: 0.05,
            max_iter: 20000,
            tol: 1e-12,
        };
        let (x, converged) = lasso_fista(&a, &y, &p);
        assert!(converged);
        let g = a.transpose() * (&y - &a * &x);
        for j in 0..8 {
            if x[j] != 0.0 {
                assert!((g[j] - p.lambda * x[j].signum()).abs() < 1e-6);
            } else {
                assert!(g[j].abs() <= p.lambda + 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn residual_decomposition(seed in 0u64..200) {
            let a = random_unit(12, 9, seed);
            let d = dict_from(a.clone(), &[2, 3, 4]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let x: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut sum = DVector::zeros(12);
            for b in &d.blocks {
                for j in b.clone() {
                    sum += a.column(j) * x[j];
                }
            }
            let full = &a * DVector::from_vec(x.clone());
            prop_assert!((sum - full).amax() < 1e-12);
        }

        #[test]
        fn label_invariant_to_positive_scale(seed in 0u64..200, scale in 1e-3f64..1e3) {
            let a = random_unit(20, 9, seed);
            let d = dict_from(a, &[3, 3, 3]);
            let op = crc_precompute(&d, 0.01).unwrap();
            let y = random_unit(20, 1, seed + 7);
            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let r1 = crc_classify(&op, &d, y.as_slice()).unwrap();
            let r2 = crc_classify(&op, &d, &ys).unwrap();
            prop_assert_eq!(r1.label, r2.label);
            prop_assert!(r1.margin >= 0.0 && r1.residuals.iter().all(|&r| r >= 0.0));
        }
    }
}
