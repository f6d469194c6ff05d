use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OscParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub rho: f64,
}

impl Default for OscParams {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 1.0,
            max_iter: 300,
            tol: 1e-4,
            rho: 1.0,
        }
    }
}

impl OscParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda1.is_finite()
            && self.lambda1 >= 0.0
            && self.lambda2.is_finite()
            && self.lambda2 > 0.0
            && self.tol.is_finite()
            && self.tol > 0.0
            && self.max_iter >= 1
            && self.rho.is_finite()
            && self.rho > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid OSC parameters {self:?}")))
        }
    }
}

/// Self-expression coefficients with solver diagnostics.
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    /// Exactly zero on the diagonal.
    pub z: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Objective of the accepted iterate after each iteration; non-increasing.
    pub objective_history: Vec<f64>,
    /// Objective of the raw splitting iterate after each iteration.
    pub raw_objective_history: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// `n × (n−1)` differencing matrix: −1 on the diagonal, +1 below it.
pub fn build_r(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::Size(format!("differencing matrix needs n >= 2, got {n}")));
    }
    let mut r = DMatrix::zeros(n, n - 1);
    for j in 0..n - 1 {
        r[(j, j)] = -1.0;
        r[(j + 1, j)] = 1.0;
    }
    Ok(r)
}

/// `Z·R` without forming `R`.
pub(crate) fn times_r(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.ncols();
    DMatrix::from_fn(z.nrows(), n - 1, |i, j| z[(i, j + 1)] - z[(i, j)])
}

/// `M·Rᵀ` for an `N × (N−1)` matrix `M`.
pub(crate) fn times_rt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols() + 1;
    DMatrix::from_fn(m.nrows(), n, |i, c| {
        let mut v = 0.0;
        if c + 1 < n {
            v -= m[(i, c)];
        }
        if c >= 1 {
            v += m[(i, c - 1)];
        }
        v
    })
}

/// Value of `½‖X − XZ‖²_F + λ1‖Z‖₁ + λ2‖ZR‖₁,₂`.
pub fn osc_objective(x: &DMatrix<f64>, z: &DMatrix<f64>, lambda1: f64, lambda2: f64) -> f64 {
    let fit = (x - x * z).norm_squared() * 0.5;
    let l1: f64 = z.iter().map(|v| v.abs()).sum();
    let n = z.ncols();
    let mut l12 = 0.0;
    for j in 0..n.saturating_sub(1) {
        l12 += (z.column(j + 1) - z.column(j)).norm();
    }
    fit + lambda1 * l1 + lambda2 * l12
}

/// Solves `(XᵀX + ρI)Z + ρ·Z·RRᵀ = C`.
///
/// `RRᵀ` is the path-graph Laplacian, diagonalized by the DCT-II basis, and
/// `XᵀX` is diagonalized by the right singular vectors of `X`; together they
/// reduce the Sylvester equation to one shifted solve per DCT frequency.
pub(crate) struct ZSolver {
    phi: DMatrix<f64>,
    tau: Vec<f64>,
    v: DMatrix<f64>,
    s: Vec<f64>,
}

impl ZSolver {
    pub fn new(x: &DMatrix<f64>, rho: f64) -> Self {
        let n = x.ncols();
        let phi = DMatrix::from_fn(n, n, |j, k| {
            let c = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            c * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos()
        });
        let tau = (0..n)
            .map(|k| rho * (1.0 + 2.0 - 2.0 * (PI * k as f64 / n as f64).cos()))
            .collect();
        let svd = x.clone().svd(false, true);
        let vt = svd.v_t.expect("requested right singular vectors");
        let smax = svd.singular_values.iter().fold(0.0f64, |m, &v| m.max(v));
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > smax * 1e-13)
            .collect();
        let v = DMatrix::from_fn(n, keep.len(), |r, c| vt[(keep[c], r)]);
        let s = keep.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
        Self { phi, tau, v, s }
    }

    pub fn solve(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let ct = c * &self.phi;
        let mut b = self.v.transpose() * &ct;
        for k in 0..b.ncols() {
            for i in 0..b.nrows() {
                b[(i, k)] *= self.s[i] / (self.s[i] + self.tau[k]);
            }
        }
        let mut y = ct - &self.v * b;
        for (k, mut col) in y.column_iter_mut().enumerate() {
            col /= self.tau[k];
        }
        y * self.phi.transpose()
    }
}

fn soft_threshold_zero_diag(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let mut out = m.map(|v| v.signum() * (v.abs() - t).max(0.0));
    out.fill_diagonal(0.0);
    out
}

fn column_shrink(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        let scale = if n > t { 1.0 - t / n } else { 0.0 };
        col *= scale;
    }
    out
}

/// Ordered subspace clustering by an alternating-direction splitting:
/// `Z` carries the quadratic fit, `J = Z` the ℓ1 term and the zero diagonal,
/// `Q = ZR` the column-difference penalty.
///
/// The returned coefficients are the feasible `J` iterate with the lowest
/// objective seen, so the accepted objective history never increases.
pub fn osc_solve(x: &DMatrix<f64>, params: &OscParams) -> Result<CoefficientMatrix> {
    params.validate()?;
    let n = x.ncols();
    if n < 3 {
        return Err(Error::Size(format!("OSC needs at least 3 columns, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training matrix".into()));
    }
    let rho = params.rho;
    let (l1, l2) = (params.lambda1, params.lambda2);
    let gram = x.transpose() * x;
    let solver = ZSolver::new(x, rho);

    let mut j = DMatrix::zeros(n, n);
    let mut q = DMatrix::zeros(n, n - 1);
    let mut u = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n - 1);

    let mut best = j.clone();
    let mut best_obj = osc_objective(x, &best, l1, l2);
    let mut history = Vec::with_capacity(params.max_iter);
    let mut raw_history = Vec::with_capacity(params.max_iter);
    let (mut rp, mut rd) = (f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=params.max_iter {
        iterations = it;
        let c = &gram + (&j - &u) * rho + times_rt(&(&q - &v)) * rho;
        let z = solver.solve(&c);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: it });
        }
        let zr = times_r(&z);
        let j_new = soft_threshold_zero_diag(&(&z + &u), l1 / rho);
        let q_new = column_shrink(&(&zr + &v), l2 / rho);

        let pz = &z - &j_new;
        let pq = &zr - &q_new;
        u += &pz;
        v += &pq;
        rp = (pz.norm_squared() + pq.norm_squared()).sqrt();
        rd = rho * ((&j_new - &j).norm_squared() + times_rt(&(&q_new - &q)).norm_squared()).sqrt();
        j = j_new;
        q = q_new;

        let obj = osc_objective(x, &j, l1, l2);
        if !obj.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        raw_history.push(obj);
        if obj <= best_obj {
            best_obj = obj;
            best.copy_from(&j);
        }
        history.push(best_obj);

        let eps_p = params.tol
            * (z.norm_squared() + zr.norm_squared())
                .sqrt()
                .max((j.norm_squared() + q.norm_squared()).sqrt());
        let eps_d = params.tol * rho * (u.norm_squared() + times_rt(&v).norm_squared()).sqrt();
        if rp <= eps_p.max(1e-12) && rd <= eps_d.max(1e-12) {
            converged = true;
            break;
        }
    }

    Ok(CoefficientMatrix {
        z: best,
        converged,
        iterations,
        primal_residual: rp,
        dual_residual: rd,
        objective_history: history,
        raw_objective_history: raw_history,
    })
}
