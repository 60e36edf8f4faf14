//! Minimal dense linear algebra and a damped least-squares minimizer.
//!
//! The fitting stage solves small problems (a dozen parameters, a few
//! thousand residuals), so normal equations with Cholesky factorization are
//! accurate and fast; the minimizer is a classic Levenberg-Marquardt loop
//! with multiplicative damping on the normal-matrix diagonal.

use crate::error::{Error, Result};
use crate::real::{real, Real};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<R> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<R>,
}

impl<R: Real> Mat<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![R::zero(); rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> R) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> R {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: R) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [R] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// A^T A (cols x cols).
    pub fn t_mul_self(&self) -> Mat<R> {
        let n = self.cols;
        let mut out = Mat::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ri = row[i];
                if ri == R::zero() {
                    continue;
                }
                for j in i..n {
                    out.data[i * n + j] += ri * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                out.data[i * n + j] = out.data[j * n + i];
            }
        }
        out
    }

    /// A^T v (length cols).
    pub fn t_mul_vec(&self, v: &[R]) -> Vec<R> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![R::zero(); self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let vr = v[r];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
        out
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix;
/// `None` when the matrix is not (numerically) positive definite.
pub fn cholesky<R: Real>(a: &Mat<R>) -> Option<Mat<R>> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(s > R::zero()) {
                    return None;
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// Solve `A x = b` for symmetric positive-definite `A`.
pub fn cholesky_solve<R: Real>(a: &Mat<R>, b: &[R]) -> Option<Vec<R>> {
    let l = cholesky(a)?;
    let n = a.rows;
    // L y = b
    let mut y = vec![R::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    // L^T x = y
    let mut x = vec![R::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    Some(x)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse<R: Real>(a: &Mat<R>) -> Option<Mat<R>> {
    let n = a.rows;
    let mut inv = Mat::zeros(n, n);
    let l = cholesky(a)?;
    for col in 0..n {
        let mut b = vec![R::zero(); n];
        b[col] = R::one();
        // reuse the factor: forward then backward substitution
        let mut y = vec![R::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        let mut x = vec![R::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l.get(k, i) * x[k];
            }
            x[i] = s / l.get(i, i);
        }
        for i in 0..n {
            inv.set(i, col, x[i]);
        }
    }
    Some(inv)
}

/// Eigen-decomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns eigenvalues ascending with matching eigenvector columns.
pub fn sym_eigen<R: Real>(a: &Mat<R>) -> (Vec<R>, Mat<R>) {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut m = a.clone();
    let mut v = Mat::from_fn(n, n, |i, j| if i == j { R::one() } else { R::zero() });
    let eps = real::<R>(1e-14);
    for _sweep in 0..60 {
        let mut off = R::zero();
        for i in 0..n {
            for j in i + 1..n {
                off += m.get(i, j).abs();
            }
        }
        let scale = (0..n).fold(R::zero(), |acc, i| acc.max(m.get(i, i).abs())).max(R::one());
        if off <= eps * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() <= eps * scale {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (real::<R>(2.0) * apq);
                let t = {
                    let s = if theta >= R::zero() { R::one() } else { -R::one() };
                    s / (theta.abs() + (theta * theta + R::one()).sqrt())
                };
                let c = R::one() / (t * t + R::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(i, i).partial_cmp(&m.get(j, j)).unwrap_or(std::cmp::Ordering::Equal)
    });
    let eig: Vec<R> = order.iter().map(|&i| m.get(i, i)).collect();
    let vecs = Mat::from_fn(n, n, |i, j| v.get(i, order[j]));
    (eig, vecs)
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues<R: Real>(a: &Mat<R>) -> Vec<R> {
    sym_eigen(a).0
}

/// A nonlinear least-squares problem: residual vector and its Jacobian.
pub trait LeastSquaresProblem<R: Real> {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, params: &[R], out: &mut [R]) -> Result<()>;
    fn jacobian(&self, params: &[R], out: &mut Mat<R>) -> Result<()>;
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions<R> {
    pub max_iter: usize,
    /// Relative cost-decrease threshold.
    pub ftol: R,
    /// Relative step-size threshold.
    pub xtol: R,
    /// Gradient infinity-norm threshold.
    pub gtol: R,
    pub lambda_init: R,
    pub lambda_up: R,
    pub lambda_down: R,
    pub lambda_max: R,
}

impl<R: Real> Default for LmOptions<R> {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            ftol: real(1e-14),
            xtol: real(1e-14),
            gtol: real(1e-12),
            lambda_init: real(1e-3),
            lambda_up: real(4.0),
            lambda_down: real(0.25),
            lambda_max: real(1e12),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStatus {
    /// Gradient vanished: a stationary point.
    GradientSmall,
    /// Cost stopped improving to relative ftol.
    CostStall,
    /// Step shrank below xtol.
    StepSmall,
    /// Iteration budget exhausted while still improving.
    MaxIter,
    /// Damping grew past lambda_max without an acceptable step.
    Stuck,
}

impl LmStatus {
    pub fn converged(self) -> bool {
        matches!(self, LmStatus::GradientSmall | LmStatus::CostStall | LmStatus::StepSmall)
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome<R> {
    pub params: Vec<R>,
    /// Final sum of squared residuals.
    pub cost: R,
    pub status: LmStatus,
    pub n_iter: usize,
    pub grad_inf_norm: R,
}

fn cost_of<R: Real>(r: &[R]) -> R {
    r.iter().fold(R::zero(), |a, &v| a + v * v)
}

/// Levenberg-Marquardt minimization of `sum(residuals^2)`.
pub fn lm_minimize<R: Real, P: LeastSquaresProblem<R>>(
    problem: &P,
    p0: &[R],
    opts: &LmOptions<R>,
) -> Result<LmOutcome<R>> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    if p0.len() != n {
        return Err(Error::domain(format!("expected {n} start parameters, got {}", p0.len())));
    }
    if m < n {
        return Err(Error::Unidentifiable(format!(
            "{m} residuals cannot determine {n} parameters"
        )));
    }
    let mut params = p0.to_vec();
    let mut r = vec![R::zero(); m];
    let mut jac = Mat::zeros(m, n);
    problem.residuals(&params, &mut r)?;
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return Err(Error::NonConvergence("start point has non-finite cost".into()));
    }
    let mut lambda = opts.lambda_init;
    let mut status = LmStatus::MaxIter;
    let mut grad_inf = R::infinity();
    let mut iter = 0;

    while iter < opts.max_iter {
        iter += 1;
        problem.jacobian(&params, &mut jac)?;
        let mut a = jac.t_mul_self();
        let g = jac.t_mul_vec(&r);
        grad_inf = g.iter().fold(R::zero(), |acc, &v| acc.max(v.abs()));
        if grad_inf <= opts.gtol {
            status = LmStatus::GradientSmall;
            break;
        }
        let diag: Vec<R> = (0..n).map(|i| a.get(i, i)).collect();
        let diag_floor = real::<R>(1e-30);
        let mut accepted = false;
        while lambda <= opts.lambda_max {
            for i in 0..n {
                a.set(i, i, diag[i] + lambda * diag[i].max(diag_floor));
            }
            let rhs: Vec<R> = g.iter().map(|&v| -v).collect();
            if let Some(step) = cholesky_solve(&a, &rhs) {
                let trial: Vec<R> =
                    params.iter().zip(&step).map(|(&p, &d)| p + d).collect();
                let mut r_trial = vec![R::zero(); m];
                if problem.residuals(&trial, &mut r_trial).is_ok() {
                    let c_trial = cost_of(&r_trial);
                    if c_trial.is_finite() && c_trial < cost {
                        let step_norm =
                            step.iter().fold(R::zero(), |acc, &v| acc + v * v).sqrt();
                        let p_norm =
                            params.iter().fold(R::zero(), |acc, &v| acc + v * v).sqrt();
                        let df = cost - c_trial;
                        params = trial;
                        r = r_trial;
                        cost = c_trial;
                        lambda = (lambda * opts.lambda_down).max(real(1e-12));
                        accepted = true;
                        if df <= opts.ftol * cost.max(real(1e-300)) {
                            status = LmStatus::CostStall;
                        } else if step_norm <= opts.xtol * (p_norm + opts.xtol) {
                            status = LmStatus::StepSmall;
                        }
                        break;
                    }
                }
            }
            lambda *= opts.lambda_up;
        }
        if !accepted {
            status = LmStatus::Stuck;
            break;
        }
        if matches!(status, LmStatus::CostStall | LmStatus::StepSmall) {
            break;
        }
    }

    Ok(LmOutcome { params, cost, status, n_iter: iter, grad_inf_norm: grad_inf })
}

/// Central-difference Jacobian, for checking analytic ones in tests.
pub fn numeric_jacobian<R: Real, P: LeastSquaresProblem<R>>(
    problem: &P,
    params: &[R],
    rel_step: R,
) -> Result<Mat<R>> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut out = Mat::zeros(m, n);
    let mut plus = vec![R::zero(); m];
    let mut minus = vec![R::zero(); m];
    let mut p = params.to_vec();
    for j in 0..n {
        let h = rel_step * params[j].abs().max(R::one());
        let orig = p[j];
        p[j] = orig + h;
        problem.residuals(&p, &mut plus)?;
        p[j] = orig - h;
        problem.residuals(&p, &mut minus)?;
        p[j] = orig;
        for i in 0..m {
            out.set(i, j, (plus[i] - minus[i]) / (real::<R>(2.0) * h));
        }
    }
    Ok(out)
}
