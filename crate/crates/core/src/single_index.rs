//! One gradient step on the first layer of a wide two-layer network
//! `x ↦ fᵀσ(Gx)` trained on single-index data, and the direction estimators
//! that step induces.

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{self, NetWeights};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneStepMethod {
    Sgd,
    Kfac,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStepConfig {
    pub dx: usize,
    pub n: usize,
    /// Hidden width `N`.
    pub n_hidden: usize,
    /// Base step; the first layer moves by `η√N`.
    pub eta: f64,
    pub lambda_g: f64,
    pub student: Activation,
}

impl OneStepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dx == 0 || self.n == 0 || self.n_hidden == 0 {
            return Err(invalid("dx, n and the hidden width must be positive"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) || !(self.lambda_g >= 0.0) {
            return Err(invalid("eta and lambda_g must be nonnegative"));
        }
        Ok(())
    }
}

/// `f₀ ~ N(0, N⁻¹ I)` and `G₀` with i.i.d. `N(0, dx⁻¹)` entries. The network
/// head is `f = N^{-1/2} f₀`.
#[derive(Debug, Clone)]
pub struct OneStepInit {
    pub f0: Vector,
    pub g0: Mat,
}

pub fn init_one_step(cfg: &OneStepConfig, rng: &mut RngStream) -> Result<OneStepInit> {
    cfg.validate()?;
    let nh = cfg.n_hidden as f64;
    let f_sd = 1.0 / nh.sqrt();
    let f0 = Vector::from_fn(cfg.n_hidden, |_, _| f_sd * rng.normal());
    let g0 = rng.normal_matrix(cfg.n_hidden, cfg.dx) / (cfg.dx as f64).sqrt();
    Ok(OneStepInit { f0, g0 })
}

fn network(cfg: &OneStepConfig, init: &OneStepInit) -> NetWeights {
    let f = Mat::from_row_slice(1, cfg.n_hidden, (init.f0.clone() / (cfg.n_hidden as f64).sqrt()).as_slice());
    NetWeights { f, g: init.g0.clone(), activation: cfg.student }
}

/// `G₁ = G₀ − η√N ∇_G L̂`, right-preconditioned by `(Σ̂ + λ_G I)⁻¹` for `kfac`.
pub fn one_step_update(cfg: &OneStepConfig, init: &OneStepInit, x: &Mat, y: &Vector, method: OneStepMethod) -> Result<Mat> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(invalid(format!("{} inputs but {} targets", x.nrows(), y.len())));
    }
    let w = network(cfg, init);
    let ymat = Mat::from_column_slice(y.len(), 1, y.as_slice());
    let grad = model::grad_g(&w, x, &ymat)?;
    let dir = match method {
        OneStepMethod::Sgd => grad,
        OneStepMethod::Kfac => {
            let s = model::second_moment(x);
            linalg::spd_solve_right(&grad, &ridged(&s, cfg.lambda_g)).map_err(|_| singular_hint(x, cfg.lambda_g))?
        }
    };
    Ok(&init.g0 - dir * (cfg.eta * (cfg.n_hidden as f64).sqrt()))
}

fn ridged(s: &Mat, lambda: f64) -> Mat {
    s + linalg::identity(s.nrows()) * lambda
}

fn singular_hint(x: &Mat, lambda: f64) -> Error {
    Error::Singular(format!(
        "Σ̂ + {lambda}·I is singular (n = {}, dx = {}); use lambda_g > 0",
        x.nrows(),
        x.ncols()
    ))
}

/// `Xᵀy/n` for `sgd`, `(Σ̂ + λI)⁻¹Xᵀy/n` for `kfac`.
pub fn beta_estimator(x: &Mat, y: &Vector, method: OneStepMethod, lambda_g: f64) -> Result<Vector> {
    if x.nrows() != y.len() {
        return Err(invalid(format!("{} inputs but {} targets", x.nrows(), y.len())));
    }
    let b = x.transpose() * y / x.nrows() as f64;
    match method {
        OneStepMethod::Sgd => Ok(b),
        OneStepMethod::Kfac => {
            let s = ridged(&model::second_moment(x), lambda_g);
            let bm = Mat::from_column_slice(b.len(), 1, b.as_slice());
            let sol = linalg::spd_solve(&s, &bm).map_err(|_| singular_hint(x, lambda_g))?;
            Ok(sol.column(0).into_owned())
        }
    }
}

/// Ridge-path helper: one eigendecomposition of `Σ̂` serves every `λ`.
#[derive(Debug, Clone)]
pub struct RidgePath {
    eigvals: Vector,
    eigvecs: Mat,
    /// `Uᵀ Xᵀy/n`.
    rotated: Vector,
    moment: Vector,
}

impl RidgePath {
    pub fn new(x: &Mat, y: &Vector) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(invalid(format!("{} inputs but {} targets", x.nrows(), y.len())));
        }
        let moment = x.transpose() * y / x.nrows() as f64;
        let (eigvals, eigvecs) = linalg::sym_eigen(&model::second_moment(x));
        let rotated = eigvecs.transpose() * &moment;
        Ok(Self { eigvals, eigvecs, rotated, moment })
    }

    pub fn sgd(&self) -> &Vector {
        &self.moment
    }

    pub fn kfac(&self, lambda: f64) -> Result<Vector> {
        let floor = 1e-12 * self.eigvals[0].abs().max(f64::MIN_POSITIVE);
        if self.eigvals.iter().any(|&d| d + lambda <= floor) {
            return Err(Error::Singular(format!("Σ̂ + {lambda}·I is singular; use lambda_g > 0")));
        }
        let scaled = Vector::from_fn(self.rotated.len(), |i, _| self.rotated[i] / (self.eigvals[i] + lambda));
        Ok(&self.eigvecs * scaled)
    }
}

/// Cosine similarity `βᵀβ★ / (‖β‖‖β★‖)`.
pub fn empirical_alignment(beta: &Vector, beta_star: &Vector) -> Result<f64> {
    if beta.len() != beta_star.len() {
        return Err(invalid("alignment of vectors with different lengths"));
    }
    let (a, b) = (beta.norm(), beta_star.norm());
    if a == 0.0 || b == 0.0 {
        return Err(invalid("alignment with a zero vector is undefined"));
    }
    Ok((beta.dot(beta_star) / (a * b)).clamp(-1.0, 1.0))
}

/// `‖G₁ − (G₀ + α η f₀ βᵀ)‖_op`: distance of the update from its rank-one
/// spike.
pub fn rank_one_residual(g1: &Mat, g0: &Mat, f0: &Vector, beta: &Vector, alpha: f64, eta: f64) -> f64 {
    let spike = f0 * beta.transpose() * (alpha * eta);
    linalg::op_norm(&(g1 - g0 - spike))
}

/// Leading right singular vector of `G₁ − G₀`, signed to correlate
/// positively with `reference`.
pub fn update_direction(g1: &Mat, g0: &Mat, reference: &Vector) -> Vector {
    leading_right_singular(&(g1 - g0), reference)
}

/// Power iteration on `DᵀD` started at `start`; falls back to a full
/// eigendecomposition if the iteration stalls.
pub fn leading_right_singular(d: &Mat, start: &Vector) -> Vector {
    const MAX_ITER: usize = 2000;
    let mut v = if start.norm() > 0.0 { start / start.norm() } else { Vector::from_element(d.ncols(), 1.0).normalize() };
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let w = d.transpose() * (d * &v);
        let nw = w.norm();
        if nw == 0.0 {
            break;
        }
        let next = w / nw;
        let change = (&next - &v).norm();
        v = next;
        if change < 1e-13 {
            converged = true;
            break;
        }
    }
    if !converged {
        let (_, vecs) = linalg::sym_eigen(&linalg::gram(d));
        v = vecs.column(0).into_owned();
    }
    if v.dot(start) < 0.0 {
        v.neg_mut();
    }
    v
}

/// Every one-step update `G₁ − G₀` from one gradient: the SGD step and,
/// through one eigendecomposition of `Σ̂`, the KFAC step for any `λ_G`.
#[derive(Debug, Clone)]
pub struct UpdatePath {
    sgd: Mat,
    eigvals: Vector,
    eigvecs: Mat,
    /// `(G₁ − G₀)_sgd U`.
    rotated: Mat,
}

impl UpdatePath {
    pub fn new(cfg: &OneStepConfig, init: &OneStepInit, x: &Mat, y: &Vector) -> Result<Self> {
        let sgd = one_step_update(cfg, init, x, y, OneStepMethod::Sgd)? - &init.g0;
        let (eigvals, eigvecs) = linalg::sym_eigen(&model::second_moment(x));
        let rotated = &sgd * &eigvecs;
        Ok(Self { sgd, eigvals, eigvecs, rotated })
    }

    pub fn sgd(&self) -> &Mat {
        &self.sgd
    }

    pub fn kfac(&self, lambda: f64) -> Result<Mat> {
        let floor = 1e-12 * self.eigvals[0].abs().max(f64::MIN_POSITIVE);
        if self.eigvals.iter().any(|&d| d + lambda <= floor) {
            return Err(Error::Singular(format!("Σ̂ + {lambda}·I is singular; use lambda_g > 0")));
        }
        let mut scaled = self.rotated.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col /= self.eigvals[j] + lambda;
        }
        Ok(scaled * self.eigvecs.transpose())
    }
}

/// Least-squares second layer on the updated features `σ(X G₁ᵀ)`.
pub fn refit_head(g1: &Mat, student: Activation, x: &Mat, y: &Vector) -> Result<Vector> {
    let w = NetWeights { f: Mat::zeros(1, g1.nrows()), g: g1.clone(), activation: student };
    let z = w.features(x);
    let ztz = linalg::gram(&z);
    let rhs = z.transpose() * y;
    let rho = 1e-10 * linalg::trace(&ztz).max(f64::MIN_POSITIVE) / ztz.nrows() as f64;
    let sol = linalg::spd_solve(&ridged(&ztz, rho), &Mat::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
    Ok(sol.column(0).into_owned())
}
