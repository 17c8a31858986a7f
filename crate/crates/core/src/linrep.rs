//! Alternating layer-wise updates for linear representation learning,
//! evaluation metrics, transfer fitting, the multi-task two-stage update and
//! the population lower-bound dynamics.

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{invalid, shape, Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{self, NetWeights, PreconditionerSet};
use crate::rng::RngStream;
use crate::synth::{self, Batch, LinRepInstance, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Sgd,
    Amgd,
    Dfw,
    Kfac,
    Adam,
    NgdFull,
    AmgdBatchnorm,
}

impl MethodKind {
    pub const ALL: [MethodKind; 7] = [
        MethodKind::Sgd,
        MethodKind::Amgd,
        MethodKind::Dfw,
        MethodKind::Kfac,
        MethodKind::Adam,
        MethodKind::NgdFull,
        MethodKind::AmgdBatchnorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Sgd => "sgd",
            MethodKind::Amgd => "amgd",
            MethodKind::Dfw => "dfw",
            MethodKind::Kfac => "kfac",
            MethodKind::Adam => "adam",
            MethodKind::NgdFull => "ngd_full",
            MethodKind::AmgdBatchnorm => "amgd_batchnorm",
        }
    }

    /// Methods whose head update is the exact least-squares refit.
    pub fn head_is_least_squares(self) -> bool {
        matches!(self, MethodKind::Amgd | MethodKind::Dfw | MethodKind::AmgdBatchnorm)
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Relative ridge on the dense Fisher blocks: `ridge · trace / dim`.
pub const NGD_DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinRepMethod {
    pub kind: MethodKind,
    pub eta_g: f64,
    pub eta_f: f64,
    pub lambda_g: f64,
    pub adam: AdamParams,
    pub ngd_ridge: f64,
}

impl LinRepMethod {
    /// `lr` sets η_G. The head rate is pinned to 1 for the least-squares
    /// methods and follows `lr` otherwise.
    pub fn new(kind: MethodKind, lr: f64) -> Self {
        let eta_f = if kind.head_is_least_squares() { 1.0 } else { lr };
        Self { kind, eta_g: lr, eta_f, lambda_g: 0.0, adam: AdamParams::default(), ngd_ridge: NGD_DEFAULT_RIDGE }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_g >= 0.0 && self.eta_g.is_finite()) || !(self.eta_f >= 0.0 && self.eta_f.is_finite()) {
            return Err(invalid(format!("{}: learning rates must be finite and nonnegative", self.kind)));
        }
        if self.kind.head_is_least_squares() && self.eta_f != 1.0 {
            return Err(invalid(format!("{} requires eta_f = 1", self.kind)));
        }
        if !(self.lambda_g >= 0.0) {
            return Err(invalid("lambda_g must be nonnegative"));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(invalid("adam parameters need beta1, beta2 in [0, 1) and eps > 0"));
        }
        if !(self.ngd_ridge >= 0.0) {
            return Err(invalid("ngd_ridge must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct AdamMoments {
    m: Option<Mat>,
    v: Option<Mat>,
}

impl AdamMoments {
    fn direction(&mut self, grad: &Mat, p: &AdamParams, t: i32) -> Mat {
        let m = self.m.get_or_insert_with(|| Mat::zeros(grad.nrows(), grad.ncols()));
        let v = self.v.get_or_insert_with(|| Mat::zeros(grad.nrows(), grad.ncols()));
        m.zip_apply(grad, |mi, gi| *mi = p.beta1 * *mi + (1.0 - p.beta1) * gi);
        v.zip_apply(grad, |vi, gi| *vi = p.beta2 * *vi + (1.0 - p.beta2) * gi * gi);
        let c1 = 1.0 - p.beta1.powi(t);
        let c2 = 1.0 - p.beta2.powi(t);
        m.zip_map(v, |mi, vi| (mi / c1) / ((vi / c2).sqrt() + p.eps))
    }
}

/// Optimizer state carried between steps (only Adam keeps any).
#[derive(Debug, Clone, Default)]
pub struct MethodState {
    steps: i32,
    adam_g: AdamMoments,
    adam_f: AdamMoments,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub weights: NetWeights,
    pub precond: PreconditionerSet,
}

fn ridge(m: &Mat, lambda: f64) -> Mat {
    if lambda == 0.0 {
        m.clone()
    } else {
        m + linalg::identity(m.nrows()) * lambda
    }
}

/// `F − η_F ∇_F L̂(F, G) Q_F⁻¹` with `Q_F` the feature second moment.
pub fn preconditioned_head_step(f: &Mat, g: &Mat, batch: &Batch, eta_f: f64) -> Result<(Mat, Mat)> {
    let z = linalg::a_bt(&batch.x, g);
    let q_f = model::second_moment(&z);
    let grad = model::grad_f_from_features(f, &z, &batch.y);
    let dir = linalg::spd_solve_right(&grad, &q_f)?;
    Ok((f - dir * eta_f, q_f))
}

/// Least-squares head `Yᵀ Z (Zᵀ Z)⁻¹` for features `Z = X Gᵀ`.
pub fn least_squares_head(g: &Mat, batch: &Batch) -> Result<Mat> {
    let z = linalg::a_bt(&batch.x, g);
    let ztz = linalg::gram(&z);
    let yz = batch.y.transpose() * &z;
    linalg::spd_solve_right(&yz, &ztz)
}

/// Exact solve against `Σ̂ ⊗ FᵀF + ρ I` through the eigenvectors of the two
/// factors. Equivalent to the dense solve, see the tests.
fn kron_ridge_solve(grad: &Mat, ftf: &Mat, sigma: &Mat, rho: f64) -> Mat {
    let (d2, v) = linalg::sym_eigen(ftf);
    let (d1, u) = linalg::sym_eigen(sigma);
    let mut core = v.transpose() * grad * &u;
    for j in 0..core.ncols() {
        for i in 0..core.nrows() {
            core[(i, j)] /= d2[i] * d1[j] + rho;
        }
    }
    v * core * u.transpose()
}

/// Dense regularized Fisher block of the representation layer,
/// `Σ̂ ⊗ FᵀF + ρ I` with `ρ = ridge · trace / dim`, in column-major `vec(G)`
/// coordinates.
pub fn dense_fisher_g(f: &Mat, x: &Mat, ridge_rel: f64) -> (Mat, f64) {
    let sigma = model::second_moment(x);
    let ftf = linalg::gram(f);
    let mut fisher = linalg::kron(&sigma, &ftf);
    let dim = fisher.nrows();
    let rho = ridge_rel * linalg::trace(&fisher) / dim as f64;
    for i in 0..dim {
        fisher[(i, i)] += rho;
    }
    (fisher, rho)
}

/// Per-batch whitening `(X − x̄) Σ̂^{-1/2}` with `Σ̂` the centered second
/// moment. Singular `Σ̂` gets a ridge of `1e-8 · trace / dx`.
pub fn batchnorm_transform(x: &Mat) -> Result<Mat> {
    let (n, dx) = x.shape();
    if n == 0 {
        return Err(shape("empty batch"));
    }
    let mean = x.row_mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= &mean;
    }
    let sigma = model::second_moment(&xc);
    let (mut vals, vecs) = linalg::sym_eigen(&sigma);
    if vals[dx - 1] <= 1e-12 * vals[0].max(f64::MIN_POSITIVE) {
        let bump = 1e-8 * vals.sum() / dx as f64;
        vals.add_scalar_mut(bump);
    }
    let w = linalg::sym_recompose(&vals.map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt()), &vecs);
    Ok(xc * w)
}

fn whiten(b: &Batch) -> Result<Batch> {
    Ok(Batch { x: batchnorm_transform(&b.x)?, y: b.y.clone() })
}

/// One alternating update: representation first on `batch_g`, then the head
/// on `batch_f` with the new representation.
pub fn step(
    method: &LinRepMethod,
    state: &mut MethodState,
    w: &NetWeights,
    batch_g: &Batch,
    batch_f: &Batch,
) -> Result<StepOutput> {
    if !w.activation.is_identity() {
        return Err(invalid("linear representation updates require the identity activation"));
    }
    let (bg, bf);
    let (batch_g, batch_f) = if method.kind == MethodKind::AmgdBatchnorm {
        bg = whiten(batch_g)?;
        bf = whiten(batch_f)?;
        (&bg, &bf)
    } else {
        (batch_g, batch_f)
    };
    state.steps += 1;
    let t = state.steps;
    let grad_g = model::grad_g(w, &batch_g.x, &batch_g.y)?;
    let mut p_g = None;
    let mut q_g = None;
    let dir_g = match method.kind {
        MethodKind::Sgd | MethodKind::Amgd | MethodKind::AmgdBatchnorm => grad_g,
        MethodKind::Dfw => {
            let s = ridge(&model::second_moment(&batch_g.x), method.lambda_g);
            let d = linalg::spd_solve_right(&grad_g, &s)?;
            q_g = Some(s);
            d
        }
        MethodKind::Kfac => {
            let s = ridge(&model::second_moment(&batch_g.x), method.lambda_g);
            let ftf = linalg::gram(&w.f);
            let d = linalg::spd_solve(&ftf, &linalg::spd_solve_right(&grad_g, &s)?)?;
            p_g = Some(ftf);
            q_g = Some(s);
            d
        }
        MethodKind::Adam => state.adam_g.direction(&grad_g, &method.adam, t),
        MethodKind::NgdFull => {
            let s = model::second_moment(&batch_g.x);
            let ftf = linalg::gram(&w.f);
            let dim = (s.nrows() * ftf.nrows()) as f64;
            let rho = method.ngd_ridge * linalg::trace(&s) * linalg::trace(&ftf) / dim;
            let d = kron_ridge_solve(&grad_g, &ftf, &s, rho);
            p_g = Some(ftf);
            q_g = Some(s);
            d
        }
    };
    let g_bar = &w.g - dir_g * method.eta_g;
    let g_new = linalg::row_orthonormalize(&g_bar)?;

    let z = linalg::a_bt(&batch_f.x, &g_new);
    let q_f = model::second_moment(&z);
    let grad_f = model::grad_f_from_features(&w.f, &z, &batch_f.y);
    let f_new = match method.kind {
        MethodKind::Sgd => &w.f - grad_f * method.eta_f,
        MethodKind::Adam => &w.f - state.adam_f.direction(&grad_f, &method.adam, t) * method.eta_f,
        MethodKind::NgdFull => {
            let rho = method.ngd_ridge * linalg::trace(&q_f) / q_f.nrows() as f64;
            &w.f - linalg::spd_solve_right(&grad_f, &ridge(&q_f, rho))? * method.eta_f
        }
        _ => &w.f - linalg::spd_solve_right(&grad_f, &q_f)? * method.eta_f,
    };
    let weights = NetWeights { f: f_new, g: g_new, activation: Activation::Identity };
    if !weights.is_finite() {
        return Err(Error::Numerical("non-finite weights after update".into()));
    }
    Ok(StepOutput {
        weights,
        precond: PreconditionerSet { p_g, q_g, p_f: None, q_f: Some(q_f), ridge_g: method.lambda_g, ridge_f: 0.0 },
    })
}

/// `‖G (I − G★ᵀG★)‖_op`. Inputs that are not row-orthonormal to 1e-8 are
/// orthonormalized first.
pub fn subspace_distance(g: &Mat, g_star: &Mat) -> Result<f64> {
    if g.ncols() != g_star.ncols() {
        return Err(shape(format!("column mismatch: {} vs {}", g.ncols(), g_star.ncols())));
    }
    let fix = |m: &Mat| -> Result<Mat> {
        if linalg::max_abs_diff(&linalg::a_bt(m, m), &linalg::identity(m.nrows())) <= 1e-8 {
            Ok(m.clone())
        } else {
            linalg::row_orthonormalize(m)
        }
    };
    let g = fix(g)?;
    let gs = fix(g_star)?;
    let resid = &g - linalg::a_bt(&g, &gs) * &gs;
    Ok(linalg::op_norm(&resid).min(1.0))
}

#[derive(Debug, Clone)]
pub struct TransferFit {
    pub f_ls: Mat,
    /// Set when `ZᵀZ` was singular and a ridge of `1e-10·trace/k` was added.
    pub ridged: bool,
}

pub fn fit_transfer_head(g_hat: &Mat, test_batch: &Batch) -> Result<TransferFit> {
    let k = g_hat.nrows();
    if test_batch.len() < k {
        return Err(invalid(format!("transfer fit needs at least k = {k} samples, got {}", test_batch.len())));
    }
    let z = linalg::a_bt(&test_batch.x, g_hat);
    let ztz = linalg::gram(&z);
    let yz = test_batch.y.transpose() * &z;
    match linalg::spd_solve_right(&yz, &ztz) {
        Ok(f_ls) if linalg::is_finite(&f_ls) => Ok(TransferFit { f_ls, ridged: false }),
        _ => {
            let rho = 1e-10 * linalg::trace(&ztz).max(f64::MIN_POSITIVE) / k as f64;
            let f_ls = linalg::spd_solve_right(&yz, &ridge(&ztz, rho))?;
            Ok(TransferFit { f_ls, ridged: true })
        }
    }
}

/// Population excess risk on the target task,
/// `‖(F Ĝ − F★ G★) Σ_test^{1/2}‖²_F`.
pub fn transfer_excess_risk(inst: &LinRepInstance, f: &Mat, g_hat: &Mat) -> f64 {
    let w = f * g_hat - inst.head(Task::Test) * &inst.g_star;
    let ws = &w * &inst.cov_test.matrix;
    ws.component_mul(&w).sum().max(0.0)
}

/// Monte-Carlo estimate of the same excess risk on `samples` fresh inputs.
pub fn transfer_excess_risk_mc(inst: &LinRepInstance, f: &Mat, g_hat: &Mat, samples: usize, rng: &mut RngStream) -> f64 {
    let w = f * g_hat - inst.head(Task::Test) * &inst.g_star;
    let x = synth::sample_covariates(&inst.cov_test, inst.family, samples, rng);
    linalg::a_bt(&x, &w).norm_squared() / samples as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub train_loss: f64,
    pub subspace_dist: f64,
    pub transfer_loss: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn diverged(&self) -> bool {
        self.records.last().is_some_and(|r| r.diverged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub iterations: usize,
    pub batch_size: usize,
    pub n_test: usize,
    /// Evaluate every this many iterations (the final iteration is always
    /// evaluated).
    pub eval_every: usize,
    /// `None` uses the exact population transfer risk.
    pub transfer_samples: Option<usize>,
}

/// Random row-orthonormal `G₀` and the least-squares head fitted on an
/// independent training batch.
pub fn initial_weights(inst: &LinRepInstance, batch_size: usize, rng: &mut RngStream) -> Result<NetWeights> {
    let g = synth::stiefel_uniform(inst.k, inst.dx, rng)?;
    let batch = synth::sample_linrep_batch(inst, Task::Train, batch_size.max(inst.k), rng)?;
    let f = least_squares_head(&g, &batch)?;
    NetWeights::new(f, g, Activation::Identity)
}

fn evaluate(
    method: &LinRepMethod,
    inst: &LinRepInstance,
    w: &NetWeights,
    settings: &RunSettings,
    iter: usize,
    rng: &mut RngStream,
) -> Result<TraceRecord> {
    let mut train = synth::sample_linrep_batch(inst, Task::Train, settings.batch_size, rng)?;
    if method.kind == MethodKind::AmgdBatchnorm {
        train = whiten(&train)?;
    }
    let train_loss = model::batch_loss(w, &train.x, &train.y)?;
    let subspace_dist = subspace_distance(&w.g, &inst.g_star)?;
    let test = synth::sample_linrep_batch(inst, Task::Test, settings.n_test, rng)?;
    let fit = fit_transfer_head(&w.g, &test)?;
    let transfer_loss = match settings.transfer_samples {
        None => transfer_excess_risk(inst, &fit.f_ls, &w.g),
        Some(m) => transfer_excess_risk_mc(inst, &fit.f_ls, &w.g, m, rng),
    };
    Ok(TraceRecord { iter, train_loss, subspace_dist, transfer_loss, diverged: false })
}

fn diverged_record(iter: usize) -> TraceRecord {
    TraceRecord { iter, train_loss: f64::NAN, subspace_dist: f64::NAN, transfer_loss: f64::NAN, diverged: true }
}

pub(crate) fn is_instability(e: &Error) -> bool {
    matches!(e, Error::Singular(_) | Error::RankDeficient(_) | Error::Numerical(_))
}

/// Train from `init` for `settings.iterations` steps. Training batches come
/// from `data_rng`, evaluation batches from `eval_rng`, so the evaluation
/// cadence never changes the trajectory.
pub fn train(
    method: &LinRepMethod,
    inst: &LinRepInstance,
    init: &NetWeights,
    settings: &RunSettings,
    data_rng: &mut RngStream,
    eval_rng: &mut RngStream,
) -> Result<TrainTrace> {
    method.validate()?;
    if settings.eval_every == 0 {
        return Err(invalid("eval_every must be at least 1"));
    }
    let mut w = init.clone();
    let mut state = MethodState::default();
    let mut trace = TrainTrace::default();
    let mut diverged = false;
    trace.records.push(evaluate(method, inst, &w, settings, 0, eval_rng)?);
    for it in 1..=settings.iterations {
        let bg = synth::sample_linrep_batch(inst, Task::Train, settings.batch_size, data_rng)?;
        let bf = synth::sample_linrep_batch(inst, Task::Train, settings.batch_size, data_rng)?;
        if !diverged {
            match step(method, &mut state, &w, &bg, &bf) {
                Ok(out) => w = out.weights,
                Err(e) if is_instability(&e) => diverged = true,
                Err(e) => return Err(e),
            }
        }
        if it % settings.eval_every == 0 || it == settings.iterations {
            if diverged {
                trace.records.push(diverged_record(it));
                continue;
            }
            match evaluate(method, inst, &w, settings, it, eval_rng) {
                Ok(r) if r.train_loss.is_finite() && r.transfer_loss.is_finite() => trace.records.push(r),
                Ok(_) => {
                    diverged = true;
                    trace.records.push(diverged_record(it));
                }
                Err(e) if is_instability(&e) => {
                    diverged = true;
                    trace.records.push(diverged_record(it));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// multi-task

#[derive(Debug, Clone)]
pub struct TaskBatches {
    pub head: Batch,
    pub rep: Batch,
}

#[derive(Debug, Clone)]
pub struct MultitaskOutput {
    pub heads: Vec<Mat>,
    /// Representation before orthonormalization.
    pub g_bar: Mat,
    pub g: Mat,
}

/// Heads first, each with its own `Q_F`; then the representation.
///
/// `kfac`: `D⁽ᵗ⁾ = ∇_G L̂⁽ᵗ⁾(F₊⁽ᵗ⁾, G) Q_G⁽ᵗ⁾⁻¹`, `Ḡ₊ = G − η_G P_G⁻¹ mean(D)` with
/// `P_G = mean F₊⁽ᵗ⁾ᵀF₊⁽ᵗ⁾`. `sgd`: plain gradients averaged over tasks.
pub fn multitask_step(method: &LinRepMethod, heads: &[Mat], g: &Mat, batches: &[TaskBatches]) -> Result<MultitaskOutput> {
    let t = heads.len();
    if t == 0 || batches.len() != t {
        return Err(invalid(format!("need one batch pair per task, got {} heads and {} batches", t, batches.len())));
    }
    if !matches!(method.kind, MethodKind::Kfac | MethodKind::Sgd) {
        return Err(invalid(format!("multitask_step supports kfac and sgd, not {}", method.kind)));
    }
    let k = g.nrows();
    let mut new_heads = Vec::with_capacity(t);
    let mut mean_dir = Mat::zeros(k, g.ncols());
    let mut p_g = Mat::zeros(k, k);
    for (f, b) in heads.iter().zip(batches) {
        let f_new = match method.kind {
            MethodKind::Sgd => {
                let z = linalg::a_bt(&b.head.x, g);
                f - model::grad_f_from_features(f, &z, &b.head.y) * method.eta_f
            }
            _ => preconditioned_head_step(f, g, &b.head, method.eta_f)?.0,
        };
        let w = NetWeights { f: f_new, g: g.clone(), activation: Activation::Identity };
        let grad = model::grad_g(&w, &b.rep.x, &b.rep.y)?;
        let d = match method.kind {
            MethodKind::Sgd => grad,
            _ => {
                let s = ridge(&model::second_moment(&b.rep.x), method.lambda_g);
                linalg::spd_solve_right(&grad, &s)?
            }
        };
        mean_dir += d;
        p_g += linalg::gram(&w.f);
        new_heads.push(w.f);
    }
    mean_dir /= t as f64;
    p_g /= t as f64;
    let dir = match method.kind {
        MethodKind::Sgd => mean_dir,
        _ => linalg::spd_solve(&p_g, &mean_dir).map_err(|_| {
            Error::Singular("task-averaged head Gram is singular: tasks are not diverse enough".into())
        })?,
    };
    let g_bar = g - dir * method.eta_g;
    let g_new = linalg::row_orthonormalize(&g_bar)?;
    Ok(MultitaskOutput { heads: new_heads, g_bar, g: g_new })
}

// ---------------------------------------------------------------------------
// lower bound

/// Two-dimensional hard instance: `F★ᵀF★ = diag(1 − λ, λ)`, `G★ = [I 0]`,
/// `G₀ = [[1, 0, 0], [0, √(1 − ε₀²), ε₀]]`.
#[derive(Debug, Clone)]
pub struct LowerBoundConstruction {
    pub f_star: Mat,
    pub g_star: Mat,
    pub g0: Mat,
}

pub fn lower_bound_construction(lambda: f64, eps0: f64) -> Result<LowerBoundConstruction> {
    if !(lambda > 0.0 && lambda <= 0.5) {
        return Err(invalid(format!("lambda must lie in (0, 1/2], got {lambda}")));
    }
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(invalid(format!("eps0 must lie in (0, 1), got {eps0}")));
    }
    let f_star = Mat::from_diagonal(&linalg::Vector::from_vec(vec![(1.0 - lambda).sqrt(), lambda.sqrt()]));
    let g_star = Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let g0 = Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, (1.0 - eps0 * eps0).sqrt(), eps0]);
    Ok(LowerBoundConstruction { f_star, g_star, g0 })
}

/// One population (`n = ∞`, `Σ = I`, noiseless) alternating step with the
/// least-squares head `F = F★G★Gᵀ` and a plain gradient step on `G`.
pub fn population_amgd_step(g: &Mat, f_star: &Mat, g_star: &Mat, eta: f64) -> Result<Mat> {
    let target = f_star * g_star;
    let f = linalg::a_bt(&target, g);
    let grad = f.transpose() * (&f * g - target);
    linalg::row_orthonormalize(&(g - grad * eta))
}

/// `dist(G_t, G★)` for `t = 0..=T` under population AMGD on the hard
/// instance.
pub fn lower_bound_trajectory(lambda: f64, eta: f64, eps0: f64, t: usize) -> Result<Vec<f64>> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(invalid("eta must be finite and nonnegative"));
    }
    let c = lower_bound_construction(lambda, eps0)?;
    let mut g = c.g0;
    let mut out = Vec::with_capacity(t + 1);
    out.push(subspace_distance(&g, &c.g_star)?);
    for _ in 0..t {
        g = population_amgd_step(&g, &c.f_star, &c.g_star, eta)?;
        // dist = |G[1, 2]| exactly; the generic formula loses relative
        // accuracy once the distance underflows the SVD's precision
        out.push(g[(1, 2)].abs());
    }
    Ok(out)
}

/// Per-step rate `1 − 4λ/(1 − λ)`.
pub fn lower_bound_rate(lambda: f64) -> f64 {
    1.0 - 4.0 * lambda / (1.0 - lambda)
}

/// Step sizes checked against the envelope: `{0.1, 0.5, 1, 2, 4/(1 − λ)}`.
pub fn admissible_eta_grid(lambda: f64) -> Vec<f64> {
    vec![0.1, 0.5, 1.0, 2.0, 4.0 / (1.0 - lambda)]
}
