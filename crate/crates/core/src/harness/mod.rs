//! Configuration-driven experiment runners. Every run is a deterministic
//! function of its config: trial `i` draws from streams keyed by
//! `derive_seed(base_seed, i)`, and all methods within a trial see the same
//! instance, initialization and data (common random numbers).

pub mod config;
pub mod output;
pub mod svg;

use std::time::Instant;

use rayon::prelude::*;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::linrep::{self, LinRepMethod, RunSettings, TaskBatches, TraceRecord, TrainTrace};
use crate::model::{self, NetWeights};
use crate::rmt;
use crate::rng::{derive_seed, RngStream};
use crate::single_index::{self, OneStepConfig, RidgePath, UpdatePath};
use crate::synth::{self, CovarianceRecipe, LinRepInstance, Task};

pub use config::{ExperimentConfig, ExperimentKind, InstanceConfig, LowerBoundConfig, LrGrid, MethodConfig, SingleIndexConfig};
pub use output::{write_outputs, Cell, RunRecord, Table};

const STREAM_INSTANCE: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_TASKS: u64 = 4;

pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    derive_seed(base_seed, trial as u64)
}

/// Trial-mean trace row. Diverged trials count as distance 1 and are left
/// out of the loss means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub train_loss: f64,
    pub subspace_dist: f64,
    pub transfer_loss: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone)]
pub struct MethodTraces {
    pub name: String,
    pub method: LinRepMethod,
    pub trials: Vec<TrainTrace>,
    pub mean: Vec<TraceRow>,
}

impl MethodTraces {
    pub fn last(&self) -> &TraceRow {
        self.mean.last().expect("traces always hold the initial row")
    }
}

#[derive(Debug, Clone)]
pub struct TraceResult {
    pub methods: Vec<MethodTraces>,
}

impl TraceResult {
    pub fn get(&self, name: &str) -> Option<&MethodTraces> {
        self.methods.iter().find(|m| m.name == name)
    }
}

pub fn aggregate(trials: &[TrainTrace]) -> Vec<TraceRow> {
    let len = trials.iter().map(|t| t.records.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let recs: Vec<&TraceRecord> = trials.iter().map(|t| &t.records[i]).collect();
            let ok: Vec<&&TraceRecord> = recs.iter().filter(|r| !r.diverged).collect();
            let mean = |f: &dyn Fn(&TraceRecord) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            let dist = recs.iter().map(|r| if r.diverged { 1.0 } else { r.subspace_dist }).sum::<f64>() / recs.len() as f64;
            TraceRow {
                iter: recs[0].iter,
                train_loss: mean(&|r| r.train_loss),
                subspace_dist: dist,
                transfer_loss: mean(&|r| r.transfer_loss),
                diverged: recs.len() - ok.len(),
            }
        })
        .collect()
}

fn settings(inst: &InstanceConfig, iterations: usize) -> RunSettings {
    RunSettings {
        iterations,
        batch_size: inst.batch_size,
        n_test: inst.n_test,
        eval_every: inst.eval_every,
        transfer_samples: inst.transfer_samples,
    }
}

pub fn build_instance(inst: &InstanceConfig, seed: u64) -> Result<LinRepInstance> {
    let mut rng = RngStream::new(seed, STREAM_INSTANCE);
    synth::make_linrep_instance(
        inst.dx,
        inst.dy,
        inst.k,
        (&inst.cov_train, &inst.cov_test),
        (inst.noise_train, inst.noise_test),
        inst.family,
        &mut rng,
    )
}

fn run_single(method: &LinRepMethod, inst_cfg: &InstanceConfig, settings: &RunSettings, seed: u64) -> Result<TrainTrace> {
    let inst = build_instance(inst_cfg, seed)?;
    let init = linrep::initial_weights(&inst, inst_cfg.batch_size, &mut RngStream::new(seed, STREAM_INIT))?;
    linrep::train(
        method,
        &inst,
        &init,
        settings,
        &mut RngStream::new(seed, STREAM_DATA),
        &mut RngStream::new(seed, STREAM_EVAL),
    )
}

fn trace_experiment(cfg: &ExperimentConfig) -> Result<TraceResult> {
    let inst = cfg.instance()?;
    let methods: Vec<LinRepMethod> = cfg.methods.iter().map(|m| m.resolve()).collect::<Result<_>>()?;
    let s = settings(inst, cfg.iterations);
    let jobs: Vec<(usize, usize)> = (0..methods.len()).flat_map(|m| (0..cfg.trials).map(move |t| (m, t))).collect();
    let traces: Vec<TrainTrace> = jobs
        .par_iter()
        .map(|&(m, t)| run_single(&methods[m], inst, &s, trial_seed(cfg.base_seed, t)))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(methods.len());
    for (m, chunk) in traces.chunks(cfg.trials).enumerate() {
        out.push(MethodTraces {
            name: methods[m].kind.name().to_string(),
            method: methods[m].clone(),
            trials: chunk.to_vec(),
            mean: aggregate(chunk),
        });
    }
    Ok(TraceResult { methods: out })
}

/// Training loss, subspace distance and transfer loss over time for each
/// configured method.
pub fn run_headtohead(cfg: &ExperimentConfig) -> Result<TraceResult> {
    trace_experiment(cfg)
}

/// Same as [`run_headtohead`]; the config must include `amgd_batchnorm`.
pub fn run_batchnorm(cfg: &ExperimentConfig) -> Result<TraceResult> {
    trace_experiment(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrSweepRow {
    pub method: String,
    pub lr: f64,
    /// Trial mean of the final distance, diverged runs counted as 1.
    pub subspace_dist: f64,
    pub diverged: usize,
    pub trials: usize,
}

/// Final subspace distance for every (method, learning rate) pair. Only the
/// last iterate is evaluated.
pub fn run_lr_sweep(cfg: &ExperimentConfig) -> Result<Vec<LrSweepRow>> {
    let inst = cfg.instance()?;
    let grid = cfg.lr_grid.as_ref().ok_or_else(|| Error::Config("lr_sweep needs lr_grid".into()))?.points();
    let mut s = settings(inst, cfg.iterations);
    s.eval_every = cfg.iterations.max(1);
    let mut jobs = Vec::new();
    for (mi, mc) in cfg.methods.iter().enumerate() {
        for &lr in &grid {
            let method = mc.build(lr)?;
            for t in 0..cfg.trials {
                jobs.push((mi, lr, method.clone(), t));
            }
        }
    }
    let finals: Vec<(bool, f64)> = jobs
        .par_iter()
        .map(|(_, _, method, t)| {
            let tr = run_single(method, inst, &s, trial_seed(cfg.base_seed, *t))?;
            let last = tr.last().expect("initial row");
            Ok((last.diverged, last.subspace_dist))
        })
        .collect::<Result<_>>()?;
    let rows = jobs
        .chunks(cfg.trials)
        .zip(finals.chunks(cfg.trials))
        .map(|(j, f)| {
            let diverged = f.iter().filter(|r| r.0).count();
            let dist = f.iter().map(|&(d, v)| if d || !v.is_finite() { 1.0 } else { v }).sum::<f64>() / f.len() as f64;
            LrSweepRow { method: cfg.methods[j[0].0].method.name().to_string(), lr: j[0].1, subspace_dist: dist, diverged, trials: f.len() }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRow {
    pub epsilon: f64,
    pub lambda: f64,
    /// Trial means of the cosine between `β★` and the leading right singular
    /// vector of `G₁ − G₀`.
    pub sim_sgd: f64,
    pub sim_kfac: f64,
    pub sd_sgd: f64,
    pub sd_kfac: f64,
    /// Trial means of the cosine between `β★` and the direction estimators.
    pub beta_sgd: f64,
    pub beta_kfac: f64,
    pub theory_sgd: f64,
    pub theory_kfac: Option<f64>,
    pub theory_error: Option<String>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

struct AlignmentSample {
    sim_sgd: f64,
    beta_sgd: f64,
    sim_kfac: Vec<f64>,
    beta_kfac: Vec<f64>,
}

fn alignment_trial(s: &SingleIndexConfig, eps: f64, seed: u64) -> Result<AlignmentSample> {
    let cov = synth::build_covariance(&CovarianceRecipe::TwoPoint { eps }, s.dx, &mut RngStream::new(seed, STREAM_INSTANCE))?;
    let inst = synth::make_single_index_instance(cov, s.teacher, s.noise_sd, &mut RngStream::new(seed, STREAM_INSTANCE))?;
    let (x, y) = synth::sample_single_index_batch(&inst, s.n, &mut RngStream::new(seed, STREAM_DATA))?;
    let cfg = OneStepConfig {
        dx: s.dx,
        n: s.n,
        n_hidden: s.n_hidden,
        eta: s.eta,
        lambda_g: 0.0,
        student: s.student.unwrap_or(s.teacher),
    };
    let init = single_index::init_one_step(&cfg, &mut RngStream::new(seed, STREAM_INIT))?;
    let bs = &inst.beta_star;
    let path = UpdatePath::new(&cfg, &init, &x, &y)?;
    let ridge = RidgePath::new(&x, &y)?;
    let sim_sgd = single_index::empirical_alignment(&single_index::leading_right_singular(path.sgd(), bs), bs)?;
    let beta_sgd = single_index::empirical_alignment(ridge.sgd(), bs)?;
    let mut sim_kfac = Vec::with_capacity(s.lambdas.len());
    let mut beta_kfac = Vec::with_capacity(s.lambdas.len());
    for &lam in &s.lambdas {
        let d = path.kfac(lam)?;
        sim_kfac.push(single_index::empirical_alignment(&single_index::leading_right_singular(&d, bs), bs)?);
        beta_kfac.push(single_index::empirical_alignment(&ridge.kfac(lam)?, bs)?);
    }
    Ok(AlignmentSample { sim_sgd, beta_sgd, sim_kfac, beta_kfac })
}

/// Monte-Carlo alignment of the one-step SGD and KFAC updates with `β★`
/// over the `(ε, λ)` grid, next to the random-matrix predictions.
pub fn run_single_index(cfg: &ExperimentConfig) -> Result<Vec<AlignmentRow>> {
    let s = cfg.single_index.as_ref().ok_or_else(|| Error::Config("missing single_index section".into()))?;
    let jobs: Vec<(usize, usize)> = (0..s.epsilons.len()).flat_map(|e| (0..cfg.trials).map(move |t| (e, t))).collect();
    let samples: Vec<AlignmentSample> = jobs
        .par_iter()
        .map(|&(e, t)| alignment_trial(s, s.epsilons[e], trial_seed(cfg.base_seed, t)))
        .collect::<Result<_>>()?;
    let phi = s.dx as f64 / s.n as f64;
    let mut rows = Vec::new();
    for (e, chunk) in samples.chunks(cfg.trials).enumerate() {
        let eps = s.epsilons[e];
        let atoms = if eps == 0.0 { vec![(1.0, 1.0)] } else { vec![(1.0 - eps, 0.5), (1.0 + eps, 0.5)] };
        let model = rmt::SpectralModel::new(atoms, phi)?;
        let moments = rmt::gaussian_moments(s.teacher, model.moment(1))?;
        let theory_sgd = rmt::predict_corr_sgd(&moments, &model, s.n, s.dx, s.noise_sd);
        let sgd: Vec<f64> = chunk.iter().map(|c| c.sim_sgd).collect();
        let (sim_sgd, sd_sgd) = mean_sd(&sgd);
        let (beta_sgd, _) = mean_sd(&chunk.iter().map(|c| c.beta_sgd).collect::<Vec<_>>());
        for (li, &lam) in s.lambdas.iter().enumerate() {
            let (sim_kfac, sd_kfac) = mean_sd(&chunk.iter().map(|c| c.sim_kfac[li]).collect::<Vec<_>>());
            let (beta_kfac, _) = mean_sd(&chunk.iter().map(|c| c.beta_kfac[li]).collect::<Vec<_>>());
            let (theory_kfac, theory_error) = match rmt::predict_corr_kfac(&moments, &model, lam, s.noise_sd) {
                Ok(v) => (Some(v), None),
                Err(err) => (None, Some(err.to_string())),
            };
            rows.push(AlignmentRow {
                epsilon: eps,
                lambda: lam,
                sim_sgd,
                sim_kfac,
                sd_sgd,
                sd_kfac,
                beta_sgd,
                beta_kfac,
                theory_sgd,
                theory_kfac,
                theory_error,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundRow {
    pub lambda: f64,
    pub eta: f64,
    pub t: usize,
    pub dist: f64,
    /// `(1 − 4λ/(1 − λ))^t · dist₀`.
    pub envelope: f64,
}

impl LowerBoundRow {
    pub fn holds(&self) -> bool {
        self.dist >= self.envelope - 1e-12
    }
}

/// Population AMGD on the two-dimensional hard instance against the
/// geometric envelope.
pub fn run_lower_bound(cfg: &ExperimentConfig) -> Result<Vec<LowerBoundRow>> {
    let l = cfg.lower_bound.as_ref().ok_or_else(|| Error::Config("missing lower_bound section".into()))?;
    let mut rows = Vec::new();
    for &lambda in &l.lambdas {
        let etas = l.etas.clone().unwrap_or_else(|| linrep::admissible_eta_grid(lambda));
        let rate = linrep::lower_bound_rate(lambda);
        for eta in etas {
            let traj = linrep::lower_bound_trajectory(lambda, eta, l.eps0, l.horizon)?;
            for (t, &dist) in traj.iter().enumerate() {
                rows.push(LowerBoundRow { lambda, eta, t, dist, envelope: rate.powi(t as i32) * traj[0] });
            }
        }
    }
    Ok(rows)
}

struct MultitaskSetup {
    tasks: Vec<LinRepInstance>,
    transfer: LinRepInstance,
}

/// Task 0 is the base instance; the others share `G★` and draw their own
/// Gaussian head and training covariance.
fn multitask_setup(inst: &InstanceConfig, tasks: usize, seed: u64) -> Result<MultitaskSetup> {
    let base = build_instance(inst, seed)?;
    let mut rng = RngStream::new(seed, STREAM_TASKS);
    let mut all = vec![base.clone()];
    for t in 1..tasks {
        let mut r = rng.fork(t as u64);
        let mut task = base.clone();
        task.f_star_train = r.normal_matrix(inst.dy, inst.k);
        task.cov_train = synth::build_covariance(&inst.cov_train, inst.dx, &mut r)?;
        all.push(task);
    }
    Ok(MultitaskSetup { tasks: all, transfer: base })
}

fn multitask_eval(
    setup: &MultitaskSetup,
    heads: &[Mat],
    g: &Mat,
    s: &RunSettings,
    iter: usize,
    rng: &mut RngStream,
) -> Result<TraceRecord> {
    let mut loss = 0.0;
    for (task, f) in setup.tasks.iter().zip(heads) {
        let b = synth::sample_linrep_batch(task, Task::Train, s.batch_size, rng)?;
        let w = NetWeights::new(f.clone(), g.clone(), Activation::Identity)?;
        loss += model::batch_loss(&w, &b.x, &b.y)?;
    }
    let train_loss = loss / heads.len() as f64;
    let subspace_dist = linrep::subspace_distance(g, &setup.transfer.g_star)?;
    let test = synth::sample_linrep_batch(&setup.transfer, Task::Test, s.n_test, rng)?;
    let fit = linrep::fit_transfer_head(g, &test)?;
    let transfer_loss = match s.transfer_samples {
        None => linrep::transfer_excess_risk(&setup.transfer, &fit.f_ls, g),
        Some(m) => linrep::transfer_excess_risk_mc(&setup.transfer, &fit.f_ls, g, m, rng),
    };
    Ok(TraceRecord { iter, train_loss, subspace_dist, transfer_loss, diverged: false })
}

fn nan_record(iter: usize) -> TraceRecord {
    TraceRecord { iter, train_loss: f64::NAN, subspace_dist: f64::NAN, transfer_loss: f64::NAN, diverged: true }
}

fn run_multitask_single(method: &LinRepMethod, inst: &InstanceConfig, tasks: usize, s: &RunSettings, seed: u64) -> Result<TrainTrace> {
    let setup = multitask_setup(inst, tasks, seed)?;
    let mut init_rng = RngStream::new(seed, STREAM_INIT);
    let mut g = synth::stiefel_uniform(inst.k, inst.dx, &mut init_rng)?;
    let mut heads = Vec::with_capacity(tasks);
    for task in &setup.tasks {
        let b = synth::sample_linrep_batch(task, Task::Train, inst.batch_size.max(inst.k), &mut init_rng)?;
        heads.push(linrep::least_squares_head(&g, &b)?);
    }
    let mut data = RngStream::new(seed, STREAM_DATA);
    let mut eval = RngStream::new(seed, STREAM_EVAL);
    let mut trace = TrainTrace::default();
    trace.records.push(multitask_eval(&setup, &heads, &g, s, 0, &mut eval)?);
    let mut diverged = false;
    for it in 1..=s.iterations {
        let batches = setup
            .tasks
            .iter()
            .map(|task| {
                Ok(TaskBatches {
                    head: synth::sample_linrep_batch(task, Task::Train, s.batch_size, &mut data)?,
                    rep: synth::sample_linrep_batch(task, Task::Train, s.batch_size, &mut data)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if !diverged {
            match linrep::multitask_step(method, &heads, &g, &batches) {
                Ok(out) if out.g.iter().all(|v| v.is_finite()) && out.heads.iter().all(|h| h.iter().all(|v| v.is_finite())) => {
                    heads = out.heads;
                    g = out.g;
                }
                Ok(_) => diverged = true,
                Err(e) if linrep::is_instability(&e) => diverged = true,
                Err(e) => return Err(e),
            }
        }
        if it % s.eval_every == 0 || it == s.iterations {
            if diverged {
                trace.records.push(nan_record(it));
                continue;
            }
            match multitask_eval(&setup, &heads, &g, s, it, &mut eval) {
                Ok(r) if r.train_loss.is_finite() && r.transfer_loss.is_finite() => trace.records.push(r),
                Ok(_) => {
                    diverged = true;
                    trace.records.push(nan_record(it));
                }
                Err(e) if linrep::is_instability(&e) => {
                    diverged = true;
                    trace.records.push(nan_record(it));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(trace)
}

/// Multi-task training: two-stage preconditioned `kfac` against task-averaged
/// `sgd`.
pub fn run_multitask(cfg: &ExperimentConfig) -> Result<TraceResult> {
    let inst = cfg.instance()?;
    let tasks = cfg.tasks.ok_or_else(|| Error::Config("multitask needs tasks".into()))?;
    let methods: Vec<LinRepMethod> = cfg.methods.iter().map(|m| m.resolve()).collect::<Result<_>>()?;
    let s = settings(inst, cfg.iterations);
    let jobs: Vec<(usize, usize)> = (0..methods.len()).flat_map(|m| (0..cfg.trials).map(move |t| (m, t))).collect();
    let traces: Vec<TrainTrace> = jobs
        .par_iter()
        .map(|&(m, t)| run_multitask_single(&methods[m], inst, tasks, &s, trial_seed(cfg.base_seed, t)))
        .collect::<Result<_>>()?;
    let methods_out = traces
        .chunks(cfg.trials)
        .enumerate()
        .map(|(m, chunk)| MethodTraces {
            name: methods[m].kind.name().to_string(),
            method: methods[m].clone(),
            trials: chunk.to_vec(),
            mean: aggregate(chunk),
        })
        .collect();
    Ok(TraceResult { methods: methods_out })
}

#[derive(Debug, Clone)]
pub enum RunOutcome {
    Traces(TraceResult),
    LrSweep(Vec<LrSweepRow>),
    SingleIndex(Vec<AlignmentRow>),
    LowerBound(Vec<LowerBoundRow>),
}

/// Runs the configured experiment and packages its tables.
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let outcome = match cfg.experiment {
        ExperimentKind::Headtohead => RunOutcome::Traces(run_headtohead(cfg)?),
        ExperimentKind::Batchnorm => RunOutcome::Traces(run_batchnorm(cfg)?),
        ExperimentKind::Multitask => RunOutcome::Traces(run_multitask(cfg)?),
        ExperimentKind::LrSweep => RunOutcome::LrSweep(run_lr_sweep(cfg)?),
        ExperimentKind::SingleIndexLambda | ExperimentKind::SingleIndexEpsilon => RunOutcome::SingleIndex(run_single_index(cfg)?),
        ExperimentKind::LowerBound => RunOutcome::LowerBound(run_lower_bound(cfg)?),
    };
    Ok(RunRecord::new(cfg, outcome, start.elapsed().as_secs_f64()))
}
