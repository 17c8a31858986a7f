//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always visible. The
//! process fails when a criterion outside `KNOWN_UNATTAINABLE` fails, or when
//! one inside it starts passing (so the list cannot go stale). Set
//! `KRONFEAT_ACCEPTANCE=1,2,7` to run a subset.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use kronfeat::activation::Activation;
use kronfeat::harness::config::ExperimentConfig;
use kronfeat::harness::{self, RunOutcome};
use kronfeat::kf;
use kronfeat::linalg::{self, Mat, Vector};
use kronfeat::linrep::{self, LinRepMethod, MethodKind, MethodState};
use kronfeat::model::{self, NetWeights};
use kronfeat::rmt::{self, SpectralModel};
use kronfeat::rng::RngStream;
use kronfeat::single_index::{self, OneStepConfig, OneStepMethod};
use kronfeat::synth::{self, Batch, CovarianceRecipe, CovariateFamily, LinRepInstance, Task};

/// Criteria that fail for documented reasons (see README, "Known gaps").
const KNOWN_UNATTAINABLE: [usize; 3] = [5, 8, 9];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn preset(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// oracle: pseudo-inverse least squares through nalgebra's SVD
fn lstsq_head(z: &Mat, y: &Mat) -> Mat {
    z.clone().svd(true, true).solve(y, 1e-14).unwrap().transpose()
}

// oracle: ‖G (I − G★ᵀ(G★G★ᵀ)⁻¹G★)‖_op after orthonormalizing G's rows
fn oracle_distance(g: &Mat, g_star: &Mat) -> f64 {
    let qg = g.transpose().qr().q().transpose();
    let qs = g_star.transpose().qr().q();
    let proj = Mat::identity(g.ncols(), g.ncols()) - &qs * qs.transpose();
    (qg * proj).svd(false, false).singular_values.max()
}

fn random_spd(n: usize, rng: &mut RngStream) -> Mat {
    let a = rng.normal_matrix(n, n);
    &a * a.transpose() / n as f64 + Mat::identity(n, n) * 0.5
}

// ---------------------------------------------------------------------------

fn c1_head_identity() -> Outcome {
    let (n, dx, k, dy) = (256, 30, 5, 8);
    let mut rng = RngStream::new(101, 0);
    let mut worst_ls = 0.0f64;
    let mut worst_ema = 0.0f64;
    let mut worst_step = 0.0f64;
    for _ in 0..100 {
        let g = rng.normal_matrix(k, dx);
        let f = rng.normal_matrix(dy, k);
        let batch = Batch { x: rng.normal_matrix(n, dx), y: rng.normal_matrix(n, dy) };
        let z = &batch.x * g.transpose();
        let f_ls = lstsq_head(&z, &batch.y);
        let (f1, _) = linrep::preconditioned_head_step(&f, &g, &batch, 1.0).unwrap();
        worst_ls = worst_ls.max(max_abs_diff(&f1, &f_ls));
        let (f3, _) = linrep::preconditioned_head_step(&f, &g, &batch, 0.3).unwrap();
        worst_ema = worst_ema.max(max_abs_diff(&f3, &(&f * 0.7 + &f_ls * 0.3)));

        // the same identity through a full KFAC step with a frozen representation
        let g_orth = g.transpose().qr().q().transpose();
        let w = NetWeights::new(f.clone(), g_orth.clone(), Activation::Identity).unwrap();
        let mut m = LinRepMethod::new(MethodKind::Kfac, 0.0);
        m.eta_f = 1.0;
        let out = linrep::step(&m, &mut MethodState::default(), &w, &batch, &batch).unwrap();
        let z = &batch.x * out.weights.g.transpose();
        worst_step = worst_step.max(max_abs_diff(&out.weights.f, &lstsq_head(&z, &batch.y)));
    }
    let worst = worst_ls.max(worst_ema).max(worst_step);
    Outcome::new(worst <= 1e-8, format!("max error: ls {worst_ls:.1e}, ema {worst_ema:.1e}, via step {worst_step:.1e}"))
}

fn conditioned_head(dy: usize, k: usize, kappa: f64, rng: &mut RngStream) -> Mat {
    let u = rng.normal_matrix(dy, k).qr().q();
    let v = rng.normal_matrix(k, k).qr().q();
    let s = Vector::from_fn(k, |i, _| if k == 1 { 1.0 } else { kappa.powf(i as f64 / (k - 1) as f64) });
    u * Mat::from_diagonal(&s) * v.transpose()
}

fn c2_contraction() -> Outcome {
    let (dx, k, dy) = (60, 4, 8);
    let n = 100 * dx;
    let etas = [0.3, 0.7, 1.0];
    let mut summary = Vec::new();
    let mut all = true;
    for kf_star in [1.0, 10.0, 100.0] {
        for k_sigma in [1.0f64, 100.0] {
            let mut ok = [0usize; 3];
            for seed in 0..100u64 {
                let mut rng = RngStream::new(seed, 20 + (kf_star as u64) * 3 + k_sigma as u64);
                let recipe = if k_sigma == 1.0 {
                    CovarianceRecipe::Identity
                } else {
                    CovarianceRecipe::HighAniso { decades: k_sigma.log10() }
                };
                let cov = synth::build_covariance(&recipe, dx, &mut rng).unwrap();
                let f_star = conditioned_head(dy, k, kf_star, &mut rng);
                let g_star = synth::stiefel_uniform(k, dx, &mut rng).unwrap();
                let inst = LinRepInstance {
                    dx,
                    dy,
                    k,
                    g_star: g_star.clone(),
                    f_star_train: f_star.clone(),
                    f_star_test: f_star,
                    cov_train: cov.clone(),
                    cov_test: cov,
                    noise_train: 0.0,
                    noise_test: 0.0,
                    family: CovariateFamily::Gaussian,
                };
                // G₀ at distance just under 0.01/(κκ)
                let perp = Mat::identity(dx, dx) - g_star.transpose() * &g_star;
                let e = rng.normal_matrix(k, dx) * perp;
                let e = &e / e.clone().svd(false, false).singular_values.max();
                let delta = 0.009 / (kf_star * k_sigma);
                let g0 = (&g_star + e * delta).transpose().qr().q().transpose();
                let d0 = oracle_distance(&g0, &g_star);
                assert!(d0 <= 0.01 / (kf_star * k_sigma));
                let head_batch = synth::sample_linrep_batch(&inst, Task::Train, n, &mut rng).unwrap();
                let f0 = lstsq_head(&(&head_batch.x * g0.transpose()), &head_batch.y);
                let w = NetWeights::new(f0, g0, Activation::Identity).unwrap();
                let bg = synth::sample_linrep_batch(&inst, Task::Train, n, &mut rng).unwrap();
                let bf = synth::sample_linrep_batch(&inst, Task::Train, n, &mut rng).unwrap();
                for (i, &eta) in etas.iter().enumerate() {
                    let m = LinRepMethod::new(MethodKind::Kfac, eta);
                    let out = linrep::step(&m, &mut MethodState::default(), &w, &bg, &bf).unwrap();
                    let d1 = oracle_distance(&out.weights.g, &g_star);
                    if d1 <= (1.0 - 0.9 * eta) * d0 + 1e-4 {
                        ok[i] += 1;
                    }
                }
            }
            all &= ok.iter().all(|&c| c >= 95);
            summary.push(format!("κF={kf_star} κΣ={k_sigma}: {ok:?}"));
        }
    }
    Outcome::new(all, format!("steps within bound per η of {etas:?} (of 100): {}", summary.join("; ")))
}

// oracle: the population recursion written out directly
fn oracle_lower_bound(lambda: f64, eta: f64, eps0: f64, t: usize) -> Vec<f64> {
    let f_star = Mat::from_diagonal(&Vector::from_vec(vec![(1.0 - lambda).sqrt(), lambda.sqrt()]));
    let g_star = Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let mut g = Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, (1.0 - eps0 * eps0).sqrt(), eps0]);
    let mut out = vec![oracle_distance(&g, &g_star)];
    for _ in 0..t {
        let target = &f_star * &g_star;
        let f = &target * g.transpose();
        let grad = f.transpose() * (&f * &g - &target);
        let gb = &g - grad * eta;
        // Gram–Schmidt on two rows
        let r0 = gb.row(0).normalize();
        let r1 = gb.row(1) - r0.clone() * gb.row(1).dot(&r0);
        let r1 = r1.normalize();
        g = Mat::from_rows(&[r0, r1]);
        out.push(g[(1, 2)].abs());
    }
    out
}

fn c3_lower_bound() -> Outcome {
    let eps0 = 0.1;
    let horizon = 200;
    let mut violations = 0;
    let mut worst_gap = f64::INFINITY;
    let mut worst_oracle = 0.0f64;
    for lambda in [0.05, 0.1, 0.2] {
        let rate = 1.0 - 4.0 * lambda / (1.0 - lambda);
        for eta in linrep::admissible_eta_grid(lambda) {
            let traj = linrep::lower_bound_trajectory(lambda, eta, eps0, horizon).unwrap();
            let oracle = oracle_lower_bound(lambda, eta, eps0, horizon);
            for (t, (&d, &o)) in traj.iter().zip(&oracle).enumerate() {
                let envelope = rate.powi(t as i32) * eps0;
                worst_gap = worst_gap.min(d - envelope);
                if d < envelope - 1e-12 {
                    violations += 1;
                }
                worst_oracle = worst_oracle.max((d - o).abs() / o.abs().clamp(1e-300, 1.0));
            }
        }
    }
    let agrees = worst_oracle <= 1e-8;
    Outcome::new(
        violations == 0 && agrees,
        format!("{violations} envelope violations, min(dist − envelope) = {worst_gap:.3e}, trajectory vs oracle rel. error {worst_oracle:.1e}"),
    )
}

fn traces(cfg: &ExperimentConfig) -> harness::TraceResult {
    match harness::run(cfg).unwrap().outcome {
        RunOutcome::Traces(t) => t,
        _ => unreachable!("preset does not produce traces"),
    }
}

fn nan_last(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn c4_headtohead() -> Outcome {
    let cfg = preset("fig1_headtohead.json");
    let res = traces(&cfg);
    let kfac = res.get("kfac").unwrap().last();
    let amgd = res.get("amgd").unwrap().last();
    let min_dist = res.methods.iter().map(|m| m.last().subspace_dist).fold(f64::INFINITY, f64::min);
    let min_transfer = res.methods.iter().map(|m| nan_last(m.last().transfer_loss)).fold(f64::INFINITY, f64::min);
    let pass = kfac.subspace_dist == min_dist && 3.0 * kfac.subspace_dist <= amgd.subspace_dist && kfac.transfer_loss == min_transfer;
    let table: Vec<String> = res
        .methods
        .iter()
        .map(|m| format!("{} {:.4}/{:.3}", m.name, m.last().subspace_dist, m.last().transfer_loss))
        .collect();
    Outcome::new(pass, format!("final dist/transfer: {}", table.join(", ")))
}

fn c5_batchnorm() -> Outcome {
    let cfg = preset("fig3_batchnorm.json");
    let res = traces(&cfg);
    let kfac = res.get("kfac").unwrap().last();
    let bn = res.get("amgd_batchnorm").unwrap().last();
    let loss_ok = bn.train_loss <= 2.0 * kfac.train_loss;
    let dist_ok = bn.subspace_dist >= 5.0 * kfac.subspace_dist;
    Outcome::new(
        loss_ok && dist_ok,
        format!(
            "train loss bn {:.3e} vs kfac {:.3e} (within 2×: {loss_ok}); dist bn {:.4} vs kfac {:.4} (≥5×: {dist_ok})",
            bn.train_loss, kfac.train_loss, bn.subspace_dist, kfac.subspace_dist
        ),
    )
}

fn alignment(cfg: &ExperimentConfig) -> Vec<harness::AlignmentRow> {
    match harness::run(cfg).unwrap().outcome {
        RunOutcome::SingleIndex(rows) => rows,
        _ => unreachable!("preset does not produce alignment rows"),
    }
}

fn max_gap(rows: &[harness::AlignmentRow]) -> f64 {
    rows.iter()
        .flat_map(|r| [(r.sim_sgd - r.theory_sgd).abs(), (r.sim_kfac - r.theory_kfac.unwrap_or(f64::NAN)).abs()])
        .fold(0.0, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
}

fn c6_single_index() -> Outcome {
    let lam = alignment(&preset("fig4_single_index_lambda.json"));
    let eps = alignment(&preset("fig4_single_index_epsilon.json"));
    let gap_l = max_gap(&lam);
    let gap_e = max_gap(&eps);
    let monotone = eps.windows(2).all(|w| w[1].sim_sgd <= w[0].sim_sgd);
    let sgd: Vec<String> = eps.iter().map(|r| format!("{:.3}", r.sim_sgd)).collect();
    Outcome::new(
        gap_l <= 0.02 && gap_e <= 0.02 && monotone,
        format!("max |sim − theory|: λ-sweep {gap_l:.4}, ε-sweep {gap_e:.4}; sgd over ε [{}] nonincreasing: {monotone}", sgd.join(", ")),
    )
}

// oracle: closed-form Marchenko–Pastur transform at z = −λ
fn mp_closed_form(phi: f64, lambda: f64) -> f64 {
    let b = 1.0 - phi + lambda;
    (b - (b * b + 4.0 * phi * lambda).sqrt()) / (-2.0 * phi * lambda)
}

fn c7_stieltjes() -> Outcome {
    let mut worst_mp = 0.0f64;
    for phi in [0.1, 0.5, 0.9] {
        let model = SpectralModel::new(vec![(1.0, 1.0)], phi).unwrap();
        for lambda in [0.01, 0.1, 1.0, 10.0] {
            let m = rmt::stieltjes_m(&model, -lambda).unwrap().m;
            worst_mp = worst_mp.max((m - mp_closed_form(phi, lambda)).abs());
        }
    }
    let (dx, n) = (900, 5000);
    let mut rng = RngStream::new(7, 0);
    let cov = synth::build_covariance(&CovarianceRecipe::TwoPoint { eps: 0.5 }, dx, &mut rng).unwrap();
    let x = synth::sample_covariates(&cov, CovariateFamily::Gaussian, n, &mut rng);
    let s_hat = x.transpose() * &x / n as f64;
    let eig = s_hat.symmetric_eigenvalues();
    let model = SpectralModel::new(vec![(0.5, 0.5), (1.5, 0.5)], dx as f64 / n as f64).unwrap();
    let mut worst_emp = 0.0f64;
    for lambda in [0.01, 0.1, 1.0, 10.0] {
        let empirical = eig.iter().map(|e| 1.0 / (e + lambda)).sum::<f64>() / dx as f64;
        let m = rmt::stieltjes_m(&model, -lambda).unwrap().m;
        worst_emp = worst_emp.max((m - empirical).abs());
    }
    Outcome::new(
        worst_mp <= 1e-8 && worst_emp <= 0.01,
        format!("max error vs closed form {worst_mp:.1e}; vs empirical resolvent at dx=900 {worst_emp:.2e}"),
    )
}

fn rank_one_residual(dx: usize, n: usize, nh: usize, student: Activation, seed: u64) -> f64 {
    let mut rng = RngStream::new(seed, 8);
    let cov = synth::build_covariance(&CovarianceRecipe::TwoPoint { eps: 0.5 }, dx, &mut rng).unwrap();
    let tau_sq = cov.trace() / dx as f64;
    let inst = synth::make_single_index_instance(cov, Activation::LinearPlusQuadratic, 1.0, &mut rng).unwrap();
    let (x, y) = synth::sample_single_index_batch(&inst, n, &mut rng).unwrap();
    let cfg = OneStepConfig { dx, n, n_hidden: nh, eta: 1.0, lambda_g: 0.0, student };
    let init = single_index::init_one_step(&cfg, &mut rng).unwrap();
    let g1 = single_index::one_step_update(&cfg, &init, &x, &y, OneStepMethod::Sgd).unwrap();
    let beta = single_index::beta_estimator(&x, &y, OneStepMethod::Sgd, 0.0).unwrap();
    let alpha = rmt::gaussian_moments(student, tau_sq).unwrap().alpha;
    single_index::rank_one_residual(&g1, &init.g0, &init.f0, &beta, alpha, cfg.eta)
}

fn c8_rank_one() -> Outcome {
    let mut decreased = 0;
    for seed in 0..20 {
        let small = rank_one_residual(200, 600, 200, Activation::LinearPlusQuadratic, seed);
        let large = rank_one_residual(400, 1200, 400, Activation::LinearPlusQuadratic, seed);
        if large < small {
            decreased += 1;
        }
    }
    let identity: Vec<f64> = [(50, 150, 50), (200, 600, 200)]
        .iter()
        .map(|&(dx, n, nh)| rank_one_residual(dx, n, nh, Activation::Identity, 99))
        .collect();
    let id_max = identity.iter().copied().fold(0.0, f64::max);
    Outcome::new(
        decreased >= 18 && id_max <= 1e-10,
        format!("residual decreased with scale in {decreased}/20 seeds; identity-student residual {id_max:.3e} (needs ≤ 1e-10)"),
    )
}

fn c9_kronecker() -> Outcome {
    let mut rng = RngStream::new(9, 0);
    let mut worst_dir = 0.0f64;
    let mut worst_kron = 0.0f64;
    let mut probes = 0;
    let mut beaten = 0;
    let mut beaten_sqrt = 0;
    for _ in 0..100 {
        let r = 1 + (rng.uniform() * 6.0) as usize;
        let c = 1 + (rng.uniform() * 6.0) as usize;
        let eta = 0.1 + rng.uniform();
        let grad = rng.normal_matrix(r, c);
        let p = random_spd(r, &mut rng);
        let q = random_spd(c, &mut rng);
        let p_inv = p.clone().try_inverse().unwrap();
        let q_inv = q.clone().try_inverse().unwrap();
        let want = -(&p_inv * &grad * &q_inv) * eta;
        let step = kf::steepest_direction(&grad, &p, &q, eta).unwrap();
        worst_dir = worst_dir.max(max_abs_diff(&step.delta, &want));
        // vec(P⁻¹∇Q⁻¹) = (Q⁻ᵀ ⊗ P⁻¹) vec(∇), column-major
        let kron = q_inv.transpose().kronecker(&p_inv);
        let v = Vector::from_column_slice(grad.as_slice());
        let lhs = Vector::from_column_slice((&p_inv * &grad * &q_inv).as_slice());
        worst_kron = worst_kron.max((kron * v - lhs).amax());
        let dense = kf::kron_precondition_dense(&grad, &p, &q).unwrap();
        worst_kron = worst_kron.max(max_abs_diff(&dense, &(&p_inv * &grad * &q_inv)));

        let p_half = linalg::psd_sqrt(&p);
        let q_half = linalg::psd_sqrt(&q);
        let base = step.objective;
        let base_sqrt = kf::variational_objective(&grad, &step.delta, &p_half, &q_half, eta);
        for _ in 0..10 {
            let scale = 10f64.powf(-3.0 + 3.0 * rng.uniform());
            let e = rng.normal_matrix(r, c) * scale;
            let probe = &step.delta + &e;
            probes += 1;
            if kf::variational_objective(&grad, &probe, &p, &q, eta) < base - 1e-12 * base.abs().max(1.0) {
                beaten += 1;
            }
            if kf::variational_objective(&grad, &probe, &p_half, &q_half, eta) < base_sqrt - 1e-12 * base_sqrt.abs().max(1.0) {
                beaten_sqrt += 1;
            }
        }
    }
    Outcome::new(
        worst_dir <= 1e-10 && worst_kron <= 1e-10 && beaten == 0,
        format!(
            "direction error {worst_dir:.1e}, vec/Kronecker error {worst_kron:.1e}; probes beating the step under ‖PᵀMQᵀ‖: {beaten}/{probes} \
             (under ‖P^½MQ^½‖: {beaten_sqrt}/{probes})"
        ),
    )
}

fn smooth_activation(rng: &mut RngStream) -> Activation {
    let acts = [Activation::Identity, Activation::Tanh, Activation::Softplus, Activation::Square, Activation::LinearPlusQuadratic];
    acts[(rng.uniform() * acts.len() as f64) as usize % acts.len()]
}

fn rel_err(analytic: &Mat, fd: &Mat) -> f64 {
    (analytic - fd).norm() / analytic.norm().max(1e-8)
}

fn c10_gradients() -> Outcome {
    let h = 1e-5;
    let mut rng = RngStream::new(10, 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = 8 + (rng.uniform() * 24.0) as usize;
        let dx = 2 + (rng.uniform() * 10.0) as usize;
        let k = 1 + (rng.uniform() * 5.0) as usize;
        let dy = 1 + (rng.uniform() * 4.0) as usize;
        let act = smooth_activation(&mut rng);
        let x = rng.normal_matrix(n, dx);
        let y = rng.normal_matrix(n, dy);
        let w = NetWeights::new(rng.normal_matrix(dy, k) * 0.7, rng.normal_matrix(k, dx) / (dx as f64).sqrt(), act).unwrap();
        let loss = |w: &NetWeights| model::batch_loss(w, &x, &y).unwrap();
        let mut fd_g = Mat::zeros(k, dx);
        for i in 0..k {
            for j in 0..dx {
                let (mut a, mut b) = (w.clone(), w.clone());
                a.g[(i, j)] += h;
                b.g[(i, j)] -= h;
                fd_g[(i, j)] = (loss(&a) - loss(&b)) / (2.0 * h);
            }
        }
        let mut fd_f = Mat::zeros(dy, k);
        for i in 0..dy {
            for j in 0..k {
                let (mut a, mut b) = (w.clone(), w.clone());
                a.f[(i, j)] += h;
                b.f[(i, j)] -= h;
                fd_f[(i, j)] = (loss(&a) - loss(&b)) / (2.0 * h);
            }
        }
        worst = worst.max(rel_err(&model::grad_g(&w, &x, &y).unwrap(), &fd_g));
        worst = worst.max(rel_err(&model::grad_f(&w, &x, &y).unwrap(), &fd_f));

        // deeper stack through the layer-state backprop
        let widths = [dx, k + 1, k, dy];
        let weights: Vec<Mat> = widths.windows(2).map(|p| rng.normal_matrix(p[1], p[0]) / (p[0] as f64).sqrt()).collect();
        let net = kf::Mlp::new(weights, act).unwrap();
        let states = net.layer_states(&x, &y).unwrap();
        for (l, s) in states.iter().enumerate() {
            let grad = s.gradient();
            let mut fd = Mat::zeros(grad.nrows(), grad.ncols());
            for i in 0..grad.nrows() {
                for j in 0..grad.ncols() {
                    let (mut a, mut b) = (net.clone(), net.clone());
                    a.weights[l][(i, j)] += h;
                    b.weights[l][(i, j)] -= h;
                    fd[(i, j)] = (a.loss(&x, &y) - b.loss(&x, &y)) / (2.0 * h);
                }
            }
            worst = worst.max(rel_err(&grad, &fd));
        }
    }
    Outcome::new(worst <= 1e-4, format!("max relative error {worst:.2e} over 50 instances"))
}

// ---------------------------------------------------------------------------

type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria: [Criterion; 10] = [
        (1, "least-squares / EMA head identity", secs(5), c1_head_identity),
        (2, "KFAC one-step contraction", secs(60), c2_contraction),
        (3, "AMGD lower-bound envelope", secs(1), c3_lower_bound),
        (4, "head-to-head on the anisotropic instance", secs(600), c4_headtohead),
        (5, "batch whitening fixes loss, not subspace", secs(600), c5_batchnorm),
        (6, "single-index alignment vs theory", secs(1200), c6_single_index),
        (7, "Stieltjes fixed point", secs(5), c7_stieltjes),
        (8, "rank-one update residual", secs(60), c8_rank_one),
        (9, "Kronecker steepest descent", secs(5), c9_kronecker),
        (10, "gradients vs finite differences", secs(10), c10_gradients),
    ];
    let only: Option<Vec<usize>> = std::env::var("KRONFEAT_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut unexpected = Vec::new();
    for (id, name, budget, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = out.pass && in_time;
        let verdict = if pass { "PASS" } else { "FAIL" };
        let time_note = if in_time { String::new() } else { format!(", over the {}s budget", budget.as_secs()) };
        println!("criterion {id:>2} {verdict}: {name}: {} [{:.1}s{time_note}]", out.detail, took.as_secs_f64());
        let known = KNOWN_UNATTAINABLE.contains(&id);
        if pass == known {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: outcomes match expectations (known unattainable: {KNOWN_UNATTAINABLE:?})");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
