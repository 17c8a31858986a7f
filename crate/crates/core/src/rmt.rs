//! Proportional-limit predictions: Gaussian activation moments, the
//! Stieltjes transform of the sample covariance through the Silverstein
//! fixed point, and the one-step alignment formulas.

use std::sync::OnceLock;

use crate::activation::Activation;
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Mat};

pub const QUADRATURE_NODES: usize = 200;

/// Probabilists' Gauss–Hermite rule: `E[f(g)] ≈ Σ wᵢ f(zᵢ)` for
/// `g ~ N(0, 1)`, from the Golub–Welsch eigenproblem.
pub fn gauss_hermite() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = QUADRATURE_NODES;
        let mut j = Mat::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            j[(k - 1, k)] = b;
            j[(k, k - 1)] = b;
        }
        let (vals, vecs) = linalg::sym_eigen(&j);
        let mut pairs: Vec<(f64, f64)> = (0..n).map(|i| (vals[i], vecs[(0, i)] * vecs[(0, i)])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1 / total).collect())
    })
}

/// `E[f(τ g)]`, `g ~ N(0, 1)`.
pub fn gaussian_expectation(tau_sq: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_hermite();
    let tau = tau_sq.sqrt();
    nodes.iter().zip(weights).map(|(&z, &w)| w * f(tau * z)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationMoments {
    /// `E[σ′(z)]`.
    pub alpha: f64,
    /// Linear coefficient `E[z σ(z)]/τ²`, equal to `E[σ′(z)]` by Stein.
    pub c1: f64,
    /// `E[σ²(z)]`.
    pub c_star_sq: f64,
    /// `E[(σ(z) − c1 z)²]`.
    pub c_gt1_sq: f64,
    pub tau_sq: f64,
}

/// Moments at `z ~ N(0, τ²)` by Gauss–Hermite quadrature.
pub fn gaussian_moments(act: Activation, tau_sq: f64) -> Result<ActivationMoments> {
    if !(tau_sq > 0.0 && tau_sq.is_finite()) {
        return Err(invalid(format!("tau_sq must be positive, got {tau_sq}")));
    }
    let alpha = gaussian_expectation(tau_sq, |z| act.deriv(z));
    let c1 = gaussian_expectation(tau_sq, |z| z * act.eval(z)) / tau_sq;
    let c_star_sq = gaussian_expectation(tau_sq, |z| act.eval(z).powi(2));
    let c_gt1_sq = gaussian_expectation(tau_sq, |z| (act.eval(z) - c1 * z).powi(2));
    let m = ActivationMoments { alpha, c1, c_star_sq, c_gt1_sq, tau_sq };
    if [alpha, c1, c_star_sq, c_gt1_sq].iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite Gaussian moments for {act:?}")));
    }
    Ok(m)
}

/// Finite mixture of point masses for the population spectrum together with
/// the aspect ratio `φ = dx/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    /// `(eigenvalue, weight)`, weights summing to one.
    pub atoms: Vec<(f64, f64)>,
    pub phi: f64,
}

impl SpectralModel {
    pub fn new(atoms: Vec<(f64, f64)>, phi: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(invalid("spectral model needs at least one atom"));
        }
        if atoms.iter().any(|&(t, w)| !(t > 0.0 && t.is_finite()) || !(w > 0.0)) {
            return Err(invalid("atoms need positive eigenvalues and positive weights"));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("atom weights sum to {total}, expected 1")));
        }
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(invalid(format!("phi must be positive, got {phi}")));
        }
        Ok(Self { atoms, phi })
    }

    /// Empirical spectral law of `eigvals`, merging exact ties.
    pub fn from_eigenvalues(eigvals: &[f64], phi: f64) -> Result<Self> {
        let mut sorted = eigvals.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let w = 1.0 / sorted.len() as f64;
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        for v in sorted {
            match atoms.last_mut() {
                Some(last) if last.0 == v => last.1 += w,
                _ => atoms.push((v, w)),
            }
        }
        // weights are multiples of 1/dx; renormalize the rounding away
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        for a in atoms.iter_mut() {
            a.1 /= total;
        }
        Self::new(atoms, phi)
    }

    pub fn moment(&self, p: i32) -> f64 {
        self.atoms.iter().map(|&(t, w)| w * t.powi(p)).sum()
    }

    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(t, w)| w * f(t)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesValue {
    pub m: f64,
    /// `dm/dz`.
    pub m_prime: f64,
    /// Companion transform `ν(z)`.
    pub nu: f64,
    pub iterations: usize,
}

pub const FIXED_POINT_DAMPING: f64 = 0.5;
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITER: usize = 100_000;

/// Stieltjes transform `m(z) = ∫ dμ(x)/(x − z)` of the limiting sample
/// covariance spectrum at real `z < 0`.
///
/// Solves `−1/ν = z − φ ∫ t/(1 + tν) dH(t)` by damped iteration from
/// `ν₀ = −1/z`, then reads off `m = −(1/z) ∫ dH/(1 + tν)`, which is the
/// relation `ν = φ(m + 1/z) − 1/z` rearranged to avoid cancellation when
/// `|z|` is small. `m′` follows from implicit differentiation.
pub fn stieltjes_m(model: &SpectralModel, z: f64) -> Result<StieltjesValue> {
    if !(z < 0.0 && z.is_finite()) {
        return Err(invalid(format!("z must be negative and finite, got {z}")));
    }
    let phi = model.phi;
    let map = |nu: f64| -1.0 / (z - phi * model.integrate(|t| t / (1.0 + t * nu)));
    let mut nu = -1.0 / z;
    let mut iterations = 0;
    let mut resid = f64::INFINITY;
    while iterations < FIXED_POINT_MAX_ITER {
        iterations += 1;
        let next = (1.0 - FIXED_POINT_DAMPING) * nu + FIXED_POINT_DAMPING * map(nu);
        resid = (next - nu).abs() / next.abs().max(f64::MIN_POSITIVE);
        nu = next;
        if resid <= FIXED_POINT_TOL {
            break;
        }
    }
    if !(resid <= FIXED_POINT_TOL) || !nu.is_finite() {
        return Err(Error::NoConvergence { iterations, residual: resid });
    }
    let nu_prime = 1.0 / (1.0 / (nu * nu) - phi * model.integrate(|t| (t / (1.0 + t * nu)).powi(2)));
    let s0 = model.integrate(|t| 1.0 / (1.0 + t * nu));
    let s1 = model.integrate(|t| t / (1.0 + t * nu).powi(2));
    let m = -s0 / z;
    let m_prime = s0 / (z * z) + nu_prime * s1 / z;
    Ok(StieltjesValue { m, m_prime, nu, iterations })
}

/// Central-difference `dm/dz` with step `1e-6·|z|`, kept as a cross-check.
pub fn stieltjes_m_prime_fd(model: &SpectralModel, z: f64) -> Result<f64> {
    let h = 1e-6 * z.abs();
    let hi = stieltjes_m(model, z + h)?.m;
    let lo = stieltjes_m(model, z - h)?.m;
    Ok((hi - lo) / (2.0 * h))
}

/// Marchenko–Pastur closed form for `H = δ₁`.
pub fn marchenko_pastur_m(phi: f64, z: f64) -> f64 {
    let b = 1.0 - phi - z;
    (b - (b * b - 4.0 * phi * z).sqrt()) / (2.0 * phi * z)
}

/// Ridge used in place of `λ_G = 0`, where the resolvent is finite for
/// `φ < 1` but the fixed point is degenerate.
pub const ZERO_RIDGE_SURROGATE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiFactors {
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
}

/// With `m = m(−λ)` and `m′ = dm/dz(−λ)`: `Ψ₁ = 1 − λm`,
/// `Ψ₂ = 1 − 2λm + λ²m′`, `Ψ₃ = m − λm′`. These are the normalized traces of
/// `Σ̂R`, `(Σ̂R)²` and `Σ̂R²` for the resolvent `R = (Σ̂ + λI)⁻¹`.
pub fn psi_factors(model: &SpectralModel, lambda: f64) -> Result<PsiFactors> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let lam = if lambda == 0.0 {
        if model.phi >= 1.0 {
            return Err(invalid("lambda = 0 needs phi < 1: the sample covariance is singular"));
        }
        ZERO_RIDGE_SURROGATE
    } else {
        lambda
    };
    let s = stieltjes_m(model, -lam)?;
    Ok(PsiFactors {
        psi1: 1.0 - lam * s.m,
        psi2: 1.0 - 2.0 * lam * s.m + lam * lam * s.m_prime,
        psi3: s.m - lam * s.m_prime,
    })
}

/// Cosine between `β★` and `Xᵀy/n`:
/// `(c1 trΣ/dx) / √((c★² + σ²) trΣ/n + c1² trΣ²/dx)`.
pub fn predict_corr_sgd(moments: &ActivationMoments, model: &SpectralModel, n: usize, dx: usize, noise_sd: f64) -> f64 {
    if moments.c1 == 0.0 {
        return 0.0;
    }
    let tr = dx as f64 * model.moment(1);
    let tr2 = dx as f64 * model.moment(2);
    let c1 = moments.c1;
    let num = c1 * tr / dx as f64;
    let den = ((moments.c_star_sq + noise_sd * noise_sd) * tr / n as f64 + c1 * c1 * tr2 / dx as f64).sqrt();
    num / den
}

/// Cosine between `β★` and `(Σ̂ + λI)⁻¹Xᵀy/n`:
/// `c1 Ψ₁ / √(c1² Ψ₂ + φ (c_{>1}² + σ²) Ψ₃)`.
pub fn predict_corr_kfac(moments: &ActivationMoments, model: &SpectralModel, lambda: f64, noise_sd: f64) -> Result<f64> {
    if moments.c1 == 0.0 {
        return Ok(0.0);
    }
    let psi = psi_factors(model, lambda)?;
    let c1 = moments.c1;
    let radicand = c1 * c1 * psi.psi2 + model.phi * (moments.c_gt1_sq + noise_sd * noise_sd) * psi.psi3;
    if radicand < -1e-12 {
        return Err(Error::Numerical(format!("negative radicand {radicand}")));
    }
    Ok(c1 * psi.psi1 / radicand.max(0.0).sqrt())
}
