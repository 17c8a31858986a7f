//! Kronecker-factored layer preconditioners for fully connected networks:
//! KFAC, FOOF, LocoProp and Shampoo factors, plus the matrix-norm view of a
//! preconditioned step.

use crate::activation::Activation;
use crate::error::{invalid, shape, Error, Result};
use crate::linalg::{self, Mat};

/// One layer's weights with the batch quantities needed to precondition it.
/// Batches are stored one sample per row.
#[derive(Debug, Clone)]
pub struct LayerState {
    /// `d_ℓ × d_{ℓ−1}`.
    pub w: Mat,
    /// Layer inputs, `n × d_{ℓ−1}`.
    pub z_prev: Mat,
    /// Per-sample loss gradients with respect to the pre-activations, `n × d_ℓ`.
    pub g: Mat,
}

impl LayerState {
    pub fn new(w: Mat, z_prev: Mat, g: Mat) -> Result<Self> {
        if z_prev.nrows() != g.nrows() {
            return Err(shape(format!("{} inputs but {} gradients", z_prev.nrows(), g.nrows())));
        }
        if z_prev.nrows() == 0 {
            return Err(invalid("empty batch"));
        }
        if w.shape() != (g.ncols(), z_prev.ncols()) {
            return Err(shape(format!(
                "weights are {}x{}, batch implies {}x{}",
                w.nrows(),
                w.ncols(),
                g.ncols(),
                z_prev.ncols()
            )));
        }
        Ok(Self { w, z_prev, g })
    }

    pub fn batch_size(&self) -> usize {
        self.z_prev.nrows()
    }

    /// `Ê[g zᵀ]`.
    pub fn gradient(&self) -> Mat {
        self.g.transpose() * &self.z_prev / self.batch_size() as f64
    }
}

fn second_moment(m: &Mat) -> Mat {
    linalg::gram(m) / m.nrows() as f64
}

/// `(P, Q) = (Ê[ggᵀ], Ê[z zᵀ])`.
pub fn kfac_preconds(s: &LayerState) -> (Mat, Mat) {
    (second_moment(&s.g), second_moment(&s.z_prev))
}

/// `ΔW = η ∇ (Ê[zzᵀ] + λI)⁻¹`, applied as `W₊ = W − ΔW`.
pub fn foof_update(s: &LayerState, eta: f64, ridge: f64) -> Result<Mat> {
    if !(ridge >= 0.0) {
        return Err(invalid("ridge must be nonnegative"));
    }
    let q = second_moment(&s.z_prev) + linalg::identity(s.z_prev.ncols()) * ridge;
    let d = linalg::spd_solve_right(&s.gradient(), &q)
        .map_err(|_| Error::Singular("input second moment is singular; use ridge > 0".into()))?;
    Ok(d * eta)
}

/// Square-loss LocoProp step `W₊ = W − η ∇ (I + η Ê[zzᵀ])⁻¹`.
pub fn locoprop_update(s: &LayerState, eta: f64) -> Result<Mat> {
    if !(eta > 0.0) {
        return Err(invalid("eta must be positive"));
    }
    let q = linalg::identity(s.z_prev.ncols()) + second_moment(&s.z_prev) * eta;
    Ok(&s.w - linalg::spd_solve_right(&s.gradient(), &q)? * eta)
}

/// Batch Shampoo factors without accumulation:
/// `P = Ê[GGᵀ]^{1/4}`, `Q = Ê[GᵀG]^{1/4}` for per-sample `G = g zᵀ`.
pub fn shampoo_preconds(s: &LayerState) -> (Mat, Mat) {
    let n = s.batch_size() as f64;
    // G Gᵀ = ‖z‖² g gᵀ and Gᵀ G = ‖g‖² z zᵀ
    let mut gs = s.g.clone();
    let mut zs = s.z_prev.clone();
    for i in 0..s.batch_size() {
        let zn = s.z_prev.row(i).norm();
        let gn = s.g.row(i).norm();
        gs.row_mut(i).scale_mut(zn);
        zs.row_mut(i).scale_mut(gn);
    }
    let p = linalg::gram(&gs) / n;
    let q = linalg::gram(&zs) / n;
    (linalg::psd_fourth_root(&p), linalg::psd_fourth_root(&q))
}

/// `unvec((Q ⊗ P)⁻¹ vec(∇))` by a dense solve in column-major coordinates.
pub fn kron_precondition_dense(grad: &Mat, p: &Mat, q: &Mat) -> Result<Mat> {
    let (r, c) = grad.shape();
    if p.shape() != (r, r) || q.shape() != (c, c) {
        return Err(shape("preconditioner shapes do not match the gradient"));
    }
    let k = linalg::kron(q, p);
    let v = linalg::vec_colmajor(grad);
    let sol = linalg::lu_solve(&k, &Mat::from_column_slice(v.len(), 1, v.as_slice()))?;
    Ok(linalg::unvec_colmajor(&sol.column(0).into_owned(), r, c))
}

/// `P⁻¹ ∇ Q⁻¹` for invertible `P`, `Q`.
pub fn kron_precondition(grad: &Mat, p: &Mat, q: &Mat) -> Result<Mat> {
    let (r, c) = grad.shape();
    if p.shape() != (r, r) || q.shape() != (c, c) {
        return Err(shape("preconditioner shapes do not match the gradient"));
    }
    let left = linalg::lu_solve(p, grad).map_err(|_| Error::Singular("P is singular".into()))?;
    let right = linalg::lu_solve(&q.transpose(), &left.transpose()).map_err(|_| Error::Singular("Q is singular".into()))?;
    Ok(right.transpose())
}

/// `‖M‖ = ‖Pᵀ M Qᵀ‖_F`.
pub fn kf_norm(m: &Mat, p: &Mat, q: &Mat) -> f64 {
    (p.transpose() * m * q.transpose()).norm()
}

/// Dual of [`kf_norm`]: `‖P⁻¹ ∇ Q⁻¹‖_F`.
pub fn kf_dual_norm(grad: &Mat, p: &Mat, q: &Mat) -> Result<f64> {
    Ok(kron_precondition(grad, p, q)?.norm())
}

/// Unit-[`kf_norm`] matrix attaining the dual norm,
/// `P⁻ᵀ D Q⁻ᵀ` with `D = P⁻¹∇Q⁻¹ / ‖P⁻¹∇Q⁻¹‖_F`.
pub fn kf_dual_maximizer(grad: &Mat, p: &Mat, q: &Mat) -> Result<Mat> {
    let d = kron_precondition(grad, p, q)?;
    let nd = d.norm();
    if nd == 0.0 {
        return Err(invalid("zero gradient has no maximizing direction"));
    }
    kron_precondition(&(d / nd), &p.transpose(), &q.transpose())
}

/// `⟨∇, M⟩ + ‖M‖²/(2η)` with the [`kf_norm`] of `(P, Q)`.
pub fn variational_objective(grad: &Mat, m: &Mat, p: &Mat, q: &Mat, eta: f64) -> f64 {
    grad.dot(m) + kf_norm(m, p, q).powi(2) / (2.0 * eta)
}

#[derive(Debug, Clone)]
pub struct SteepestStep {
    /// `−η P⁻¹ ∇ Q⁻¹`.
    pub delta: Mat,
    /// [`variational_objective`] at `delta` under the `(P, Q)` norm.
    pub objective: f64,
}

/// The layer-wise preconditioned step `ΔW = −η P⁻¹ ∇ Q⁻¹`.
pub fn steepest_direction(grad: &Mat, p: &Mat, q: &Mat, eta: f64) -> Result<SteepestStep> {
    if !(eta > 0.0) {
        return Err(invalid("eta must be positive"));
    }
    let delta = kron_precondition(grad, p, q)? * -eta;
    let objective = variational_objective(grad, &delta, p, q, eta);
    Ok(SteepestStep { delta, objective })
}

/// Exact minimizer of [`variational_objective`] for the `(P, Q)` norm:
/// `−η (PPᵀ)⁻¹ ∇ (QᵀQ)⁻¹`. It coincides with [`steepest_direction`] only
/// when `PPᵀ = P` and `QᵀQ = Q`; in general the preconditioned step is the
/// minimizer for the norm built from `(P^{1/2}, Q^{1/2})`.
pub fn kf_norm_minimizer(grad: &Mat, p: &Mat, q: &Mat, eta: f64) -> Result<Mat> {
    let pp = p * p.transpose();
    let qq = q.transpose() * q;
    Ok(kron_precondition(grad, &pp, &qq)? * -eta)
}

/// Gradient of [`variational_objective`] with respect to `M`:
/// `∇ + P Pᵀ M Qᵀ Q / η`.
pub fn variational_gradient(grad: &Mat, m: &Mat, p: &Mat, q: &Mat, eta: f64) -> Mat {
    grad + p * p.transpose() * m * q.transpose() * q / eta
}

/// Fully connected network `h_ℓ = W_ℓ z_{ℓ−1}`, `z_ℓ = σ(h_ℓ)` with a linear
/// output layer, trained on `(1/2n) Σ ‖y − f(x)‖²`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub weights: Vec<Mat>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(weights: Vec<Mat>, activation: Activation) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        for pair in weights.windows(2) {
            if pair[1].ncols() != pair[0].nrows() {
                return Err(shape("consecutive layer shapes do not chain"));
            }
        }
        Ok(Self { weights, activation })
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let last = self.weights.len() - 1;
        let mut z = x.clone();
        for (l, w) in self.weights.iter().enumerate() {
            let h = linalg::a_bt(&z, w);
            z = if l == last { h } else { h.map(|v| self.activation.eval(v)) };
        }
        z
    }

    pub fn loss(&self, x: &Mat, y: &Mat) -> f64 {
        0.5 * (self.forward(x) - y).norm_squared() / x.nrows() as f64
    }

    /// Forward and backward pass returning `(W_ℓ, z_{ℓ−1}, g_ℓ)` per layer,
    /// with `g_ℓ` the per-sample gradient of `½‖y − f(x)‖²`.
    pub fn layer_states(&self, x: &Mat, y: &Mat) -> Result<Vec<LayerState>> {
        if x.ncols() != self.weights[0].ncols() {
            return Err(shape("input width does not match the first layer"));
        }
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut z = x.clone();
        for (l, w) in self.weights.iter().enumerate() {
            let h = linalg::a_bt(&z, w);
            inputs.push(z);
            z = if l == last { h.clone() } else { h.map(|v| self.activation.eval(v)) };
            pre.push(h);
        }
        if y.shape() != z.shape() {
            return Err(shape("targets do not match the network output"));
        }
        let mut g = z - y;
        let mut states = vec![None; self.weights.len()];
        for l in (0..self.weights.len()).rev() {
            let next = if l > 0 {
                let mut back = &g * &self.weights[l];
                back.zip_apply(&pre[l - 1], |b, h| *b *= self.activation.deriv(h));
                Some(back)
            } else {
                None
            };
            states[l] = Some(LayerState::new(self.weights[l].clone(), inputs[l].clone(), g)?);
            if let Some(b) = next {
                g = b;
            } else {
                break;
            }
        }
        Ok(states.into_iter().map(|s| s.expect("every layer visited")).collect())
    }
}
