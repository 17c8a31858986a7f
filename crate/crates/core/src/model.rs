//! Two-layer network `x ↦ F σ(G x)`: forward pass, batch loss, gradients and
//! the layer-wise preconditioner factors.
//!
//! Batches are stored with one sample per row, so the hidden features of a
//! batch are `H = X Gᵀ` (n×k) and predictions are `σ(H) Fᵀ` (n×dy).

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{shape, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct NetWeights {
    /// dy×k head.
    pub f: Mat,
    /// k×dx representation.
    pub g: Mat,
    pub activation: Activation,
}

impl NetWeights {
    pub fn new(f: Mat, g: Mat, activation: Activation) -> Result<Self> {
        if f.ncols() != g.nrows() {
            return Err(shape(format!(
                "head is {}x{} but representation has {} rows",
                f.nrows(),
                f.ncols(),
                g.nrows()
            )));
        }
        Ok(Self { f, g, activation })
    }

    pub fn dx(&self) -> usize {
        self.g.ncols()
    }

    pub fn k(&self) -> usize {
        self.g.nrows()
    }

    pub fn dy(&self) -> usize {
        self.f.nrows()
    }

    pub fn is_finite(&self) -> bool {
        linalg::is_finite(&self.f) && linalg::is_finite(&self.g)
    }

    fn check_x(&self, x: &Mat) -> Result<()> {
        if x.ncols() != self.dx() {
            return Err(shape(format!("inputs have {} columns, expected dx = {}", x.ncols(), self.dx())));
        }
        Ok(())
    }

    fn check_xy(&self, x: &Mat, y: &Mat) -> Result<()> {
        self.check_x(x)?;
        if y.nrows() != x.nrows() || y.ncols() != self.dy() {
            return Err(shape(format!(
                "targets are {}x{}, expected {}x{}",
                y.nrows(),
                y.ncols(),
                x.nrows(),
                self.dy()
            )));
        }
        Ok(())
    }

    /// Pre-activations `X Gᵀ`.
    pub fn hidden(&self, x: &Mat) -> Mat {
        linalg::a_bt(x, &self.g)
    }

    /// Post-activation features `σ(X Gᵀ)`.
    pub fn features(&self, x: &Mat) -> Mat {
        let h = self.hidden(x);
        if self.activation.is_identity() {
            h
        } else {
            h.map(|v| self.activation.eval(v))
        }
    }
}

pub fn forward(w: &NetWeights, x: &Mat) -> Result<Mat> {
    w.check_x(x)?;
    Ok(linalg::a_bt(&w.features(x), &w.f))
}

/// `(1/2n) Σᵢ ‖yᵢ − F σ(G xᵢ)‖²`.
pub fn batch_loss(w: &NetWeights, x: &Mat, y: &Mat) -> Result<f64> {
    w.check_xy(x, y)?;
    let r = forward(w, x)? - y;
    Ok(0.5 * r.norm_squared() / x.nrows() as f64)
}

/// Gradient of [`batch_loss`] with respect to `G`.
pub fn grad_g(w: &NetWeights, x: &Mat, y: &Mat) -> Result<Mat> {
    w.check_xy(x, y)?;
    let n = x.nrows() as f64;
    let h = w.hidden(x);
    let z = if w.activation.is_identity() { h.clone() } else { h.map(|v| w.activation.eval(v)) };
    let resid = linalg::a_bt(&z, &w.f) - y; // n×dy
    let mut back = &resid * &w.f; // n×k
    if !w.activation.is_identity() {
        back.zip_apply(&h, |b, hv| *b *= w.activation.deriv(hv));
    }
    Ok(back.transpose() * x / n)
}

/// Gradient of [`batch_loss`] with respect to `F`: `(1/n)(F Zᵀ − Yᵀ) Z`.
pub fn grad_f(w: &NetWeights, x: &Mat, y: &Mat) -> Result<Mat> {
    w.check_xy(x, y)?;
    let z = w.features(x);
    Ok(grad_f_from_features(&w.f, &z, y))
}

pub(crate) fn grad_f_from_features(f: &Mat, z: &Mat, y: &Mat) -> Mat {
    let n = z.nrows() as f64;
    let resid = linalg::a_bt(z, f) - y;
    resid.transpose() * z / n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftPrecond {
    #[default]
    Identity,
    /// `Ê[(∂f/∂h)ᵀ(∂f/∂h)]`, which is `FᵀF` for the identity activation.
    Jacobian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightPrecond {
    #[default]
    Identity,
    /// Empirical input second moment `Σ̂ = XᵀX/n`.
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecondSpec {
    pub p_g: LeftPrecond,
    pub q_g: RightPrecond,
    #[serde(default)]
    pub ridge_g: f64,
    #[serde(default)]
    pub ridge_f: f64,
}

/// The four layer-wise factors. `None` marks an identity factor, which the
/// update skips instead of solving against `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionerSet {
    pub p_g: Option<Mat>,
    pub q_g: Option<Mat>,
    pub p_f: Option<Mat>,
    pub q_f: Option<Mat>,
    pub ridge_g: f64,
    pub ridge_f: f64,
}

/// `Ê[zzᵀ]` for a batch stored row-wise.
pub fn second_moment(z: &Mat) -> Mat {
    linalg::gram(z) / z.nrows() as f64
}

/// `P_G` for the batch: `FᵀF` when σ is the identity, otherwise
/// `Ê[diag(σ′(h)) FᵀF diag(σ′(h))] = FᵀF ⊙ Ê[σ′(h)σ′(h)ᵀ]`.
pub fn jacobian_gram(w: &NetWeights, x: &Mat) -> Mat {
    let ftf = linalg::gram(&w.f);
    if w.activation.is_identity() {
        return ftf;
    }
    let s = w.hidden(x).map(|v| w.activation.deriv(v));
    let m = second_moment(&s);
    ftf.component_mul(&m)
}

/// Factors for the G-step are computed on `x` with the current weights;
/// `Q_F` uses the features `σ(X Gᵀ)` of the same batch.
pub fn compute_preconditioners(w: &NetWeights, x: &Mat, spec: &PrecondSpec) -> Result<PreconditionerSet> {
    w.check_x(x)?;
    if x.nrows() == 0 {
        return Err(shape("empty batch"));
    }
    let p_g = match spec.p_g {
        LeftPrecond::Identity => None,
        LeftPrecond::Jacobian => Some(jacobian_gram(w, x)),
    };
    let q_g = match spec.q_g {
        RightPrecond::Identity => None,
        RightPrecond::Covariance => Some(second_moment(x)),
    };
    let q_f = Some(second_moment(&w.features(x)));
    Ok(PreconditionerSet { p_g, q_g, p_f: None, q_f, ridge_g: spec.ridge_g, ridge_f: spec.ridge_f })
}
