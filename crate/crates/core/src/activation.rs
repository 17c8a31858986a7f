use serde::{Deserialize, Serialize};

/// Scalar activation with an analytic derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Relu,
    Tanh,
    Softplus,
    /// `z²`
    Square,
    /// `z + (z² − 1)/√2`, the default single-index teacher.
    LinearPlusQuadratic,
}

impl Activation {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Square => z * z,
            Activation::LinearPlusQuadratic => z + (z * z - 1.0) * std::f64::consts::FRAC_1_SQRT_2,
        }
    }

    pub fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
            Activation::Square => 2.0 * z,
            Activation::LinearPlusQuadratic => 1.0 + std::f64::consts::SQRT_2 * z,
        }
    }

    pub fn is_identity(self) -> bool {
        matches!(self, Activation::Identity)
    }

    /// Continuously differentiable everywhere (finite differences apply).
    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }
}
