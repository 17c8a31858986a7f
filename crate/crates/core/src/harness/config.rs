//! JSON experiment configuration. Every struct rejects unknown keys.

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::linrep::{AdamParams, LinRepMethod, MethodKind};
use crate::synth::{CovarianceRecipe, CovariateFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Headtohead,
    LrSweep,
    Batchnorm,
    SingleIndexLambda,
    SingleIndexEpsilon,
    LowerBound,
    Multitask,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Headtohead,
        ExperimentKind::LrSweep,
        ExperimentKind::Batchnorm,
        ExperimentKind::SingleIndexLambda,
        ExperimentKind::SingleIndexEpsilon,
        ExperimentKind::LowerBound,
        ExperimentKind::Multitask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Headtohead => "headtohead",
            ExperimentKind::LrSweep => "lr_sweep",
            ExperimentKind::Batchnorm => "batchnorm",
            ExperimentKind::SingleIndexLambda => "single_index_lambda",
            ExperimentKind::SingleIndexEpsilon => "single_index_epsilon",
            ExperimentKind::LowerBound => "lower_bound",
            ExperimentKind::Multitask => "multitask",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn uses_traces(self) -> bool {
        matches!(self, ExperimentKind::Headtohead | ExperimentKind::Batchnorm | ExperimentKind::Multitask)
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Linear-representation instance and run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub dx: usize,
    pub dy: usize,
    pub k: usize,
    pub cov_train: CovarianceRecipe,
    pub cov_test: CovarianceRecipe,
    pub noise_train: f64,
    pub noise_test: f64,
    pub family: CovariateFamily,
    pub batch_size: usize,
    pub n_test: usize,
    #[serde(default = "one")]
    pub eval_every: usize,
    /// Monte-Carlo transfer estimate with this many samples instead of the
    /// exact population risk.
    #[serde(default)]
    pub transfer_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method: MethodKind,
    /// η_G. Ignored by `lr_sweep`, which takes rates from the grid.
    #[serde(default)]
    pub lr: Option<f64>,
    /// Defaults to 1 for the least-squares-head methods and to `lr` otherwise.
    #[serde(default)]
    pub eta_f: Option<f64>,
    #[serde(default)]
    pub lambda_g: f64,
    #[serde(default)]
    pub adam: Option<AdamParams>,
    #[serde(default)]
    pub ngd_ridge: Option<f64>,
}

impl MethodConfig {
    pub fn build(&self, lr: f64) -> Result<LinRepMethod> {
        let mut m = LinRepMethod::new(self.method, lr);
        if let Some(e) = self.eta_f {
            m.eta_f = e;
        }
        m.lambda_g = self.lambda_g;
        if let Some(a) = self.adam {
            m.adam = a;
        }
        if let Some(r) = self.ngd_ridge {
            m.ngd_ridge = r;
        }
        m.validate()?;
        Ok(m)
    }

    pub fn resolve(&self) -> Result<LinRepMethod> {
        let lr = self.lr.ok_or_else(|| cfg_err(format!("method {} needs an lr", self.method)))?;
        self.build(lr)
    }
}

/// `10^{log10_min}, 10^{log10_min + step}, …, 10^{log10_max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrGrid {
    pub log10_min: f64,
    pub log10_max: f64,
    pub step: f64,
}

impl LrGrid {
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.log10_max - self.log10_min) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| 10f64.powf(self.log10_min + i as f64 * self.step)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleIndexConfig {
    pub dx: usize,
    pub n: usize,
    pub n_hidden: usize,
    #[serde(default = "unit")]
    pub eta: f64,
    /// Two-point anisotropy levels `ε`.
    pub epsilons: Vec<f64>,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_teacher")]
    pub teacher: Activation,
    /// Defaults to the teacher.
    #[serde(default)]
    pub student: Option<Activation>,
    #[serde(default = "unit")]
    pub noise_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundConfig {
    pub lambdas: Vec<f64>,
    pub eps0: f64,
    pub horizon: usize,
    /// Defaults to the admissible grid for each λ.
    #[serde(default)]
    pub etas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub instance: Option<InstanceConfig>,
    #[serde(default)]
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub lr_grid: Option<LrGrid>,
    #[serde(default)]
    pub single_index: Option<SingleIndexConfig>,
    #[serde(default)]
    pub lower_bound: Option<LowerBoundConfig>,
    /// Number of training tasks for `multitask`.
    #[serde(default)]
    pub tasks: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_trials() -> usize {
    10
}
fn default_iterations() -> usize {
    1000
}
fn default_teacher() -> Activation {
    Activation::LinearPlusQuadratic
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn instance(&self) -> Result<&InstanceConfig> {
        self.instance.as_ref().ok_or_else(|| cfg_err(format!("{} needs an instance section", self.experiment)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(cfg_err("trials must be at least 1"));
        }
        let kind = self.experiment;
        if kind.uses_traces() || kind == ExperimentKind::LrSweep {
            let inst = self.instance()?;
            if inst.dx == 0 || inst.dy == 0 || inst.k == 0 {
                return Err(cfg_err("dx, dy and k must be positive"));
            }
            if inst.batch_size == 0 || inst.n_test < inst.k {
                return Err(cfg_err("batch_size must be positive and n_test at least k"));
            }
            if inst.eval_every == 0 {
                return Err(cfg_err("eval_every must be at least 1"));
            }
            if self.methods.is_empty() {
                return Err(cfg_err(format!("{kind} needs at least one method")));
            }
            for m in &self.methods {
                if kind == ExperimentKind::LrSweep {
                    m.build(1.0)?;
                } else {
                    m.resolve()?;
                }
            }
        }
        match kind {
            ExperimentKind::LrSweep => {
                let g = self.lr_grid.as_ref().ok_or_else(|| cfg_err("lr_sweep needs lr_grid"))?;
                if !(g.step > 0.0) || !(g.log10_max >= g.log10_min) || !g.log10_min.is_finite() || !g.log10_max.is_finite() {
                    return Err(cfg_err("lr_grid needs step > 0 and log10_max >= log10_min"));
                }
                if g.points().len() > 10_000 {
                    return Err(cfg_err("lr_grid has too many points"));
                }
            }
            ExperimentKind::Batchnorm => {
                if !self.methods.iter().any(|m| m.method == MethodKind::AmgdBatchnorm) {
                    return Err(cfg_err("batchnorm needs an amgd_batchnorm method"));
                }
            }
            ExperimentKind::Multitask => {
                let t = self.tasks.ok_or_else(|| cfg_err("multitask needs tasks"))?;
                if t == 0 {
                    return Err(cfg_err("tasks must be at least 1"));
                }
                if let Some(m) = self.methods.iter().find(|m| !matches!(m.method, MethodKind::Kfac | MethodKind::Sgd)) {
                    return Err(cfg_err(format!("multitask supports kfac and sgd, not {}", m.method)));
                }
            }
            ExperimentKind::SingleIndexLambda | ExperimentKind::SingleIndexEpsilon => {
                let s = self.single_index.as_ref().ok_or_else(|| cfg_err(format!("{kind} needs single_index")))?;
                if s.dx < 2 || s.dx % 2 != 0 || s.n == 0 || s.n_hidden == 0 {
                    return Err(cfg_err("single_index needs an even dx >= 2 and positive n, n_hidden"));
                }
                if s.epsilons.is_empty() || s.lambdas.is_empty() {
                    return Err(cfg_err("single_index needs nonempty epsilons and lambdas"));
                }
                if kind == ExperimentKind::SingleIndexLambda && s.epsilons.len() != 1 {
                    return Err(cfg_err("single_index_lambda sweeps lambdas at exactly one epsilon"));
                }
                if kind == ExperimentKind::SingleIndexEpsilon && s.lambdas.len() != 1 {
                    return Err(cfg_err("single_index_epsilon sweeps epsilons at exactly one lambda"));
                }
                if s.epsilons.iter().any(|e| !(0.0..1.0).contains(e)) {
                    return Err(cfg_err("epsilons must lie in [0, 1)"));
                }
                if s.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                    return Err(cfg_err("lambdas must be finite and nonnegative"));
                }
                if !(s.eta > 0.0 && s.eta.is_finite()) || !(s.noise_sd >= 0.0 && s.noise_sd.is_finite()) {
                    return Err(cfg_err("eta must be positive and noise_sd nonnegative"));
                }
            }
            ExperimentKind::LowerBound => {
                let l = self.lower_bound.as_ref().ok_or_else(|| cfg_err("lower_bound needs lower_bound"))?;
                if l.lambdas.is_empty() || l.lambdas.iter().any(|v| !(*v > 0.0 && *v <= 0.5)) {
                    return Err(cfg_err("lower_bound lambdas must lie in (0, 1/2]"));
                }
                if !(l.eps0 > 0.0 && l.eps0 < 1.0) {
                    return Err(cfg_err("eps0 must lie in (0, 1)"));
                }
                if let Some(etas) = &l.etas {
                    if etas.is_empty() || etas.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
                        return Err(cfg_err("etas must be finite and nonnegative"));
                    }
                }
            }
            ExperimentKind::Headtohead => {}
        }
        Ok(())
    }
}
