//! Synthetic covariance models and data samplers for the linear
//! representation and single-index problems.

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{invalid, shape, Result};
use crate::linalg::{self, Mat, Vector};
use crate::rng::RngStream;

/// Floor applied to eigenvalues of the low-anisotropy recipe, whose raw
/// symmetrization can be indefinite.
pub const LOW_ANISO_EIG_FLOOR: f64 = 1e-3;

/// Scale of the skew generator for per-task heads, `exp(0.005 (B − Bᵀ)) F₀`.
pub const HEAD_ROTATION_SCALE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceRecipe {
    Identity,
    /// Half the spectrum at `1 + eps`, half at `1 − eps`.
    TwoPoint { eps: f64 },
    /// Symmetrized `5 I + N` with `N` i.i.d. standard normal.
    LowAniso,
    /// `O diag(logspace(0, decades, dim)) Oᵀ` with `O` Haar-distributed.
    HighAniso { decades: f64 },
    Explicit { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone)]
pub struct CovarianceModel {
    pub dim: usize,
    pub matrix: Mat,
    pub recipe: CovarianceRecipe,
    /// Nonincreasing.
    pub eigvals: Vector,
    pub eigvecs: Mat,
    /// Symmetric square root, used by the samplers.
    pub sqrt: Mat,
    /// Number of eigenvalues raised to [`LOW_ANISO_EIG_FLOOR`].
    pub floored: usize,
    diagonal: Option<Vector>,
}

impl CovarianceModel {
    fn from_eigen(recipe: CovarianceRecipe, eigvals: Vector, eigvecs: Mat, floored: usize) -> Self {
        let dim = eigvals.len();
        let matrix = linalg::sym_recompose(&eigvals, &eigvecs);
        let sqrt = linalg::sym_recompose(&eigvals.map(f64::sqrt), &eigvecs);
        Self { dim, matrix, recipe, eigvals, eigvecs, sqrt, floored, diagonal: None }
    }

    fn from_diagonal(recipe: CovarianceRecipe, diag: Vector) -> Self {
        let dim = diag.len();
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| diag[b].total_cmp(&diag[a]));
        let eigvals = Vector::from_iterator(dim, order.iter().map(|&i| diag[i]));
        let mut eigvecs = Mat::zeros(dim, dim);
        for (col, &i) in order.iter().enumerate() {
            eigvecs[(i, col)] = 1.0;
        }
        Self {
            dim,
            matrix: Mat::from_diagonal(&diag),
            recipe,
            eigvals,
            eigvecs,
            sqrt: Mat::from_diagonal(&diag.map(f64::sqrt)),
            floored: 0,
            diagonal: Some(diag),
        }
    }

    pub fn condition_number(&self) -> f64 {
        self.eigvals[0] / self.eigvals[self.dim - 1]
    }

    pub fn trace(&self) -> f64 {
        self.eigvals.sum()
    }

    pub fn trace_sq(&self) -> f64 {
        self.eigvals.iter().map(|v| v * v).sum()
    }

    /// Diagonal of the matrix when the model is diagonal.
    pub fn diagonal(&self) -> Option<&Vector> {
        self.diagonal.as_ref()
    }

    /// Map rows of isotropic draws `R` (n×dim) to `R Σ^{1/2}`.
    pub fn color(&self, mut r: Mat) -> Mat {
        match &self.diagonal {
            Some(d) => {
                for (j, v) in d.iter().enumerate() {
                    r.column_mut(j).scale_mut(v.sqrt());
                }
                r
            }
            None => &r * &self.sqrt,
        }
    }
}

pub fn build_covariance(recipe: &CovarianceRecipe, dim: usize, rng: &mut RngStream) -> Result<CovarianceModel> {
    if dim < 2 {
        return Err(invalid(format!("covariance dimension must be at least 2, got {dim}")));
    }
    match recipe {
        CovarianceRecipe::Identity => Ok(CovarianceModel::from_diagonal(recipe.clone(), Vector::from_element(dim, 1.0))),
        CovarianceRecipe::TwoPoint { eps } => {
            if !dim.is_multiple_of(2) {
                return Err(invalid(format!("two_point covariance needs an even dimension, got {dim}")));
            }
            if !(0.0..1.0).contains(eps) {
                return Err(invalid(format!("two_point eps must lie in [0, 1), got {eps}")));
            }
            let half = dim / 2;
            let diag = Vector::from_fn(dim, |i, _| if i < half { 1.0 + eps } else { 1.0 - eps });
            Ok(CovarianceModel::from_diagonal(recipe.clone(), diag))
        }
        CovarianceRecipe::LowAniso => {
            let noise = rng.normal_matrix(dim, dim);
            let e = linalg::identity(dim) * 5.0 + noise;
            let s = (&e + e.transpose()) * 0.5;
            let (mut vals, vecs) = linalg::sym_eigen(&s);
            let mut floored = 0;
            for v in vals.iter_mut() {
                if *v < LOW_ANISO_EIG_FLOOR {
                    *v = LOW_ANISO_EIG_FLOOR;
                    floored += 1;
                }
            }
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
            let vals_sorted = Vector::from_iterator(dim, order.iter().map(|&i| vals[i]));
            let mut vecs_sorted = Mat::zeros(dim, dim);
            for (dst, &src) in order.iter().enumerate() {
                vecs_sorted.set_column(dst, &vecs.column(src));
            }
            Ok(CovarianceModel::from_eigen(recipe.clone(), vals_sorted, vecs_sorted, floored))
        }
        CovarianceRecipe::HighAniso { decades } => {
            if !decades.is_finite() || *decades < 0.0 {
                return Err(invalid(format!("high_aniso decades must be a nonnegative number, got {decades}")));
            }
            let o = haar_orthogonal(dim, rng)?;
            // descending so eigvals come out nonincreasing
            let vals = Vector::from_fn(dim, |i, _| {
                10f64.powf(decades * (dim - 1 - i) as f64 / (dim - 1) as f64)
            });
            Ok(CovarianceModel::from_eigen(recipe.clone(), vals, o, 0))
        }
        CovarianceRecipe::Explicit { matrix } => {
            if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                return Err(shape(format!("explicit covariance must be {dim}x{dim}")));
            }
            let m = Mat::from_fn(dim, dim, |i, j| matrix[i][j]);
            let scale = linalg::max_abs(&m).max(f64::MIN_POSITIVE);
            if linalg::max_abs_diff(&m, &m.transpose()) > 1e-12 * scale {
                return Err(invalid("explicit covariance is not symmetric"));
            }
            let (vals, vecs) = linalg::sym_eigen(&m);
            if vals[dim - 1] <= 0.0 {
                return Err(invalid("explicit covariance is not positive definite"));
            }
            Ok(CovarianceModel::from_eigen(recipe.clone(), vals, vecs, 0))
        }
    }
}

/// Haar-distributed orthogonal matrix via QR of a Gaussian matrix with
/// `diag(R) > 0`.
pub fn haar_orthogonal(dim: usize, rng: &mut RngStream) -> Result<Mat> {
    let g = rng.normal_matrix(dim, dim);
    // rows of the result are orthonormal; transpose keeps the same law
    Ok(linalg::row_orthonormalize(&g)?.transpose())
}

/// Uniform draw from the row-orthonormal k×d matrices.
pub fn stiefel_uniform(k: usize, d: usize, rng: &mut RngStream) -> Result<Mat> {
    let g = rng.normal_matrix(d, k);
    linalg::row_orthonormalize(&g.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateFamily {
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct LinRepInstance {
    pub dx: usize,
    pub dy: usize,
    pub k: usize,
    /// k×dx, row-orthonormal.
    pub g_star: Mat,
    pub f_star_train: Mat,
    pub f_star_test: Mat,
    pub cov_train: CovarianceModel,
    pub cov_test: CovarianceModel,
    pub noise_train: f64,
    pub noise_test: f64,
    pub family: CovariateFamily,
}

impl LinRepInstance {
    pub fn head(&self, task: Task) -> &Mat {
        match task {
            Task::Train => &self.f_star_train,
            Task::Test => &self.f_star_test,
        }
    }

    pub fn cov(&self, task: Task) -> &CovarianceModel {
        match task {
            Task::Train => &self.cov_train,
            Task::Test => &self.cov_test,
        }
    }

    pub fn noise(&self, task: Task) -> f64 {
        match task {
            Task::Train => self.noise_train,
            Task::Test => self.noise_test,
        }
    }
}

/// A batch of inputs (rows of `x`) with targets (rows of `y`).
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Mat,
    pub y: Mat,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Per-task head `exp(s (B − Bᵀ)) F₀` with `B` i.i.d. standard normal.
pub fn rotated_head(f0: &Mat, rng: &mut RngStream) -> Result<Mat> {
    let dy = f0.nrows();
    let b = rng.normal_matrix(dy, dy);
    let rot = linalg::expm(&((&b - b.transpose()) * HEAD_ROTATION_SCALE))?;
    Ok(rot * f0)
}

#[allow(clippy::too_many_arguments)]
pub fn make_linrep_instance(
    dx: usize,
    dy: usize,
    k: usize,
    cov_recipes: (&CovarianceRecipe, &CovarianceRecipe),
    noise_levels: (f64, f64),
    family: CovariateFamily,
    rng: &mut RngStream,
) -> Result<LinRepInstance> {
    if k == 0 {
        return Err(invalid("representation dimension k must be positive"));
    }
    if k > dy {
        return Err(invalid(format!(
            "k = {k} exceeds dy = {dy}: recovering the representation is underdetermined"
        )));
    }
    if k > dx {
        return Err(invalid(format!("k = {k} exceeds dx = {dx}")));
    }
    if noise_levels.0 < 0.0 || noise_levels.1 < 0.0 {
        return Err(invalid("noise levels must be nonnegative"));
    }
    let f0 = rng.normal_matrix(dy, k);
    let f_star_train = rotated_head(&f0, rng)?;
    let f_star_test = rotated_head(&f0, rng)?;
    let g_star = stiefel_uniform(k, dx, rng)?;
    let cov_train = build_covariance(cov_recipes.0, dx, rng)?;
    let cov_test = build_covariance(cov_recipes.1, dx, rng)?;
    Ok(LinRepInstance {
        dx,
        dy,
        k,
        g_star,
        f_star_train,
        f_star_test,
        cov_train,
        cov_test,
        noise_train: noise_levels.0,
        noise_test: noise_levels.1,
        family,
    })
}

pub fn sample_covariates(cov: &CovarianceModel, family: CovariateFamily, n: usize, rng: &mut RngStream) -> Mat {
    let raw = match family {
        CovariateFamily::Gaussian => rng.normal_matrix(n, cov.dim),
        CovariateFamily::Rademacher => rng.rademacher_matrix(n, cov.dim),
    };
    cov.color(raw)
}

pub fn sample_linrep_batch(inst: &LinRepInstance, task: Task, n: usize, rng: &mut RngStream) -> Result<Batch> {
    if n == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let x = sample_covariates(inst.cov(task), inst.family, n, rng);
    let w = inst.head(task) * &inst.g_star; // dy×dx
    let mut y = linalg::a_bt(&x, &w);
    let sd = inst.noise(task);
    if sd > 0.0 {
        let e = rng.normal_matrix(n, inst.dy);
        y += e * sd;
    }
    Ok(Batch { x, y })
}

#[derive(Debug, Clone)]
pub struct SingleIndexInstance {
    pub dx: usize,
    pub beta_star: Vector,
    pub cov: CovarianceModel,
    pub teacher: Activation,
    pub noise_sd: f64,
}

/// Draws `β★ ~ N(0, dx⁻¹ I)`.
pub fn make_single_index_instance(
    cov: CovarianceModel,
    teacher: Activation,
    noise_sd: f64,
    rng: &mut RngStream,
) -> Result<SingleIndexInstance> {
    if noise_sd < 0.0 {
        return Err(invalid("noise_sd must be nonnegative"));
    }
    let dx = cov.dim;
    let sd = 1.0 / (dx as f64).sqrt();
    let beta_star = Vector::from_fn(dx, |_, _| sd * rng.normal());
    Ok(SingleIndexInstance { dx, beta_star, cov, teacher, noise_sd })
}

/// Returns `(X, y)` with Gaussian covariates.
pub fn sample_single_index_batch(inst: &SingleIndexInstance, n: usize, rng: &mut RngStream) -> Result<(Mat, Vector)> {
    if n == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let x = sample_covariates(&inst.cov, CovariateFamily::Gaussian, n, rng);
    let proj = &x * &inst.beta_star;
    let mut y = proj.map(|z| inst.teacher.eval(z));
    if inst.noise_sd > 0.0 {
        for v in y.iter_mut() {
            *v += inst.noise_sd * rng.normal();
        }
    }
    Ok((x, y))
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Train => "train",
            Task::Test => "test",
        })
    }
}
