//! Dense linear-algebra helpers on `DMatrix<f64>`.
//!
//! Products that feed large Gram matrices go through an explicit transpose
//! and the gemm kernel; nalgebra's fused `tr_mul` is several times slower
//! at the sizes used by the experiments.

use nalgebra::{DMatrix, DVector};

use crate::error::{shape, Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `aᵀ a`.
pub fn gram(a: &Mat) -> Mat {
    let at = a.transpose();
    let mut g = &at * a;
    symmetrize_in_place(&mut g);
    g
}

/// `aᵀ b`.
pub fn at_b(a: &Mat, b: &Mat) -> Mat {
    a.transpose() * b
}

/// `a bᵀ`.
pub fn a_bt(a: &Mat, b: &Mat) -> Mat {
    a * b.transpose()
}

pub fn symmetrize_in_place(m: &mut Mat) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn trace(m: &Mat) -> f64 {
    m.diagonal().sum()
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in
/// nonincreasing order; `vecs` columns are the matching eigenvectors.
pub fn sym_eigen(m: &Mat) -> (Vector, Mat) {
    let mut s = m.clone();
    symmetrize_in_place(&mut s);
    let eig = s.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// `V f(Λ) Vᵀ` for symmetric `m`.
pub fn sym_apply(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, vecs) = sym_eigen(m);
    sym_recompose(&vals.map(f), &vecs)
}

pub fn sym_recompose(vals: &Vector, vecs: &Mat) -> Mat {
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*v);
    }
    let mut out = a_bt(&scaled, vecs);
    symmetrize_in_place(&mut out);
    out
}

/// Principal square root of a PSD matrix; eigenvalues are clamped at zero.
pub fn psd_sqrt(m: &Mat) -> Mat {
    sym_apply(m, |v| v.max(0.0).sqrt())
}

/// `m^{1/4}` for PSD `m`, clamping round-off negatives at zero.
pub fn psd_fourth_root(m: &Mat) -> Mat {
    sym_apply(m, |v| v.max(0.0).sqrt().sqrt())
}

/// Lower Cholesky factor. Blocks of 96 columns with gemm trailing updates
/// once the matrix is large enough for it to pay off.
pub fn cholesky_lower(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(shape(format!("cholesky of non-square {}x{}", n, a.ncols())));
    }
    const BLOCK: usize = 96;
    if n <= 2 * BLOCK {
        return a
            .clone()
            .cholesky()
            .map(|c| c.unpack())
            .ok_or_else(|| Error::Singular("matrix is not positive definite".into()));
    }
    let mut w = a.clone();
    let mut j0 = 0;
    while j0 < n {
        let jb = BLOCK.min(n - j0);
        let diag = w.view((j0, j0), (jb, jb)).clone_owned();
        let l11 = diag
            .cholesky()
            .map(|c| c.unpack())
            .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
        w.view_mut((j0, j0), (jb, jb)).copy_from(&l11);
        let rest = n - j0 - jb;
        if rest > 0 {
            let a21t = w.view((j0 + jb, j0), (rest, jb)).transpose();
            let x = l11
                .solve_lower_triangular(&a21t)
                .ok_or_else(|| Error::Singular("zero pivot in triangular solve".into()))?;
            let l21 = x.transpose();
            let upd = &l21 * &x;
            let mut trail = w.view_mut((j0 + jb, j0 + jb), (rest, rest));
            trail -= upd;
            w.view_mut((j0 + jb, j0), (rest, jb)).copy_from(&l21);
        }
        j0 += jb;
    }
    // zero the strict upper triangle
    for j in 0..n {
        for i in 0..j {
            w[(i, j)] = 0.0;
        }
    }
    Ok(w)
}

/// Solve `A X = B` for symmetric positive-definite `A`.
pub fn spd_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.nrows() != b.nrows() {
        return Err(shape(format!(
            "spd_solve: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let l = cholesky_lower(a)?;
    let y = l
        .solve_lower_triangular(b)
        .ok_or_else(|| Error::Singular("zero pivot".into()))?;
    l.transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Singular("zero pivot".into()))
}

/// `B A⁻¹` for symmetric positive-definite `A`.
pub fn spd_solve_right(b: &Mat, a: &Mat) -> Result<Mat> {
    Ok(spd_solve(a, &b.transpose())?.transpose())
}

/// General square solve `A X = B` via LU.
pub fn lu_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("LU solve failed".into()))
}

/// Largest singular value.
pub fn op_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let small = m.nrows().min(m.ncols());
    if small <= 64 {
        m.clone()
            .svd(false, false)
            .singular_values
            .iter()
            .fold(0.0_f64, |a, &b| a.max(b))
    } else {
        let g = if m.nrows() <= m.ncols() {
            gram(&m.transpose())
        } else {
            gram(m)
        };
        let (vals, _) = sym_eigen(&g);
        vals[0].max(0.0).sqrt()
    }
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Row-orthonormalize `m` (k×d, k ≤ d) through the thin QR factorization
/// of `mᵀ` with the sign convention `diag(R) > 0`.
///
/// Inputs whose rows are already orthonormal to 1e-13 are returned
/// unchanged, which makes the map exactly idempotent.
pub fn row_orthonormalize(m: &Mat) -> Result<Mat> {
    let (k, d) = m.shape();
    if k > d {
        return Err(shape(format!("cannot row-orthonormalize {k}x{d}: more rows than columns")));
    }
    if !is_finite(m) {
        return Err(Error::Numerical("non-finite entries".into()));
    }
    let resid = max_abs_diff(&a_bt(m, m), &identity(k));
    if resid <= 1e-13 {
        return Ok(m.clone());
    }
    let qr = m.transpose().qr();
    let r = qr.r();
    let mut q = qr.q();
    let scale = max_abs(&r).max(f64::MIN_POSITIVE);
    for j in 0..k {
        let rjj = r[(j, j)];
        if rjj.abs() <= 1e-12 * scale {
            return Err(Error::RankDeficient(format!(
                "row {j} is (numerically) dependent on the previous rows"
            )));
        }
        if rjj < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q.transpose())
}

/// Column-major vectorization.
pub fn vec_colmajor(m: &Mat) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

pub fn unvec_colmajor(v: &Vector, rows: usize, cols: usize) -> Mat {
    Mat::from_column_slice(rows, cols, v.as_slice())
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &Mat) -> Result<Mat> {
    const B: [f64; 14] = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371_920_351_148_152;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(shape("expm of non-square matrix"));
    }
    if !is_finite(a) {
        return Err(Error::Numerical("expm of non-finite matrix".into()));
    }
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9])
        + &a6 * B[7]
        + &a4 * B[5]
        + &a2 * B[3]
        + &id * B[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8])
        + &a6 * B[6]
        + &a4 * B[4]
        + &a2 * B[2]
        + &id * B[0];
    let mut r = lu_solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}
