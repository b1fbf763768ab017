//! Dense linear-algebra helpers.

use crate::{Error, Mat, Result, Vector};
use nalgebra::{Complex, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eigen(a: &Mat) -> (Vector, Mat) {
    let sym = (a + a.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let n = e.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| e.eigenvalues[i].partial_cmp(&e.eigenvalues[j]).unwrap());
    let vals = Vector::from_iterator(n, idx.iter().map(|&i| e.eigenvalues[i]));
    let mut vecs = Mat::zeros(a.nrows(), n);
    for (c, &i) in idx.iter().enumerate() {
        let mut col = e.eigenvectors.column(i).into_owned();
        // deterministic sign: largest-magnitude entry positive
        let (imax, _) = col.iter().enumerate().fold((0, 0.0), |acc, (k, v)| if v.abs() > acc.1 + 1e-12 { (k, v.abs()) } else { acc });
        if col[imax] < 0.0 {
            col = -col;
        }
        vecs.set_column(c, &col);
    }
    (vals, vecs)
}

/// Orthonormal basis of the column span; fails if the numerical rank falls
/// short of the column count (singular values below `rtol * σ_max`).
pub fn orthonormal_columns(a: &Mat, rtol: f64) -> Result<Mat> {
    let k = a.ncols();
    if k == 0 {
        return Ok(Mat::zeros(a.nrows(), 0));
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > rtol * smax).count();
    if rank < k {
        return Err(Error::RankDeficient { rank, expected: k });
    }
    // order columns by singular value for determinism
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].partial_cmp(&svd.singular_values[i]).unwrap());
    let mut q = Mat::zeros(a.nrows(), k);
    for (c, &i) in idx.iter().take(k).enumerate() {
        q.set_column(c, &u.column(i));
    }
    Ok(q)
}

/// Numerical rank with relative tolerance.
pub fn rank(a: &Mat, rtol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let s = a.clone().svd(false, false).singular_values;
    let smax = s.max();
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rtol * smax).count()
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &Mat, b: &Vector, rtol: f64) -> Result<Vector> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(b, rtol * smax.max(f64::MIN_POSITIVE)).map_err(|e| Error::Numerical(e.to_string()))
}

/// 2-norm condition number.
pub fn condition_number(a: &Mat) -> f64 {
    let s = a.clone().svd(false, false).singular_values;
    if s.is_empty() {
        return 1.0;
    }
    s.max() / s.min()
}

/// Matrix sign function by scaled Newton iteration.
pub fn matrix_sign(m: &Mat) -> Result<Mat> {
    let n = m.nrows();
    let mut x = m.clone();
    for it in 0..100 {
        let lu = x.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().ok_or_else(|| Error::Numerical("pencil has an eigenvalue on the imaginary axis".into()))?;
        let mu = if it < 20 && det.is_finite() && det != 0.0 { det.abs().powf(-1.0 / n as f64) } else { 1.0 };
        let mu = if mu.is_finite() && mu > 0.0 { mu } else { 1.0 };
        let next = (&x * mu + inv / mu) * 0.5;
        let diff = (&next - &x).norm() / next.norm().max(1.0);
        x = next;
        if diff < 1e-14 {
            return Ok(x);
        }
        if it > 30 && diff < 1e-12 {
            return Ok(x);
        }
    }
    Err(Error::Numerical("matrix sign iteration did not converge".into()))
}

/// Invariant subspace of `m` belonging to eigenvalues with positive real
/// part: orthonormal `q` and the restriction `a` with `m q = q a`.
#[derive(Debug, Clone)]
pub struct StableSubspace {
    pub q: Mat,
    pub a: Mat,
    pub residual: f64,
}

pub fn stable_subspace(m: &Mat) -> Result<StableSubspace> {
    stable_subspace_above(m, 0.0)
}

/// Invariant subspace for eigenvalues with real part above `tau`.
pub fn stable_subspace_above(m: &Mat, tau: f64) -> Result<StableSubspace> {
    let n = m.nrows();
    if n == 0 {
        return Ok(StableSubspace { q: Mat::zeros(0, 0), a: Mat::zeros(0, 0), residual: 0.0 });
    }
    let s = matrix_sign(&(m - Mat::identity(n, n) * tau))?;
    let p = (Mat::identity(n, n) + &s) * 0.5;
    let k = p.trace().round() as isize;
    if k < 0 || k as usize > n {
        return Err(Error::Numerical("invalid stable-subspace dimension".into()));
    }
    let k = k as usize;
    // pivoted QR picks the range; projecting again removes what leaked out of it
    let mut q = p.clone().col_piv_qr().q().columns(0, k).into_owned();
    for _ in 0..2 {
        q = (&p * &q).qr().q();
    }
    let a = q.transpose() * m * &q;
    let residual = (m * &q - &q * &a).norm() / m.norm().max(1.0);
    Ok(StableSubspace { q, a, residual })
}

/// Eigenvalues of a general real matrix.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex<f64>>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    // nalgebra's unbalanced Schur iteration can stall on transport pencils
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let ev = fm.eigenvalues().map_err(|e| Error::Numerical(format!("eigenvalue iteration failed: {e:?}")))?;
    let mut v: Vec<Complex<f64>> = ev.iter().map(|z| Complex::new(z.re, z.im)).collect();
    v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    Ok(v)
}

/// `∫_0^∞ e^{-aᵀx} c e^{-a x} dx` for a stable `a` (spectrum in Re > 0),
/// by interval doubling started from a Gauss–Legendre rule.
pub fn lyapunov_integral(a: &Mat, c: &Mat) -> Result<Mat> {
    let k = a.nrows();
    if k == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let t0 = 1.0 / a.norm().max(1e-300);
    let rule = crate::quadrature::gauss_legendre(20)?;
    let mut x = Mat::zeros(k, k);
    for (s, w) in rule.nodes.iter().zip(&rule.weights) {
        let t = 0.5 * t0 * (s + 1.0);
        let e = (a * (-t)).exp();
        x += e.transpose() * c * &e * (0.5 * t0 * w);
    }
    let mut e = (a * (-t0)).exp();
    for _ in 0..200 {
        let add = e.transpose() * &x * &e;
        x += &add;
        e = &e * &e;
        if e.norm() < 1e-17 && add.norm() <= 1e-16 * x.norm() {
            return Ok((&x + x.transpose()) * 0.5);
        }
    }
    Err(Error::Numerical("Lyapunov doubling did not converge; subspace not stable".into()))
}
