//! BGK-type linearized collision operator and assumption checks.
//!
//! Vectors live in scaled coordinates `f̂_k = √w_k f_k`, where the weighted
//! inner product becomes the Euclidean one and `L` a symmetric matrix.

use crate::linalg::{orthonormal_columns, sym_eigen};
use crate::model_catalog::{collision_invariants, EquilibriumState, ModelSpec};
use crate::{Error, Mat, Result, Space, Vector};
use serde::{Deserialize, Serialize};

/// Collision frequency `ν_k = c_α (1 + |v_k|)` with a per-species factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuProfile {
    pub species_factor: Vec<f64>,
}

impl NuProfile {
    pub fn hard_sphere_like() -> Self {
        NuProfile { species_factor: Vec::new() }
    }
    fn factor(&self, species: usize) -> f64 {
        self.species_factor.get(species).copied().unwrap_or(1.0)
    }
}

/// `L f = ν (f - Σ_i (ν f | φ_i) φ_i)` with `(ν φ_i | φ_j) = δ_ij`, together
/// with the diagonal transport `B = v1 + u`.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    pub nu: Vector,
    /// ν-orthonormal kernel vectors (columns), scaled coordinates.
    pub phi: Mat,
    /// `ν ∘ φ_i`.
    pub nu_phi: Mat,
    /// Euclidean-orthonormal basis of the kernel.
    pub kernel: Mat,
    pub sqrt_weights: Vector,
    pub transport: Vector,
    pub u: f64,
    /// `(1 + |v_k|)` at every node, for the frequency band check.
    pub speed_weight: Vector,
}

impl LinearizedOperator {
    pub fn dim(&self) -> usize {
        self.nu.len()
    }

    pub fn kernel_dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn apply(&self, f: &Vector) -> Vector {
        let c = self.nu_phi.transpose() * f;
        self.nu.component_mul(f) - &self.nu_phi * c
    }

    pub fn dense(&self) -> Mat {
        let mut l = -(&self.nu_phi * self.nu_phi.transpose());
        for k in 0..self.dim() {
            l[(k, k)] += self.nu[k];
        }
        l
    }

    pub fn transport_matrix(&self) -> Mat {
        Mat::from_diagonal(&self.transport)
    }

    /// Same operator with `B = v1 + u`.
    pub fn with_transport(&self, space: &Space, u: f64) -> Self {
        let mut out = self.clone();
        out.transport = Vector::from_iterator(space.len(), space.velocities.iter().map(|v| v[0] + u));
        out.u = u;
        out
    }

    /// Euclidean projection onto the kernel.
    pub fn kernel_projection(&self, f: &Vector) -> Vector {
        &self.kernel * (self.kernel.transpose() * f)
    }

    /// The solution `x ⊥ ker L` of `L x = b` for `b ⊥ ker L`: `x = (I - P) ν^{-1} b`.
    pub fn pseudo_inverse_apply(&self, b: &Vector) -> Vector {
        let x = b.component_div(&self.nu);
        &x - self.kernel_projection(&x)
    }

    /// Dense pseudo-inverse through the symmetric eigendecomposition.
    pub fn dense_pseudo_inverse(&self) -> Mat {
        let (vals, vecs) = sym_eigen(&self.dense());
        let tol = 1e-10 * vals.amax();
        let mut out = Mat::zeros(self.dim(), self.dim());
        for (j, &lam) in vals.iter().enumerate() {
            if lam > tol {
                let c = vecs.column(j);
                out += c * c.transpose() / lam;
            }
        }
        out
    }

    /// Convert a nodal function to scaled coordinates.
    pub fn to_scaled(&self, f: &[f64]) -> Vector {
        Vector::from_iterator(f.len(), f.iter().zip(self.sqrt_weights.iter()).map(|(a, s)| a * s))
    }

    pub fn from_scaled(&self, f: &Vector) -> Vec<f64> {
        f.iter().zip(self.sqrt_weights.iter()).map(|(a, s)| a / s).collect()
    }
}

/// Assemble the BGK-type operator for a model on a space, with `B = v1 + u`.
pub fn build_bgk_operator(model: &ModelSpec, space: &Space, eq: &EquilibriumState, nu: &NuProfile, u: f64) -> Result<LinearizedOperator> {
    let inv = collision_invariants(model, space, eq);
    build_from_invariants(space, &inv, nu, u)
}

/// Assemble from explicit invariants (nodal values, one column each).
pub fn build_from_invariants(space: &Space, invariants: &Mat, nu: &NuProfile, u: f64) -> Result<LinearizedOperator> {
    let n = space.len();
    if invariants.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: invariants.nrows() });
    }
    if nu.species_factor.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::InvalidInput("collision frequency factors must be positive".into()));
    }
    let sqrt_weights = Vector::from_iterator(n, space.weights.iter().map(|w| w.sqrt()));
    let mut scaled = invariants.clone();
    for k in 0..n {
        for j in 0..scaled.ncols() {
            scaled[(k, j)] *= sqrt_weights[k];
        }
    }
    let speed_weight = Vector::from_iterator(n, (0..n).map(|k| 1.0 + space.speed(k)));
    let nu_v = Vector::from_iterator(n, (0..n).map(|k| nu.factor(space.species[k]) * speed_weight[k]));
    let kernel = orthonormal_columns(&scaled, 1e-10)?;
    // ν-orthonormalize: Φ = K G^{-1/2}, G = Kᵀ ν K
    let mut nk = kernel.clone();
    for k in 0..n {
        for j in 0..nk.ncols() {
            nk[(k, j)] *= nu_v[k];
        }
    }
    let g = kernel.transpose() * &nk;
    let (gv, gw) = sym_eigen(&g);
    if gv.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::RankDeficient { rank: gv.iter().filter(|&&x| x > 0.0).count(), expected: gv.len() });
    }
    let inv_sqrt = &gw * Mat::from_diagonal(&gv.map(|x| 1.0 / x.sqrt())) * gw.transpose();
    let phi = &kernel * inv_sqrt;
    let mut nu_phi = phi.clone();
    for k in 0..n {
        for j in 0..nu_phi.ncols() {
            nu_phi[(k, j)] *= nu_v[k];
        }
    }
    let transport = Vector::from_iterator(n, space.velocities.iter().map(|v| v[0] + u));
    Ok(LinearizedOperator { nu: nu_v, phi, nu_phi, kernel, sqrt_weights, transport, u, speed_weight })
}

/// Checks of symmetry, positivity, kernel, `ker B` and the coercivity constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub symmetry_residual: f64,
    pub min_eigenvalue: f64,
    pub kernel_residual: f64,
    pub kernel_dimension: usize,
    pub expected_kernel_dimension: usize,
    pub min_abs_transport: f64,
    pub transport_nonsingular: bool,
    /// Largest `γ` with `(h|Lh) >= γ (h|(1+|B|)h)` on `Im L`.
    pub gamma: f64,
    /// Smallest nonzero eigenvalue of `L`.
    pub reduced_minimum_modulus: f64,
    /// Largest `λ` with `(h|Lh) >= λ (h|ν h)` on `Im L`.
    pub nu_coercivity: f64,
    pub nu_band: (f64, f64),
    pub pass: bool,
}

/// Minimum of the generalized Rayleigh quotient `(h|Lh)/(h|D h)` over `Im L`.
fn generalized_min_on_range(vals: &Vector, vecs: &Mat, tol: f64, d: &Vector) -> f64 {
    let cols: Vec<usize> = (0..vals.len()).filter(|&j| vals[j] > tol).collect();
    if cols.is_empty() {
        return 0.0;
    }
    let z = Mat::from_fn(vecs.nrows(), cols.len(), |i, j| vecs[(i, cols[j])]);
    let mut dz = z.clone();
    for i in 0..dz.nrows() {
        for j in 0..dz.ncols() {
            dz[(i, j)] *= d[i];
        }
    }
    let bm = z.transpose() * dz;
    let chol = match bm.clone().cholesky() {
        Some(c) => c,
        None => return 0.0,
    };
    let linv = chol.l().try_inverse().unwrap();
    let a = Mat::from_diagonal(&Vector::from_iterator(cols.len(), cols.iter().map(|&j| vals[j])));
    let c = &linv * a * linv.transpose();
    sym_eigen(&c).0[0]
}

pub fn validate_assumptions(op: &LinearizedOperator) -> AssumptionReport {
    let l = op.dense();
    let sym = (&l - l.transpose()).norm() / l.norm().max(1e-300);
    let (vals, vecs) = sym_eigen(&l);
    let tol = 1e-10 * vals.amax();
    let kernel_dimension = vals.iter().filter(|&&x| x.abs() <= tol).count();
    let mut kres: f64 = 0.0;
    for j in 0..op.kernel.ncols() {
        kres = kres.max(op.apply(&op.kernel.column(j).into_owned()).norm());
    }
    let min_abs_transport = op.transport.amin();
    let scale = 1.0 + op.u.abs() + op.transport.amax();
    let transport_nonsingular = min_abs_transport > 1e-14 * scale;
    let one_plus_b = op.transport.map(|b| 1.0 + b.abs());
    let gamma = generalized_min_on_range(&vals, &vecs, tol, &one_plus_b);
    let nu_coercivity = generalized_min_on_range(&vals, &vecs, tol, &op.nu);
    let rmm = vals.iter().copied().filter(|&x| x > tol).fold(f64::INFINITY, f64::min);
    let ratios = op.nu.component_div(&op.speed_weight);
    let nu_band = (ratios.min(), ratios.max());
    let pass = sym < 1e-12
        && vals[0] >= -1e-10 * vals.amax()
        && kernel_dimension == op.kernel_dim()
        && kres <= 1e-12 * (1.0 + op.nu.amax())
        && transport_nonsingular
        && gamma > 1e-12;
    AssumptionReport {
        symmetry_residual: sym,
        min_eigenvalue: vals[0],
        kernel_residual: kres,
        kernel_dimension,
        expected_kernel_dimension: op.kernel_dim(),
        min_abs_transport,
        transport_nonsingular,
        gamma,
        reduced_minimum_modulus: rmm,
        nu_coercivity,
        nu_band,
        pass,
    }
}

/// `γ` alone (same computation as in the report).
pub fn coercivity_gamma(op: &LinearizedOperator) -> f64 {
    let (vals, vecs) = sym_eigen(&op.dense());
    let tol = 1e-10 * vals.amax();
    generalized_min_on_range(&vals, &vecs, tol, &op.transport.map(|b| 1.0 + b.abs()))
}
