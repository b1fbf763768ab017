//! Splitting of `ker L` by the sign of the transport form `(Bφ|φ)`.
//!
//! Produces the signature `(k⁺, k⁻, l)`, a kernel basis diagonalizing the
//! transport form, the auxiliary vectors solving `L φ̃_r = B ψ_r`, and the
//! flow speeds at which the form degenerates.

use crate::collision_operator::{build_bgk_operator, LinearizedOperator, NuProfile};
use crate::linalg::{orthonormal_columns, sym_eigen};
use crate::model_catalog::{build_space, closed_form_speed, equilibrium, ModelSpec};
use crate::{Error, GridSpec, Mat, Result, Vector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub k_plus: usize,
    pub k_minus: usize,
    pub l: usize,
}

impl Signature {
    pub fn total(&self) -> usize {
        self.k_plus + self.k_minus + self.l
    }
}

/// Eigen-data of the transport form on the kernel.
#[derive(Debug, Clone)]
pub struct SignatureReport {
    pub signature: Signature,
    /// Eigenvalues of `K = (Bq_i|q_j)`, positive block descending, then the
    /// zero block, then the negative block ascending.
    pub eigenvalues: Vec<f64>,
    /// Matching eigenvectors expressed on the grid (columns).
    pub vectors: Mat,
    pub tolerance: f64,
}

fn diag_mul(d: &Vector, m: &Mat) -> Mat {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            out[(i, j)] *= d[i];
        }
    }
    out
}

/// Signature of `(Bφ|φ)` on the span of `kernel_span`. With `forced_l`, the
/// `l` eigenvalues nearest zero form the zero block regardless of the
/// tolerance.
pub fn signature_with(kernel_span: &Mat, transport: &Vector, u: f64, forced_l: Option<usize>) -> Result<SignatureReport> {
    let q = orthonormal_columns(kernel_span, 1e-10)?;
    let n = q.ncols();
    let k = q.transpose() * diag_mul(transport, &q);
    let (vals, vecs) = sym_eigen(&k);
    let norm = vals.amax();
    let tol = 1e-8 * (1.0 + u.abs()) * norm;
    let mut zero: Vec<usize> = match forced_l {
        Some(l) => {
            if l > n {
                return Err(Error::InvalidInput(format!("forced l = {l} exceeds kernel dimension {n}")));
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| vals[a].abs().partial_cmp(&vals[b].abs()).unwrap().then(a.cmp(&b)));
            idx.truncate(l);
            idx
        }
        None => (0..n).filter(|&i| vals[i].abs() <= tol).collect(),
    };
    zero.sort();
    let mut pos: Vec<usize> = (0..n).filter(|i| !zero.contains(i) && vals[*i] > 0.0).collect();
    let neg: Vec<usize> = (0..n).filter(|i| !zero.contains(i) && vals[*i] <= 0.0).collect();
    pos.reverse(); // ascending -> descending
    let order: Vec<usize> = pos.iter().chain(zero.iter()).chain(neg.iter()).copied().collect();
    let eigenvalues = order.iter().map(|&i| vals[i]).collect();
    let mut vectors = Mat::zeros(q.nrows(), n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &(&q * vecs.column(i)));
    }
    Ok(SignatureReport {
        signature: Signature { k_plus: pos.len(), k_minus: neg.len(), l: zero.len() },
        eigenvalues,
        vectors,
        tolerance: tol,
    })
}

pub fn signature(op: &LinearizedOperator) -> Result<SignatureReport> {
    signature_with(&op.kernel, &op.transport, op.u, None)
}

/// Kernel basis adapted to the transport form, in scaled coordinates.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub signature: Signature,
    pub u: f64,
    /// Diagonal of `B`.
    pub transport: Vector,
    /// `φ_1..φ_{n-l}`, positive block first (columns).
    pub phi: Mat,
    pub beta: Vec<f64>,
    /// `ψ_1..ψ_l`, rotated so that `(Bψ_r|φ̃_s) = α_r δ_rs`.
    pub psi: Mat,
    /// Auxiliary `φ̃_r` with `L φ̃_r = B ψ_r`.
    pub aux: Mat,
    /// `α_r`, descending.
    pub alpha: Vec<f64>,
    /// Eigenvalues of `(Bψ_r|Bψ_s)`, descending.
    pub gamma: Vec<f64>,
    /// Orthogonal `U` with `ψ̃ = ψ U`.
    pub rotation: Mat,
    pub psi_rot: Mat,
    pub aux_rot: Mat,
    pub beta_min: f64,
    /// `max β_i⁻/|β_i|` over the negative block (0 if empty).
    pub beta_hat_max: f64,
    /// Largest `|P_ker Bψ_r| / |Bψ_r|` met while building `φ̃`.
    pub range_residual: f64,
}

impl KernelBasis {
    pub fn k_plus(&self) -> usize {
        self.signature.k_plus
    }
    pub fn l(&self) -> usize {
        self.signature.l
    }
    pub fn gamma1(&self) -> f64 {
        self.gamma.first().copied().unwrap_or(0.0)
    }
    pub fn phi_plus(&self) -> Mat {
        self.phi.columns(0, self.k_plus()).into_owned()
    }
    pub fn phi_minus(&self) -> Mat {
        let kp = self.k_plus();
        self.phi.columns(kp, self.phi.ncols() - kp).into_owned()
    }
}

/// Options for the basis construction.
#[derive(Debug, Clone, Copy, Default)]
pub struct BasisOptions {
    /// Treat this many eigenvalues nearest zero as the zero block.
    pub forced_l: Option<usize>,
}

pub fn orthogonal_kernel_basis(op: &LinearizedOperator, opts: BasisOptions) -> Result<KernelBasis> {
    let rep = signature_with(&op.kernel, &op.transport, op.u, opts.forced_l)?;
    let sig = rep.signature;
    let n = sig.total();
    let l = sig.l;
    let kp = sig.k_plus;
    let mut phi_cols = Vec::new();
    let mut beta = Vec::new();
    let mut psi = Mat::zeros(op.dim(), l);
    let mut zc = 0;
    for c in 0..n {
        if c >= kp && c < kp + l {
            psi.set_column(zc, &rep.vectors.column(c));
            zc += 1;
        } else {
            phi_cols.push(rep.vectors.column(c).into_owned());
            beta.push(rep.eigenvalues[c]);
        }
    }
    let phi = if phi_cols.is_empty() { Mat::zeros(op.dim(), 0) } else { Mat::from_columns(&phi_cols) };
    let beta_min = beta.iter().map(|b| b.abs()).fold(f64::INFINITY, f64::min);
    let beta_min = if beta.is_empty() { 0.0 } else { beta_min };
    let b = &op.transport;
    let mut beta_hat_max: f64 = 0.0;
    for (i, bi) in beta.iter().enumerate().skip(kp) {
        let bm: f64 = (0..op.dim()).filter(|&k| b[k] < 0.0).map(|k| b[k].abs() * phi[(k, i)].powi(2)).sum();
        beta_hat_max = beta_hat_max.max(bm / bi.abs());
    }
    let aux = auxiliary_basis(op, &phi, &beta, &psi)?;
    let z = diagonalize_zero_block(&aux.psi, &aux.aux, b);
    Ok(KernelBasis {
        signature: sig,
        u: op.u,
        transport: op.transport.clone(),
        phi,
        beta,
        psi: aux.psi,
        aux: aux.aux,
        alpha: aux.alpha,
        gamma: z.gamma,
        rotation: z.rotation,
        psi_rot: z.psi_rot,
        aux_rot: z.aux_rot,
        beta_min,
        beta_hat_max,
        range_residual: aux.range_residual,
    })
}

/// Largest violation of each basis identity, absolute (all vectors are
/// unit-scale or normalized by `α`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisResiduals {
    /// `{φ, ψ}` orthonormal and inside `ker L`.
    pub orthonormal: f64,
    /// `(Bφ_i|φ_j) = β_i δ_ij`, `(Bψ_r|·) = 0` on the kernel.
    pub transport_diagonal: f64,
    /// `L φ̃_r = B ψ_r`.
    pub auxiliary_equation: f64,
    /// `(Bφ̃_r|φ_i) = 0` and `(Bψ_r|φ̃_s) = α_r δ_rs`.
    pub auxiliary_pairing: f64,
    /// `(Bφ̃_r|φ̃_s) = 0`.
    pub auxiliary_neutral: f64,
    /// `(Bψ̃_r|Bψ̃_s) = γ_r δ_rs`, `ψ̃ᵀψ̃ = I`, `γ` descending and positive.
    pub zero_block_rotation: f64,
    pub max: f64,
}

pub fn basis_residuals(op: &LinearizedOperator, kb: &KernelBasis) -> BasisResiduals {
    let b = &kb.transport;
    let z = Mat::from_columns(
        &(0..kb.phi.ncols()).map(|i| kb.phi.column(i).into_owned()).chain((0..kb.l()).map(|r| kb.psi.column(r).into_owned())).collect::<Vec<_>>(),
    );
    let m = z.ncols();
    let l_dense = op.dense();
    let mut orthonormal = (z.transpose() * &z - Mat::identity(m, m)).amax();
    if m > 0 {
        orthonormal = orthonormal.max((&l_dense * &z).amax());
    }
    let bz = diag_mul(b, &z);
    let mut expect = Mat::zeros(m, m);
    for (i, bi) in kb.beta.iter().enumerate() {
        expect[(i, i)] = *bi;
    }
    let transport_diagonal = if m > 0 { (z.transpose() * &bz - expect).amax() } else { 0.0 };
    let l = kb.l();
    let (mut auxiliary_equation, mut auxiliary_pairing, mut auxiliary_neutral, mut zero_block_rotation) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    if l > 0 {
        let bpsi = diag_mul(b, &kb.psi);
        let baux = diag_mul(b, &kb.aux);
        let scale = kb.alpha.iter().copied().fold(0.0, f64::max).max(1.0);
        auxiliary_equation = (&l_dense * &kb.aux - &bpsi).amax() / scale;
        let mut a = bpsi.transpose() * &kb.aux;
        for r in 0..l {
            a[(r, r)] -= kb.alpha[r];
        }
        auxiliary_pairing = a.amax().max(if kb.phi.ncols() > 0 { (kb.phi.transpose() * &baux).amax() } else { 0.0 }) / scale;
        auxiliary_neutral = (kb.aux.transpose() * &baux).amax() / (scale * scale);
        let bpr = diag_mul(b, &kb.psi_rot);
        let mut g = bpr.transpose() * &bpr;
        for r in 0..l {
            g[(r, r)] -= kb.gamma[r];
        }
        let mut ordered = 0.0f64;
        for r in 0..l {
            if kb.gamma[r] <= 0.0 || (r + 1 < l && kb.gamma[r + 1] > kb.gamma[r]) {
                ordered = 1.0;
            }
        }
        zero_block_rotation = g.amax().max((kb.psi_rot.transpose() * &kb.psi_rot - Mat::identity(l, l)).amax()).max(ordered);
        let rot_aux = &kb.aux * &kb.rotation - &kb.aux_rot;
        zero_block_rotation = zero_block_rotation.max(rot_aux.amax() / scale).max((&l_dense * &kb.aux_rot - diag_mul(b, &kb.psi_rot)).amax() / scale);
    }
    let max = orthonormal.max(transport_diagonal).max(auxiliary_equation).max(auxiliary_pairing).max(auxiliary_neutral).max(zero_block_rotation);
    BasisResiduals { orthonormal, transport_diagonal, auxiliary_equation, auxiliary_pairing, auxiliary_neutral, zero_block_rotation, max }
}

/// Auxiliary vectors with their `α` and the (possibly rotated) `ψ`.
#[derive(Debug, Clone)]
pub struct AuxiliaryBasis {
    pub psi: Mat,
    pub aux: Mat,
    pub alpha: Vec<f64>,
    pub range_residual: f64,
}

/// Solve `L φ̃_r = B ψ_r`, rotate so that `(Bψ_r|φ̃_s)` is diagonal, then make
/// `Bφ̃_r ⊥ span φ` and `(Bφ̃_r|φ̃_s) = 0`.
pub fn auxiliary_basis(op: &LinearizedOperator, phi: &Mat, beta: &[f64], psi: &Mat) -> Result<AuxiliaryBasis> {
    let l = psi.ncols();
    let n = op.dim();
    if l == 0 {
        return Ok(AuxiliaryBasis { psi: psi.clone(), aux: Mat::zeros(n, 0), alpha: Vec::new(), range_residual: 0.0 });
    }
    let b = &op.transport;
    let bpsi = diag_mul(b, psi);
    let mut aux0 = Mat::zeros(n, l);
    let mut range_residual: f64 = 0.0;
    for r in 0..l {
        let col = bpsi.column(r).into_owned();
        let ker = op.kernel_projection(&col);
        let rel = ker.norm() / col.norm();
        range_residual = range_residual.max(rel);
        if rel > 1e-10 {
            return Err(Error::NotInRange { residual: rel });
        }
        aux0.set_column(r, &op.pseudo_inverse_apply(&(col - ker)));
    }
    let a = bpsi.transpose() * &aux0;
    let (avals, avecs) = sym_eigen(&a);
    if avals[0] <= 0.0 {
        return Err(Error::Numerical(format!("(Bψ|φ̃) not positive definite, min eigenvalue {}", avals[0])));
    }
    // descending α
    let order: Vec<usize> = (0..l).rev().collect();
    let rot = Mat::from_fn(l, l, |i, j| avecs[(i, order[j])]);
    let alpha: Vec<f64> = order.iter().map(|&j| avals[j]).collect();
    let psi = psi * &rot;
    let mut aux = aux0 * &rot;
    // remove the Z± components of Bφ̃
    for r in 0..l {
        let bphi = b.component_mul(&aux.column(r).into_owned());
        let mut col = aux.column(r).into_owned();
        for (j, bj) in beta.iter().enumerate() {
            let c = -bphi.dot(&phi.column(j)) / bj;
            col += phi.column(j) * c;
        }
        aux.set_column(r, &col);
    }
    // triangular correction giving (Bφ̂_r|φ̂_s) = 0
    let baux = diag_mul(b, &aux);
    let g = aux.transpose() * &baux;
    let mut corrected = aux.clone();
    for r in 0..l {
        let mut col = aux.column(r).into_owned();
        for t in (r + 1)..l {
            col -= psi.column(t) * (g[(r, t)] / alpha[t]);
        }
        col -= psi.column(r) * (g[(r, r)] / (2.0 * alpha[r]));
        corrected.set_column(r, &col);
    }
    Ok(AuxiliaryBasis { psi, aux: corrected, alpha, range_residual })
}

/// Rotation of the zero block diagonalizing `(Bψ_r|Bψ_s)`.
#[derive(Debug, Clone)]
pub struct ZeroBlockDiagonal {
    pub gamma: Vec<f64>,
    pub rotation: Mat,
    pub psi_rot: Mat,
    pub aux_rot: Mat,
}

pub fn diagonalize_zero_block(psi: &Mat, aux: &Mat, transport: &Vector) -> ZeroBlockDiagonal {
    let l = psi.ncols();
    if l == 0 {
        return ZeroBlockDiagonal { gamma: Vec::new(), rotation: Mat::zeros(0, 0), psi_rot: psi.clone(), aux_rot: aux.clone() };
    }
    let bpsi = diag_mul(transport, psi);
    let (vals, vecs) = sym_eigen(&(bpsi.transpose() * &bpsi));
    let rotation = Mat::from_fn(l, l, |i, j| vecs[(i, l - 1 - j)]);
    let gamma = (0..l).map(|j| vals[l - 1 - j]).collect();
    ZeroBlockDiagonal { gamma, psi_rot: psi * &rotation, aux_rot: aux * &rotation, rotation }
}

/// Flow speeds where the transport form on the kernel degenerates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerateSpeeds {
    /// Distinct values ascending, with multiplicities.
    pub values: Vec<(f64, usize)>,
}

impl DegenerateSpeeds {
    pub fn u_plus(&self) -> f64 {
        self.values.last().map(|v| v.0).unwrap_or(0.0)
    }
    pub fn u_minus(&self) -> f64 {
        self.values.first().map(|v| v.0).unwrap_or(0.0)
    }
    pub fn multiplicity_at(&self, u: f64, tol: f64) -> usize {
        self.values.iter().filter(|v| (v.0 - u).abs() <= tol).map(|v| v.1).sum()
    }
    /// All values with repetition.
    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|&(u, m)| std::iter::repeat(u).take(m)).collect()
    }
}

/// `-eig((v1 q_i | q_j))` on an orthonormal kernel basis, clustered.
pub fn degenerate_speeds(op: &LinearizedOperator) -> Result<DegenerateSpeeds> {
    let v1 = op.transport.map(|b| b - op.u);
    let q = orthonormal_columns(&op.kernel, 1e-10)?;
    let k0 = q.transpose() * diag_mul(&v1, &q);
    let (vals, _) = sym_eigen(&k0);
    let mut us: Vec<f64> = vals.iter().map(|x| -x).collect();
    us.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = 1.0 + vals.amax();
    let tol = 1e-8 * scale;
    let mut values: Vec<(f64, usize)> = Vec::new();
    let mut group: Vec<f64> = Vec::new();
    let flush = |g: &mut Vec<f64>, out: &mut Vec<(f64, usize)>| {
        if !g.is_empty() {
            out.push((g.iter().sum::<f64>() / g.len() as f64, g.len()));
            g.clear();
        }
    };
    for u in us {
        if let Some(&last) = group.last() {
            if u - last > tol {
                flush(&mut group, &mut values);
            }
        }
        group.push(u);
    }
    flush(&mut group, &mut values);
    for v in values.iter_mut() {
        if v.0.abs() <= tol {
            v.0 = 0.0;
        }
    }
    Ok(DegenerateSpeeds { values })
}

/// Generic degenerate speeds next to the family's closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub family: String,
    pub u0: f64,
    pub u_plus: f64,
    pub u_minus: f64,
    pub closed_form_u_plus: f64,
    pub multiplicities: Vec<(f64, usize)>,
    pub deviation: f64,
}

/// Build the operator for `model` on `grid`, compute the generic speeds and
/// compare `u₊` with the closed form; a deviation above `tol` is an error.
pub fn model_speeds(model: &ModelSpec, grid: &GridSpec, tol: f64) -> Result<SpeedReport> {
    let space = build_space(model, grid)?;
    let eq = equilibrium(model, &space)?;
    let op = build_bgk_operator(model, &space, &eq, &NuProfile::hard_sphere_like(), 0.0)?;
    let ds = degenerate_speeds(&op)?;
    let closed = closed_form_speed(model)?;
    let deviation = (ds.u_plus() - closed).abs().max((ds.u_minus() + closed).abs());
    let u0 = ds
        .values
        .iter()
        .min_by(|a, b| a.0.abs().partial_cmp(&b.0.abs()).unwrap())
        .map(|v| v.0)
        .unwrap_or(0.0);
    if deviation > tol {
        return Err(Error::Numerical(format!(
            "generic speed {} differs from closed form {} by {deviation:e} (> {tol:e})",
            ds.u_plus(),
            closed
        )));
    }
    Ok(SpeedReport {
        family: model.family.name().into(),
        u0,
        u_plus: ds.u_plus(),
        u_minus: ds.u_minus(),
        closed_form_u_plus: closed,
        multiplicities: ds.values,
        deviation,
    })
}
