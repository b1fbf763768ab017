//! Penalized operator `Λ = L - σB + αΠ₊B + βBΠ₀B` and its constants.

use crate::collision_operator::LinearizedOperator;
use crate::kernel_spectral::KernelBasis;
use crate::linalg::sym_eigen;
use crate::{Error, Mat, Result, Vector};
use serde::{Deserialize, Serialize};

/// `Π₊ = Σ φ_i φ_iᵀ` over the positive block, `Π₀ = Σ φ̃_r φ̃_rᵀ / α_r²`,
/// `Π̃₀ = Σ ψ_r ψ_rᵀ`.
#[derive(Debug, Clone)]
pub struct Projections {
    pub plus: Mat,
    pub zero: Mat,
    pub zero_tilde: Mat,
}

pub fn build_projections(basis: &KernelBasis) -> Projections {
    let n = basis.phi.nrows();
    let pp = basis.phi_plus();
    let plus = &pp * pp.transpose();
    let mut zero = Mat::zeros(n, n);
    for r in 0..basis.l() {
        let c = basis.aux.column(r);
        zero += c * c.transpose() / basis.alpha[r].powi(2);
    }
    let zero_tilde = &basis.psi * basis.psi.transpose();
    Projections { plus, zero, zero_tilde }
}

/// Free parameters of the constant selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyOptions {
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for PenaltyOptions {
    fn default() -> Self {
        PenaltyOptions { eps1: 0.5, eps2: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub gamma: f64,
    pub gamma1: f64,
    pub beta_min: f64,
    pub beta_hat_max: f64,
    /// The three arguments of the maximum defining `σ`.
    pub max_arguments: [f64; 3],
}

fn check_inputs(basis: &KernelBasis, gamma: f64, opts: &PenaltyOptions) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!("coercivity constant must be positive, got {gamma}")));
    }
    for e in [opts.eps1, opts.eps2] {
        if !(e > 0.0 && e < 1.0) {
            return Err(Error::InvalidInput(format!("eps1 and eps2 must lie in (0, 1), got {e}")));
        }
    }
    if basis.phi.ncols() > 0 && !(basis.beta_min > 0.0) {
        return Err(Error::Degenerate("β_min vanishes; the flow speed is degenerate".into()));
    }
    Ok(())
}

/// `ε`, `β`-numerator and the maximum arguments, independent of `σ`.
fn shape(basis: &KernelBasis, gamma: f64, opts: &PenaltyOptions) -> (f64, f64, [f64; 3]) {
    let k_minus = basis.signature.k_minus as f64;
    let epsilon = if basis.signature.k_minus == 0 { 1.0 } else { 1.0 / (2.0 * (basis.beta_hat_max - 0.5).sqrt()) };
    let num = basis.beta_min + 2.0 * basis.gamma1() * opts.eps1 * opts.eps1;
    let a1 = 1.0 + k_minus / (epsilon * epsilon);
    let mut sum = 0.0;
    for r in 0..basis.l() {
        let ba = basis.aux.column(r).component_mul(&basis.transport);
        sum += ba.norm_squared() / basis.alpha[r].powi(2);
    }
    let a2 = 2.0 / (opts.eps1 * opts.eps1) + num / (opts.eps2 * opts.eps2) * sum;
    let a3 = if basis.l() == 0 {
        0.0
    } else {
        let amax = basis.alpha.iter().copied().fold(0.0, f64::max);
        2.0 * gamma * (1.0 - opts.eps2 * opts.eps2) * amax / num
    };
    (epsilon, num, [a1, a2, a3])
}

/// Constants with `σ` from the maximum formula.
pub fn penalty_constants(basis: &KernelBasis, gamma: f64, opts: PenaltyOptions) -> Result<PenaltyConfig> {
    check_inputs(basis, gamma, &opts)?;
    let (epsilon, num, args) = shape(basis, gamma, &opts);
    let sigma = gamma / args.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(assemble(basis, gamma, opts, epsilon, num, args, sigma))
}

/// Same constants with a caller-chosen `σ` (used to probe sharpness).
pub fn penalty_constants_with_sigma(
    basis: &KernelBasis,
    gamma: f64,
    opts: PenaltyOptions,
    sigma: f64,
) -> Result<PenaltyConfig> {
    check_inputs(basis, gamma, &opts)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput("σ must be positive".into()));
    }
    let (epsilon, num, args) = shape(basis, gamma, &opts);
    Ok(assemble(basis, gamma, opts, epsilon, num, args, sigma))
}

fn assemble(basis: &KernelBasis, gamma: f64, opts: PenaltyOptions, epsilon: f64, num: f64, args: [f64; 3], sigma: f64) -> PenaltyConfig {
    let beta_min_eff = if basis.phi.ncols() == 0 { f64::INFINITY } else { basis.beta_min };
    PenaltyConfig {
        sigma,
        alpha: 2.0 * sigma,
        beta: sigma * num / (2.0 * (1.0 - opts.eps2 * opts.eps2)),
        mu: 0.5 * gamma.min(sigma * beta_min_eff),
        epsilon,
        eps1: opts.eps1,
        eps2: opts.eps2,
        gamma,
        gamma1: basis.gamma1(),
        beta_min: basis.beta_min,
        beta_hat_max: basis.beta_hat_max,
        max_arguments: args,
    }
}

#[derive(Debug, Clone)]
pub struct PenalizedOperator {
    pub lambda: Mat,
    pub lambda_adj: Mat,
    pub transport: Vector,
    pub projections: Projections,
    pub config: PenaltyConfig,
}

impl PenalizedOperator {
    pub fn dim(&self) -> usize {
        self.transport.len()
    }
}

pub fn build_penalized_operator(op: &LinearizedOperator, basis: &KernelBasis, config: &PenaltyConfig) -> PenalizedOperator {
    let projections = build_projections(basis);
    let l = op.dense();
    let b = Mat::from_diagonal(&op.transport);
    let s = config.sigma;
    let common = &l - &b * s + &b * &projections.zero * &b * config.beta;
    let lambda = &common + &projections.plus * &b * config.alpha;
    let lambda_adj = &common + &b * &projections.plus * config.alpha;
    PenalizedOperator { lambda, lambda_adj, transport: op.transport.clone(), projections, config: config.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub min_eig: f64,
    pub pass: bool,
}

/// Smallest eigenvalue of the symmetric part of `Λ` against `μ`.
pub fn coercivity_check(pen: &PenalizedOperator) -> CoercivityReport {
    let sym = (&pen.lambda + pen.lambda.transpose()) * 0.5;
    let min_eig = sym_eigen(&sym).0[0];
    let c = &pen.config;
    CoercivityReport { sigma: c.sigma, alpha: c.alpha, beta: c.beta, mu: c.mu, min_eig, pass: min_eig >= c.mu - 1e-10 }
}
