//! Gauss rules from the Golub–Welsch eigenproblem, polished by Newton steps on
//! the orthonormal three-term recurrence.
//!
//! Rules are computed in `f64` and cast to the requested scalar.

use crate::{Error, Result, Scalar};
use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a Gauss rule.
///
/// `weights` integrate against the rule's weight function; `folded` are the
/// weights divided by that weight function at the node, so that
/// `Σ folded_k f(x_k)` approximates the plain integral of `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
    pub folded: Vec<T>,
}

impl GaussRule<f64> {
    pub fn cast<T: Scalar>(&self) -> GaussRule<T> {
        let c = |v: &Vec<f64>| v.iter().map(|&x| T::from_f64(x).unwrap()).collect();
        GaussRule { nodes: c(&self.nodes), weights: c(&self.weights), folded: c(&self.folded) }
    }
}

struct Recurrence {
    diag: Vec<f64>,
    off: Vec<f64>, // off[k] couples p_k and p_{k+1}
    mu0: f64,
}

impl Recurrence {
    /// Orthonormal polynomials p_0..p_n at x, plus p_n'.
    fn eval(&self, n: usize, x: f64) -> (Vec<f64>, f64) {
        let mut p = vec![0.0; n + 1];
        let mut dp = vec![0.0; n + 1];
        p[0] = 1.0 / self.mu0.sqrt();
        for k in 0..n {
            let prev = if k > 0 { self.off[k - 1] * p[k - 1] } else { 0.0 };
            let dprev = if k > 0 { self.off[k - 1] * dp[k - 1] } else { 0.0 };
            p[k + 1] = ((x - self.diag[k]) * p[k] - prev) / self.off[k];
            dp[k + 1] = ((x - self.diag[k]) * dp[k] + p[k] - dprev) / self.off[k];
        }
        (p, dp[n])
    }

    fn nodes(&self, n: usize) -> Vec<f64> {
        let mut j = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            j[(k, k)] = self.diag[k];
            if k + 1 < n {
                j[(k, k + 1)] = self.off[k];
                j[(k + 1, k)] = self.off[k];
            }
        }
        let mut x: Vec<f64> = SymmetricEigen::new(j).eigenvalues.iter().copied().collect();
        x.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for xk in x.iter_mut() {
            for _ in 0..3 {
                let (p, dpn) = self.eval(n, *xk);
                if dpn == 0.0 || !dpn.is_finite() {
                    break;
                }
                let step = p[n] / dpn;
                *xk -= step;
                if step.abs() <= 1e-16 * (1.0 + xk.abs()) {
                    break;
                }
            }
        }
        x
    }

    fn christoffel(&self, n: usize, x: f64) -> f64 {
        let (p, _) = self.eval(n, x);
        1.0 / p[..n].iter().map(|v| v * v).sum::<f64>()
    }
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("quadrature order must be positive".into()));
    }
    Ok(())
}

/// Gauss–Hermite rule for the weight `e^{-x^2}`.
pub fn gauss_hermite(n: usize) -> Result<GaussRule<f64>> {
    check_order(n)?;
    let rec = Recurrence {
        diag: vec![0.0; n + 1],
        off: (1..=n + 1).map(|k| (k as f64 / 2.0).sqrt()).collect(),
        mu0: std::f64::consts::PI.sqrt(),
    };
    let nodes = rec.nodes(n);
    let mut weights = Vec::with_capacity(n);
    let mut folded = Vec::with_capacity(n);
    for &x in &nodes {
        // Hermite functions p_k(x) e^{-x^2/2} keep the folded weight free of overflow.
        let mut h = vec![0.0; n];
        h[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
        if n > 1 {
            h[1] = std::f64::consts::SQRT_2 * x * h[0];
        }
        for k in 1..n.saturating_sub(1) {
            h[k + 1] = (2.0 / (k + 1) as f64).sqrt() * x * h[k]
                - (k as f64 / (k + 1) as f64).sqrt() * h[k - 1];
        }
        let f = 1.0 / h.iter().map(|v| v * v).sum::<f64>();
        folded.push(f);
        weights.push(f * (-x * x).exp());
    }
    Ok(GaussRule { nodes, weights, folded })
}

/// Generalized Gauss–Laguerre rule for the weight `x^a e^{-x}` on `[0, ∞)`, `a > -1`.
pub fn gauss_laguerre(n: usize, a: f64) -> Result<GaussRule<f64>> {
    check_order(n)?;
    if !(a > -1.0) {
        return Err(Error::InvalidInput(format!("Laguerre exponent must exceed -1, got {a}")));
    }
    let rec = Recurrence {
        diag: (0..=n).map(|k| 2.0 * k as f64 + a + 1.0).collect(),
        off: (1..=n + 1).map(|k| (k as f64 * (k as f64 + a)).sqrt()).collect(),
        mu0: statrs::function::gamma::gamma(a + 1.0),
    };
    let nodes = rec.nodes(n);
    let weights: Vec<f64> = nodes.iter().map(|&x| rec.christoffel(n, x)).collect();
    let folded = nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| (w.ln() - a * x.ln() + x).exp())
        .collect();
    Ok(GaussRule { nodes, weights, folded })
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<GaussRule<f64>> {
    check_order(n)?;
    let rec = Recurrence {
        diag: vec![0.0; n + 1],
        off: (1..=n + 1).map(|k| k as f64 / ((4 * k * k - 1) as f64).sqrt()).collect(),
        mu0: 2.0,
    };
    let mut nodes = rec.nodes(n);
    // enforce exact symmetry
    for k in 0..n / 2 {
        let s = 0.5 * (nodes[n - 1 - k] - nodes[k]);
        nodes[k] = -s;
        nodes[n - 1 - k] = s;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let mut weights: Vec<f64> = nodes.iter().map(|&x| rec.christoffel(n, x)).collect();
    for k in 0..n / 2 {
        let w = 0.5 * (weights[k] + weights[n - 1 - k]);
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    Ok(GaussRule { nodes, folded: weights.clone(), weights })
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_legendre(a: f64, b: f64, panels: usize, per_panel: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(b > a) || panels == 0 {
        return Err(Error::InvalidInput("composite rule needs b > a and at least one panel".into()));
    }
    let base = gauss_legendre(per_panel)?;
    let h = (b - a) / panels as f64;
    let mut x = Vec::with_capacity(panels * per_panel);
    let mut w = Vec::with_capacity(panels * per_panel);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (t, wt) in base.nodes.iter().zip(&base.weights) {
            x.push(lo + 0.5 * h * (t + 1.0));
            w.push(0.5 * h * wt);
        }
    }
    Ok((x, w))
}
