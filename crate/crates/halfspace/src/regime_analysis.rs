//! Behaviour in the flow speed `u`: signature sweeps, measured decay rates,
//! and decay near a degenerate speed with and without extra conditions.

use crate::collision_operator::{build_bgk_operator, LinearizedOperator, NuProfile};
use crate::halfspace_solver::{solve_with_directions, BoundaryKind, ModelProblem, Profile, SolverOptions, SourceTerm};
use crate::kernel_spectral::{degenerate_speeds, orthogonal_kernel_basis, signature_with, BasisOptions, Signature};
use crate::linalg::{eigenvalues, lstsq, matrix_sign, stable_subspace_above};
use crate::model_catalog::{build_space, equilibrium, ModelSpec};
use crate::penalization::{build_penalized_operator, coercivity_check, penalty_constants};
use crate::{Error, GridSpec, Mat, Result, Space, Vector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------- signature sweep

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignatureRow {
    pub u: f64,
    pub k_plus: usize,
    pub k_minus: usize,
    pub l: usize,
    /// Inserted at a degenerate speed rather than sampled.
    pub degenerate: bool,
}

impl SignatureRow {
    pub fn signature(&self) -> Signature {
        Signature { k_plus: self.k_plus, k_minus: self.k_minus, l: self.l }
    }
}

fn operator_at(model: &ModelSpec, space: &Space, u: f64) -> Result<LinearizedOperator> {
    let eq = equilibrium(model, space)?;
    build_bgk_operator(model, space, &eq, &NuProfile::hard_sphere_like(), u)
}

/// Signature at `samples` uniform speeds in `[lo, hi]` plus every degenerate
/// speed of the grid inside the range, sorted by `u`.
pub fn sweep_signature(model: &ModelSpec, grid: &GridSpec, lo: f64, hi: f64, samples: usize) -> Result<Vec<SignatureRow>> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || samples < 2 {
        return Err(Error::InvalidInput(format!("bad sweep range [{lo}, {hi}] with {samples} samples")));
    }
    let space = build_space(model, grid)?;
    let op = operator_at(model, &space, 0.0)?;
    let speeds = degenerate_speeds(&op)?;
    let scale = 1.0 + speeds.values.iter().map(|v| v.0.abs()).fold(0.0, f64::max);
    let v1 = op.transport.clone();
    let mut points: Vec<(f64, Option<usize>)> =
        (0..samples).map(|j| (lo + (hi - lo) * j as f64 / (samples - 1) as f64, None)).collect();
    // sampled points that hit a degenerate speed to rounding are replaced by it
    points.retain(|(u, _)| speeds.values.iter().all(|v| (u - v.0).abs() > 1e-9 * scale));
    for &(u0, m) in &speeds.values {
        if u0 >= lo && u0 <= hi {
            points.push((u0, Some(m)));
        }
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    points
        .par_iter()
        .map(|&(u, forced)| {
            let rep = signature_with(&op.kernel, &v1.map(|b| b + u), u, forced)?;
            let s = rep.signature;
            Ok(SignatureRow { u, k_plus: s.k_plus, k_minus: s.k_minus, l: s.l, degenerate: forced.is_some() })
        })
        .collect()
}

/// One maximal run of equal signatures: an open interval or a single point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub u_lo: f64,
    pub u_hi: f64,
    pub point: bool,
    pub signature: Signature,
}

/// Collapse sweep rows into the regimes of the signature table.
pub fn signature_regimes(rows: &[SignatureRow]) -> Vec<Regime> {
    let mut out: Vec<Regime> = Vec::new();
    for r in rows {
        if !r.degenerate {
            if let Some(last) = out.last_mut() {
                if !last.point && last.signature == r.signature() {
                    last.u_hi = r.u;
                    continue;
                }
            }
        }
        out.push(Regime { u_lo: r.u, u_hi: r.u, point: r.degenerate, signature: r.signature() });
    }
    out
}

// ---------------------------------------------------------------- decay measurement

/// Least-squares slope of `-ln‖f‖` over the points with
/// `‖f‖/‖f(0)‖ ∈ [1e-9, 1e-3]`.
pub fn fit_tail_rate(xs: &[f64], norms: &[f64]) -> Result<f64> {
    if xs.len() != norms.len() || xs.is_empty() {
        return Err(Error::InvalidInput("sample and norm counts differ".into()));
    }
    let n0 = norms[0];
    if !(n0 > 0.0) || norms.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput("solution is numerically zero".into()));
    }
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(norms)
        .filter(|(_, v)| {
            let r = **v / n0;
            (1e-9..=1e-3).contains(&r)
        })
        .map(|(x, v)| (*x, v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Numerical(format!("tail window holds {} points; extend the sample range", pts.len())));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// Smallest real part among the modes of `e^{-a x} c` that carry weight,
/// found by spectral projections at thresholds between distinct real parts.
pub fn excited_min_rate(a: &Mat, c: &Vector) -> Result<f64> {
    let k = a.nrows();
    if k == 0 || c.norm() == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mut re: Vec<f64> = eigenvalues(a)?.iter().map(|z| z.re).collect();
    re.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let tol = 1e-8 * (1.0 + re.iter().map(|v| v.abs()).fold(0.0, f64::max));
    let mut distinct: Vec<f64> = Vec::new();
    for v in re {
        if distinct.last().is_none_or(|d| v - d > tol) {
            distinct.push(v);
        }
    }
    for w in distinct.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let s = matrix_sign(&(a - Mat::identity(k, k) * t))?;
        let below = (Mat::identity(k, k) - s) * c * 0.5;
        if below.norm() > 1e-10 * c.norm() {
            return Ok(w[0]);
        }
    }
    Ok(*distinct.last().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    /// Tail-fit rate.
    pub fitted: f64,
    /// Slowest excited mode rate.
    pub excited: f64,
    pub x_max: f64,
}

/// Decay rate of a decaying profile (no constant or slope part).
pub fn measure_decay(profile: &Profile) -> Result<DecayEstimate> {
    if profile.constant.amax() > 0.0 || profile.slope.amax() > 0.0 {
        return Err(Error::InvalidInput("profile does not decay to zero".into()));
    }
    let mut excited = excited_min_rate(&profile.a, &profile.c)?;
    for (r, w) in &profile.terms {
        if w.norm() > 0.0 {
            excited = excited.min(*r);
        }
    }
    if !excited.is_finite() {
        return Err(Error::InvalidInput("solution is numerically zero".into()));
    }
    let x_max = 40.0 / excited;
    let count = 400;
    let dx = x_max / (count - 1) as f64;
    let vals = profile.eval_uniform(dx, count);
    let xs: Vec<f64> = (0..count).map(|j| j as f64 * dx).collect();
    let norms: Vec<f64> = vals.iter().map(|v| v.norm()).collect();
    let fitted = fit_tail_rate(&xs, &norms)?;
    Ok(DecayEstimate { fitted, excited, x_max })
}

// ---------------------------------------------------------------- degenerate neighbourhood

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegenerateTarget {
    Plus,
    Minus,
    Zero,
}

/// Grid whose axis-1 nodes are symmetric about `v1 = -u₀`, where `u₀` is
/// the degenerate speed of that same grid (found by fixed-point iteration).
pub fn centered_degenerate_space(model: &ModelSpec, grid: &GridSpec, target: DegenerateTarget) -> Result<(Space, f64)> {
    let pick = |g: &GridSpec| -> Result<(Space, f64)> {
        let space = build_space(model, g)?;
        let ds = degenerate_speeds(&operator_at(model, &space, 0.0)?)?;
        let u = match target {
            DegenerateTarget::Plus => ds.u_plus(),
            DegenerateTarget::Minus => ds.u_minus(),
            DegenerateTarget::Zero => 0.0,
        };
        Ok((space, u))
    };
    if target == DegenerateTarget::Zero {
        return pick(&grid.clone().with_center(0.0));
    }
    let mut u = pick(grid)?.1;
    for _ in 0..50 {
        let (space, next) = pick(&grid.clone().with_center(u))?;
        if (next - u).abs() <= 1e-14 * (1.0 + u.abs()) {
            return Ok((space, next));
        }
        u = next;
    }
    Err(Error::Numerical("centered degenerate speed did not converge".into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyOptions {
    pub target: DegenerateTarget,
    /// Window half-width; defaults to half the distance to the nearest other
    /// degenerate speed, capped at `0.2 |u₊|`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples_per_side: usize,
    /// Impose `k₀⁺ + l` conditions on both sides of `u₀`.
    #[serde(default)]
    pub extra_conditions: bool,
}

fn default_samples() -> usize {
    9
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions { target: DegenerateTarget::Plus, delta: None, samples_per_side: 9, extra_conditions: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSample {
    pub u: f64,
    pub signature: Signature,
    /// Conditions imposed without / with the extra conditions.
    pub conditions_off: usize,
    pub conditions_on: usize,
    pub free_parameters_off: usize,
    pub free_parameters_on: usize,
    pub sigma_off: f64,
    pub sigma_on: f64,
    pub excited_off: f64,
    pub excited_on: f64,
    /// Slowest decaying mode of `B⁻¹L` lies below `0.1 σ*`.
    pub slow_mode: bool,
    /// Minimum eigenvalue of the penalized operator built with the frozen basis.
    pub frozen_min_eig: f64,
    pub frozen_coercive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub u0: f64,
    pub delta: f64,
    pub degenerate_values: Vec<(f64, usize)>,
    pub k0_plus: usize,
    pub l0: usize,
    /// Damping rate of the frozen construction at `u₀`.
    pub sigma_star: f64,
    pub extra_conditions: bool,
    pub samples: Vec<RegimeSample>,
    /// `σ_u` strictly decreasing as `u ↑ u₀` (left side, no extra conditions).
    pub off_decreasing: bool,
    /// Last left sample over first left sample, no extra conditions.
    pub off_final_ratio: f64,
    /// Min `σ_u` over the window over the smaller edge value, with extra conditions.
    pub on_min_over_edges: f64,
    pub on_min: f64,
    /// `σ_u` with the chosen flag.
    pub sigma_u: Vec<f64>,
    /// Fitted exponent `p` in `σ_u ∝ |u - u₀|^p` on the slow side, no extra conditions.
    pub slow_exponent: Option<f64>,
    /// The verdict for the chosen flag.
    pub uniform: bool,
}

fn generic_boundary(op: &LinearizedOperator) -> Vector {
    Vector::from_fn(op.dim(), |k, _| {
        let x = k as f64;
        op.sqrt_weights[k] * (1.0 + 0.5 * (1.3 * x + 0.2).sin() + 0.25 * (0.7 * x).cos())
    })
}

struct FlagOn {
    sigma: f64,
    excited: f64,
    conditions: usize,
    free: usize,
}

/// Decaying solution restricted to the `n₊ - k₀⁺ - l₀` fastest modes of
/// `B⁻¹L`, with data `f_b0` corrected within the wall directions.
fn solve_frozen(p: &ModelProblem, fb0: &Vector, dim_target: usize, conditions: usize) -> Result<FlagOn> {
    let op = &p.ctx.op;
    let n = op.dim();
    let m = transport_pencil(op);
    let pos = positive_rates(&m)?;
    if pos.len() < dim_target {
        return Err(Error::Numerical(format!("only {} decaying modes, {dim_target} needed", pos.len())));
    }
    let excess = pos.len() - dim_target;
    let tau = if excess == 0 { 0.5 * pos[0] } else { 0.5 * (pos[excess - 1] + pos[excess]) };
    if excess > 0 && pos[excess] - pos[excess - 1] <= 1e-8 * pos[excess] {
        return Err(Error::Numerical("slow and retained modes share a real part".into()));
    }
    let sub = stable_subspace_above(&m, tau)?;
    if sub.q.ncols() != dim_target {
        return Err(Error::Numerical(format!("retained {} modes, expected {dim_target}", sub.q.ncols())));
    }
    let bop = &p.ctx.boundary;
    let w = p.wall_directions()?;
    let np = bop.plus_count();
    let rq = bop.matrix() * &sub.q;
    let mut sys = Mat::zeros(np, dim_target + w.ncols());
    sys.columns_mut(0, dim_target).copy_from(&rq);
    for j in 0..w.ncols() {
        let col = bop.restrict(&w.column(j).into_owned());
        sys.set_column(dim_target + j, &(-col));
    }
    let sol = lstsq(&sys, &bop.restrict(fb0), 1e-12)?;
    let c = sol.rows(0, dim_target).into_owned();
    let profile = Profile {
        q: sub.q.clone(),
        a: sub.a.clone(),
        c,
        terms: Vec::new(),
        constant: Vector::zeros(n),
        slope: Vector::zeros(n),
    };
    let est = measure_decay(&profile)?;
    Ok(FlagOn { sigma: est.fitted, excited: est.excited, conditions, free: w.ncols().saturating_sub(conditions) })
}

/// Decay rates near a degenerate speed, with and without the extra
/// conditions, on a grid centered at that speed.
pub fn uniform_decay_study(model: &ModelSpec, grid: &GridSpec, opts: &StudyOptions) -> Result<RegimeReport> {
    let (space, u0) = centered_degenerate_space(model, grid, opts.target)?;
    let op0 = operator_at(model, &space, u0)?;
    let speeds = degenerate_speeds(&op0)?;
    let scale = 1.0 + speeds.values.iter().map(|v| v.0.abs()).fold(0.0, f64::max);
    let tol = 1e-8 * scale;
    let mult = speeds.multiplicity_at(u0, tol);
    let nearest_other = speeds.values.iter().filter(|v| (v.0 - u0).abs() > tol).map(|v| (v.0 - u0).abs()).fold(f64::INFINITY, f64::min);
    let delta = match opts.delta {
        Some(d) => d,
        None => (0.5 * nearest_other).min(0.2 * speeds.u_plus().abs()),
    };
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("window half-width must be positive, got {delta}")));
    }
    if delta >= nearest_other {
        return Err(Error::Excluded(format!("window [{}, {}] reaches another degenerate speed", u0 - delta, u0 + delta)));
    }
    let kb0 = orthogonal_kernel_basis(&op0, BasisOptions { forced_l: Some(mult) })?;
    let k0_plus = kb0.k_plus();
    let l0 = kb0.l();
    let gamma0 = crate::collision_operator::coercivity_gamma(&op0);
    let cfg0 = penalty_constants(&kb0, gamma0, Default::default())?;
    let sigma_star = cfg0.sigma;

    let ns = opts.samples_per_side.max(1);
    let mut us: Vec<f64> = (0..ns).map(|j| u0 - delta * (1.0 - j as f64 / ns as f64)).collect();
    us.extend((1..=ns).map(|j| u0 + delta * j as f64 / ns as f64));
    let solver = SolverOptions::default();
    let fb0 = generic_boundary(&op0);

    let samples: Vec<RegimeSample> = us
        .par_iter()
        .map(|&u| -> Result<RegimeSample> {
            let p = ModelProblem::on_space(model, space.clone(), u, BoundaryKind::Absorb, &solver)?;
            let sig = p.ctx.signature();
            let off = solve_with_directions(&p.ctx, &fb0, &SourceTerm::zero(), &p.wall_directions()?)?;
            let est = measure_decay(&off.profile)?;
            let n_plus = p.ctx.boundary.plus_count();
            let on = solve_frozen(&p, &fb0, n_plus - k0_plus - l0, k0_plus + l0)?;
            let pen = build_penalized_operator(&p.ctx.op, &kb0, &cfg0);
            let frozen = coercivity_check(&pen);
            let m_rates = free_mode_rates(&p.ctx.op)?;
            Ok(RegimeSample {
                u,
                signature: sig,
                conditions_off: p.ctx.conditions(),
                conditions_on: on.conditions,
                free_parameters_off: p.free_parameters(&off),
                free_parameters_on: on.free,
                sigma_off: est.fitted,
                sigma_on: on.sigma,
                excited_off: est.excited,
                excited_on: on.excited,
                slow_mode: m_rates.first().is_some_and(|r| *r < 0.1 * sigma_star),
                frozen_min_eig: frozen.min_eig,
                frozen_coercive: frozen.pass,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let left: Vec<&RegimeSample> = samples.iter().filter(|s| s.u < u0).collect();
    let right: Vec<&RegimeSample> = samples.iter().filter(|s| s.u > u0).collect();
    // the slow side is the one whose decay degrades toward u₀
    let slow_side: Vec<&RegimeSample> =
        if opts.target == DegenerateTarget::Minus { right.iter().rev().copied().collect() } else { left.clone() };
    let off_decreasing = slow_side.windows(2).all(|w| w[1].sigma_off < w[0].sigma_off);
    let off_final_ratio = slow_side.last().map(|s| s.sigma_off).unwrap_or(f64::NAN) / slow_side.first().map(|s| s.sigma_off).unwrap_or(f64::NAN);
    let on_min = samples.iter().map(|s| s.sigma_on).fold(f64::INFINITY, f64::min);
    let edges = left.first().map(|s| s.sigma_on).unwrap_or(f64::INFINITY).min(right.last().map(|s| s.sigma_on).unwrap_or(f64::INFINITY));
    let on_min_over_edges = on_min / edges;
    let slow_exponent = {
        let pts: Vec<(f64, f64)> = slow_side.iter().filter(|s| s.sigma_off > 0.0).map(|s| ((s.u - u0).abs().ln(), s.sigma_off.ln())).collect();
        if pts.len() >= 2 {
            let m = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            Some(sxy / sxx)
        } else {
            None
        }
    };
    let sigma_u: Vec<f64> = samples.iter().map(|s| if opts.extra_conditions { s.sigma_on } else { s.sigma_off }).collect();
    let uniform = if opts.extra_conditions { on_min > 0.0 && on_min_over_edges >= 0.5 } else { sigma_u.iter().cloned().fold(f64::INFINITY, f64::min) >= 0.5 * edges };
    Ok(RegimeReport {
        u0,
        delta,
        degenerate_values: speeds.values.clone(),
        k0_plus,
        l0,
        sigma_star,
        extra_conditions: opts.extra_conditions,
        samples,
        off_decreasing,
        off_final_ratio,
        on_min_over_edges,
        on_min,
        sigma_u,
        slow_exponent,
        uniform,
    })
}

/// Real parts of the decaying modes of `B⁻¹L` (kernel modes excluded), ascending.
pub fn free_mode_rates(op: &LinearizedOperator) -> Result<Vec<f64>> {
    positive_rates(&transport_pencil(op))
}

fn transport_pencil(op: &LinearizedOperator) -> Mat {
    let l = op.dense();
    Mat::from_fn(op.dim(), op.dim(), |i, j| l[(i, j)] / op.transport[i])
}

fn positive_rates(m: &Mat) -> Result<Vec<f64>> {
    let mut pos: Vec<f64> = eigenvalues(m)?.iter().map(|z| z.re).filter(|r| *r > 1e-6).collect();
    pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(pos)
}
