//! Kinetic model families: equilibria, collision invariants, closed-form
//! moments and degenerate speeds, internal-energy statistics and wall data.

pub mod special;

use crate::velocity_space::{build_layout_grid, ComponentLayout, EnergyLayout, VelocityLayout};
use crate::{Error, GridSpec, Mat, Result, Space};
use serde::{Deserialize, Serialize};
pub use special::Statistics;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Monatomic,
    MonatomicMixture,
    Quantum,
    PolyatomicDiscrete,
    PolyatomicContinuous,
    PolyatomicMixture,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Monatomic => "monatomic",
            Family::MonatomicMixture => "monatomic-mixture",
            Family::Quantum => "quantum",
            Family::PolyatomicDiscrete => "polyatomic-discrete",
            Family::PolyatomicContinuous => "polyatomic-continuous",
            Family::PolyatomicMixture => "polyatomic-mixture",
        }
    }
}

/// Internal energy carried by one species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Internal {
    None,
    Levels { energies: Vec<f64>, weights: Vec<f64> },
    /// Continuous energy with weight `I^{dof/2 - 1}`.
    Continuous { dof: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub mass: f64,
    pub density: f64,
    pub internal: Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumSpec {
    pub statistics: Statistics,
    /// Bosons are restricted to `|p| >= cutoff * sqrt(2T)`.
    pub cutoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub dimension: usize,
    pub temperature: f64,
    pub species: Vec<Species>,
    pub quantum: Option<QuantumSpec>,
}

fn simple(mass: f64, density: f64) -> Species {
    Species { mass, density, internal: Internal::None }
}

impl ModelSpec {
    pub fn monatomic(dimension: usize) -> Self {
        ModelSpec { family: Family::Monatomic, dimension, temperature: 1.0, species: vec![simple(1.0, 1.0)], quantum: None }
    }

    pub fn mixture(dimension: usize, masses: &[f64], densities: &[f64]) -> Self {
        let species = masses.iter().zip(densities).map(|(&m, &n)| simple(m, n)).collect();
        ModelSpec { family: Family::MonatomicMixture, dimension, temperature: 1.0, species, quantum: None }
    }

    pub fn fermion(dimension: usize) -> Self {
        ModelSpec {
            family: Family::Quantum,
            dimension,
            temperature: 1.0,
            species: vec![simple(1.0, 1.0)],
            quantum: Some(QuantumSpec { statistics: Statistics::Fermion, cutoff: 0.0 }),
        }
    }

    pub fn boson(dimension: usize, cutoff: f64) -> Self {
        ModelSpec {
            family: Family::Quantum,
            dimension,
            temperature: 1.0,
            species: vec![simple(1.0, 1.0)],
            quantum: Some(QuantumSpec { statistics: Statistics::Boson, cutoff }),
        }
    }

    pub fn polyatomic_discrete(dimension: usize, energies: &[f64], weights: &[f64]) -> Self {
        let internal = Internal::Levels { energies: energies.to_vec(), weights: weights.to_vec() };
        ModelSpec {
            family: Family::PolyatomicDiscrete,
            dimension,
            temperature: 1.0,
            species: vec![Species { mass: 1.0, density: 1.0, internal }],
            quantum: None,
        }
    }

    pub fn polyatomic_continuous(dimension: usize, dof: f64) -> Self {
        ModelSpec {
            family: Family::PolyatomicContinuous,
            dimension,
            temperature: 1.0,
            species: vec![Species { mass: 1.0, density: 1.0, internal: Internal::Continuous { dof } }],
            quantum: None,
        }
    }

    pub fn polyatomic_mixture(dimension: usize, species: Vec<Species>) -> Self {
        ModelSpec { family: Family::PolyatomicMixture, dimension, temperature: 1.0, species, quantum: None }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    /// Number density `n = Σ n_α`.
    pub fn number_density(&self) -> f64 {
        self.species.iter().map(|s| s.density).sum()
    }

    /// Mass density `ρ = Σ m_α n_α`.
    pub fn mass_density(&self) -> f64 {
        self.species.iter().map(|s| s.mass * s.density).sum()
    }

    /// Dimension of the collision kernel.
    pub fn kernel_dimension(&self) -> usize {
        self.dimension + self.species.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(1..=3).contains(&self.dimension) {
            return bad(format!("dimension must be 1, 2 or 3, got {}", self.dimension));
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive".into());
        }
        if self.species.is_empty() {
            return bad("at least one species required".into());
        }
        for s in &self.species {
            if !(s.mass > 0.0) || !(s.density > 0.0) {
                return bad("masses and densities must be positive".into());
            }
            match &s.internal {
                Internal::None => {}
                Internal::Levels { energies, weights } => {
                    if energies.is_empty() || energies.len() != weights.len() {
                        return bad("energy levels and weights must be nonempty and of equal length".into());
                    }
                    if weights.iter().any(|w| !(*w > 0.0)) || energies.iter().any(|e| !e.is_finite()) {
                        return bad("level weights must be positive and energies finite".into());
                    }
                }
                Internal::Continuous { dof } => {
                    if !(*dof >= 0.0) {
                        return bad("internal degrees of freedom must be nonnegative".into());
                    }
                }
            }
        }
        let single = self.species.len() == 1;
        let ok = match self.family {
            Family::Monatomic => single && matches!(self.species[0].internal, Internal::None),
            Family::MonatomicMixture => self.species.iter().all(|s| matches!(s.internal, Internal::None)),
            Family::Quantum => single && self.quantum.is_some(),
            Family::PolyatomicDiscrete => single && matches!(self.species[0].internal, Internal::Levels { .. }),
            Family::PolyatomicContinuous => single && matches!(self.species[0].internal, Internal::Continuous { .. }),
            Family::PolyatomicMixture => true,
        };
        if !ok {
            return bad(format!("species data do not match the {} family", self.family.name()));
        }
        if self.family != Family::Quantum && self.quantum.is_some() {
            return bad("quantum data given for a classical family".into());
        }
        if let Some(q) = &self.quantum {
            if q.statistics == Statistics::Boson && !(q.cutoff > 0.0) {
                return bad("bosons require a positive cutoff lambda".into());
            }
        }
        Ok(())
    }

    fn is_quantum(&self) -> bool {
        self.quantum.is_some()
    }
}

/// Radius beyond which quantum grids are truncated, in units of `sqrt(2T)`.
const QUANTUM_RADIUS: f64 = 7.1;

/// Per-species grid layouts for the model. Cartesian scale is
/// `sqrt(2T/m)` unless the grid fixes an extent.
pub fn layouts(model: &ModelSpec, spec: &GridSpec) -> Result<Vec<ComponentLayout<f64>>> {
    model.validate()?;
    if spec.dimension != model.dimension {
        return Err(Error::InvalidInput(format!(
            "grid dimension {} does not match model dimension {}",
            spec.dimension, model.dimension
        )));
    }
    let t = model.temperature;
    let mut out = Vec::new();
    for s in &model.species {
        let velocity = if let Some(q) = &model.quantum {
            let r_max = spec.extent.unwrap_or(QUANTUM_RADIUS * (2.0 * t).sqrt());
            match q.statistics {
                Statistics::Fermion => VelocityLayout::Spherical { r_min: 0.0, r_max, log_radial: false },
                Statistics::Boson => {
                    VelocityLayout::Spherical { r_min: q.cutoff * (2.0 * t).sqrt(), r_max, log_radial: true }
                }
            }
        } else {
            let scale = match spec.extent {
                Some(e) => {
                    let xmax = crate::quadrature::gauss_hermite(spec.nodes)?.nodes.last().copied().unwrap();
                    e / xmax
                }
                None => (2.0 * t / s.mass).sqrt(),
            };
            VelocityLayout::Cartesian { scale }
        };
        let energy = match &s.internal {
            Internal::None => EnergyLayout::None,
            Internal::Levels { energies, .. } => EnergyLayout::Levels(energies.clone()),
            Internal::Continuous { dof } if *dof == 0.0 => EnergyLayout::None,
            Internal::Continuous { dof } => EnergyLayout::Laguerre { exponent: dof / 2.0 - 1.0, temperature: t },
        };
        out.push(ComponentLayout { velocity, energy });
    }
    Ok(out)
}

/// Build the discrete space for a model.
pub fn build_space(model: &ModelSpec, spec: &GridSpec) -> Result<Space> {
    let mut spec = spec.clone();
    let needs_energy = model.species.iter().any(|s| matches!(s.internal, Internal::Continuous { dof } if dof > 0.0));
    if needs_energy && spec.energy_nodes == 0 {
        spec.energy_nodes = 8;
    }
    build_layout_grid(&spec, &layouts(model, &spec)?)
}

/// Thermodynamic state used for equilibria and wall data. For quantum models
/// `densities` holds the fugacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallState {
    pub densities: Vec<f64>,
    pub drift: Vec<f64>,
    pub temperature: f64,
}

impl WallState {
    /// The far-field state seen in the frame where the wall moves with `u e1`.
    pub fn far_field(model: &ModelSpec, u: f64) -> Self {
        let mut drift = vec![0.0; model.dimension];
        drift[0] = u;
        let densities = if model.is_quantum() { vec![1.0] } else { model.species.iter().map(|s| s.density).collect() };
        WallState { densities, drift, temperature: model.temperature }
    }

    /// Parameter vector `(n_1..n_s, u_1..u_d, T)`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.densities.clone();
        p.extend(&self.drift);
        p.push(self.temperature);
        p
    }

    pub fn from_params(p: &[f64], species: usize, dimension: usize) -> Self {
        WallState {
            densities: p[..species].to_vec(),
            drift: p[species..species + dimension].to_vec(),
            temperature: p[species + dimension],
        }
    }
}

fn level_weight(s: &Species, index: usize) -> f64 {
    match &s.internal {
        Internal::Levels { weights, .. } => weights[index],
        _ => 1.0,
    }
}

/// Internal-energy partition factor: the normalization `Q` and the weight
/// `φ(E) e^{-E/T}` at a node.
fn internal_factor(s: &Species, energy: f64, index: usize, t: f64) -> f64 {
    match &s.internal {
        Internal::None => 1.0,
        Internal::Levels { energies, weights } => {
            let q0: f64 = energies.iter().zip(weights).map(|(e, w)| w * (-e / t).exp()).sum();
            level_weight(s, index) * (-energy / t).exp() / q0
        }
        Internal::Continuous { dof } if *dof == 0.0 => 1.0,
        Internal::Continuous { dof } => {
            let a = dof / 2.0;
            let q = statrs::function::gamma::gamma(a) * t.powf(a);
            energy.powf(a - 1.0) * (-energy / t).exp() / q
        }
    }
}

/// Equilibrium value at velocity `xi` (already shifted by the drift).
fn equilibrium_value(model: &ModelSpec, s: &Species, xi2: f64, energy: f64, index: usize, density: f64, t: f64) -> f64 {
    if let Some(q) = &model.quantum {
        let sign = q.statistics.sign();
        let e = (-xi2 / (2.0 * t)).exp();
        // 1 / (z^{-1} e^{x} ∓ 1) written with e^{-x} to avoid overflow
        return density * e / (1.0 - sign * density * e);
    }
    let d = model.dimension as f64;
    let norm = match model.family {
        Family::MonatomicMixture | Family::PolyatomicMixture => density,
        _ => density * s.mass,
    };
    norm * (s.mass / (2.0 * PI * t)).powf(d / 2.0) * (-s.mass * xi2 / (2.0 * t)).exp() * internal_factor(s, energy, index, t)
}

/// Sampled equilibrium and derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    /// `M` (or the Planckian `P`) at every node.
    pub weight: Vec<f64>,
    /// `M` for classical models, `R = P(1 ± P)` for quantum ones.
    pub variance: Vec<f64>,
    pub mass_density: f64,
    pub number_density: f64,
    /// `(Q0, Q1, Q2)` for single-species discrete levels.
    pub partition: Option<[f64; 3]>,
    /// κ, δ, κ̄ or δ̄ as applicable.
    pub internal_stat: Option<f64>,
}

pub fn equilibrium(model: &ModelSpec, space: &Space) -> Result<EquilibriumState> {
    model.validate()?;
    if space.species_count != model.species.len() || space.dimension != model.dimension {
        return Err(Error::InvalidInput("space and model are incompatible".into()));
    }
    let t = model.temperature;
    let mut weight = Vec::with_capacity(space.len());
    let mut variance = Vec::with_capacity(space.len());
    for k in 0..space.len() {
        let s = &model.species[space.species[k]];
        let p2 = space.speed_squared(k);
        if let Some(q) = &model.quantum {
            if q.statistics == Statistics::Boson {
                let rmin = q.cutoff * (2.0 * t).sqrt();
                if p2.sqrt() < rmin * (1.0 - 1e-12) {
                    return Err(Error::Excluded(format!("|p| = {} below the cutoff {}", p2.sqrt(), rmin)));
                }
            }
        }
        let density = if model.is_quantum() { 1.0 } else { s.density };
        let m = equilibrium_value(model, s, p2, space.energies[k], space.energy_index[k], density, t);
        weight.push(m);
        variance.push(match &model.quantum {
            Some(q) => m * (1.0 + q.statistics.sign() * m),
            None => m,
        });
    }
    let partition = match (&model.family, &model.species[0].internal) {
        (Family::PolyatomicDiscrete, Internal::Levels { energies, weights }) => Some(partition_sums(energies, weights, t)),
        _ => None,
    };
    let internal_stat = match model.family {
        Family::PolyatomicDiscrete | Family::PolyatomicContinuous | Family::PolyatomicMixture => {
            Some(internal_energy_stats(model)?)
        }
        _ => None,
    };
    Ok(EquilibriumState {
        weight,
        variance,
        mass_density: model.mass_density(),
        number_density: model.number_density(),
        partition,
        internal_stat,
    })
}

/// `Q_j = Σ φ_i E_i^j e^{-E_i/T}`, `j = 0, 1, 2`.
pub fn partition_sums(energies: &[f64], weights: &[f64], t: f64) -> [f64; 3] {
    let mut q = [0.0; 3];
    for (e, w) in energies.iter().zip(weights) {
        let b = w * (-e / t).exp();
        q[0] += b;
        q[1] += b * e;
        q[2] += b * e * e;
    }
    q
}

fn species_stat(s: &Species, t: f64) -> f64 {
    match &s.internal {
        Internal::None => 0.0,
        Internal::Levels { energies, weights } => {
            let q = partition_sums(energies, weights, t);
            2.0 / (t * t) * (q[0] * q[2] - q[1] * q[1]) / (q[0] * q[0])
        }
        Internal::Continuous { dof } if *dof == 0.0 => 0.0,
        Internal::Continuous { dof } => {
            use statrs::function::gamma::ln_gamma;
            let a = dof / 2.0;
            // Q, ∫φ I e^{-I/T}, ∫φ I² e^{-I/T} relative to Q
            let r1 = (ln_gamma(a + 1.0) - ln_gamma(a)).exp() * t;
            let r2 = (ln_gamma(a + 2.0) - ln_gamma(a)).exp() * t * t;
            2.0 / (t * t) * (r2 - r1 * r1)
        }
    }
}

/// Effective internal-degrees statistic: κ, δ, or the density-weighted mean
/// over species for mixtures.
pub fn internal_energy_stats(model: &ModelSpec) -> Result<f64> {
    match model.family {
        Family::PolyatomicDiscrete | Family::PolyatomicContinuous => Ok(species_stat(&model.species[0], model.temperature)),
        Family::PolyatomicMixture => {
            let n = model.number_density();
            Ok(model.species.iter().map(|s| s.density * species_stat(s, model.temperature)).sum::<f64>() / n)
        }
        _ => Err(Error::Unsupported(format!("{} has no internal energy", model.family.name()))),
    }
}

/// Collision invariants sampled on the grid (columns), in the family's span.
pub fn collision_invariants(model: &ModelSpec, space: &Space, eq: &EquilibriumState) -> Mat {
    let d = model.dimension;
    let s_count = model.species.len();
    let mixture = matches!(model.family, Family::MonatomicMixture | Family::PolyatomicMixture);
    let n_inv = if mixture { d + s_count + 1 } else { d + 2 };
    let mut c = Mat::zeros(space.len(), n_inv);
    for k in 0..space.len() {
        let a = space.species[k];
        let sp = &model.species[a];
        let root = eq.variance[k].sqrt();
        let v = &space.velocities[k];
        let v2 = space.speed_squared(k);
        let m = sp.mass;
        let (first, mom) = if mixture { (a, s_count) } else { (0, 1) };
        c[(k, first)] = root;
        let scale = if mixture { m } else { 1.0 };
        for j in 0..d {
            c[(k, mom + j)] = scale * root * v[j];
        }
        let energy = match (&sp.internal, model.is_quantum()) {
            (_, true) => v2,
            (Internal::None, _) => if mixture { m * v2 } else { v2 },
            (_, _) => {
                if mixture {
                    m * v2 + 2.0 * space.energies[k]
                } else {
                    v2 + 2.0 * space.energies[k] / m
                }
            }
        };
        c[(k, mom + d)] = root * energy;
    }
    c
}

/// Kinds of Gaussian moments `(e^{-a|v|²} | ·)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentKind {
    /// `∫ e^{-a|v|²}`
    Mass,
    /// `∫ e^{-a|v|²} v1²`
    AxisSquared,
    /// `∫ e^{-a|v|²} |v|²`
    SpeedSquared,
    /// `∫ e^{-a|v|²} v1² |v|²`
    AxisSquaredSpeedSquared,
    /// `∫ e^{-a|v|²} |v|⁴`
    SpeedFourth,
}

pub fn moment_closed_form(a: f64, d: usize, kind: MomentKind) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput("Gaussian moment needs a > 0".into()));
    }
    let base = (PI / a).powf(d as f64 / 2.0);
    let d = d as f64;
    Ok(match kind {
        MomentKind::Mass => base,
        MomentKind::AxisSquared => base / (2.0 * a),
        MomentKind::SpeedSquared => d / (2.0 * a) * base,
        MomentKind::AxisSquaredSpeedSquared => (d + 2.0) / (4.0 * a * a) * base,
        MomentKind::SpeedFourth => d * (d + 2.0) / (4.0 * a * a) * base,
    })
}

/// Closed-form inner products of the discrete-level polyatomic invariants,
/// with the energy invariant `√M (|v|² + 2E/m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelMoments {
    pub mass: f64,
    pub momentum: f64,
    pub mass_energy: f64,
    pub axis_energy: f64,
    pub energy_energy: f64,
}

pub fn level_moments_closed_form(model: &ModelSpec) -> Result<LevelMoments> {
    let s = &model.species[0];
    let Internal::Levels { energies, weights } = &s.internal else {
        return Err(Error::Unsupported("level moments need discrete energy levels".into()));
    };
    let t = model.temperature;
    let m = s.mass;
    let rho = model.mass_density();
    let d = model.dimension as f64;
    let q = partition_sums(energies, weights, t);
    let r1 = q[1] / q[0];
    let r2 = q[2] / q[0];
    Ok(LevelMoments {
        mass: rho,
        momentum: rho * t / m,
        mass_energy: rho / m * (d * t + 2.0 * r1),
        axis_energy: rho / (m * m) * ((d + 2.0) * t * t + 2.0 * t * r1),
        energy_energy: rho / (m * m) * (d * (d + 2.0) * t * t + 4.0 * d * t * r1 + 4.0 * r2),
    })
}

/// Closed-form positive degenerate speed `u+` (`u- = -u+`, `u0 = 0`).
pub fn closed_form_speed(model: &ModelSpec) -> Result<f64> {
    model.validate()?;
    let d = model.dimension as f64;
    let t = model.temperature;
    let ratio = |x: f64| ((d + 2.0 + x) / (d + x)).sqrt();
    Ok(match model.family {
        Family::Monatomic => (t / model.species[0].mass).sqrt() * ratio(0.0),
        Family::MonatomicMixture => (model.number_density() * t / model.mass_density()).sqrt() * ratio(0.0),
        Family::PolyatomicDiscrete | Family::PolyatomicContinuous => {
            (t / model.species[0].mass).sqrt() * ratio(internal_energy_stats(model)?)
        }
        Family::PolyatomicMixture => {
            (model.number_density() * t / model.mass_density()).sqrt() * ratio(internal_energy_stats(model)?)
        }
        Family::Quantum => {
            let q = model.quantum.as_ref().unwrap();
            let jr = match q.statistics {
                Statistics::Fermion => special::eta(d / 2.0 + 1.0)? / special::eta(d / 2.0)?,
                Statistics::Boson => {
                    special::quantum_j(d + 2.0, Statistics::Boson, q.cutoff, 1e-12)?
                        / special::quantum_j(d, Statistics::Boson, q.cutoff, 1e-12)?
                }
            };
            jr.sqrt() * t.sqrt() * ratio(0.0)
        }
    })
}

/// Boson speed in the vanishing-cutoff limit, through ζ.
pub fn boson_speed_limit(d: usize, t: f64) -> Result<f64> {
    let d = d as f64;
    Ok((special::zeta(d / 2.0 + 1.0)? / special::zeta(d / 2.0)?).sqrt() * t.sqrt() * ((d + 2.0) / d).sqrt())
}

/// Number of wall parameters `d + s + 1`.
pub fn wall_parameter_count(model: &ModelSpec) -> usize {
    model.dimension + model.species.len() + 1
}

/// Equilibrium of `state` sampled at `v + u e1` on every node.
pub fn wall_equilibrium(model: &ModelSpec, space: &Space, state: &WallState, u: f64) -> Result<Vec<f64>> {
    if !(state.temperature > 0.0) || state.densities.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::InvalidInput("wall temperature and densities must be positive".into()));
    }
    if state.drift.len() != model.dimension {
        return Err(Error::DimensionMismatch { expected: model.dimension, got: state.drift.len() });
    }
    Ok((0..space.len())
        .map(|k| {
            let a = space.species[k];
            let v = &space.velocities[k];
            let xi2: f64 = (0..model.dimension)
                .map(|j| {
                    let x = v[j] + if j == 0 { u } else { 0.0 } - state.drift[j];
                    x * x
                })
                .sum();
            let density = if model.is_quantum() { state.densities[0] } else { state.densities[a] };
            equilibrium_value(model, &model.species[a], xi2, space.energies[k], space.energy_index[k], density, state.temperature)
        })
        .collect())
}

/// `f_b = M^{-1/2}(M_B(v + u e1) - M)` on h+ (zero on h-).
pub fn boundary_maxwellian_data(
    model: &ModelSpec,
    space: &Space,
    eq: &EquilibriumState,
    state: &WallState,
    u: f64,
) -> Result<Vec<f64>> {
    let mb = wall_equilibrium(model, space, state, u)?;
    Ok((0..space.len())
        .map(|k| {
            if space.velocities[k][0] + u > 0.0 {
                (mb[k] - eq.weight[k]) / eq.variance[k].sqrt()
            } else {
                0.0
            }
        })
        .collect())
}

/// Derivatives of the wall data with respect to the `d + s + 1` wall
/// parameters (central differences), one column per parameter.
pub fn wall_directions(model: &ModelSpec, space: &Space, eq: &EquilibriumState, state: &WallState, u: f64) -> Result<Mat> {
    let p0 = state.params();
    let s = state.densities.len();
    let mut out = Mat::zeros(space.len(), p0.len());
    for j in 0..p0.len() {
        let h = 1e-5 * p0[j].abs().max(1.0);
        let mut pp = p0.clone();
        let mut pm = p0.clone();
        pp[j] += h;
        pm[j] -= h;
        let fp = boundary_maxwellian_data(model, space, eq, &WallState::from_params(&pp, s, model.dimension), u)?;
        let fm = boundary_maxwellian_data(model, space, eq, &WallState::from_params(&pm, s, model.dimension), u)?;
        for k in 0..space.len() {
            out[(k, j)] = (fp[k] - fm[k]) / (2.0 * h);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(d: usize, n: usize) -> GridSpec {
        GridSpec::new(d, n)
    }

    #[test]
    fn maxwellian_at_rest() {
        let m = ModelSpec::monatomic(3);
        let s = build_space(&m, &grid(3, 4)).unwrap();
        let eq = equilibrium(&m, &s).unwrap();
        let v: Vec<f64> = vec![0.0; 3];
        let direct = equilibrium_value(&m, &m.species[0], 0.0, 0.0, 0, 1.0, 1.0);
        assert!((direct - (2.0 * PI).powf(-1.5)).abs() < 1e-15);
        assert_eq!(v.len(), 3);
        assert!(eq.weight.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn fermion_occupation_decays() {
        let m = ModelSpec::fermion(1);
        let mut last = f64::INFINITY;
        for r in [0.0, 1.0, 2.0, 4.0, 8.0] {
            let p = equilibrium_value(&m, &m.species[0], r * r, 0.0, 0, 1.0, 1.0);
            assert!(p < last && p > 0.0);
            last = p;
        }
        assert!(last < 1e-13);
    }

    #[test]
    fn single_level_has_zero_kappa() {
        let m = ModelSpec::polyatomic_discrete(3, &[0.7], &[1.0]);
        assert!(internal_energy_stats(&m).unwrap().abs() < 1e-15);
    }

    #[test]
    fn two_level_kappa_matches_variance() {
        let e = 0.8;
        let m = ModelSpec::polyatomic_discrete(2, &[0.0, e], &[1.0, 1.0]);
        let p1 = (-e).exp() / (1.0 + (-e).exp());
        let var = e * e * p1 * (1.0 - p1);
        assert!((internal_energy_stats(&m).unwrap() - 2.0 * var).abs() < 1e-14);
    }

    #[test]
    fn continuous_stat_is_dof() {
        for dof in [1.0, 2.0, 3.5] {
            let m = ModelSpec::polyatomic_continuous(3, dof).with_temperature(1.3);
            assert!((internal_energy_stats(&m).unwrap() - dof).abs() < 1e-12);
        }
        let mix = ModelSpec::polyatomic_mixture(
            3,
            vec![
                Species { mass: 1.0, density: 0.4, internal: Internal::Continuous { dof: 2.0 } },
                Species { mass: 2.0, density: 0.9, internal: Internal::Continuous { dof: 2.0 } },
            ],
        );
        assert!((internal_energy_stats(&mix).unwrap() - 2.0).abs() < 1e-12);
        assert!(internal_energy_stats(&ModelSpec::monatomic(2)).is_err());
    }

    #[test]
    fn closed_form_speeds() {
        assert!((closed_form_speed(&ModelSpec::monatomic(3)).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let pc = ModelSpec::polyatomic_continuous(3, 2.0);
        assert!((closed_form_speed(&pc).unwrap() - (7.0f64 / 5.0).sqrt()).abs() < 1e-14);
        let z = ModelSpec::polyatomic_continuous(2, 0.0);
        assert!((closed_form_speed(&z).unwrap() - closed_form_speed(&ModelSpec::monatomic(2)).unwrap()).abs() < 1e-15);
        let one = ModelSpec::mixture(3, &[1.0], &[1.0]);
        assert!((closed_form_speed(&one).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_moment_values() {
        let p = PI.powf(1.5);
        assert!((moment_closed_form(1.0, 3, MomentKind::Mass).unwrap() - p).abs() < 1e-14);
        assert!((moment_closed_form(1.0, 3, MomentKind::SpeedSquared).unwrap() - 1.5 * p).abs() < 1e-14);
        assert!((moment_closed_form(1.0, 3, MomentKind::SpeedFourth).unwrap() - 3.75 * p).abs() < 1e-14);
        assert!(moment_closed_form(0.0, 3, MomentKind::Mass).is_err());
    }

    #[test]
    fn wall_at_far_field_vanishes() {
        let m = ModelSpec::mixture(2, &[1.0, 2.0], &[0.5, 0.7]);
        let s = build_space(&m, &grid(2, 8)).unwrap();
        let eq = equilibrium(&m, &s).unwrap();
        let u = 0.3;
        let fb = boundary_maxwellian_data(&m, &s, &eq, &WallState::far_field(&m, u), u).unwrap();
        assert!(fb.iter().all(|x| x.abs() < 1e-15));
        assert_eq!(wall_parameter_count(&ModelSpec::monatomic(3)), 5);
    }

    #[test]
    fn invariant_counts() {
        let m = ModelSpec::mixture(3, &[1.0, 2.0], &[1.0, 1.0]);
        let s = build_space(&m, &grid(3, 4)).unwrap();
        let eq = equilibrium(&m, &s).unwrap();
        assert_eq!(collision_invariants(&m, &s, &eq).ncols(), 6);
        let m = ModelSpec::monatomic(3);
        let s = build_space(&m, &grid(3, 4)).unwrap();
        let eq = equilibrium(&m, &s).unwrap();
        assert_eq!(collision_invariants(&m, &s, &eq).ncols(), 5);
    }

    #[test]
    fn boson_requires_cutoff() {
        assert!(ModelSpec::boson(3, 0.0).validate().is_err());
        assert!(ModelSpec::boson(3, 0.1).validate().is_ok());
    }
}
