//! Discrete velocity (and internal-energy) grids, the weighted inner product,
//! the splitting at `v1 + u = 0`, and the specular reflection map.

use crate::quadrature::{composite_legendre, gauss_hermite, gauss_laguerre, gauss_legendre};
use crate::{Error, Result, Scalar};
use serde::{Deserialize, Serialize};

/// Angular resolution of spherical grids.
pub const ANGLES_2D: usize = 8;
pub const POLAR_3D: usize = 4;
pub const AZIMUTH_3D: usize = 8;

/// Grid description. `nodes` is the per-axis count for Cartesian grids and
/// the radial count for spherical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec<T> {
    pub dimension: usize,
    pub nodes: usize,
    /// Half-width of the velocity grid; `None` picks the thermal scale.
    #[serde(default)]
    pub extent: Option<T>,
    #[serde(default)]
    pub energy_nodes: usize,
    #[serde(default)]
    pub cutoff_lambda: Option<T>,
    /// Axis-1 nodes are placed symmetrically about `v1 = -center`.
    #[serde(default)]
    pub center: Option<T>,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(dimension: usize, nodes: usize) -> Self {
        GridSpec { dimension, nodes, extent: None, energy_nodes: 0, cutoff_lambda: None, center: None }
    }
    pub fn with_extent(mut self, extent: T) -> Self {
        self.extent = Some(extent);
        self
    }
    pub fn with_center(mut self, u: T) -> Self {
        self.center = Some(u);
        self
    }
    pub fn with_energy_nodes(mut self, n: usize) -> Self {
        self.energy_nodes = n;
        self
    }
    pub fn center_or_zero(&self) -> T {
        self.center.unwrap_or_else(T::zero)
    }
    fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.dimension > 3 {
            return Err(Error::InvalidInput(format!("dimension must be 1, 2 or 3, got {}", self.dimension)));
        }
        if self.nodes < 2 {
            return Err(Error::InvalidInput("need at least 2 nodes per axis".into()));
        }
        if let Some(e) = self.extent {
            if !(e > T::zero()) {
                return Err(Error::InvalidInput("extent must be positive".into()));
            }
        }
        Ok(())
    }
}

/// How the velocity variable of one species is discretized.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityLayout<T> {
    /// Tensor Gauss–Hermite grid, node `k` at `scale * x_k`.
    Cartesian { scale: T },
    /// Radial composite Gauss–Legendre times an angular product rule.
    /// With `log_radial` the panels are uniform in `ln r`.
    Spherical { r_min: T, r_max: T, log_radial: bool },
}

/// How the internal energy of one species is discretized.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyLayout<T> {
    None,
    /// Discrete levels, each carried with unit quadrature weight.
    Levels(Vec<T>),
    /// Gauss–Laguerre for the weight `I^exponent e^{-I/temperature}`.
    Laguerre { exponent: T, temperature: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLayout<T> {
    pub velocity: VelocityLayout<T>,
    pub energy: EnergyLayout<T>,
}

/// A finite velocity space: nodes with positive quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpace<T> {
    pub dimension: usize,
    pub species_count: usize,
    pub velocities: Vec<Vec<T>>,
    pub energies: Vec<T>,
    /// Index of the energy level / energy quadrature node.
    pub energy_index: Vec<usize>,
    pub species: Vec<usize>,
    pub weights: Vec<T>,
    pub center: T,
}

impl<T: Scalar> DiscreteSpace<T> {
    /// Assemble a space from explicit nodes; checks lengths and weight positivity.
    pub fn from_parts(
        dimension: usize,
        velocities: Vec<Vec<T>>,
        weights: Vec<T>,
        center: T,
    ) -> Result<Self> {
        let n = velocities.len();
        if weights.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
        }
        if velocities.iter().any(|v| v.len() != dimension) {
            return Err(Error::InvalidInput("velocity vectors must have the grid dimension".into()));
        }
        if weights.iter().any(|w| !(*w > T::zero())) {
            return Err(Error::InvalidInput("quadrature weights must be positive".into()));
        }
        Ok(DiscreteSpace {
            dimension,
            species_count: 1,
            velocities,
            energies: vec![T::zero(); n],
            energy_index: vec![0; n],
            species: vec![0; n],
            weights,
            center,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn speed(&self, k: usize) -> T {
        self.velocities[k].iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
    }

    pub fn speed_squared(&self, k: usize) -> T {
        self.velocities[k].iter().fold(T::zero(), |s, &x| s + x * x)
    }

    /// Axis-1 velocity of every node.
    pub fn axis1(&self) -> Vec<T> {
        self.velocities.iter().map(|v| v[0]).collect()
    }

    /// `Σ_k w_k f_k g_k`.
    pub fn inner_product(&self, f: &[T], g: &[T]) -> Result<T> {
        if f.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: f.len() });
        }
        if g.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: g.len() });
        }
        Ok(self.weights.iter().zip(f).zip(g).fold(T::zero(), |s, ((&w, &a), &b)| s + w * a * b))
    }

    pub fn norm(&self, f: &[T]) -> Result<T> {
        Ok(self.inner_product(f, f)?.sqrt())
    }

    /// Sample a function of (velocity, energy, species) on every node.
    pub fn sample(&self, f: impl Fn(&[T], T, usize) -> T) -> Vec<T> {
        (0..self.len()).map(|k| f(&self.velocities[k], self.energies[k], self.species[k])).collect()
    }

    pub fn max_speed(&self) -> T {
        (0..self.len()).map(|k| self.speed(k)).fold(T::zero(), T::max)
    }
}

fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).unwrap()
}

fn tof64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap()
}

/// Axis-1 node offsets relative to `-center`, with the sonic shift applied.
fn axis_offsets(x: &[f64], w: &[f64], scale: f64) -> (Vec<f64>, Vec<f64>) {
    let v: Vec<f64> = x.iter().map(|t| scale * t).collect();
    if v.iter().all(|t| t.abs() > 1e-10) {
        return (v, w.to_vec());
    }
    let mut gap = f64::INFINITY;
    for pair in v.windows(2) {
        gap = gap.min((pair[1] - pair[0]).abs());
    }
    let shifted: Vec<(f64, f64)> = v.iter().zip(w).map(|(t, w)| (t + 0.5 * gap, *w)).collect();
    let positive: Vec<(f64, f64)> = shifted.into_iter().filter(|(t, _)| *t > 0.0).collect();
    let mut nodes: Vec<(f64, f64)> = positive.iter().map(|(t, w)| (-t, *w)).collect();
    nodes.extend(positive);
    nodes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    nodes.into_iter().unzip()
}

struct VelocityNodes {
    v: Vec<Vec<f64>>,
    w: Vec<f64>,
}

fn cartesian_nodes(d: usize, n: usize, scale: f64, center: f64) -> Result<VelocityNodes> {
    let rule = gauss_hermite(n)?;
    let folded: Vec<f64> = rule.folded.iter().map(|w| w * scale).collect();
    let transverse: Vec<f64> = rule.nodes.iter().map(|x| scale * x).collect();
    let (a1, w1) = axis_offsets(&rule.nodes, &folded, scale);
    let mut v = Vec::new();
    let mut w = Vec::new();
    let counts: Vec<usize> = (0..d).map(|j| if j == 0 { a1.len() } else { n }).collect();
    let total: usize = counts.iter().product();
    for flat in 0..total {
        let mut rem = flat;
        let mut node = vec![0.0; d];
        let mut weight = 1.0;
        for j in 0..d {
            let i = rem % counts[j];
            rem /= counts[j];
            if j == 0 {
                node[0] = a1[i] - center;
                weight *= w1[i];
            } else {
                node[j] = transverse[i];
                weight *= folded[i];
            }
        }
        v.push(node);
        w.push(weight);
    }
    Ok(VelocityNodes { v, w })
}

fn directions(d: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    use std::f64::consts::PI;
    Ok(match d {
        1 => vec![(vec![-1.0], 1.0), (vec![1.0], 1.0)],
        2 => (0..ANGLES_2D)
            .map(|j| {
                let t = 2.0 * PI * (j as f64 + 0.5) / ANGLES_2D as f64;
                (vec![t.cos(), t.sin()], 2.0 * PI / ANGLES_2D as f64)
            })
            .collect(),
        3 => {
            let polar = gauss_legendre(POLAR_3D)?;
            let mut out = Vec::new();
            for (mu, wm) in polar.nodes.iter().zip(&polar.weights) {
                let s = (1.0 - mu * mu).sqrt();
                for j in 0..AZIMUTH_3D {
                    let p = 2.0 * PI * (j as f64 + 0.5) / AZIMUTH_3D as f64;
                    out.push((vec![*mu, s * p.cos(), s * p.sin()], wm * 2.0 * PI / AZIMUTH_3D as f64));
                }
            }
            out
        }
        _ => return Err(Error::InvalidInput("dimension must be 1, 2 or 3".into())),
    })
}

fn spherical_nodes(d: usize, n: usize, r_min: f64, r_max: f64, log_radial: bool, center: f64) -> Result<VelocityNodes> {
    let panels = n.div_ceil(12);
    let per = n.div_ceil(panels);
    let (r, wr): (Vec<f64>, Vec<f64>) = if log_radial {
        if !(r_min > 0.0) {
            return Err(Error::InvalidInput("logarithmic radial map needs r_min > 0".into()));
        }
        let (s, ws) = composite_legendre(r_min.ln(), r_max.ln(), panels, per)?;
        s.iter().zip(&ws).map(|(s, w)| (s.exp(), w * s.exp())).unzip()
    } else {
        composite_legendre(r_min, r_max, panels, per)?
    };
    let dirs = directions(d)?;
    let mut v = Vec::new();
    let mut w = Vec::new();
    for (rk, wk) in r.iter().zip(&wr) {
        let jac = rk.powi(d as i32 - 1);
        for (om, wo) in &dirs {
            let mut node: Vec<f64> = om.iter().map(|o| rk * o).collect();
            node[0] -= center;
            v.push(node);
            w.push(wk * jac * wo);
        }
    }
    Ok(VelocityNodes { v, w })
}

/// Build a grid for the given species layouts (one entry per species).
pub fn build_layout_grid<T: Scalar>(spec: &GridSpec<T>, components: &[ComponentLayout<T>]) -> Result<DiscreteSpace<T>> {
    spec.validate()?;
    if components.is_empty() {
        return Err(Error::InvalidInput("at least one species layout required".into()));
    }
    let d = spec.dimension;
    let center = tof64(spec.center_or_zero());
    let mut space = DiscreteSpace {
        dimension: d,
        species_count: components.len(),
        velocities: Vec::new(),
        energies: Vec::new(),
        energy_index: Vec::new(),
        species: Vec::new(),
        weights: Vec::new(),
        center: spec.center_or_zero(),
    };
    for (s, comp) in components.iter().enumerate() {
        let vel = match &comp.velocity {
            VelocityLayout::Cartesian { scale } => cartesian_nodes(d, spec.nodes, tof64(*scale), center)?,
            VelocityLayout::Spherical { r_min, r_max, log_radial } => {
                spherical_nodes(d, spec.nodes, tof64(*r_min), tof64(*r_max), *log_radial, center)?
            }
        };
        let energy: Vec<(f64, f64)> = match &comp.energy {
            EnergyLayout::None => vec![(0.0, 1.0)],
            EnergyLayout::Levels(levels) => {
                if levels.is_empty() {
                    return Err(Error::InvalidInput("energy level list is empty".into()));
                }
                levels.iter().map(|e| (tof64(*e), 1.0)).collect()
            }
            EnergyLayout::Laguerre { exponent, temperature } => {
                if spec.energy_nodes == 0 {
                    return Err(Error::InvalidInput("continuous internal energy needs energy_nodes > 0".into()));
                }
                let t = tof64(*temperature);
                let rule = gauss_laguerre(spec.energy_nodes, tof64(*exponent))?;
                rule.nodes.iter().zip(&rule.folded).map(|(x, w)| (t * x, t * w)).collect()
            }
        };
        for (ei, (e, we)) in energy.iter().enumerate() {
            for (v, wv) in vel.v.iter().zip(&vel.w) {
                space.velocities.push(v.iter().map(|&x| cast(x)).collect());
                space.energies.push(cast(*e));
                space.energy_index.push(ei);
                space.species.push(s);
                space.weights.push(cast(wv * we));
            }
        }
    }
    if space.weights.iter().any(|w| !(*w > T::zero())) {
        return Err(Error::Numerical("non-positive quadrature weight".into()));
    }
    Ok(space)
}

/// Single-species Cartesian grid. The node scale is `extent / x_max` when an
/// extent is given and `√2` (unit temperature and mass) otherwise.
pub fn build_grid<T: Scalar>(spec: &GridSpec<T>) -> Result<DiscreteSpace<T>> {
    spec.validate()?;
    let scale = match spec.extent {
        Some(e) => {
            let xmax = gauss_hermite(spec.nodes)?.nodes.last().copied().unwrap();
            e / cast(xmax)
        }
        None => cast(std::f64::consts::SQRT_2),
    };
    build_layout_grid(spec, &[ComponentLayout { velocity: VelocityLayout::Cartesian { scale }, energy: EnergyLayout::None }])
}

/// Index sets and diagonal transport for the splitting at `v1 + u = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceSplit<T> {
    pub u: T,
    /// Diagonal of `B`: `v1 + u` at every node.
    pub transport: Vec<T>,
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
}

impl<T: Scalar> HalfSpaceSplit<T> {
    pub fn len(&self) -> usize {
        self.transport.len()
    }
    pub fn is_empty(&self) -> bool {
        self.transport.is_empty()
    }
    pub fn is_plus(&self, k: usize) -> bool {
        self.transport[k] > T::zero()
    }
    /// Diagonal of `P+` (1 on h+, 0 on h-).
    pub fn plus_mask(&self) -> Vec<T> {
        self.transport.iter().map(|&b| if b > T::zero() { T::one() } else { T::zero() }).collect()
    }
    pub fn minus_mask(&self) -> Vec<T> {
        self.transport.iter().map(|&b| if b < T::zero() { T::one() } else { T::zero() }).collect()
    }
    pub fn project_plus(&self, f: &[T]) -> Vec<T> {
        f.iter().zip(&self.transport).map(|(&x, &b)| if b > T::zero() { x } else { T::zero() }).collect()
    }
    pub fn project_minus(&self, f: &[T]) -> Vec<T> {
        f.iter().zip(&self.transport).map(|(&x, &b)| if b < T::zero() { x } else { T::zero() }).collect()
    }
    /// Diagonals of `B+ = B P+` and `B- = -B P-`.
    pub fn positive_part(&self) -> Vec<T> {
        self.transport.iter().map(|&b| b.max(T::zero())).collect()
    }
    pub fn negative_part(&self) -> Vec<T> {
        self.transport.iter().map(|&b| (-b).max(T::zero())).collect()
    }
}

/// Split by the sign of `v1 + u`.
pub fn split_half_spaces<T: Scalar>(space: &DiscreteSpace<T>, u: T) -> Result<HalfSpaceSplit<T>> {
    let transport: Vec<T> = space.velocities.iter().map(|v| v[0] + u).collect();
    let scale = T::one() + u.abs() + space.max_speed();
    let tol = cast::<T>(1e-14) * scale;
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (k, &b) in transport.iter().enumerate() {
        if b.abs() <= tol {
            return Err(Error::SonicNode { index: k });
        }
        if b > T::zero() {
            plus.push(k);
        } else {
            minus.push(k);
        }
    }
    Ok(HalfSpaceSplit { u, transport, plus, minus })
}

/// Split for the spatially homogeneous problem: `B = I`, so `h+` is everything.
pub fn identity_split<T: Scalar>(n: usize) -> HalfSpaceSplit<T> {
    HalfSpaceSplit { u: T::zero(), transport: vec![T::one(); n], plus: (0..n).collect(), minus: Vec::new() }
}

/// The map `v ↦ v - 2(v1+u) e1` as an involutive node permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    pub partner: Vec<usize>,
}

impl Reflection {
    /// `(Pg)_k = g_{partner(k)}`.
    pub fn apply<T: Copy>(&self, g: &[T]) -> Vec<T> {
        self.partner.iter().map(|&j| g[j]).collect()
    }
}

/// Reflection about `v1 = -u`; requires every h- node to have a mirror with
/// equal weight.
pub fn reflection_operator<T: Scalar>(space: &DiscreteSpace<T>, split: &HalfSpaceSplit<T>) -> Result<Reflection> {
    let n = space.len();
    let tol = cast::<T>(1e-9) * (T::one() + space.max_speed() + split.u.abs());
    let asym = || Error::AsymmetricGrid { center: -tof64(split.u) };
    if split.plus.len() != split.minus.len() {
        return Err(asym());
    }
    let mut partner = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for &k in &split.minus {
        let vk = &space.velocities[k];
        let target = vk[0] - cast::<T>(2.0) * split.transport[k];
        let found = split.plus.iter().copied().find(|&j| {
            !used[j]
                && space.species[j] == space.species[k]
                && space.energy_index[j] == space.energy_index[k]
                && (space.velocities[j][0] - target).abs() <= tol
                && (1..space.dimension).all(|a| (space.velocities[j][a] - vk[a]).abs() <= tol)
        });
        let j = found.ok_or_else(asym)?;
        let wk = space.weights[k];
        if (space.weights[j] - wk).abs() > cast::<T>(1e-12) * wk {
            return Err(asym());
        }
        used[j] = true;
        partner[k] = j;
        partner[j] = k;
    }
    Ok(Reflection { partner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn four_nodes_symmetric_about_zero() {
        let s = build_grid(&GridSpec::<f64>::new(1, 4).with_extent(4.0)).unwrap();
        let v = s.axis1();
        assert_eq!(v.len(), 4);
        assert!((v[0] + v[3]).abs() < 1e-14 && (v[1] + v[2]).abs() < 1e-14);
        assert!((v[3] - 4.0).abs() < 1e-12);
        assert!((s.weights[0] - s.weights[3]).abs() < 1e-14);
    }

    #[test]
    fn shifted_center_is_symmetric_and_sonic_free() {
        let s = build_grid(&GridSpec::<f64>::new(1, 4).with_center(0.3)).unwrap();
        let v = s.axis1();
        for k in 0..4 {
            assert!((v[k] + 0.3).abs() > 1e-3);
            assert!(((v[k] + 0.3) + (v[3 - k] + 0.3)).abs() < 1e-14);
        }
    }

    #[test]
    fn odd_count_gets_shifted_then_mirrored() {
        let s = build_grid(&GridSpec::<f64>::new(1, 5)).unwrap();
        let v = s.axis1();
        assert_eq!(v.len(), 6);
        assert!(v.iter().all(|x| x.abs() > 1e-3));
        let split = split_half_spaces(&s, 0.0).unwrap();
        assert!(reflection_operator(&s, &split).is_ok());
    }

    #[test]
    fn gaussian_integrals() {
        let s = build_grid(&GridSpec::<f64>::new(1, 40)).unwrap();
        let f = s.sample(|v, _, _| (-v[0] * v[0] / 2.0).exp());
        let v = s.inner_product(&f, &f).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-10, "{v} {}", v - PI.sqrt());
        let s3 = build_grid(&GridSpec::<f64>::new(3, 20)).unwrap();
        assert_eq!(s3.len(), 8000);
        let g = s3.sample(|v, _, _| (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).exp());
        let one = vec![1.0; s3.len()];
        assert!((s3.inner_product(&g, &one).unwrap() - PI.powf(1.5)).abs() < 1e-8);
    }

    #[test]
    fn split_limits() {
        let s = build_grid(&GridSpec::<f64>::new(2, 6)).unwrap();
        let sp = split_half_spaces(&s, 0.0).unwrap();
        assert_eq!(sp.plus.len(), s.len() / 2);
        let far = split_half_spaces(&s, 100.0).unwrap();
        assert!(far.minus.is_empty());
        let id = identity_split::<f64>(s.len());
        assert_eq!(id.plus.len(), s.len());
        let sum: Vec<f64> = sp.plus_mask().iter().zip(sp.minus_mask()).map(|(a, b)| a + b).collect();
        assert!(sum.iter().all(|x| *x == 1.0));
    }

    #[test]
    fn sonic_node_is_rejected() {
        let s = DiscreteSpace::from_parts(1, vec![vec![-1.0], vec![0.0], vec![1.0]], vec![1.0; 3], 0.0).unwrap();
        assert_eq!(split_half_spaces(&s, 0.0), Err(Error::SonicNode { index: 1 }));
    }

    #[test]
    fn reflection_identity_single_node() {
        let s = build_grid(&GridSpec::<f64>::new(2, 4).with_center(-0.7)).unwrap();
        let sp = split_half_spaces(&s, -0.7).unwrap();
        let p = reflection_operator(&s, &sp).unwrap();
        let k = sp.minus[3];
        let mut g = vec![0.0; s.len()];
        g[k] = 1.0;
        let pg = p.apply(&g);
        assert_eq!(pg[p.partner[k]], 1.0);
        let lhs = s.weights[k] * sp.transport[k].abs();
        let j = p.partner[k];
        let rhs = s.weights[j] * sp.transport[j];
        assert!((lhs - rhs).abs() < 1e-14);
        assert!(p.partner.iter().enumerate().all(|(i, &j)| p.partner[j] == i));
    }

    #[test]
    fn reflection_rejects_asymmetric_grid() {
        let s = build_grid(&GridSpec::<f64>::new(1, 6)).unwrap();
        let sp = split_half_spaces(&s, 0.2).unwrap();
        assert!(matches!(reflection_operator(&s, &sp), Err(Error::AsymmetricGrid { .. })));
    }

    #[test]
    fn spherical_grid_integrates_gaussian() {
        for d in 1..=3 {
            let spec = GridSpec::new(d, 48);
            let layout = ComponentLayout {
                velocity: VelocityLayout::Spherical { r_min: 0.0, r_max: 9.0, log_radial: false },
                energy: EnergyLayout::None,
            };
            let s = build_layout_grid(&spec, &[layout]).unwrap();
            let g = s.sample(|v, _, _| (-v.iter().map(|x| x * x).sum::<f64>()).exp());
            let one = vec![1.0; s.len()];
            let exact = PI.powf(d as f64 / 2.0);
            let v = s.inner_product(&g, &one).unwrap();
            assert!((v - exact).abs() < 1e-9, "d={d} {v} {exact}");
        }
    }

    #[test]
    fn generic_f32_grid() {
        let s = build_grid(&GridSpec::<f32>::new(1, 8)).unwrap();
        let one = vec![1.0f32; s.len()];
        let g = s.sample(|v, _, _| (-v[0] * v[0] / 2.0).exp());
        let val = s.inner_product(&g, &one).unwrap();
        assert!((val - (2.0 * PI).sqrt() as f32).abs() < 1e-4);
    }
}
