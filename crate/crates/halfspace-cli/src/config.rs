//! Run configuration: TOML (or JSON) file sections, with presets for `--model`.

use anyhow::{bail, Context, Result};
use halfspace::halfspace_solver::{BoundaryKind, GrowthPairing};
use halfspace::model_catalog::{Internal, ModelSpec, Species, WallState};
use halfspace::penalization::PenaltyOptions;
use halfspace::regime_analysis::DegenerateTarget;
use halfspace::GridSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum ModelName {
    Monatomic,
    Mixture,
    Fermion,
    Boson,
    PolyatomicDiscrete,
    PolyatomicContinuous,
    PolyatomicMixture,
}

impl std::str::FromStr for ModelName {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "monatomic" => ModelName::Monatomic,
            "mixture" => ModelName::Mixture,
            "fermion" => ModelName::Fermion,
            "boson" => ModelName::Boson,
            "polyatomic-discrete" => ModelName::PolyatomicDiscrete,
            "polyatomic-continuous" => ModelName::PolyatomicContinuous,
            "polyatomic-mixture" => ModelName::PolyatomicMixture,
            _ => bail!("unknown model `{s}` (monatomic, mixture, fermion, boson, polyatomic-discrete, polyatomic-continuous, polyatomic-mixture)"),
        })
    }
}

/// Model keys; omitted keys take the preset values of `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: ModelName,
    #[serde(default = "three")]
    pub dimension: usize,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub densities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Internal degrees of freedom, one per species for mixtures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
}

fn three() -> usize {
    3
}
fn one() -> f64 {
    1.0
}

impl ModelSection {
    pub fn preset(name: ModelName) -> Self {
        ModelSection {
            name,
            dimension: 3,
            temperature: 1.0,
            masses: None,
            densities: None,
            energies: None,
            weights: None,
            dof: None,
            cutoff: None,
        }
    }

    pub fn build(&self) -> Result<ModelSpec> {
        let d = self.dimension;
        let m = match self.name {
            ModelName::Monatomic => ModelSpec::monatomic(d),
            ModelName::Mixture => {
                let masses = self.masses.clone().unwrap_or_else(|| vec![1.0, 2.0]);
                let dens = self.densities.clone().unwrap_or_else(|| vec![1.0; masses.len()]);
                ModelSpec::mixture(d, &masses, &dens)
            }
            ModelName::Fermion => ModelSpec::fermion(d),
            ModelName::Boson => ModelSpec::boson(d, self.cutoff.unwrap_or(0.1)),
            ModelName::PolyatomicDiscrete => {
                let e = self.energies.clone().unwrap_or_else(|| vec![0.0, 1.0]);
                let w = self.weights.clone().unwrap_or_else(|| vec![1.0; e.len()]);
                ModelSpec::polyatomic_discrete(d, &e, &w)
            }
            ModelName::PolyatomicContinuous => {
                ModelSpec::polyatomic_continuous(d, self.dof.as_ref().and_then(|v| v.first().copied()).unwrap_or(2.0))
            }
            ModelName::PolyatomicMixture => {
                let masses = self.masses.clone().unwrap_or_else(|| vec![1.0, 2.0]);
                let dens = self.densities.clone().unwrap_or_else(|| vec![1.0; masses.len()]);
                let dof = self.dof.clone().unwrap_or_else(|| vec![2.0; masses.len()]);
                if dens.len() != masses.len() || dof.len() != masses.len() {
                    bail!("masses, densities and dof must have the same length");
                }
                let species = masses
                    .iter()
                    .zip(&dens)
                    .zip(&dof)
                    .map(|((&mass, &density), &dof)| Species { mass, density, internal: Internal::Continuous { dof } })
                    .collect();
                ModelSpec::polyatomic_mixture(d, species)
            }
        };
        let m = m.with_temperature(self.temperature);
        m.validate().context("invalid model section")?;
        Ok(m)
    }

    pub fn is_quantum(&self) -> bool {
        matches!(self.name, ModelName::Fermion | ModelName::Boson)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Per-axis (Cartesian) or radial (quantum) node count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
}

impl GridSection {
    pub fn build(&self, model: &ModelSection) -> GridSpec {
        let d = model.dimension;
        let default_nodes = if model.is_quantum() {
            40
        } else {
            match d {
                1 => 16,
                2 => 10,
                _ => 6,
            }
        };
        let mut g = GridSpec::new(d, self.nodes.unwrap_or(default_nodes));
        if let Some(e) = self.extent {
            g = g.with_extent(e);
        }
        if let Some(n) = self.energy_nodes {
            g = g.with_energy_nodes(n);
        }
        if let Some(c) = self.center {
            g = g.with_center(c);
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub enum ProblemKind {
    /// Decaying solution with wall data corrected in the wall parameters.
    #[default]
    Decaying,
    Milne,
    Kramer,
}

/// A source term `e^{-rate x}` times a fixed generic profile in the range of `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub rate: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    /// `[start, end, samples]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_range: Option<(f64, f64, usize)>,
    #[serde(default)]
    pub extra_conditions: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<DegenerateTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall: Option<WallState>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceSection>,
    #[serde(default)]
    pub problem: ProblemKind,
    /// Milne/Kramer: prescribed negative-block moments.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moments: Vec<f64>,
    /// Kramer: prescribed growth parameters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub growth: Vec<f64>,
    /// Kernel pairing by default: the auxiliary one can vanish by symmetry.
    #[serde(default = "kernel_pairing")]
    pub pairing: GrowthPairing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default = "absorb")]
    pub boundary: BoundaryKind,
    #[serde(default)]
    pub penalty: PenaltyOptions,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn absorb() -> BoundaryKind {
    BoundaryKind::Absorb
}

impl RunConfig {
    pub fn preset(name: ModelName) -> Self {
        RunConfig {
            model: ModelSection::preset(name),
            grid: GridSection::default(),
            boundary: BoundaryKind::Absorb,
            penalty: PenaltyOptions::default(),
            run: RunSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn parse(text: &str, json: bool) -> Result<Self> {
        if json {
            Ok(serde_json::from_str(text)?)
        } else {
            Ok(toml::from_str(text)?)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let json = path.extension().is_some_and(|e| e == "json");
        Self::parse(&text, json).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Normalized TOML form.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Parse `a:b:n`.
impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            u: None,
            u_range: None,
            extra_conditions: false,
            target: None,
            delta: None,
            wall: None,
            sources: Vec::new(),
            problem: ProblemKind::default(),
            moments: Vec::new(),
            growth: Vec::new(),
            pairing: kernel_pairing(),
        }
    }
}

fn kernel_pairing() -> GrowthPairing {
    GrowthPairing::Kernel
}

pub fn parse_range(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("expected a:b:n, got `{s}`");
    }
    let a: f64 = parts[0].trim().parse().with_context(|| format!("bad range start `{}`", parts[0]))?;
    let b: f64 = parts[1].trim().parse().with_context(|| format!("bad range end `{}`", parts[1]))?;
    let n: usize = parts[2].trim().parse().with_context(|| format!("bad sample count `{}`", parts[2]))?;
    if !(a < b) || n < 2 {
        bail!("range needs a < b and n >= 2, got `{s}`");
    }
    Ok((a, b, n))
}
