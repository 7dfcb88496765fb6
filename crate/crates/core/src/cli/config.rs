//! JSON run configuration and its resolution against a graph.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::laakso::{LaaksoGraph, LaaksoVertex, VertexSpec};
use crate::params::{BranchingFunction, FitOptions, GluingFunction};
use crate::profiles::DoublingProfile;
use crate::tree::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilePair {
    pub volume: DoublingProfile,
    pub psi: DoublingProfile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitParams {
    pub b: BranchingFunction,
    pub g: GluingFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    /// `None` selects the default centers of the graph.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<VertexSpec>>,
    /// Radii of the volume check.
    pub radii: Vec<u32>,
    /// Radii of the exact exit-time check.
    pub exit_radii: Vec<u32>,
    /// Radii of the Monte Carlo comparison; empty disables it.
    pub mc_radii: Vec<u32>,
    /// Step counts of the heat-kernel check.
    pub n_values: Vec<u32>,
    /// Step counts of the Green-function check; empty disables it.
    pub green_n: Vec<u32>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            centers: None,
            radii: vec![4, 8, 16, 32, 64],
            exit_radii: vec![4, 8, 16, 32],
            mc_radii: vec![4, 8],
            n_values: vec![16, 32, 64, 128, 256, 512, 1024],
            green_n: vec![64, 128, 256, 512, 1024],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub volume: f64,
    pub exit_time: f64,
    pub hke: f64,
    pub green: f64,
    pub monte_carlo: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { volume: 64.0, exit_time: 64.0, hke: 100.0, green: 64.0, monte_carlo: 1.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profiles: Option<ProfilePair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ExplicitParams>,
    pub fit: FitOptions,
    pub grid: Grid,
    pub seed: u64,
    pub trials: u64,
    /// Vertex cap of every ball.
    pub cap: usize,
    pub thresholds: Thresholds,
    pub delta: f64,
    pub kappa: f64,
    /// Multiplies `Ψ_b` in every envelope that uses it.
    pub psi_scale: f64,
    pub transience_k_max: i32,
    /// Thread count; never part of a report.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            profiles: None,
            params: None,
            fit: FitOptions::default(),
            grid: Grid::default(),
            seed: 0,
            trials: 2000,
            cap: 1 << 22,
            thresholds: Thresholds::default(),
            delta: 0.25,
            kappa: 3.0,
            psi_scale: 1.0,
            transience_k_max: 20,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn check(&self) -> anyhow::Result<()> {
        match (&self.profiles, &self.params) {
            (Some(_), Some(_)) => bail!("config declares both `profiles` and `params`"),
            (None, None) => bail!("config declares neither `profiles` nor `params`"),
            _ => {}
        }
        if self.cap == 0 {
            bail!("`cap` must be positive");
        }
        if self.trials < crate::walk::MIN_TRIALS {
            bail!("`trials` must be at least {}", crate::walk::MIN_TRIALS);
        }
        if !(self.psi_scale.is_finite() && self.psi_scale > 0.0) {
            bail!("`psi_scale` must be positive");
        }
        let t = &self.thresholds;
        if [t.volume, t.exit_time, t.hke, t.green, t.monte_carlo].iter().any(|x| x.partial_cmp(&1.0).is_none_or(|o| o.is_lt())) {
            bail!("thresholds must be at least 1");
        }
        Ok(())
    }
}

fn spec_of(v: &LaaksoVertex) -> VertexSpec {
    VertexSpec { u: v.u.0.clone(), x: v.x.label().clone() }
}

/// The base point, a level-1 wormhole lift, and a vertex using the largest
/// digits at indices 1..=3.
pub fn default_centers(graph: &LaaksoGraph) -> anyhow::Result<Vec<LaaksoVertex>> {
    let (b, g) = (graph.branching(), graph.gluing());
    let top = |k: i32, bound: u32| (k, bound - 1);
    let wormhole = VertexSpec { u: Label::new([top(1, g.at(1))])?, x: Label::new([(1, 1)])? };
    let high = VertexSpec {
        u: Label::new((1..=3).map(|k| top(k, g.at(k))))?,
        x: Label::new([(0, 1)].into_iter().chain((1..=3).map(|k| top(k, b.at(k)))))?,
    };
    let mut out = vec![LaaksoVertex::base()];
    for spec in [wormhole, high] {
        let v = graph.vertex(&spec)?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Centers of the grid, canonicalized; the config is updated to list them.
pub fn resolve_centers(config: &mut RunConfig, graph: &LaaksoGraph) -> anyhow::Result<Vec<LaaksoVertex>> {
    let centers = match &config.grid.centers {
        Some(specs) => specs.iter().map(|s| graph.vertex(s)).collect::<Result<Vec<_>, _>>()?,
        None => default_centers(graph)?,
    };
    if centers.is_empty() {
        bail!("grid has no centers");
    }
    config.grid.centers = Some(centers.iter().map(spec_of).collect());
    Ok(centers)
}
