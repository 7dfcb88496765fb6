//! The Laakso-type graph `G(g, b)` as an implicit graph.
//!
//! Vertices are pairs `(u, x)` of an ultrametric index `u` (digits at
//! indices `k >= 1`, `u(k) < g(k)`) and a tree point `x`. Pairs over the same
//! wormhole point of level `n` are identified when they agree off index `n`;
//! canonical vertices store `u(n) = 0` there.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::params::{validate, BranchingFunction, GluingFunction, Violation};
use crate::tree::{Label, TreeError, TreeShape, TreeVertex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaaksoError {
    #[error("invalid parameters: {0:?}")]
    InvalidParams(Vec<Violation>),
    #[error("ultrametric digit {value} at index {index} is outside [0, {bound})")]
    InvalidRange { index: i32, value: u32, bound: u32 },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(
        "ball around {center} exceeds the cap of {cap} vertices: radius {radius_completed} complete \
         ({vertices} vertices), radius {radius_requested} requested"
    )]
    CapExceeded { center: String, cap: usize, radius_requested: u32, radius_completed: u32, vertices: usize },
}

/// Point of the ultrametric index set, stored sparsely like a tree label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UltraPoint(pub Label);

impl UltraPoint {
    pub fn zero() -> Self {
        UltraPoint(Label::root())
    }

    pub fn get(&self, k: i32) -> u8 {
        self.0.get(k)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct LaaksoVertex {
    pub u: UltraPoint,
    pub x: TreeVertex,
}

impl LaaksoVertex {
    /// The base point `p`: both coordinates identically zero.
    pub fn base() -> Self {
        LaaksoVertex::default()
    }

    /// Canonical serialization, e.g. `u=1:2,3:1;x=0:1,4:2`.
    pub fn serial(&self) -> String {
        self.to_string()
    }

    /// Content-derived identifier: the first 8 bytes of SHA-256 of [`Self::serial`].
    pub fn content_id(&self) -> String {
        let digest = Sha256::digest(self.serial().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for LaaksoVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u={};x={}", self.u.0, self.x)
    }
}

/// Raw `(u, x)` labels as they appear in configuration files.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexSpec {
    #[serde(default)]
    pub u: Label,
    #[serde(default)]
    pub x: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BallSummary {
    pub center: LaaksoVertex,
    pub radius: u32,
    /// Vertices at distance `< radius`.
    pub vertex_count: usize,
    /// `m_G` of the open ball.
    pub degree_sum: u64,
    /// Vertices at distance exactly `radius`.
    pub boundary_size: usize,
}

#[derive(Debug, Clone)]
pub struct LaaksoGraph {
    tree: TreeShape,
    g: GluingFunction,
}

impl LaaksoGraph {
    pub fn new(b: BranchingFunction, g: GluingFunction) -> Result<Self, LaaksoError> {
        let violations = validate(&b, &g, true);
        if !violations.is_empty() {
            return Err(LaaksoError::InvalidParams(violations));
        }
        Ok(LaaksoGraph { tree: TreeShape::graph(b), g })
    }

    pub fn tree(&self) -> &TreeShape {
        &self.tree
    }

    pub fn branching(&self) -> &BranchingFunction {
        self.tree.branching()
    }

    pub fn gluing(&self) -> &GluingFunction {
        &self.g
    }

    /// Number of lifts at `x`: `g(n)` on a level-`n` wormhole, else 1.
    fn lifts(&self, x: &TreeVertex) -> (Option<i32>, u32) {
        match self.tree.wormhole_level(x) {
            Some(n) => (Some(n), self.g.at(n)),
            None => (None, 1),
        }
    }

    pub fn canonical_vertex(&self, u: &UltraPoint, x: &Label) -> Result<LaaksoVertex, LaaksoError> {
        for &(index, value) in u.0.digits() {
            let bound = if index >= 1 { self.g.at(index) } else { 1 };
            if u32::from(value) >= bound {
                return Err(LaaksoError::InvalidRange { index, value: value.into(), bound });
            }
        }
        let x = self.tree.canonicalize(x)?;
        Ok(self.canonical_unchecked(u.clone(), x))
    }

    pub fn vertex(&self, spec: &VertexSpec) -> Result<LaaksoVertex, LaaksoError> {
        self.canonical_vertex(&UltraPoint(spec.u.clone()), &spec.x)
    }

    fn canonical_unchecked(&self, mut u: UltraPoint, x: TreeVertex) -> LaaksoVertex {
        if let (Some(n), _) = self.lifts(&x) {
            u.0.set(n, 0);
        }
        LaaksoVertex { u, x }
    }

    pub fn degree(&self, v: &LaaksoVertex) -> usize {
        self.lifts(&v.x).1 as usize * self.tree.tree_degree(&v.x)
    }

    /// Every lift of `u` at the wormhole level of `x`, paired with every tree
    /// neighbor of `x`; sorted.
    pub fn neighbors(&self, v: &LaaksoVertex) -> Vec<LaaksoVertex> {
        let (level, count) = self.lifts(&v.x);
        let ys = self.tree.tree_neighbors(&v.x);
        let mut out = Vec::with_capacity(count as usize * ys.len());
        for j in 0..count {
            let mut u = v.u.clone();
            if let Some(n) = level {
                u.0.set(n, j as u8);
            }
            for y in &ys {
                out.push(self.canonical_unchecked(u.clone(), y.clone()));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn bfs_ball(&self, center: &LaaksoVertex, radius: u32, cap: usize) -> Result<Ball, LaaksoError> {
        let mut ball = Ball::new(center.clone());
        self.extend_ball(&mut ball, radius, cap)?;
        Ok(ball)
    }

    /// Grow `ball` layer by layer to `radius`. On `CapExceeded` the ball
    /// keeps every complete layer and can be resumed with a larger cap.
    pub fn extend_ball(&self, ball: &mut Ball, radius: u32, cap: usize) -> Result<(), LaaksoError> {
        while ball.radius < radius {
            let frontier = &ball.vertices[ball.layer_start[ball.radius as usize]..];
            let expanded: Vec<Vec<LaaksoVertex>> = frontier.par_iter().map(|v| self.neighbors(v)).collect();
            let mut layer = Vec::new();
            let mut seen = FxHashSet::default();
            for w in expanded.into_iter().flatten() {
                if !ball.index.contains_key(&w) && seen.insert(w.clone()) {
                    layer.push(w);
                }
            }
            if ball.vertices.len() + layer.len() > cap {
                return Err(LaaksoError::CapExceeded {
                    center: ball.center.serial(),
                    cap,
                    radius_requested: radius,
                    radius_completed: ball.radius,
                    vertices: ball.vertices.len(),
                });
            }
            ball.layer_start.push(ball.vertices.len());
            for w in layer {
                ball.index.insert(w.clone(), ball.vertices.len() as u32);
                ball.vertices.push(w);
            }
            ball.radius += 1;
        }
        Ok(())
    }

    /// `m_G` of the open ball `{y : d(center, y) < r}`.
    pub fn ball_volume(&self, center: &LaaksoVertex, r: u32, cap: usize) -> Result<u64, LaaksoError> {
        if r == 0 {
            return Ok(0);
        }
        let ball = self.bfs_ball(center, r - 1, cap)?;
        Ok(self.degree_sum(&ball, r - 1))
    }

    /// Degree sum over the vertices of `ball` at distance `<= d`.
    pub fn degree_sum(&self, ball: &Ball, d: u32) -> u64 {
        ball.vertices[..ball.prefix_len(d)].par_iter().map(|v| self.degree(v) as u64).sum()
    }

    pub fn ball_summary(&self, center: &LaaksoVertex, r: u32, cap: usize) -> Result<BallSummary, LaaksoError> {
        let ball = self.bfs_ball(center, r, cap)?;
        let inner = if r == 0 { 0 } else { ball.prefix_len(r - 1) };
        let degree_sum = if r == 0 { 0 } else { self.degree_sum(&ball, r - 1) };
        Ok(BallSummary {
            center: center.clone(),
            radius: r,
            vertex_count: inner,
            degree_sum,
            boundary_size: ball.len() - inner,
        })
    }

    /// Subgraph induced by the closed ball of radius `2^n` around the base point.
    pub fn induced_ball_graph(&self, n: u32, cap: usize) -> Result<InducedBallGraph, LaaksoError> {
        let radius = 1u32.checked_shl(n).filter(|&r| r < u32::MAX / 2).ok_or(LaaksoError::CapExceeded {
            center: LaaksoVertex::base().serial(),
            cap,
            radius_requested: u32::MAX,
            radius_completed: 0,
            vertices: 0,
        })?;
        let local = LocalGraph::new(self, self.bfs_ball(&LaaksoVertex::base(), radius, cap)?);
        let mut order: Vec<(String, usize)> =
            local.ball.vertices.iter().enumerate().map(|(i, v)| (v.serial(), i)).collect();
        order.sort_unstable();
        let mut rank = vec![0usize; order.len()];
        for (r, &(_, i)) in order.iter().enumerate() {
            rank[i] = r;
        }
        let vertices: Vec<LaaksoVertex> = order.iter().map(|&(_, i)| local.ball.vertices[i].clone()).collect();
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (i, &r) in rank.iter().enumerate() {
            adjacency[r] = local.neighbors(i).iter().map(|&j| rank[j as usize]).collect();
            adjacency[r].sort_unstable();
        }
        let degrees = local.degree.iter().enumerate().fold(vec![0; vertices.len()], |mut acc, (i, &d)| {
            acc[rank[i]] = d;
            acc
        });
        Ok(InducedBallGraph { n, base: rank[0], vertices, adjacency, degrees })
    }
}

/// Breadth-first ball, stored in layer order.
#[derive(Debug, Clone)]
pub struct Ball {
    center: LaaksoVertex,
    vertices: Vec<LaaksoVertex>,
    index: FxHashMap<LaaksoVertex, u32>,
    /// `layer_start[d]` is the index of the first vertex at distance `d`.
    layer_start: Vec<usize>,
    radius: u32,
}

impl Ball {
    fn new(center: LaaksoVertex) -> Self {
        let mut index = FxHashMap::default();
        index.insert(center.clone(), 0);
        Ball { vertices: vec![center.clone()], center, index, layer_start: vec![0], radius: 0 }
    }

    pub fn center(&self) -> &LaaksoVertex {
        &self.center
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[LaaksoVertex] {
        &self.vertices
    }

    pub fn index_of(&self, v: &LaaksoVertex) -> Option<usize> {
        self.index.get(v).map(|&i| i as usize)
    }

    /// Graph distance from the center, if within the ball.
    pub fn distance(&self, v: &LaaksoVertex) -> Option<u32> {
        self.index_of(v).map(|i| self.distance_at(i))
    }

    pub fn distance_at(&self, i: usize) -> u32 {
        (self.layer_start.partition_point(|&s| s <= i) - 1) as u32
    }

    /// Number of vertices at distance `<= d`.
    pub fn prefix_len(&self, d: u32) -> usize {
        if d >= self.radius {
            self.vertices.len()
        } else {
            self.layer_start[d as usize + 1]
        }
    }

    /// `(vertex, distance)` in breadth-first order.
    pub fn iter(&self) -> impl Iterator<Item = (&LaaksoVertex, u32)> {
        self.vertices.iter().enumerate().map(|(i, v)| (v, self.distance_at(i)))
    }

    pub fn into_map(self) -> BTreeMap<LaaksoVertex, u32> {
        let dist: Vec<u32> = (0..self.vertices.len()).map(|i| self.distance_at(i)).collect();
        self.vertices.into_iter().zip(dist).collect()
    }
}

/// A ball with its induced adjacency in compressed rows and the full graph
/// degree of every vertex.
#[derive(Debug, Clone)]
pub struct LocalGraph {
    pub ball: Ball,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    pub degree: Vec<u32>,
}

impl LocalGraph {
    pub fn new(graph: &LaaksoGraph, ball: Ball) -> Self {
        let rows: Vec<(u32, Vec<u32>)> = ball
            .vertices
            .par_iter()
            .map(|v| {
                let nbrs = graph.neighbors(v);
                let inside = nbrs.iter().filter_map(|w| ball.index.get(w).copied()).collect();
                (nbrs.len() as u32, inside)
            })
            .collect();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        let mut degree = Vec::with_capacity(rows.len());
        for (d, inside) in rows {
            targets.extend_from_slice(&inside);
            offsets.push(targets.len());
            degree.push(d);
        }
        LocalGraph { ball, offsets, targets, degree }
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    /// Neighbors of vertex `i` inside the ball.
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }
}

#[derive(Debug, Clone)]
pub struct InducedBallGraph {
    pub n: u32,
    /// Sorted by canonical serialization; the position is the vertex id.
    pub vertices: Vec<LaaksoVertex>,
    pub adjacency: Vec<Vec<usize>>,
    /// Degree in the full graph.
    pub degrees: Vec<u32>,
    /// Id of the base point.
    pub base: usize,
}

impl InducedBallGraph {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            out.extend(nbrs.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn write_edges_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["u_id", "v_id"])?;
        for e in self.edges() {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_vertices_csv<W: Write>(&self, graph: &LaaksoGraph, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "u_support", "x_support", "root_distance", "degree"])?;
        for (id, v) in self.vertices.iter().enumerate() {
            w.write_record([
                id.to_string(),
                v.u.0.to_string(),
                v.x.to_string(),
                graph.tree().distance_to_root(&v.x).to_string(),
                self.degrees[id].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
