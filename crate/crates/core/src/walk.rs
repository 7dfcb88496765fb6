//! Simple random walk on `G(g, b)`: heat kernel by exact propagation, mean
//! exit times by linear solve or Monte Carlo, and Green-function partial sums.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laakso::{LaaksoError, LaaksoGraph, LaaksoVertex, LocalGraph};
use crate::params::GluingFunction;

/// Smallest trial count accepted by [`simulate_exit_time`].
pub const MIN_TRIALS: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error(transparent)]
    Laakso(#[from] LaaksoError),
    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("need at least {MIN_TRIALS} trials, got {0}")]
    TooFewTrials(u64),
}

/// Finitely supported probability distribution over vertices.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Distribution {
    pub mass: BTreeMap<LaaksoVertex, f64>,
}

impl Distribution {
    pub fn point(v: LaaksoVertex) -> Self {
        Distribution { mass: BTreeMap::from([(v, 1.0)]) }
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn get(&self, v: &LaaksoVertex) -> f64 {
        self.mass.get(v).copied().unwrap_or(0.0)
    }
}

/// One step of the walk: `d'(y) = Σ_{x ~ y} d(x) / deg(x)`.
pub fn step_distribution(graph: &LaaksoGraph, d: &Distribution) -> Distribution {
    let mut mass = BTreeMap::new();
    for (x, &m) in &d.mass {
        let nbrs = graph.neighbors(x);
        let share = m / nbrs.len() as f64;
        for y in nbrs {
            *mass.entry(y).or_insert(0.0) += share;
        }
    }
    Distribution { mass }
}

/// Exact transition probabilities on a ball, started at its center.
///
/// Mass that steps out of the ball is dropped, so values are exact for
/// every `y` at distance `D` and step `n` with `2 R >= n + D - 1`.
pub struct Propagator<'a> {
    local: &'a LocalGraph,
    cur: Vec<f64>,
    next: Vec<f64>,
    steps: u32,
}

impl<'a> Propagator<'a> {
    pub fn new(local: &'a LocalGraph) -> Self {
        let mut cur = vec![0.0; local.len()];
        cur[0] = 1.0;
        Propagator { local, cur, next: vec![0.0; local.len()], steps: 0 }
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// `P_n(center, ·)` indexed like the ball.
    pub fn probabilities(&self) -> &[f64] {
        &self.cur
    }

    /// `p_n(center, y) = P_n(center, y) / deg(y)`.
    pub fn density(&self, i: usize) -> f64 {
        self.cur[i] / f64::from(self.local.degree[i])
    }

    pub fn step(&mut self) {
        // after n steps the support lies within distance n
        let live = self.local.ball.prefix_len(self.steps + 1);
        let (local, cur) = (self.local, &self.cur);
        self.next[..live].par_iter_mut().enumerate().for_each(|(y, out)| {
            *out = local.neighbors(y).iter().map(|&x| cur[x as usize] / f64::from(local.degree[x as usize])).sum();
        });
        std::mem::swap(&mut self.cur, &mut self.next);
        self.steps += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatKernelRecord {
    pub n: u32,
    pub x: LaaksoVertex,
    pub y: LaaksoVertex,
    pub p_n: f64,
    pub p_n_plus_1: f64,
}

/// Ball around `x` large enough for exact `p_n(x, y)`, `n <= n_max`, at every target.
fn kernel_ball(graph: &LaaksoGraph, x: &LaaksoVertex, n_max: u32, targets: &[LaaksoVertex], cap: usize) -> Result<LocalGraph, WalkError> {
    let mut ball = graph.bfs_ball(x, 0, cap)?;
    while ball.radius() < n_max && targets.iter().any(|y| ball.distance(y).is_none()) {
        let next = ball.radius() + 1;
        graph.extend_ball(&mut ball, next, cap)?;
    }
    let reach = targets.iter().filter_map(|y| ball.distance(y)).max().unwrap_or(0);
    let radius = n_max.min((n_max + reach).div_ceil(2));
    graph.extend_ball(&mut ball, radius, cap)?;
    Ok(LocalGraph::new(graph, ball))
}

/// `p_n(x, y)` and `p_{n+1}(x, y)` for `n = 0..=n_max` and every target.
pub fn heat_kernel(
    graph: &LaaksoGraph,
    x: &LaaksoVertex,
    n_max: u32,
    targets: &[LaaksoVertex],
    cap: usize,
) -> Result<Vec<HeatKernelRecord>, WalkError> {
    let local = kernel_ball(graph, x, n_max + 1, targets, cap)?;
    let slots: Vec<Option<usize>> = targets.iter().map(|y| local.ball.index_of(y)).collect();
    let mut series = vec![Vec::with_capacity(n_max as usize + 2); targets.len()];
    let mut prop = Propagator::new(&local);
    loop {
        for (s, slot) in series.iter_mut().zip(&slots) {
            s.push(slot.map_or(0.0, |i| prop.density(i)));
        }
        if prop.steps() > n_max {
            break;
        }
        prop.step();
    }
    let mut out = Vec::with_capacity(targets.len() * (n_max as usize + 1));
    for n in 0..=n_max as usize {
        for (y, s) in targets.iter().zip(&series) {
            out.push(HeatKernelRecord { n: n as u32, x: x.clone(), y: y.clone(), p_n: s[n], p_n_plus_1: s[n + 1] });
        }
    }
    Ok(out)
}

/// On-diagonal `p_n(p, p)`, `n = 0..=n_max`, at the base point when `b ≡ 2`.
///
/// The tree projection is the reflected walk on `{0, 1, 2, ...}`. Each
/// ultrametric digit `u(k)` is uniform once the walk has reached position
/// `2^k`, so a path returns to `p` with probability `Π 1/g(k)` over the
/// levels its maximum passed. The state is (position, levels passed).
pub fn spine_return_probabilities(g: &GluingFunction, n_max: u32) -> Vec<f64> {
    let half = n_max as usize / 2 + 1;
    let levels = (usize::BITS - half.leading_zeros()) as usize + 1;
    let mut cur = vec![vec![0.0f64; half + 1]; levels + 1];
    let mut next = cur.clone();
    cur[0][0] = 1.0;
    let mut out = Vec::with_capacity(n_max as usize + 1);
    for _ in 0..=n_max {
        out.push(cur.iter().map(|row| row[0]).sum());
        for row in next.iter_mut() {
            row.fill(0.0);
        }
        for (level, row) in cur.iter().enumerate() {
            for (pos, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                if pos == 0 {
                    next[level][1] += w;
                    continue;
                }
                next[level][pos - 1] += 0.5 * w;
                let up = pos + 1;
                if up > half {
                    // cannot return within n_max steps
                    continue;
                }
                if up == 1 << (level + 1) {
                    next[level + 1][up] += 0.5 * w / f64::from(g.at(level as i32 + 1));
                } else {
                    next[level][up] += 0.5 * w;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    out
}

fn spine_applies(graph: &LaaksoGraph, x: &LaaksoVertex, y: &LaaksoVertex) -> bool {
    let b = graph.branching();
    b.inf() == 2 && b.sup() == 2 && *x == LaaksoVertex::base() && *y == LaaksoVertex::base()
}

/// Partial sums `Σ_{k<=n} p_k(x, y)` for `n = 0..=n_max`.
pub fn green_partial_sums(
    graph: &LaaksoGraph,
    x: &LaaksoVertex,
    y: &LaaksoVertex,
    n_max: u32,
    cap: usize,
) -> Result<Vec<f64>, WalkError> {
    let terms: Vec<f64> = if spine_applies(graph, x, y) {
        spine_return_probabilities(graph.gluing(), n_max)
    } else {
        let local = kernel_ball(graph, x, n_max, std::slice::from_ref(y), cap)?;
        let slot = local.ball.index_of(y);
        let mut prop = Propagator::new(&local);
        let mut terms = Vec::with_capacity(n_max as usize + 1);
        loop {
            terms.push(slot.map_or(0.0, |i| prop.density(i)));
            if prop.steps() == n_max {
                break;
            }
            prop.step();
        }
        terms
    };
    Ok(terms
        .iter()
        .scan(0.0, |acc, &t| {
            *acc += t;
            Some(*acc)
        })
        .collect())
}

/// `Σ_{n=0}^{n_max} p_n(x, y)`.
pub fn green_partial(graph: &LaaksoGraph, x: &LaaksoVertex, y: &LaaksoVertex, n_max: u32, cap: usize) -> Result<f64, WalkError> {
    Ok(*green_partial_sums(graph, x, y, n_max, cap)?.last().expect("n_max + 1 terms"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitTimeRecord {
    pub center: LaaksoVertex,
    pub radius: u32,
    pub mean: f64,
    /// 95% normal-approximation half-width; 0 for exact solves.
    pub half_width: f64,
    pub trials: u64,
    pub method: ExitMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when `max |h - 1 - mean_{y~x} h(y)| <= tolerance · max(1, max h)`.
    pub tolerance: f64,
    /// Iteration limit; `None` means `10 · size + 1000`.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-10, max_iterations: None }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `E_center[τ]` for the open ball of radius `r`, by Jacobi-preconditioned
/// conjugate gradients on `(D - A) h = deg` with `h = 0` off the ball.
pub fn exact_mean_exit_time(
    graph: &LaaksoGraph,
    center: &LaaksoVertex,
    radius: u32,
    cap: usize,
    opts: &SolverOptions,
) -> Result<ExitTimeRecord, WalkError> {
    let record = |mean| ExitTimeRecord { center: center.clone(), radius, mean, half_width: 0.0, trials: 0, method: ExitMethod::Exact };
    if radius == 0 {
        return Ok(record(0.0));
    }
    let local = LocalGraph::new(graph, graph.bfs_ball(center, radius - 1, cap)?);
    let deg: Vec<f64> = local.degree.iter().map(|&d| f64::from(d)).collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            *o = deg[i] * v[i] - local.neighbors(i).iter().map(|&j| v[j as usize]).sum::<f64>();
        });
    };
    let n = local.len();
    let max_iter = opts.max_iterations.unwrap_or(10 * n + 1000);
    let mut h = vec![0.0f64; n];
    let mut res = deg.clone();
    let mut z: Vec<f64> = res.iter().zip(&deg).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&res, &z);
    let mut scaled = f64::INFINITY;
    for iteration in 0..=max_iter {
        let h_max = h.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        scaled = res.iter().zip(&deg).fold(0.0f64, |m, (r, d)| m.max((r / d).abs()));
        if scaled <= opts.tolerance * h_max.max(1.0) {
            return Ok(record(h[0]));
        }
        if iteration == max_iter {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            h[i] += alpha * p[i];
            res[i] -= alpha * ap[i];
            z[i] = res[i] / deg[i];
        }
        let rz_next = dot(&res, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(WalkError::NoConvergence { iterations: max_iter, residual: scaled })
}

/// Counter-based random source: `(seed, stream_index)` keys a ChaCha8
/// generator and each trial reads its own stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RandomStream {
    pub fn trial_rng(&self, trial: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_index.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(trial);
        rng
    }
}

/// Monte Carlo `E_center[τ]`: first `n` with `d(center, Y_n) >= radius`.
/// Trials run in parallel; the result does not depend on the thread count.
pub fn simulate_exit_time(
    graph: &LaaksoGraph,
    center: &LaaksoVertex,
    radius: u32,
    trials: u64,
    stream: RandomStream,
    cap: usize,
) -> Result<ExitTimeRecord, WalkError> {
    if trials < MIN_TRIALS {
        return Err(WalkError::TooFewTrials(trials));
    }
    let record = |mean, half_width| ExitTimeRecord {
        center: center.clone(),
        radius,
        mean,
        half_width,
        trials,
        method: ExitMethod::MonteCarlo,
    };
    if radius == 0 {
        return Ok(record(0.0, 0.0));
    }
    let local = LocalGraph::new(graph, graph.bfs_ball(center, radius, cap)?);
    let inside = local.ball.prefix_len(radius - 1);
    let steps: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.trial_rng(t);
            let (mut at, mut n) = (0usize, 0u64);
            while at < inside {
                let nbrs = local.neighbors(at);
                at = nbrs[rng.random_range(0..nbrs.len())] as usize;
                n += 1;
            }
            n
        })
        .collect();
    let sum: u128 = steps.iter().map(|&s| u128::from(s)).sum();
    let sum_sq: u128 = steps.iter().map(|&s| u128::from(s) * u128::from(s)).sum();
    let count = u128::from(trials);
    let mean = sum as f64 / trials as f64;
    let variance = (count * sum_sq - sum * sum) as f64 / (count * (count - 1)) as f64;
    Ok(record(mean, 1.96 * (variance / trials as f64).sqrt()))
}
