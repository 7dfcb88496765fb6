//! Empirical observables against their theoretical envelopes.
//!
//! Every check reports the band `[ratio_min, ratio_max]` of
//! empirical/theoretical ratios over its grid. A band passes when its spread
//! is at most the threshold `T` and it lies inside `[1/T, T]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laakso::{LaaksoGraph, LaaksoVertex, LocalGraph};
use crate::params::{psi_b, volume_law, ParamsError};
use crate::profiles::{dyadic, phi, DoublingProfile};
use crate::walk::{
    exact_mean_exit_time, green_partial_sums, simulate_exit_time, ExitTimeRecord, Propagator, RandomStream, SolverOptions, WalkError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-positive value {value} at r = {r}")]
    NonPositive { r: f64, value: f64 },
    #[error("all abscissae are equal")]
    Degenerate,
    #[error("empty grid for {0:?}")]
    EmptyGrid(Quantity),
    #[error("tail trend {trend:.6} is within 1e-3 of 1")]
    Inconclusive { trend: f64 },
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Params(#[from] ParamsError),
}

impl From<crate::laakso::LaaksoError> for VerifyError {
    fn from(e: crate::laakso::LaaksoError) -> Self {
        VerifyError::Walk(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Volume,
    ExitTime,
    HkeUpper,
    HkeLowerNearDiag,
    Green,
    MonteCarlo,
}

/// Ratios observed at one `(center, r)` or `(center, n)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub center_id: String,
    /// Radius `r` or step count `n`.
    pub scale: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub quantity: Quantity,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub spread: f64,
    pub threshold: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Fitted `(c1, c2)` of the off-diagonal upper bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<(f64, f64)>,
    pub grid: Vec<GridPoint>,
}

impl EnvelopeReport {
    pub fn from_grid(quantity: Quantity, grid: Vec<GridPoint>, threshold: f64) -> Result<Self, VerifyError> {
        if grid.is_empty() {
            return Err(VerifyError::EmptyGrid(quantity));
        }
        let ratio_min = grid.iter().map(|p| p.ratio_min).fold(f64::INFINITY, f64::min);
        let ratio_max = grid.iter().map(|p| p.ratio_max).fold(f64::NEG_INFINITY, f64::max);
        let spread = ratio_max / ratio_min;
        let pass = spread <= threshold && ratio_min >= 1.0 / threshold && ratio_max <= threshold;
        Ok(EnvelopeReport { quantity, ratio_min, ratio_max, spread, threshold, pass, delta: None, constants: None, grid })
    }
}

fn single(center_id: &str, scale: f64, ratio: f64) -> GridPoint {
    GridPoint { center_id: center_id.to_string(), scale, ratio_min: ratio, ratio_max: ratio, samples: 1 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// `(log r, log value)`.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares slope of `log value` against `log r`.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ExponentFit, VerifyError> {
    if points.len() < 4 {
        return Err(VerifyError::TooFewPoints(points.len()));
    }
    let mut logs = Vec::with_capacity(points.len());
    for &(r, value) in points {
        if r <= 0.0 || value <= 0.0 {
            return Err(VerifyError::NonPositive { r, value });
        }
        logs.push((r.ln(), value.ln()));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Err(VerifyError::Degenerate);
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(ExponentFit { slope, intercept, stderr, points: logs })
}

/// Degree sums of open balls `B(center, r)` for every radius, with one BFS.
pub fn ball_volumes(graph: &LaaksoGraph, center: &LaaksoVertex, radii: &[u32], cap: usize) -> Result<Vec<u64>, VerifyError> {
    let top = radii.iter().copied().max().unwrap_or(0);
    let ball = graph.bfs_ball(center, top.saturating_sub(1), cap)?;
    Ok(radii.iter().map(|&r| if r == 0 { 0 } else { graph.degree_sum(&ball, r - 1) }).collect())
}

/// `m_G(B(x, r)) / (V_g(r) V_b(r))` over centers and radii.
pub fn check_volume(
    graph: &LaaksoGraph,
    centers: &[LaaksoVertex],
    radii: &[u32],
    threshold: f64,
    cap: usize,
) -> Result<EnvelopeReport, VerifyError> {
    let law = volume_law(graph.branching(), graph.gluing())?;
    let mut grid = Vec::new();
    for center in centers {
        let id = center.content_id();
        for (&r, vol) in radii.iter().zip(ball_volumes(graph, center, radii, cap)?) {
            grid.push(single(&id, f64::from(r), vol as f64 / law.eval(f64::from(r))));
        }
    }
    EnvelopeReport::from_grid(Quantity::Volume, grid, threshold)
}

/// `E_x[τ_{B(x, r)}] / Ψ(r)` over centers and radii.
pub fn check_exit_time(
    graph: &LaaksoGraph,
    centers: &[LaaksoVertex],
    radii: &[u32],
    psi: &DoublingProfile,
    threshold: f64,
    cap: usize,
) -> Result<EnvelopeReport, VerifyError> {
    let mut grid = Vec::new();
    for center in centers {
        let id = center.content_id();
        for &r in radii {
            let rec = exact_mean_exit_time(graph, center, r, cap, &SolverOptions::default())?;
            grid.push(single(&id, f64::from(r), rec.mean / psi.eval(f64::from(r))));
        }
    }
    EnvelopeReport::from_grid(Quantity::ExitTime, grid, threshold)
}

/// Monte Carlo exit times against exact solves. Grid point `i` (centers
/// outer, radii inner) draws from stream `i` of `seed`.
pub fn check_monte_carlo(
    graph: &LaaksoGraph,
    centers: &[LaaksoVertex],
    radii: &[u32],
    trials: u64,
    seed: u64,
    threshold: f64,
    cap: usize,
) -> Result<(EnvelopeReport, Vec<ExitTimeRecord>), VerifyError> {
    let mut grid = Vec::new();
    let mut records = Vec::new();
    let mut stream_index = 0;
    for center in centers {
        let id = center.content_id();
        for &r in radii {
            let exact = exact_mean_exit_time(graph, center, r, cap, &SolverOptions::default())?;
            let mc = simulate_exit_time(graph, center, r, trials, RandomStream { seed, stream_index }, cap)?;
            stream_index += 1;
            grid.push(single(&id, f64::from(r), mc.mean / exact.mean));
            records.push(mc);
        }
    }
    Ok((EnvelopeReport::from_grid(Quantity::MonteCarlo, grid, threshold)?, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HkeOptions {
    /// Near-diagonal width for the lower bound, relative to `Ψ^{-1}(n)`.
    pub delta: f64,
    /// Bulk width for the upper bound, relative to `Ψ^{-1}(n)`.
    pub kappa: f64,
    pub threshold: f64,
}

impl Default for HkeOptions {
    fn default() -> Self {
        HkeOptions { delta: 0.25, kappa: 3.0, threshold: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HkeReports {
    pub lower: EnvelopeReport,
    pub upper: EnvelopeReport,
    /// Lower bands for each width of the sweep.
    pub lower_sweep: Vec<EnvelopeReport>,
    /// `(n, p_n(x, x) + p_{n+1}(x, x))` for each `n`.
    pub diagonal: Vec<(f64, f64)>,
}

/// Widths of the near-diagonal sweep.
pub const DELTA_SWEEP: [f64; 3] = [0.125, 0.25, 0.5];

const CONSTANT_GRID: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

/// Sub-Gaussian heat-kernel bands at `center`.
///
/// Lower: `(p_n + p_{n+1})(x, y) · m(B(x, Ψ^{-1}(n)))` for `d(x, y) <= δ Ψ^{-1}(n)`.
/// Upper: `p_n(x, y) · m(B(x, Ψ^{-1}(n))) · exp(c1 n Φ(c2 d / n))` for
/// `d(x, y) <= κ Ψ^{-1}(n)` and `p_n > 0`, with `(c1, c2)` chosen on a
/// geometric grid to minimize the spread.
pub fn check_hke(
    graph: &LaaksoGraph,
    center: &LaaksoVertex,
    n_values: &[u32],
    psi: &DoublingProfile,
    opts: &HkeOptions,
    cap: usize,
) -> Result<HkeReports, VerifyError> {
    let id = center.content_id();
    let n_max = n_values.iter().copied().max().unwrap_or(0) + 1;
    let widest = DELTA_SWEEP.iter().copied().fold(opts.delta.max(opts.kappa), f64::max);
    let reach = n_values.iter().map(|&n| (widest * psi.inverse(f64::from(n))).floor() as u32).max().unwrap_or(0).min(n_max);
    let radius = n_max.min((n_max + reach).div_ceil(2));
    let local = LocalGraph::new(graph, graph.bfs_ball(center, radius, cap)?);
    let ball = &local.ball;
    let dist: Vec<u32> = (0..local.len()).map(|i| ball.distance_at(i)).collect();

    // densities at every n in n_values and n + 1, for vertices within reach
    let reach_len = ball.prefix_len(reach);
    let mut wanted: Vec<u32> = n_values.iter().flat_map(|&n| [n, n + 1]).collect();
    wanted.sort_unstable();
    wanted.dedup();
    let mut snapshots: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut prop = Propagator::new(&local);
    for &n in &wanted {
        while prop.steps() < n {
            prop.step();
        }
        snapshots.insert(n, (0..reach_len).map(|i| prop.density(i)).collect());
    }

    let mass_below = |r: f64| -> f64 {
        // open ball of real radius r
        let inner = (r.ceil() as u32).saturating_sub(1);
        if r <= 0.0 {
            return 0.0;
        }
        local.degree[..ball.prefix_len(inner)].iter().map(|&d| f64::from(d)).sum()
    };

    let lower_band = |delta: f64| -> Result<EnvelopeReport, VerifyError> {
        let mut grid = Vec::new();
        for &n in n_values {
            let scale = psi.inverse(f64::from(n));
            let m = mass_below(scale);
            let (p, q) = (&snapshots[&n], &snapshots[&(n + 1)]);
            let within = ball.prefix_len((delta * scale).floor() as u32).min(reach_len);
            let ratios = (0..within).map(|i| (p[i] + q[i]) * m);
            let (lo, hi) = ratios.fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r), b.max(r)));
            grid.push(GridPoint { center_id: id.clone(), scale: f64::from(n), ratio_min: lo, ratio_max: hi, samples: within });
        }
        let mut report = EnvelopeReport::from_grid(Quantity::HkeLowerNearDiag, grid, opts.threshold)?;
        report.delta = Some(delta);
        Ok(report)
    };
    let lower = lower_band(opts.delta)?;
    let lower_sweep = DELTA_SWEEP.iter().map(|&d| lower_band(d)).collect::<Result<Vec<_>, _>>()?;

    // group the upper-bound samples by (n, d): the fitted factor only depends on d / n
    let mut groups: Vec<(u32, u32, f64, f64)> = Vec::new();
    for &n in n_values {
        let scale = psi.inverse(f64::from(n));
        let m = mass_below(scale);
        let p = &snapshots[&n];
        let within = ball.prefix_len((opts.kappa * scale).floor() as u32).min(reach_len);
        let mut by_distance: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        for i in 0..within {
            if p[i] > 0.0 {
                let e = by_distance.entry(dist[i]).or_insert((f64::INFINITY, 0.0));
                e.0 = e.0.min(p[i] * m);
                e.1 = e.1.max(p[i] * m);
            }
        }
        groups.extend(by_distance.into_iter().map(|(d, (lo, hi))| (n, d, lo, hi)));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for &c2 in &CONSTANT_GRID {
        let phis: Vec<f64> = groups.iter().map(|&(n, d, _, _)| phi(psi, c2 * f64::from(d) / f64::from(n), 1.0)).collect();
        for &c1 in &CONSTANT_GRID {
            let (lo, hi) = groups.iter().zip(&phis).fold((f64::INFINITY, 0.0f64), |(a, b), (&(n, _, l, h), &ph)| {
                let w = (c1 * f64::from(n) * ph).exp();
                (a.min(l * w), b.max(h * w))
            });
            let spread = hi / lo;
            if best.is_none_or(|(s, _, _)| spread < s) {
                best = Some((spread, c1, c2));
            }
        }
    }
    let (_, c1, c2) = best.ok_or(VerifyError::EmptyGrid(Quantity::HkeUpper))?;
    let mut grid = Vec::new();
    for &n in n_values {
        let (mut lo, mut hi, mut samples) = (f64::INFINITY, 0.0f64, 0);
        for &(gn, d, l, h) in groups.iter().filter(|g| g.0 == n) {
            let w = (c1 * f64::from(gn) * phi(psi, c2 * f64::from(d) / f64::from(gn), 1.0)).exp();
            lo = lo.min(l * w);
            hi = hi.max(h * w);
            samples += 1;
        }
        grid.push(GridPoint { center_id: id.clone(), scale: f64::from(n), ratio_min: lo, ratio_max: hi, samples });
    }
    let mut upper = EnvelopeReport::from_grid(Quantity::HkeUpper, grid, opts.threshold)?;
    upper.constants = Some((c1, c2));
    let diagonal = n_values.iter().map(|&n| (f64::from(n), snapshots[&n][0] + snapshots[&(n + 1)][0])).collect();
    Ok(HkeReports { lower, upper, lower_sweep, diagonal })
}

/// `1 + ∫_1^R Ψ(s) / (s V(s)) ds`, trapezoid rule in `log s`.
pub fn green_integral(volume: &DoublingProfile, psi: &DoublingProfile, upper: f64) -> f64 {
    if upper <= 1.0 {
        return 1.0;
    }
    let steps = ((upper.log2() * 64.0).ceil() as usize).max(1);
    let h = upper.ln() / steps as f64;
    let f = |t: f64| {
        let s = t.exp();
        psi.eval(s) / volume.eval(s)
    };
    let mut sum = 0.5 * (f(0.0) + f(upper.ln()));
    for i in 1..steps {
        sum += f(i as f64 * h);
    }
    1.0 + sum * h
}

/// `Σ_{k<=n} p_k(x, x)` against `1 + ∫_1^{Ψ^{-1}(n)} Ψ(s) / (s V(s)) ds`.
pub fn check_green(
    graph: &LaaksoGraph,
    center: &LaaksoVertex,
    n_values: &[u32],
    psi: &DoublingProfile,
    threshold: f64,
    cap: usize,
) -> Result<EnvelopeReport, VerifyError> {
    let volume = volume_law(graph.branching(), graph.gluing())?;
    let n_max = n_values.iter().copied().max().unwrap_or(0);
    let sums = green_partial_sums(graph, center, center, n_max, cap)?;
    let id = center.content_id();
    let grid = n_values
        .iter()
        .map(|&n| single(&id, f64::from(n), sums[n as usize] / green_integral(&volume, psi, psi.inverse(f64::from(n)))))
        .collect();
    EnvelopeReport::from_grid(Quantity::Green, grid, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transience {
    Recurrent,
    Transient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransienceReport {
    pub class: Transience,
    /// Geometric per-doubling trend of `Ψ(2^k) / V(2^k)` over the tail.
    pub trend: f64,
    /// `∫_1^{2^k_max} Ψ(s) / (s V(s)) ds`.
    pub integral: f64,
}

/// Transient iff `∫_1^∞ Ψ(s) / (s V(s)) ds < ∞`, decided by the tail trend of
/// the dyadic integrand over `[2^{k_max/2}, 2^k_max]`.
pub fn classify_transience(volume: &DoublingProfile, psi: &DoublingProfile, k_max: i32) -> Result<TransienceReport, VerifyError> {
    let k_max = k_max.max(2);
    let k_lo = k_max / 2;
    let term = |k: i32| psi.eval(dyadic(k)) / volume.eval(dyadic(k));
    let trend = (term(k_max) / term(k_lo)).powf(1.0 / f64::from(k_max - k_lo));
    let integral = green_integral(volume, psi, dyadic(k_max)) - 1.0;
    if (trend - 1.0).abs() <= 1e-3 {
        return Err(VerifyError::Inconclusive { trend });
    }
    let class = if trend < 1.0 { Transience::Transient } else { Transience::Recurrent };
    Ok(TransienceReport { class, trend, integral })
}

/// `Ψ_b`, the scale function paired with `G(g, b)`.
pub fn scale_function(graph: &LaaksoGraph) -> Result<DoublingProfile, VerifyError> {
    Ok(psi_b(graph.branching())?)
}
