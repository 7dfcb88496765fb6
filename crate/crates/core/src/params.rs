//! Branching function `b` and gluing function `g`, their volume and scale
//! profiles, and the greedy fit of `(b, g)` to a target pair `(V, Ψ)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::{check_admissible, doubling_constant, dyadic, AdmissibilityReport, DoublingProfile};

/// Largest parameter value the label encoding supports (digits are `u8`).
pub const MAX_PARAM_VALUE: u32 = 256;

/// Integer-valued function on `Z`, given on a window and extended by constants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamFunction {
    pub k_lo: i32,
    pub k_hi: i32,
    pub values: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub below: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub above: Option<u32>,
    #[serde(default)]
    pub graph_mode: bool,
}

impl ParamFunction {
    fn at_with_default(&self, k: i32, below_default: u32) -> u32 {
        if k < self.k_lo {
            self.below.unwrap_or(below_default)
        } else if k > self.k_hi {
            self.above.unwrap_or_else(|| *self.values.last().expect("non-empty window"))
        } else {
            self.values[(k - self.k_lo) as usize]
        }
    }

    fn window_ok(&self) -> bool {
        !self.values.is_empty() && i64::from(self.k_hi) - i64::from(self.k_lo) + 1 == self.values.len() as i64
    }
}

macro_rules! param_newtype {
    ($name:ident, $below:expr, $min:expr, $graph_value:expr) => {
        #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub ParamFunction);

        impl $name {
            pub const MIN: u32 = $min;
            pub const GRAPH_VALUE: u32 = $graph_value;

            pub fn new(k_lo: i32, values: Vec<u32>, graph_mode: bool) -> Self {
                let k_hi = k_lo + values.len() as i32 - 1;
                $name(ParamFunction { k_lo, k_hi, values, below: None, above: None, graph_mode })
            }

            /// `f(k) = value` for `k >= 1`; in graph mode the graph value below.
            pub fn constant(value: u32, graph_mode: bool) -> Self {
                let mut f = Self::new(1, vec![value], graph_mode);
                if !graph_mode {
                    f.0.below = Some(value);
                }
                f
            }

            pub fn at(&self, k: i32) -> u32 {
                self.0.at_with_default(k, $below)
            }

            pub fn graph_mode(&self) -> bool {
                self.0.graph_mode
            }

            pub fn window(&self) -> (i32, i32) {
                (self.0.k_lo, self.0.k_hi)
            }

            /// Largest value taken anywhere on `Z`.
            pub fn sup(&self) -> u32 {
                let mut m = self.0.values.iter().copied().max().unwrap_or(0);
                m = m.max(self.at(self.0.k_lo - 1)).max(self.at(self.0.k_hi + 1));
                m
            }

            pub fn inf(&self) -> u32 {
                let mut m = self.0.values.iter().copied().min().unwrap_or(u32::MAX);
                m = m.min(self.at(self.0.k_lo - 1)).min(self.at(self.0.k_hi + 1));
                m
            }
        }
    };
}

param_newtype!(BranchingFunction, 2, 2, 2);
param_newtype!(GluingFunction, 1, 1, 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Branching,
    Gluing,
}

/// Where a parameter function fails its invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Value below the minimum (2 for `b`, 1 for `g`) or above the encodable maximum.
    Range { value: u32 },
    /// Graph mode requires `b(k) = 2`, `g(k) = 1` for `k <= 0`.
    GraphMode { value: u32 },
    /// Window bounds do not match the number of values.
    Window,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub function: Which,
    /// Offending index; `None` when the constant extension below the window is at fault.
    pub k: Option<i32>,
    pub kind: ViolationKind,
}

fn check_function(
    which: Which,
    f: &ParamFunction,
    at: impl Fn(i32) -> u32,
    min: u32,
    graph_value: u32,
    graph_mode: bool,
    out: &mut Vec<Violation>,
) {
    if !f.window_ok() {
        out.push(Violation { function: which, k: None, kind: ViolationKind::Window });
        return;
    }
    let mut sites: Vec<(Option<i32>, u32)> = (f.k_lo..=f.k_hi).map(|k| (Some(k), at(k))).collect();
    // the default extensions are valid or repeat a window value
    if f.below.is_some() {
        sites.insert(0, (None, at(f.k_lo - 1)));
    }
    if f.above.is_some() {
        sites.push((Some(f.k_hi + 1), at(f.k_hi + 1)));
    }
    for (k, value) in sites {
        if value < min || value > MAX_PARAM_VALUE {
            out.push(Violation { function: which, k, kind: ViolationKind::Range { value } });
        }
        let nonpositive = k.is_none_or(|k| k <= 0);
        if graph_mode && nonpositive && value != graph_value {
            out.push(Violation { function: which, k, kind: ViolationKind::GraphMode { value } });
        }
    }
}

/// All invariant violations of the pair; empty iff valid.
pub fn validate(b: &BranchingFunction, g: &GluingFunction, graph_mode: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    check_function(Which::Branching, &b.0, |k| b.at(k), 2, 2, graph_mode || b.graph_mode(), &mut out);
    check_function(Which::Gluing, &g.0, |k| g.at(k), 1, 1, graph_mode || g.graph_mode(), &mut out);
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("volume product overflows at n = {0}")]
    Overflow(i32),
    #[error("target pair is not admissible: {0:?}")]
    NotAdmissible(AdmissibilityReport),
    #[error("{which:?} tracking error {error:.4} exceeds bound {bound:.4}; raise the parameter maximum")]
    TargetOutOfRange { which: Which, error: f64, bound: f64 },
    #[error("invalid fit options: {0}")]
    BadOptions(String),
}

/// Exact `V_f(2^n)` as a rational `num/den`.
fn volume_anchor(at: &impl Fn(i32) -> u32, n: i32) -> Result<(u128, u128), ParamsError> {
    let mut prod: u128 = 1;
    let range: Box<dyn Iterator<Item = i32>> = if n <= 0 { Box::new(n..=0) } else { Box::new(1..n) };
    for k in range {
        prod = prod.checked_mul(u128::from(at(k))).ok_or(ParamsError::Overflow(n))?;
    }
    Ok(if n <= 0 { (1, prod) } else { (prod, 1) })
}

fn counts_profile(at: impl Fn(i32) -> u32, k_lo: i32, k_hi: i32, scale_by_r: bool) -> Result<DoublingProfile, ParamsError> {
    // two extra anchors on each side so that the boundary ratios equal the
    // constant extensions of the parameter function
    let (n_lo, n_hi) = (k_lo.min(0) - 2, k_hi.max(1) + 2);
    let mut values = Vec::with_capacity((n_hi - n_lo + 1) as usize);
    for n in n_lo..=n_hi {
        let (num, den) = volume_anchor(&at, n)?;
        let v = num as f64 / den as f64;
        values.push(if scale_by_r { v * dyadic(n) } else { v });
    }
    Ok(DoublingProfile::table(n_lo, values).expect("products of parameters are positive and nondecreasing"))
}

/// `V_b`: the ball-measure profile of the ultrametric index set built from `b`.
pub fn v_from_branching(b: &BranchingFunction) -> Result<DoublingProfile, ParamsError> {
    counts_profile(|k| b.at(k), b.0.k_lo, b.0.k_hi, false)
}

/// `V_g`, as [`v_from_branching`].
pub fn v_from_gluing(g: &GluingFunction) -> Result<DoublingProfile, ParamsError> {
    counts_profile(|k| g.at(k), g.0.k_lo, g.0.k_hi, false)
}

/// `Ψ_b(2^n) = 2^n V_b(2^n)`, linear between dyadic anchors.
pub fn psi_b(b: &BranchingFunction) -> Result<DoublingProfile, ParamsError> {
    counts_profile(|k| b.at(k), b.0.k_lo, b.0.k_hi, true)
}

/// `V_g · V_b`, the volume law of the Laakso-type graph.
pub fn volume_law(b: &BranchingFunction, g: &GluingFunction) -> Result<DoublingProfile, ParamsError> {
    Ok(v_from_gluing(g)?.product(&v_from_branching(b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub k_max: i32,
    pub b_max: u32,
    pub g_max: u32,
    /// Admissibility constant required of the target pair on `[1, 2^k_max]`.
    pub c0: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { k_max: 20, b_max: 8, g_max: 8, c0: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub b: BranchingFunction,
    pub g: GluingFunction,
    /// `max_n |log(Ψ_b(2^n) / Ψ(2^n))|` over `n ∈ [0, k_max + 1]`.
    pub psi_log_error: f64,
    /// `max_n |log(V_g(2^n) V_b(2^n) / V(2^n))|` over the same range.
    pub vol_log_error: f64,
}

fn argmin_log(range: std::ops::RangeInclusive<u32>, current: f64, target: f64, step: impl Fn(u32) -> f64) -> u32 {
    let mut best = (*range.start(), f64::INFINITY);
    for c in range {
        let err = ((current * step(c)).ln() - target.ln()).abs();
        // strict comparison keeps the smaller integer on ties
        if err < best.1 {
            best = (c, err);
        }
    }
    best.0
}

/// Greedy multiplicative tracking of `(V, Ψ)` by `(V_g V_b, Ψ_b)`.
///
/// Both targets are normalized to agree with the construction at `r = 2`;
/// for `n = 1..=k_max`, `b(n)` is chosen to track `Ψ(2^{n+1})` and then
/// `g(n)` to track `V(2^{n+1})`. The achieved errors are reported and checked
/// against `log(2 B_max) + log D_Ψ` (resp. `log(B_max G_max) + log D_V`).
pub fn fit_params(volume: &DoublingProfile, psi: &DoublingProfile, opts: &FitOptions) -> Result<FitResult, ParamsError> {
    if opts.k_max < 1 || opts.b_max < 2 || opts.g_max < 1 || opts.b_max > MAX_PARAM_VALUE || opts.g_max > MAX_PARAM_VALUE {
        return Err(ParamsError::BadOptions(format!("{opts:?}")));
    }
    let report = check_admissible(volume, psi, opts.c0, 0, opts.k_max);
    if !report.admissible {
        return Err(ParamsError::NotAdmissible(report));
    }
    let psi_norm = 2.0 / psi.eval(2.0);
    let vol_norm = 1.0 / volume.eval(2.0);

    let mut bs = Vec::with_capacity(opts.k_max as usize);
    let mut gs = Vec::with_capacity(opts.k_max as usize);
    let (mut psi_cur, mut vol_cur) = (2.0_f64, 1.0_f64);
    let (mut psi_track, mut vol_track) = (0.0_f64, 0.0_f64);
    for n in 1..=opts.k_max {
        let r_next = dyadic(n + 1);
        let psi_target = psi.eval(r_next) * psi_norm;
        let b = argmin_log(2..=opts.b_max, psi_cur, psi_target, |b| 2.0 * f64::from(b));
        psi_cur *= 2.0 * f64::from(b);
        psi_track = psi_track.max((psi_cur / psi_target).ln().abs());

        let vol_target = volume.eval(r_next) * vol_norm;
        let g = argmin_log(1..=opts.g_max, vol_cur * f64::from(b), vol_target, f64::from);
        vol_cur *= f64::from(b) * f64::from(g);
        vol_track = vol_track.max((vol_cur / vol_target).ln().abs());
        bs.push(b);
        gs.push(g);
    }

    let psi_bound = (2.0 * f64::from(opts.b_max)).ln() + doubling_constant(psi, 0, opts.k_max + 1).ln();
    if psi_track > psi_bound {
        return Err(ParamsError::TargetOutOfRange { which: Which::Branching, error: psi_track, bound: psi_bound });
    }
    let vol_bound = f64::from(opts.b_max * opts.g_max).ln() + doubling_constant(volume, 0, opts.k_max + 1).ln();
    if vol_track > vol_bound {
        return Err(ParamsError::TargetOutOfRange { which: Which::Gluing, error: vol_track, bound: vol_bound });
    }

    let b = BranchingFunction::new(1, bs, true);
    let g = GluingFunction::new(1, gs, true);
    let (psi_fit, vol_fit) = (psi_b(&b)?, volume_law(&b, &g)?);
    let mut psi_log_error = 0.0_f64;
    let mut vol_log_error = 0.0_f64;
    for n in 0..=opts.k_max + 1 {
        let r = dyadic(n);
        psi_log_error = psi_log_error.max((psi_fit.eval(r) / psi.eval(r)).ln().abs());
        vol_log_error = vol_log_error.max((vol_fit.eval(r) / volume.eval(r)).ln().abs());
    }
    Ok(FitResult { b, g, psi_log_error, vol_log_error })
}
