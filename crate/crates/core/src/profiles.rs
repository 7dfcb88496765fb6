//! Doubling profiles for volume growth `V` and escape time `Ψ`.
//!
//! A profile is either a power law `r^e` or a table of anchor values at the
//! dyadic points `2^k`, `k ∈ [k_lo, k_hi]`, interpolated linearly between
//! consecutive anchors. Outside the table window the anchors continue
//! geometrically with the boundary ratio, so the doubling constant of the
//! extension equals the one on the window.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("power-law exponent must be positive and finite, got {0}")]
    BadExponent(f64),
    #[error("table needs at least two anchors, got {0}")]
    TooFewAnchors(usize),
    #[error("table window [{k_lo}, {k_hi}] does not match {len} values")]
    WindowMismatch { k_lo: i32, k_hi: i32, len: usize },
    #[error("anchor values must be positive, finite and nondecreasing (index {0})")]
    BadAnchor(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawProfile {
    Power { exponent: f64 },
    Table { k_lo: i32, k_hi: i32, values: Vec<f64> },
}

/// A positive nondecreasing doubling function evaluable at any `r > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile", into = "RawProfile")]
pub enum DoublingProfile {
    Power { exponent: f64 },
    Table { k_lo: i32, values: Vec<f64> },
}

impl TryFrom<RawProfile> for DoublingProfile {
    type Error = ProfileError;

    fn try_from(raw: RawProfile) -> Result<Self, Self::Error> {
        match raw {
            RawProfile::Power { exponent } => DoublingProfile::power(exponent),
            RawProfile::Table { k_lo, k_hi, values } => {
                if i64::from(k_hi) - i64::from(k_lo) + 1 != values.len() as i64 {
                    return Err(ProfileError::WindowMismatch { k_lo, k_hi, len: values.len() });
                }
                DoublingProfile::table(k_lo, values)
            }
        }
    }
}

impl From<DoublingProfile> for RawProfile {
    fn from(p: DoublingProfile) -> Self {
        match p {
            DoublingProfile::Power { exponent } => RawProfile::Power { exponent },
            DoublingProfile::Table { k_lo, values } => RawProfile::Table {
                k_lo,
                k_hi: k_lo + values.len() as i32 - 1,
                values,
            },
        }
    }
}

/// `2^k` as an exact float.
pub(crate) fn dyadic(k: i32) -> f64 {
    2f64.powi(k)
}

/// The integer `k` with `2^k <= r < 2^{k+1}`.
pub(crate) fn dyadic_floor(r: f64) -> i32 {
    let mut k = r.log2().floor() as i32;
    while dyadic(k) > r {
        k -= 1;
    }
    while dyadic(k + 1) <= r {
        k += 1;
    }
    k
}

impl DoublingProfile {
    pub fn power(exponent: f64) -> Result<Self, ProfileError> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(ProfileError::BadExponent(exponent));
        }
        Ok(DoublingProfile::Power { exponent })
    }

    /// Anchors `values[i]` at `r = 2^(k_lo + i)`.
    pub fn table(k_lo: i32, values: Vec<f64>) -> Result<Self, ProfileError> {
        if values.len() < 2 {
            return Err(ProfileError::TooFewAnchors(values.len()));
        }
        for (i, v) in values.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) || (i > 0 && *v < values[i - 1]) {
                return Err(ProfileError::BadAnchor(i));
            }
        }
        Ok(DoublingProfile::Table { k_lo, values })
    }

    /// Dyadic window of a table profile; `None` for power laws.
    pub fn window(&self) -> Option<(i32, i32)> {
        match self {
            DoublingProfile::Power { .. } => None,
            DoublingProfile::Table { k_lo, values } => Some((*k_lo, *k_lo + values.len() as i32 - 1)),
        }
    }

    /// Value at `r = 2^k`, including the geometric continuation outside the window.
    pub fn anchor(&self, k: i32) -> f64 {
        match self {
            DoublingProfile::Power { exponent } => (f64::from(k) * exponent).exp2(),
            DoublingProfile::Table { k_lo, values } => {
                let k_hi = *k_lo + values.len() as i32 - 1;
                let n = values.len();
                if k < *k_lo {
                    let ratio = values[1] / values[0];
                    values[0] * ratio.powi(k - *k_lo)
                } else if k > k_hi {
                    let ratio = values[n - 1] / values[n - 2];
                    values[n - 1] * ratio.powi(k - k_hi)
                } else {
                    values[(k - *k_lo) as usize]
                }
            }
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        debug_assert!(r > 0.0, "profiles are evaluated on r > 0");
        match self {
            DoublingProfile::Power { exponent } => r.powf(*exponent),
            DoublingProfile::Table { .. } => {
                let k = dyadic_floor(r);
                let lo = dyadic(k);
                let (a, b) = (self.anchor(k), self.anchor(k + 1));
                a + (r - lo) / lo * (b - a)
            }
        }
    }

    /// Smallest `r` with `eval(r) >= t`; `+inf` if the profile stays below `t`.
    pub fn inverse(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            DoublingProfile::Power { exponent } => t.powf(1.0 / exponent),
            DoublingProfile::Table { .. } => {
                // locate k with anchor(k) < t <= anchor(k+1)
                let mut k = 0;
                let mut guard = 0;
                while self.anchor(k) >= t {
                    k -= 1;
                    guard += 1;
                    if guard > 4096 {
                        return 0.0;
                    }
                }
                while self.anchor(k + 1) < t {
                    k += 1;
                    guard += 1;
                    if guard > 4096 {
                        return f64::INFINITY;
                    }
                }
                let (a, b) = (self.anchor(k), self.anchor(k + 1));
                let lo = dyadic(k);
                lo + (t - a) / (b - a) * lo
            }
        }
    }

    /// Pointwise product of two profiles, as a table over the union of their
    /// windows (power laws contribute `[0, 1]`).
    pub fn product(&self, other: &DoublingProfile) -> DoublingProfile {
        match (self, other) {
            (DoublingProfile::Power { exponent: a }, DoublingProfile::Power { exponent: b }) => {
                DoublingProfile::Power { exponent: a + b }
            }
            _ => {
                let (a_lo, a_hi) = self.window().unwrap_or((0, 1));
                let (b_lo, b_hi) = other.window().unwrap_or((0, 1));
                let (lo, hi) = (a_lo.min(b_lo), a_hi.max(b_hi));
                let values = (lo..=hi).map(|k| self.anchor(k) * other.anchor(k)).collect();
                DoublingProfile::Table { k_lo: lo, values }
            }
        }
    }

    /// The same profile multiplied by a positive constant.
    pub fn scaled(&self, factor: f64, k_lo: i32, k_hi: i32) -> DoublingProfile {
        let values = (k_lo..=k_hi).map(|k| self.anchor(k) * factor).collect();
        DoublingProfile::Table { k_lo, values }
    }
}

/// `max_{k ∈ [k_lo, k_hi-1]} p(2^{k+1}) / p(2^k)`, at least 1.
pub fn doubling_constant(p: &DoublingProfile, k_lo: i32, k_hi: i32) -> f64 {
    assert!(k_lo < k_hi, "empty doubling window");
    (k_lo..k_hi)
        .map(|k| p.eval(dyadic(k + 1)) / p.eval(dyadic(k)))
        .fold(1.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub best_constant: f64,
    /// A pair `(r, R)` attaining the worst violation, present iff not admissible.
    pub witness: Option<(f64, f64)>,
}

// absorbs the rounding in powf on exact dyadic inputs
const ADMISSIBILITY_SLACK: f64 = 1e-12;

/// Checks `C0^{-1} (R/r)^2 <= Ψ(R)/Ψ(r) <= C0 R V(R) / (r V(r))` on all dyadic
/// pairs `2^i <= 2^j` with `i, j ∈ [k_lo, k_hi]`.
pub fn check_admissible(
    volume: &DoublingProfile,
    psi: &DoublingProfile,
    c0: f64,
    k_lo: i32,
    k_hi: i32,
) -> AdmissibilityReport {
    assert!(k_lo < k_hi, "empty admissibility window");
    let mut best = 1.0_f64;
    let mut worst_pair = (dyadic(k_lo), dyadic(k_lo));
    for i in k_lo..=k_hi {
        let r = dyadic(i);
        let (psi_r, v_r) = (psi.eval(r), volume.eval(r));
        for j in i..=k_hi {
            let big = dyadic(j);
            let psi_ratio = psi.eval(big) / psi_r;
            let diffusive = (big / r).powi(2);
            let volume_ratio = big * volume.eval(big) / (r * v_r);
            let need = (diffusive / psi_ratio).max(psi_ratio / volume_ratio);
            if need > best {
                best = need;
                worst_pair = (r, big);
            }
        }
    }
    let admissible = best <= c0 * (1.0 + ADMISSIBILITY_SLACK);
    AdmissibilityReport {
        admissible,
        best_constant: best,
        witness: (!admissible).then_some(worst_pair),
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// `Φ(s) = sup_{r >= r_min} (s/r - 1/Ψ(r))`.
///
/// `r_min = 0` gives the continuum transform, `r_min = 1` the discrete one.
/// The supremum is located on the dyadic grid and refined by golden-section
/// search on the bracketing interval.
pub fn phi(psi: &DoublingProfile, s: f64, r_min: f64) -> f64 {
    assert!(s >= 0.0 && r_min >= 0.0);
    let objective = |r: f64| s / r - 1.0 / psi.eval(r);
    let k_start = if r_min > 0.0 { dyadic_floor(r_min) } else { -64 };
    let k_end = 128;
    let mut grid: Vec<f64> = (k_start..=k_end).map(dyadic).filter(|&r| r >= r_min).collect();
    if r_min > 0.0 && grid.first().is_none_or(|&r| r > r_min) {
        grid.insert(0, r_min);
    }
    let (best_i, best_v) = grid
        .iter()
        .enumerate()
        .map(|(i, &r)| (i, objective(r)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let mut lo = grid[best_i.saturating_sub(1)];
    let mut hi = grid[(best_i + 1).min(grid.len() - 1)];
    let mut best = best_v;
    if hi > lo {
        let mut a = hi - GOLDEN * (hi - lo);
        let mut b = lo + GOLDEN * (hi - lo);
        let (mut fa, mut fb) = (objective(a), objective(b));
        for _ in 0..200 {
            if fa >= fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - GOLDEN * (hi - lo);
                fa = objective(a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + GOLDEN * (hi - lo);
                fb = objective(b);
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        best = best.max(fa).max(fb);
    }
    best.max(0.0)
}
