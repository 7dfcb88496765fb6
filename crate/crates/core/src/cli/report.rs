//! The `verify-all` orchestration and its JSON report.

use serde::Serialize;

use super::commands::{resolve_graph, scale_profile};
use super::config::{resolve_centers, RunConfig};
use super::EXIT_CHECK_BASE;
use crate::params::{psi_b, volume_law, FitResult};
use crate::verify::{
    check_exit_time, check_green, check_hke, check_monte_carlo, check_volume, classify_transience, fit_exponent, EnvelopeReport,
    ExponentFit, HkeOptions, Quantity, Transience, VerifyError,
};
use crate::walk::ExitTimeRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedFit {
    /// `volume`, `exit_time` or `on_diagonal`.
    pub name: String,
    pub center_id: String,
    #[serde(flatten)]
    pub fit: ExponentFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransienceOutcome {
    /// `None` when the tail trend is too close to 1 to decide.
    pub class: Option<Transience>,
    pub trend: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integral: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub failed: Vec<Quantity>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    /// The resolved configuration; feeding it back reproduces the report.
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    pub checks: Vec<EnvelopeReport>,
    /// Near-diagonal lower bands for each width of the sweep.
    pub hke_lower_sweep: Vec<EnvelopeReport>,
    pub fits: Vec<NamedFit>,
    pub monte_carlo: Vec<ExitTimeRecord>,
    pub transience: TransienceOutcome,
    pub verdict: Verdict,
}

/// Failure bit of a quantity in the exit code.
pub fn failure_bit(q: Quantity) -> i32 {
    match q {
        Quantity::Volume => 1,
        Quantity::ExitTime => 2,
        Quantity::HkeUpper | Quantity::HkeLowerNearDiag => 4,
        Quantity::Green => 8,
        Quantity::MonteCarlo => 16,
    }
}

fn named_fit(name: &str, report: &EnvelopeReport, value: impl Fn(f64, f64) -> f64) -> Option<NamedFit> {
    let center_id = report.grid.first()?.center_id.clone();
    let points: Vec<(f64, f64)> =
        report.grid.iter().filter(|p| p.center_id == center_id).map(|p| (p.scale, value(p.scale, p.ratio_min))).collect();
    let fit = fit_exponent(&points).ok()?;
    Some(NamedFit { name: name.to_string(), center_id, fit })
}

pub fn verify_all(mut config: RunConfig) -> anyhow::Result<Report> {
    let resolved = resolve_graph(&config)?;
    let graph = &resolved.graph;
    let centers = resolve_centers(&mut config, graph)?;
    let psi = scale_profile(graph, &config)?;
    let law = volume_law(graph.branching(), graph.gluing())?;
    let (grid, thresholds, cap) = (config.grid.clone(), config.thresholds, config.cap);

    let mut checks = Vec::new();
    let mut fits = Vec::new();
    let mut hke_lower_sweep = Vec::new();
    let mut monte_carlo = Vec::new();
    if !grid.radii.is_empty() {
        let report = check_volume(graph, &centers, &grid.radii, thresholds.volume, cap)?;
        fits.extend(named_fit("volume", &report, |r, ratio| ratio * law.eval(r)));
        checks.push(report);
    }
    if !grid.exit_radii.is_empty() {
        let report = check_exit_time(graph, &centers, &grid.exit_radii, &psi, thresholds.exit_time, cap)?;
        fits.extend(named_fit("exit_time", &report, |r, ratio| ratio * psi.eval(r)));
        checks.push(report);
    }
    if !grid.n_values.is_empty() {
        let opts = HkeOptions { delta: config.delta, kappa: config.kappa, threshold: thresholds.hke };
        let hke = check_hke(graph, &centers[0], &grid.n_values, &psi, &opts, cap)?;
        if let Ok(fit) = fit_exponent(&hke.diagonal) {
            fits.push(NamedFit { name: "on_diagonal".into(), center_id: centers[0].content_id(), fit });
        }
        checks.push(hke.lower);
        checks.push(hke.upper);
        hke_lower_sweep = hke.lower_sweep;
    }
    if !grid.green_n.is_empty() {
        checks.push(check_green(graph, &centers[0], &grid.green_n, &psi, thresholds.green, cap)?);
    }
    if !grid.mc_radii.is_empty() {
        let (report, records) =
            check_monte_carlo(graph, &centers, &grid.mc_radii, config.trials, config.seed, thresholds.monte_carlo, cap)?;
        checks.push(report);
        monte_carlo = records;
    }

    let transience = match classify_transience(&law, &psi_b(graph.branching())?, config.transience_k_max) {
        Ok(t) => TransienceOutcome { class: Some(t.class), trend: t.trend, integral: Some(t.integral) },
        Err(VerifyError::Inconclusive { trend }) => TransienceOutcome { class: None, trend, integral: None },
        Err(e) => return Err(e.into()),
    };

    let failed: Vec<Quantity> = checks.iter().filter(|c| !c.pass).map(|c| c.quantity).collect();
    let mask = failed.iter().fold(0, |m, &q| m | failure_bit(q));
    let exit_code = if mask == 0 { 0 } else { EXIT_CHECK_BASE + mask };
    Ok(Report {
        config,
        fit: resolved.fit,
        checks,
        hke_lower_sweep,
        fits,
        monte_carlo,
        transience,
        verdict: Verdict { pass: mask == 0, failed, exit_code },
    })
}
