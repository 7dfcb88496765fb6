use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use serde_json::json;

use super::config::{resolve_centers, RunConfig};
use super::{report, Cli, Command, Invalid, MethodArg};
use crate::laakso::{LaaksoGraph, LaaksoVertex};
use crate::params::{fit_params, psi_b, validate, volume_law, FitResult, ParamsError};
use crate::profiles::{check_admissible, DoublingProfile};
use crate::verify::green_integral;
use crate::walk::{exact_mean_exit_time, green_partial_sums, heat_kernel, simulate_exit_time, RandomStream, SolverOptions};

/// CSV float format: 17 significant digits.
pub(crate) fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) struct Resolved {
    pub graph: LaaksoGraph,
    pub fit: Option<FitResult>,
}

pub(crate) fn resolve_graph(config: &RunConfig) -> anyhow::Result<Resolved> {
    if let Some(p) = &config.params {
        let violations = validate(&p.b, &p.g, true);
        if !violations.is_empty() {
            return Err(Invalid(json!({ "violations": violations })).into());
        }
        return Ok(Resolved { graph: LaaksoGraph::new(p.b.clone(), p.g.clone())?, fit: None });
    }
    let profiles = config.profiles.as_ref().context("no graph configured")?;
    match fit_params(&profiles.volume, &profiles.psi, &config.fit) {
        Ok(fit) => Ok(Resolved { graph: LaaksoGraph::new(fit.b.clone(), fit.g.clone())?, fit: Some(fit) }),
        Err(ParamsError::NotAdmissible(report)) => Err(Invalid(json!({ "admissibility": report })).into()),
        Err(e) => Err(e.into()),
    }
}

/// `Ψ_b` times the configured scale.
pub(crate) fn scale_profile(graph: &LaaksoGraph, config: &RunConfig) -> anyhow::Result<DoublingProfile> {
    let psi = psi_b(graph.branching())?;
    if config.psi_scale == 1.0 {
        return Ok(psi);
    }
    let (lo, hi) = psi.window().expect("psi_b is a table");
    Ok(psi.scaled(config.psi_scale, lo, hi))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    Ok(text)
}

fn csv_writer(path: &Path, header: &[&str]) -> anyhow::Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    Ok(w)
}

fn write_centers(path: &Path, centers: &[LaaksoVertex]) -> anyhow::Result<()> {
    let mut w = csv_writer(path, &["center_id", "vertex"])?;
    for c in centers {
        w.write_record([c.content_id(), c.serial()])?;
    }
    w.flush()?;
    Ok(())
}

fn pick(centers: &[LaaksoVertex], index: usize) -> anyhow::Result<&LaaksoVertex> {
    centers.get(index).with_context(|| format!("center index {index} out of range (grid has {})", centers.len()))
}

pub(crate) fn dispatch(cli: &Cli, mut config: RunConfig) -> anyhow::Result<i32> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Fit => fit(out, &config),
        Command::Validate => validate_cmd(out, &config),
        Command::VerifyAll => {
            let report = report::verify_all(config)?;
            print!("{}", write_json(&out.join("report.json"), &report)?);
            Ok(report.verdict.exit_code)
        }
        command => {
            let graph = resolve_graph(&config)?.graph;
            let centers = resolve_centers(&mut config, &graph)?;
            match *command {
                Command::Ball => ball(out, &config, &graph, &centers),
                Command::ExitTime { method, trials } => exit_time(out, &config, &graph, &centers, method, trials),
                Command::HeatKernel { center, radius, n_max } => {
                    let n_max = n_max.or(config.grid.n_values.iter().copied().max()).context("no step count given")?;
                    heat(out, &config, &graph, pick(&centers, center)?, radius, n_max)
                }
                Command::Green { center, n_max } => {
                    let n_max = n_max.or(config.grid.green_n.iter().copied().max()).context("no step count given")?;
                    green(out, &config, &graph, pick(&centers, center)?, n_max)
                }
                Command::ExportGraph { level } => export(out, &config, &graph, level),
                Command::Fit | Command::Validate | Command::VerifyAll => unreachable!(),
            }
        }
    }
}

fn fit(out: &Path, config: &RunConfig) -> anyhow::Result<i32> {
    let resolved = resolve_graph(config)?;
    let result = match resolved.fit {
        Some(fit) => fit,
        // explicit parameters fit themselves exactly
        None => FitResult {
            b: resolved.graph.branching().clone(),
            g: resolved.graph.gluing().clone(),
            psi_log_error: 0.0,
            vol_log_error: 0.0,
        },
    };
    print!("{}", write_json(&out.join("fit.json"), &result)?);
    Ok(0)
}

fn validate_cmd(out: &Path, config: &RunConfig) -> anyhow::Result<i32> {
    let (value, ok) = if let Some(p) = &config.params {
        let violations = validate(&p.b, &p.g, true);
        let ok = violations.is_empty();
        (json!({ "valid": ok, "violations": violations }), ok)
    } else {
        let profiles = config.profiles.as_ref().context("no graph configured")?;
        let report = check_admissible(&profiles.volume, &profiles.psi, config.fit.c0, 0, config.fit.k_max);
        let ok = report.admissible;
        (json!({ "valid": ok, "admissibility": report }), ok)
    };
    print!("{}", write_json(&out.join("validate.json"), &value)?);
    Ok(if ok { 0 } else { super::EXIT_INVALID })
}

fn ball(out: &Path, config: &RunConfig, graph: &LaaksoGraph, centers: &[LaaksoVertex]) -> anyhow::Result<i32> {
    let law = volume_law(graph.branching(), graph.gluing())?;
    let mut w = csv_writer(
        &out.join("ball.csv"),
        &["center_id", "r", "vertex_count", "degree_sum", "boundary_size", "volume_law", "ratio"],
    )?;
    for c in centers {
        for &r in &config.grid.radii {
            let s = graph.ball_summary(c, r, config.cap)?;
            let expected = if r == 0 { 0.0 } else { law.eval(f64::from(r)) };
            w.write_record([
                c.content_id(),
                r.to_string(),
                s.vertex_count.to_string(),
                s.degree_sum.to_string(),
                s.boundary_size.to_string(),
                num(expected),
                num(if r == 0 { 0.0 } else { s.degree_sum as f64 / expected }),
            ])?;
        }
    }
    w.flush()?;
    write_centers(&out.join("centers.csv"), centers)?;
    Ok(0)
}

fn exit_time(
    out: &Path,
    config: &RunConfig,
    graph: &LaaksoGraph,
    centers: &[LaaksoVertex],
    method: MethodArg,
    trials: Option<u64>,
) -> anyhow::Result<i32> {
    let psi = scale_profile(graph, config)?;
    let trials = trials.unwrap_or(config.trials);
    let mut w = csv_writer(&out.join("exit_time.csv"), &["center_id", "r", "mean", "ci", "trials", "method", "psi", "ratio"])?;
    let mut stream_index = 0;
    for c in centers {
        let radii = match method {
            MethodArg::Exact => &config.grid.exit_radii,
            MethodArg::MonteCarlo => &config.grid.mc_radii,
        };
        for &r in radii {
            let rec = match method {
                MethodArg::Exact => exact_mean_exit_time(graph, c, r, config.cap, &SolverOptions::default())?,
                MethodArg::MonteCarlo => {
                    let stream = RandomStream { seed: config.seed, stream_index };
                    stream_index += 1;
                    simulate_exit_time(graph, c, r, trials, stream, config.cap)?
                }
            };
            let expected = if r == 0 { 0.0 } else { psi.eval(f64::from(r)) };
            let method = serde_json::to_value(rec.method)?;
            w.write_record([
                c.content_id(),
                r.to_string(),
                num(rec.mean),
                num(rec.half_width),
                rec.trials.to_string(),
                method.as_str().unwrap_or_default().to_string(),
                num(expected),
                num(if r == 0 { 0.0 } else { rec.mean / expected }),
            ])?;
        }
    }
    w.flush()?;
    write_centers(&out.join("centers.csv"), centers)?;
    Ok(0)
}

fn heat(out: &Path, config: &RunConfig, graph: &LaaksoGraph, center: &LaaksoVertex, radius: u32, n_max: u32) -> anyhow::Result<i32> {
    let ball = graph.bfs_ball(center, radius, config.cap)?;
    let targets: Vec<LaaksoVertex> = ball.vertices().to_vec();
    let records = heat_kernel(graph, center, n_max, &targets, config.cap)?;
    let ids: Vec<String> = targets.iter().map(LaaksoVertex::content_id).collect();
    let mut w = csv_writer(&out.join("heat_kernel.csv"), &["n", "y_id", "distance", "p_n", "p_n_plus_1"])?;
    for (i, rec) in records.iter().enumerate() {
        let t = i % targets.len();
        w.write_record([rec.n.to_string(), ids[t].clone(), ball.distance_at(t).to_string(), num(rec.p_n), num(rec.p_n_plus_1)])?;
    }
    w.flush()?;
    let mut v = csv_writer(&out.join("heat_kernel_vertices.csv"), &["y_id", "distance", "vertex"])?;
    for (i, y) in targets.iter().enumerate() {
        v.write_record([ids[i].clone(), ball.distance_at(i).to_string(), y.serial()])?;
    }
    v.flush()?;
    Ok(0)
}

fn green(out: &Path, config: &RunConfig, graph: &LaaksoGraph, center: &LaaksoVertex, n_max: u32) -> anyhow::Result<i32> {
    let psi = scale_profile(graph, config)?;
    let volume = volume_law(graph.branching(), graph.gluing())?;
    let sums = green_partial_sums(graph, center, center, n_max, config.cap)?;
    let mut w = csv_writer(&out.join("green.csv"), &["n", "partial_sum", "integral", "ratio"])?;
    for (n, &s) in sums.iter().enumerate() {
        let integral = if n == 0 { 1.0 } else { green_integral(&volume, &psi, psi.inverse(n as f64)) };
        w.write_record([n.to_string(), num(s), num(integral), num(s / integral)])?;
    }
    w.flush()?;
    Ok(0)
}

fn export(out: &Path, config: &RunConfig, graph: &LaaksoGraph, level: u32) -> anyhow::Result<i32> {
    let induced = graph.induced_ball_graph(level, config.cap)?;
    let mut edges = File::create(out.join("graph_edges.csv"))?;
    induced.write_edges_csv(&mut edges)?;
    edges.flush()?;
    let mut vertices = File::create(out.join("graph_vertices.csv"))?;
    induced.write_vertices_csv(graph, &mut vertices)?;
    vertices.flush()?;
    println!("level {level}: {} vertices, {} edges", induced.vertices.len(), induced.edges().len());
    Ok(0)
}
