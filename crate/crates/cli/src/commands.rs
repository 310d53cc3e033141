//! Subcommand implementations: topology generation, single runs with bound
//! reports, heatmap grids, and distribution experiments.
//!
//! Every random draw is derived from the master seed with a counter-based
//! mix, so reruns with the same config produce byte-identical CSVs even when
//! grid cells execute in parallel.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use ssiter::analysis::{
    async_envelope, check_bound, default_burn_in, error_trace, error_trace_from_outputs,
    estimate_output_distribution, rel_frobenius_error, sample_moments,
    stationary_output_covariance, sync_envelope, theoretical_output_distribution, AnalysisError,
    BoundReport, DistributionSpec, ErrorTrace,
};
use ssiter::async_engine::{
    run_async, sweep_len, uniform_registers, Action, AsyncInit, AsyncTrace, Policy, RunOptions,
    Schedule, Snapshot, StepRecord,
};
use ssiter::inputs::{gen_sequence, unit_stream, InputError, InputModel, InputSource};
use ssiter::linalg::{inf_norm_vec, jacobi_split, solve_exact, JacobiSplit, Matrix, Vector};
use ssiter::sync_engine::{run_sync, Configuration, RunTrace};
use ssiter::topology::{
    build_circle, build_unit_disc, load_graph, node_weights, render_matrix, NodeWeights,
    TopologyError, WeightedGraph,
};

use crate::config::Config;
use crate::Failure;

// ---------------------------------------------------------------------------
// Seed derivation: the same splitmix-style finalizer used by the input
// streams, chained over context tags.
// ---------------------------------------------------------------------------

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(master ^ 0x5851f42d4c957f2d), |h, &t| mix(h ^ t))
}

/// Uniform vector in [-scale, scale]^n from a derived seed.
fn uniform_vector(seed: u64, n: usize, scale: f64) -> Vector {
    Vector::new((0..n).map(|i| scale * (2.0 * unit_stream(seed, 0, i as u64) - 1.0)).collect())
}

// ---------------------------------------------------------------------------
// Error mapping onto exit codes.
// ---------------------------------------------------------------------------

fn topo_failure(e: TopologyError) -> Failure {
    match e {
        TopologyError::DominanceViolated(_) | TopologyError::ZeroDiagonal(_) => {
            Failure::refusal(e.to_string())
        }
        _ => Failure::usage(e.to_string()),
    }
}

fn numeric_failure(e: impl std::fmt::Display) -> Failure {
    Failure::refusal(e.to_string())
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::usage(format!("cannot write {}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Config resolution.
// ---------------------------------------------------------------------------

pub fn build_topology(cfg: &Config) -> Result<WeightedGraph, Failure> {
    let kind = cfg.get("topology").unwrap_or("circle");
    let g = match kind {
        "circle" => build_circle(
            cfg.parse_or("n", 100).map_err(Failure::usage)?,
            cfg.parse_or("diag", 3.0).map_err(Failure::usage)?,
            cfg.parse_or("off", -1.0).map_err(Failure::usage)?,
        ),
        "unit-disc" => build_unit_disc(
            cfg.parse_or("n", 100).map_err(Failure::usage)?,
            cfg.parse_or("side", 10.0).map_err(Failure::usage)?,
            cfg.parse_or("radius", 1.0).map_err(Failure::usage)?,
            cfg.parse_or("ratio", 0.97).map_err(Failure::usage)?,
            cfg.parse_or("topology_seed", 1).map_err(Failure::usage)?,
        ),
        "file" => {
            let path = cfg
                .get("matrix")
                .ok_or_else(|| Failure::usage("topology = file needs a matrix = <path> key"))?;
            load_graph(Path::new(path))
        }
        other => {
            return Err(Failure::usage(format!(
                "unknown topology {other:?} (expected circle, unit-disc, or file)"
            )))
        }
    }
    .map_err(topo_failure)?;
    Ok(g)
}

fn build_input(cfg: &Config, n: usize, seed: u64) -> Result<InputSource, Failure> {
    let center =
        Vector::new(cfg.vector_or("center", n, 0.5).map_err(Failure::usage)?);
    let model = match cfg.get("input").unwrap_or("box") {
        "constant" => InputModel::Constant { center },
        "box" => InputModel::BoxBounded {
            center,
            delta: cfg.parse_or("delta", 0.1).map_err(Failure::usage)?,
        },
        "gaussian" => {
            let var = cfg.vector_or("variance", n, 1.0).map_err(Failure::usage)?;
            InputModel::Gaussian { mean: center, cov: Matrix::from_diag(&var) }
        }
        other => {
            return Err(Failure::usage(format!(
                "unknown input model {other:?} (expected constant, box, or gaussian)"
            )))
        }
    };
    InputSource::new(model, seed).map_err(|e| match e {
        InputError::BadCovariance(inner) => Failure::refusal(inner.to_string()),
        other => Failure::usage(other.to_string()),
    })
}

#[derive(Debug, Clone, Copy)]
pub enum Engine {
    Sync,
    Async(Policy),
}

fn build_engine(cfg: &Config) -> Result<Engine, Failure> {
    match cfg.get("engine").unwrap_or("sync") {
        "sync" => Ok(Engine::Sync),
        "async" => {
            let policy = match cfg.get("policy").unwrap_or("round-robin") {
                "round-robin" => Policy::RoundRobin,
                "random-fair" => Policy::RandomFair {
                    window: cfg.parse_or("fair_window", 5).map_err(Failure::usage)?,
                },
                other => {
                    return Err(Failure::usage(format!(
                        "unknown policy {other:?} (expected round-robin or random-fair)"
                    )))
                }
            };
            Ok(Engine::Async(policy))
        }
        other => Err(Failure::usage(format!("unknown engine {other:?} (expected sync or async)"))),
    }
}

struct Setup {
    graph: WeightedGraph,
    weights: NodeWeights,
    split: JacobiSplit,
    engine: Engine,
    seed: u64,
    z0: f64,
    out: PathBuf,
}

fn setup(cfg: &Config, default_out: &str) -> Result<Setup, Failure> {
    let graph = build_topology(cfg)?;
    if !graph.is_dominant() {
        return Err(Failure::refusal(
            "matrix is not normalized diagonally dominant; convergence bounds do not apply",
        ));
    }
    let weights = node_weights(&graph).map_err(topo_failure)?;
    let split = jacobi_split(graph.matrix()).map_err(numeric_failure)?;
    Ok(Setup {
        graph,
        weights,
        split,
        engine: build_engine(cfg)?,
        seed: cfg.parse_or("seed", 0).map_err(Failure::usage)?,
        z0: cfg.parse_or("z0", 1.0).map_err(Failure::usage)?,
        out: PathBuf::from(cfg.get("out").unwrap_or(default_out)),
    })
}

/// Steps in one full pass where every node completes one sweep.
fn total_sweep(g: &WeightedGraph) -> usize {
    (0..g.n()).map(|i| sweep_len(g, i)).sum()
}

/// δ for the envelope: exact for constant/box models, absent for Gaussian
/// (whose deviations are unbounded a priori).
fn model_delta(source: &InputSource) -> Option<f64> {
    match source.model() {
        InputModel::Constant { .. } => Some(0.0),
        InputModel::BoxBounded { delta, .. } => Some(*delta),
        InputModel::Gaussian { .. } => None,
    }
}

// ---------------------------------------------------------------------------
// CSV plumbing. Floats are written with their shortest round-trip form.
// ---------------------------------------------------------------------------

fn create_out(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path).map_err(|e| io_failure(path, e))?))
}

/// `run.csv` + `bounds` -> `run.bounds.csv`.
fn with_tag(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{tag}.csv"))
}

fn write_trace_csv(path: &Path, trace: &RunTrace) -> Result<(), Failure> {
    let mut w = create_out(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "round,node,input,output")?;
        for i in 0..trace.initial.outputs.len() {
            writeln!(w, "0,{i},,{:?}", trace.initial.outputs[i])?;
        }
        for (r, config) in trace.configs.iter().enumerate() {
            for i in 0..config.outputs.len() {
                writeln!(w, "{},{i},{:?},{:?}", r + 1, trace.inputs[r][i], config.outputs[i])?;
            }
        }
        Ok(())
    };
    go().map_err(|e| io_failure(path, e))
}

fn write_boundary_csv(path: &Path, initial: &Vector, outputs: &[Vector]) -> Result<(), Failure> {
    let mut w = create_out(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "round,node,output")?;
        for i in 0..initial.len() {
            writeln!(w, "0,{i},{:?}", initial[i])?;
        }
        for (r, o) in outputs.iter().enumerate() {
            for i in 0..o.len() {
                writeln!(w, "{},{i},{:?}", r + 1, o[i])?;
            }
        }
        Ok(())
    };
    go().map_err(|e| io_failure(path, e))
}

fn write_bound_csv(path: &Path, report: &BoundReport) -> Result<(), Failure> {
    let mut w = create_out(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "dt,observed,envelope,slack,violated")?;
        for row in &report.rows {
            writeln!(
                w,
                "{},{:?},{:?},{:?},{}",
                row.dt, row.observed, row.envelope, row.slack, row.violated
            )?;
        }
        Ok(())
    };
    go().map_err(|e| io_failure(path, e))
}

fn step_target(rec: &StepRecord) -> String {
    match rec.action {
        Action::WriteRegister { writer, reader } | Action::ReadRegister { writer, reader } => {
            format!("R({writer};{reader})")
        }
        Action::ReadInput | Action::Update => format!("O({})", rec.node),
    }
}

fn write_steps_csv(path: &Path, steps: &[StepRecord]) -> Result<(), Failure> {
    let mut w = create_out(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "step,node,line,target,value")?;
        for rec in steps {
            writeln!(
                w,
                "{},{},{},{},{:?}",
                rec.step,
                rec.node,
                rec.action.line(),
                step_target(rec),
                rec.value
            )?;
        }
        Ok(())
    };
    go().map_err(|e| io_failure(path, e))
}

fn write_snapshots_csv(
    path: &Path,
    g: &WeightedGraph,
    snapshots: &[Snapshot],
) -> Result<(), Failure> {
    let edges = ssiter::async_engine::edge_list(g);
    let mut w = create_out(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "step,kind,a,b,value")?;
        for snap in snapshots {
            for (k, &(writer, reader)) in edges.iter().enumerate() {
                writeln!(w, "{},register,{writer},{reader},{:?}", snap.step, snap.registers[k])?;
            }
            for (i, &v) in snap.outputs.iter().enumerate() {
                writeln!(w, "{},output,{i},,{v:?}", snap.step)?;
            }
            for (i, &v) in snap.committed.iter().enumerate() {
                writeln!(w, "{},committed,{i},,{v:?}", snap.step)?;
            }
        }
        Ok(())
    };
    go().map_err(|e| io_failure(path, e))
}

// ---------------------------------------------------------------------------
// gen-topology
// ---------------------------------------------------------------------------

pub fn cmd_gen_topology(cfg: &Config) -> Result<(), Failure> {
    let g = build_topology(cfg)?;
    let split = jacobi_split(g.matrix()).map_err(numeric_failure)?;
    match cfg.get("out") {
        Some(out) => {
            let path = Path::new(out);
            g.save(path).map_err(|e| Failure::usage(e.to_string()))?;
        }
        None => print!("{}", render_matrix(g.matrix())),
    }
    println!("n = {}", g.n());
    println!("norm_a = {:?}", split.norm_a);
    println!("norm_b = {:?}", split.norm_b);
    println!("dominant = {}", g.is_dominant());
    println!("connected = {}", g.is_connected());
    if !g.is_dominant() {
        return Err(Failure::refusal("matrix is not normalized diagonally dominant"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

pub struct RunFlags {
    pub log_steps: bool,
    pub snapshot_at: Vec<usize>,
}

pub fn cmd_run(cfg: &Config, flags: &RunFlags) -> Result<(), Failure> {
    let s = setup(cfg, "run.csv")?;
    let n = s.graph.n();
    let source = build_input(cfg, n, derive_seed(s.seed, &[1]))?;
    let v = source.center().clone();
    let u = solve_exact(s.graph.matrix(), &v).map_err(numeric_failure)?;
    let rounds: usize = cfg.parse_or("rounds", 200).map_err(Failure::usage)?;
    let initial = uniform_vector(derive_seed(s.seed, &[2]), n, s.z0);

    let (errors, z, report) = match s.engine {
        Engine::Sync => {
            let seq = gen_sequence(&source, rounds);
            let trace = run_sync(&s.graph, &s.weights, &seq, Configuration::new(initial));
            let errors = error_trace(&trace, &u);
            let z = errors.norms[0];
            // Gaussian deviations have no a-priori bound; the realized max is
            // a valid δ for this particular sequence.
            let delta = model_delta(&source)
                .unwrap_or_else(|| seq.deviations.iter().map(inf_norm_vec).fold(0.0, f64::max));
            let envelope =
                sync_envelope(&s.split, delta, z, rounds).map_err(numeric_failure)?;
            let report = check_bound(&errors, &envelope, z);
            write_trace_csv(&s.out, &trace)?;
            (errors, z, Some(report))
        }
        Engine::Async(policy) => {
            let registers = uniform_registers(&s.graph, s.z0, derive_seed(s.seed, &[3]));
            let steps: usize = cfg
                .parse_or("steps", rounds * total_sweep(&s.graph))
                .map_err(Failure::usage)?;
            let schedule = Schedule { policy, seed: derive_seed(s.seed, &[4]) };
            let opts = RunOptions {
                log_steps: flags.log_steps || cfg.get("log_steps") == Some("true"),
                snapshot_at: flags.snapshot_at.clone(),
            };
            let init = AsyncInit { outputs: initial.clone(), registers: registers.clone() };
            let trace =
                run_async(&s.graph, &s.weights, &source, &init, &schedule, steps, &opts)
                    .map_err(|e| Failure::usage(e.to_string()))?;
            report_async_artifacts(&s, &initial, &trace)?;
            let errors = error_trace_from_outputs(&initial, &trace.boundary_outputs, &u);
            // z covers the whole faulty state: local outputs plus whatever
            // the registers claim their writers' outputs are.
            let z = register_z(&errors, &registers, &s.graph, &u);
            let report = match model_delta(&source) {
                Some(delta) => {
                    Some(check_async_bound(&s.split, &errors, delta, z)?)
                }
                None => None,
            };
            if trace.staleness_violations > 0 {
                return Err(Failure::violation(format!(
                    "{} stale register reads detected (first at step {})",
                    trace.staleness_violations,
                    trace.first_staleness_violation.map(|v| v.step).unwrap_or(0)
                )));
            }
            (errors, z, report)
        }
    };

    let final_err = errors.norms.last().copied().unwrap_or(0.0);
    println!("rounds = {}", errors.norms.len().saturating_sub(1));
    println!("initial_error = {z:?}");
    println!("final_error = {final_err:?}");
    if let Some(report) = report {
        write_bound_csv(&with_tag(&s.out, "bounds"), &report)?;
        println!("envelope_violations = {}", report.violations);
        if !report.is_clean() {
            return Err(Failure::violation(format!(
                "{} envelope violations (max excess {:?})",
                report.violations, report.max_violation
            )));
        }
    } else {
        println!("envelope_violations = n/a (unbounded input model)");
    }
    Ok(())
}

fn report_async_artifacts(s: &Setup, initial: &Vector, trace: &AsyncTrace) -> Result<(), Failure> {
    write_boundary_csv(&s.out, initial, &trace.boundary_outputs)?;
    if let Some(steps) = &trace.steps {
        write_steps_csv(&with_tag(&s.out, "steps"), steps)?;
    }
    if !trace.snapshots.is_empty() {
        write_snapshots_csv(&with_tag(&s.out, "snapshots"), &s.graph, &trace.snapshots)?;
    }
    Ok(())
}

fn register_z(errors: &ErrorTrace, registers: &[f64], g: &WeightedGraph, u: &Vector) -> f64 {
    let mut z = errors.norms[0];
    for (k, &(writer, _)) in ssiter::async_engine::edge_list(g).iter().enumerate() {
        z = z.max((registers[k] - u[writer]).abs());
    }
    z
}

/// Theorem-style envelope at round boundaries: the outputs committed when
/// boundary m closes carry exponent m-1 (they were computed during round m
/// from values of round m-1 and earlier).
fn check_async_bound(
    split: &JacobiSplit,
    errors: &ErrorTrace,
    delta: f64,
    z: f64,
) -> Result<BoundReport, Failure> {
    let boundaries = errors.norms.len() - 1;
    let raw = async_envelope(split, delta, z, boundaries).map_err(numeric_failure)?;
    let mut envelope = Vec::with_capacity(boundaries + 1);
    envelope.push(raw[0]);
    envelope.extend_from_slice(&raw[..boundaries]);
    Ok(check_bound(errors, &envelope, z))
}

// ---------------------------------------------------------------------------
// heatmap
// ---------------------------------------------------------------------------

fn default_deltas() -> Vec<f64> {
    // 8 points log-spaced over [1e-3, 1]
    (0..8).map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 7.0)).collect()
}

fn default_iterations() -> Vec<usize> {
    // 11 points log-spaced over [1, 1024]
    (0..11).map(|k| 1usize << k).collect()
}

pub fn cmd_heatmap(cfg: &Config) -> Result<(), Failure> {
    let s = setup(cfg, "heatmap.csv")?;
    let deltas = cfg
        .list_f64("deltas")
        .map_err(Failure::usage)?
        .unwrap_or_else(default_deltas);
    let iterations = cfg
        .list_usize("iterations")
        .map_err(Failure::usage)?
        .unwrap_or_else(default_iterations);
    let trials: usize = cfg.parse_or("trials", 50).map_err(Failure::usage)?;
    if deltas.is_empty() || iterations.is_empty() || trials == 0 {
        return Err(Failure::usage("heatmap needs nonempty deltas, iterations, and trials >= 1"));
    }

    let cells: Vec<(usize, usize)> = (0..deltas.len())
        .flat_map(|r| (0..iterations.len()).map(move |c| (r, c)))
        .collect();
    let results: Result<Vec<(f64, f64)>, Failure> = cells
        .par_iter()
        .map(|&(r, c)| {
            heatmap_cell(
                &s,
                deltas[r],
                iterations[c],
                trials,
                derive_seed(s.seed, &[0x48, r as u64, c as u64]),
            )
        })
        .collect();
    let results = results?;

    let mut w = create_out(&s.out)?;
    let go = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "delta,log10_delta,iterations,log10_iterations,mean_error,stderr_error")?;
        for (k, &(r, c)) in cells.iter().enumerate() {
            let (mean, stderr) = results[k];
            writeln!(
                w,
                "{:?},{:?},{},{:?},{:?},{:?}",
                deltas[r],
                deltas[r].log10(),
                iterations[c],
                (iterations[c] as f64).log10(),
                mean,
                stderr
            )?;
        }
        Ok(())
    };
    go(&mut w).map_err(|e| io_failure(&s.out, e))?;
    println!(
        "heatmap: {} x {} cells, {} trials each -> {}",
        deltas.len(),
        iterations.len(),
        trials,
        s.out.display()
    );
    Ok(())
}

fn heatmap_cell(
    s: &Setup,
    delta: f64,
    iters: usize,
    trials: usize,
    cell_seed: u64,
) -> Result<(f64, f64), Failure> {
    let n = s.graph.n();
    let mut errs = Vec::with_capacity(trials);
    for t in 0..trials {
        let ts = derive_seed(cell_seed, &[t as u64]);
        let v = uniform_vector(derive_seed(ts, &[1]), n, 1.0);
        let u = solve_exact(s.graph.matrix(), &v).map_err(numeric_failure)?;
        let initial = uniform_vector(derive_seed(ts, &[2]), n, s.z0);
        let source = build_box_source(&v, delta, derive_seed(ts, &[3]))?;
        let final_out = match s.engine {
            Engine::Sync => {
                let seq = gen_sequence(&source, iters);
                run_sync(&s.graph, &s.weights, &seq, Configuration::new(initial))
                    .final_outputs()
                    .clone()
            }
            Engine::Async(policy) => {
                if iters == 0 {
                    initial
                } else {
                    let per_pass = total_sweep(&s.graph);
                    let factor = match policy {
                        Policy::RoundRobin => 1,
                        Policy::RandomFair { .. } => 3,
                    };
                    let init = AsyncInit {
                        outputs: initial.clone(),
                        registers: uniform_registers(&s.graph, s.z0, derive_seed(ts, &[4])),
                    };
                    let schedule = Schedule { policy, seed: derive_seed(ts, &[5]) };
                    let trace = run_async(
                        &s.graph,
                        &s.weights,
                        &source,
                        &init,
                        &schedule,
                        iters * per_pass * factor,
                        &RunOptions::default(),
                    )
                    .map_err(|e| Failure::usage(e.to_string()))?;
                    trace
                        .boundary_outputs
                        .get(iters - 1)
                        .cloned()
                        .unwrap_or(trace.final_outputs)
                }
            }
        };
        errs.push(inf_norm_vec(&final_out.sub(&u)));
    }
    let m = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / m;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    Ok((mean, (var / m).sqrt()))
}

fn build_box_source(v: &Vector, delta: f64, seed: u64) -> Result<InputSource, Failure> {
    InputSource::new(InputModel::BoxBounded { center: v.clone(), delta }, seed)
        .map_err(|e| Failure::usage(e.to_string()))
}

// ---------------------------------------------------------------------------
// dist
// ---------------------------------------------------------------------------

pub fn cmd_dist(cfg: &Config) -> Result<(), Failure> {
    let s = setup(cfg, "dist.csv")?;
    let n = s.graph.n();
    let source = build_input(cfg, n, derive_seed(s.seed, &[1]))?;
    let (mean, cov) = match source.model() {
        InputModel::Gaussian { mean, cov } => (mean.clone(), cov.clone()),
        _ => return Err(Failure::usage("dist needs input = gaussian")),
    };
    let u = solve_exact(s.graph.matrix(), &mean).map_err(numeric_failure)?;
    let burn_in = match cfg.parse::<usize>("burn_in").map_err(Failure::usage)? {
        Some(b) => b,
        None => default_burn_in(s.split.norm_b),
    };
    let samples_n: usize = cfg.parse_or("samples", 20_000).map_err(Failure::usage)?;
    let input_spec = DistributionSpec { mean: mean.clone(), covariance: cov.clone() };
    let theo = theoretical_output_distribution(&s.graph, &input_spec).map_err(numeric_failure)?;
    let stationary = stationary_output_covariance(&s.split, &cov).map_err(numeric_failure)?;

    let initial = uniform_vector(derive_seed(s.seed, &[2]), n, s.z0);
    let (est, observed): (DistributionSpec, Vec<Vector>) = match s.engine {
        Engine::Sync => {
            let seq = gen_sequence(&source, burn_in + samples_n);
            let trace = run_sync(&s.graph, &s.weights, &seq, Configuration::new(initial));
            let est = estimate_output_distribution(&trace, burn_in).map_err(analysis_usage)?;
            let observed =
                trace.configs[burn_in.min(trace.configs.len())..].iter().map(|c| c.outputs.clone()).collect();
            (est, observed)
        }
        Engine::Async(policy) => {
            let per_pass = total_sweep(&s.graph);
            let factor = match policy {
                Policy::RoundRobin => 1,
                Policy::RandomFair { .. } => 3,
            };
            let init = AsyncInit {
                outputs: initial,
                registers: uniform_registers(&s.graph, s.z0, derive_seed(s.seed, &[3])),
            };
            let schedule = Schedule { policy, seed: derive_seed(s.seed, &[4]) };
            let steps = (burn_in + samples_n + 2) * per_pass * factor;
            let trace = run_async(
                &s.graph,
                &s.weights,
                &source,
                &init,
                &schedule,
                steps,
                &RunOptions::default(),
            )
            .map_err(|e| Failure::usage(e.to_string()))?;
            if trace.boundary_outputs.len() < burn_in + 2 {
                return Err(Failure::usage(format!(
                    "only {} rounds completed in {} steps; raise samples or steps",
                    trace.boundary_outputs.len(),
                    steps
                )));
            }
            let observed: Vec<Vector> = trace.boundary_outputs[burn_in..].to_vec();
            let est = sample_moments(&observed).map_err(analysis_usage)?;
            (est, observed)
        }
    };

    if let Some(samples_out) = cfg.get("samples_out") {
        let path = PathBuf::from(samples_out);
        write_boundary_csv(&path, &u, &observed)?;
    }

    let err_theo = rel_frobenius_error(&est.covariance, &theo.covariance);
    let err_stat = rel_frobenius_error(&est.covariance, &stationary);
    write_dist_report(&s.out, &est, &theo, &stationary, &u, burn_in, err_theo, err_stat)?;
    println!("samples = {}", observed.len());
    println!("burn_in = {burn_in}");
    println!("cov_rel_error_aggregate_law = {err_theo:?}");
    println!("cov_rel_error_stationary_law = {err_stat:?}");
    Ok(())
}

fn analysis_usage(e: AnalysisError) -> Failure {
    match e {
        AnalysisError::TooFewSamples => Failure::usage(e.to_string()),
        other => Failure::refusal(other.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
fn write_dist_report(
    path: &Path,
    est: &DistributionSpec,
    theo: &DistributionSpec,
    stationary: &Matrix,
    u: &Vector,
    burn_in: usize,
    err_theo: f64,
    err_stat: f64,
) -> Result<(), Failure> {
    let n = u.len();
    let mut w = create_out(path)?;
    let go = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "metric,i,j,value")?;
        writeln!(w, "burn_in,,,{burn_in}")?;
        for i in 0..n {
            writeln!(w, "mean_observed,{i},,{:?}", est.mean[i])?;
            writeln!(w, "mean_expected,{i},,{:?}", u[i])?;
            writeln!(w, "mean_abs_error,{i},,{:?}", (est.mean[i] - u[i]).abs())?;
        }
        for i in 0..n {
            for j in 0..n {
                writeln!(w, "cov_observed,{i},{j},{:?}", est.covariance.get(i, j))?;
                writeln!(w, "cov_aggregate_law,{i},{j},{:?}", theo.covariance.get(i, j))?;
                writeln!(w, "cov_stationary_law,{i},{j},{:?}", stationary.get(i, j))?;
            }
        }
        writeln!(w, "cov_rel_error_aggregate_law,,,{err_theo:?}")?;
        writeln!(w, "cov_rel_error_stationary_law,,,{err_stat:?}")?;
        Ok(())
    };
    go(&mut w).map_err(|e| io_failure(path, e))
}
