//! Asynchronous execution under the shared-register model.
//!
//! Each directed edge (i, j) has a single-writer single-reader register
//! written by i and read by j. A node's program is a fixed cycle: write the
//! current output to every outgoing register, reset the output from a fresh
//! input sample, then read each incoming register and accumulate. Every
//! atomic step changes exactly one register or one local variable; the
//! input-read/reset line counts as one atomic step of its own, which gives
//! each input sample a well-defined timestamp.
//!
//! The simulation is a sequential interleaving engine; asynchrony is the
//! model being simulated, not a property of the implementation.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::inputs::InputSource;
use crate::linalg::Vector;
use crate::topology::{NodeWeights, WeightedGraph};

#[derive(Debug, Error)]
pub enum AsyncError {
    /// Coordinate-at-a-time sampling is only exact for coordinate-wise
    /// models; a Gaussian input must have diagonal covariance.
    #[error("async runs need a coordinate-wise input model (diagonal Gaussian covariance)")]
    NonCoordinatewiseInput,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Scheduling policy over atomic steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// One atomic step per node in index order, cycling.
    RoundRobin,
    /// Uniformly random node, except that a node starved for `window · n`
    /// steps is scheduled immediately. Fairness is enforced, not just likely.
    RandomFair { window: usize },
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub policy: Policy,
    pub seed: u64,
}

/// Initial state: local outputs plus arbitrary register contents, both part
/// of the transient-fault state. Registers are ordered per [`edge_list`].
#[derive(Debug, Clone)]
pub struct AsyncInit {
    pub outputs: Vector,
    pub registers: Vec<f64>,
}

/// Directed edges in register-bank order: for each writer i, its outgoing
/// edges to neighbors in adjacency order.
pub fn edge_list(g: &WeightedGraph) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..g.n() {
        for &j in g.neighbors(i) {
            edges.push((i, j));
        }
    }
    edges
}

/// Register contents drawn uniform in [-z0, z0], modeling arbitrary
/// transient-fault state.
pub fn uniform_registers(g: &WeightedGraph, z0: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..edge_list(g).len()).map(|_| rng.gen_range(-z0..=z0)).collect()
}

/// Atomic steps per full program sweep of node i: one write per neighbor,
/// the input reset, then a read and an update per neighbor.
pub fn sweep_len(g: &WeightedGraph, i: usize) -> usize {
    3 * g.neighbors(i).len() + 1
}

/// What a single atomic step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    /// Line 03: wrote the node's output to register (writer, reader).
    WriteRegister { writer: usize, reader: usize },
    /// Line 04: sampled the input and reset the local output.
    ReadInput,
    /// Line 06: read register (writer, reader) into temp.
    ReadRegister { writer: usize, reader: usize },
    /// Line 07: accumulated temp into the local output.
    Update,
}

impl Action {
    /// Program line in the algorithm listing.
    pub fn line(&self) -> u8 {
        match self {
            Action::WriteRegister { .. } => 3,
            Action::ReadInput => 4,
            Action::ReadRegister { .. } => 6,
            Action::Update => 7,
        }
    }
}

/// One entry of the atomic-step log.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    pub node: usize,
    pub action: Action,
    /// The value written, read, sampled, or accumulated to.
    pub value: f64,
}

/// Full-state snapshot at a requested step.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub registers: Vec<f64>,
    pub outputs: Vec<f64>,
    pub committed: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep the full atomic-step log (memory scales with `total_steps`).
    pub log_steps: bool,
    /// Step indices at which to snapshot all registers and locals.
    pub snapshot_at: Vec<usize>,
}

/// Record of an asynchronous run.
#[derive(Debug, Clone)]
pub struct AsyncTrace {
    pub total_steps: usize,
    /// Step index closing each detected round, in order.
    pub boundaries: Vec<usize>,
    /// Committed outputs at each round boundary.
    pub boundary_outputs: Vec<Vector>,
    /// Committed outputs at the end of the run.
    pub final_outputs: Vector,
    /// Count of reads in round k+1 whose source write predates round k.
    pub staleness_violations: usize,
    pub first_staleness_violation: Option<StalenessViolation>,
    /// Per-node count of input samples consumed (line-04 executions).
    pub update_counts: Vec<u64>,
    pub steps: Option<Vec<StepRecord>>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, Copy)]
pub struct StalenessViolation {
    pub step: usize,
    pub reader: usize,
    pub writer: usize,
    pub written_round: usize,
    pub read_round: usize,
}

/// Program counter over one sweep of the node program.
#[derive(Debug, Clone, Copy)]
enum Phase {
    Write(usize),
    ReadInput,
    Read(usize),
    Update(usize),
}

struct NodeState {
    phase: Phase,
    output: f64,
    committed: f64,
    temp: f64,
    /// Line-04 executions so far; indexes the node's input stream.
    update_count: u64,
    /// Steps taken since the last round boundary.
    steps_since_boundary: usize,
}

/// Execute `total_steps` atomic steps under the schedule.
pub fn run_async(
    g: &WeightedGraph,
    weights: &NodeWeights,
    source: &InputSource,
    init: &AsyncInit,
    schedule: &Schedule,
    total_steps: usize,
    opts: &RunOptions,
) -> Result<AsyncTrace, AsyncError> {
    let n = g.n();
    if !source.is_coordinatewise() {
        return Err(AsyncError::NonCoordinatewiseInput);
    }
    if init.outputs.len() != n || source.dim() != n {
        return Err(AsyncError::Dimension(format!(
            "graph has {} nodes, initial outputs {}, input dim {}",
            n,
            init.outputs.len(),
            source.dim()
        )));
    }
    let edges = edge_list(g);
    if init.registers.len() != edges.len() {
        return Err(AsyncError::Dimension(format!(
            "graph has {} registers, initial bank has {}",
            edges.len(),
            init.registers.len()
        )));
    }

    // Register bank plus per-node in/out index tables for the hot path.
    let mut reg_values = init.registers.clone();
    let mut reg_written_round = vec![0usize; edges.len()];
    let index: HashMap<(usize, usize), usize> =
        edges.iter().copied().enumerate().map(|(k, e)| (e, k)).collect();
    // the register model needs an undirected communication graph: whoever
    // i listens to must also be writing a register toward i
    for i in 0..n {
        for &j in g.neighbors(i) {
            if !index.contains_key(&(j, i)) {
                return Err(AsyncError::Dimension(format!(
                    "asymmetric adjacency: node {i} reads node {j} but not vice versa"
                )));
            }
        }
    }
    let out_reg: Vec<Vec<usize>> = (0..n)
        .map(|i| g.neighbors(i).iter().map(|&j| index[&(i, j)]).collect())
        .collect();
    let in_reg: Vec<Vec<usize>> = (0..n)
        .map(|i| g.neighbors(i).iter().map(|&j| index[&(j, i)]).collect())
        .collect();
    let sweep_lens: Vec<usize> = (0..n).map(|i| sweep_len(g, i)).collect();

    let mut nodes: Vec<NodeState> = (0..n)
        .map(|i| NodeState {
            phase: if g.neighbors(i).is_empty() { Phase::ReadInput } else { Phase::Write(0) },
            output: init.outputs[i],
            committed: init.outputs[i],
            temp: 0.0,
            update_count: 0,
            steps_since_boundary: 0,
        })
        .collect();

    let mut scheduler = SchedulerState::new(n, schedule);
    let mut boundaries = Vec::new();
    let mut boundary_outputs = Vec::new();
    let mut staleness_violations = 0usize;
    let mut first_staleness_violation = None;
    let mut steps_log = if opts.log_steps { Some(Vec::with_capacity(total_steps)) } else { None };
    let mut snapshots = Vec::new();
    let mut snapshot_requests = opts.snapshot_at.clone();
    snapshot_requests.sort_unstable();
    let mut next_snapshot = 0usize;

    for step in 1..=total_steps {
        let i = scheduler.pick();
        let deg = g.neighbors(i).len();
        // current round is 1-based: the round being formed now
        let current_round = boundaries.len() + 1;

        let (action, value) = match nodes[i].phase {
            Phase::Write(k) => {
                let reg = out_reg[i][k];
                let value = nodes[i].output;
                reg_values[reg] = value;
                reg_written_round[reg] = current_round;
                nodes[i].phase = if k + 1 < deg { Phase::Write(k + 1) } else { Phase::ReadInput };
                (Action::WriteRegister { writer: i, reader: g.neighbors(i)[k] }, value)
            }
            Phase::ReadInput => {
                let input = source.input_coord_at(nodes[i].update_count, i);
                nodes[i].update_count += 1;
                nodes[i].output = weights.self_weight[i] * input;
                if deg == 0 {
                    nodes[i].committed = nodes[i].output;
                    nodes[i].phase = Phase::ReadInput;
                } else {
                    nodes[i].phase = Phase::Read(0);
                }
                (Action::ReadInput, input)
            }
            Phase::Read(k) => {
                let reg = in_reg[i][k];
                let value = reg_values[reg];
                nodes[i].temp = value;
                // value read in round m must have been written no earlier
                // than round m-1; initial contents count as round 0
                if current_round >= 2 && reg_written_round[reg] + 1 < current_round {
                    staleness_violations += 1;
                    if first_staleness_violation.is_none() {
                        first_staleness_violation = Some(StalenessViolation {
                            step,
                            reader: i,
                            writer: g.neighbors(i)[k],
                            written_round: reg_written_round[reg],
                            read_round: current_round,
                        });
                    }
                }
                nodes[i].phase = Phase::Update(k);
                (Action::ReadRegister { writer: g.neighbors(i)[k], reader: i }, value)
            }
            Phase::Update(k) => {
                nodes[i].output += weights.neighbor_weight[i][k] * nodes[i].temp;
                let value = nodes[i].output;
                if k + 1 < deg {
                    nodes[i].phase = Phase::Read(k + 1);
                } else {
                    nodes[i].committed = nodes[i].output;
                    nodes[i].phase = Phase::Write(0);
                }
                (Action::Update, value)
            }
        };

        if let Some(log) = steps_log.as_mut() {
            log.push(StepRecord { step, node: i, action, value });
        }

        nodes[i].steps_since_boundary += 1;
        if nodes.iter().zip(&sweep_lens).all(|(s, &l)| s.steps_since_boundary >= l) {
            boundaries.push(step);
            boundary_outputs.push(Vector::new(nodes.iter().map(|s| s.committed).collect()));
            for s in nodes.iter_mut() {
                s.steps_since_boundary = 0;
            }
        }

        while next_snapshot < snapshot_requests.len() && snapshot_requests[next_snapshot] == step {
            snapshots.push(Snapshot {
                step,
                registers: reg_values.clone(),
                outputs: nodes.iter().map(|s| s.output).collect(),
                committed: nodes.iter().map(|s| s.committed).collect(),
            });
            next_snapshot += 1;
        }
    }

    Ok(AsyncTrace {
        total_steps,
        boundaries,
        boundary_outputs,
        final_outputs: Vector::new(nodes.iter().map(|s| s.committed).collect()),
        staleness_violations,
        first_staleness_violation,
        update_counts: nodes.iter().map(|s| s.update_count).collect(),
        steps: steps_log,
        snapshots,
    })
}

struct SchedulerState {
    n: usize,
    policy: Policy,
    rng: ChaCha8Rng,
    /// Steps elapsed since each node last ran.
    starvation: Vec<usize>,
    next_rr: usize,
}

impl SchedulerState {
    fn new(n: usize, schedule: &Schedule) -> Self {
        SchedulerState {
            n,
            policy: schedule.policy,
            rng: ChaCha8Rng::seed_from_u64(schedule.seed),
            starvation: vec![0; n],
            next_rr: 0,
        }
    }

    fn pick(&mut self) -> usize {
        let i = match self.policy {
            Policy::RoundRobin => {
                let i = self.next_rr;
                self.next_rr = (self.next_rr + 1) % self.n;
                i
            }
            Policy::RandomFair { window } => {
                let cap = window * self.n;
                match (0..self.n).find(|&j| self.starvation[j] >= cap) {
                    Some(starved) => starved,
                    None => self.rng.gen_range(0..self.n),
                }
            }
        };
        for (j, s) in self.starvation.iter_mut().enumerate() {
            *s = if j == i { 0 } else { *s + 1 };
        }
        i
    }
}

/// Recompute round boundaries from a step log: greedy minimal prefixes in
/// which every node has taken a full sweep's worth of steps.
///
/// Independent of the engine's online detection; the two must agree.
pub fn detect_rounds(g: &WeightedGraph, steps: &[StepRecord]) -> Vec<usize> {
    let n = g.n();
    let sweep_lens: Vec<usize> = (0..n).map(|i| sweep_len(g, i)).collect();
    let mut counts = vec![0usize; n];
    let mut boundaries = Vec::new();
    for rec in steps {
        counts[rec.node] += 1;
        if counts.iter().zip(&sweep_lens).all(|(&c, &l)| c >= l) {
            boundaries.push(rec.step);
            counts.iter_mut().for_each(|c| *c = 0);
        }
    }
    boundaries
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::{gen_sequence, InputModel, InputSource};
    use crate::linalg::{inf_norm_vec, jacobi_split, solve_exact, Matrix, Vector};
    use crate::sync_engine::{run_sync, Configuration};
    use crate::topology::{build_circle, build_unit_disc, node_weights, WeightedGraph};

    fn box_source(n: usize, delta: f64, seed: u64) -> InputSource {
        InputSource::new(
            InputModel::BoxBounded { center: Vector::new(vec![0.4; n]), delta },
            seed,
        )
        .unwrap()
    }

    fn zero_init(g: &WeightedGraph) -> AsyncInit {
        AsyncInit { outputs: Vector::zeros(g.n()), registers: vec![0.0; edge_list(g).len()] }
    }

    #[test]
    fn first_steps_follow_the_program() {
        let g = build_circle(3, 3.0, -1.0).unwrap();
        let nw = node_weights(&g).unwrap();
        let source = box_source(3, 0.0, 0);
        let init = AsyncInit {
            outputs: Vector::new(vec![7.0, 8.0, 9.0]),
            registers: vec![0.0; edge_list(&g).len()],
        };
        let sched = Schedule { policy: Policy::RoundRobin, seed: 0 };
        let trace = run_async(
            &g,
            &nw,
            &source,
            &init,
            &sched,
            9,
            &RunOptions { log_steps: true, ..Default::default() },
        )
        .unwrap();
        let steps = trace.steps.unwrap();
        // first two passes are everyone's line-03 writes of the initial outputs
        assert_eq!(steps[0].action, Action::WriteRegister { writer: 0, reader: 1 });
        assert_eq!(steps[0].value, 7.0);
        assert_eq!(steps[3].action, Action::WriteRegister { writer: 0, reader: 2 });
        // then line 04 resets from the input
        assert_eq!(steps[6].action, Action::ReadInput);
        assert_eq!(steps[6].value, 0.4);
    }

    #[test]
    fn read_step_takes_register_value() {
        let g = build_circle(3, 3.0, -1.0).unwrap();
        let nw = node_weights(&g).unwrap();
        let source = box_source(3, 0.0, 0);
        let init = AsyncInit {
            outputs: Vector::new(vec![1.0, 2.0, 3.0]),
            registers: vec![0.0; 6],
        };
        let sched = Schedule { policy: Policy::RoundRobin, seed: 0 };
        let trace = run_async(
            &g,
            &nw,
            &source,
            &init,
            &sched,
            12,
            &RunOptions { log_steps: true, ..Default::default() },
        )
        .unwrap();
        let steps = trace.steps.unwrap();
        // step 10 (1-based) is node 0's first line-06 read of R(1,0),
        // which node 1 wrote (value 2.0) during the write phase
        assert_eq!(steps[9].node, 0);
        assert_eq!(steps[9].action, Action::ReadRegister { writer: 1, reader: 0 });
        assert_eq!(steps[9].value, 2.0);
    }

    #[test]
    fn isolated_node_cycles_input_only() {
        let g = WeightedGraph::from_matrix(Matrix::from_rows(&[&[2.0]]));
        let nw = node_weights(&g).unwrap();
        let source = InputSource::new(
            InputModel::Constant { center: Vector::new(vec![6.0]) },
            0,
        )
        .unwrap();
        let init = AsyncInit { outputs: Vector::new(vec![123.0]), registers: vec![] };
        let sched = Schedule { policy: Policy::RoundRobin, seed: 0 };
        let trace =
            run_async(&g, &nw, &source, &init, &sched, 5, &RunOptions::default()).unwrap();
        // self_weight 0.5 * input 6.0
        assert_eq!(trace.final_outputs[0], 3.0);
        // sweep length 1: every step closes a round
        assert_eq!(trace.boundaries, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn round_robin_reproduces_sync_run() {
        let g = build_circle(3, 3.0, -1.0).unwrap();
        let nw = node_weights(&g).unwrap();
        let source = box_source(3, 0.3, 11);
        let passes = 25;
        let l = sweep_len(&g, 0);
        let sched = Schedule { policy: Policy::RoundRobin, seed: 0 };
        let init = AsyncInit {
            outputs: Vector::new(vec![5.0, -2.0, 1.0]),
            registers: vec![0.0; 6],
        };
        let trace = run_async(
            &g,
            &nw,
            &source,
            &init,
            &sched,
            passes * 3 * l,
            &RunOptions::default(),
        )
        .unwrap();

        let seq = gen_sequence(&source, passes);
        let sync = run_sync(&g, &nw, &seq, Configuration::new(init.outputs.clone()));

        assert_eq!(trace.boundaries.len(), passes);
        for (m, b) in trace.boundaries.iter().enumerate() {
            assert_eq!(*b, (m + 1) * 3 * l);
            let diff = trace.boundary_outputs[m].sub(&sync.configs[m].outputs);
            assert!(inf_norm_vec(&diff) <= 1e-12, "pass {m} diverged");
        }
    }

    #[test]
    fn online_and_offline_round_detection_agree() {
        let g = build_unit_disc(8, 2.0, 1.0, 0.9, 5).unwrap();
        let nw = node_weights(&g).unwrap();
        let source = box_source(8, 0.2, 3);
        let init = AsyncInit {
            outputs: Vector::zeros(8),
            registers: uniform_registers(&g, 5.0, 9),
        };
        let sched = Schedule { policy: Policy::RandomFair { window: 4 }, seed: 21 };
        let trace = run_async(
            &g,
            &nw,
            &source,
            &init,
            &sched,
            20_000,
            &RunOptions { log_steps: true, ..Default::default() },
        )
        .unwrap();
        let offline = detect_rounds(&g, trace.steps.as_ref().unwrap());
        assert_eq!(offline, trace.boundaries);
        assert!(!trace.boundaries.is_empty());
    }

    #[test]
    fn random_fair_rounds_are_window_bounded() {
        let g = build_circle(6, 3.0, -1.0).unwrap();
        let nw = node_weights(&g).unwrap();
        let source = box_source(6, 0.1, 2);
        let k = 3;
        let sched = Schedule { policy: Policy::RandomFair { window: k }, seed: 4 };
        let trace = run_async(
            &g,
            &nw,
            &source,
            &zero_init(&g),
            &sched,
            50_000,
            &RunOptions::default(),
        )
        .unwrap();
        let l_max = (0..6).map(|i| sweep_len(&g, i)).max().unwrap();
        let mut prev = 0;
        for &b in &trace.boundaries {
            assert!(b - prev <= k * 6 * l_max, "round spans {} steps", b - prev);
            prev = b;
        }
    }

    #[test]
    fn staleness_never_violated() {
        let g = build_unit_disc(10, 2.5, 1.0, 0.95, 8).unwrap();
        let nw = node_weights(&g).unwrap();
        let source = box_source(10, 0.5, 1);
        let init = AsyncInit {
            outputs: Vector::new(vec![1e6; 10]),
            registers: uniform_registers(&g, 1e6, 2),
        };
        for (policy, seed) in [
            (Policy::RoundRobin, 0),
            (Policy::RandomFair { window: 1 }, 1),
            (Policy::RandomFair { window: 10 }, 2),
        ] {
            let sched = Schedule { policy, seed };
            let trace = run_async(
                &g,
                &nw,
                &source,
                &init,
                &sched,
                100_000,
                &RunOptions::default(),
            )
            .unwrap();
            assert_eq!(trace.staleness_violations, 0, "{policy:?}");
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let g = build_circle(5, 3.0, -1.0).unwrap();
        let nw = node_weights(&g).unwrap();
        let source = box_source(5, 0.2, 6);
        let sched = Schedule { policy: Policy::RandomFair { window: 5 }, seed: 77 };
        let opts = RunOptions { log_steps: true, ..Default::default() };
        let a = run_async(&g, &nw, &source, &zero_init(&g), &sched, 5000, &opts).unwrap();
        let b = run_async(&g, &nw, &source, &zero_init(&g), &sched, 5000, &opts).unwrap();
        assert_eq!(a.final_outputs, b.final_outputs);
        assert_eq!(a.boundaries, b.boundaries);
        let (sa, sb) = (a.steps.unwrap(), b.steps.unwrap());
        assert_eq!(sa.len(), sb.len());
        for (x, y) in sa.iter().zip(&sb) {
            assert_eq!((x.step, x.node, x.action, x.value), (y.step, y.node, y.action, y.value));
        }
    }

    #[test]
    fn constant_input_converges_from_adversarial_registers() {
        let g = build_circle(8, 3.0, -1.0).unwrap();
        let nw = node_weights(&g).unwrap();
        let split = jacobi_split(g.matrix()).unwrap();
        let v = Vector::new(vec![1.5; 8]);
        let u = solve_exact(g.matrix(), &v).unwrap();
        let source = InputSource::new(InputModel::Constant { center: v }, 0).unwrap();
        let init = AsyncInit {
            outputs: Vector::new(vec![1e6; 8]),
            registers: vec![-1e6; edge_list(&g).len()],
        };
        let z = 1e6 + inf_norm_vec(&u);
        let sched = Schedule { policy: Policy::RandomFair { window: 2 }, seed: 9 };
        let trace =
            run_async(&g, &nw, &source, &init, &sched, 200_000, &RunOptions::default()).unwrap();
        for (m, out) in trace.boundary_outputs.iter().enumerate() {
            let err = inf_norm_vec(&out.sub(&u));
            // proof gives exponent k for values committed during round k+1
            let bound = split.norm_b.powi(m as i32) * z + 1e-9 * z;
            assert!(err <= bound, "round {} err {err} bound {bound}", m + 1);
        }
        let final_err = inf_norm_vec(&trace.final_outputs.sub(&u));
        assert!(final_err < 1e-6);
    }

    #[test]
    fn rejects_correlated_gaussian() {
        let g = build_circle(3, 3.0, -1.0).unwrap();
        let nw = node_weights(&g).unwrap();
        let mut cov = Matrix::identity(3);
        cov.set(0, 1, 0.5);
        cov.set(1, 0, 0.5);
        let source = InputSource::new(
            InputModel::Gaussian { mean: Vector::zeros(3), cov },
            0,
        )
        .unwrap();
        let sched = Schedule { policy: Policy::RoundRobin, seed: 0 };
        let err = run_async(&g, &nw, &source, &zero_init(&g), &sched, 10, &RunOptions::default())
            .unwrap_err();
        assert!(matches!(err, AsyncError::NonCoordinatewiseInput));
    }
}
