//! Synchronous round-based execution.
//!
//! Each round every node resets its output to `self_weight · input` and adds
//! `neighbor_weight · previous output` over its adjacency list. Message
//! exchange is modeled by double buffering: round r+1 reads only the round-r
//! outputs, which is exactly the send/receive semantics of the round model.

use crate::inputs::InputSequence;
use crate::linalg::Vector;
use crate::topology::{NodeWeights, WeightedGraph};

/// System state at the start of a round: one output value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub outputs: Vector,
    pub round_index: usize,
}

impl Configuration {
    pub fn new(outputs: Vector) -> Self {
        Configuration { outputs, round_index: 0 }
    }
}

/// Full record of a synchronous run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub initial: Configuration,
    /// Input vector consumed by each round, in order.
    pub inputs: Vec<Vector>,
    /// Configuration after each round; `configs[r]` is O(r+1).
    pub configs: Vec<Configuration>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn final_outputs(&self) -> &Vector {
        self.configs.last().map(|c| &c.outputs).unwrap_or(&self.initial.outputs)
    }
}

/// One round of the node-local update rule.
///
/// Per node this touches only the node's own input and its neighbors'
/// previous outputs, by iterating the adjacency list in ascending order
/// (fixed accumulation order keeps runs bit-reproducible).
pub fn sync_round(
    g: &WeightedGraph,
    weights: &NodeWeights,
    input: &Vector,
    prev: &Configuration,
) -> Configuration {
    let n = g.n();
    assert_eq!(input.len(), n, "input dimension mismatch");
    assert_eq!(prev.outputs.len(), n, "configuration dimension mismatch");
    let mut out = Vector::zeros(n);
    for i in 0..n {
        let mut acc = weights.self_weight[i] * input[i];
        for (k, &j) in g.neighbors(i).iter().enumerate() {
            acc += weights.neighbor_weight[i][k] * prev.outputs[j];
        }
        out[i] = acc;
    }
    Configuration { outputs: out, round_index: prev.round_index + 1 }
}

/// Apply [`sync_round`] once per input vector, recording the full trace.
pub fn run_sync(
    g: &WeightedGraph,
    weights: &NodeWeights,
    seq: &InputSequence,
    initial: Configuration,
) -> RunTrace {
    let mut configs = Vec::with_capacity(seq.len());
    let mut current = initial.clone();
    for input in &seq.vectors {
        current = sync_round(g, weights, input, &current);
        configs.push(current.clone());
    }
    RunTrace { initial, inputs: seq.vectors.clone(), configs }
}
