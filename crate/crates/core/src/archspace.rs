//! Architecture data model: operation vocabularies, space descriptors,
//! validity checking, random sampling, path enumeration, and mutation.
//!
//! An architecture is a DAG stored as a strictly upper-triangular binary
//! adjacency matrix plus one operation label per node, with node 0 fixed
//! to `input` and the last node fixed to `output`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounded attempts for rejection sampling and mutation retries.
const SAMPLE_ATTEMPTS: usize = 10_000;
const MUTATE_ATTEMPTS: usize = 1_000;

/// Default cap on enumerated input-to-output paths.
pub const DEFAULT_PATH_CAP: usize = 256;

/// Operation carried by a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeOp {
    Input,
    Output,
    /// Interior operation, index into the space vocabulary.
    Op(usize),
}

/// Ordered list of interior operation names (excluding input/output).
///
/// The ordering is fixed per space and defines one-hot positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpVocabulary {
    labels: Vec<String>,
}

impl OpVocabulary {
    pub fn new<S: Into<String>>(labels: Vec<S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidConfig("vocabulary must be non-empty".into()));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary label {a:?}")));
            }
            if a == "input" || a == "output" {
                return Err(Error::InvalidConfig("vocabulary may not contain input/output".into()));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, idx: usize) -> &str {
        &self.labels[idx]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Search-space descriptor: node/edge budgets, vocabulary, feature width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDescriptor {
    pub name: String,
    pub max_nodes: usize,
    pub max_edges: usize,
    pub vocab: OpVocabulary,
    /// One-hot width including input/output slots. Defaults to
    /// `|vocab| + 2`; benchmark metadata may override it upward.
    pub node_feature_dim: usize,
    /// Remove nodes that sit on no input-to-output path before encoding.
    #[serde(default = "default_true")]
    pub prune_dangling: bool,
    /// Guard against path blow-up in user-supplied spaces.
    #[serde(default = "default_path_cap")]
    pub path_cap: usize,
}

fn default_true() -> bool {
    true
}

fn default_path_cap() -> usize {
    DEFAULT_PATH_CAP
}

impl SpaceDescriptor {
    pub fn new<S: Into<String>>(
        name: S,
        max_nodes: usize,
        max_edges: usize,
        vocab: OpVocabulary,
    ) -> Result<Self> {
        if max_nodes < 3 {
            return Err(Error::InvalidConfig("max_nodes must be at least 3".into()));
        }
        let node_feature_dim = vocab.len() + 2;
        Ok(Self {
            name: name.into(),
            max_nodes,
            max_edges,
            vocab,
            node_feature_dim,
            prune_dangling: true,
            path_cap: DEFAULT_PATH_CAP,
        })
    }

    /// Override the one-hot width (must cover input/output plus the vocab).
    pub fn with_feature_dim(mut self, dim: usize) -> Result<Self> {
        if dim < self.vocab.len() + 2 {
            return Err(Error::InvalidConfig(format!(
                "node_feature_dim {dim} cannot encode {} ops plus input/output",
                self.vocab.len()
            )));
        }
        self.node_feature_dim = dim;
        Ok(self)
    }

    /// NASBench-101 style space: 7 nodes, 9 edges, 3 ops, 6-dim features.
    pub fn nb101() -> Arc<Self> {
        let vocab = OpVocabulary::new(vec!["conv1x1", "conv3x3", "maxpool3x3"]).unwrap();
        Arc::new(
            Self::new("nb101", 7, 9, vocab)
                .unwrap()
                .with_feature_dim(6)
                .unwrap(),
        )
    }

    /// NASBench-201 style node-op space after cell conversion:
    /// 8 nodes, 8-dim features.
    pub fn nb201() -> Arc<Self> {
        let vocab =
            OpVocabulary::new(vec!["conv1x1", "conv3x3", "avgpool3x3", "skip", "zeroize"]).unwrap();
        Arc::new(
            Self::new("nb201", 8, 28, vocab)
                .unwrap()
                .with_feature_dim(8)
                .unwrap(),
        )
    }

    /// Small synthetic space used by desk-scale experiments and tests.
    pub fn surrogate5() -> Arc<Self> {
        let vocab = OpVocabulary::new(vec!["conv1x1", "conv3x3", "maxpool3x3"]).unwrap();
        Arc::new(Self::new("surr5", 5, 10, vocab).unwrap())
    }

    /// Look up a built-in space by name.
    pub fn preset(name: &str) -> Option<Arc<Self>> {
        match name {
            "nb101" => Some(Self::nb101()),
            "nb201" => Some(Self::nb201()),
            "surr5" => Some(Self::surrogate5()),
            _ => None,
        }
    }

    /// Per-path encoding width: one vocab-sized slot per interior node.
    pub fn slot_width(&self) -> usize {
        (self.max_nodes - 2) * self.vocab.len()
    }

    /// One-hot position for a node operation.
    pub fn feature_index(&self, op: NodeOp) -> usize {
        match op {
            NodeOp::Input => 0,
            NodeOp::Op(i) => 1 + i,
            NodeOp::Output => 1 + self.vocab.len(),
        }
    }

    /// Display label for a node operation.
    pub fn op_label(&self, op: NodeOp) -> &str {
        match op {
            NodeOp::Input => "input",
            NodeOp::Output => "output",
            NodeOp::Op(i) => self.vocab.label(i),
        }
    }

    /// Parse a node label into an operation.
    pub fn parse_op(&self, label: &str) -> Result<NodeOp> {
        match label {
            "input" => Ok(NodeOp::Input),
            "output" => Ok(NodeOp::Output),
            other => self
                .vocab
                .index_of(other)
                .map(NodeOp::Op)
                .ok_or_else(|| Error::UnknownLabel(other.to_string())),
        }
    }
}

/// A node-operation DAG in a given space.
///
/// Immutable after construction; mutation produces new values.
#[derive(Debug, Clone)]
pub struct Architecture {
    adjacency: Vec<Vec<u8>>,
    ops: Vec<NodeOp>,
    space: Arc<SpaceDescriptor>,
}

impl PartialEq for Architecture {
    fn eq(&self, other: &Self) -> bool {
        self.adjacency == other.adjacency
            && self.ops == other.ops
            && self.space.name == other.space.name
    }
}

/// Serialized form of an architecture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchitectureJson {
    pub matrix: Vec<Vec<u8>>,
    pub ops: Vec<String>,
}

impl Architecture {
    /// Build an architecture, checking well-formedness (shapes, label
    /// placement). Graph-level invariants are the business of [`validate`].
    pub fn new(
        adjacency: Vec<Vec<u8>>,
        ops: Vec<NodeOp>,
        space: Arc<SpaceDescriptor>,
    ) -> Result<Self> {
        let h = ops.len();
        if h < 2 {
            return Err(Error::InvalidArchitecture("fewer than 2 nodes".into()));
        }
        if adjacency.len() != h || adjacency.iter().any(|row| row.len() != h) {
            return Err(Error::InvalidArchitecture("adjacency is not H x H".into()));
        }
        if adjacency.iter().flatten().any(|&v| v > 1) {
            return Err(Error::InvalidArchitecture("adjacency entries must be 0/1".into()));
        }
        if ops[0] != NodeOp::Input {
            return Err(Error::InvalidArchitecture("node 0 must be input".into()));
        }
        if ops[h - 1] != NodeOp::Output {
            return Err(Error::InvalidArchitecture("last node must be output".into()));
        }
        for (i, op) in ops.iter().enumerate().take(h - 1).skip(1) {
            match op {
                NodeOp::Op(k) if *k < space.vocab.len() => {}
                _ => {
                    return Err(Error::InvalidArchitecture(format!(
                        "node {i} must carry a vocabulary operation"
                    )))
                }
            }
        }
        Ok(Self { adjacency, ops, space })
    }

    pub fn from_json(json: &ArchitectureJson, space: Arc<SpaceDescriptor>) -> Result<Self> {
        let ops = json
            .ops
            .iter()
            .map(|l| space.parse_op(l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(json.matrix.clone(), ops, space)
    }

    pub fn to_json(&self) -> ArchitectureJson {
        ArchitectureJson {
            matrix: self.adjacency.clone(),
            ops: self.ops.iter().map(|&op| self.space.op_label(op).to_string()).collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.ops.len()
    }

    pub fn ops(&self) -> &[NodeOp] {
        &self.ops
    }

    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adjacency
    }

    pub fn space(&self) -> &Arc<SpaceDescriptor> {
        &self.space
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from][to] == 1
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().flatten().map(|&v| v as usize).sum()
    }

    /// Directed edges in stored (input-to-output) orientation.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let h = self.node_count();
        let mut out = Vec::new();
        for i in 0..h {
            for j in 0..h {
                if self.adjacency[i][j] == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Nodes reachable from input along stored edges.
    fn reachable_from_input(&self) -> Vec<bool> {
        let h = self.node_count();
        let mut seen = vec![false; h];
        seen[0] = true;
        // Upper-triangular: a single forward sweep settles reachability.
        for i in 0..h {
            if !seen[i] {
                continue;
            }
            for j in (i + 1)..h {
                if self.adjacency[i][j] == 1 {
                    seen[j] = true;
                }
            }
        }
        seen
    }

    /// Nodes that can reach output along stored edges.
    fn reaches_output(&self) -> Vec<bool> {
        let h = self.node_count();
        let mut seen = vec![false; h];
        seen[h - 1] = true;
        for i in (0..h).rev() {
            if !seen[i] {
                continue;
            }
            for j in 0..i {
                if self.adjacency[j][i] == 1 {
                    seen[j] = true;
                }
            }
        }
        seen
    }

    /// Interior nodes that sit on no input-to-output path.
    pub fn dangling_nodes(&self) -> Vec<usize> {
        let fwd = self.reachable_from_input();
        let bwd = self.reaches_output();
        (1..self.node_count() - 1).filter(|&i| !(fwd[i] && bwd[i])).collect()
    }

    /// Copy with dangling interior nodes removed and indices compacted.
    pub fn pruned(&self) -> Architecture {
        let dangling = self.dangling_nodes();
        if dangling.is_empty() {
            return self.clone();
        }
        let h = self.node_count();
        let keep: Vec<usize> = (0..h).filter(|i| !dangling.contains(i)).collect();
        let mut adjacency = vec![vec![0u8; keep.len()]; keep.len()];
        for (new_i, &old_i) in keep.iter().enumerate() {
            for (new_j, &old_j) in keep.iter().enumerate() {
                adjacency[new_i][new_j] = self.adjacency[old_i][old_j];
            }
        }
        let ops = keep.iter().map(|&i| self.ops[i]).collect();
        Architecture { adjacency, ops, space: Arc::clone(&self.space) }
    }
}

/// Outcome of [`validate`]: pass/fail, the first violated invariant, and
/// any interior nodes off every input-to-output path.
#[derive(Debug, Clone)]
pub struct ValidityReport {
    pub valid: bool,
    pub violation: Option<String>,
    pub dangling: Vec<usize>,
}

impl ValidityReport {
    fn fail(reason: &str, dangling: Vec<usize>) -> Self {
        Self { valid: false, violation: Some(reason.to_string()), dangling }
    }
}

/// Check structural invariants against the architecture's space.
pub fn validate(arch: &Architecture) -> ValidityReport {
    let h = arch.node_count();
    let dangling = arch.dangling_nodes();
    for i in 0..h {
        for j in 0..=i {
            if arch.adjacency[i][j] == 1 {
                return ValidityReport::fail("not upper-triangular", dangling);
            }
        }
    }
    if h > arch.space.max_nodes {
        return ValidityReport::fail("node budget exceeded", dangling);
    }
    if arch.edge_count() > arch.space.max_edges {
        return ValidityReport::fail("edge budget exceeded", dangling);
    }
    let fwd = arch.reachable_from_input();
    if !fwd[h - 1] {
        return ValidityReport::fail("no input-to-output path", dangling);
    }
    ValidityReport { valid: true, violation: None, dangling }
}

/// Sample a valid architecture with `max_nodes` nodes.
///
/// Deterministic given the RNG state. Edge density varies per attempt so
/// sparse and dense graphs both occur.
pub fn random_architecture<R: Rng>(
    space: &Arc<SpaceDescriptor>,
    rng: &mut R,
) -> Result<Architecture> {
    let h = space.max_nodes;
    for _ in 0..SAMPLE_ATTEMPTS {
        let density: f64 = rng.gen_range(0.1..0.9);
        let mut adjacency = vec![vec![0u8; h]; h];
        for i in 0..h {
            for j in (i + 1)..h {
                if rng.gen_bool(density) {
                    adjacency[i][j] = 1;
                }
            }
        }
        let mut ops = Vec::with_capacity(h);
        ops.push(NodeOp::Input);
        for _ in 1..h - 1 {
            ops.push(NodeOp::Op(rng.gen_range(0..space.vocab.len())));
        }
        ops.push(NodeOp::Output);
        let arch = Architecture::new(adjacency, ops, Arc::clone(space))?;
        if validate(&arch).valid {
            return Ok(arch);
        }
    }
    Err(Error::SpaceTooConstrained { attempts: SAMPLE_ATTEMPTS })
}

/// Mutate edges and operations, re-validating with bounded retries.
///
/// Each potential edge flips with probability `rate / |potential edges|`;
/// each interior op is resampled to a different label with probability
/// `rate / |interior nodes|`.
pub fn mutate<R: Rng>(arch: &Architecture, rate: f64, rng: &mut R) -> Result<Architecture> {
    let h = arch.node_count();
    let potential_edges = (h * (h - 1) / 2) as f64;
    let interior = (h - 2) as f64;
    let edge_p = (rate / potential_edges).clamp(0.0, 1.0);
    let op_p = if h > 2 { (rate / interior).clamp(0.0, 1.0) } else { 0.0 };

    for _ in 0..MUTATE_ATTEMPTS {
        let mut adjacency = arch.adjacency.clone();
        let mut ops = arch.ops.clone();
        for i in 0..h {
            for j in (i + 1)..h {
                if edge_p > 0.0 && rng.gen_bool(edge_p) {
                    adjacency[i][j] ^= 1;
                }
            }
        }
        if arch.space.vocab.len() > 1 {
            for op in ops.iter_mut().take(h - 1).skip(1) {
                if op_p > 0.0 && rng.gen_bool(op_p) {
                    let current = match op {
                        NodeOp::Op(k) => *k,
                        _ => unreachable!(),
                    };
                    let mut pick = rng.gen_range(0..arch.space.vocab.len() - 1);
                    if pick >= current {
                        pick += 1;
                    }
                    *op = NodeOp::Op(pick);
                }
            }
        }
        let child = Architecture::new(adjacency, ops, Arc::clone(&arch.space))?;
        if validate(&child).valid {
            return Ok(child);
        }
    }
    Err(Error::MutationExhausted { attempts: MUTATE_ATTEMPTS })
}

/// One input-to-output path: interior node indices (endpoints excluded)
/// and their vocabulary op indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<usize>,
    pub ops: Vec<usize>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Exhaustively enumerate all input-to-output paths by depth-first search
/// with ascending successors; errors above the space's path cap.
pub fn enumerate_paths(arch: &Architecture) -> Result<Vec<Path>> {
    let h = arch.node_count();
    let cap = arch.space.path_cap;
    let mut paths = Vec::new();
    let mut stack: Vec<usize> = Vec::new();

    fn dfs(
        arch: &Architecture,
        node: usize,
        stack: &mut Vec<usize>,
        paths: &mut Vec<Path>,
        cap: usize,
    ) -> Result<()> {
        let h = arch.node_count();
        if node == h - 1 {
            if paths.len() == cap {
                return Err(Error::PathExplosion { count: cap + 1, cap });
            }
            let ops = stack
                .iter()
                .map(|&i| match arch.ops[i] {
                    NodeOp::Op(k) => k,
                    _ => unreachable!("interior nodes carry vocab ops"),
                })
                .collect();
            paths.push(Path { nodes: stack.clone(), ops });
            return Ok(());
        }
        for next in (node + 1)..h {
            if arch.adjacency[node][next] == 1 {
                if next < h - 1 {
                    stack.push(next);
                    dfs(arch, next, stack, paths, cap)?;
                    stack.pop();
                } else {
                    dfs(arch, next, stack, paths, cap)?;
                }
            }
        }
        Ok(())
    }

    dfs(arch, 0, &mut stack, &mut paths, cap)?;
    let _ = h;
    Ok(paths)
}

/// All canonical architectures of a space: every node count from 2 to
/// `max_nodes`, every adjacency within the edge budget whose interior
/// nodes all sit on a path, every op assignment. Feasible for small
/// spaces only; used to build exhaustive surrogate tables.
pub fn enumerate_space(space: &Arc<SpaceDescriptor>) -> Result<Vec<Architecture>> {
    let mut out = Vec::new();
    for h in 2..=space.max_nodes {
        let bits = h * (h - 1) / 2;
        let positions: Vec<(usize, usize)> = {
            let mut v = Vec::with_capacity(bits);
            for i in 0..h {
                for j in (i + 1)..h {
                    v.push((i, j));
                }
            }
            v
        };
        for mask in 0u64..(1u64 << bits) {
            if (mask.count_ones() as usize) > space.max_edges {
                continue;
            }
            let mut adjacency = vec![vec![0u8; h]; h];
            for (b, &(i, j)) in positions.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    adjacency[i][j] = 1;
                }
            }
            let probe = {
                let mut ops = vec![NodeOp::Input];
                ops.extend(std::iter::repeat(NodeOp::Op(0)).take(h.saturating_sub(2)));
                ops.push(NodeOp::Output);
                Architecture::new(adjacency.clone(), ops, Arc::clone(space))?
            };
            let report = validate(&probe);
            if !report.valid || !report.dangling.is_empty() {
                continue;
            }
            let interior = h - 2;
            let combos = space.vocab.len().pow(interior as u32);
            for combo in 0..combos {
                let mut ops = Vec::with_capacity(h);
                ops.push(NodeOp::Input);
                let mut rem = combo;
                for _ in 0..interior {
                    ops.push(NodeOp::Op(rem % space.vocab.len()));
                    rem /= space.vocab.len();
                }
                ops.push(NodeOp::Output);
                out.push(Architecture::new(adjacency.clone(), ops, Arc::clone(space))?);
            }
        }
    }
    Ok(out)
}
