//! GIN-based model families: the shared architecture-embedding module,
//! the two-branch distance-regression model, the contrastive projection
//! model, and the neural predictor.
//!
//! All three families share one embedding structure (three GIN layers of
//! width 32, each followed by batch norm and ReLU, then global mean
//! pooling) so pretrained embedding weights transfer into the predictor
//! by a prefix rename.

use std::sync::Arc;

use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;

use crate::archspace::Architecture;
use crate::diffcore::{
    batchnorm, dense, init_batchnorm, init_dense, BnUpdate, Checkpoint, Mode, ParameterStore,
    Tape, Var,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Embedding output width (= GIN hidden width).
pub const EMBED_DIM: usize = 32;
/// GIN layer count.
pub const GIN_LAYERS: usize = 3;
/// Hidden width of the regression head.
pub const FRL_HIDDEN: usize = 16;
/// Contrastive projection width.
pub const CCL_DIM: usize = 8;
/// Hidden width of the predictor head.
pub const PREDICTOR_HIDDEN: usize = 8;

/// Block-diagonal batch of graphs.
#[derive(Debug, Clone)]
pub struct GraphBatch<F: Scalar> {
    /// One-hot rows, (total nodes) x feature_dim.
    pub node_features: Array2<F>,
    /// Directed edges in stored (input-to-output) orientation, with
    /// node indices offset per graph.
    pub edges: Arc<Vec<(usize, usize)>>,
    /// Graph index per node; contiguous from 0.
    pub membership: Arc<Vec<usize>>,
    pub graph_count: usize,
}

impl<F: Scalar> GraphBatch<F> {
    pub fn new(
        node_features: Array2<F>,
        edges: Vec<(usize, usize)>,
        membership: Vec<usize>,
        graph_count: usize,
    ) -> Self {
        Self {
            node_features,
            edges: Arc::new(edges),
            membership: Arc::new(membership),
            graph_count,
        }
    }
}

/// Batch architectures block-diagonally; all must share a space.
pub fn to_graph_batch<F: Scalar>(archs: &[&Architecture]) -> Result<GraphBatch<F>> {
    let first = archs.first().ok_or(Error::EmptyInput("graph batch"))?;
    let space = first.space();
    let feature_dim = space.node_feature_dim;
    let total: usize = archs.iter().map(|a| a.node_count()).sum();
    let mut node_features = Array2::zeros((total, feature_dim));
    let mut edges = Vec::new();
    let mut membership = Vec::with_capacity(total);
    let mut base = 0usize;
    for (g, arch) in archs.iter().enumerate() {
        if arch.space().name != space.name {
            return Err(Error::SpaceMismatch {
                left: space.name.clone(),
                right: arch.space().name.clone(),
            });
        }
        for (i, &op) in arch.ops().iter().enumerate() {
            node_features[[base + i, space.feature_index(op)]] = F::one();
            membership.push(g);
        }
        for (u, v) in arch.edges() {
            edges.push((base + u, base + v));
        }
        base += arch.node_count();
    }
    Ok(GraphBatch::new(node_features, edges, membership, archs.len()))
}

/// Embedding-module hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingConfig {
    pub feature_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Add reversed edges before aggregation (ablation switch; default
    /// keeps the stored input-to-output direction only).
    pub bidirectional: bool,
}

impl EmbeddingConfig {
    pub fn for_feature_dim(feature_dim: usize) -> Self {
        Self { feature_dim, hidden: EMBED_DIM, layers: GIN_LAYERS, bidirectional: false }
    }
}

/// Borrowed batch-norm buffers: read-only or read-write.
pub enum Buffers<'a, F: Scalar> {
    Read(&'a ParameterStore<F>),
    Update(&'a mut ParameterStore<F>),
}

impl<'a, F: Scalar> Buffers<'a, F> {
    fn get(&self, name: &str) -> Array2<F> {
        match self {
            Buffers::Read(s) => s.buffer(name).clone(),
            Buffers::Update(s) => s.buffer(name).clone(),
        }
    }
}

/// Registered parameter handles for one tape pass.
pub type ParamVars = IndexMap<String, Var>;

fn bn_forward<F: Scalar>(
    tape: &mut Tape<F>,
    x: Var,
    prefix: &str,
    params: &ParamVars,
    buffers: &mut Buffers<'_, F>,
    mode: Mode,
) -> Var {
    let gamma = params[&format!("{prefix}.gamma")];
    let beta = params[&format!("{prefix}.beta")];
    let mean_name = format!("{prefix}.mean");
    let var_name = format!("{prefix}.var");
    let running_mean = buffers.get(&mean_name);
    let running_var = buffers.get(&var_name);
    match buffers {
        Buffers::Read(_) => batchnorm(
            tape,
            x,
            gamma,
            beta,
            &running_mean,
            &running_var,
            mode,
            None,
        ),
        Buffers::Update(store) => {
            // Split the two buffer borrows through raw indices.
            let mut mean = store.buffer(&mean_name).clone();
            let mut var = store.buffer(&var_name).clone();
            let out = batchnorm(
                tape,
                x,
                gamma,
                beta,
                &running_mean,
                &running_var,
                mode,
                Some(BnUpdate { mean: &mut mean, var: &mut var }),
            );
            store.buffer_mut(&mean_name).assign(&mean);
            store.buffer_mut(&var_name).assign(&var);
            out
        }
    }
}

/// One GIN layer: sum in-neighbor features into each node (epsilon
/// fixed at 0), then dense, batch norm, ReLU.
pub fn gin_layer<F: Scalar>(
    tape: &mut Tape<F>,
    h: Var,
    edges: Arc<Vec<(usize, usize)>>,
    prefix: &str,
    params: &ParamVars,
    buffers: &mut Buffers<'_, F>,
    mode: Mode,
) -> Var {
    let agg = tape.edge_sum(h, edges);
    let pre = tape.add(h, agg);
    let w = params[&format!("{prefix}.w")];
    let b = params[&format!("{prefix}.b")];
    let lin = dense(tape, pre, w, b);
    let normed = bn_forward(tape, lin, &format!("{prefix}.bn"), params, buffers, mode);
    tape.relu(normed)
}

fn init_embedding<F: Scalar, R: Rng>(
    store: &mut ParameterStore<F>,
    prefix: &str,
    cfg: &EmbeddingConfig,
    rng: &mut R,
) {
    let mut in_dim = cfg.feature_dim;
    for layer in 0..cfg.layers {
        let name = format!("{prefix}.gin{layer}");
        init_dense(store, &name, in_dim, cfg.hidden, rng);
        init_batchnorm(store, &format!("{name}.bn"), cfg.hidden);
        in_dim = cfg.hidden;
    }
}

/// Suffixes of all embedding-module entries (parameters and buffers).
fn embedding_suffixes(cfg: &EmbeddingConfig) -> Vec<String> {
    let mut out = Vec::new();
    for layer in 0..cfg.layers {
        for suffix in [".w", ".b", ".bn.gamma", ".bn.beta", ".bn.mean", ".bn.var"] {
            out.push(format!("gin{layer}{suffix}"));
        }
    }
    out
}

/// Three GIN layers then global mean pooling: one row per graph.
pub fn embed<F: Scalar>(
    tape: &mut Tape<F>,
    batch: &GraphBatch<F>,
    prefix: &str,
    cfg: &EmbeddingConfig,
    params: &ParamVars,
    buffers: &mut Buffers<'_, F>,
    mode: Mode,
) -> Var {
    let edges = if cfg.bidirectional {
        let mut both = batch.edges.as_ref().clone();
        both.extend(batch.edges.iter().map(|&(u, v)| (v, u)));
        Arc::new(both)
    } else {
        Arc::clone(&batch.edges)
    };
    let mut h = tape.leaf(batch.node_features.clone());
    for layer in 0..cfg.layers {
        h = gin_layer(
            tape,
            h,
            Arc::clone(&edges),
            &format!("{prefix}.gin{layer}"),
            params,
            buffers,
            mode,
        );
    }
    tape.segment_mean(h, Arc::clone(&batch.membership), batch.graph_count)
}

/// Two-branch distance-regression model: independent embeddings,
/// concatenated, then a 16-wide ReLU layer and a linear scalar output.
#[derive(Debug, Clone)]
pub struct ModelFrl<F: Scalar> {
    pub store: ParameterStore<F>,
    pub cfg: EmbeddingConfig,
}

impl<F: Scalar> ModelFrl<F> {
    pub fn init<R: Rng>(cfg: EmbeddingConfig, rng: &mut R) -> Self {
        let mut store = ParameterStore::new();
        init_embedding(&mut store, "branch0", &cfg, rng);
        init_embedding(&mut store, "branch1", &cfg, rng);
        init_dense(&mut store, "head.fc1", 2 * cfg.hidden, FRL_HIDDEN, rng);
        init_dense(&mut store, "head.fc2", FRL_HIDDEN, 1, rng);
        Self { store, cfg }
    }

    /// Predict one value per (left, right) pair; batches must align.
    pub fn forward(
        &self,
        tape: &mut Tape<F>,
        params: &ParamVars,
        buffers: &mut Buffers<'_, F>,
        left: &GraphBatch<F>,
        right: &GraphBatch<F>,
        mode: Mode,
    ) -> Var {
        assert_eq!(left.graph_count, right.graph_count, "pair batch mismatch");
        let e0 = embed(tape, left, "branch0", &self.cfg, params, buffers, mode);
        let e1 = embed(tape, right, "branch1", &self.cfg, params, buffers, mode);
        let joint = tape.concat_cols(e0, e1);
        let h = dense(tape, joint, params["head.fc1.w"], params["head.fc1.b"]);
        let h = tape.relu(h);
        dense(tape, h, params["head.fc2.w"], params["head.fc2.b"])
    }
}

/// Contrastive model: one embedding module plus a two-layer projection
/// to an 8-dimensional feature; callers L2-normalize the projections.
#[derive(Debug, Clone)]
pub struct ModelFccl<F: Scalar> {
    pub store: ParameterStore<F>,
    pub cfg: EmbeddingConfig,
}

impl<F: Scalar> ModelFccl<F> {
    pub fn init<R: Rng>(cfg: EmbeddingConfig, rng: &mut R) -> Self {
        let mut store = ParameterStore::new();
        init_embedding(&mut store, "embed", &cfg, rng);
        init_dense(&mut store, "proj.fc1", cfg.hidden, CCL_DIM, rng);
        init_dense(&mut store, "proj.fc2", CCL_DIM, CCL_DIM, rng);
        Self { store, cfg }
    }

    /// Unnormalized projections, one row per graph.
    pub fn project(
        &self,
        tape: &mut Tape<F>,
        params: &ParamVars,
        buffers: &mut Buffers<'_, F>,
        batch: &GraphBatch<F>,
        mode: Mode,
    ) -> Var {
        let e = embed(tape, batch, "embed", &self.cfg, params, buffers, mode);
        let h = dense(tape, e, params["proj.fc1.w"], params["proj.fc1.b"]);
        let h = tape.relu(h);
        dense(tape, h, params["proj.fc2.w"], params["proj.fc2.b"])
    }
}

/// Neural predictor: embedding module plus an 8-wide ReLU layer and a
/// linear scalar output.
#[derive(Debug, Clone)]
pub struct Predictor<F: Scalar> {
    pub store: ParameterStore<F>,
    pub cfg: EmbeddingConfig,
}

impl<F: Scalar> Predictor<F> {
    pub fn init<R: Rng>(cfg: EmbeddingConfig, rng: &mut R) -> Self {
        let mut store = ParameterStore::new();
        init_embedding(&mut store, "embed", &cfg, rng);
        init_dense(&mut store, "head.fc1", cfg.hidden, PREDICTOR_HIDDEN, rng);
        init_dense(&mut store, "head.fc2", PREDICTOR_HIDDEN, 1, rng);
        Self { store, cfg }
    }

    pub fn forward(
        &self,
        tape: &mut Tape<F>,
        params: &ParamVars,
        buffers: &mut Buffers<'_, F>,
        batch: &GraphBatch<F>,
        mode: Mode,
    ) -> Var {
        let e = embed(tape, batch, "embed", &self.cfg, params, buffers, mode);
        let h = dense(tape, e, params["head.fc1.w"], params["head.fc1.b"]);
        let h = tape.relu(h);
        dense(tape, h, params["head.fc2.w"], params["head.fc2.b"])
    }

    /// Deterministic eval-mode predictions for a set of architectures.
    pub fn predict(&self, archs: &[&Architecture]) -> Result<Vec<F>> {
        let batch = to_graph_batch(archs)?;
        let mut tape = Tape::new();
        let params = self.store.leaves(&mut tape);
        let mut buffers = Buffers::Read(&self.store);
        let out = self.forward(&mut tape, &params, &mut buffers, &batch, Mode::Eval);
        Ok(tape.data(out).column(0).iter().copied().collect())
    }

    /// Copy pretrained embedding weights and buffers into this
    /// predictor. The source branch is `branch0` for two-branch
    /// checkpoints and `embed` otherwise; the head stays untouched.
    /// Verified by a checksum over the transferred entries.
    pub fn load_pretrained_embedding(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let source: ParameterStore<F> = ckpt.to_store()?;
        let source_prefix = match ckpt.kind.as_str() {
            "frl" => "branch0.",
            "ccl" | "predictor" => "embed.",
            other => {
                return Err(Error::WeightTransfer(format!("unknown checkpoint kind {other:?}")))
            }
        };
        for suffix in embedding_suffixes(&self.cfg) {
            let src_name = format!("{source_prefix}{suffix}");
            let dst_name = format!("embed.{suffix}");
            if suffix.ends_with(".mean") || suffix.ends_with(".var") {
                let src = source
                    .buffer_names()
                    .any(|n| n == src_name)
                    .then(|| source.buffer(&src_name).clone())
                    .ok_or_else(|| Error::WeightTransfer(format!("missing buffer {src_name}")))?;
                if src.dim() != self.store.buffer(&dst_name).dim() {
                    return Err(Error::WeightTransfer(format!("shape mismatch for {src_name}")));
                }
                self.store.buffer_mut(&dst_name).assign(&src);
            } else {
                if !source.has_param(&src_name) {
                    return Err(Error::WeightTransfer(format!("missing parameter {src_name}")));
                }
                let src = source.param(&src_name).data.clone();
                if src.dim() != self.store.param(&dst_name).data.dim() {
                    return Err(Error::WeightTransfer(format!("shape mismatch for {src_name}")));
                }
                self.store.param_mut(&dst_name).data.assign(&src);
            }
        }
        let expected = source.checksum(source_prefix);
        let got = self.store.checksum("embed.");
        if expected != got {
            return Err(Error::WeightTransfer("checksum mismatch after transfer".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::{random_architecture, SpaceDescriptor};
    use crate::diffcore::grad_check_sampled;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sample(space: &Arc<SpaceDescriptor>, seed: u64) -> Architecture {
        random_architecture(space, &mut ChaCha12Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(to_graph_batch::<f64>(&[]).is_err());
    }

    #[test]
    fn single_graph_batch_layout() {
        let space = SpaceDescriptor::surrogate5();
        let arch = sample(&space, 1);
        let batch = to_graph_batch::<f64>(&[&arch]).unwrap();
        assert_eq!(batch.node_features.nrows(), arch.node_count());
        assert!(batch.membership.iter().all(|&m| m == 0));
        assert_eq!(batch.graph_count, 1);
        for row in batch.node_features.rows() {
            assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
        }
    }

    #[test]
    fn batched_edges_never_cross_graphs() {
        let space = SpaceDescriptor::surrogate5();
        let (a, b) = (sample(&space, 2), sample(&space, 3));
        let batch = to_graph_batch::<f64>(&[&a, &b]).unwrap();
        for &(u, v) in batch.edges.iter() {
            assert_eq!(batch.membership[u], batch.membership[v]);
        }
    }

    /// Identity-parameter GIN layer (weights I, bias 0, BN eval with
    /// unit running stats) reduces to ReLU(h + in-neighbor sum).
    #[test]
    fn gin_layer_identity_params() {
        let dim = 3;
        let mut store = ParameterStore::<f64>::new();
        store.insert_param("gin.w", Array2::eye(dim));
        store.insert_param("gin.b", Array2::zeros((1, dim)));
        init_batchnorm(&mut store, "gin.bn", dim);

        let mut tape = Tape::new();
        let params = store.leaves(&mut tape);
        let h = tape.leaf(array![[1.0, -2.0, 0.5], [0.25, 1.0, -1.0]]);
        let edges = Arc::new(vec![(0usize, 1usize)]);
        let mut buffers = Buffers::Read(&store);
        let out = gin_layer(&mut tape, h, edges, "gin", &params, &mut buffers, Mode::Eval);

        // isolated node 0: ReLU(h_0); node 1: ReLU(h_1 + h_0)
        let expect = [[1.0, 0.0, 0.5], [1.25, 0.0, 0.0]];
        for i in 0..2 {
            for j in 0..dim {
                assert!(
                    (tape.data(out)[[i, j]] - expect[i][j]).abs() < 1e-4,
                    "({i},{j}): {} vs {}",
                    tape.data(out)[[i, j]],
                    expect[i][j]
                );
            }
        }
    }

    /// Line graph 0 -> 1 -> 2 with tiny known weights, worked by hand.
    #[test]
    fn gin_layer_hand_computed_line_graph() {
        let mut store = ParameterStore::<f64>::new();
        store.insert_param("gin.w", array![[2.0], [1.0]]);
        store.insert_param("gin.b", array![[0.5]]);
        init_batchnorm(&mut store, "gin.bn", 1);
        // BN eval with mean 1, var 4: y = (x - 1) / sqrt(4 + eps)
        store.buffer_mut("gin.bn.mean").assign(&array![[1.0]]);
        store.buffer_mut("gin.bn.var").assign(&array![[4.0]]);

        let mut tape = Tape::new();
        let params = store.leaves(&mut tape);
        let h = tape.leaf(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let edges = Arc::new(vec![(0usize, 1usize), (1, 2)]);
        let mut buffers = Buffers::Read(&store);
        let out = gin_layer(&mut tape, h, edges, "gin", &params, &mut buffers, Mode::Eval);

        // pre-dense: node0 [1,0]; node1 [1,1]; node2 [1,2]
        // dense:     node0 2.5;   node1 3.5;   node2 4.5
        // bn:        (x-1)/sqrt(4+1e-5), relu keeps positives
        let std = (4.0f64 + 1e-5).sqrt();
        let expect = [(2.5 - 1.0) / std, (3.5 - 1.0) / std, (4.5 - 1.0) / std];
        for (i, e) in expect.iter().enumerate() {
            assert!((tape.data(out)[[i, 0]] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_no_edges_equals_single_node_transform() {
        // identical features, no edges: pooled embedding equals any
        // single node's transformed feature row
        let cfg = EmbeddingConfig { feature_dim: 4, hidden: 8, layers: 3, bidirectional: false };
        let mut rng = ChaCha12Rng::seed_from_u64(60);
        let mut store = ParameterStore::<f64>::new();
        init_embedding(&mut store, "embed", &cfg, &mut rng);

        let mut features = Array2::zeros((3, 4));
        for i in 0..3 {
            features[[i, 2]] = 1.0;
        }
        let batch = GraphBatch::new(features, vec![], vec![0, 0, 0], 1);
        let single = GraphBatch::new(
            {
                let mut f = Array2::zeros((1, 4));
                f[[0, 2]] = 1.0;
                f
            },
            vec![],
            vec![0],
            1,
        );

        let mut tape = Tape::new();
        let params = store.leaves(&mut tape);
        let mut buffers = Buffers::Read(&store);
        let e3 = embed(&mut tape, &batch, "embed", &cfg, &params, &mut buffers, Mode::Eval);
        let e1 = embed(&mut tape, &single, "embed", &cfg, &params, &mut buffers, Mode::Eval);
        for j in 0..cfg.hidden {
            assert!((tape.data(e3)[[0, j]] - tape.data(e1)[[0, j]]).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_embedding_is_batching_invariant() {
        let space = SpaceDescriptor::surrogate5();
        let (a, b) = (sample(&space, 4), sample(&space, 5));
        let cfg = EmbeddingConfig::for_feature_dim(space.node_feature_dim);
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        let mut store = ParameterStore::<f64>::new();
        init_embedding(&mut store, "embed", &cfg, &mut rng);

        let run = |archs: &[&Architecture]| {
            let batch = to_graph_batch::<f64>(archs).unwrap();
            let mut tape = Tape::new();
            let params = store.leaves(&mut tape);
            let mut buffers = Buffers::Read(&store);
            let e = embed(&mut tape, &batch, "embed", &cfg, &params, &mut buffers, Mode::Eval);
            tape.data(e).clone()
        };
        let joint = run(&[&a, &b]);
        let ea = run(&[&a]);
        let eb = run(&[&b]);
        for j in 0..cfg.hidden {
            assert!((joint[[0, j]] - ea[[0, j]]).abs() < 1e-12);
            assert!((joint[[1, j]] - eb[[0, j]]).abs() < 1e-12);
        }
        // duplicating a graph duplicates its row
        let dup = run(&[&a, &a]);
        for j in 0..cfg.hidden {
            assert!((dup[[0, j]] - dup[[1, j]]).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_is_permutation_invariant() {
        let cfg = EmbeddingConfig { feature_dim: 5, hidden: 16, layers: 3, bidirectional: false };
        let mut rng = ChaCha12Rng::seed_from_u64(62);
        let mut store = ParameterStore::<f64>::new();
        init_embedding(&mut store, "embed", &cfg, &mut rng);

        // original: 4 nodes, edges 0->1, 0->2, 1->3, 2->3
        let mut features = Array2::zeros((4, 5));
        for (i, f) in [0usize, 2, 3, 1].iter().enumerate() {
            features[[i, *f]] = 1.0;
        }
        let edges = vec![(0usize, 1usize), (0, 2), (1, 3), (2, 3)];

        // permute nodes with sigma = [2, 0, 3, 1]
        let sigma = [2usize, 0, 3, 1];
        let mut pfeatures = Array2::zeros((4, 5));
        for i in 0..4 {
            pfeatures.row_mut(sigma[i]).assign(&features.row(i));
        }
        let pedges: Vec<(usize, usize)> =
            edges.iter().map(|&(u, v)| (sigma[u], sigma[v])).collect();

        let run = |f: Array2<f64>, e: Vec<(usize, usize)>| {
            let batch = GraphBatch::new(f, e, vec![0; 4], 1);
            let mut tape = Tape::new();
            let params = store.leaves(&mut tape);
            let mut buffers = Buffers::Read(&store);
            let out = embed(&mut tape, &batch, "embed", &cfg, &params, &mut buffers, Mode::Eval);
            tape.data(out).clone()
        };
        let e0 = run(features, edges);
        let e1 = run(pfeatures, pedges);
        for j in 0..cfg.hidden {
            assert!((e0[[0, j]] - e1[[0, j]]).abs() < 1e-10);
        }
    }

    #[test]
    fn frl_forward_shape_and_asymmetry() {
        let space = SpaceDescriptor::surrogate5();
        let (a, b) = (sample(&space, 7), sample(&space, 8));
        let cfg = EmbeddingConfig::for_feature_dim(space.node_feature_dim);
        let model = ModelFrl::<f64>::init(cfg, &mut ChaCha12Rng::seed_from_u64(63));

        let run = |left: &Architecture, right: &Architecture| {
            let lb = to_graph_batch(&[left]).unwrap();
            let rb = to_graph_batch(&[right]).unwrap();
            let mut tape = Tape::new();
            let params = model.store.leaves(&mut tape);
            let mut buffers = Buffers::Read(&model.store);
            let out = model.forward(&mut tape, &params, &mut buffers, &lb, &rb, Mode::Eval);
            tape.data(out)[[0, 0]]
        };
        let xy = run(&a, &b);
        let yx = run(&b, &a);
        assert!(xy.is_finite() && yx.is_finite());
        // branches are independent, so there is no symmetry guarantee
        assert!((xy - yx).abs() > 1e-12);
    }

    #[test]
    fn predictor_is_deterministic_and_transfer_changes_output() {
        let space = SpaceDescriptor::surrogate5();
        let arch = sample(&space, 9);
        let cfg = EmbeddingConfig::for_feature_dim(space.node_feature_dim);
        let mut predictor = Predictor::<f64>::init(cfg, &mut ChaCha12Rng::seed_from_u64(64));

        let before = predictor.predict(&[&arch]).unwrap();
        let again = predictor.predict(&[&arch]).unwrap();
        assert_eq!(before, again);

        let frl = ModelFrl::<f64>::init(cfg, &mut ChaCha12Rng::seed_from_u64(65));
        let ckpt = Checkpoint::from_store(&frl.store, "frl");
        predictor.load_pretrained_embedding(&ckpt).unwrap();
        let after = predictor.predict(&[&arch]).unwrap();
        assert_ne!(before, after, "transfer must actually change the embedding");
    }

    #[test]
    fn embedding_transfers_from_both_families() {
        let cfg = EmbeddingConfig::for_feature_dim(5);
        let mut rng = ChaCha12Rng::seed_from_u64(66);
        let frl = ModelFrl::<f64>::init(cfg, &mut rng);
        let ccl = ModelFccl::<f64>::init(cfg, &mut rng);
        for (kind, store) in [("frl", &frl.store), ("ccl", &ccl.store)] {
            let ckpt = Checkpoint::from_store(store, kind);
            let mut predictor = Predictor::<f64>::init(cfg, &mut ChaCha12Rng::seed_from_u64(67));
            predictor.load_pretrained_embedding(&ckpt).unwrap();
            let prefix = if kind == "frl" { "branch0." } else { "embed." };
            assert_eq!(store.checksum(prefix), predictor.store.checksum("embed."));
        }
    }

    #[test]
    fn end_to_end_loss_gradients_check_out() {
        let space = SpaceDescriptor::surrogate5();
        let (a, b) = (sample(&space, 10), sample(&space, 11));
        let cfg = EmbeddingConfig::for_feature_dim(space.node_feature_dim);
        let model = ModelFrl::<f64>::init(cfg, &mut ChaCha12Rng::seed_from_u64(68));
        let lb = to_graph_batch(&[&a, &b]).unwrap();
        let rb = to_graph_batch(&[&b, &a]).unwrap();
        let target = array![[0.5], [0.75]];

        let names: Vec<String> = model.store.param_names().map(str::to_string).collect();
        let inputs: Vec<Array2<f64>> =
            names.iter().map(|n| model.store.param(n).data.clone()).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(69);
        let report = grad_check_sampled(
            &inputs,
            |tape, vars| {
                let params: ParamVars =
                    names.iter().cloned().zip(vars.iter().copied()).collect();
                let mut buffers = Buffers::Read(&model.store);
                let pred =
                    model.forward(tape, &params, &mut buffers, &lb, &rb, Mode::Train);
                Ok(crate::diffcore::mse_to_target(tape, pred, &target))
            },
            4,
            &mut rng,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "rel error {}", report.max_rel_error);
    }
}
