//! Parameter storage, layer building blocks, and checkpoint I/O.

use indexmap::IndexMap;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tape::{Tape, Var};

/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;
/// Batch-norm running-statistics momentum.
pub const BN_MOMENTUM: f64 = 0.1;

/// One trainable array with its gradient and Adam moments.
#[derive(Debug, Clone)]
pub struct Param<F: Scalar> {
    pub data: Array2<F>,
    pub grad: Array2<F>,
    pub m: Array2<F>,
    pub v: Array2<F>,
}

impl<F: Scalar> Param<F> {
    fn new(data: Array2<F>) -> Self {
        let dim = data.dim();
        Self { data, grad: Array2::zeros(dim), m: Array2::zeros(dim), v: Array2::zeros(dim) }
    }
}

/// Named trainable parameters plus named buffers (running statistics)
/// for one model, along with the optimizer step counter.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore<F: Scalar> {
    params: IndexMap<String, Param<F>>,
    buffers: IndexMap<String, Array2<F>>,
    pub step: u64,
}

impl<F: Scalar> ParameterStore<F> {
    pub fn new() -> Self {
        Self { params: IndexMap::new(), buffers: IndexMap::new(), step: 0 }
    }

    pub fn insert_param(&mut self, name: &str, data: Array2<F>) {
        assert!(
            self.params.insert(name.to_string(), Param::new(data)).is_none(),
            "duplicate parameter {name}"
        );
    }

    pub fn insert_buffer(&mut self, name: &str, data: Array2<F>) {
        assert!(
            self.buffers.insert(name.to_string(), data).is_none(),
            "duplicate buffer {name}"
        );
    }

    pub fn param(&self, name: &str) -> &Param<F> {
        self.params.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn param_mut(&mut self, name: &str) -> &mut Param<F> {
        self.params.get_mut(name).unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn buffer(&self, name: &str) -> &Array2<F> {
        self.buffers.get(name).unwrap_or_else(|| panic!("unknown buffer {name}"))
    }

    pub fn buffer_mut(&mut self, name: &str) -> &mut Array2<F> {
        self.buffers.get_mut(name).unwrap_or_else(|| panic!("unknown buffer {name}"))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn buffer_names(&self) -> impl Iterator<Item = &str> {
        self.buffers.keys().map(String::as_str)
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(F::zero());
        }
    }

    /// Create one tape leaf per parameter, in registration order.
    pub fn leaves(&self, tape: &mut Tape<F>) -> IndexMap<String, Var> {
        self.params
            .iter()
            .map(|(name, p)| (name.clone(), tape.leaf(p.data.clone())))
            .collect()
    }

    /// Copy tape gradients back into the store after a backward pass.
    pub fn collect_grads(&mut self, tape: &Tape<F>, vars: &IndexMap<String, Var>) {
        for (name, var) in vars {
            self.param_mut(name).grad.assign(tape.grad(*var));
        }
    }

    /// FNV-1a over prefix-stripped names and parameter bit patterns.
    /// Two stores agree under different prefixes iff the transferred
    /// arrays are identical, which is what weight-transfer checks need.
    pub fn checksum(&self, prefix: &str) -> u64 {
        let mut hash = 0xcbf29ce484222325u64;
        let feed = |hash: &mut u64, bytes: &[u8]| {
            for &byte in bytes {
                *hash = (*hash ^ u64::from(byte)).wrapping_mul(0x100000001b3);
            }
        };
        let mut names: Vec<&String> = self
            .params
            .keys()
            .chain(self.buffers.keys())
            .filter(|n| n.starts_with(prefix))
            .collect();
        names.sort();
        names.dedup();
        for name in names {
            feed(&mut hash, name[prefix.len()..].as_bytes());
            let data: &Array2<F> = match (self.params.get(name), self.buffers.get(name)) {
                (Some(p), _) => &p.data,
                (None, Some(b)) => b,
                _ => unreachable!(),
            };
            for &x in data.iter() {
                feed(&mut hash, &x.to_f64().expect("finite").to_bits().to_le_bytes());
            }
        }
        hash
    }
}

/// Fan-in-scaled uniform init for a dense layer: W in (in, out), b in (1, out).
pub fn init_dense<F: Scalar, R: Rng>(
    store: &mut ParameterStore<F>,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let draw = |r: usize, c: usize, rng: &mut R| {
        Array2::from_shape_fn((r, c), |_| F::from_real(rng.gen_range(-bound..bound)))
    };
    let w = draw(fan_in, fan_out, rng);
    let b = draw(1, fan_out, rng);
    store.insert_param(&format!("{prefix}.w"), w);
    store.insert_param(&format!("{prefix}.b"), b);
}

/// Batch-norm parameters (scale 1, shift 0) and running buffers.
pub fn init_batchnorm<F: Scalar>(store: &mut ParameterStore<F>, prefix: &str, dim: usize) {
    store.insert_param(&format!("{prefix}.gamma"), Array2::ones((1, dim)));
    store.insert_param(&format!("{prefix}.beta"), Array2::zeros((1, dim)));
    store.insert_buffer(&format!("{prefix}.mean"), Array2::zeros((1, dim)));
    store.insert_buffer(&format!("{prefix}.var"), Array2::ones((1, dim)));
}

/// Forward/buffer mode for normalization layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense layer: `x @ W + b`.
pub fn dense<F: Scalar>(tape: &mut Tape<F>, x: Var, w: Var, b: Var) -> Var {
    let y = tape.matmul(x, w);
    tape.badd(y, b)
}

/// Running-statistics state passed to batch norm in training loops.
/// `None` leaves buffers untouched (gradient checking, evaluation).
pub struct BnUpdate<'a, F: Scalar> {
    pub mean: &'a mut Array2<F>,
    pub var: &'a mut Array2<F>,
}

/// Batch normalization over rows.
///
/// Train mode normalizes with batch statistics (biased variance) and,
/// when `update` is given, moves the running buffers with momentum 0.1
/// (unbiased variance, following the usual convention). A train-mode
/// batch of one row falls back to the running statistics since a
/// single sample has no variance; only the mean buffer is updated.
pub fn batchnorm<F: Scalar>(
    tape: &mut Tape<F>,
    x: Var,
    gamma: Var,
    beta: Var,
    running_mean: &Array2<F>,
    running_var: &Array2<F>,
    mode: Mode,
    update: Option<BnUpdate<'_, F>>,
) -> Var {
    let rows = tape.data(x).nrows();
    let eps = F::from_real(BN_EPS);
    let use_batch_stats = mode == Mode::Train && rows > 1;

    let xhat = if use_batch_stats {
        let mu = tape.mean_axis0(x);
        let centered = tape.bsub(x, mu);
        let sq = tape.square(centered);
        let var = tape.mean_axis0(sq);
        let var_eps = tape.add_const(var, eps);
        let std = tape.sqrt(var_eps);
        if let Some(update) = update {
            let momentum = F::from_real(BN_MOMENTUM);
            let keep = F::one() - momentum;
            let batch_mean = tape.data(mu).clone();
            let n = F::from_count(rows);
            let unbias = n / (n - F::one());
            let batch_var = tape.data(var).mapv(|v| v * unbias);
            update.mean.zip_mut_with(&batch_mean, |o, &b| *o = *o * keep + momentum * b);
            update.var.zip_mut_with(&batch_var, |o, &b| *o = *o * keep + momentum * b);
        }
        tape.bdiv(centered, std)
    } else {
        let mu = tape.leaf(running_mean.clone());
        let std = tape.leaf(running_var.mapv(|v| (v + eps).sqrt()));
        if mode == Mode::Train {
            if let Some(update) = update {
                let momentum = F::from_real(BN_MOMENTUM);
                let keep = F::one() - momentum;
                let batch_mean = tape.data(x).row(0).to_owned().insert_axis(ndarray::Axis(0));
                update.mean.zip_mut_with(&batch_mean, |o, &b| *o = *o * keep + momentum * b);
            }
        }
        let centered = tape.bsub(x, mu);
        tape.bdiv(centered, std)
    };
    let scaled = tape.bmul(xhat, gamma);
    tape.badd(scaled, beta)
}

/// L2-normalize rows; errors on a zero-norm row.
pub fn l2_normalize_rows<F: Scalar>(tape: &mut Tape<F>, x: Var) -> Result<Var> {
    let sq = tape.square(x);
    let sums = tape.sum_axis1(sq);
    let norms = tape.sqrt(sums);
    let tiny = F::from_real(1e-12);
    if tape.data(norms).iter().any(|&n| n < tiny) {
        return Err(Error::ZeroNormEmbedding);
    }
    Ok(tape.bdiv(x, norms))
}

/// Mean squared error between a prediction node and a constant target.
pub fn mse_to_target<F: Scalar>(tape: &mut Tape<F>, pred: Var, target: &Array2<F>) -> Var {
    let t = tape.leaf(target.clone());
    let diff = tape.sub(pred, t);
    let sq = tape.square(diff);
    tape.mean_all(sq)
}

/// Checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayJson {
    shape: [usize; 2],
    data: Vec<f64>,
}

/// Serialized model state: named parameter arrays and buffers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// Model family tag: "frl", "ccl", or "predictor".
    pub kind: String,
    params: IndexMap<String, ArrayJson>,
    buffers: IndexMap<String, ArrayJson>,
}

fn to_json<F: Scalar>(a: &Array2<F>) -> ArrayJson {
    ArrayJson {
        shape: [a.nrows(), a.ncols()],
        data: a.iter().map(|x| x.to_f64().expect("finite")).collect(),
    }
}

fn from_json<F: Scalar>(a: &ArrayJson) -> Result<Array2<F>> {
    if a.data.len() != a.shape[0] * a.shape[1] {
        return Err(Error::Format("array data does not match shape".into()));
    }
    Ok(Array2::from_shape_vec((a.shape[0], a.shape[1]), a.data.iter().map(|&x| F::from_real(x)).collect())
        .expect("shape checked"))
}

impl Checkpoint {
    pub fn from_store<F: Scalar>(store: &ParameterStore<F>, kind: &str) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            params: store.params.iter().map(|(n, p)| (n.clone(), to_json(&p.data))).collect(),
            buffers: store.buffers.iter().map(|(n, b)| (n.clone(), to_json(b))).collect(),
        }
    }

    /// Restore a store with fresh optimizer state.
    pub fn to_store<F: Scalar>(&self) -> Result<ParameterStore<F>> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        let mut store = ParameterStore::new();
        for (name, a) in &self.params {
            store.insert_param(name, from_json(a)?);
        }
        for (name, a) in &self.buffers {
            store.insert_buffer(name, from_json(a)?);
        }
        Ok(store)
    }

    pub fn param_entries(&self) -> impl Iterator<Item = (&str, [usize; 2])> {
        self.params.iter().map(|(n, a)| (n.as_str(), a.shape))
    }

    pub fn buffer_entries(&self) -> impl Iterator<Item = (&str, [usize; 2])> {
        self.buffers.iter().map(|(n, a)| (n.as_str(), a.shape))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn identical_rows_train_bn_outputs_shift() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(array![[3.0, -2.0], [3.0, -2.0], [3.0, -2.0]]);
        let gamma = tape.leaf(array![[2.0, 2.0]]);
        let beta = tape.leaf(array![[0.5, -0.5]]);
        let rm = Array2::zeros((1, 2));
        let rv = Array2::ones((1, 2));
        let y = batchnorm(&mut tape, x, gamma, beta, &rm, &rv, Mode::Train, None);
        for i in 0..3 {
            assert!((tape.data(y)[[i, 0]] - 0.5).abs() < 1e-9);
            assert!((tape.data(y)[[i, 1]] + 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn eval_bn_is_batch_size_independent() {
        let mut tape = Tape::<f64>::new();
        let rm = array![[1.0, -1.0]];
        let rv = array![[4.0, 0.25]];
        let gamma_v = array![[1.5, 0.5]];
        let beta_v = array![[0.0, 1.0]];

        let both = tape.leaf(array![[2.0, 0.0], [-2.0, 2.0]]);
        let gamma = tape.leaf(gamma_v.clone());
        let beta = tape.leaf(beta_v.clone());
        let y_both = batchnorm(&mut tape, both, gamma, beta, &rm, &rv, Mode::Eval, None);
        let y_both = tape.data(y_both).clone();

        for (i, row) in [array![[2.0, 0.0]], array![[-2.0, 2.0]]].iter().enumerate() {
            let mut t2 = Tape::<f64>::new();
            let x = t2.leaf(row.clone());
            let g = t2.leaf(gamma_v.clone());
            let b = t2.leaf(beta_v.clone());
            let y = batchnorm(&mut t2, x, g, b, &rm, &rv, Mode::Eval, None);
            for j in 0..2 {
                assert!((t2.data(y)[[0, j]] - y_both[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn running_mean_after_one_batch_is_momentum_times_batch_mean() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(array![[2.0], [4.0]]);
        let gamma = tape.leaf(array![[1.0]]);
        let beta = tape.leaf(array![[0.0]]);
        let mut rm = Array2::zeros((1, 1));
        let mut rv = Array2::ones((1, 1));
        let _ = batchnorm(
            &mut tape,
            x,
            gamma,
            beta,
            &rm.clone(),
            &rv.clone(),
            Mode::Train,
            Some(BnUpdate { mean: &mut rm, var: &mut rv }),
        );
        assert!((rm[[0, 0]] - 0.1 * 3.0).abs() < 1e-12);
    }

    #[test]
    fn batch_of_one_uses_running_stats_and_updates_mean() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(array![[10.0]]);
        let gamma = tape.leaf(array![[1.0]]);
        let beta = tape.leaf(array![[0.0]]);
        let mut rm = array![[2.0]];
        let mut rv = array![[4.0]];
        let y = batchnorm(
            &mut tape,
            x,
            gamma,
            beta,
            &rm.clone(),
            &rv.clone(),
            Mode::Train,
            Some(BnUpdate { mean: &mut rm, var: &mut rv }),
        );
        // normalized with running stats: (10 - 2) / sqrt(4 + eps)
        assert!((tape.data(y)[[0, 0]] - 8.0 / (4.0f64 + BN_EPS).sqrt()).abs() < 1e-9);
        assert!((rm[[0, 0]] - (0.9 * 2.0 + 0.1 * 10.0)).abs() < 1e-12);
        assert_eq!(rv, array![[4.0]]); // single sample has no variance
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut store = ParameterStore::<f64>::new();
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        init_dense(&mut store, "fc", 3, 2, &mut rng);
        init_batchnorm(&mut store, "bn", 2);
        let ckpt = Checkpoint::from_store(&store, "predictor");
        let text = serde_json::to_string(&ckpt).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        let restored = back.to_store::<f64>().unwrap();
        for name in ["fc.w", "fc.b", "bn.gamma", "bn.beta"] {
            let a = &store.param(name).data;
            let b = &restored.param(name).data;
            assert_eq!(a.dim(), b.dim());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{name} not bit-exact");
            }
        }
        assert_eq!(store.checksum(""), restored.checksum(""));
    }

    #[test]
    fn zero_norm_rows_are_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(array![[0.0, 0.0], [1.0, 0.0]]);
        assert!(matches!(l2_normalize_rows(&mut tape, x), Err(Error::ZeroNormEmbedding)));
    }
}
