//! Tabular benchmark storage: JSON-lines ingestion, synthetic surrogate
//! generation, querying, and cell-to-DAG conversion.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::archspace::{
    enumerate_space, random_architecture, validate, Architecture, ArchitectureJson, NodeOp,
    SpaceDescriptor,
};
use crate::encoding::{dedupe_key, encode_position_aware};
use crate::error::{Error, Result};

/// Benchmark file format version.
pub const TABLE_FORMAT_VERSION: u32 = 1;

/// Per-architecture metrics: one entry per independent training repeat.
#[derive(Debug, Clone)]
pub struct BenchmarkRecord {
    pub arch: Architecture,
    pub val_err: Vec<f64>,
    pub test_err: Vec<f64>,
}

impl BenchmarkRecord {
    pub fn new(arch: Architecture, val_err: Vec<f64>, test_err: Vec<f64>) -> Result<Self> {
        if val_err.is_empty() || test_err.is_empty() {
            return Err(Error::InvalidConfig("metric lists must be non-empty".into()));
        }
        for &e in val_err.iter().chain(&test_err) {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::InvalidConfig(format!("error {e} outside [0, 1]")));
            }
        }
        Ok(Self { arch, val_err, test_err })
    }

    pub fn mean_val(&self) -> f64 {
        self.val_err.iter().sum::<f64>() / self.val_err.len() as f64
    }

    pub fn mean_test(&self) -> f64 {
        self.test_err.iter().sum::<f64>() / self.test_err.len() as f64
    }
}

type EncKey = (usize, Vec<u8>);

/// Immutable architecture table keyed by position-aware encoding.
#[derive(Debug, Clone)]
pub struct BenchmarkTable {
    pub space: Arc<SpaceDescriptor>,
    records: Vec<BenchmarkRecord>,
    index: HashMap<EncKey, usize>,
    /// Expose a randomly chosen repeat instead of the mean on queries.
    pub sample_repeat: bool,
    pub provenance: String,
}

/// Ingestion statistics.
#[derive(Debug, Clone, Default)]
pub struct LoadSummary {
    pub records_read: usize,
    pub duplicates_dropped: usize,
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    space: SpaceDescriptor,
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    matrix: Vec<Vec<u8>>,
    ops: Vec<String>,
    val_err: Vec<f64>,
    test_err: Vec<f64>,
}

impl BenchmarkTable {
    fn empty(space: Arc<SpaceDescriptor>, provenance: String) -> Self {
        Self { space, records: Vec::new(), index: HashMap::new(), sample_repeat: false, provenance }
    }

    /// Insert a record, keeping the first per distinct encoding.
    fn insert(&mut self, record: BenchmarkRecord) -> Result<bool> {
        let key = dedupe_key(&record.arch)?;
        if self.index.contains_key(&key) {
            return Ok(false);
        }
        self.index.insert(key, self.records.len());
        self.records.push(record);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[BenchmarkRecord] {
        &self.records
    }

    pub fn record(&self, idx: usize) -> &BenchmarkRecord {
        &self.records[idx]
    }

    pub fn contains(&self, arch: &Architecture) -> Result<bool> {
        Ok(self.index.contains_key(&dedupe_key(arch)?))
    }

    /// Exact record lookup by encoding.
    pub fn query(&self, arch: &Architecture) -> Result<&BenchmarkRecord> {
        let key = dedupe_key(arch)?;
        self.index.get(&key).map(|&i| &self.records[i]).ok_or(Error::UnknownArchitecture)
    }

    /// Validation metric exposed to searches: the mean by default, a
    /// randomly selected repeat with `sample_repeat`.
    pub fn observed_val(&self, record: &BenchmarkRecord, rng: &mut dyn RngCore) -> f64 {
        if self.sample_repeat {
            record.val_err[(rng.next_u64() % record.val_err.len() as u64) as usize]
        } else {
            record.mean_val()
        }
    }

    /// Write header plus one JSON record per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        let header =
            HeaderLine { space: (*self.space).clone(), format_version: TABLE_FORMAT_VERSION };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for record in &self.records {
            let json = record.arch.to_json();
            let line = RecordLine {
                matrix: json.matrix,
                ops: json.ops,
                val_err: record.val_err.clone(),
                test_err: record.test_err.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Load a JSON-lines table, validating and deduplicating records.
    pub fn load(path: &Path) -> Result<(Self, LoadSummary)> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header_text = lines
            .next()
            .ok_or_else(|| Error::Format("empty benchmark file".into()))?
            .map_err(Error::Io)?;
        let header: HeaderLine = serde_json::from_str(&header_text)
            .map_err(|e| Error::MalformedLine { line: 1, message: e.to_string() })?;
        if header.format_version != TABLE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported table version {}",
                header.format_version
            )));
        }
        let space = Arc::new(header.space);
        let mut table = Self::empty(Arc::clone(&space), path.display().to_string());
        let mut summary = LoadSummary::default();
        for (lineno, line) in lines.enumerate() {
            let lineno = lineno + 2;
            let line = line.map_err(Error::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RecordLine = serde_json::from_str(&line)
                .map_err(|e| Error::MalformedLine { line: lineno, message: e.to_string() })?;
            let json = ArchitectureJson { matrix: parsed.matrix, ops: parsed.ops };
            let arch = Architecture::from_json(&json, Arc::clone(&space))
                .map_err(|e| Error::MalformedLine { line: lineno, message: e.to_string() })?;
            let report = validate(&arch);
            if !report.valid {
                return Err(Error::MalformedLine {
                    line: lineno,
                    message: report.violation.unwrap_or_else(|| "invalid".into()),
                });
            }
            let record = BenchmarkRecord::new(arch, parsed.val_err, parsed.test_err)
                .map_err(|e| Error::MalformedLine { line: lineno, message: e.to_string() })?;
            summary.records_read += 1;
            let existing = table.index.get(&dedupe_key(&record.arch)?).copied();
            if !table.insert(record)? {
                summary.duplicates_dropped += 1;
                if let Some(idx) = existing {
                    summary
                        .warnings
                        .push(format!("line {lineno}: duplicate of record {idx}, first kept"));
                }
            }
        }
        Ok((table, summary))
    }
}

/// Deterministic synthetic scoring function over encodings.
///
/// The raw score is a discounted linear functional of the concatenated
/// encoding, so it is Lipschitz in the padded L1 distance: nearby
/// architectures get nearby scores.
#[derive(Debug, Clone)]
pub struct SynthScorer {
    weights: Vec<f64>,
    pub noise: f64,
}

const SYNTH_PATH_DISCOUNT: f64 = 0.7;
const SYNTH_DEPTH_BIAS: f64 = 0.3;
const SYNTH_SCALE: f64 = 1.2;
const SYNTH_CENTER: f64 = 1.0;
const SYNTH_REPEATS: usize = 3;

impl SynthScorer {
    fn draw<R: Rng>(space: &SpaceDescriptor, noise: f64, rng: &mut R) -> Self {
        let weights = (0..space.slot_width()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self { weights, noise }
    }

    /// Noise-free mean error in [0.05, 0.5].
    pub fn mean_error(&self, arch: &Architecture) -> Result<f64> {
        let enc = encode_position_aware(arch)?;
        let slot = enc.slot_width;
        let mut raw = 0.0;
        for (k, &bit) in enc.concat.iter().enumerate() {
            if bit == 1 {
                let discount = SYNTH_PATH_DISCOUNT.powi((k / slot) as i32);
                raw += (self.weights[k % slot] + SYNTH_DEPTH_BIAS) * discount;
            }
        }
        let squashed = 1.0 / (1.0 + (-(SYNTH_SCALE * (raw - SYNTH_CENTER))).exp());
        Ok(0.05 + 0.45 * squashed)
    }

    fn noisy_repeats<R: Rng>(&self, mean: f64, rng: &mut R) -> Vec<f64> {
        (0..SYNTH_REPEATS)
            .map(|_| (mean + self.noise * standard_normal(rng)).clamp(0.001, 0.999))
            .collect()
    }
}

/// Box-Muller standard normal draw.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn synth_table_from(
    space: &Arc<SpaceDescriptor>,
    archs: Vec<Architecture>,
    scorer: &SynthScorer,
    rng: &mut ChaCha12Rng,
    provenance: String,
) -> Result<BenchmarkTable> {
    let mut table = BenchmarkTable::empty(Arc::clone(space), provenance);
    for arch in archs {
        let mean = scorer.mean_error(&arch)?;
        let val = scorer.noisy_repeats(mean, rng);
        let test = scorer.noisy_repeats(mean, rng);
        table.insert(BenchmarkRecord::new(arch, val, test)?)?;
    }
    Ok(table)
}

/// Sample `size` distinct-encoding architectures and score them
/// synthetically. Pure in (space, size, noise, seed).
pub fn synth_benchmark(
    space: &Arc<SpaceDescriptor>,
    size: usize,
    noise: f64,
    seed: u64,
) -> Result<BenchmarkTable> {
    if size == 0 {
        return Err(Error::InvalidConfig("size must be at least 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let scorer = SynthScorer::draw(space, noise, &mut rng);
    let mut distinct = Vec::with_capacity(size);
    let mut seen = std::collections::HashSet::new();
    let budget = size.saturating_mul(200);
    let mut attempts = 0usize;
    while distinct.len() < size {
        attempts += 1;
        if attempts > budget {
            return Err(Error::SpaceTooConstrained { attempts });
        }
        let arch = random_architecture(space, &mut rng)?;
        if seen.insert(dedupe_key(&arch)?) {
            distinct.push(arch);
        }
    }
    synth_table_from(
        space,
        distinct,
        &scorer,
        &mut rng,
        format!("synthetic space={} size={size} noise={noise} seed={seed}", space.name),
    )
}

/// Score every distinct architecture of a small space with the same
/// scoring function `synth_benchmark` would draw from this seed.
pub fn synth_benchmark_exhaustive(
    space: &Arc<SpaceDescriptor>,
    noise: f64,
    seed: u64,
) -> Result<BenchmarkTable> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let scorer = SynthScorer::draw(space, noise, &mut rng);
    let archs = enumerate_space(space)?;
    synth_table_from(
        space,
        archs,
        &scorer,
        &mut rng,
        format!("synthetic-exhaustive space={} noise={noise} seed={seed}", space.name),
    )
}

/// Recover the scoring function a synthetic table was built from.
pub fn synth_scorer(space: &SpaceDescriptor, noise: f64, seed: u64) -> SynthScorer {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    SynthScorer::draw(space, noise, &mut rng)
}

/// Cell edge order for 4-node cells: target-major, matching the node
/// layout of the converted DAG.
pub const NB201_CELL_EDGES: [(usize, usize); 6] =
    [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];

/// Rewrite an edge-op cell as a node-op DAG.
///
/// Each cell edge becomes an operation node (8 nodes total including
/// input/output); `zeroize` edges are deleted outright. The op node for
/// cell edge (a, b) receives from every op node targeting `a` (or the
/// input when a = 0) and feeds every op node sourced at `b` (or the
/// output when b = 3).
pub fn convert_nb201_cell(edge_ops: &[String]) -> Result<Architecture> {
    let space = SpaceDescriptor::nb201();
    if edge_ops.len() != NB201_CELL_EDGES.len() {
        return Err(Error::InvalidConfig(format!(
            "expected {} edge operations, got {}",
            NB201_CELL_EDGES.len(),
            edge_ops.len()
        )));
    }
    let mut kept: Vec<(usize, (usize, usize))> = Vec::new(); // (vocab op, cell edge)
    for (label, &cell_edge) in edge_ops.iter().zip(NB201_CELL_EDGES.iter()) {
        let op =
            space.vocab.index_of(label).ok_or_else(|| Error::UnknownLabel(label.clone()))?;
        if space.vocab.label(op) != "zeroize" {
            kept.push((op, cell_edge));
        }
    }
    let h = kept.len() + 2;
    let node_of = |cell_edge: (usize, usize)| -> usize {
        1 + kept.iter().position(|&(_, e)| e == cell_edge).expect("kept edge")
    };
    let mut adjacency = vec![vec![0u8; h]; h];
    for &(_, (a, b)) in &kept {
        let this = node_of((a, b));
        if a == 0 {
            adjacency[0][this] = 1;
        }
        for &(_, (x, y)) in &kept {
            if y == a {
                adjacency[node_of((x, y))][this] = 1;
            }
        }
        if b == 3 {
            adjacency[this][h - 1] = 1;
        }
    }
    let mut ops = vec![NodeOp::Input];
    ops.extend(kept.iter().map(|&(op, _)| NodeOp::Op(op)));
    ops.push(NodeOp::Output);
    let arch = Architecture::new(adjacency, ops, space)?;
    let report = validate(&arch);
    if !report.valid {
        return Err(Error::InvalidArchitecture(
            report.violation.unwrap_or_else(|| "invalid converted cell".into()),
        ));
    }
    Ok(arch)
}
