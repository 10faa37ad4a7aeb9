//! Vector encodings of architectures and the edit-distance proxy built
//! on them.
//!
//! Three encodings are provided:
//!
//! - position-aware path-based: one fixed-width vector per
//!   input-to-output path recording which node slot holds which
//!   operation, concatenated in sorted path order;
//! - path-based: one bit per distinct op-label sequence (exponential
//!   width, position-blind);
//! - adjacency: flattened strict upper triangle plus node one-hots.
//!
//! The graph edit distance here is the L1 distance between
//! position-aware encodings after trailing-zero padding, and the
//! normalized variant is `exp(-GED / |V|)`.

use crate::archspace::{enumerate_paths, Architecture, Path};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Position-aware path-based encoding.
///
/// `concat` is the concatenation of the per-path vectors sorted by
/// (length ascending, node-index sequence ascending). Padding to a
/// common length happens at comparison time, not here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionAwareEncoding {
    pub per_path: Vec<Vec<u8>>,
    pub concat: Vec<u8>,
    pub path_count: usize,
    pub slot_width: usize,
}

impl PositionAwareEncoding {
    /// Stable deduplication key. Keying on the path count first keeps
    /// unpadded concats of different lengths from colliding.
    pub fn key(&self) -> (usize, Vec<u8>) {
        (self.path_count, self.concat.clone())
    }
}

/// Path-based encoding: one bit per op-label sequence of length
/// `0..=max_nodes-2` in lexicographic order (empty sequence first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathBasedEncoding {
    pub bits: Vec<u8>,
}

/// Adjacency encoding: strict upper triangle (row-major) followed by
/// per-node one-hot operation vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyEncoding {
    pub bits: Vec<u8>,
}

fn sorted_paths(arch: &Architecture) -> Result<Vec<Path>> {
    let work = if arch.space().prune_dangling { arch.pruned() } else { arch.clone() };
    let mut paths = enumerate_paths(&work)?;
    paths.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.nodes.cmp(&b.nodes)));
    Ok(paths)
}

fn path_vector(path: &Path, slot_width: usize, vocab_len: usize) -> Vec<u8> {
    let mut v = vec![0u8; slot_width];
    for (&node, &op) in path.nodes.iter().zip(&path.ops) {
        // Slot for node index n covers entries [(n-1)*|vocab|, n*|vocab|).
        v[(node - 1) * vocab_len + op] = 1;
    }
    v
}

/// Encode all input-to-output paths with operation positions.
pub fn encode_position_aware(arch: &Architecture) -> Result<PositionAwareEncoding> {
    let space = arch.space();
    let slot_width = space.slot_width();
    let vocab_len = space.vocab.len();
    let paths = sorted_paths(arch)?;
    let per_path: Vec<Vec<u8>> =
        paths.iter().map(|p| path_vector(p, slot_width, vocab_len)).collect();
    let concat = per_path.iter().flatten().copied().collect();
    Ok(PositionAwareEncoding { path_count: per_path.len(), per_path, concat, slot_width })
}

/// Number of bits in a path-based encoding for a space.
pub fn path_based_len(max_nodes: usize, vocab_len: usize) -> usize {
    (0..=max_nodes.saturating_sub(2)).map(|l| vocab_len.pow(l as u32)).sum()
}

/// Encode the set of op-label sequences along all paths (position-blind).
pub fn encode_path_based(arch: &Architecture) -> Result<PathBasedEncoding> {
    let space = arch.space();
    let vocab_len = space.vocab.len();
    let max_len = space.max_nodes - 2;
    let mut bits = vec![0u8; path_based_len(space.max_nodes, vocab_len)];
    for path in sorted_paths(arch)? {
        let l = path.ops.len();
        debug_assert!(l <= max_len);
        let offset: usize = (0..l).map(|k| vocab_len.pow(k as u32)).sum();
        let mut index = 0usize;
        for &op in &path.ops {
            index = index * vocab_len + op;
        }
        bits[offset + index] = 1;
    }
    Ok(PathBasedEncoding { bits })
}

/// Flatten the strict upper triangle and node one-hots.
///
/// The result is padded to the space's `max_nodes` layout so encodings
/// of different-sized graphs share one index scheme.
pub fn encode_adjacency(arch: &Architecture) -> AdjacencyEncoding {
    let space = arch.space();
    let n = space.max_nodes;
    let h = arch.node_count();
    let feat = space.node_feature_dim;
    let mut bits = vec![0u8; n * (n - 1) / 2 + n * feat];
    let mut pos = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if i < h && j < h && arch.has_edge(i, j) {
                bits[pos] = 1;
            }
            pos += 1;
        }
    }
    for (i, &op) in arch.ops().iter().enumerate() {
        bits[n * (n - 1) / 2 + i * feat + space.feature_index(op)] = 1;
    }
    AdjacencyEncoding { bits }
}

fn check_same_space(a: &Architecture, b: &Architecture) -> Result<()> {
    if a.space().name != b.space().name {
        return Err(Error::SpaceMismatch {
            left: a.space().name.clone(),
            right: b.space().name.clone(),
        });
    }
    Ok(())
}

/// L1 distance between position-aware encodings after padding the
/// shorter concat with trailing zeros.
pub fn ged(a: &Architecture, b: &Architecture) -> Result<u32> {
    check_same_space(a, b)?;
    let ea = encode_position_aware(a)?;
    let eb = encode_position_aware(b)?;
    Ok(ged_encoded(&ea, &eb))
}

/// GED on precomputed encodings.
pub fn ged_encoded(a: &PositionAwareEncoding, b: &PositionAwareEncoding) -> u32 {
    let long = a.concat.len().max(b.concat.len());
    let mut total = 0u32;
    for k in 0..long {
        let x = a.concat.get(k).copied().unwrap_or(0);
        let y = b.concat.get(k).copied().unwrap_or(0);
        total += u32::from(x.abs_diff(y));
    }
    total
}

/// Normalized GED: `exp(-GED / |V|)`, a similarity in (0, 1].
///
/// With unequal node counts, `|V|` is the larger of the two.
pub fn nged<F: Scalar>(a: &Architecture, b: &Architecture) -> Result<F> {
    let distance = ged(a, b)?;
    let v = a.node_count().max(b.node_count());
    Ok(nged_from_ged(distance, v))
}

/// Normalized GED from a precomputed distance and node count.
pub fn nged_from_ged<F: Scalar>(distance: u32, node_count: usize) -> F {
    let d = F::from_real(f64::from(distance)) / F::from_count(node_count);
    (-d).exp()
}

/// Hashable identity key: the position-aware encoding with its path
/// count. Used to deduplicate and to key benchmark tables.
pub fn dedupe_key(arch: &Architecture) -> Result<(usize, Vec<u8>)> {
    Ok(encode_position_aware(arch)?.key())
}

/// Keep the first architecture per distinct position-aware encoding.
pub fn dedupe(archs: &[Architecture]) -> Result<Vec<Architecture>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for arch in archs {
        let key = dedupe_key(arch)?;
        if seen.insert(key) {
            out.push(arch.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::{
        enumerate_space, random_architecture, NodeOp, SpaceDescriptor,
    };
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::sync::Arc;

    fn arch(
        space: &Arc<SpaceDescriptor>,
        edges: &[(usize, usize)],
        interior_ops: &[usize],
    ) -> Architecture {
        let h = interior_ops.len() + 2;
        let mut adjacency = vec![vec![0u8; h]; h];
        for &(i, j) in edges {
            adjacency[i][j] = 1;
        }
        let mut ops = vec![NodeOp::Input];
        ops.extend(interior_ops.iter().map(|&k| NodeOp::Op(k)));
        ops.push(NodeOp::Output);
        Architecture::new(adjacency, ops, Arc::clone(space)).unwrap()
    }

    #[test]
    fn single_path_chain_in_nb101_layout() {
        // input -> (node1: maxpool3x3) -> output in the 7-node, 3-op space:
        // one 15-long vector with the maxpool one-hot in node-1's slot.
        let space = SpaceDescriptor::nb101();
        let a = arch(&space, &[(0, 1), (1, 2)], &[2]);
        let enc = encode_position_aware(&a).unwrap();
        assert_eq!(enc.path_count, 1);
        assert_eq!(enc.slot_width, 15);
        let mut expected = vec![0u8; 15];
        expected[2] = 1; // node 1 slot, op index 2
        assert_eq!(enc.per_path[0], expected);
        assert_eq!(enc.concat, expected);
    }

    #[test]
    fn direct_edge_is_all_zero_vector() {
        let space = SpaceDescriptor::nb101();
        let h = 2;
        let mut adjacency = vec![vec![0u8; h]; h];
        adjacency[0][1] = 1;
        let a = Architecture::new(
            adjacency,
            vec![NodeOp::Input, NodeOp::Output],
            Arc::clone(&space),
        )
        .unwrap();
        let enc = encode_position_aware(&a).unwrap();
        assert_eq!(enc.path_count, 1);
        assert_eq!(enc.concat, vec![0u8; 15]);
    }

    #[test]
    fn concat_round_trips_to_path_set() {
        // Decoding concat back to (length, occupied slots) reproduces the
        // enumerated paths of the pruned graph.
        let space = SpaceDescriptor::surrogate5();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..500 {
            let a = random_architecture(&space, &mut rng).unwrap();
            let enc = encode_position_aware(&a).unwrap();
            let pruned = a.pruned();
            let mut paths = enumerate_paths(&pruned).unwrap();
            paths.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.nodes.cmp(&y.nodes)));
            assert_eq!(enc.path_count, paths.len());
            for (vec, path) in enc.per_path.iter().zip(&paths) {
                let decoded: Vec<(usize, usize)> = vec
                    .iter()
                    .enumerate()
                    .filter(|(_, &bit)| bit == 1)
                    .map(|(pos, _)| (pos / space.vocab.len() + 1, pos % space.vocab.len()))
                    .collect();
                let expected: Vec<(usize, usize)> =
                    path.nodes.iter().copied().zip(path.ops.iter().copied()).collect();
                assert_eq!(decoded, expected);
            }
        }
    }

    #[test]
    fn concat_is_invariant_to_enumeration_order() {
        let space = SpaceDescriptor::surrogate5();
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        for _ in 0..200 {
            let a = random_architecture(&space, &mut rng).unwrap();
            let reference = encode_position_aware(&a).unwrap();
            // Shuffle the enumerated paths, re-sort with the encoder's
            // comparator, and rebuild; the concat must not change.
            let mut paths = enumerate_paths(&a.pruned()).unwrap();
            paths.shuffle(&mut rng);
            paths.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.nodes.cmp(&y.nodes)));
            let rebuilt: Vec<u8> = paths
                .iter()
                .flat_map(|p| path_vector(p, space.slot_width(), space.vocab.len()))
                .collect();
            assert_eq!(reference.concat, rebuilt);
        }
    }

    #[test]
    fn equal_length_paths_never_tie() {
        let space = SpaceDescriptor::surrogate5();
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..200 {
            let a = random_architecture(&space, &mut rng).unwrap();
            let mut paths = enumerate_paths(&a.pruned()).unwrap();
            paths.sort_by(|x, y| x.len().cmp(&y.len()).then_with(|| x.nodes.cmp(&y.nodes)));
            for w in paths.windows(2) {
                if w[0].len() == w[1].len() {
                    assert_ne!(w[0].nodes, w[1].nodes);
                }
            }
        }
    }

    #[test]
    fn path_based_chain_sets_one_bit() {
        let space = SpaceDescriptor::nb101();
        let a = arch(&space, &[(0, 1), (1, 2)], &[1]); // conv3x3 chain
        let enc = encode_path_based(&a).unwrap();
        assert_eq!(enc.bits.iter().map(|&b| b as usize).sum::<usize>(), 1);
        // length-1 block starts after the empty-sequence bit
        assert_eq!(enc.bits[1 + 1], 1);
    }

    #[test]
    fn path_based_length_formula() {
        let space = SpaceDescriptor::nb101();
        let a = arch(&space, &[(0, 1), (1, 2)], &[0]);
        let enc = encode_path_based(&a).unwrap();
        // sum_{l=0..5} 3^l = 364
        assert_eq!(enc.bits.len(), 364);
        assert_eq!(path_based_len(7, 3), 364);
    }

    /// Exhaustive scan: two valid, structurally distinct architectures
    /// with equal path-based encodings but unequal position-aware
    /// encodings. Mirrors the operation-position collision.
    fn find_collision_witness(
        space: &Arc<SpaceDescriptor>,
    ) -> Option<(Architecture, Architecture)> {
        let all = enumerate_space(space).unwrap();
        let mut by_pbe: std::collections::HashMap<Vec<u8>, Vec<usize>> =
            std::collections::HashMap::new();
        for (i, a) in all.iter().enumerate() {
            by_pbe.entry(encode_path_based(a).unwrap().bits).or_default().push(i);
        }
        for group in by_pbe.values() {
            for (gi, &i) in group.iter().enumerate() {
                for &j in &group[gi + 1..] {
                    let pa = encode_position_aware(&all[i]).unwrap();
                    let pb = encode_position_aware(&all[j]).unwrap();
                    if pa.key() != pb.key() {
                        return Some((all[i].clone(), all[j].clone()));
                    }
                }
            }
        }
        None
    }

    #[test]
    fn collision_witness_exists_and_dedupe_keeps_both() {
        let space = SpaceDescriptor::surrogate5();
        let (a, b) = find_collision_witness(&space).expect("no collision pair found");
        assert_eq!(encode_path_based(&a).unwrap(), encode_path_based(&b).unwrap());
        assert_ne!(
            encode_position_aware(&a).unwrap().key(),
            encode_position_aware(&b).unwrap().key()
        );
        let kept = dedupe(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn adjacency_encoding_minimal_graph() {
        let space = SpaceDescriptor::nb101();
        let mut adjacency = vec![vec![0u8; 2]; 2];
        adjacency[0][1] = 1;
        let a = Architecture::new(
            adjacency,
            vec![NodeOp::Input, NodeOp::Output],
            Arc::clone(&space),
        )
        .unwrap();
        let enc = encode_adjacency(&a);
        assert_eq!(enc.bits.len(), 21 + 7 * 6);
        let edge_bits: usize = enc.bits[..21].iter().map(|&b| b as usize).sum();
        assert_eq!(edge_bits, 1);
        assert_eq!(enc.bits[0], 1); // edge (0,1) is the first triangle slot
    }

    #[test]
    fn adjacency_encoding_length_formula() {
        // max_nodes=7, feature_dim=6: 21 + 42 = 63
        let space = SpaceDescriptor::nb101();
        let a = arch(&space, &[(0, 1), (1, 2)], &[0]);
        assert_eq!(encode_adjacency(&a).bits.len(), 63);
    }

    #[test]
    fn relabeled_isomorphic_pair_differs_in_adjacency_encoding() {
        let space = SpaceDescriptor::surrogate5();
        // Same graph with interior nodes 1 and 2 swapped: two parallel
        // chains input->x->output, x in {1, 2}, ops swapped with them.
        let a = arch(&space, &[(0, 1), (1, 3), (0, 2), (2, 3)], &[0, 1]);
        let b = arch(&space, &[(0, 1), (1, 3), (0, 2), (2, 3)], &[1, 0]);
        assert_ne!(encode_adjacency(&a), encode_adjacency(&b));
    }

    #[test]
    fn ged_identity_and_single_op_swap() {
        let space = SpaceDescriptor::nb101();
        let a = arch(&space, &[(0, 1), (1, 2)], &[1]); // conv3x3
        let b = arch(&space, &[(0, 1), (1, 2)], &[0]); // conv1x1
        assert_eq!(ged(&a, &a).unwrap(), 0);
        assert_eq!(ged(&a, &b).unwrap(), 2);
        assert_eq!(ged(&b, &a).unwrap(), 2);
    }

    /// Independent oracle: pad both concats, sum absolute differences
    /// with an explicit element loop.
    fn ged_oracle(a: &Architecture, b: &Architecture) -> u32 {
        let ca = encode_position_aware(a).unwrap().concat;
        let cb = encode_position_aware(b).unwrap().concat;
        let n = ca.len().max(cb.len());
        let pad = |v: &[u8]| {
            let mut out = v.to_vec();
            out.resize(n, 0);
            out
        };
        let (ca, cb) = (pad(&ca), pad(&cb));
        let mut sum = 0u32;
        for k in 0..n {
            sum += (i32::from(ca[k]) - i32::from(cb[k])).unsigned_abs();
        }
        sum
    }

    #[test]
    fn ged_matches_l1_oracle_on_random_pairs() {
        let space = SpaceDescriptor::surrogate5();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..1_000 {
            let a = random_architecture(&space, &mut rng).unwrap();
            let b = random_architecture(&space, &mut rng).unwrap();
            assert_eq!(ged(&a, &b).unwrap(), ged_oracle(&a, &b));
        }
    }

    #[test]
    fn ged_is_a_pseudo_metric_on_sampled_triples() {
        let space = SpaceDescriptor::surrogate5();
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        for _ in 0..1_000 {
            let a = random_architecture(&space, &mut rng).unwrap();
            let b = random_architecture(&space, &mut rng).unwrap();
            let c = random_architecture(&space, &mut rng).unwrap();
            let ab = ged(&a, &b).unwrap();
            let ba = ged(&b, &a).unwrap();
            let ac = ged(&a, &c).unwrap();
            let cb = ged(&c, &b).unwrap();
            assert_eq!(ab, ba);
            assert_eq!(ged(&a, &a).unwrap(), 0);
            assert!(ab <= ac + cb, "triangle violated: {ab} > {ac} + {cb}");
        }
    }

    #[test]
    fn nged_closed_forms() {
        assert!((nged_from_ged::<f64>(0, 7) - 1.0).abs() < 1e-12);
        assert!((nged_from_ged::<f64>(7, 7) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((nged_from_ged::<f64>(2, 4) - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn nged_is_one_iff_ged_is_zero() {
        let space = SpaceDescriptor::surrogate5();
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        for _ in 0..500 {
            let a = random_architecture(&space, &mut rng).unwrap();
            let b = random_architecture(&space, &mut rng).unwrap();
            let d = ged(&a, &b).unwrap();
            let s: f64 = nged(&a, &b).unwrap();
            assert!(s > 0.0 && s <= 1.0);
            assert_eq!(s == 1.0, d == 0);
        }
    }

    #[test]
    fn concat_length_grows_linearly_with_path_count() {
        let space = SpaceDescriptor::surrogate5();
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        for _ in 0..300 {
            let a = random_architecture(&space, &mut rng).unwrap();
            let enc = encode_position_aware(&a).unwrap();
            assert_eq!(enc.concat.len(), enc.path_count * enc.slot_width);
        }
    }

    #[test]
    fn dedupe_drops_exact_duplicates_only() {
        let space = SpaceDescriptor::nb101();
        let a = arch(&space, &[(0, 1), (1, 2)], &[1]);
        let kept = dedupe(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn dedupe_matches_pairwise_comparison_oracle() {
        // Exhaustive 4-node space: dedupe count equals the count of
        // distinct encodings found by hash-free O(n^2) comparison.
        let vocab = crate::archspace::OpVocabulary::new(vec!["a", "b"]).unwrap();
        let space = Arc::new(SpaceDescriptor::new("four", 4, 6, vocab).unwrap());
        let all = enumerate_space(&space).unwrap();
        let kept = dedupe(&all).unwrap();

        let encs: Vec<PositionAwareEncoding> =
            all.iter().map(|a| encode_position_aware(a).unwrap()).collect();
        let mut distinct: Vec<&PositionAwareEncoding> = Vec::new();
        for e in &encs {
            if !distinct.iter().any(|d| {
                d.path_count == e.path_count && ged_encoded(d, e) == 0
            }) {
                distinct.push(e);
            }
        }
        assert_eq!(kept.len(), distinct.len());
    }
}
