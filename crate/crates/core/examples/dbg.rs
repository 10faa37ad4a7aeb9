fn main() {
    use archpred::archspace::*;
    use archpred::encoding::*;
    let space = SpaceDescriptor::surrogate5();
    let all = enumerate_space(&space).unwrap();
    println!("raw canonical forms: {}", all.len());
    let kept = dedupe(&all).unwrap();
    println!("distinct encodings:  {}", kept.len());
    // path count distribution
    let mut max_paths = 0;
    for a in &kept {
        let e = encode_position_aware(a).unwrap();
        max_paths = max_paths.max(e.path_count);
    }
    println!("max path count: {max_paths}");
    // 4-node space for the oracle test
    let vocab = OpVocabulary::new(vec!["conv1x1", "conv3x3", "maxpool3x3"]).unwrap();
    let s4 = std::sync::Arc::new(SpaceDescriptor::new("four", 4, 6, vocab).unwrap());
    let all4 = enumerate_space(&s4).unwrap();
    println!("4-node canonical: {} distinct: {}", all4.len(), dedupe(&all4).unwrap().len());
}
