use metarank::encoder::StubBackend;
use metarank::evalkit::synthetic::{collateral_catalog, collateral_queries};
use metarank::index::{build_index, cosine, load_index, save_index, IndexError};
use metarank::promptc::compile_all;
use metarank::{BiEncoder, EmbeddingIndex};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scores every entry, sorts the whole list, keeps the first `k`.
fn brute_force(index: &EmbeddingIndex, q: &[f32], k: usize) -> Vec<(String, f32)> {
    let mut all: Vec<(String, f32)> = index
        .iter()
        .map(|(id, v)| (id.to_string(), cosine(q, v).unwrap()))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn fast(index: &EmbeddingIndex, q: &[f32], k: usize) -> Vec<(String, f32)> {
    index
        .top_k(q, k)
        .unwrap()
        .into_iter()
        .map(|c| (c.doc_id, c.retrieval_score))
        .collect()
}

#[test]
fn stub_catalog_top_k_matches_full_sort() {
    let stub = StubBackend::new(64);
    for seed in 0..6 {
        let cat = collateral_catalog(400 + 300 * seed as usize, seed);
        let index = build_index(&compile_all(&cat, 512).unwrap(), &stub).unwrap();
        for q in collateral_queries(10, seed) {
            let qv = stub.embed(&[&q]).unwrap().remove(0).values;
            for k in [1, 5, 100, index.len(), index.len() + 7] {
                assert_eq!(
                    fast(&index, &qv, k),
                    brute_force(&index, &qv, k),
                    "seed {seed} k {k}"
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // many duplicated vectors force score ties; the id tie-break must hold
    #[test]
    fn ties_break_by_id(
        pool in prop::collection::vec(prop::collection::vec(-3i8..4, 6), 1..5),
        picks in prop::collection::vec((0usize..5, "[a-z]{1,6}"), 1..120),
        q in prop::collection::vec(-3i8..4, 6),
        k in 1usize..150,
    ) {
        let mut entries = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (p, id) in picks {
            let v: Vec<f32> = pool[p % pool.len()].iter().map(|&x| f32::from(x)).collect();
            if v.iter().all(|x| *x == 0.0) || !seen.insert(id.clone()) {
                continue;
            }
            entries.push((id, v));
        }
        prop_assume!(!entries.is_empty());
        let qv: Vec<f32> = q.iter().map(|&x| f32::from(x)).collect();
        prop_assume!(qv.iter().any(|x| *x != 0.0));
        let index = EmbeddingIndex::from_entries(6, entries, "t").unwrap();
        prop_assert_eq!(fast(&index, &qv, k), brute_force(&index, &qv, k));
    }
}

#[test]
fn invalid_queries_are_rejected() {
    let index =
        EmbeddingIndex::from_entries(3, vec![("a".into(), vec![1.0, 0.0, 0.0])], "t").unwrap();
    assert!(matches!(
        index.top_k(&[1.0, 0.0], 1),
        Err(IndexError::DimensionMismatch { .. })
    ));
    assert!(matches!(
        index.top_k(&[0.0; 3], 1),
        Err(IndexError::ZeroVector)
    ));
    assert!(matches!(
        index.top_k(&[1.0, 0.0, 0.0], 0),
        Err(IndexError::InvalidK)
    ));
    assert!(matches!(
        EmbeddingIndex::from_entries(
            2,
            vec![("a".into(), vec![1.0, 0.0]), ("a".into(), vec![0.0, 1.0])],
            "t"
        ),
        Err(IndexError::DuplicateId(_))
    ));
}

fn random_index(n: usize, dim: usize, seed: u64) -> EmbeddingIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..n)
        .map(|i| {
            let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            v[i % dim] += 2.0;
            (format!("d{i:05}"), v)
        })
        .collect();
    EmbeddingIndex::from_entries(dim, entries, "random").unwrap()
}

#[test]
fn ten_thousand_docs_round_trip_bit_exact() {
    let index = random_index(10_000, 32, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("idx.msxe");
    save_index(&index, &path).unwrap();
    let back = load_index(&path).unwrap();
    assert_eq!(back, index);
    for ((a, va), (b, vb)) in index.iter().zip(back.iter()) {
        assert_eq!(a, b);
        assert!(va.iter().zip(vb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(back.to_bytes(), index.to_bytes());
}

#[test]
fn every_truncation_is_rejected() {
    let bytes = random_index(12, 4, 1).to_bytes();
    for len in 0..bytes.len() {
        assert!(
            matches!(
                EmbeddingIndex::from_bytes(&bytes[..len]),
                Err(IndexError::Format(_))
            ),
            "prefix of {len} bytes accepted"
        );
    }
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(matches!(
        EmbeddingIndex::from_bytes(&longer),
        Err(IndexError::Format(_))
    ));
}

#[test]
fn header_and_trailer_corruption_is_rejected() {
    let bytes = random_index(12, 4, 2).to_bytes();
    let corrupt = |at: usize, val: u8| {
        let mut b = bytes.clone();
        b[at] = val;
        EmbeddingIndex::from_bytes(&b)
    };
    assert!(matches!(corrupt(0, b'X'), Err(IndexError::Format(_))));
    match corrupt(4, 9) {
        Err(IndexError::Format(m)) => assert!(m.contains('9'), "{m}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(corrupt(8, 0), Err(IndexError::Format(_))));
    assert!(matches!(corrupt(12, 13), Err(IndexError::Format(_))));
    assert!(matches!(
        corrupt(bytes.len() - 8, 11),
        Err(IndexError::Format(_))
    ));
    // a NaN in the first vector
    let mut nan = bytes.clone();
    let first_vec = 20 + 4 + "d00000".len();
    nan[first_vec..first_vec + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(
        EmbeddingIndex::from_bytes(&nan),
        Err(IndexError::Format(_))
    ));
}
