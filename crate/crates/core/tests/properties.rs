use ncg_core::config::parse_bond;
use ncg_core::embed::{Embedder, EmbeddingCache, MockEmbedder};
use ncg_core::eval::{classification_metrics, cohens_kappa};
use ncg_core::expert::{encode_one_hot_with, one_hot_offsets, one_hot_width};
use ncg_core::model::{
    deserialize_graph, serialize_graph, Bond, CausalEdge, CausalGraph, EiTrait, EventivityArity, ExpertIndex, StacLabel,
    Vertex,
};
use proptest::prelude::*;

fn label() -> impl Strategy<Value = StacLabel> {
    prop::sample::select(StacLabel::ALL.to_vec())
}

fn arity() -> impl Strategy<Value = EventivityArity> {
    prop_oneof![Just(EventivityArity::Two), Just(EventivityArity::Three)]
}

fn expert_index(arity: EventivityArity) -> impl Strategy<Value = ExpertIndex> {
    let sizes: Vec<usize> = EiTrait::ALL.iter().map(|t| t.arity(arity)).collect();
    sizes
        .into_iter()
        .map(|n| (0..n).boxed())
        .collect::<Vec<_>>()
        .prop_map(move |idx| ExpertIndex::from_categories(idx.try_into().unwrap(), arity).unwrap())
}

fn graph() -> impl Strategy<Value = CausalGraph> {
    (1usize..12)
        .prop_flat_map(|n| {
            (
                prop::collection::vec((label(), "[a-z]{1,8}( [a-z]{1,8}){0,4}"), n),
                prop::collection::btree_set((0..n, 0..n), 0..n * 2),
                any::<bool>(),
            )
        })
        .prop_map(|(verts, pairs, rationale)| {
            let vertices: Vec<Vertex> = verts
                .iter()
                .enumerate()
                .map(|(i, (l, t))| Vertex::new(format!("v{:03}", i + 1), format!("{t}.")).with_stac(*l))
                .collect();
            let edges = pairs
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| CausalEdge {
                    from: vertices[a].id.clone(),
                    to: vertices[b].id.clone(),
                    bond: Bond(verts[a].0, verts[b].0),
                    origin_iteration: if (a + b) % 3 == 0 { 4 } else { 2 },
                    rationale: rationale.then(|| format!("{a} then {b}")),
                })
                .collect();
            let mut g = CausalGraph { vertices, edges, ..Default::default() };
            g.metadata.narrative_id = "p".into();
            g
        })
}

proptest! {
    #[test]
    fn graph_document_round_trips(g in graph()) {
        let text = serialize_graph(&g).unwrap();
        let back = deserialize_graph(&text).unwrap();
        prop_assert_eq!(&back, &g.clone().canonical());
        prop_assert_eq!(serialize_graph(&back).unwrap(), text);
    }

    #[test]
    fn edge_order_does_not_change_the_document(g in graph(), rot in 0usize..20) {
        let mut shuffled = g.clone();
        if !shuffled.edges.is_empty() {
            let k = rot % shuffled.edges.len();
            shuffled.edges.rotate_left(k);
        }
        shuffled.vertices.reverse();
        prop_assert_eq!(serialize_graph(&shuffled).unwrap(), serialize_graph(&g).unwrap());
    }

    #[test]
    fn kappa_is_symmetric_bounded_and_label_blind(
        pairs in prop::collection::vec((0u8..4, 0u8..4), 2..60),
        perm in Just([0u8, 1, 2, 3]).prop_shuffle(),
    ) {
        let a: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let Ok(k) = cohens_kappa(&a, &b) else { return Ok(()) };
        prop_assert!(k <= 1.0 + 1e-12 && k >= -1.0 - 1e-12);
        prop_assert!((cohens_kappa(&b, &a).unwrap() - k).abs() < 1e-12);
        let ra: Vec<u8> = a.iter().map(|&x| perm[x as usize]).collect();
        let rb: Vec<u8> = b.iter().map(|&x| perm[x as usize]).collect();
        prop_assert!((cohens_kappa(&ra, &rb).unwrap() - k).abs() < 1e-12);
    }

    #[test]
    fn kappa_of_identical_varied_labels_is_one(a in prop::collection::vec(0u8..5, 2..40)) {
        prop_assume!(a.iter().any(|&x| x != a[0]));
        prop_assert!((cohens_kappa(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_sets_one_bit_per_trait((ar, ei) in arity().prop_flat_map(|a| (Just(a), expert_index(a)))) {
        let v = encode_one_hot_with(&ei, ar);
        prop_assert_eq!(v.len(), one_hot_width(ar));
        prop_assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 7);
        prop_assert!(v.iter().all(|&x| x == 0.0 || x == 1.0));
        let offsets = one_hot_offsets(ar);
        let idx: Vec<usize> = EiTrait::ALL
            .iter()
            .zip(offsets)
            .map(|(t, off)| v[off..off + t.arity(ar)].iter().position(|&x| x == 1.0).unwrap())
            .collect();
        let decoded = ExpertIndex::from_categories(idx.try_into().unwrap(), ar).unwrap();
        prop_assert_eq!(encode_one_hot_with(&decoded, ar), v);
    }

    #[test]
    fn bond_text_round_trips(a in label(), b in label(), arrow in prop::sample::select(vec!["->", "→", " -> ", " → "])) {
        let short = Bond(a, b).short();
        prop_assert_eq!(parse_bond(&short).unwrap(), Bond(a, b));
        let long = format!("{}{arrow}{}", a.as_str(), b.as_str());
        prop_assert_eq!(parse_bond(&long).unwrap(), Bond(a, b));
    }

    #[test]
    fn perfect_predictions_score_one(gold in prop::collection::vec(label(), 1..50)) {
        let r = classification_metrics(&gold, &gold).unwrap();
        prop_assert_eq!(r.accuracy, 1.0);
        prop_assert_eq!(r.macro_f1, Some(1.0));
    }

    #[test]
    fn mock_embeddings_are_stable_and_cache_round_trips(texts in prop::collection::vec("[A-Za-z ]{1,30}", 1..8)) {
        let e = MockEmbedder;
        let first = e.embed_batch(&texts).unwrap();
        prop_assert_eq!(&first, &e.embed_batch(&texts).unwrap());
        for (emb, t) in first.iter().zip(&texts) {
            prop_assert!(emb.matches(e.encoder_id(), t));
        }
        let mut cache = EmbeddingCache::new();
        cache.embed_all(&e, &texts).unwrap();
        let back = EmbeddingCache::from_bytes(&cache.to_bytes()).unwrap();
        prop_assert_eq!(back.len(), cache.len());
        for emb in &first {
            prop_assert_eq!(back.get(&emb.source_fingerprint), Some(emb.clone()));
        }
    }
}
