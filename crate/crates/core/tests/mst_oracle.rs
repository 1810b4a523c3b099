mod oracles;

use hybrid_mst::sampler::{next_batch, select_mst, tree_weight, SamplerState};
use hybrid_mst::simulator::RngStream;
use hybrid_mst::UtilityGraph;
use oracles::{all_labeled_trees, exhaustive_min_tree_cost, random_utility_graph, tree_cost};

#[test]
fn pruefer_enumeration_counts_match_cayley() {
    for n in 2..=6 {
        let trees = all_labeled_trees(n);
        assert_eq!(trees.len(), n.pow(n as u32 - 2));
        let mut unique = trees.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), trees.len());
    }
}

#[test]
fn prim_matches_exhaustive_minimum() {
    let mut rng = RngStream::new(1234);
    for k in 0..200 {
        let n = 2 + k % 5;
        let g = random_utility_graph(n, &mut rng);
        let batch = select_mst(&g).unwrap();
        assert_eq!(batch.len(), n - 1);
        let got = tree_cost(&g, batch.pairs());
        assert_eq!(got, exhaustive_min_tree_cost(&g), "graph {k} with n = {n}");
        assert_eq!(got, tree_weight(&g, batch.pairs()));
    }
}

#[test]
fn three_item_example_by_enumeration() {
    let g = UtilityGraph::from_matrix(&[vec![0.0, 10.0, 1.0], vec![10.0, 0.0, 5.0], vec![1.0, 5.0, 0.0]]).unwrap();
    let best = all_labeled_trees(3)
        .into_iter()
        .min_by(|a, b| tree_cost(&g, a).total_cmp(&tree_cost(&g, b)))
        .unwrap();
    assert_eq!(best, vec![(0, 1), (1, 2)]);
    assert_eq!(select_mst(&g).unwrap().pairs(), best.as_slice());
}

#[test]
fn four_item_gating_sequence() {
    let mut rng = RngStream::new(4);
    let g = random_utility_graph(4, &mut rng);
    for votes in 0..=6 {
        assert_eq!(next_batch(&g, &SamplerState::new(4, votes)).unwrap().len(), 1);
    }
    for votes in 7..40 {
        assert_eq!(next_batch(&g, &SamplerState::new(4, votes)).unwrap().len(), 3);
    }
}
