//! Graph-level invariants: topological order and depthwise-separable cost.

mod common;

use proptest::prelude::*;
use tinydeploy::graph::{count_macs, count_params, infer_shapes, GraphBuilder, Padding, TensorShape};

/// Moves each layer as early as its inputs allow, in reverse scan order,
/// which yields a different valid topological order whenever the graph has
/// independent branches.
fn hoist(graph: &tinydeploy::graph::Graph) -> tinydeploy::graph::Graph {
    let mut g = graph.clone();
    let mut layers = g.layers.clone();
    for i in (0..layers.len()).rev() {
        let layer = layers.remove(i);
        let earliest = layers.iter().enumerate().filter(|(_, l)| layer.inputs.contains(&l.id)).map(|(k, _)| k + 1).max().unwrap_or(0);
        layers.insert(earliest, layer);
    }
    g.layers = layers;
    g
}

fn two_branch_graph(c: usize) -> tinydeploy::graph::Graph {
    let mut b = GraphBuilder::new("branches", TensorShape::new(8, 8, 3));
    b.conv_same("stem", c, 3, 1);
    b.conv_from("left", "stem", c, (1, 1), (1, 1), Padding::ZERO);
    b.depthwise_from("right", "stem", (3, 3), (1, 1), Padding::uniform(1));
    b.conv_same("right_pw", c, 1, 1);
    b.add("join", "left", "right_pw");
    b.finish()
}

#[test]
fn hoisting_changes_the_order() {
    let g = two_branch_graph(4);
    let ids = |g: &tinydeploy::graph::Graph| g.layers.iter().map(|l| l.id.clone()).collect::<Vec<_>>();
    assert_ne!(ids(&g), ids(&hoist(&g)));
}

proptest! {
    #[test]
    fn counts_ignore_topological_order(seed in any::<u64>(), c in 1usize..8) {
        for g in [common::random_graph(seed, 5), two_branch_graph(c)] {
            let h = hoist(&g);
            infer_shapes(&h).unwrap();
            let (m1, m2) = (count_macs(&g).unwrap(), count_macs(&h).unwrap());
            let (p1, p2) = (count_params(&g).unwrap(), count_params(&h).unwrap());
            prop_assert_eq!(m1.total, m2.total);
            prop_assert_eq!(p1.total, p2.total);
            for l in &g.layers {
                prop_assert_eq!(m1.get(&l.id), m2.get(&l.id));
                prop_assert_eq!(p1.get(&l.id), p2.get(&l.id));
            }
        }
    }

    #[test]
    fn depthwise_separable_reduction(h in 3usize..12, w in 3usize..12, cin in 1usize..16, cout in 1usize..16, k in prop::sample::select(vec![1usize, 3, 5])) {
        let shape = TensorShape::new(h, w, cin);
        let pad = Padding::uniform(k / 2);
        let mut std = GraphBuilder::new("standard", shape);
        std.conv("conv", cout, (k, k), (1, 1), pad);
        let mut sep = GraphBuilder::new("separable", shape);
        sep.depthwise("dw", (k, k), (1, 1), pad);
        sep.conv("pw", cout, (1, 1), (1, 1), Padding::ZERO);
        let standard = count_macs(&std.finish()).unwrap().total as f64;
        let separable = count_macs(&sep.finish()).unwrap().total as f64;
        let expected = 1.0 / cout as f64 + 1.0 / (k * k) as f64;
        prop_assert!((separable / standard - expected).abs() < 1e-12);
    }
}
