use multispec_core::augment::{one_hot, MixupConfig, MixupPlan};
use multispec_core::decoders::{MoeLayer, RegressionTree, RfrConfig, RfrModel, LEAF};
use multispec_core::encoder::{Combiner, CombinerKind};
use multispec_core::nn::{Mode, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const D: usize = 6;

fn batch() -> impl Strategy<Value = (usize, Vec<f32>)> {
    (1usize..5).prop_flat_map(|n| (Just(n), prop::collection::vec(-10.0f32..10.0, n * D)))
}

fn t(n: usize, v: &[f32]) -> Tensor {
    Tensor::new(&[n, D], v.to_vec()).unwrap()
}

fn combine(kind: CombinerKind, n: usize, a: &[f32], b: &[f32], c: &[f32]) -> Vec<f32> {
    Combiner::new(kind, D).forward([&t(n, a), &t(n, b), &t(n, c)]).unwrap().into_data()
}

fn walk(tree: &RegressionTree, x: &[f32]) -> Vec<f32> {
    let mut node = 0;
    loop {
        if tree.feature[node] == LEAF {
            return tree.values[node * tree.outputs..(node + 1) * tree.outputs].to_vec();
        }
        let f = tree.feature[node] as usize;
        node = if x[f] <= tree.threshold[node] { tree.left[node] } else { tree.right[node] } as usize;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn max_comb_idempotent((n, x) in batch(), (_, y) in batch()) {
        prop_assert_eq!(combine(CombinerKind::Max, n, &x, &x, &x), x.clone());
        let y = &y[..y.len().min(x.len())];
        if y.len() == x.len() {
            let m = combine(CombinerKind::Max, n, &x, y, &x);
            prop_assert_eq!(combine(CombinerKind::Max, n, &m, &m, &m), m);
        }
    }

    #[test]
    fn sum_comb_commutative(n in 1usize..5, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = || (0..n * D).map(|_| rng.random_range(-10.0f32..10.0)).collect::<Vec<_>>();
        let (a, b, c) = (v(), v(), v());
        let base = combine(CombinerKind::Sum, n, &a, &b, &c);
        for (p, q, r) in [(&a, &c, &b), (&b, &a, &c), (&b, &c, &a), (&c, &a, &b), (&c, &b, &a)] {
            let other = combine(CombinerKind::Sum, n, p, q, r);
            for (x, y) in base.iter().zip(&other) {
                prop_assert!((x - y).abs() <= 1e-5 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn lin_comb_unit_weights((n, a) in batch(), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f32> = (0..n * D).map(|_| rng.random_range(-10.0f32..10.0)).collect();
        let c: Vec<f32> = (0..n * D).map(|_| rng.random_range(-10.0f32..10.0)).collect();
        let ones = vec![1.0; D];
        let zeros = vec![0.0; D];
        let mut all = Combiner::linear(ones.clone(), ones.clone(), ones.clone(), zeros.clone()).unwrap();
        let relu_sum: Vec<f32> = combine(CombinerKind::Sum, n, &a, &b, &c).iter().map(|v| v.max(0.0)).collect();
        prop_assert_eq!(all.forward([&t(n, &a), &t(n, &b), &t(n, &c)]).unwrap().into_data(), relu_sum);
        let mut first = Combiner::linear(ones, zeros.clone(), zeros.clone(), zeros).unwrap();
        let relu_a: Vec<f32> = a.iter().map(|v| v.max(0.0)).collect();
        prop_assert_eq!(first.forward([&t(n, &a), &t(n, &b), &t(n, &c)]).unwrap().into_data(), relu_a);
    }

    #[test]
    fn moe_gate_normalized(seed in any::<u64>(), n in 1usize..6, k in 1usize..6, scale in 0.1f32..50.0) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = MoeLayer::new(D, k, 3, &mut rng).unwrap();
        let z: Vec<f32> = (0..n * D).map(|_| rng.random_range(-scale..scale)).collect();
        let (_, g) = layer.parts(&t(n, &z), Mode::Eval).unwrap();
        for row in g.data().chunks(k) {
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() <= 1e-6, "gate sums to {}", s);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn rfr_mean_equals_tree_average(seed in any::<u64>(), n in 4usize..30, trees in 1usize..8) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f32>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect();
        let y: Vec<Vec<f32>> = (0..n).map(|_| one_hot(rng.random_range(0..3), 3)).collect();
        let cfg = RfrConfig { n_trees: trees, max_depth: Some(6), min_leaf: 1, max_features: Some(2), bootstrap: true, seed };
        let model = RfrModel::fit(&x, &y, &cfg).unwrap();
        prop_assert_eq!(model.trees.len(), trees);
        let probe: Vec<f32> = (0..4).map(|_| rng.random_range(-1.2f32..1.2)).collect();
        let mut mean = vec![0.0f64; 3];
        for tree in &model.trees {
            for (m, v) in mean.iter_mut().zip(walk(tree, &probe)) {
                *m += v as f64 / trees as f64;
            }
        }
        for (a, b) in model.predict(&probe).unwrap().iter().zip(&mean) {
            prop_assert!((*a as f64 - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn mixup_contract(n in 2usize..40, classes in 2usize..8, seed in any::<u64>(), gaussian in any::<bool>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<Vec<f32>> = (0..n).map(|_| (0..5).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect();
        let labels: Vec<Vec<f32>> = (0..n).map(|_| one_hot(rng.random_range(0..classes), classes)).collect();

        let patch = MixupConfig { gaussian_copy: gaussian, ..MixupConfig::patch(seed) };
        let plan = MixupPlan::new(n, &patch).unwrap();
        prop_assert_eq!(plan.len(), if gaussian { 3 * n } else { 2 * n });
        prop_assert_eq!(&plan, &MixupPlan::new(n, &patch).unwrap());

        let feature = MixupPlan::new(n, &MixupConfig::feature(seed)).unwrap();
        prop_assert_eq!(feature.len(), 2 * n);

        let out = plan.apply(&values, &labels).unwrap();
        prop_assert_eq!(out.values.len(), plan.len());
        for y in out.labels.iter().chain(&feature.apply(&values, &labels).unwrap().labels) {
            let s: f64 = y.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() <= 1e-6, "label sums to {}", s);
        }
        prop_assert_eq!(out, plan.apply(&values, &labels).unwrap());
    }
}
