use dgnn::dgnn::{
    detect, forward_dgnn_o, node_features, quantize_model, ClassifierKind, DgnnModel, Encoding, ModelSpec,
};
use dgnn::graphs::{normalized_adjacency, ppr_exact, topk_neighbors, Graph};
use dgnn::photonics::{dpu_forward, DpuGeometry, DpuParams, MetaAtomLut};
use dgnn::Complex64;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(n_in: usize, n_out: usize) -> DpuGeometry {
    DpuGeometry {
        num_layers: 2,
        atoms_per_line: 24,
        layer_distance: 3e-6,
        n_in,
        n_out,
        pad_factor: 4,
        ..DpuGeometry::synthetic()
    }
}

fn graph_strategy(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2..=max_n).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..3 * n)))
}

fn bare_graph(n: usize, edges: &[(usize, usize)]) -> Graph {
    Graph::new(n, edges, Array2::zeros((n, 1)), vec![None; n]).unwrap()
}

fn model(classifier: ClassifierKind, seed: u64) -> DgnnModel {
    let spec = ModelSpec {
        head_geometry: small(3, 2),
        n_heads: 2,
        slots: 1,
        readout_geometry: None,
        classifier,
        classifier_geometry: small(1, 1),
        n_classes: 3,
        encoding: Encoding::Amplitude,
        lut: MetaAtomLut::default(),
    };
    DgnnModel::init(&spec, seed).unwrap()
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n).prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dense_ppr_matches_power_iteration((n, edges) in graph_strategy(30), alpha in 0.05..1.0f64) {
        let a = normalized_adjacency(&bare_graph(n, &edges)).to_dense();
        let exact = ppr_exact(&normalized_adjacency(&bare_graph(n, &edges)), alpha).unwrap();
        let eye = Array2::<f64>::eye(n);
        let mut x = &eye * alpha;
        let iterations = (40.0 / (-(1.0 - alpha).ln()).max(1e-3)).ceil() as usize + 10;
        for _ in 0..iterations.min(2000) {
            x = &eye * alpha + a.dot(&x) * (1.0 - alpha);
        }
        let err = (&exact - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(err <= 1e-8, "max abs difference {}", err);
    }

    #[test]
    fn ppr_entries_are_nonnegative((n, edges) in graph_strategy(30), alpha in 0.05..1.0f64) {
        let pi = ppr_exact(&normalized_adjacency(&bare_graph(n, &edges)), alpha).unwrap();
        prop_assert!(pi.iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn cycle_ppr_rows_sum_to_one(n in 3usize..40, alpha in 0.05..1.0f64) {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let pi = ppr_exact(&normalized_adjacency(&bare_graph(n, &edges)), alpha).unwrap();
        for row in pi.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn dpu_forward_is_linear(seed in any::<u64>(), a in complex_vec(3), b in complex_vec(3), c in (-2.0..2.0f64, -2.0..2.0f64)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = DpuParams::random(small(3, 2), &mut rng).unwrap();
        let lut = MetaAtomLut::default();
        let c = Complex64::new(c.0, c.1);
        let mix: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| c * x + y).collect();
        let fa = dpu_forward(&a, &params, &lut).unwrap();
        let fb = dpu_forward(&b, &params, &lut).unwrap();
        let fm = dpu_forward(&mix, &params, &lut).unwrap();
        let scale = fa.iter().chain(&fb).map(|z| z.norm()).fold(1e-12, f64::max) * (1.0 + c.norm());
        for o in 0..fm.len() {
            prop_assert!((fm[o] - (c * fa[o] + fb[o])).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn detection_ignores_global_phase(features in complex_vec(8), theta in 0.0..std::f64::consts::TAU) {
        let rot = Complex64::from_polar(1.0, theta);
        let turned: Vec<Complex64> = features.iter().map(|z| z * rot).collect();
        for (a, b) in detect(&features).iter().zip(detect(&turned)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn relabeling_nodes_permutes_features(
        (n, edges) in graph_strategy(12),
        seed in any::<u64>(),
        shuffle in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attrs = Array2::from_shape_fn((n, 3), |_| rand::Rng::random_range(&mut rng, 0.0..1.0));
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(shuffle));
        let g = Graph::new(n, &edges, attrs.clone(), vec![None; n]).unwrap();
        let moved: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let mut moved_attrs = Array2::zeros((n, 3));
        for i in 0..n {
            moved_attrs.row_mut(perm[i]).assign(&attrs.row(i));
        }
        let h = Graph::new(n, &moved, moved_attrs, vec![None; n]).unwrap();
        let m = model(ClassifierKind::Electronic, seed);
        let table = |g: &Graph| topk_neighbors(&ppr_exact(&normalized_adjacency(g), 0.25).unwrap(), n).unwrap();
        let fg = node_features(&g, &table(&g), &m).unwrap();
        let fh = node_features(&h, &table(&h), &m).unwrap();
        for i in 0..n {
            for j in 0..fg.complex_features.ncols() {
                let (a, b) = (fg.complex_features[(i, j)], fh.complex_features[(perm[i], j)]);
                prop_assert!((a - b).norm() <= 1e-10 * a.norm().max(1e-6));
            }
        }
    }

    #[test]
    fn optical_scores_scale_with_squared_input(
        (n, edges) in graph_strategy(10),
        seed in any::<u64>(),
        c in 0.1..2.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attrs = Array2::from_shape_fn((n, 3), |_| rand::Rng::random_range(&mut rng, 0.0..0.5));
        let g = Graph::new(n, &edges, attrs.clone(), vec![None; n]).unwrap();
        let scaled = Graph::new(n, &edges, attrs.mapv(|v| v * c), vec![None; n]).unwrap();
        let m = model(ClassifierKind::Optical, seed);
        let table = topk_neighbors(&ppr_exact(&normalized_adjacency(&g), 0.25).unwrap(), 4.min(n)).unwrap();
        let a = forward_dgnn_o(&g, &table, &m).unwrap();
        let b = forward_dgnn_o(&scaled, &table, &m).unwrap();
        for i in 0..n {
            let row_a = a.row(i);
            let row_b = b.row(i);
            for k in 0..row_a.len() {
                prop_assert!((row_b[k] - c * c * row_a[k]).abs() <= 1e-9 * row_b[k].abs().max(1e-12));
            }
        }
    }

    #[test]
    fn quantization_touches_only_widths(seed in any::<u64>()) {
        let m = model(ClassifierKind::Optical, seed);
        let q = quantize_model(&m);
        let widths = |x: &DgnnModel| x.dpus().iter().flat_map(|p| p.widths.iter().flatten().copied().collect::<Vec<_>>()).collect::<Vec<f64>>();
        prop_assert!(widths(&q).iter().all(|&w| w == 0.0 || w == 100.0));
        for (w, qw) in widths(&m).iter().zip(widths(&q)) {
            prop_assert_eq!(qw, if *w >= 50.0 { 100.0 } else { 0.0 });
        }
        prop_assert_eq!(&q.encoding, &m.encoding);
        prop_assert_eq!(&q.lut, &m.lut);
        for (a, b) in m.dpus().iter().zip(q.dpus()) {
            prop_assert_eq!(&a.geometry, &b.geometry);
        }
    }
}
