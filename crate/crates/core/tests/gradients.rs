mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use turnwise::autodiff::{grad_check, Graph, NodeId, ParamStore, Tensor};
use turnwise::context::{gru_cell, GruCellParams};
use turnwise::encoder::BagEncoder;
use turnwise::turns::{add_topic, combine_sum, CombineMode};

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Add,
    Sub,
    Mul,
    Matmul,
    MatmulT,
    Sigmoid,
    Tanh,
    Scale,
    Gather,
    ConcatSlice,
}

const OPS: [Op; 10] = [
    Op::Add,
    Op::Sub,
    Op::Mul,
    Op::Matmul,
    Op::MatmulT,
    Op::Sigmoid,
    Op::Tanh,
    Op::Scale,
    Op::Gather,
    Op::ConcatSlice,
];

struct Dag {
    ops: Vec<(Op, usize, usize, Vec<usize>)>,
    cross_entropy: Option<Vec<i64>>,
    weights: Tensor<f64>,
}

fn random_dag(rng: &mut ChaCha8Rng) -> Dag {
    let n_ops = rng.gen_range(1..=5);
    let mut ops = Vec::new();
    for i in 0..n_ops {
        let available = 3 + i;
        let op = OPS[rng.gen_range(0..OPS.len())];
        let idx = (0..3).map(|_| rng.gen_range(0..3)).collect();
        ops.push((op, rng.gen_range(0..available), rng.gen_range(0..available), idx));
    }
    let cross_entropy = rng
        .gen_bool(0.5)
        .then(|| (0..3).map(|_| if rng.gen_bool(0.2) { -1 } else { rng.gen_range(0..3) }).collect());
    let weights = random_matrix(rng, 3, 3);
    Dag {
        ops,
        cross_entropy,
        weights,
    }
}

fn build(dag: &Dag, g: &mut Graph<f64>, store: &ParamStore<f64>) -> turnwise::Result<NodeId> {
    let mut nodes: Vec<NodeId> = store.ids().map(|id| g.param(store, id)).collect::<Result<_, _>>()?;
    for (op, a, b, idx) in &dag.ops {
        let (a, b) = (nodes[*a], nodes[*b]);
        let out = match op {
            Op::Add => g.add(a, b)?,
            Op::Sub => g.sub(a, b)?,
            Op::Mul => g.mul(a, b)?,
            Op::Matmul => g.matmul(a, b)?,
            Op::MatmulT => g.matmul_t(a, b)?,
            Op::Sigmoid => g.sigmoid(a)?,
            Op::Tanh => g.tanh(a)?,
            Op::Scale => g.scale(a, -0.7)?,
            Op::Gather => g.gather(a, idx)?,
            Op::ConcatSlice => {
                let joined = g.concat(&[a, b], idx[0] % 2)?;
                g.slice(joined, idx[0] % 2, idx[1], 3)?
            }
        };
        nodes.push(out);
    }
    let last = *nodes.last().unwrap();
    match &dag.cross_entropy {
        Some(labels) => g.softmax_cross_entropy(last, labels),
        None => {
            let w = g.constant(dag.weights.clone())?;
            let weighted = g.mul(last, w)?;
            g.sum(weighted)
        }
    }
}

#[test]
fn random_dags_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..60 {
        let dag = random_dag(&mut rng);
        if dag.cross_entropy.as_ref().is_some_and(|l| l.iter().all(|&x| x < 0)) {
            continue;
        }
        let mut store = ParamStore::new();
        for name in ["a", "b", "c"] {
            store.add(name, random_matrix(&mut rng, 3, 3)).unwrap();
        }
        let report = grad_check(&mut store, |g, s| build(&dag, g, s), 1e-5, 1e-6).unwrap();
        assert!(report.passed(), "case {case}: {:?} -> {:?}", dag.ops, report.worst());
    }
}

#[test]
fn single_gru_cell_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let cell = GruCellParams::register(&mut store, "cell", 4, 4, &mut rng).unwrap();
    for name in ["cell.b_z", "cell.b_r", "cell.b_h"] {
        let id = store.id(name).unwrap();
        store.get_mut(id).value = Tensor::row((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let x = random_matrix(&mut rng, 2, 4);
    let h0 = random_matrix(&mut rng, 2, 4);
    let labels = [1i64, 3];
    let report = grad_check(
        &mut store,
        |g, s| {
            let x = g.constant(x.clone())?;
            let h0 = g.constant(h0.clone())?;
            let h1 = gru_cell(g, s, &cell, x, h0)?;
            let h2 = gru_cell(g, s, &cell, x, h1)?;
            g.softmax_cross_entropy(h2, &labels)
        },
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "{:?}", report.worst());
}

fn full_model_check(mode: CombineMode, use_topic: bool) {
    let corpus = common::toy_corpus(5, 4, 21);
    let mut model = common::fresh_model(&corpus, 8, 8, mode, use_topic, 5);
    common::randomize(&mut model.store, 0.5, 9);
    let batch = common::whole_batch(&corpus, &corpus.train);
    let mut store = model.store.clone();
    let report = grad_check(&mut store, |g, s| model.loss_with(g, s, &batch), 1e-5, 1e-4).unwrap();
    assert!(report.passed(), "{mode} topic={use_topic}: {:?}", report.worst());
    assert!(report.params.iter().any(|p| p.name == "turns.table") || mode == CombineMode::None);
    assert_eq!(report.params.iter().any(|p| p.name == "topics.table"), use_topic);
}

#[test]
fn full_model_sum_with_topic_matches_finite_differences() {
    full_model_check(CombineMode::Sum, true);
}

#[test]
fn full_model_other_modes_match_finite_differences() {
    full_model_check(CombineMode::None, false);
    full_model_check(CombineMode::Concat, true);
}

#[test]
fn padded_batches_match_finite_differences() {
    let a = common::toy_corpus(5, 3, 1);
    let mut b = common::toy_corpus(3, 3, 2).train;
    b[0].conversation_id = "c1".into();
    let convs = vec![a.train[0].clone(), b[0].clone()];
    let corpus = turnwise::corpus::Corpus::new(convs, vec![], vec![], a.label_vocab.clone(), a.topic_vocab.clone());
    let mut model = common::fresh_model(&corpus, 4, 3, CombineMode::Sum, true, 0);
    common::randomize(&mut model.store, 0.5, 2);
    let batch = common::whole_batch(&corpus, &corpus.train);
    assert_eq!(batch.mask.iter().filter(|&&m| !m).count(), 2);
    let mut store = model.store.clone();
    let report = grad_check(&mut store, |g, s| model.loss_with(g, s, &batch), 1e-5, 1e-4).unwrap();
    assert!(report.passed(), "{:?}", report.worst());
}

#[test]
fn turn_table_gradient_counts_rows() {
    // L = Σ g(u,s): ∂L/∂f(k) is the number of rows with turn label k, per coordinate.
    let turns = [0usize, 1, 1, 0, 1, 1, 1];
    let mut store = ParamStore::new();
    let table = store.add("t", Tensor::zeros(&[2, 3])).unwrap();
    let mut g = Graph::new();
    let e = g.constant(Tensor::full(&[turns.len(), 3], 0.25)).unwrap();
    let t = g.param(&store, table).unwrap();
    let out = combine_sum(&mut g, e, &turns, t).unwrap();
    let loss = g.sum(out).unwrap();
    g.backward(loss, &mut store).unwrap();
    assert_eq!(store.get(table).grad.data(), &[2.0, 2.0, 2.0, 5.0, 5.0, 5.0]);
}

#[test]
fn topic_table_gradient_counts_rows_and_skips_unknown() {
    let topics = [Some(2usize), Some(2), None, Some(0), Some(2)];
    let mut store = ParamStore::<f64>::new();
    let table = store.add("m", Tensor::zeros(&[3, 2])).unwrap();
    let mut g = Graph::new();
    let e = g.constant(Tensor::zeros(&[topics.len(), 2])).unwrap();
    let t = g.param(&store, table).unwrap();
    let out = add_topic(&mut g, e, &topics, t).unwrap();
    let loss = g.sum(out).unwrap();
    g.backward(loss, &mut store).unwrap();
    assert_eq!(store.get(table).grad.data(), &[1.0, 1.0, 0.0, 0.0, 3.0, 3.0]);
}

#[test]
fn bag_gradient_is_occurrence_over_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f64>::new();
    let bag = BagEncoder::register(&mut store, 6, 2, &mut rng).unwrap();
    let lists = vec![vec![2, 3, 2, 5], vec![0, 4], vec![]];
    let mut g = Graph::new();
    let e = bag.encode(&mut g, &store, &lists).unwrap();
    let loss = g.sum(e).unwrap();
    g.backward(loss, &mut store).unwrap();
    let grad = store.get(bag.word_emb).grad.data().to_vec();
    let expected = [0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.25, 0.25, 0.5, 0.5, 0.25, 0.25];
    for (a, b) in grad.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{grad:?}");
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let corpus = common::toy_corpus(6, 3, 4);
    let model = common::fresh_model(&corpus, 4, 4, CombineMode::Sum, true, 1);
    let batch = common::whole_batch(&corpus, &corpus.train);
    let grads = |factor: f64| {
        let mut store = model.store.clone();
        let mut g = Graph::new();
        let loss = model.loss_with(&mut g, &store, &batch).unwrap();
        let loss = g.scale(loss, factor).unwrap();
        g.backward(loss, &mut store).unwrap();
        store.iter().flat_map(|p| p.grad.data().to_vec()).collect::<Vec<_>>()
    };
    let once = grads(1.0);
    let thrice = grads(3.0);
    for (a, b) in once.iter().zip(&thrice) {
        assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn backward_is_deterministic_across_runs() {
    let corpus = common::toy_corpus(7, 4, 8);
    let model = common::fresh_model(&corpus, 6, 5, CombineMode::Concat, true, 2);
    let batch = common::whole_batch(&corpus, &corpus.train);
    let run = || {
        let mut store = model.store.clone();
        let mut g = Graph::new();
        let loss = model.loss_with(&mut g, &store, &batch).unwrap();
        g.backward(loss, &mut store).unwrap();
        store.iter().flat_map(|p| p.grad.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
