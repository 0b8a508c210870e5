use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;

fn random_corpus(n: usize, layers: usize, dim_h: usize, dim_s: usize, seed: u64) -> SentenceCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let sentences = (0..n)
        .map(|i| Sentence {
            id: format!("s/{i}"),
            session: "s".into(),
            layers: Array2::from_shape_simple_fn((layers, dim_h), || normal.sample(&mut rng)),
            embedding: Array1::from_shape_simple_fn(dim_s, || normal.sample(&mut rng)),
        })
        .collect();
    SentenceCorpus::new(sentences).unwrap()
}

fn random_model(corpus: &SentenceCorpus, d: usize, seed: u64) -> SeparationModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = SeparationModel::init(
        corpus.n_layers(),
        corpus.layer_dim(),
        corpus.embedding_dim(),
        d,
        corpus.ids(),
        0.01,
        &mut rng,
    )
    .unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    m.layer_logits.mapv_inplace(|_| normal.sample(&mut rng));
    m
}

/// Loss through the public forward operations only.
fn reference_loss(model: &SeparationModel, corpus: &SentenceCorpus, batch: &[usize], obj: Objective, tau: f64) -> f64 {
    let alpha = model.alpha();
    let pairs: Vec<SimilarityPair> = batch
        .iter()
        .map(|&i| {
            let s = corpus.get(i);
            let h = weighted_sum(s.layers.view(), alpha.view()).unwrap();
            project_and_sim(model, h.view(), s.embedding.view(), model.dense.row(i)).unwrap()
        })
        .collect();
    loss(&pairs, obj, tau).unwrap()
}

fn max_rel_error(model: &SeparationModel, corpus: &SentenceCorpus, batch: &[usize], obj: Objective) -> f64 {
    let tau = 0.1;
    let h = 1e-4;
    let g = gradients(model, corpus, batch, obj, tau).unwrap();
    let mut worst = 0.0f64;
    let mut check = |analytic: f64, numeric: f64| {
        let denom = analytic.abs().max(numeric.abs());
        if denom > 0.0 {
            worst = worst.max((analytic - numeric).abs() / denom.max(1e-6));
        }
    };
    macro_rules! probe {
        ($field:ident, $grad:expr) => {
            for k in 0..model.$field.len() {
                let mut plus = model.clone();
                let mut minus = model.clone();
                plus.$field.as_slice_mut().unwrap()[k] += h;
                minus.$field.as_slice_mut().unwrap()[k] -= h;
                let num = (reference_loss(&plus, corpus, batch, obj, tau)
                    - reference_loss(&minus, corpus, batch, obj, tau))
                    / (2.0 * h);
                check($grad[k], num);
            }
        };
    }
    probe!(layer_logits, g.layer_logits.as_slice().unwrap());
    probe!(w_speech, g.w_speech.as_slice().unwrap());
    probe!(b_speech, g.b_speech.as_slice().unwrap());
    probe!(w_sentence, g.w_sentence.as_slice().unwrap());
    probe!(b_sentence, g.b_sentence.as_slice().unwrap());
    let d = model.dense_dim();
    let mut dense_grad = vec![0.0; model.dense.len()];
    for (&row, gr) in &g.dense_rows {
        dense_grad[row * d..(row + 1) * d].copy_from_slice(gr.as_slice().unwrap());
    }
    probe!(dense, dense_grad);
    worst
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let corpus = random_corpus(6, 4, 5, 3, 1);
    for seed in 0..3 {
        let model = random_model(&corpus, 4, 100 + seed);
        for obj in [Objective::SpeechPreserve, Objective::TextPreserve, Objective::SimMax] {
            let err = max_rel_error(&model, &corpus, &[0, 2, 3, 5], obj);
            assert!(err < 1e-4, "seed {seed} {obj}: {err}");
        }
    }
}

#[test]
fn sim_max_ignores_sentence_projection() {
    let corpus = random_corpus(5, 3, 4, 4, 2);
    let model = random_model(&corpus, 3, 9);
    let g = gradients(&model, &corpus, &[0, 1, 4], Objective::SimMax, 0.1).unwrap();
    assert!(g.w_sentence.iter().all(|&x| x == 0.0));
    assert!(g.b_sentence.iter().all(|&x| x == 0.0));
}

#[test]
fn duplicate_sample_doubles_row_gradient() {
    let corpus = random_corpus(4, 3, 4, 4, 3);
    let model = random_model(&corpus, 3, 4);
    let single = gradients(&model, &corpus, &[1, 2], Objective::SpeechPreserve, 0.1).unwrap();
    // same batch size, sample 1 twice in place of sample 2
    let double = gradients(&model, &corpus, &[1, 1], Objective::SpeechPreserve, 0.1).unwrap();
    let a = &single.dense_rows[&1];
    let b = &double.dense_rows[&1];
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((2.0 * x - y).abs() < 1e-14);
    }
}

fn small_config(objective: Objective) -> TrainConfig {
    TrainConfig {
        objective,
        epochs: 30,
        batch_size: 16,
        dense_dim: 8,
        seed: 5,
        adam: crate::optim::AdamConfig {
            lr: 1e-2,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let corpus = random_corpus(64, 4, 6, 5, 7);
    for obj in [Objective::SpeechPreserve, Objective::TextPreserve, Objective::SimMax] {
        let cfg = small_config(obj);
        let (m1, h1) = train(&corpus, &cfg).unwrap();
        let (m2, h2) = train(&corpus, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        assert_eq!(h1.len(), 30);
        assert!(h1.last().unwrap() < h1.first().unwrap(), "{obj}: {h1:?}");
        let alpha = m1.alpha();
        assert!((alpha.sum() - 1.0).abs() < 1e-12);
        assert!(alpha.iter().all(|&a| a > 0.0));
    }
}

#[test]
fn alpha_stays_on_simplex_throughout() {
    let corpus = random_corpus(32, 5, 4, 4, 8);
    for epochs in 1..=6 {
        let cfg = TrainConfig {
            epochs,
            ..small_config(Objective::SpeechPreserve)
        };
        let (m, _) = train(&corpus, &cfg).unwrap();
        let a = m.alpha();
        assert!((a.sum() - 1.0).abs() < 1e-12 && a.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn extraction_by_id() {
    let corpus = random_corpus(10, 3, 4, 4, 10);
    let (m, _) = train(&corpus, &small_config(Objective::SpeechPreserve)).unwrap();
    let ids: Vec<String> = (0..7).map(|i| format!("s/{i}")).collect();
    let ex = extract_dense_vectors(&m, &ids).unwrap();
    assert_eq!(ex.vectors.dim(), (7, 8));
    assert!((ex.alpha.sum() - 1.0).abs() < 1e-12);
    assert!(matches!(
        extract_dense_vectors(&m, &["nope".to_string()]),
        Err(crate::Error::MissingRow(_))
    ));
}

#[test]
fn headline_dense_dim_default() {
    assert_eq!(TrainConfig::default().dense_dim, 300);
    let d = TrainConfig::default();
    assert_eq!((d.batch_size, d.epochs, d.temperature, d.adam.lr), (64, 1500, 0.1, 1e-4));
}

#[test]
fn frozen_dev_rows() {
    let train_corpus = random_corpus(20, 3, 4, 4, 11);
    let (m, _) = train(&train_corpus, &small_config(Objective::SpeechPreserve)).unwrap();
    let dev = SentenceCorpus::new(
        random_corpus(6, 3, 4, 4, 12)
            .sentences()
            .iter()
            .map(|s| Sentence {
                id: s.id.replace("s/", "dev/"),
                ..s.clone()
            })
            .collect(),
    )
    .unwrap();
    let (ext, hist) = fit_dense_rows(&m, &dev, &small_config(Objective::SpeechPreserve)).unwrap();
    assert_eq!(ext.dense.nrows(), 26);
    assert_eq!(ext.w_speech, m.w_speech);
    assert_eq!(ext.layer_logits, m.layer_logits);
    assert_eq!(ext.dense.slice(ndarray::s![..20, ..]), m.dense);
    assert!(hist.last().unwrap() < hist.first().unwrap());
    assert!(extract_dense_vectors(&ext, &["dev/3".to_string()]).is_ok());
    assert!(fit_dense_rows(&m, &train_corpus, &small_config(Objective::SpeechPreserve)).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let corpus = random_corpus(8, 3, 4, 4, 13);
    let (m, _) = train(&corpus, &small_config(Objective::TextPreserve)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&m, Objective::TextPreserve, 0.1, 5, dir.path()).unwrap();
    let (back, desc) = load_checkpoint(dir.path()).unwrap();
    assert_eq!(desc.objective, Objective::TextPreserve);
    assert_eq!(back.sentence_ids, m.sentence_ids);
    for (a, b) in back.dense.iter().zip(m.dense.iter()) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
    }
}

#[test]
fn history_csv_format() {
    assert_eq!(loss_history_csv(&[0.5, 0.25]), "epoch,mean_loss\n1,0.5\n2,0.25\n");
}
