//! Sub-dialogue augmentation, class balancing and seeded synthetic corpora.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{SessionManifest, SessionSet};
use crate::separation::{Sentence, SentenceCorpus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubdialogueConfig {
    /// Samples per session.
    pub samples: usize,
    pub min_len: usize,
    /// `None` means the session length.
    pub max_len: Option<usize>,
    pub seed: u64,
}

impl Default for SubdialogueConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            min_len: 5,
            max_len: None,
            seed: 0,
        }
    }
}

impl SubdialogueConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_len < 2 {
            return Err(Error::Validation("min_len must be at least 2".into()));
        }
        if let Some(max) = self.max_len {
            if max < self.min_len {
                return Err(Error::Validation("max_len must be at least min_len".into()));
            }
        }
        if self.samples == 0 {
            return Err(Error::Validation("samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// A contiguous utterance span, 1-based and inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRange {
    pub s: usize,
    pub e: usize,
}

impl SpanRange {
    pub fn len(&self) -> usize {
        self.e - self.s + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// 64-bit FNV-1a, used to derive per-session seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn session_seed(seed: u64, session_id: &str) -> u64 {
    seed ^ fnv1a(session_id.as_bytes())
}

/// Draws `cfg.samples` spans uniformly (with replacement) from all valid
/// `(s, e)` pairs of a session with `n_utterances` utterances.
pub fn sample_spans(
    session_id: &str,
    n_utterances: usize,
    cfg: &SubdialogueConfig,
) -> Result<Vec<SpanRange>> {
    cfg.validate()?;
    let t = n_utterances;
    if t < cfg.min_len {
        return Err(Error::InsufficientInput(format!(
            "session {session_id} has {t} utterances, fewer than min_len {}",
            cfg.min_len
        )));
    }
    let max_len = cfg.max_len.unwrap_or(t).min(t);
    // number of spans of length l is t - l + 1
    let counts: Vec<(usize, usize)> = (cfg.min_len..=max_len).map(|l| (l, t - l + 1)).collect();
    let total: usize = counts.iter().map(|&(_, c)| c).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(session_seed(cfg.seed, session_id));
    let spans = (0..cfg.samples)
        .map(|_| {
            let mut k = rng.random_range(0..total);
            for &(l, c) in &counts {
                if k < c {
                    return SpanRange { s: k + 1, e: k + l };
                }
                k -= c;
            }
            unreachable!("index below total")
        })
        .collect();
    Ok(spans)
}

pub fn sample_subdialogues(
    session: &SessionManifest,
    cfg: &SubdialogueConfig,
) -> Result<Vec<SpanRange>> {
    sample_spans(&session.id, session.utterances.len(), cfg)
}

pub fn spans_to_jsonl(session_id: &str, spans: &[SpanRange]) -> String {
    spans
        .iter()
        .map(|r| serde_json::json!({"session": session_id, "s": r.s, "e": r.e}).to_string() + "\n")
        .collect()
}

/// Splits `total` over `ids` as evenly as integer division allows; the first
/// ids (in sorted order) take the remainder.
fn spread(total: usize, ids: &mut [&str]) -> Vec<(String, usize)> {
    ids.sort_unstable();
    let n = ids.len();
    let (base, rem) = (total / n, total % n);
    ids.iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), base + usize::from(i < rem)))
        .collect()
}

/// Per-session sample quotas with equal per-class totals.
///
/// The per-class total defaults to `cfg.samples` times the size of the larger
/// class, so the majority class keeps `cfg.samples` per session.
pub fn balance_quotas(
    labeled: &[(&str, u8)],
    samples: usize,
    per_class_total: Option<usize>,
) -> Result<BTreeMap<String, usize>> {
    let mut pos: Vec<&str> = labeled.iter().filter(|(_, l)| *l == 1).map(|(id, _)| *id).collect();
    let mut neg: Vec<&str> = labeled.iter().filter(|(_, l)| *l == 0).map(|(id, _)| *id).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Balance("both classes must be present".into()));
    }
    let total = per_class_total.unwrap_or(samples * pos.len().max(neg.len()));
    if total < pos.len().max(neg.len()) {
        return Err(Error::Balance(format!(
            "per-class total {total} leaves some session without samples"
        )));
    }
    Ok(spread(total, &mut pos)
        .into_iter()
        .chain(spread(total, &mut neg))
        .collect())
}

pub fn balance_classes(
    set: &SessionSet,
    cfg: &SubdialogueConfig,
    per_class_total: Option<usize>,
) -> Result<BTreeMap<String, usize>> {
    cfg.validate()?;
    let labeled: Vec<(&str, u8)> = set.sessions.iter().map(|s| (s.id.as_str(), s.label)).collect();
    balance_quotas(&labeled, cfg.samples, per_class_total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoVariant {
    Independent,
    Entangled,
}

/// Latent factors behind one 2-D demo point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoLatent {
    pub z_y: f64,
    pub z_n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub variant: DemoVariant,
    /// `2n × 2`, class 1 rows first.
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub latents: Vec<DemoLatent>,
}

impl SyntheticDataset {
    /// Whether the variant's label rule holds on every recorded latent.
    ///
    /// Independent: feature 1 = ±2 + z_y (sign by label), feature 2 = z_n.
    /// Entangled: features are (z_y, z_n) and label = [z_y·z_n > 0].
    pub fn label_rule_holds(&self) -> bool {
        self.latents
            .iter()
            .zip(&self.labels)
            .zip(self.features.rows())
            .all(|((lat, &y), x)| match self.variant {
                DemoVariant::Independent => {
                    let mean = if y == 1 { 2.0 } else { -2.0 };
                    x[0] == mean + lat.z_y && x[1] == lat.z_n
                }
                DemoVariant::Entangled => {
                    x[0] == lat.z_y && x[1] == lat.z_n && ((lat.z_y * lat.z_n > 0.0) == (y == 1))
                }
            })
    }

    /// Labels as ±1 for the SVM.
    pub fn signed_labels(&self) -> Vec<f64> {
        self.labels.iter().map(|&y| if y == 1 { 1.0 } else { -1.0 }).collect()
    }

    pub fn latent_json(&self) -> serde_json::Value {
        serde_json::json!({
            "variant": self.variant,
            "labels": self.labels,
            "latents": self.latents,
        })
    }
}

/// Two 2-D binary datasets with `n` points per class: one where a single
/// feature separates the classes linearly, one where the label is the XOR of
/// the feature signs.
pub fn gen_entangled_demo(n: usize, seed: u64) -> Result<(SyntheticDataset, SyntheticDataset)> {
    if n == 0 {
        return Err(Error::Validation("n per class must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let labels: Vec<u8> = (0..2 * n).map(|i| u8::from(i < n)).collect();

    let mut ind = Array2::zeros((2 * n, 2));
    let mut ind_lat = Vec::with_capacity(2 * n);
    for (i, &y) in labels.iter().enumerate() {
        let (z_y, z_n) = (normal(), normal());
        ind[[i, 0]] = if y == 1 { 2.0 } else { -2.0 } + z_y;
        ind[[i, 1]] = z_n;
        ind_lat.push(DemoLatent { z_y, z_n });
    }

    let mut ent = Array2::zeros((2 * n, 2));
    let mut ent_lat = Vec::with_capacity(2 * n);
    for (i, &y) in labels.iter().enumerate() {
        let (z_y, mut z_n) = loop {
            let (a, b) = (normal(), normal());
            if a * b != 0.0 {
                break (a, b);
            }
        };
        if (z_y * z_n > 0.0) != (y == 1) {
            z_n = -z_n;
        }
        ent[[i, 0]] = z_y;
        ent[[i, 1]] = z_n;
        ent_lat.push(DemoLatent { z_y, z_n });
    }

    Ok((
        SyntheticDataset {
            variant: DemoVariant::Independent,
            features: ind,
            labels: labels.clone(),
            latents: ind_lat,
        },
        SyntheticDataset {
            variant: DemoVariant::Entangled,
            features: ent,
            labels,
            latents: ent_lat,
        },
    ))
}

/// How the speech and text factors are weighted across layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingProfile {
    /// Both factors grow linearly with depth: `a_l = b_l = (l+1)/L`.
    #[default]
    Deepening,
    /// The text weight grows with depth as in `Deepening`; the speech weight
    /// runs from −1 to +1 so it cancels in the plain layer average.
    Contrast,
}

impl MixingProfile {
    /// `(speech weight, text weight)` for layer `l` of `n_layers`.
    pub fn weights(self, l: usize, n_layers: usize) -> (f64, f64) {
        let depth = (l + 1) as f64 / n_layers as f64;
        match self {
            MixingProfile::Deepening => (depth, depth),
            MixingProfile::Contrast => (2.0 * l as f64 / (n_layers - 1) as f64 - 1.0, depth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticLayerConfig {
    pub n_layers: usize,
    pub dim: usize,
    pub n_sentences: usize,
    pub profile: MixingProfile,
    pub noise: f64,
    pub speech_dim: usize,
    pub text_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticLayerConfig {
    fn default() -> Self {
        Self {
            n_layers: 13,
            dim: 32,
            n_sentences: 512,
            profile: MixingProfile::Deepening,
            noise: 0.1,
            speech_dim: 2,
            text_dim: 2,
            seed: 0,
        }
    }
}

/// Layer stacks with known generating factors.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLayerCorpus {
    pub config: SyntheticLayerConfig,
    /// `n × L × dim`, one stack per sentence.
    pub stacks: Vec<Array2<f64>>,
    /// `n × dim`
    pub embeddings: Array2<f64>,
    /// `n × speech_dim`
    pub speech: Array2<f64>,
    /// `n × text_dim`
    pub text: Array2<f64>,
    /// `L × 2` rows of (speech weight, text weight).
    pub mixing: Array2<f64>,
    /// `[speech_factor[0] > 0]`
    pub labels: Vec<u8>,
}

impl SyntheticLayerCorpus {
    pub fn ids(&self) -> Vec<String> {
        (0..self.stacks.len()).map(|i| format!("syn/{i:05}")).collect()
    }

    pub fn to_sentence_corpus(&self) -> Result<SentenceCorpus> {
        let sentences = self
            .ids()
            .into_iter()
            .zip(&self.stacks)
            .zip(self.embeddings.rows())
            .map(|((id, stack), emb)| Sentence {
                id,
                session: "syn".into(),
                layers: stack.clone(),
                embedding: emb.to_owned(),
            })
            .collect();
        SentenceCorpus::new(sentences)
    }

    /// Plain average of the layers per sentence, `n × dim`.
    pub fn layer_means(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.stacks.len(), self.config.dim));
        for (mut row, stack) in out.rows_mut().into_iter().zip(&self.stacks) {
            row.assign(&stack.mean_axis(ndarray::Axis(0)).expect("at least one layer"));
        }
        out
    }

    pub fn latent_json(&self) -> serde_json::Value {
        let rows = |m: &Array2<f64>| -> Vec<Vec<f64>> { m.rows().into_iter().map(|r| r.to_vec()).collect() };
        serde_json::json!({
            "config": self.config,
            "ids": self.ids(),
            "labels": self.labels,
            "speech_factor": rows(&self.speech),
            "text_factor": rows(&self.text),
            "mixing": rows(&self.mixing),
        })
    }
}

fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

/// Generates `layer_l = a_l·A·z_speech + b_l·B·z_text + σ·noise` stacks and
/// sentence embeddings `C·z_text + σ·noise`, with label `[z_speech[0] > 0]`.
pub fn gen_synthetic_layers(cfg: &SyntheticLayerConfig) -> Result<SyntheticLayerCorpus> {
    if cfg.n_layers < 2 || cfg.dim < 2 {
        return Err(Error::Validation("need at least 2 layers and dim ≥ 2".into()));
    }
    if cfg.speech_dim == 0 || cfg.text_dim == 0 || cfg.n_sentences == 0 {
        return Err(Error::Validation("factor dims and sentence count must be positive".into()));
    }
    if !(cfg.noise >= 0.0) {
        return Err(Error::Validation("noise must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (ks, kt, dim, n_layers) = (cfg.speech_dim, cfg.text_dim, cfg.dim, cfg.n_layers);
    let speech_map = gaussian_matrix(dim, ks, 1.0 / (ks as f64).sqrt(), &mut rng);
    let text_map = gaussian_matrix(dim, kt, 1.0 / (kt as f64).sqrt(), &mut rng);
    let emb_map = gaussian_matrix(dim, kt, 1.0 / (kt as f64).sqrt(), &mut rng);
    let mixing = Array2::from_shape_fn((n_layers, 2), |(l, j)| {
        let (a, b) = cfg.profile.weights(l, n_layers);
        if j == 0 {
            a
        } else {
            b
        }
    });

    let n = cfg.n_sentences;
    let speech = gaussian_matrix(n, ks, 1.0, &mut rng);
    let text = gaussian_matrix(n, kt, 1.0, &mut rng);
    let mut stacks = Vec::with_capacity(n);
    let mut embeddings = Array2::zeros((n, dim));
    for i in 0..n {
        let sp: Array1<f64> = speech_map.dot(&speech.row(i));
        let tx: Array1<f64> = text_map.dot(&text.row(i));
        let noise = gaussian_matrix(n_layers, dim, cfg.noise, &mut rng);
        let mut stack = noise;
        for (l, mut row) in stack.rows_mut().into_iter().enumerate() {
            row.scaled_add(mixing[[l, 0]], &sp);
            row.scaled_add(mixing[[l, 1]], &tx);
        }
        stacks.push(stack);
        let e = emb_map.dot(&text.row(i)) + gaussian_matrix(1, dim, cfg.noise, &mut rng).row(0);
        embeddings.row_mut(i).assign(&e);
    }
    let labels = speech.column(0).iter().map(|&z| u8::from(z > 0.0)).collect();
    Ok(SyntheticLayerCorpus {
        config: cfg.clone(),
        stacks,
        embeddings,
        speech,
        text,
        mixing,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn span_contract() {
        let cfg = SubdialogueConfig {
            samples: 5,
            min_len: 3,
            ..Default::default()
        };
        let spans = sample_spans("a", 10, &cfg).unwrap();
        assert_eq!(spans.len(), 5);
        for r in &spans {
            assert!(r.s >= 1 && r.s < r.e && r.e <= 10 && r.len() >= 3);
        }
        assert_eq!(spans, sample_spans("a", 10, &cfg).unwrap());
        assert_ne!(
            sample_spans("a", 10, &SubdialogueConfig { samples: 50, ..cfg.clone() }).unwrap(),
            sample_spans("b", 10, &SubdialogueConfig { samples: 50, ..cfg.clone() }).unwrap()
        );
        assert!(matches!(sample_spans("a", 2, &cfg), Err(Error::InsufficientInput(_))));
    }

    #[test]
    fn default_sample_count() {
        assert_eq!(SubdialogueConfig::default().samples, 1000);
        assert_eq!(SubdialogueConfig::default().min_len, 5);
    }

    #[test]
    fn spans_cover_all_pairs_uniformly() {
        // T = 4, min 2: pairs (1,2),(2,3),(3,4),(1,3),(2,4),(1,4)
        let cfg = SubdialogueConfig {
            samples: 60_000,
            min_len: 2,
            ..Default::default()
        };
        let spans = sample_spans("u", 4, &cfg).unwrap();
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for r in spans {
            *counts.entry((r.s, r.e)).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for &c in counts.values() {
            assert!((c as f64 - 10_000.0).abs() < 400.0, "{counts:?}");
        }
    }

    #[test]
    fn quotas_for_thirty_and_seventy_seven() {
        let ids: Vec<String> = (0..107).map(|i| format!("s{i:03}")).collect();
        let labeled: Vec<(&str, u8)> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), u8::from(i < 30))).collect();
        let q = balance_quotas(&labeled, 100, None).unwrap();
        let dep: Vec<usize> = ids[..30].iter().map(|id| q[id]).collect();
        let healthy: Vec<usize> = ids[30..].iter().map(|id| q[id]).collect();
        assert_eq!(dep.iter().sum::<usize>(), 7700);
        assert_eq!(healthy.iter().sum::<usize>(), 7700);
        assert!(healthy.iter().all(|&x| x == 100));
        // 7700 = 30 * 256 + 20
        assert_eq!(dep.iter().filter(|&&x| x == 257).count(), 20);
        assert_eq!(dep.iter().filter(|&&x| x == 256).count(), 10);
        assert!(dep[..20].iter().all(|&x| x == 257));
    }

    #[test]
    fn quota_edge_cases() {
        let q = balance_quotas(&[("a", 1), ("b", 0), ("c", 1), ("d", 0)], 10, None).unwrap();
        assert!(q.values().all(|&x| x == 10));
        assert!(matches!(balance_quotas(&[("a", 1), ("b", 1)], 10, None), Err(Error::Balance(_))));
    }

    proptest! {
        #[test]
        fn quotas_sum_to_totals(n_pos in 1usize..20, n_neg in 1usize..20, m in 1usize..50, extra in 0usize..100) {
            let ids: Vec<String> = (0..n_pos + n_neg).map(|i| format!("x{i}")).collect();
            let labeled: Vec<(&str, u8)> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), u8::from(i < n_pos))).collect();
            let total = n_pos.max(n_neg) + extra;
            let q = balance_quotas(&labeled, m, Some(total)).unwrap();
            let sum_pos: usize = ids[..n_pos].iter().map(|id| q[id]).sum();
            let sum_neg: usize = ids[n_pos..].iter().map(|id| q[id]).sum();
            prop_assert_eq!(sum_pos, total);
            prop_assert_eq!(sum_neg, total);
            let (lo, hi) = ids[..n_pos].iter().fold((usize::MAX, 0), |(lo, hi), id| (lo.min(q[id]), hi.max(q[id])));
            prop_assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn entangled_demo_rules() {
        let (ind, ent) = gen_entangled_demo(500, 3).unwrap();
        assert!(ind.label_rule_holds() && ent.label_rule_holds());
        assert_eq!(ent.labels.iter().filter(|&&y| y == 1).count(), 500);
        let quadrant_pos = ent.features.rows().into_iter().filter(|x| x[0] * x[1] > 0.0).count();
        assert_eq!(quadrant_pos, 500);
        let (ind2, ent2) = gen_entangled_demo(500, 3).unwrap();
        assert_eq!((ind, ent), (ind2, ent2));
    }

    /// Linear accuracy on the XOR layout is bounded by the best halfplane,
    /// and only halfplanes through the origin sit at chance.
    #[test]
    fn entangled_halfplane_bounds() {
        let (_, big) = gen_entangled_demo(100_000, 11).unwrap();
        let y = big.signed_labels();
        let acc = |w: (f64, f64), c: f64| {
            let hits = big
                .features
                .rows()
                .into_iter()
                .zip(&y)
                .filter(|(x, &t)| (w.0 * x[0] + w.1 * x[1] > c) == (t > 0.0))
                .count();
            hits as f64 / y.len() as f64
        };
        for k in 0..16 {
            let a = k as f64 * std::f64::consts::PI / 8.0;
            let through_origin = acc((a.cos(), a.sin()), 0.0);
            assert!((through_origin - 0.5).abs() < 0.01, "{a}: {through_origin}");
        }
        let best_offset = (0..=30).map(|i| acc((1.0, 1.0), i as f64 * 0.05)).fold(0.0, f64::max);
        assert!(best_offset > 0.6, "{best_offset}");

        let (_, ent) = gen_entangled_demo(1000, 1).unwrap();
        let ys = ent.signed_labels();
        let svm = crate::classify::train_svm(ent.features.view(), &ys, 1.0, 500, 1).unwrap();
        let svm_acc = crate::classify::accuracy(&svm.predict(ent.features.view()).unwrap(), &ys);
        assert!(svm_acc <= best_offset + 0.03, "{svm_acc} vs {best_offset}");
    }

    #[test]
    fn synthetic_layer_shapes_and_determinism() {
        let cfg = SyntheticLayerConfig::default();
        let c = gen_synthetic_layers(&cfg).unwrap();
        assert_eq!(c.stacks.len(), 512);
        assert_eq!(c.stacks[0].dim(), (13, 32));
        assert_eq!(c.embeddings.dim(), (512, 32));
        assert_eq!(c, gen_synthetic_layers(&cfg).unwrap());
        for (y, z) in c.labels.iter().zip(c.speech.column(0)) {
            assert_eq!(*y == 1, *z > 0.0);
        }
    }

    #[test]
    fn contrast_profile_cancels_in_the_mean() {
        let w: f64 = (0..13).map(|l| MixingProfile::Contrast.weights(l, 13).0).sum();
        assert!(w.abs() < 1e-12);
    }

    #[test]
    fn noiseless_speech_factor_recoverable() {
        for profile in [MixingProfile::Deepening, MixingProfile::Contrast] {
            let cfg = SyntheticLayerConfig {
                n_layers: 5,
                dim: 8,
                n_sentences: 40,
                noise: 0.0,
                profile,
                seed: 4,
                ..Default::default()
            };
            let c = gen_synthetic_layers(&cfg).unwrap();
            // stack each sentence's flattened layers as a row and regress the
            // speech factor on it
            let rows = c.stacks.len();
            let cols = cfg.n_layers * cfg.dim;
            let x = nalgebra::DMatrix::from_fn(rows, cols, |i, j| c.stacks[i][[j / cfg.dim, j % cfg.dim]]);
            let y = nalgebra::DMatrix::from_fn(rows, cfg.speech_dim, |i, j| c.speech[[i, j]]);
            let svd = x.clone().svd(true, true);
            let beta = svd.solve(&y, 1e-10).unwrap();
            let resid = (&x * beta - &y).abs().max();
            assert!(resid < 1e-8, "{profile:?}: {resid}");
        }
    }
}
