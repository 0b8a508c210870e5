//! Leave-one-out sentence importance, landmark-bigram duration statistics
//! with Mann–Whitney tests, and embedding diversity metrics.

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::classify::{decision_value, SvmModel};
use crate::error::{Error, Result};
use crate::landmark::LandmarkSequence;

pub const DEFAULT_TOP_K: usize = 5;
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceImportance {
    pub sentence_id: String,
    pub d_modified: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub d_original: f64,
    pub sentences: Vec<SentenceImportance>,
    /// Ids with the largest `delta`, ties broken by sentence order.
    pub top_k: Vec<String>,
}

/// Scores each sentence by how much the document decision value moves when
/// that sentence is left out of the mean.
pub fn sentence_importance(
    svm: &SvmModel,
    vectors: ArrayView2<'_, f64>,
    ids: &[String],
    k: usize,
) -> Result<ImportanceReport> {
    let n = vectors.nrows();
    if ids.len() != n {
        return Err(Error::Shape(format!("{n} vectors but {} ids", ids.len())));
    }
    if n < 2 {
        return Err(Error::DegenerateDocument(format!(
            "leave-one-out needs at least 2 sentences, got {n}"
        )));
    }
    if vectors.ncols() != svm.dim() {
        return Err(Error::Shape(format!(
            "model expects {} features, sentences have {}",
            svm.dim(),
            vectors.ncols()
        )));
    }
    let sum = vectors.sum_axis(Axis(0));
    let doc = &sum / n as f64;
    let d_original = decision_value(svm, doc.view())?;
    let sentences = vectors
        .rows()
        .into_iter()
        .zip(ids)
        .map(|(row, id)| {
            let modified: Array1<f64> = (&sum - &row) / (n - 1) as f64;
            let d_modified = decision_value(svm, modified.view())?;
            Ok(SentenceImportance {
                sentence_id: id.clone(),
                d_modified,
                delta: (d_original - d_modified).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sentences[b].delta.total_cmp(&sentences[a].delta));
    let top_k = order.iter().take(k.min(n)).map(|&i| sentences[i].sentence_id.clone()).collect();
    Ok(ImportanceReport {
        d_original,
        sentences,
        top_k,
    })
}

/// Differences of consecutive timestamps.
pub fn adjacent_durations(times: &[f64]) -> Vec<f64> {
    times.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Label of an adjacent landmark pair, e.g. `b--g+` for `b-` followed by `g+`.
pub fn pair_label(seq: &LandmarkSequence, i: usize) -> String {
    format!("{}-{}", seq.landmarks[i].label, seq.landmarks[i + 1].label)
}

/// Durations of every adjacent landmark pair, grouped by pair label.
pub fn pair_durations(seq: &LandmarkSequence) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for i in 0..seq.landmarks.len().saturating_sub(1) {
        let d = seq.landmarks[i + 1].time - seq.landmarks[i].time;
        out.entry(pair_label(seq, i)).or_default().push(d);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample variance (n − 1).
    pub variance: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub iqr: f64,
    /// Population-moment skewness; `None` for a constant sample.
    pub skewness: Option<f64>,
    /// Excess kurtosis `m4/m2² − 3`; `None` for a constant sample.
    pub kurtosis: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum DurationSummary {
    Ok(DurationStats),
    /// Fewer than two durations.
    Insufficient { count: usize },
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n−1)·q`) on sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn duration_stats(values: &[f64]) -> DurationSummary {
    let n = values.len();
    if n < 2 {
        return DurationSummary::Insufficient { count: n };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let moment = |p: i32| values.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / nf;
    let (m2, m3, m4) = (moment(2), moment(3), moment(4));
    let variance = m2 * nf / (nf - 1.0);
    let (skewness, kurtosis) = if m2 > 0.0 {
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0))
    } else {
        (None, None)
    };
    DurationSummary::Ok(DurationStats {
        count: n,
        mean,
        median: quantile_sorted(&sorted, 0.5),
        variance,
        std: variance.sqrt(),
        min: sorted[0],
        max: sorted[n - 1],
        iqr: quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25),
        skewness,
        kurtosis,
    })
}

/// Pools adjacent-pair durations over all sequences of each class.
///
/// Only labels in `filter` are kept when it is given.
pub fn pooled_durations(
    by_class: &BTreeMap<String, Vec<LandmarkSequence>>,
    filter: Option<&[String]>,
) -> BTreeMap<String, BTreeMap<String, Vec<f64>>> {
    by_class
        .iter()
        .map(|(class, seqs)| {
            let mut pooled: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for seq in seqs {
                for (label, d) in pair_durations(seq) {
                    if filter.is_none_or(|f| f.contains(&label)) {
                        pooled.entry(label).or_default().extend(d);
                    }
                }
            }
            (class.clone(), pooled)
        })
        .collect()
}

/// Nine duration statistics per (class, pair label).
pub fn bigram_duration_stats(
    by_class: &BTreeMap<String, Vec<LandmarkSequence>>,
    filter: Option<&[String]>,
) -> BTreeMap<String, BTreeMap<String, DurationSummary>> {
    pooled_durations(by_class, filter)
        .into_iter()
        .map(|(class, labels)| {
            let stats = labels.into_iter().map(|(l, d)| (l, duration_stats(&d))).collect();
            (class, stats)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
    pub exact: bool,
    pub significant: bool,
}

/// Midranks (1-based) of `values`.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Number of arrangements of `n` and `m` items giving each U value.
fn u_counts(n: usize, m: usize) -> Vec<f64> {
    // table[j][u] = arrangements of i first-sample and j second-sample items
    let max_u = n * m;
    let mut table: Vec<Vec<f64>> = (0..=m).map(|_| vec![0.0; max_u + 1]).collect();
    for row in table.iter_mut() {
        row[0] = 1.0;
    }
    for i in 1..=n {
        let mut next: Vec<Vec<f64>> = (0..=m).map(|_| vec![0.0; max_u + 1]).collect();
        next[0][0] = 1.0;
        for j in 1..=m {
            for u in 0..=i * j {
                // largest item from the first sample: it beats all j others
                let take_first = if u >= j { table[j][u - j] } else { 0.0 };
                let take_second = next[j - 1][u];
                next[j][u] = take_first + take_second;
            }
        }
        table = next;
    }
    table.swap_remove(m)
}

pub const EXACT_LIMIT: usize = 400;

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(Error::InsufficientInput("both samples must be non-empty".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("non-finite sample value".into()));
    }
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..n].iter().sum();
    let u = rank_sum - (n * (n + 1)) as f64 / 2.0;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut has_ties = false;
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        if group.len() > 1 {
            has_ties = true;
            tie_term += t * t * t - t;
        }
    }

    let (p, exact) = if n * m <= EXACT_LIMIT && !has_ties {
        let counts = u_counts(n, m);
        let total: f64 = counts.iter().sum();
        let k = u.round() as usize;
        let lower: f64 = counts[..=k].iter().sum::<f64>() / total;
        let upper: f64 = counts[k..].iter().sum::<f64>() / total;
        ((2.0 * lower.min(upper)).min(1.0), true)
    } else {
        let (nf, mf) = (n as f64, m as f64);
        let big_n = nf + mf;
        let mean = nf * mf / 2.0;
        let var = nf * mf / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
        let p = if var > 0.0 {
            let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            (2.0 * normal.sf(z)).min(1.0)
        } else {
            1.0
        };
        (p, false)
    };
    Ok(TestResult {
        u,
        p_value: p,
        n,
        m,
        exact,
        significant: p < SIGNIFICANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigramComparison {
    pub bigram: String,
    pub test: TestResult,
    pub mean_first: f64,
    pub mean_second: f64,
}

/// Mann–Whitney test per pair label present in both classes, sorted by
/// p-value (then label).
pub fn compare_classes(
    first: &BTreeMap<String, Vec<f64>>,
    second: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<BigramComparison>> {
    let mut rows = Vec::new();
    for (label, a) in first {
        let Some(b) = second.get(label) else { continue };
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        rows.push(BigramComparison {
            bigram: label.clone(),
            test: mann_whitney_u(a, b)?,
            mean_first: mean(a),
            mean_second: mean(b),
        });
    }
    rows.sort_by(|x, y| {
        x.test
            .p_value
            .total_cmp(&y.test.p_value)
            .then_with(|| x.bigram.cmp(&y.bigram))
    });
    Ok(rows)
}

/// CSV of the significant rows (`p < 0.05`).
pub fn significant_bigrams_csv(rows: &[BigramComparison], first: &str, second: &str) -> String {
    let mut out = format!("bigram,u,p_value,mean_{first},mean_{second}\n");
    for r in rows.iter().filter(|r| r.test.significant) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.bigram, r.test.u, r.test.p_value, r.mean_first, r.mean_second
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityMetrics {
    pub cosine_mean: f64,
    pub pairwise_distance: f64,
    pub variance_per_dim: f64,
}

pub fn diversity_metrics(x: ArrayView2<'_, f64>) -> Result<DiversityMetrics> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientInput("diversity needs at least 2 rows".into()));
    }
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateSimilarity(format!("row {i} has zero norm")));
    }
    let (mut cos, mut dist) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b): (ArrayView1<f64>, ArrayView1<f64>) = (x.row(i), x.row(j));
            cos += (a.dot(&b) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            dist += (&a - &b).mapv(|v| v * v).sum().sqrt();
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(DiversityMetrics {
        cosine_mean: cos / pairs,
        pairwise_distance: dist / pairs,
        variance_per_dim: x.var_axis(Axis(0), 1.0).mean().expect("dim ≥ 1"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmark::{Landmark, LandmarkLabel};
    use ndarray::{array, Array2};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn model(w: Vec<f64>, b: f64) -> SvmModel {
        SvmModel {
            w,
            b,
            c: 1.0,
            epochs: 1,
            seed: 0,
            objective_trace: vec![],
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i}")).collect()
    }

    #[test]
    fn identical_sentences_have_no_importance() {
        let x = Array2::from_shape_fn((4, 3), |(_, j)| j as f64);
        let r = sentence_importance(&model(vec![1.0, -2.0, 0.5], 0.3), x.view(), &ids(4), 5).unwrap();
        assert!(r.sentences.iter().all(|s| s.delta == 0.0));
        assert_eq!(r.top_k, ids(4));
    }

    #[test]
    fn importance_matches_affine_oracle() {
        let x = array![[1.0, 0.0], [0.0, 4.0], [2.0, 2.0], [-1.0, 1.0]];
        let w = vec![0.5, -1.5];
        let r = sentence_importance(&model(w.clone(), 0.2), x.view(), &ids(4), 2).unwrap();
        let doc = [0.5, 1.75];
        for (i, s) in r.sentences.iter().enumerate() {
            let others: Vec<usize> = (0..4).filter(|&j| j != i).collect();
            let m0 = others.iter().map(|&j| x[[j, 0]]).sum::<f64>() / 3.0;
            let m1 = others.iter().map(|&j| x[[j, 1]]).sum::<f64>() / 3.0;
            let oracle = (w[0] * (doc[0] - m0) + w[1] * (doc[1] - m1)).abs();
            assert!((s.delta - oracle).abs() < 1e-12);
        }
        assert_eq!(r.top_k, vec!["u1".to_string(), "u0".to_string()]);
        assert!((r.d_original - (0.5 * 0.5 - 1.5 * 1.75 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn single_sentence_rejected() {
        let x = array![[1.0, 2.0]];
        assert!(matches!(
            sentence_importance(&model(vec![1.0, 1.0], 0.0), x.view(), &ids(1), 5),
            Err(Error::DegenerateDocument(_))
        ));
        assert_eq!(DEFAULT_TOP_K, 5);
    }

    #[test]
    fn duration_hand_values() {
        let DurationSummary::Ok(s) = duration_stats(&[1.0, 2.0, 3.0, 4.0]) else { panic!() };
        assert_eq!((s.mean, s.median, s.min, s.max, s.iqr), (2.5, 2.5, 1.0, 4.0, 1.5));
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-12);
        assert!((s.std - 1.2909944487358056).abs() < 1e-12);
        assert!(s.skewness.unwrap().abs() < 1e-12);
        assert!((s.kurtosis.unwrap() + 1.36).abs() < 1e-12);
        assert_eq!(duration_stats(&[0.3]), DurationSummary::Insufficient { count: 1 });
        let DurationSummary::Ok(c) = duration_stats(&[2.0, 2.0]) else { panic!() };
        assert_eq!((c.variance, c.skewness), (0.0, None));
    }

    #[test]
    fn adjacent_differences() {
        let d = adjacent_durations(&[0.0, 0.1, 0.3]);
        assert!((d[0] - 0.1).abs() < 1e-15 && (d[1] - 0.2).abs() < 1e-15);
    }

    fn seq(items: &[(&str, f64)]) -> LandmarkSequence {
        LandmarkSequence {
            utterance_id: "u".into(),
            landmarks: items
                .iter()
                .map(|(l, t)| Landmark {
                    label: l.parse::<LandmarkLabel>().unwrap(),
                    time: *t,
                    confidence: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn pooled_pair_durations() {
        let mut by_class = BTreeMap::new();
        by_class.insert(
            "1".to_string(),
            vec![
                seq(&[("b-", 0.0), ("g+", 0.05), ("p+", 0.1), ("b-", 0.3)]),
                seq(&[("b-", 1.0), ("g+", 1.2)]),
            ],
        );
        let pooled = pooled_durations(&by_class, None);
        let d = &pooled["1"]["b--g+"];
        assert_eq!(d.len(), 2);
        assert!((d[0] - 0.05).abs() < 1e-12 && (d[1] - 0.2).abs() < 1e-12);
        assert!(pooled["1"].contains_key("p+-b-"));
        let only = vec!["p+-b-".to_string()];
        let filtered = bigram_duration_stats(&by_class, Some(&only));
        assert_eq!(filtered["1"].len(), 1);
        assert_eq!(filtered["1"]["p+-b-"], DurationSummary::Insufficient { count: 1 });
    }

    /// Exact two-sided p by listing every split of the pooled ranks.
    fn enumeration_p(a: &[f64], b: &[f64]) -> (f64, f64) {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let ranks = midranks(&pooled);
        let (n, total) = (a.len(), pooled.len());
        let u_of = |mask: u32| -> f64 {
            let s: f64 = (0..total).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            s - (n * (n + 1)) as f64 / 2.0
        };
        let observed = u_of((1u32 << n) - 1);
        let all: Vec<f64> = (0u32..1 << total).filter(|m| m.count_ones() as usize == n).map(u_of).collect();
        let k = all.len() as f64;
        let lo = all.iter().filter(|&&u| u <= observed).count() as f64 / k;
        let hi = all.iter().filter(|&&u| u >= observed).count() as f64 / k;
        (observed, (2.0 * lo.min(hi)).min(1.0))
    }

    #[test]
    fn mann_whitney_hand_values() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert!((r.p_value - 0.1).abs() < 1e-15);
        let same = mann_whitney_u(&[1.0, 2.0, 2.0, 5.0], &[1.0, 2.0, 2.0, 5.0]).unwrap();
        assert_eq!(same.u, 8.0);
        assert!(!same.exact);
        assert_eq!(same.p_value, 1.0);
    }

    proptest! {
        #[test]
        fn exact_p_matches_enumeration(
            vals in proptest::collection::hash_set(0u32..1000, 2..=10),
            split in 1usize..=5,
        ) {
            let vals: Vec<f64> = vals.into_iter().map(f64::from).collect();
            let n = split.min(vals.len() - 1);
            let (a, b) = vals.split_at(n);
            if b.len() <= 5 {
                let r = mann_whitney_u(a, b).unwrap();
                let (u, p) = enumeration_p(a, b);
                prop_assert!(r.exact);
                prop_assert_eq!(r.u, u);
                prop_assert!((r.p_value - p).abs() < 1e-12);
            }
        }

        #[test]
        fn u_statistics_sum_to_nm(
            a in proptest::collection::vec(0u8..10, 1..30),
            b in proptest::collection::vec(0u8..10, 1..30),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney_u(&a, &b).unwrap();
            let ba = mann_whitney_u(&b, &a).unwrap();
            prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
            prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
            prop_assert!(ab.u >= 0.0 && ab.u <= (a.len() * b.len()) as f64);
        }

        #[test]
        fn statistics_match_brute_force(v in proptest::collection::vec(-100.0f64..100.0, 2..50)) {
            let DurationSummary::Ok(s) = duration_stats(&v) else { panic!() };
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            // quantile by counting: value at position h between order statistics
            let q = |p: f64| {
                let h = (n - 1.0) * p;
                let i = h as usize;
                if i + 1 < sorted.len() { sorted[i] * (1.0 - (h - i as f64)) + sorted[i + 1] * (h - i as f64) } else { sorted[i] }
            };
            let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
            let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
            prop_assert!((s.mean - mean).abs() < 1e-9);
            prop_assert!((s.variance - var).abs() < 1e-9 * var.max(1.0));
            prop_assert!((s.std - var.sqrt()).abs() < 1e-9 * var.sqrt().max(1.0));
            prop_assert!((s.median - q(0.5)).abs() < 1e-9);
            prop_assert!((s.iqr - (q(0.75) - q(0.25))).abs() < 1e-9);
            prop_assert_eq!(s.min, sorted[0]);
            prop_assert_eq!(s.max, *sorted.last().unwrap());
            prop_assert!((s.skewness.unwrap() - m3 / m2.powf(1.5)).abs() < 1e-9);
            prop_assert!((s.kurtosis.unwrap() - (m4 / (m2 * m2) - 3.0)).abs() < 1e-9);
            prop_assert!(s.min <= s.median && s.median <= s.max && s.iqr >= 0.0);
        }
    }

    #[test]
    fn normal_approximation_path() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| i as f64 + 10.5).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!(!r.exact && r.significant);
        // U = 30*30 - pairs where b < a: b_j < a_i iff j + 10.5 < i
        let expected_u: usize = (0..30).map(|i: usize| (0..30).filter(|&j| (j as f64 + 10.5) < i as f64).count()).sum();
        assert_eq!(r.u, expected_u as f64);
    }

    #[test]
    fn significant_rows_csv() {
        let mut first = BTreeMap::new();
        let mut second = BTreeMap::new();
        first.insert("b--g+".to_string(), (0..30).map(|i| 0.1 + i as f64 * 0.01).collect::<Vec<_>>());
        second.insert("b--g+".to_string(), (0..30).map(|i| 0.5 + i as f64 * 0.01).collect::<Vec<_>>());
        first.insert("g+-p+".to_string(), vec![0.1, 0.2]);
        second.insert("g+-p+".to_string(), vec![0.15, 0.25]);
        let rows = compare_classes(&first, &second).unwrap();
        assert_eq!(rows[0].bigram, "b--g+");
        let csv = significant_bigrams_csv(&rows, "1", "0");
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("bigram,u,p_value,mean_1,mean_0\nb--g+,0,"));
    }

    #[test]
    fn diversity_hand_values() {
        let same = diversity_metrics(array![[1.0, 2.0], [1.0, 2.0]].view()).unwrap();
        assert!((same.cosine_mean - 1.0).abs() < 1e-15);
        assert_eq!((same.pairwise_distance, same.variance_per_dim), (0.0, 0.0));
        let ortho = diversity_metrics(array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap();
        assert_eq!(ortho.cosine_mean, 0.0);
        assert!((ortho.pairwise_distance - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            diversity_metrics(array![[1.0, 0.0], [0.0, 0.0]].view()),
            Err(Error::DegenerateSimilarity(_))
        ));
        let json = serde_json::to_value(&ortho).unwrap();
        assert!(json.get("cosine_mean").is_some() && json.get("variance_per_dim").is_some());
    }
}
