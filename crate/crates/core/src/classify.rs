//! Pooling, principal-component reduction, feature fusion, a linear SVM,
//! F1 scoring and random hyperparameter search.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean over rows.
pub fn mean_pool(rows: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    rows.mean_axis(Axis(0)).filter(|_| rows.nrows() > 0).ok_or(Error::EmptyPool)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReduceMethod {
    #[default]
    Pca,
    External,
}

/// Top principal components of a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Array1<f64>,
    /// `k × dim`, orthonormal rows (zero rows past the data rank).
    pub components: Array2<f64>,
    /// Variance along each component.
    pub variances: Array1<f64>,
    pub total_variance: f64,
}

fn sign_fix(mut c: Array1<f64>) -> Array1<f64> {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in &c {
        if x.abs() > best.abs() {
            best = x;
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        c.mapv_inplace(|x| -x);
    }
    c
}

impl Pca {
    pub fn fit(x: ArrayView2<'_, f64>, k: usize) -> Result<Self> {
        let (n, d) = x.dim();
        if k > d {
            return Err(Error::Shape(format!("cannot keep {k} components of {d}-dim data")));
        }
        if n < 2 {
            return Err(Error::InsufficientInput("PCA needs at least 2 rows".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("n ≥ 2");
        let centered = &x - &mean;
        let denom = (n - 1) as f64;
        let total_variance = centered.mapv(|v| v * v).sum() / denom;

        let mut pairs: Vec<(f64, Array1<f64>)> = if d <= n {
            let cov = centered.t().dot(&centered) / denom;
            let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
            (0..d)
                .map(|j| (eig.eigenvalues[j], Array1::from_iter(eig.eigenvectors.column(j).iter().copied())))
                .collect()
        } else {
            // n < d: eigenvectors of the Gram matrix map to covariance eigenvectors
            let gram = centered.dot(&centered.t()) / denom;
            let eig = SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| gram[[i, j]]));
            (0..n)
                .map(|j| {
                    let lambda = eig.eigenvalues[j];
                    let u = Array1::from_iter(eig.eigenvectors.column(j).iter().copied());
                    let mut c = centered.t().dot(&u);
                    let norm = c.dot(&c).sqrt();
                    if lambda > 1e-12 * total_variance.max(f64::MIN_POSITIVE) && norm > 0.0 {
                        c /= norm;
                        (lambda, c)
                    } else {
                        (0.0, Array1::zeros(d))
                    }
                })
                .collect()
        };
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut components = Array2::zeros((k, d));
        let mut variances = Array1::zeros(k);
        for (i, (lambda, c)) in pairs.into_iter().take(k).enumerate() {
            variances[i] = lambda.max(0.0);
            components.row_mut(i).assign(&sign_fix(c));
        }
        Ok(Self {
            mean,
            components,
            variances,
            total_variance,
        })
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "PCA fitted on {} dims, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok((&x - &self.mean).dot(&self.components.t()))
    }

    /// Fraction of total variance along each kept component.
    pub fn retained_fractions(&self) -> Array1<f64> {
        if self.total_variance > 0.0 {
            &self.variances / self.total_variance
        } else {
            Array1::zeros(self.variances.len())
        }
    }

    pub fn reconstruct(&self, reduced: ArrayView2<'_, f64>) -> Array2<f64> {
        reduced.dot(&self.components) + &self.mean
    }
}

/// Reduces `x` to `k` columns. `Pca` fits on `x` itself; `External` only
/// checks that `x` already has `k` columns.
pub fn reduce_dim(x: ArrayView2<'_, f64>, k: usize, method: ReduceMethod) -> Result<Array2<f64>> {
    match method {
        ReduceMethod::Pca => Pca::fit(x, k)?.transform(x),
        ReduceMethod::External => {
            if x.ncols() != k {
                return Err(Error::Shape(format!(
                    "external reduction has {} columns, expected {k}",
                    x.ncols()
                )));
            }
            Ok(x.to_owned())
        }
    }
}

/// `[speech ; text]` with the part sizes recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature {
    pub vector: Array1<f64>,
    pub speech_dim: usize,
    pub text_dim: usize,
}

impl FusedFeature {
    pub fn speech(&self) -> ArrayView1<'_, f64> {
        self.vector.slice(ndarray::s![..self.speech_dim])
    }

    pub fn text(&self) -> ArrayView1<'_, f64> {
        self.vector.slice(ndarray::s![self.speech_dim..])
    }
}

pub fn fuse(speech: ArrayView1<'_, f64>, text: ArrayView1<'_, f64>) -> Result<FusedFeature> {
    if speech.is_empty() || text.is_empty() {
        return Err(Error::Fusion(format!(
            "parts must be non-empty (speech {}, text {})",
            speech.len(),
            text.len()
        )));
    }
    Ok(FusedFeature {
        vector: concatenate![Axis(0), speech, text],
        speech_dim: speech.len(),
        text_dim: text.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Primal objective `½‖w‖² + C·Σ hinge` of the kept iterate after each
    /// epoch, measured on standardized features; entry 0 is the zero model.
    pub objective_trace: Vec<f64>,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn decision_values(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        x.rows().into_iter().map(|r| decision_value(self, r)).collect()
    }

    /// ±1 predictions; a zero decision value counts as positive.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self
            .decision_values(x)?
            .iter()
            .map(|&d| if d >= 0.0 { 1.0 } else { -1.0 })
            .collect())
    }
}

/// `w·x + b`
pub fn decision_value(model: &SvmModel, x: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != model.w.len() {
        return Err(Error::Shape(format!(
            "model expects {} features, got {}",
            model.w.len(),
            x.len()
        )));
    }
    Ok(x.iter().zip(&model.w).map(|(a, b)| a * b).sum::<f64>() + model.b)
}

fn primal_objective(w: &Array1<f64>, z: &Array2<f64>, y: &[f64], c: f64) -> f64 {
    let hinge: f64 = z
        .rows()
        .into_iter()
        .zip(y)
        .map(|(row, &yi)| (1.0 - yi * row.dot(w)).max(0.0))
        .sum();
    0.5 * w.dot(w) + c * hinge
}

/// Linear soft-margin SVM by stochastic primal subgradient steps of size
/// `1/(λt)` with `λ = 1/(C·n)`.
///
/// Features are standardized internally and a constant column carries the
/// (regularized) bias; the returned weights act on raw features. At each
/// epoch end the last iterate and the running average of all iterates are
/// scored, and the best model seen so far is kept, so the objective never
/// rises.
pub fn train_svm(x: ArrayView2<'_, f64>, y: &[f64], c: f64, epochs: usize, seed: u64) -> Result<SvmModel> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} labels", y.len())));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Training("labels must be ±1".into()));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::Training("both classes must be present".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("non-finite feature".into()));
    }
    if !(c > 0.0) || epochs == 0 {
        return Err(Error::Training("C must be positive and epochs ≥ 1".into()));
    }
    let mean = x.mean_axis(Axis(0)).expect("n ≥ 2");
    let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    let mut z = Array2::ones((n, d + 1));
    z.slice_mut(ndarray::s![.., ..d]).assign(&((&x - &mean) / &scale));

    let lambda = 1.0 / (c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut w = Array1::<f64>::zeros(d + 1);
    let mut best = w.clone();
    let mut best_obj = primal_objective(&w, &z, y, c);
    let mut trace = vec![best_obj];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0u64;
    let mut avg = w.clone();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let row = z.row(i);
            let margin = y[i] * row.dot(&w);
            w *= 1.0 - eta * lambda;
            if margin < 1.0 {
                w.scaled_add(eta * y[i], &row);
            }
            let norm = w.dot(&w).sqrt();
            if norm > radius {
                w *= radius / norm;
            }
            avg.zip_mut_with(&w, |a, &x| *a += (x - *a) / t as f64);
        }
        for candidate in [&w, &avg] {
            let obj = primal_objective(candidate, &z, y, c);
            if obj < best_obj {
                best_obj = obj;
                best.assign(candidate);
            }
        }
        trace.push(best_obj);
    }

    let w_std = best.slice(ndarray::s![..d]);
    let w_raw: Array1<f64> = &w_std / &scale;
    let b = best[d] - w_raw.dot(&mean);
    Ok(SvmModel {
        w: w_raw.to_vec(),
        b,
        c,
        epochs,
        seed,
        objective_trace: trace,
    })
}

/// F1 of the positive class from ±1 predictions and labels; 0 when
/// precision + recall is 0.
pub fn f1_score(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p > 0.0, l > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if tp == 0 || denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrial {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub f1_avg: f64,
    pub f1_max: f64,
    /// Population standard deviation.
    pub f1_std: f64,
    pub trials: Vec<SearchTrial>,
}

pub const SEARCH_EPOCHS: [usize; 3] = [200, 500, 1000];

/// Random search over `C` (log-uniform on [1e−3, 1e3]) and the epoch count.
pub fn random_search(
    x_train: ArrayView2<'_, f64>,
    y_train: &[f64],
    x_eval: ArrayView2<'_, f64>,
    y_eval: &[f64],
    n_trials: usize,
    seed: u64,
) -> Result<SearchReport> {
    random_search_with(x_train, y_train, x_eval, y_eval, n_trials, seed, &SEARCH_EPOCHS)
}

/// [`random_search`] with a custom set of epoch counts.
pub fn random_search_with(
    x_train: ArrayView2<'_, f64>,
    y_train: &[f64],
    x_eval: ArrayView2<'_, f64>,
    y_eval: &[f64],
    n_trials: usize,
    seed: u64,
    epoch_choices: &[usize],
) -> Result<SearchReport> {
    if n_trials == 0 || epoch_choices.is_empty() {
        return Err(Error::Validation("need at least one trial and one epoch choice".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let c = 10f64.powf(rng.random_range(-3.0..=3.0));
        let epochs = epoch_choices[rng.random_range(0..epoch_choices.len())];
        let trial_seed: u64 = rng.random();
        let model = train_svm(x_train, y_train, c, epochs, trial_seed)?;
        let f1 = f1_score(&model.predict(x_eval)?, y_eval)?;
        trials.push(SearchTrial {
            c,
            epochs,
            seed: trial_seed,
            f1,
        });
    }
    let n = trials.len() as f64;
    let f1_avg = trials.iter().map(|t| t.f1).sum::<f64>() / n;
    let f1_max = trials.iter().map(|t| t.f1).fold(f64::NEG_INFINITY, f64::max);
    let f1_std = (trials.iter().map(|t| (t.f1 - f1_avg).powi(2)).sum::<f64>() / n).sqrt();
    Ok(SearchReport {
        f1_avg,
        f1_max,
        f1_std,
        trials,
    })
}

/// Training-set accuracy of ±1 predictions.
pub fn accuracy(predictions: &[f64], labels: &[f64]) -> f64 {
    let hits = predictions.iter().zip(labels).filter(|(p, l)| (**p > 0.0) == (**l > 0.0)).count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn pooling() {
        assert_eq!(mean_pool(array![[0.0, 2.0], [2.0, 0.0]].view()).unwrap(), array![1.0, 1.0]);
        assert_eq!(mean_pool(array![[3.0, -1.0]].view()).unwrap(), array![3.0, -1.0]);
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(matches!(mean_pool(empty.view()), Err(Error::EmptyPool)));
    }

    proptest! {
        #[test]
        fn pooling_permutation_invariant(rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 3), 1..8)) {
            let n = rows.len();
            let x = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
            let rev = Array2::from_shape_fn((n, 3), |(i, j)| rows[n - 1 - i][j]);
            let a = mean_pool(x.view()).unwrap();
            let b = mean_pool(rev.view()).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn f1_in_unit_interval(pairs in proptest::collection::vec((proptest::bool::ANY, proptest::bool::ANY), 1..40)) {
            let p: Vec<f64> = pairs.iter().map(|(a, _)| if *a { 1.0 } else { -1.0 }).collect();
            let l: Vec<f64> = pairs.iter().map(|(_, b)| if *b { 1.0 } else { -1.0 }).collect();
            let f = f1_score(&p, &l).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn fuse_dims_add(a in 1usize..20, b in 1usize..20) {
            let f = fuse(Array1::ones(a).view(), Array1::zeros(b).view()).unwrap();
            prop_assert_eq!(f.vector.len(), a + b);
            prop_assert_eq!(f.speech().len(), a);
            prop_assert!(f.text().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn f1_hand_values() {
        // TP 12, FP 3, FN 5, TN 4
        let mut p = vec![1.0; 15];
        let mut l = vec![1.0; 12];
        l.extend([-1.0; 3]);
        p.extend([-1.0; 9]);
        l.extend([1.0; 5]);
        l.extend([-1.0; 4]);
        assert!((f1_score(&p, &l).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(f1_score(&l, &l).unwrap(), 1.0);
        assert_eq!(f1_score(&[-1.0, -1.0], &[1.0, -1.0]).unwrap(), 0.0);
        assert!(matches!(f1_score(&[1.0], &[1.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn fusion_headline_dims() {
        let f = fuse(Array1::zeros(300).view(), Array1::zeros(300).view()).unwrap();
        assert_eq!((f.vector.len(), f.speech_dim, f.text_dim), (600, 300, 300));
        assert_eq!(fuse(Array1::zeros(500).view(), Array1::zeros(300).view()).unwrap().vector.len(), 800);
        assert!(matches!(fuse(Array1::zeros(0).view(), Array1::zeros(3).view()), Err(Error::Fusion(_))));
    }

    fn random_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn pca_rank_one() {
        let x = Array2::from_shape_fn((10, 3), |(i, j)| (i as f64 - 3.0) * [1.0, -2.0, 0.5][j]);
        let p = Pca::fit(x.view(), 1).unwrap();
        assert!((p.retained_fractions()[0] - 1.0).abs() < 1e-12);
        // largest-magnitude coordinate (-2 direction) made positive
        assert!(p.components[[0, 1]] > 0.0);
    }

    #[test]
    fn pca_full_rank_reconstructs() {
        let x = random_matrix(20, 5, 1);
        let p = Pca::fit(x.view(), 5).unwrap();
        let back = p.reconstruct(p.transform(x.view()).unwrap().view());
        assert!((&back - &x).iter().all(|e| e.abs() < 1e-6));
        let f = p.retained_fractions();
        assert!(f.windows(2).into_iter().all(|w| w[0] >= w[1]));
        assert!((f.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pca_gram_path_matches_covariance_path() {
        // 6 rows in 10 dims takes the Gram route; compare against projecting
        // with the covariance route on a padded copy
        let x = random_matrix(6, 10, 2);
        let gram = Pca::fit(x.view(), 3).unwrap();
        let mut tall = Array2::zeros((12, 10));
        tall.slice_mut(ndarray::s![..6, ..]).assign(&x);
        tall.slice_mut(ndarray::s![6.., ..]).assign(&(2.0 * &gram.mean - &x));
        let cov = Pca::fit(tall.view(), 3).unwrap();
        for (a, b) in gram.components.iter().zip(cov.components.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        // components past the rank are zero
        let wide = Pca::fit(x.view(), 8).unwrap();
        assert!(wide.components.row(7).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reduce_errors() {
        let x = random_matrix(4, 3, 3);
        assert!(matches!(reduce_dim(x.view(), 4, ReduceMethod::Pca), Err(Error::Shape(_))));
        assert!(matches!(
            reduce_dim(x.slice(ndarray::s![..1, ..]), 1, ReduceMethod::Pca),
            Err(Error::InsufficientInput(_))
        ));
        assert_eq!(reduce_dim(x.view(), 3, ReduceMethod::External).unwrap(), x);
        assert!(reduce_dim(x.view(), 2, ReduceMethod::External).is_err());
    }

    #[test]
    fn svm_two_points() {
        let x = array![[-1.0, 0.0], [1.0, 0.0]];
        let m = train_svm(x.view(), &[-1.0, 1.0], 100.0, 1000, 0).unwrap();
        let d = m.decision_values(x.view()).unwrap();
        assert!(d[0] < 0.0 && d[1] > 0.0);
        assert!((m.w[1] / m.w[0]).abs() < 0.05);
        // boundary x1 = -b/w1 sits at the origin
        assert!((m.b / m.w[0]).abs() < 0.05, "{m:?}");
    }

    #[test]
    fn svm_separable_hinge_vanishes() {
        let mut x = random_matrix(200, 3, 4);
        let y: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for (mut row, &yi) in x.rows_mut().into_iter().zip(&y) {
            row[0] = yi * (1.5 + row[0].abs());
        }
        let m = train_svm(x.view(), &y, 100.0, 200, 1).unwrap();
        let hinge: f64 = m
            .decision_values(x.view())
            .unwrap()
            .iter()
            .zip(&y)
            .map(|(d, yi)| (1.0 - yi * d).max(0.0))
            .sum::<f64>()
            / 200.0;
        assert!(hinge < 1e-3, "{hinge}");
        assert!(m.objective_trace.last().unwrap() <= m.objective_trace.first().unwrap());
        assert!(m.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn svm_is_deterministic_and_rejects_one_class() {
        let x = random_matrix(30, 2, 5);
        let y: Vec<f64> = (0..30).map(|i| if i < 15 { 1.0 } else { -1.0 }).collect();
        assert_eq!(train_svm(x.view(), &y, 1.0, 20, 3).unwrap(), train_svm(x.view(), &y, 1.0, 20, 3).unwrap());
        assert!(matches!(train_svm(x.view(), &[1.0; 30], 1.0, 5, 0), Err(Error::Training(_))));
    }

    #[test]
    fn decision_value_identities() {
        let m = SvmModel {
            w: vec![1.0, 0.0],
            b: 0.0,
            c: 1.0,
            epochs: 1,
            seed: 0,
            objective_trace: vec![],
        };
        assert_eq!(decision_value(&m, array![3.0, 4.0].view()).unwrap(), 3.0);
        let m2 = SvmModel { b: -0.7, ..m.clone() };
        assert_eq!(decision_value(&m2, array![0.0, 0.0].view()).unwrap(), -0.7);
        assert!(matches!(decision_value(&m, array![1.0].view()), Err(Error::Shape(_))));
        let x = random_matrix(7, 2, 6);
        let m3 = SvmModel { w: vec![0.3, -1.2], b: 0.4, ..m };
        let pooled = decision_value(&m3, mean_pool(x.view()).unwrap().view()).unwrap();
        let mean_of = m3.decision_values(x.view()).unwrap().mean().unwrap();
        assert!((pooled - mean_of).abs() < 1e-12);
    }

    #[test]
    fn search_report_properties() {
        let x = random_matrix(60, 3, 7);
        let y: Vec<f64> = x.column(0).iter().map(|&v| if v > 0.0 { 1.0 } else { -1.0 }).collect();
        let r = random_search_with(x.view(), &y, x.view(), &y, 4, 9, &[20, 50]).unwrap();
        assert_eq!(r.trials.len(), 4);
        assert!(r.f1_avg <= r.f1_max && r.f1_std >= 0.0);
        assert!(r.trials.iter().all(|t| (1e-3..=1e3).contains(&t.c)));
        assert_eq!(r, random_search_with(x.view(), &y, x.view(), &y, 4, 9, &[20, 50]).unwrap());
    }
}
