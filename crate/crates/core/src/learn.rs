//! L2-regularised logistic regression, binary metrics and stratified
//! cross-validation.
//!
//! The objective is
//!
//! ```text
//! f(w, b) = ½‖w‖² + C · Σᵢ log(1 + exp(−yᵢ (w·xᵢ + b)))
//! ```
//!
//! with the intercept `b` left unregularised. It is minimised by a
//! deterministic truncated Newton method (conjugate-gradient inner solves,
//! Armijo backtracking), so a fixed input always yields the same bits.

use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{fit_registry, transform, FeatureRegistry, FeatureVector, GroupMask, RawFeatures, ScalerStats};
use crate::scalar::{log1p_exp_neg, sigmoid, Scalar};

pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    /// Weight of the data term relative to the L2 penalty.
    #[serde(rename = "C")]
    pub c: f64,
    /// Gradient-norm stopping threshold.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams { c: 1.0, tol: 1e-6, max_iter: 100, seed: 0 }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

fn sign<T: Scalar>(y: bool) -> T {
    if y {
        T::one()
    } else {
        -T::one()
    }
}

fn margins<T: Scalar>(theta: &[T], xs: &[FeatureVector<T>], ys: &[bool]) -> Vec<T> {
    let (w, b) = theta.split_at(theta.len() - 1);
    xs.iter().zip(ys).map(|(x, &y)| sign::<T>(y) * (x.dot(w) + b[0])).collect()
}

fn objective_from_margins<T: Scalar>(theta: &[T], m: &[T], c: T) -> T {
    let w = &theta[..theta.len() - 1];
    let reg: T = w.iter().map(|&v| v * v).sum::<T>() * T::of(0.5);
    reg + c * m.iter().map(|&mi| log1p_exp_neg(mi)).sum::<T>()
}

/// Objective value and gradient at `theta = [w..., b]`.
pub fn objective_and_gradient<T: Scalar>(theta: &[T], xs: &[FeatureVector<T>], ys: &[bool], c: T) -> (T, Vec<T>) {
    let m = margins(theta, xs, ys);
    let value = objective_from_margins(theta, &m, c);
    (value, gradient_from_margins(theta, xs, ys, &m, c))
}

fn gradient_from_margins<T: Scalar>(theta: &[T], xs: &[FeatureVector<T>], ys: &[bool], m: &[T], c: T) -> Vec<T> {
    let d = theta.len() - 1;
    let mut g = theta.to_vec();
    g[d] = T::zero();
    for ((x, &y), &mi) in xs.iter().zip(ys).zip(m) {
        let coef = -c * sign::<T>(y) * sigmoid(-mi);
        for &(j, v) in x.entries() {
            g[j] = g[j] + coef * v;
        }
        g[d] = g[d] + coef;
    }
    g
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `H v` for the Hessian with curvature weights `dw = C·σ(m)(1−σ(m))`.
fn hessian_vec<T: Scalar>(v: &[T], xs: &[FeatureVector<T>], dw: &[T]) -> Vec<T> {
    let d = v.len() - 1;
    let mut out = v.to_vec();
    out[d] = T::zero();
    for (x, &di) in xs.iter().zip(dw) {
        if di == T::zero() {
            continue;
        }
        let s = di * (x.dot(&v[..d]) + v[d]);
        for &(j, xv) in x.entries() {
            out[j] = out[j] + s * xv;
        }
        out[d] = out[d] + s;
    }
    out
}

/// Approximately solves `H p = −g` by conjugate gradients.
fn newton_direction<T: Scalar>(g: &[T], xs: &[FeatureVector<T>], dw: &[T], rel_tol: T, max_cg: usize) -> Vec<T> {
    let n = g.len();
    let mut p = vec![T::zero(); n];
    let mut r: Vec<T> = g.iter().map(|&v| -v).collect();
    let mut dir = r.clone();
    let mut rr = dot(&r, &r);
    let stop = rr.sqrt() * rel_tol;
    for _ in 0..max_cg {
        let hd = hessian_vec(&dir, xs, dw);
        let curv = dot(&dir, &hd);
        if !(curv > T::epsilon() * dot(&dir, &dir)) {
            break;
        }
        let alpha = rr / curv;
        for i in 0..n {
            p[i] = p[i] + alpha * dir[i];
            r[i] = r[i] - alpha * hd[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= stop {
            break;
        }
        let beta = rr_new / rr;
        for i in 0..n {
            dir[i] = r[i] + beta * dir[i];
        }
        rr = rr_new;
    }
    if p.iter().all(|v| *v == T::zero()) {
        return g.iter().map(|&v| -v).collect();
    }
    p
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogisticRegression<T> {
    pub weights: Vec<T>,
    pub intercept: T,
    pub report: TrainReport,
}

impl<T: Scalar> LogisticRegression<T> {
    pub fn margin(&self, x: &FeatureVector<T>) -> T {
        x.entries().iter().filter(|(j, _)| *j < self.weights.len()).map(|&(j, v)| self.weights[j] * v).sum::<T>()
            + self.intercept
    }

    /// Label and positive-class probability; a probability of exactly 0.5 is
    /// positive.
    pub fn predict(&self, x: &FeatureVector<T>) -> (bool, T) {
        predict_margin(self.margin(x))
    }
}

pub fn predict_margin<T: Scalar>(margin: T) -> (bool, T) {
    let p = sigmoid(margin);
    (p >= T::of(0.5), p)
}

/// Fits weights over `dim` columns. Labels are `true` for the positive class.
pub fn train_lr<T: Scalar>(
    xs: &[FeatureVector<T>],
    ys: &[bool],
    dim: usize,
    params: &TrainParams,
) -> Result<LogisticRegression<T>> {
    params.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("{} feature vectors but {} labels", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("training needs at least two examples"));
    }
    if ys.iter().all(|&y| y) || ys.iter().all(|&y| !y) {
        return Err(Error::invalid("training data contains a single class"));
    }
    for (i, x) in xs.iter().enumerate() {
        if x.entries().iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("example {i} has a non-finite feature value")));
        }
        if x.max_column().is_some_and(|j| j >= dim) {
            return Err(Error::invalid(format!("example {i} has a column outside 0..{dim}")));
        }
    }

    let c = T::of(params.c);
    let tol = T::of(params.tol);
    let mut theta = vec![T::zero(); dim + 1];
    let mut m = margins(&theta, xs, ys);
    let mut f = objective_from_margins(&theta, &m, c);
    let mut report = TrainReport::default();
    let max_cg = (dim + 1).clamp(10, 200);

    for it in 0..params.max_iter {
        let g = gradient_from_margins(&theta, xs, ys, &m, c);
        let gnorm = dot(&g, &g).sqrt();
        report.iterations = it;
        report.grad_norm = gnorm.as_f64();
        if gnorm <= tol {
            report.converged = true;
            break;
        }
        let dw: Vec<T> = m.iter().map(|&mi| c * sigmoid(mi) * sigmoid(-mi)).collect();
        let eta = T::of(0.5).min(gnorm.sqrt());
        let p = newton_direction(&g, xs, &dw, eta, max_cg);
        let slope = dot(&g, &p);
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<T> = theta.iter().zip(&p).map(|(&t, &d)| t + step * d).collect();
            let cm = margins(&cand, xs, ys);
            let cf = objective_from_margins(&cand, &cm, c);
            if cf <= f + T::of(1e-4) * step * slope {
                accepted = Some((cand, cm, cf));
                break;
            }
            step = step * T::of(0.5);
        }
        match accepted {
            Some((t, cm, cf)) => {
                let stalled = cf == f;
                theta = t;
                m = cm;
                f = cf;
                if stalled {
                    break;
                }
            }
            None => break,
        }
        report.iterations = it + 1;
    }
    if !report.converged {
        let g = gradient_from_margins(&theta, xs, ys, &m, c);
        let gnorm = dot(&g, &g).sqrt();
        report.grad_norm = gnorm.as_f64();
        report.converged = gnorm <= tol;
        if !report.converged {
            warn!(
                "optimizer stopped after {} iterations with gradient norm {:.3e} > tol {:.1e}",
                report.iterations, report.grad_norm, params.tol
            );
        }
    }
    report.objective = f.as_f64();
    let intercept = theta.pop().unwrap_or_else(T::zero);
    Ok(LogisticRegression { weights: theta, intercept, report })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Metrics { accuracy: ratio(tp + tn, tp + fp + fn_ + tn), precision, recall, f1, tp, fp, fn_, tn }
    }
}

/// Binary metrics with `true` as the positive class.
pub fn compute_metrics(predictions: &[bool], gold: &[bool]) -> Result<Metrics> {
    if predictions.len() != gold.len() {
        return Err(Error::invalid(format!("{} predictions for {} gold labels", predictions.len(), gold.len())));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
#[serde(bound = "T: Scalar")]
struct ModelContent<'a, T> {
    version: u32,
    params: &'a TrainParams,
    mask: GroupMask,
    registry: &'a FeatureRegistry,
    scaler: &'a ScalerStats<T>,
    weights: &'a [T],
    intercept: T,
}

/// A trained classifier with everything needed to score raw features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Model<T> {
    pub version: u32,
    pub params: TrainParams,
    pub mask: GroupMask,
    pub registry: FeatureRegistry,
    pub scaler: ScalerStats<T>,
    pub weights: Vec<T>,
    pub intercept: T,
    /// Hex SHA-256 over the JSON of every other field.
    pub content_hash: String,
}

impl<T: Scalar> Model<T> {
    pub fn new(
        params: TrainParams,
        mask: GroupMask,
        registry: FeatureRegistry,
        scaler: ScalerStats<T>,
        lr: LogisticRegression<T>,
    ) -> Result<Self> {
        if lr.weights.len() != registry.n_columns() {
            return Err(Error::invalid(format!(
                "{} weights for {} registry columns",
                lr.weights.len(),
                registry.n_columns()
            )));
        }
        if lr.weights.iter().chain([&lr.intercept]).any(|w| !w.is_finite()) {
            return Err(Error::invalid("model has non-finite weights"));
        }
        let mut model = Model {
            version: MODEL_FORMAT_VERSION,
            params,
            mask,
            registry,
            scaler,
            weights: lr.weights,
            intercept: lr.intercept,
            content_hash: String::new(),
        };
        model.content_hash = model.compute_hash()?;
        Ok(model)
    }

    fn compute_hash(&self) -> Result<String> {
        let content = ModelContent {
            version: self.version,
            params: &self.params,
            mask: self.mask,
            registry: &self.registry,
            scaler: &self.scaler,
            weights: &self.weights,
            intercept: self.intercept,
        };
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&content)?)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Reads a model and verifies its version, shape and content hash.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Model<T> = serde_json::from_str(&text)?;
        let bad = |message: String| Error::Malformed { path: path.to_path_buf(), line: 0, message };
        if model.version != MODEL_FORMAT_VERSION {
            return Err(bad(format!("unsupported model version {}", model.version)));
        }
        if model.weights.len() != model.registry.n_columns() || model.scaler.min.len() != model.registry.n_columns() {
            return Err(bad("weights, scaler and registry disagree in length".into()));
        }
        if model.compute_hash()? != model.content_hash {
            return Err(bad("content hash mismatch".into()));
        }
        Ok(model)
    }

    pub fn vectorize(&self, raw: &RawFeatures) -> FeatureVector<T> {
        transform(&raw.restrict(self.mask), &self.registry, &self.scaler)
    }

    pub fn margin(&self, x: &FeatureVector<T>) -> T {
        x.dot(&self.weights) + self.intercept
    }

    pub fn predict(&self, x: &FeatureVector<T>) -> (bool, T) {
        predict_margin(self.margin(x))
    }

    /// Scores raw features restricted to the model's mask.
    pub fn score(&self, raw: &RawFeatures) -> (bool, T) {
        self.predict(&self.vectorize(raw))
    }
}

/// Fits registry, scaler and weights on the whole of `raws`.
pub fn fit_model<T: Scalar>(
    raws: &[RawFeatures],
    labels: &[bool],
    mask: GroupMask,
    params: &TrainParams,
) -> Result<Model<T>> {
    let restricted: Vec<RawFeatures> = raws.iter().map(|r| r.restrict(mask)).collect();
    let (registry, scaler) = fit_registry::<T>(&restricted)?;
    let xs: Vec<FeatureVector<T>> = restricted.iter().map(|r| transform(r, &registry, &scaler)).collect();
    let lr = train_lr(&xs, labels, registry.n_columns(), params)?;
    Model::new(*params, mask, registry, scaler, lr)
}

/// Seeded stratified fold ids in `0..k`, one per example.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::invalid(format!(
                "{k} folds exceed the {} examples of the {} class",
                idx.len(),
                if class { "positive" } else { "negative" }
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, &i) in idx.iter().enumerate() {
            folds[i] = (pos + offset) % k;
        }
        offset = (offset + idx.len()) % k;
    }
    Ok(folds)
}

/// Fits the registry and scaler on the listed training rows only.
pub fn prepare_fold<T: Scalar>(raws: &[RawFeatures], train: &[usize]) -> Result<(FeatureRegistry, ScalerStats<T>)> {
    let rows: Vec<RawFeatures> = train.iter().map(|&i| raws[i].clone()).collect();
    fit_registry(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Metrics over the concatenated held-out predictions.
    pub pooled: Metrics,
    pub per_fold: Vec<Metrics>,
    pub assignment: Vec<usize>,
    pub predictions: Vec<bool>,
    pub probabilities: Vec<f64>,
}

impl CvResult {
    pub fn fold_hash(&self) -> String {
        fold_hash(&self.assignment)
    }
}

pub fn fold_hash(assignment: &[usize]) -> String {
    let mut h = Sha256::new();
    for &f in assignment {
        h.update((f as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

struct FoldOutcome {
    test: Vec<usize>,
    predictions: Vec<bool>,
    probabilities: Vec<f64>,
}

/// Stratified k-fold cross-validation over `raws` restricted to `mask`.
/// Registry and scaler are refit inside every training fold. Folds run in
/// parallel; results are collected in fold order.
pub fn cross_validate<T: Scalar>(
    raws: &[RawFeatures],
    labels: &[bool],
    folds: usize,
    params: &TrainParams,
    mask: GroupMask,
    seed: u64,
) -> Result<CvResult> {
    if raws.len() != labels.len() {
        return Err(Error::invalid(format!("{} feature rows but {} labels", raws.len(), labels.len())));
    }
    params.validate()?;
    let assignment = stratified_folds(labels, folds, seed)?;
    cross_validate_with::<T>(raws, labels, &assignment, params, mask)
}

/// As [`cross_validate`] with a given fold assignment.
pub fn cross_validate_with<T: Scalar>(
    raws: &[RawFeatures],
    labels: &[bool],
    assignment: &[usize],
    params: &TrainParams,
    mask: GroupMask,
) -> Result<CvResult> {
    if assignment.len() != raws.len() || raws.len() != labels.len() {
        return Err(Error::invalid("fold assignment, features and labels differ in length"));
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let restricted: Vec<RawFeatures> = raws.iter().map(|r| r.restrict(mask)).collect();
    let outcomes: Vec<FoldOutcome> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..raws.len()).partition(|&i| assignment[i] == fold);
            let (registry, scaler) = prepare_fold::<T>(&restricted, &train)?;
            let xs: Vec<FeatureVector<T>> =
                train.iter().map(|&i| transform(&restricted[i], &registry, &scaler)).collect();
            let ys: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
            let lr = train_lr(&xs, &ys, registry.n_columns(), params)?;
            let (predictions, probabilities) = test
                .iter()
                .map(|&i| {
                    let (l, p) = lr.predict(&transform(&restricted[i], &registry, &scaler));
                    (l, p.as_f64())
                })
                .unzip();
            Ok(FoldOutcome { test, predictions, probabilities })
        })
        .collect::<Result<_>>()?;

    let mut predictions = vec![false; raws.len()];
    let mut probabilities = vec![0.0; raws.len()];
    let mut per_fold = Vec::with_capacity(k);
    for o in &outcomes {
        let gold: Vec<bool> = o.test.iter().map(|&i| labels[i]).collect();
        per_fold.push(compute_metrics(&o.predictions, &gold)?);
        for (j, &i) in o.test.iter().enumerate() {
            predictions[i] = o.predictions[j];
            probabilities[i] = o.probabilities[j];
        }
    }
    let pooled = compute_metrics(&predictions, labels)?;
    Ok(CvResult { pooled, per_fold, assignment: assignment.to_vec(), predictions, probabilities })
}
