//! Word vectors: skip-gram training, text-format I/O, k-means clustering and
//! cosine neighbours.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

/// Cluster count used for the full-size forum vocabulary.
pub const DEFAULT_CLUSTERS: usize = 5372;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    words: Vec<String>,
    data: Vec<T>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Builds a table from `(word, vector)` rows. Later duplicates replace
    /// earlier ones.
    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = (String, Vec<T>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        let mut table = EmbeddingTable { dim, words: Vec::new(), data: Vec::new(), index: HashMap::new() };
        for (word, v) in rows {
            if v.len() != dim {
                return Err(Error::invalid(format!("vector for `{word}` has {} values, expected {dim}", v.len())));
            }
            table.push(word, &v);
        }
        Ok(table)
    }

    fn push(&mut self, word: String, v: &[T]) {
        if let Some(&i) = self.index.get(&word) {
            self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(v);
        } else {
            self.index.insert(word.clone(), self.words.len());
            self.words.push(word);
            self.data.extend_from_slice(v);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row-major vector storage.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Writes `vocab dim` followed by one `word v1 … vd` line per word.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.vocab_size(), self.dim);
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for v in self.row(i) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(content: &str, path: &Path) -> Result<Self> {
        let mut lines = content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
        let malformed =
            |line: usize, message: String| Error::Malformed { path: path.to_path_buf(), line: line + 1, message };

        if let Some((_, first)) = lines.peek() {
            let f: Vec<&str> = first.split_whitespace().collect();
            if f.len() == 2 && f.iter().all(|x| x.parse::<usize>().is_ok()) {
                lines.next();
            }
        }
        let mut dim = None;
        let mut table: Option<EmbeddingTable<T>> = None;
        for (n, line) in lines {
            let mut fields = line.split_whitespace();
            let word = fields.next().unwrap_or_default().to_string();
            let values = fields
                .map(|x| x.parse::<f64>().map(T::of))
                .collect::<std::result::Result<Vec<T>, _>>()
                .map_err(|_| malformed(n, format!("non-numeric value in the row for `{word}`")))?;
            let d = *dim.get_or_insert(values.len());
            if d == 0 {
                return Err(malformed(n, "row has no vector values".into()));
            }
            if values.len() != d {
                return Err(malformed(n, format!("row for `{word}` has {} values, expected {d}", values.len())));
            }
            let t = table.get_or_insert_with(|| EmbeddingTable {
                dim: d,
                words: Vec::new(),
                data: Vec::new(),
                index: HashMap::new(),
            });
            if t.contains(&word) {
                warn!("{}:{}: duplicate word `{word}`, keeping the last vector", path.display(), n + 1);
            }
            t.push(word, &values);
        }
        table.ok_or_else(|| Error::Empty { path: path.to_path_buf() })
    }
}

/// Loads a word-per-line text vector file; the dimension comes from the
/// first data row and an optional `vocab dim` header is skipped.
pub fn load_vectors<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingTable<T>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::parse(&content, path)
}

fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Cosine similarity between two vocabulary words.
pub fn similarity<T: Scalar>(table: &EmbeddingTable<T>, a: &str, b: &str) -> Result<T> {
    let va = table.get(a).ok_or_else(|| Error::OutOfVocabulary(a.to_string()))?;
    let vb = table.get(b).ok_or_else(|| Error::OutOfVocabulary(b.to_string()))?;
    Ok(cosine(va, vb))
}

/// Top-`k` words by cosine similarity to `word`, excluding the word itself.
/// Equal similarities are ordered lexicographically.
pub fn nearest<T: Scalar>(table: &EmbeddingTable<T>, word: &str, k: usize) -> Result<Vec<(String, T)>> {
    let q = table.get(word).ok_or_else(|| Error::OutOfVocabulary(word.to_string()))?;
    let mut scored: Vec<(&str, T)> = table
        .words
        .iter()
        .enumerate()
        .filter(|(_, w)| w.as_str() != word)
        .map(|(i, w)| (w.as_str(), cosine(q, table.row(i))))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0)));
    scored.truncate(k);
    Ok(scored.into_iter().map(|(w, s)| (w.to_string(), s)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkipGramParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub min_count: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramParams {
    fn default() -> Self {
        SkipGramParams { dim: 100, window: 5, negatives: 5, min_count: 5, epochs: 1, learning_rate: 0.025, seed: 0 }
    }
}

/// Trains skip-gram vectors with negative sampling on a sentence stream.
///
/// Training is single-threaded, so a fixed seed gives identical tables.
pub fn train_skipgram<T: Scalar, S: AsRef<str>>(
    corpus: &[Vec<S>],
    params: &SkipGramParams,
) -> Result<EmbeddingTable<T>> {
    let p = params;
    if p.dim == 0 || p.window == 0 || p.min_count == 0 || p.epochs == 0 || !(p.learning_rate > 0.0) {
        return Err(Error::invalid("skip-gram parameters must be positive"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for sentence in corpus {
        for w in sentence {
            *counts.entry(w.as_ref()).or_insert(0) += 1;
        }
    }
    let mut vocab: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= p.min_count).collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, (w, _))| (*w, i)).collect();

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter_map(|w| index.get(w.as_ref()).copied()).collect::<Vec<_>>())
        .filter(|s| s.len() > 1)
        .collect();
    let kept: usize = sentences.iter().map(Vec::len).sum();
    if vocab.is_empty() || kept <= p.window {
        return Err(Error::invalid(format!(
            "corpus has {kept} usable tokens, fewer than one window of {}",
            p.window + 1
        )));
    }

    let v = vocab.len();
    let dim = p.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut input: Vec<T> = (0..v * dim).map(|_| T::of((rng.gen::<f64>() - 0.5) / dim as f64)).collect();
    let mut output: Vec<T> = vec![T::zero(); v * dim];

    let mut cumulative = Vec::with_capacity(v);
    let mut acc = 0.0;
    for (_, c) in &vocab {
        acc += (*c as f64).powf(0.75);
        cumulative.push(acc);
    }
    let draw_negative = |rng: &mut ChaCha8Rng| -> usize {
        let r = rng.gen::<f64>() * acc;
        cumulative.partition_point(|&c| c <= r).min(v - 1)
    };

    let total = (kept * p.epochs) as f64;
    let mut seen = 0usize;
    let mut grad = vec![T::zero(); dim];
    for _ in 0..p.epochs {
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = T::of((p.learning_rate * (1.0 - seen as f64 / total)).max(p.learning_rate * 1e-4));
                seen += 1;
                let reduced = rng.gen_range(0..p.window);
                let span = p.window - reduced;
                let lo = pos.saturating_sub(span);
                let hi = (pos + span).min(sentence.len() - 1);
                for (ctx_pos, &ctx) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = T::zero());
                    for d in 0..=p.negatives {
                        let (target, label) = if d == 0 {
                            (center, T::one())
                        } else {
                            let t = draw_negative(&mut rng);
                            if t == center {
                                continue;
                            }
                            (t, T::zero())
                        };
                        let inp = &input[ctx * dim..(ctx + 1) * dim];
                        let out = &mut output[target * dim..(target + 1) * dim];
                        let dot: T = inp.iter().zip(out.iter()).map(|(&a, &b)| a * b).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for j in 0..dim {
                            grad[j] = grad[j] + g * out[j];
                            out[j] = out[j] + g * inp[j];
                        }
                    }
                    for (x, g) in input[ctx * dim..(ctx + 1) * dim].iter_mut().zip(&grad) {
                        *x = *x + *g;
                    }
                }
            }
        }
    }

    Ok(EmbeddingTable {
        dim,
        words: vocab.iter().map(|(w, _)| w.to_string()).collect(),
        data: input,
        index: index.into_iter().map(|(w, i)| (w.to_string(), i)).collect(),
    })
}

/// Result of k-means over a row-major point matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub centroids: Vec<T>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_history: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> KMeansResult<T> {
    pub fn objective(&self) -> T {
        self.objective_history.last().copied().unwrap_or_else(T::zero)
    }
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn assign<T: Scalar>(points: &[T], dim: usize, centroids: &[T], labels: &mut [usize]) -> T {
    let dists: Vec<T> = points
        .par_chunks(dim)
        .zip(labels.par_iter_mut())
        .map(|(p, label)| {
            let mut best = (0, T::infinity());
            for (j, c) in centroids.chunks(dim).enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            *label = best.0;
            best.1
        })
        .collect();
    dists.into_iter().sum()
}

fn kmeans_pp<T: Scalar>(points: &[T], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let n = points.len() / dim;
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = points[first * dim..(first + 1) * dim].to_vec();
    let mut d2: Vec<f64> = points.chunks(dim).map(|p| sq_dist(p, &centroids[..dim]).as_f64()).collect();
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && !chosen[i] {
                    pick = Some(i);
                    if r < d {
                        break;
                    }
                    r -= d;
                }
            }
            pick.expect("positive total distance implies an unchosen point")
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen[next] = true;
        let c = &points[next * dim..(next + 1) * dim];
        for (i, p) in points.chunks(dim).enumerate() {
            d2[i] = d2[i].min(sq_dist(p, c).as_f64());
        }
        centroids.extend_from_slice(c);
    }
    centroids
}

/// Lloyd's k-means from a seeded k-means++ start.
///
/// Stops when no centroid moves by `tol` or more (Euclidean) or after
/// `max_iter` updates. Empty clusters are reseeded with the point farthest
/// from its current centroid. The returned labels are always the nearest
/// centroid for every point.
pub fn kmeans_points<T: Scalar>(
    points: &[T],
    dim: usize,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult<T>> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::invalid("point matrix does not match the dimension"));
    }
    let n = points.len() / dim;
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(points, dim, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iter = 0;
    loop {
        history.push(assign(points, dim, &centroids, &mut labels));
        if converged || iter >= max_iter {
            break;
        }
        iter += 1;

        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.chunks(dim).zip(&labels) {
            counts[l] += 1;
            for (s, &x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(p) {
                *s += x.as_f64();
            }
        }
        let mut next = centroids.clone();
        for j in 0..k {
            if counts[j] > 0 {
                for d in 0..dim {
                    next[j * dim + d] = T::of(sums[j * dim + d] / counts[j] as f64);
                }
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        if !empty.is_empty() {
            let mut far: Vec<(usize, T)> = points
                .chunks(dim)
                .enumerate()
                .map(|(i, p)| (i, sq_dist(p, &next[labels[i] * dim..(labels[i] + 1) * dim])))
                .collect();
            far.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
            for (j, (i, _)) in empty.into_iter().zip(far) {
                next[j * dim..(j + 1) * dim].copy_from_slice(&points[i * dim..(i + 1) * dim]);
            }
        }
        let shift =
            centroids.chunks(dim).zip(next.chunks(dim)).map(|(a, b)| sq_dist(a, b).sqrt().as_f64()).fold(0.0, f64::max);
        centroids = next;
        converged = shift < tol;
    }
    Ok(KMeansResult { centroids, labels, objective_history: history, converged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel<T> {
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<T>,
    pub assignment: BTreeMap<String, usize>,
    pub objective_history: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> ClusterModel<T> {
    pub fn cluster_of(&self, word: &str) -> Option<usize> {
        self.assignment.get(word).copied()
    }

    pub fn centroid(&self, j: usize) -> &[T] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    /// `word<TAB>cluster_id` lines in word order.
    pub fn assignment_text(&self) -> String {
        let mut out = String::new();
        for (w, c) in &self.assignment {
            let _ = writeln!(out, "{w}\t{c}");
        }
        out
    }

    /// Centroid sidecar: `cluster_id v1 … vd` lines.
    pub fn centroid_text(&self) -> String {
        let mut out = String::new();
        for j in 0..self.k {
            out.push_str(&j.to_string());
            for v in self.centroid(j) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes the assignment file and `<path>.centroids`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.assignment_text()).map_err(|e| Error::io(path, e))?;
        let side = centroid_path(path);
        std::fs::write(&side, self.centroid_text()).map_err(|e| Error::io(side, e))
    }
}

pub fn centroid_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".centroids");
    s.into()
}

/// Reads a `word<TAB>cluster_id` file into a lookup map.
pub fn load_cluster_assignment(path: impl AsRef<Path>) -> Result<HashMap<String, usize>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (w, c) = line.split_once('\t').ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            message: "expected `word<TAB>cluster_id`".into(),
        })?;
        let c = c.trim().parse::<usize>().map_err(|_| Error::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            message: "cluster id is not a non-negative integer".into(),
        })?;
        map.insert(w.to_string(), c);
    }
    if map.is_empty() {
        return Err(Error::Empty { path: path.to_path_buf() });
    }
    Ok(map)
}

/// Clusters every vocabulary word with [`kmeans_points`] on the raw vectors.
pub fn kmeans<T: Scalar>(
    table: &EmbeddingTable<T>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel<T>> {
    if k > table.vocab_size() {
        return Err(Error::invalid(format!("k = {k} exceeds the vocabulary size {}", table.vocab_size())));
    }
    let r = kmeans_points(table.data(), table.dim(), k, seed, max_iter, tol)?;
    Ok(ClusterModel {
        k,
        dim: table.dim(),
        assignment: table.words().iter().cloned().zip(r.labels.iter().copied()).collect(),
        centroids: r.centroids,
        objective_history: r.objective_history,
        converged: r.converged,
    })
}
