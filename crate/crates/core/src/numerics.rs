//! Dense vector primitives, similarity measures and seeded randomness.
//!
//! Vectors are plain `f64` slices. Matrices are row-major [`Mat`]. All
//! randomness in the crate flows through [`SeededRng`], which hands out
//! named sub-streams so that, for example, dropout draws never perturb
//! negative sampling.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure_dim("l2_distance", a.len(), b.len())?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Cosine similarity together with a flag that is set when either input has
/// zero norm. A zero-norm operand yields a similarity of 0.
pub fn cosine_similarity_checked(a: &[f64], b: &[f64]) -> Result<(f64, bool)> {
    ensure_dim("cosine_similarity", a.len(), b.len())?;
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Ok((0.0, true));
    }
    Ok(((dot(a, b) / (na * nb)).clamp(-1.0, 1.0), false))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    cosine_similarity_checked(a, b).map(|(s, _)| s)
}

/// Gradients of `cos(a, b)` with respect to `a` and `b`. Zero when either
/// norm is zero.
pub fn cosine_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let cos = dot(a, b) / (na * nb);
    let inv = 1.0 / (na * nb);
    let ga = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| y * inv - cos * x / (na * na))
        .collect();
    let gb = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x * inv - cos * y / (nb * nb))
        .collect();
    (cos, ga, gb)
}

/// A similarity measure: larger means closer.
pub trait Similarity: Send + Sync {
    fn name(&self) -> &'static str;
    fn score(&self, a: &[f64], b: &[f64]) -> f64;
}

pub struct Cosine;

impl Similarity for Cosine {
    fn name(&self) -> &'static str {
        "cosine"
    }

    fn score(&self, a: &[f64], b: &[f64]) -> f64 {
        let na = l2_norm(a);
        let nb = l2_norm(b);
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
        }
    }
}

/// Negated Euclidean distance.
pub struct Euclidean;

impl Similarity for Euclidean {
    fn name(&self) -> &'static str {
        "euclidean"
    }

    fn score(&self, a: &[f64], b: &[f64]) -> f64 {
        -a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

static SIMILARITIES: [&dyn Similarity; 2] = [&Cosine, &Euclidean];

pub fn similarity_names() -> impl Iterator<Item = &'static str> {
    SIMILARITIES.iter().map(|s| s.name())
}

pub fn similarity_by_name(name: &str) -> Result<&'static dyn Similarity> {
    SIMILARITIES
        .iter()
        .copied()
        .find(|s| s.name() == name)
        .ok_or_else(|| {
            Error::invalid(format!(
                "unknown similarity '{name}' (known: {})",
                similarity_names().collect::<Vec<_>>().join(", ")
            ))
        })
}

/// Indices of the `k` highest-scoring candidates, best first. Exact ties are
/// broken by ascending candidate index.
pub fn top_k_indices<V: AsRef<[f64]>>(
    query: &[f64],
    candidates: &[V],
    k: usize,
    sim: &dyn Similarity,
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::invalid("top-k over an empty candidate list"));
    }
    if k == 0 || k > candidates.len() {
        return Err(Error::invalid(format!(
            "k = {k} must be in 1..={}",
            candidates.len()
        )));
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.iter().enumerate() {
        let c = c.as_ref();
        ensure_dim("top_k candidate", query.len(), c.len())?;
        scored.push((sim.score(query, c), i));
    }
    let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
    };
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    Ok(scored.into_iter().map(|(_, i)| i).collect())
}

/// Keys of the `k` candidates most cosine-similar to `query`.
pub fn top_k_by_similarity<K: Clone, V: AsRef<[f64]>>(
    query: &[f64],
    candidates: &[(K, V)],
    k: usize,
) -> Result<Vec<K>> {
    let vectors: Vec<&[f64]> = candidates.iter().map(|(_, v)| v.as_ref()).collect();
    Ok(top_k_indices(query, &vectors, k, &Cosine)?
        .into_iter()
        .map(|i| candidates[i].0.clone())
        .collect())
}

pub fn ensure_finite(context: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::invalid(format!(
            "{context}: non-finite value {} at index {i}",
            values[i]
        ))),
    }
}

pub fn mean_vector<V: AsRef<[f64]>>(vectors: &[V]) -> Option<Vec<f64>> {
    let first = vectors.first()?.as_ref();
    let mut acc = vec![0.0; first.len()];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v.as_ref()) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Some(acc)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("matrix dimensions must be positive"));
        }
        ensure_dim("matrix data", rows * cols, data.len())?;
        Ok(Mat { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data.chunks_exact(self.cols).map(|row| dot(row, x)).collect()
    }

    /// `selfᵀ · y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &g) in self.data.chunks_exact(self.cols).zip(y) {
            if g == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += g * w;
            }
        }
        out
    }

    /// `self += scale · a bᵀ`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64], scale: f64) {
        for (row, &x) in self.data.chunks_exact_mut(self.cols).zip(a) {
            let s = scale * x;
            if s == 0.0 {
                continue;
            }
            for (w, y) in row.iter_mut().zip(b) {
                *w += s * y;
            }
        }
    }
}

/// Seeded, splittable generator. Built on ChaCha8 with the stream id derived
/// from a path of names, so `SeededRng::new(s).substream("dropout")` is the
/// same stream on every run and is independent of every other name.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a named purpose. Does not advance `self`.
    pub fn substream(&self, name: &str) -> SeededRng {
        let h = fnv1a(0xcbf2_9ce4_8422_2325, &self.stream.to_le_bytes());
        let h = fnv1a(h, name.as_bytes());
        Self::with_stream(self.seed, h)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
