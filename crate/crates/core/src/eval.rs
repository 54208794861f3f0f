//! Retrieval accuracy with the multi-word hit rule, mean nearest neighbour
//! overlap, and report tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, PairedRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::mapper::{CrossModalMapper, Direction};
use crate::model::{ArchConfig, CrossModalAutoencoder};
use crate::nn::Mode;
use crate::numerics::{top_k_indices, Cosine, Similarity};

pub const DEFAULT_N_LIST: [usize; 4] = [1, 5, 10, 30];

/// Worker count for per-record retrieval, from `XMAE_THREADS` (default 1).
pub fn eval_threads() -> usize {
    std::env::var("XMAE_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Indices of the `n` vocabulary words closest to each prediction. Work is
/// split into contiguous chunks across `threads` and reassembled in order.
pub fn retrieve_words(
    predictions: &[Vec<f64>],
    vocab: &Vocabulary,
    n: usize,
    sim: &dyn Similarity,
    threads: usize,
) -> Result<Vec<Vec<usize>>> {
    let vectors = vocab.vectors();
    let run = |chunk: &[Vec<f64>]| -> Result<Vec<Vec<usize>>> {
        chunk.iter().map(|p| top_k_indices(p, vectors, n, sim)).collect()
    };
    if threads <= 1 || predictions.len() < 2 {
        return run(predictions);
    }
    let size = predictions.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = predictions.chunks(size).map(|c| s.spawn(move || run(c))).collect();
        let mut out = Vec::with_capacity(predictions.len());
        for h in handles {
            out.extend(h.join().expect("retrieval worker panicked")?);
        }
        Ok(out)
    })
}

/// A retrieval counts as a hit when any retrieved word is a word of the class.
pub fn is_hit(retrieved: &[usize], vocab: &Vocabulary, class: &ClassLabel) -> bool {
    retrieved
        .iter()
        .any(|&i| class.words.iter().any(|w| *w == vocab.words()[i]))
}

/// Top-n accuracy for every `n` in `n_list` from decoded text vectors.
pub fn accuracies_from_predictions(
    predictions: &[Vec<f64>],
    classes: &[&ClassLabel],
    vocab: &Vocabulary,
    n_list: &[usize],
    sim: &dyn Similarity,
) -> Result<Vec<f64>> {
    if predictions.is_empty() {
        return Err(Error::invalid("accuracy over an empty record set"));
    }
    if predictions.len() != classes.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} class labels",
            predictions.len(),
            classes.len()
        )));
    }
    if vocab.is_empty() {
        return Err(Error::invalid("empty vocabulary"));
    }
    let max_n = *n_list
        .iter()
        .max()
        .ok_or_else(|| Error::invalid("empty N list"))?;
    if n_list.contains(&0) || max_n > vocab.len() {
        return Err(Error::invalid(format!(
            "every N must lie in 1..={} (vocabulary size), got {n_list:?}",
            vocab.len()
        )));
    }
    let ranked = retrieve_words(predictions, vocab, max_n, sim, eval_threads())?;
    Ok(n_list
        .iter()
        .map(|&n| {
            let hits = ranked
                .iter()
                .zip(classes)
                .filter(|(r, c)| is_hit(&r[..n], vocab, c))
                .count();
            hits as f64 / predictions.len() as f64
        })
        .collect())
}

/// Decodes `G_T(E_V(v))` for every record and scores top-n retrieval in the
/// whole vocabulary.
pub fn top_n_accuracies(
    mapper: &dyn CrossModalMapper,
    records: &[PairedRecord],
    vocab: &Vocabulary,
    n_list: &[usize],
    sim: &dyn Similarity,
) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::invalid("accuracy over an empty record set"));
    }
    let predictions = records
        .iter()
        .map(|r| mapper.video_to_text(&r.video))
        .collect::<Result<Vec<_>>>()?;
    let classes: Vec<&ClassLabel> = records.iter().map(|r| &r.class).collect();
    accuracies_from_predictions(&predictions, &classes, vocab, n_list, sim)
}

pub fn top_n_accuracy(
    mapper: &dyn CrossModalMapper,
    records: &[PairedRecord],
    vocab: &Vocabulary,
    n: usize,
) -> Result<f64> {
    Ok(top_n_accuracies(mapper, records, vocab, &[n], &Cosine)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub split: String,
    pub records: usize,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnnoRow {
    pub mapper: String,
    pub direction: Direction,
    pub k: usize,
    /// mNNO between inputs and mapped outputs.
    pub x_fx: f64,
    /// mNNO between ground-truth targets and mapped outputs.
    pub y_fx: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub vocabulary_size: usize,
    pub similarity: String,
    pub n_list: Vec<usize>,
    pub accuracy: Vec<AccuracyRow>,
    pub mnno: Vec<MnnoRow>,
}

pub fn accuracy_row(
    mapper: &dyn CrossModalMapper,
    split: &str,
    records: &[PairedRecord],
    vocab: &Vocabulary,
    n_list: &[usize],
    sim: &dyn Similarity,
) -> Result<AccuracyRow> {
    Ok(AccuracyRow {
        split: split.into(),
        records: records.len(),
        accuracies: top_n_accuracies(mapper, records, vocab, n_list, sim)?,
    })
}

/// Accuracy on classes the mapper never trained on. Any overlap with the
/// mapper's class manifest is rejected.
pub fn zero_shot_eval(
    mapper: &dyn CrossModalMapper,
    unseen_records: &[PairedRecord],
    vocab: &Vocabulary,
    n_list: &[usize],
    sim: &dyn Similarity,
) -> Result<EvalReport> {
    let manifest: BTreeSet<&str> = mapper.class_manifest().iter().map(String::as_str).collect();
    if manifest.is_empty() {
        return Err(Error::invalid(
            "the model carries no training class manifest; zero-shot disjointness cannot be checked",
        ));
    }
    let overlap: BTreeSet<&str> = unseen_records
        .iter()
        .map(|r| r.class.name.as_str())
        .filter(|c| manifest.contains(c))
        .collect();
    if !overlap.is_empty() {
        return Err(Error::invalid(format!(
            "zero-shot records include training classes: {}",
            overlap.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(EvalReport {
        vocabulary_size: vocab.len(),
        similarity: sim.name().into(),
        n_list: n_list.to_vec(),
        accuracy: vec![accuracy_row(mapper, "unseen", unseen_records, vocab, n_list, sim)?],
        mnno: Vec::new(),
    })
}

/// Mean top-n accuracy of `trials` untrained autoencoders on `records`.
pub fn simulated_chance(
    arch: &ArchConfig,
    records: &[PairedRecord],
    vocab: &Vocabulary,
    n_list: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(Error::invalid("chance simulation needs at least one trial"));
    }
    let mut mean = vec![0.0; n_list.len()];
    for trial in 0..trials {
        let mut model = CrossModalAutoencoder::new(arch.clone(), seed.wrapping_add(trial as u64))?;
        model.set_mode(Mode::Eval);
        let acc = top_n_accuracies(&model, records, vocab, n_list, &Cosine)?;
        mean.iter_mut().zip(acc).for_each(|(m, a)| *m += a / trials as f64);
    }
    Ok(mean)
}

/// K nearest neighbours of every point within its own set, excluding itself.
pub fn neighborhoods<V: AsRef<[f64]>>(set: &[V], k: usize, sim: &dyn Similarity) -> Result<Vec<Vec<usize>>> {
    let n = set.len();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("mNNO needs 1 <= K < N, got K = {k}, N = {n}")));
    }
    (0..n)
        .map(|i| {
            let others: Vec<&[f64]> = (0..n).filter(|&j| j != i).map(|j| set[j].as_ref()).collect();
            let top = top_k_indices(set[i].as_ref(), &others, k, sim)?;
            Ok(top.into_iter().map(|j| if j < i { j } else { j + 1 }).collect())
        })
        .collect()
}

/// `(1 / KN) Σ_i |N_K(v_i) ∩ N_K(z_i)|` with pairing by index.
pub fn mnno<V: AsRef<[f64]>, Z: AsRef<[f64]>>(
    v: &[V],
    z: &[Z],
    k: usize,
    sim: &dyn Similarity,
) -> Result<f64> {
    if v.len() != z.len() {
        return Err(Error::invalid(format!(
            "mNNO sets differ in size: {} vs {}",
            v.len(),
            z.len()
        )));
    }
    let nv = neighborhoods(v, k, sim)?;
    let nz = neighborhoods(z, k, sim)?;
    let shared: usize = nv
        .iter()
        .zip(&nz)
        .map(|(a, b)| {
            let b: BTreeSet<usize> = b.iter().copied().collect();
            a.iter().filter(|i| b.contains(i)).count()
        })
        .sum();
    Ok(shared as f64 / (k * v.len()) as f64)
}

/// `(X, f(X))` and `(Y, f(X))` entries for both mapping directions.
pub fn mnno_report(
    mapper: &dyn CrossModalMapper,
    records: &[PairedRecord],
    k: usize,
    sim: &dyn Similarity,
) -> Result<Vec<MnnoRow>> {
    Direction::BOTH
        .iter()
        .map(|&dir| {
            let (xs, ys): (Vec<&[f64]>, Vec<&[f64]>) = records.iter().map(|r| dir.pair(r)).unzip();
            let fx = xs.iter().map(|x| mapper.map(dir, x)).collect::<Result<Vec<_>>>()?;
            Ok(MnnoRow {
                mapper: mapper.kind().into(),
                direction: dir,
                k,
                x_fx: mnno(&xs, &fx, k, sim)?,
                y_fx: mnno(&ys, &fx, k, sim)?,
            })
        })
        .collect()
}

impl EvalReport {
    /// Long-format CSV: `section,name,metric,value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["section", "name", "metric", "value"])?;
        out.write_record(["meta", "vocabulary", "size", &self.vocabulary_size.to_string()])?;
        out.write_record(["meta", "similarity", "name", &self.similarity])?;
        for row in &self.accuracy {
            out.write_record(["accuracy", &row.split, "records", &row.records.to_string()])?;
            for (n, a) in self.n_list.iter().zip(&row.accuracies) {
                out.write_record(["accuracy", &row.split, &format!("top-{n}"), &a.to_string()])?;
            }
        }
        for row in &self.mnno {
            let name = format!("{} {}", row.mapper, row.direction.label());
            out.write_record(["mnno", &name, "K", &row.k.to_string()])?;
            out.write_record(["mnno", &name, "X,f(X)", &row.x_fx.to_string()])?;
            out.write_record(["mnno", &name, "Y,f(X)", &row.y_fx.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("report csv", e))?;
        Ok(())
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        if !self.accuracy.is_empty() {
            let _ = writeln!(
                s,
                "Top-N accuracy ({} similarity, vocabulary of {} words)",
                self.similarity, self.vocabulary_size
            );
            let _ = write!(s, "{:<10} {:>8}", "split", "records");
            for n in &self.n_list {
                let _ = write!(s, " {:>8}", format!("top-{n}"));
            }
            s.push('\n');
            for row in &self.accuracy {
                let _ = write!(s, "{:<10} {:>8}", row.split, row.records);
                for a in &row.accuracies {
                    let _ = write!(s, " {a:>8.4}");
                }
                s.push('\n');
            }
        }
        if !self.mnno.is_empty() {
            if !s.is_empty() {
                s.push('\n');
            }
            let _ = writeln!(s, "Mean nearest neighbour overlap");
            let _ = writeln!(s, "{:<12} {:<9} {:>3} {:>8} {:>8}", "mapper", "direction", "K", "X,f(X)", "Y,f(X)");
            for r in &self.mnno {
                let _ = writeln!(
                    s,
                    "{:<12} {:<9} {:>3} {:>8.4} {:>8.4}",
                    r.mapper,
                    r.direction.label(),
                    r.k,
                    r.x_fx,
                    r.y_fx
                );
            }
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let csv_path = dir.join("report.csv");
        let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.to_table()).map_err(|e| Error::io(&txt, e))
    }
}
