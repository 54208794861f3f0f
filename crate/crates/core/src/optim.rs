//! Adam with weight decay, negative sampling and the training loop with
//! best-on-validation model selection.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{class_names, PairedRecord, SplitDataset};
use crate::error::{ensure_dim, Error, Result};
use crate::losses::{total_loss, LossBreakdown, LossOperands, LossWeights};
use crate::model::{CrossModalAutoencoder, ModelGrads};
use crate::nn::Mode;
use crate::numerics::SeededRng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayMode {
    /// `g ← g + λ·θ` before the moment updates.
    #[default]
    L2,
    /// `θ ← θ − lr·λ·θ` applied next to the Adam update.
    Decoupled,
}

impl std::str::FromStr for DecayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(DecayMode::L2),
            "decoupled" => Ok(DecayMode::Decoupled),
            other => Err(Error::invalid(format!(
                "unknown weight decay mode '{other}' (expected l2 or decoupled)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
            decay_mode: DecayMode::L2,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate {} must be >= 0", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                problems.push(format!("{name} {b} must lie in [0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            problems.push(format!("eps {} must be > 0", self.eps));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            problems.push(format!("weight_decay {} must be >= 0", self.weight_decay));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// First and second moments per parameter slice, and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(shapes: impl IntoIterator<Item = usize>) -> Self {
        let shapes: Vec<usize> = shapes.into_iter().collect();
        AdamState {
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_params(params: &[&[f64]]) -> Self {
        Self::new(params.iter().map(|p| p.len()))
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update over a list of parameter slices.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Contract(format!(
            "adam: {} parameter slices, {} gradient slices, {} state slices",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first[i].len() {
            return Err(Error::Contract(format!(
                "adam: slice {i} has {} params, {} grads, {} moments",
                p.len(),
                g.len(),
                state.first[i].len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[i];
        let u = &mut state.second[i];
        for k in 0..p.len() {
            let mut gk = g[k];
            if cfg.decay_mode == DecayMode::L2 {
                gk += cfg.weight_decay * p[k];
            }
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            u[k] = cfg.beta2 * u[k] + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m[k] / c1;
            let u_hat = u[k] / c2;
            let mut delta = m_hat / (u_hat.sqrt() + cfg.eps);
            if cfg.decay_mode == DecayMode::Decoupled {
                delta += cfg.weight_decay * p[k];
            }
            p[k] -= cfg.learning_rate * delta;
        }
    }
    Ok(())
}

/// Pool indices of an unpaired video and text: the video comes from a class
/// other than the positive's, the text from a class other than the video's
/// (and, with three or more classes, other than the positive's too).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativePair {
    pub video: usize,
    pub text: usize,
}

pub struct NegativeSampler<'a> {
    pool: &'a [PairedRecord],
    n_classes: usize,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(pool: &'a [PairedRecord]) -> Result<Self> {
        let n_classes = class_names(pool).len();
        if n_classes < 2 {
            return Err(Error::invalid(
                "negative sampling needs records from at least two classes",
            ));
        }
        Ok(NegativeSampler { pool, n_classes })
    }

    /// Uniform over records whose class is not `positive_class`.
    pub fn sample_index(&self, positive_class: &str, rng: &mut SeededRng) -> usize {
        // rejection sampling keeps the draw uniform over eligible records
        loop {
            let i = rng.below(self.pool.len());
            if self.pool[i].class.name != positive_class {
                return i;
            }
        }
    }

    pub fn sample(&self, positive_class: &str, rng: &mut SeededRng) -> &'a PairedRecord {
        &self.pool[self.sample_index(positive_class, rng)]
    }

    pub fn sample_pair(&self, positive_class: &str, rng: &mut SeededRng) -> NegativePair {
        let video = self.sample_index(positive_class, rng);
        let video_class = self.pool[video].class.name.as_str();
        let text = loop {
            let j = rng.below(self.pool.len());
            let c = self.pool[j].class.name.as_str();
            if c != video_class && (self.n_classes < 3 || c != positive_class) {
                break j;
            }
        };
        NegativePair { video, text }
    }

    pub fn vectors(&self, pair: NegativePair) -> (&'a [f64], &'a [f64]) {
        (&self.pool[pair.video].video, &self.pool[pair.text].text)
    }
}

pub fn sample_negative<'a>(
    records: &'a [PairedRecord],
    positive_class: &str,
    rng: &mut SeededRng,
) -> Result<&'a PairedRecord> {
    let sampler = NegativeSampler::new(records)?;
    if records.iter().all(|r| r.class.name == positive_class) {
        return Err(Error::invalid(format!("every record has class '{positive_class}'")));
    }
    Ok(sampler.sample(positive_class, rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub weights: LossWeights,
    pub seed: u64,
    /// Multiply the learning rate by `lr_decay_factor` every this many
    /// epochs; 0 keeps it constant.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 300,
            weights: LossWeights::default(),
            seed: 0,
            lr_decay_every: 0,
            lr_decay_factor: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = match self.adam.validate() {
            Err(Error::Config(p)) => p,
            _ => Vec::new(),
        };
        if !(self.adam.learning_rate > 0.0) {
            problems.push("learning_rate must be > 0".into());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".into());
        }
        if let Err(e) = self.weights.validate() {
            problems.push(e.to_string());
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            problems.push(format!("lr_decay_factor {} must lie in (0, 1]", self.lr_decay_factor));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_every {
            0 => self.adam.learning_rate,
            k => self.adam.learning_rate * self.lr_decay_factor.powi((epoch / k) as i32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean per-term training losses over the epoch.
    pub components: LossBreakdown,
    /// Mean per-dimension variance of video latents over the validation set.
    pub latent_variance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch).map(|r| r.val_loss)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "epoch",
            "train_loss",
            "val_loss",
            "recons",
            "joint",
            "cross",
            "rank",
            "latent_variance",
        ])?;
        for r in &self.epochs {
            out.write_record(&[
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.components.recons.to_string(),
                r.components.joint.to_string(),
                r.components.cross.to_string(),
                r.components.rank.to_string(),
                r.latent_variance.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("history csv", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// One positive pair and, optionally, its negative pair.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub video: &'a [f64],
    pub text: &'a [f64],
    pub negative: Option<(&'a [f64], &'a [f64])>,
}

/// Mean loss and mean parameter gradient over a batch. Samples are processed
/// in order, each drawing its dropout masks from `rng`.
pub fn batch_gradient(
    model: &CrossModalAutoencoder,
    batch: &[Sample<'_>],
    weights: &LossWeights,
    rng: &mut SeededRng,
) -> Result<(LossBreakdown, ModelGrads)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut grads = ModelGrads::zeros_for(model);
    let mut loss = LossBreakdown::default();
    for s in batch {
        let fwd = model.pair_forward(s.video, s.text, rng)?;
        let neg = match s.negative {
            Some((v, t)) => Some(model.negative_forward(v, t, rng)?),
            None => None,
        };
        let ops = LossOperands::from_forward(s.video, s.text, &fwd, neg.as_ref());
        let (b, out) = total_loss(&ops, weights, true)?;
        model.backward(&fwd, neg.as_ref(), &out.expect("requested"), &mut grads)?;
        loss.add_scaled(&b, 1.0);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    let mut mean = LossBreakdown::default();
    mean.add_scaled(&loss, inv);
    Ok((mean, grads))
}

/// Mean per-dimension variance of video latents (Eval mode) across records.
pub fn latent_variance(model: &CrossModalAutoencoder, records: &[PairedRecord]) -> Result<f64> {
    if records.len() < 2 {
        return Err(Error::invalid("latent variance needs at least two records"));
    }
    let latents = records
        .iter()
        .map(|r| model.encode_video(&r.video))
        .collect::<Result<Vec<_>>>()?;
    let z = latents[0].len();
    let n = latents.len() as f64;
    let mut total = 0.0;
    for k in 0..z {
        let mean = latents.iter().map(|l| l[k]).sum::<f64>() / n;
        total += latents.iter().map(|l| (l[k] - mean).powi(2)).sum::<f64>() / n;
    }
    Ok(total / z as f64)
}

/// Mean weighted objective over `records` in Eval mode. `negatives[i]` is the
/// negative pair for `records[i]`, indexing `pool`.
pub fn evaluate_loss(
    model: &CrossModalAutoencoder,
    records: &[PairedRecord],
    pool: &[PairedRecord],
    negatives: Option<&[NegativePair]>,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let mut eval_model = model.clone();
    eval_model.set_mode(Mode::Eval);
    let mut rng = SeededRng::new(0); // unused in Eval mode
    let mut acc = LossBreakdown::default();
    for (i, r) in records.iter().enumerate() {
        let fwd = eval_model.pair_forward(&r.video, &r.text, &mut rng)?;
        let neg = match negatives {
            Some(pairs) => {
                let NegativePair { video, text } = pairs[i];
                Some(eval_model.negative_forward(&pool[video].video, &pool[text].text, &mut rng)?)
            }
            None => None,
        };
        let ops = LossOperands::from_forward(&r.video, &r.text, &fwd, neg.as_ref());
        let (b, _) = total_loss(&ops, weights, false)?;
        acc.add_scaled(&b, 1.0);
    }
    let mut mean = LossBreakdown::default();
    mean.add_scaled(&acc, 1.0 / records.len() as f64);
    Ok(mean)
}

/// Trains `model` and returns the snapshot with the lowest validation loss
/// (in Eval mode, with the training class manifest attached).
pub fn train(
    mut model: CrossModalAutoencoder,
    data: &SplitDataset,
    cfg: &TrainConfig,
) -> Result<(CrossModalAutoencoder, TrainHistory)> {
    cfg.validate()?;
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::invalid("training needs non-empty train and validation splits"));
    }
    let dims = model.dims();
    for r in data.train.iter().chain(&data.validation) {
        ensure_dim("dataset video features vs model C", dims.c, r.video.len())?;
        ensure_dim("dataset text vectors vs model D", dims.d, r.text.len())?;
    }
    let use_negatives = cfg.weights.rank > 0.0;
    let sampler = if use_negatives {
        Some(NegativeSampler::new(&data.train)?)
    } else {
        None
    };

    let root = SeededRng::new(cfg.seed).substream("train");
    let mut shuffle_rng = root.substream("shuffle");
    let mut dropout_rng = root.substream("dropout");
    let mut negative_rng = root.substream("negatives");

    // one fixed negative per validation record for the whole run
    let val_negatives: Option<Vec<NegativePair>> = sampler.as_ref().map(|s| {
        let mut rng = root.substream("validation-negatives");
        data.validation
            .iter()
            .map(|r| s.sample_pair(&r.class.name, &mut rng))
            .collect()
    });

    model.set_class_manifest(data.train_classes());
    model.set_mode(Mode::Train);
    let mut state = AdamState::for_params(&model.param_slices());
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, CrossModalAutoencoder)> = None;

    for epoch in 0..cfg.epochs {
        let adam = AdamConfig {
            learning_rate: cfg.learning_rate_at(epoch),
            ..cfg.adam
        };
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = LossBreakdown::default();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| {
                    let r = &data.train[i];
                    Sample {
                        video: &r.video,
                        text: &r.text,
                        negative: sampler
                            .as_ref()
                            .map(|s| s.vectors(s.sample_pair(&r.class.name, &mut negative_rng))),
                    }
                })
                .collect();
            let (loss, grads) = batch_gradient(&model, &batch, &cfg.weights, &mut dropout_rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    components: loss.to_string(),
                });
            }
            epoch_loss.add_scaled(&loss, chunk.len() as f64 / data.train.len() as f64);
            adam_step(&mut model.param_slices_mut(), &grads.slices(), &mut state, &adam)?;
        }

        model.set_mode(Mode::Eval);
        let val = evaluate_loss(
            &model,
            &data.validation,
            &data.train,
            val_negatives.as_deref(),
            &cfg.weights,
        )?;
        let variance = if data.validation.len() >= 2 {
            latent_variance(&model, &data.validation)?
        } else {
            0.0
        };
        if !val.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                batch: usize::MAX,
                components: format!("validation {val}"),
            });
        }
        if best.as_ref().is_none_or(|(b, _)| val.total < *b) {
            best = Some((val.total, model.clone()));
            history.best_epoch = epoch;
        }
        model.set_mode(Mode::Train);
        log::debug!(
            "epoch {epoch}: train {:.6} val {:.6} latent var {:.3e}",
            epoch_loss.total,
            val.total,
            variance
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss.total,
            val_loss: val.total,
            components: epoch_loss,
            latent_variance: variance,
        });
    }
    let (_, mut best_model) = best.expect("at least one epoch");
    best_model.set_mode(Mode::Eval);
    Ok((best_model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_records, make_splits, synth_generate};
    use crate::model::{ArchConfig, ModelDims};

    /// Textbook Adam written out per scalar, independent of `adam_step`.
    fn reference_adam(
        mut w: Vec<f64>,
        grad: impl Fn(&[f64]) -> Vec<f64>,
        lr: f64,
        steps: usize,
    ) -> Vec<Vec<f64>> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut m = vec![0.0; w.len()];
        let mut v = vec![0.0; w.len()];
        let mut trace = Vec::new();
        for t in 1..=steps {
            let g = grad(&w);
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(t as i32));
                let vh = v[i] / (1.0 - b2.powi(t as i32));
                w[i] -= lr * mh / (vh.sqrt() + eps);
            }
            trace.push(w.clone());
        }
        trace
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new([2]);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        adam_step(&mut [&mut p[..]], &[&[0.0, 0.0][..]], &mut st, &cfg).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = vec![0.5, 0.25];
        let mut st = AdamState::new([2]);
        let cfg = AdamConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        adam_step(&mut [&mut p[..]], &[&[3.0, -1.0][..]], &mut st, &cfg).unwrap();
        assert_eq!(p, vec![0.5, 0.25]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = [0.0];
        let mut st = AdamState::new([1]);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut st, &cfg).unwrap();
        assert!((p[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch_is_contract_violation() {
        let mut p = [0.0, 1.0];
        let mut st = AdamState::new([2]);
        let r = adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut st, &AdamConfig::default());
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn matches_reference_trace() {
        let target = [1.5, -0.5, 3.0];
        let grad = |w: &[f64]| w.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect::<Vec<_>>();
        let expected = reference_adam(vec![0.0; 3], grad, 0.01, 100);
        let mut w = vec![0.0; 3];
        let mut st = AdamState::new([3]);
        let cfg = AdamConfig {
            learning_rate: 0.01,
            weight_decay: 0.0,
            ..Default::default()
        };
        for step in expected {
            let g = grad(&w);
            adam_step(&mut [&mut w[..]], &[&g[..]], &mut st, &cfg).unwrap();
            for (a, b) in w.iter().zip(&step) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn decay_modes_differ() {
        let cfg_l2 = AdamConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let cfg_dec = AdamConfig {
            decay_mode: DecayMode::Decoupled,
            ..cfg_l2
        };
        let run = |cfg: &AdamConfig| {
            let mut p = [2.0];
            let mut st = AdamState::new([1]);
            for _ in 0..3 {
                adam_step(&mut [&mut p[..]], &[&[0.0][..]], &mut st, cfg).unwrap();
            }
            p[0]
        };
        let a = run(&cfg_l2);
        let b = run(&cfg_dec);
        assert!(a < 2.0 && b < 2.0);
        assert_ne!(a, b);
        // decoupled: p ← p(1 − lr·λ) each step, exactly
        assert!((b - 2.0 * (1.0f64 - 1e-4).powi(3)).abs() < 1e-15);
    }

    fn tiny_dataset(classes: usize, per: usize, seed: u64) -> SplitDataset {
        let data = synth_generate(classes, per, 6, 4, 0.05, seed).unwrap();
        let recs = build_records(&data.rows, &data.table).unwrap().value;
        make_splits(&recs, seed, 0, [0.6, 0.2, 0.2]).unwrap()
    }

    #[test]
    fn negatives_come_from_other_classes() {
        let data = tiny_dataset(2, 10, 1);
        let mut rng = SeededRng::new(4);
        for r in &data.train {
            for _ in 0..5 {
                let n = sample_negative(&data.train, &r.class.name, &mut rng).unwrap();
                assert_ne!(n.class.name, r.class.name);
            }
        }
        let one = tiny_dataset(1, 5, 1);
        assert!(sample_negative(&one.train, "class_0", &mut rng).is_err());
    }

    #[test]
    fn negative_class_frequencies_are_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let data = synth_generate(6, 10, 3, 2, 0.1, 2).unwrap();
        let recs = build_records(&data.rows, &data.table).unwrap().value;
        let mut rng = SeededRng::new(99);
        let mut counts = std::collections::BTreeMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            let n = sample_negative(&recs, "class_0", &mut rng).unwrap();
            *counts.entry(n.class.name.clone()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 5);
        let expected = draws as f64 / 5.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2} p {p}");
    }

    fn small_model(dropout: f64, seed: u64) -> CrossModalAutoencoder {
        CrossModalAutoencoder::new(ArchConfig::new(ModelDims { c: 6, d: 4, z: 3 }, dropout), seed).unwrap()
    }

    #[test]
    fn batch_gradient_is_mean_of_sample_gradients() {
        let data = tiny_dataset(3, 5, 3);
        let model = small_model(0.0, 1);
        let w = LossWeights::new(1.0, 0.5, 1.0, 1.0);
        let samples: Vec<Sample> = data.train[..3]
            .iter()
            .zip(data.train[3..6].iter())
            .map(|(r, n)| Sample {
                video: &r.video,
                text: &r.text,
                negative: Some((&n.video, &n.text)),
            })
            .collect();
        let mut rng = SeededRng::new(0);
        let (_, batch) = batch_gradient(&model, &samples, &w, &mut rng).unwrap();
        let mut oracle = ModelGrads::zeros_for(&model);
        for s in &samples {
            let (_, g) = batch_gradient(&model, std::slice::from_ref(s), &w, &mut rng).unwrap();
            oracle.add_scaled(&g, 1.0 / 3.0);
        }
        for (a, b) in batch.slices().iter().zip(oracle.slices()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn one_epoch_reduces_training_loss() {
        let mut data = tiny_dataset(2, 4, 5);
        // four training samples, validation reuses them
        data.train.append(&mut data.test);
        data.train.truncate(4);
        data.validation = data.train.clone();
        let w = LossWeights::new(1.0, 0.0, 0.0, 0.0);
        let cfg = TrainConfig {
            adam: AdamConfig {
                learning_rate: 1e-3,
                ..Default::default()
            },
            batch_size: 1,
            epochs: 1,
            weights: w,
            seed: 2,
            ..Default::default()
        };
        let model = small_model(0.0, 4);
        let before = evaluate_loss(&model, &data.train, &data.train, None, &w).unwrap().total;
        let (trained, hist) = train(model, &data, &cfg).unwrap();
        let after = evaluate_loss(&trained, &data.train, &data.train, None, &w).unwrap().total;
        assert!(after < before, "{after} !< {before}");
        assert_eq!(hist.epochs.len(), 1);
    }

    #[test]
    fn training_is_deterministic_and_selects_best() {
        let data = tiny_dataset(3, 8, 6);
        let cfg = TrainConfig {
            batch_size: 4,
            epochs: 6,
            weights: LossWeights::new(1.0, 0.0, 1.0, 1.0),
            seed: 11,
            ..Default::default()
        };
        let (m1, h1) = train(small_model(0.5, 7), &data, &cfg).unwrap();
        let (m2, h2) = train(small_model(0.5, 7), &data, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1.to_bytes().unwrap(), m2.to_bytes().unwrap());
        let min = h1.epochs.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(h1.best_val_loss(), Some(min));
        let negs: Vec<NegativePair> = {
            let root = SeededRng::new(cfg.seed).substream("train");
            let mut rng = root.substream("validation-negatives");
            let s = NegativeSampler::new(&data.train).unwrap();
            data.validation.iter().map(|r| s.sample_pair(&r.class.name, &mut rng)).collect()
        };
        let recomputed = evaluate_loss(&m1, &data.validation, &data.train, Some(&negs), &cfg.weights).unwrap();
        assert_eq!(recomputed.total, min);
        assert_eq!(m1.class_manifest(), data.train_classes().as_slice());
    }

    #[test]
    fn all_zero_weights_rejected() {
        let data = tiny_dataset(2, 5, 1);
        let cfg = TrainConfig {
            weights: LossWeights::new(0.0, 0.0, 0.0, 0.0),
            epochs: 1,
            ..Default::default()
        };
        assert!(matches!(train(small_model(0.0, 0), &data, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn history_csv_has_one_row_per_epoch() {
        let data = tiny_dataset(2, 6, 2);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            ..Default::default()
        };
        let (_, h) = train(small_model(0.0, 1), &data, &cfg).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("epoch,train_loss,val_loss,recons,joint,cross,rank,latent_variance"));
    }
}
