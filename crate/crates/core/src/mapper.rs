//! Trained cross-modal maps behind one trait: the autoencoder and the
//! feed-forward baseline. Trainers are registered by name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::data::{PairedRecord, SplitDataset};
use crate::error::{ensure_dim, Error, Result};
use crate::losses::LossBreakdown;
use crate::model::{ArchConfig, CrossModalAutoencoder, ModelDims, ARTIFACT_KIND};
use crate::nn::{Mlp, MlpGrads, MlpSpec, Mode};
use crate::numerics::SeededRng;
use crate::optim::{adam_step, train, AdamState, EpochRecord, TrainConfig, TrainHistory};

pub const FF_KIND: &str = "ff";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    VideoToText,
    TextToVideo,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::VideoToText, Direction::TextToVideo];

    pub fn label(self) -> &'static str {
        match self {
            Direction::VideoToText => "V->T",
            Direction::TextToVideo => "T->V",
        }
    }

    /// `(input, target)` of a record in this direction.
    pub fn pair(self, r: &PairedRecord) -> (&[f64], &[f64]) {
        match self {
            Direction::VideoToText => (&r.video, &r.text),
            Direction::TextToVideo => (&r.text, &r.video),
        }
    }
}

pub trait CrossModalMapper: Send + Sync {
    fn kind(&self) -> &'static str;
    /// `(C, D)`.
    fn modal_dims(&self) -> (usize, usize);
    fn video_to_text(&self, v: &[f64]) -> Result<Vec<f64>>;
    fn text_to_video(&self, t: &[f64]) -> Result<Vec<f64>>;
    /// Classes seen during training.
    fn class_manifest(&self) -> &[String];
    fn to_bytes(&self) -> Result<Vec<u8>>;

    fn map(&self, direction: Direction, x: &[f64]) -> Result<Vec<f64>> {
        match direction {
            Direction::VideoToText => self.video_to_text(x),
            Direction::TextToVideo => self.text_to_video(x),
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }
}

impl CrossModalMapper for CrossModalAutoencoder {
    fn kind(&self) -> &'static str {
        ARTIFACT_KIND
    }

    fn modal_dims(&self) -> (usize, usize) {
        let ModelDims { c, d, .. } = self.dims();
        (c, d)
    }

    fn video_to_text(&self, v: &[f64]) -> Result<Vec<f64>> {
        CrossModalAutoencoder::video_to_text(self, v)
    }

    fn text_to_video(&self, t: &[f64]) -> Result<Vec<f64>> {
        CrossModalAutoencoder::text_to_video(self, t)
    }

    fn class_manifest(&self) -> &[String] {
        CrossModalAutoencoder::class_manifest(self)
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        CrossModalAutoencoder::to_bytes(self)
    }
}

/// Two independent single-hidden-layer maps, one per direction.
#[derive(Debug, Clone)]
pub struct FfBaseline {
    pub video_to_text: Mlp,
    pub text_to_video: Mlp,
    pub seed: u64,
    pub class_manifest: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct FfHeader {
    kind: String,
    #[serde(rename = "C")]
    c: usize,
    #[serde(rename = "D")]
    d: usize,
    seed: u64,
    networks: Vec<MlpSpec>,
    class_manifest: Vec<String>,
}

/// Hidden size `⌈(in + out) / 2⌉`.
pub fn ff_spec(in_dim: usize, out_dim: usize) -> Result<MlpSpec> {
    MlpSpec::new(vec![in_dim, (in_dim + out_dim).div_ceil(2), out_dim], 0.0)
}

impl FfBaseline {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (FfHeader, Vec<f64>) = container::decode(bytes)?;
        if h.kind != FF_KIND {
            return Err(Error::invalid(format!("artifact kind '{}' is not '{FF_KIND}'", h.kind)));
        }
        let [a, b]: [MlpSpec; 2] = h.networks.try_into().map_err(|n: Vec<MlpSpec>| Error::Parse {
            location: "baseline header".into(),
            message: format!("expected 2 networks, found {}", n.len()),
        })?;
        ensure_dim("baseline parameter count", a.param_count() + b.param_count(), payload.len())?;
        let (pa, pb) = payload.split_at(a.param_count());
        let mut v2t = Mlp::from_flat(a, pa)?;
        let mut t2v = Mlp::from_flat(b, pb)?;
        ensure_dim("baseline V->T input", h.c, v2t.in_dim())?;
        ensure_dim("baseline V->T output", h.d, v2t.out_dim())?;
        ensure_dim("baseline T->V input", h.d, t2v.in_dim())?;
        ensure_dim("baseline T->V output", h.c, t2v.out_dim())?;
        v2t.set_mode(Mode::Eval);
        t2v.set_mode(Mode::Eval);
        Ok(FfBaseline {
            video_to_text: v2t,
            text_to_video: t2v,
            seed: h.seed,
            class_manifest: h.class_manifest,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }
}

impl CrossModalMapper for FfBaseline {
    fn kind(&self) -> &'static str {
        FF_KIND
    }

    fn modal_dims(&self) -> (usize, usize) {
        (self.video_to_text.in_dim(), self.video_to_text.out_dim())
    }

    fn video_to_text(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.video_to_text.infer(v)
    }

    fn text_to_video(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.text_to_video.infer(t)
    }

    fn class_manifest(&self) -> &[String] {
        &self.class_manifest
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let (c, d) = self.modal_dims();
        let header = FfHeader {
            kind: FF_KIND.into(),
            c,
            d,
            seed: self.seed,
            networks: vec![
                self.video_to_text.spec().clone(),
                self.text_to_video.spec().clone(),
            ],
            class_manifest: self.class_manifest.clone(),
        };
        let mut payload = self.video_to_text.flat_params();
        payload.extend(self.text_to_video.flat_params());
        container::encode(&header, &payload)
    }
}

/// Per-epoch `(train, validation)` mean squared error of a regression fit.
pub type RegressionTrace = Vec<(f64, f64)>;

fn mean_squared_error(net: &Mlp, pairs: &[(&[f64], &[f64])]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in pairs {
        let p = net.infer(x)?;
        total += p.iter().zip(*y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total / pairs.len() as f64)
}

/// Fits `net` to `(input, target)` pairs with squared error and Adam, keeping
/// the parameters with the lowest validation error (training error when no
/// validation pairs are given).
pub fn fit_regressor(
    mut net: Mlp,
    train_pairs: &[(&[f64], &[f64])],
    validation_pairs: &[(&[f64], &[f64])],
    cfg: &TrainConfig,
    rng: &SeededRng,
) -> Result<(Mlp, RegressionTrace)> {
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::invalid("baseline training needs a non-empty train split"));
    }
    for (x, y) in train_pairs.iter().chain(validation_pairs) {
        ensure_dim("baseline input", net.in_dim(), x.len())?;
        ensure_dim("baseline target", net.out_dim(), y.len())?;
    }
    let mut shuffle_rng = rng.substream("shuffle");
    let mut dropout_rng = rng.substream("dropout");
    net.set_mode(Mode::Train);
    let mut state = AdamState::for_params(&net.param_slices());
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Mlp)> = None;
    for epoch in 0..cfg.epochs {
        let adam = crate::optim::AdamConfig {
            learning_rate: cfg.learning_rate_at(epoch),
            ..cfg.adam
        };
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = MlpGrads::zeros_for(net.spec());
            let mut batch_loss = 0.0;
            for &i in chunk {
                let (x, y) = train_pairs[i];
                let (p, cache) = net.forward(x, &mut dropout_rng)?;
                let residual: Vec<f64> = p.iter().zip(y).map(|(a, b)| a - b).collect();
                batch_loss += residual.iter().map(|r| r * r).sum::<f64>();
                let g: Vec<f64> = residual.iter().map(|r| 2.0 * r).collect();
                net.backward_into(&cache, &g, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    components: format!("squared error {batch_loss}"),
                });
            }
            grads.scale(1.0 / chunk.len() as f64);
            epoch_loss += batch_loss;
            adam_step(&mut net.param_slices_mut(), &grads.slices(), &mut state, &adam)?;
        }
        let train_mse = epoch_loss / train_pairs.len() as f64;
        let val_mse = if validation_pairs.is_empty() {
            mean_squared_error(&net, train_pairs)?
        } else {
            mean_squared_error(&net, validation_pairs)?
        };
        if best.as_ref().is_none_or(|(b, _)| val_mse < *b) {
            best = Some((val_mse, net.clone()));
        }
        trace.push((train_mse, val_mse));
    }
    let (_, mut net) = best.expect("at least one epoch");
    net.set_mode(Mode::Eval);
    Ok((net, trace))
}

/// Trains the baseline map for one direction on the train split.
pub fn fit_ff_direction(
    train_records: &[PairedRecord],
    validation_records: &[PairedRecord],
    direction: Direction,
    cfg: &TrainConfig,
) -> Result<(Mlp, RegressionTrace)> {
    let first = train_records
        .first()
        .ok_or_else(|| Error::invalid("baseline training needs a non-empty train split"))?;
    let (x, y) = direction.pair(first);
    let spec = ff_spec(x.len(), y.len())?;
    let root = SeededRng::new(cfg.seed).substream("ff").substream(direction.label());
    let net = Mlp::init(&spec, &mut root.substream("init"))?;
    let train_pairs: Vec<_> = train_records.iter().map(|r| direction.pair(r)).collect();
    let val_pairs: Vec<_> = validation_records.iter().map(|r| direction.pair(r)).collect();
    fit_regressor(net, &train_pairs, &val_pairs, cfg, &root)
}

/// Both directions. History rows carry the summed squared errors.
pub fn fit_ff_baseline(data: &SplitDataset, cfg: &TrainConfig) -> Result<(FfBaseline, TrainHistory)> {
    let (v2t, tr_a) = fit_ff_direction(&data.train, &data.validation, Direction::VideoToText, cfg)?;
    let (t2v, tr_b) = fit_ff_direction(&data.train, &data.validation, Direction::TextToVideo, cfg)?;
    let mut history = TrainHistory::default();
    for (epoch, (a, b)) in tr_a.iter().zip(&tr_b).enumerate() {
        let train_loss = a.0 + b.0;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: a.1 + b.1,
            components: LossBreakdown {
                total: train_loss,
                ..Default::default()
            },
            latent_variance: 0.0,
        });
    }
    history.best_epoch = history
        .epochs
        .iter()
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
        .map_or(0, |r| r.epoch);
    let baseline = FfBaseline {
        video_to_text: v2t,
        text_to_video: t2v,
        seed: cfg.seed,
        class_manifest: data.train_classes(),
    };
    Ok((baseline, history))
}

pub trait MapperTrainer: Send + Sync {
    fn name(&self) -> &'static str;
    fn train(
        &self,
        arch: &ArchConfig,
        data: &SplitDataset,
        cfg: &TrainConfig,
    ) -> Result<(Box<dyn CrossModalMapper>, TrainHistory)>;
}

pub struct AutoencoderTrainer;
pub struct FfTrainer;

impl MapperTrainer for AutoencoderTrainer {
    fn name(&self) -> &'static str {
        "ae"
    }

    fn train(
        &self,
        arch: &ArchConfig,
        data: &SplitDataset,
        cfg: &TrainConfig,
    ) -> Result<(Box<dyn CrossModalMapper>, TrainHistory)> {
        let model = CrossModalAutoencoder::new(arch.clone(), cfg.seed)?;
        let (best, history) = train(model, data, cfg)?;
        Ok((Box::new(best), history))
    }
}

impl MapperTrainer for FfTrainer {
    fn name(&self) -> &'static str {
        "ff"
    }

    fn train(
        &self,
        arch: &ArchConfig,
        data: &SplitDataset,
        cfg: &TrainConfig,
    ) -> Result<(Box<dyn CrossModalMapper>, TrainHistory)> {
        if let Some(r) = data.train.first() {
            ensure_dim("dataset video features vs configured C", arch.dims.c, r.video.len())?;
            ensure_dim("dataset text vectors vs configured D", arch.dims.d, r.text.len())?;
        }
        let (baseline, history) = fit_ff_baseline(data, cfg)?;
        Ok((Box::new(baseline), history))
    }
}

static TRAINERS: [&dyn MapperTrainer; 2] = [&AutoencoderTrainer, &FfTrainer];

pub fn trainer_names() -> impl Iterator<Item = &'static str> {
    TRAINERS.iter().map(|t| t.name())
}

pub fn trainer_by_name(name: &str) -> Result<&'static dyn MapperTrainer> {
    TRAINERS.iter().copied().find(|t| t.name() == name).ok_or_else(|| {
        Error::invalid(format!(
            "unknown model kind '{name}' (known: {})",
            trainer_names().collect::<Vec<_>>().join(", ")
        ))
    })
}

/// Loads either artifact kind, dispatching on the header.
pub fn load_mapper(path: &Path) -> Result<Box<dyn CrossModalMapper>> {
    let bytes = container::read_file(path)?;
    let (header, _) = container::decode_raw(&bytes)?;
    match header.get("kind").and_then(|k| k.as_str()) {
        Some(ARTIFACT_KIND) => Ok(Box::new(CrossModalAutoencoder::from_bytes(&bytes)?)),
        Some(FF_KIND) => Ok(Box::new(FfBaseline::from_bytes(&bytes)?)),
        other => Err(Error::Parse {
            location: path.display().to_string(),
            message: format!("unknown artifact kind {other:?}"),
        }),
    }
}
