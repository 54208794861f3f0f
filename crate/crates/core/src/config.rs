//! `key = value` run configuration shared by every subcommand.
//!
//! Lines starting with `#` are comments. Keys may use `-` or `_`. Unknown
//! keys and malformed values are collected and reported together.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::{LossWeights, NormKind};
use crate::model::{ArchConfig, ModelDims};
use crate::numerics::similarity_by_name;
use crate::optim::{AdamConfig, DecayMode, TrainConfig};

/// Every accepted key with a one-line description, in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("features", "feature file (CSV, or binary with a .bin extension)"),
    ("embeddings", "word embedding text file"),
    ("manifest", "split manifest JSON; created by train when absent"),
    ("model", "autoencoder artifact"),
    ("baseline", "feed-forward baseline artifact"),
    ("out_dir", "output directory"),
    ("seed", "top-level random seed"),
    ("model_kind", "mapper to train: ae or ff"),
    ("c", "video feature size"),
    ("d", "text vector size"),
    ("z", "latent size"),
    ("video_hidden", "two hidden sizes of the video encoder, e.g. 662,445"),
    ("text_hidden", "two hidden sizes of the text encoder"),
    ("dropout", "dropout rate between layers"),
    ("final_relu", "apply ReLU to network outputs (true/false)"),
    ("learning_rate", "Adam step size"),
    ("weight_decay", "weight decay coefficient"),
    ("weight_decay_mode", "l2 or decoupled"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("eps", "Adam denominator epsilon"),
    ("batch_size", "samples per update"),
    ("epochs", "training epochs"),
    ("lr_decay_every", "epochs between learning rate decays (0 = never)"),
    ("lr_decay_factor", "learning rate multiplier per decay"),
    ("weights", "loss weights recons,joint,cross,rank"),
    ("margin", "ranking margin"),
    ("norm", "distance norm in the losses: unsquared or squared"),
    ("fractions", "train,validation,test fractions of seen-class records"),
    ("unseen_classes", "number of whole classes held out for zero-shot testing"),
    ("eval_n", "N values for top-N accuracy"),
    ("mnno_k", "neighbourhood size K for mNNO"),
    ("similarity", "cosine or euclidean"),
    ("classes", "synthetic classes"),
    ("per_class", "synthetic records per class"),
    ("noise", "synthetic video noise standard deviation"),
    ("set_a", "first vector set for a standalone mNNO (embedding text format)"),
    ("set_b", "second vector set, paired with set_a by line order"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub features: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub model_kind: String,
    pub c: Option<usize>,
    pub d: Option<usize>,
    pub z: usize,
    pub video_hidden: Option<Vec<usize>>,
    pub text_hidden: Option<Vec<usize>>,
    pub dropout: f64,
    pub final_relu: bool,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub weights: LossWeights,
    pub fractions: [f64; 3],
    pub unseen_classes: usize,
    pub eval_n: Vec<usize>,
    pub mnno_k: usize,
    pub similarity: String,
    pub classes: usize,
    pub per_class: usize,
    pub noise: f64,
    pub set_a: Option<PathBuf>,
    pub set_b: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            features: None,
            embeddings: None,
            manifest: None,
            model: None,
            baseline: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            model_kind: "ae".into(),
            c: None,
            d: None,
            z: 300,
            video_hidden: None,
            text_hidden: None,
            dropout: 0.5,
            final_relu: false,
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 300,
            lr_decay_every: 0,
            lr_decay_factor: 0.5,
            weights: LossWeights::default(),
            fractions: [0.8, 0.1, 0.1],
            unseen_classes: 0,
            eval_n: vec![1, 5, 10, 30],
            mnno_k: 3,
            similarity: "cosine".into(),
            classes: 20,
            per_class: 30,
            noise: 0.05,
            set_a: None,
            set_b: None,
        }
    }
}

fn parse<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse '{v}'"))
}

fn parse_list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|x| parse(x.trim())).collect()
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got '{v}'")),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn path_text(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

pub fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl RunConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        let path = || Some(PathBuf::from(v));
        match normalize_key(key).as_str() {
            "features" => self.features = path(),
            "embeddings" => self.embeddings = path(),
            "manifest" => self.manifest = path(),
            "model" => self.model = path(),
            "baseline" => self.baseline = path(),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = parse(v)?,
            "model_kind" => self.model_kind = v.to_string(),
            "c" => self.c = Some(parse(v)?),
            "d" => self.d = Some(parse(v)?),
            "z" => self.z = parse(v)?,
            "video_hidden" => self.video_hidden = Some(parse_list(v)?),
            "text_hidden" => self.text_hidden = Some(parse_list(v)?),
            "dropout" => self.dropout = parse(v)?,
            "final_relu" => self.final_relu = parse_bool(v)?,
            "learning_rate" => self.adam.learning_rate = parse(v)?,
            "weight_decay" => self.adam.weight_decay = parse(v)?,
            "weight_decay_mode" => {
                self.adam.decay_mode = v.parse::<DecayMode>().map_err(|e| e.to_string())?
            }
            "beta1" => self.adam.beta1 = parse(v)?,
            "beta2" => self.adam.beta2 = parse(v)?,
            "eps" => self.adam.eps = parse(v)?,
            "batch_size" => self.batch_size = parse(v)?,
            "epochs" => self.epochs = parse(v)?,
            "lr_decay_every" => self.lr_decay_every = parse(v)?,
            "lr_decay_factor" => self.lr_decay_factor = parse(v)?,
            "weights" => {
                let w: Vec<f64> = parse_list(v)?;
                let [r, j, c, k] = w[..] else {
                    return Err(format!("expected four weights recons,joint,cross,rank, got {}", w.len()));
                };
                self.weights = LossWeights {
                    recons: r,
                    joint: j,
                    cross: c,
                    rank: k,
                    ..self.weights
                };
            }
            "margin" => self.weights.margin = parse(v)?,
            "norm" => self.weights.norm = v.parse::<NormKind>().map_err(|e| e.to_string())?,
            "fractions" => {
                let f: Vec<f64> = parse_list(v)?;
                self.fractions = f
                    .try_into()
                    .map_err(|f: Vec<f64>| format!("expected three fractions, got {}", f.len()))?;
            }
            "unseen_classes" => self.unseen_classes = parse(v)?,
            "eval_n" => self.eval_n = parse_list(v)?,
            "mnno_k" => self.mnno_k = parse(v)?,
            "similarity" => self.similarity = v.to_string(),
            "classes" => self.classes = parse(v)?,
            "per_class" => self.per_class = parse(v)?,
            "noise" => self.noise = parse(v)?,
            "set_a" => self.set_a = path(),
            "set_b" => self.set_b = path(),
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Text value of a key, `None` when unset.
    pub fn get(&self, key: &str) -> Option<String> {
        let a = &self.adam;
        let w = &self.weights;
        Some(match normalize_key(key).as_str() {
            "features" => return path_text(&self.features),
            "embeddings" => return path_text(&self.embeddings),
            "manifest" => return path_text(&self.manifest),
            "model" => return path_text(&self.model),
            "baseline" => return path_text(&self.baseline),
            "out_dir" => self.out_dir.display().to_string(),
            "seed" => self.seed.to_string(),
            "model_kind" => self.model_kind.clone(),
            "c" => return self.c.map(|c| c.to_string()),
            "d" => return self.d.map(|d| d.to_string()),
            "z" => self.z.to_string(),
            "video_hidden" => return self.video_hidden.as_deref().map(join),
            "text_hidden" => return self.text_hidden.as_deref().map(join),
            "dropout" => self.dropout.to_string(),
            "final_relu" => self.final_relu.to_string(),
            "learning_rate" => a.learning_rate.to_string(),
            "weight_decay" => a.weight_decay.to_string(),
            "weight_decay_mode" => match a.decay_mode {
                DecayMode::L2 => "l2".into(),
                DecayMode::Decoupled => "decoupled".into(),
            },
            "beta1" => a.beta1.to_string(),
            "beta2" => a.beta2.to_string(),
            "eps" => a.eps.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr_decay_every" => self.lr_decay_every.to_string(),
            "lr_decay_factor" => self.lr_decay_factor.to_string(),
            "weights" => join(&[w.recons, w.joint, w.cross, w.rank]),
            "margin" => w.margin.to_string(),
            "norm" => match w.norm {
                NormKind::Unsquared => "unsquared".into(),
                NormKind::Squared => "squared".into(),
            },
            "fractions" => join(&self.fractions),
            "unseen_classes" => self.unseen_classes.to_string(),
            "eval_n" => join(&self.eval_n),
            "mnno_k" => self.mnno_k.to_string(),
            "similarity" => self.similarity.clone(),
            "classes" => self.classes.to_string(),
            "per_class" => self.per_class.to_string(),
            "noise" => self.noise.to_string(),
            "set_a" => return path_text(&self.set_a),
            "set_b" => return path_text(&self.set_b),
            _ => return None,
        })
    }

    /// Applies `(key, value, location)` triples, collecting every problem.
    pub fn apply<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, &'a str, String)>) -> Result<()> {
        let problems: Vec<String> = entries
            .into_iter()
            .filter_map(|(k, v, loc)| self.set(k, v).err().map(|e| format!("{loc}: {k}: {e}")))
            .collect();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn parse_text(&mut self, text: &str, source: &str) -> Result<()> {
        let mut entries = Vec::new();
        let mut problems = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => entries.push((k.trim(), v.trim(), format!("{source}:{}", i + 1))),
                None => problems.push(format!("{source}:{}: expected key = value", i + 1)),
            }
        }
        if let Err(Error::Config(mut more)) = self.apply(entries) {
            problems.append(&mut more);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.parse_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Every set key in [`KEYS`] order; re-parsing yields an equal config.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .filter_map(|(k, _)| self.get(k).map(|v| format!("{k} = {v}\n")))
            .collect()
    }

    /// Value checks independent of any particular subcommand.
    pub fn validate(&self) -> Result<()> {
        let mut problems = match self.train_config().validate() {
            Err(Error::Config(p)) => p,
            _ => Vec::new(),
        };
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.z == 0 {
            problems.push("z must be >= 1".into());
        }
        if self.c == Some(0) || self.d == Some(0) {
            problems.push("c and d must be >= 1".into());
        }
        for (name, h) in [("video_hidden", &self.video_hidden), ("text_hidden", &self.text_hidden)] {
            if let Some(h) = h {
                if h.len() != 2 || h.contains(&0) {
                    problems.push(format!("{name} needs two positive sizes, got {h:?}"));
                }
            }
        }
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f))
            || (self.fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            problems.push(format!(
                "fractions {:?} must be nonnegative and sum to 1",
                self.fractions
            ));
        }
        if self.eval_n.is_empty() || self.eval_n.contains(&0) {
            problems.push(format!("eval_n {:?} needs positive values", self.eval_n));
        }
        if self.mnno_k == 0 {
            problems.push("mnno_k must be >= 1".into());
        }
        if let Err(e) = similarity_by_name(&self.similarity) {
            problems.push(e.to_string());
        }
        if let Err(e) = crate::mapper::trainer_by_name(&self.model_kind) {
            problems.push(e.to_string());
        }
        if self.classes == 0 || self.per_class == 0 {
            problems.push("classes and per_class must be >= 1".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            problems.push(format!("noise {} must be >= 0", self.noise));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            adam: self.adam,
            batch_size: self.batch_size,
            epochs: self.epochs,
            weights: self.weights,
            seed: self.seed,
            lr_decay_every: self.lr_decay_every,
            lr_decay_factor: self.lr_decay_factor,
        }
    }

    /// Architecture for data of video size `c` and text size `d`.
    pub fn arch_config(&self, c: usize, d: usize) -> Result<ArchConfig> {
        if let Some(cc) = self.c {
            crate::error::ensure_dim("configured c vs data video features", cc, c)?;
        }
        if let Some(dd) = self.d {
            crate::error::ensure_dim("configured d vs data text vectors", dd, d)?;
        }
        let mut arch = ArchConfig::new(ModelDims { c, d, z: self.z }, self.dropout);
        arch.final_relu = self.final_relu;
        arch.video_hidden = self.video_hidden.clone();
        arch.text_hidden = self.text_hidden.clone();
        arch.validate()?;
        Ok(arch)
    }
}
