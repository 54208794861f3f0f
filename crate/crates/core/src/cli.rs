//! Subcommand implementations. Each reads a validated [`RunConfig`], writes
//! its outputs under `out_dir` together with a copy of the config, and
//! returns a short summary for the terminal.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::container;
use crate::data::{
    build_records, load_features, make_splits, parse_embeddings, write_features_file, EmbeddingTable,
    PairedRecord, SplitDataset, SplitManifest,
};
use crate::error::{ensure_dim, Error, Result};
use crate::eval::{accuracy_row, mnno, mnno_report, zero_shot_eval, EvalReport};
use crate::mapper::{load_mapper, trainer_by_name, CrossModalMapper};
use crate::numerics::similarity_by_name;

pub const COMMANDS: &[(&str, &str)] = &[
    ("synth", "generate a synthetic paired dataset"),
    ("train", "train an autoencoder or feed-forward baseline"),
    ("eval", "top-N retrieval accuracy on seen and unseen classes"),
    ("mnno", "mean nearest neighbour overlap of trained mappers"),
    ("inspect", "print an artifact header"),
];

pub fn run(command: &str, cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    match command {
        "synth" => cmd_synth(cfg),
        "train" => cmd_train(cfg),
        "eval" => cmd_eval(cfg),
        "mnno" => cmd_mnno(cfg),
        "inspect" => cmd_inspect(cfg),
        other => Err(Error::invalid(format!("unknown command '{other}'"))),
    }
}

fn prepare_out_dir(cfg: &RunConfig, command: &str, used: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let path = cfg.out_dir.join(format!("config-{command}.txt"));
    std::fs::write(&path, used.to_text()).map_err(|e| Error::io(&path, e))
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(vec![format!("missing required setting '{key}'")]))
}

/// Loaded records and the global vocabulary.
pub fn load_records(cfg: &RunConfig) -> Result<(Vec<PairedRecord>, EmbeddingTable)> {
    let rows = load_features(required(&cfg.features, "features")?)?;
    let table = parse_embeddings(required(&cfg.embeddings, "embeddings")?)?.value;
    let records = build_records(&rows, &table)?.value;
    Ok((records, table))
}

fn load_split(cfg: &RunConfig, records: &[PairedRecord]) -> Result<SplitDataset> {
    let manifest = SplitManifest::load(required(&cfg.manifest, "manifest")?)?;
    SplitDataset::from_manifest(records, manifest)
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<String> {
    let (c, d) = (cfg.c.unwrap_or(64), cfg.d.unwrap_or(16));
    let data = crate::data::synth_generate(cfg.classes, cfg.per_class, c, d, cfg.noise, cfg.seed)?;
    let features = cfg.out_dir.join("features.csv");
    let embeddings = cfg.out_dir.join("embeddings.txt");
    let manifest = cfg.out_dir.join("manifest.json");
    let used = RunConfig {
        features: Some(features.clone()),
        embeddings: Some(embeddings.clone()),
        manifest: Some(manifest.clone()),
        c: Some(c),
        d: Some(d),
        ..cfg.clone()
    };
    prepare_out_dir(cfg, "synth", &used)?;
    write_features_file(&features, &data.rows)?;
    data.table.write_file(&embeddings)?;
    let records = build_records(&data.rows, &data.table)?.value;
    let split = make_splits(&records, cfg.seed, cfg.unseen_classes, cfg.fractions)?;
    split.manifest.save(&manifest)?;
    Ok(format!(
        "wrote {} records of {} classes (C={c}, D={d}) to {}\nsplit: train {} / validation {} / test {} / unseen {}\n",
        data.rows.len(),
        cfg.classes,
        cfg.out_dir.display(),
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split.unseen.len()
    ))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let (records, _) = load_records(cfg)?;
    let first = records.first().ok_or_else(|| Error::invalid("the feature file has no records"))?;
    let arch = cfg.arch_config(first.video.len(), first.text.len())?;
    let trainer = trainer_by_name(&cfg.model_kind)?;
    let mut used = cfg.clone();
    let (split, new_manifest) = match &cfg.manifest {
        Some(p) if p.exists() => (load_split(cfg, &records)?, None),
        configured => {
            let split = make_splits(&records, cfg.seed, cfg.unseen_classes, cfg.fractions)?;
            let path = configured.clone().unwrap_or_else(|| cfg.out_dir.join("manifest.json"));
            used.manifest = Some(path.clone());
            (split, Some(path))
        }
    };
    let artifact = cfg
        .out_dir
        .join(if cfg.model_kind == "ff" { "baseline.bin" } else { "model.bin" });
    if cfg.model_kind == "ff" {
        used.baseline = Some(artifact.clone());
    } else {
        used.model = Some(artifact.clone());
    }
    prepare_out_dir(cfg, "train", &used)?;
    if let Some(path) = new_manifest {
        split.manifest.save(&path)?;
    }
    let (mapper, history) = trainer.train(&arch, &split, &cfg.train_config())?;
    mapper.save(&artifact)?;
    history.save_csv(&cfg.out_dir.join("history.csv"))?;
    let best = history.best_val_loss().unwrap_or(f64::NAN);
    Ok(format!(
        "trained {} for {} epochs on {} records; best validation loss {best:.6} at epoch {}\nwrote {}\n",
        cfg.model_kind,
        history.epochs.len(),
        split.train.len(),
        history.best_epoch,
        artifact.display()
    ))
}

fn load_artifact(cfg: &RunConfig) -> Result<Box<dyn CrossModalMapper>> {
    match (&cfg.model, &cfg.baseline) {
        (Some(p), _) | (None, Some(p)) => load_mapper(p),
        (None, None) => Err(Error::Config(vec![
            "missing artifact: set 'model' (autoencoder) or 'baseline' (feed-forward)".into(),
        ])),
    }
}

fn check_dims(mapper: &dyn CrossModalMapper, records: &[PairedRecord]) -> Result<()> {
    let (c, d) = mapper.modal_dims();
    if let Some(r) = records.first() {
        ensure_dim("model C vs dataset video features", c, r.video.len())?;
        ensure_dim("model D vs dataset text vectors", d, r.text.len())?;
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<String> {
    let mapper = load_artifact(cfg)?;
    let (records, vocab) = load_records(cfg)?;
    check_dims(mapper.as_ref(), &records)?;
    let split = load_split(cfg, &records)?;
    let sim = similarity_by_name(&cfg.similarity)?;
    prepare_out_dir(cfg, "eval", cfg)?;
    let mut report = EvalReport {
        vocabulary_size: vocab.len(),
        similarity: sim.name().into(),
        n_list: cfg.eval_n.clone(),
        ..Default::default()
    };
    report
        .accuracy
        .push(accuracy_row(mapper.as_ref(), "seen", &split.test, &vocab, &cfg.eval_n, sim)?);
    if !split.unseen.is_empty() {
        let zs = zero_shot_eval(mapper.as_ref(), &split.unseen, &vocab, &cfg.eval_n, sim)?;
        report.accuracy.extend(zs.accuracy);
    }
    report.save(&cfg.out_dir)?;
    Ok(report.to_table())
}

/// Vectors of an embedding-format file in line order.
fn vector_set(path: &Path) -> Result<Vec<Vec<f64>>> {
    Ok(parse_embeddings(path)?.value.vectors().to_vec())
}

pub fn cmd_mnno(cfg: &RunConfig) -> Result<String> {
    let sim = similarity_by_name(&cfg.similarity)?;
    if cfg.set_a.is_some() || cfg.set_b.is_some() {
        let a = vector_set(required(&cfg.set_a, "set_a")?)?;
        let b = vector_set(required(&cfg.set_b, "set_b")?)?;
        let value = mnno(&a, &b, cfg.mnno_k, sim)?;
        prepare_out_dir(cfg, "mnno", cfg)?;
        let path = cfg.out_dir.join("mnno.csv");
        let csv = format!("k,n,mnno\n{},{},{value}\n", cfg.mnno_k, a.len());
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        return Ok(format!("mNNO (K={}, N={}) = {value:.6}\n", cfg.mnno_k, a.len()));
    }
    let mut artifacts = Vec::new();
    // baseline rows first, as in the usual table layout
    for (key, path) in [("baseline", &cfg.baseline), ("model", &cfg.model)] {
        if let Some(p) = path {
            artifacts.push((key, load_mapper(p)?));
        }
    }
    if artifacts.is_empty() {
        return Err(Error::Config(vec![
            "missing artifact: set 'model', 'baseline' or both (or set_a and set_b)".into(),
        ]));
    }
    let (records, vocab) = load_records(cfg)?;
    let split = load_split(cfg, &records)?;
    let mut report = EvalReport {
        vocabulary_size: vocab.len(),
        similarity: sim.name().into(),
        ..Default::default()
    };
    for (_, mapper) in &artifacts {
        check_dims(mapper.as_ref(), &records)?;
        report.mnno.extend(mnno_report(mapper.as_ref(), &split.test, cfg.mnno_k, sim)?);
    }
    prepare_out_dir(cfg, "mnno", cfg)?;
    report.save(&cfg.out_dir)?;
    Ok(report.to_table())
}

pub fn cmd_inspect(cfg: &RunConfig) -> Result<String> {
    let path = match (&cfg.model, &cfg.baseline) {
        (Some(p), _) | (None, Some(p)) => p,
        (None, None) => {
            return Err(Error::Config(vec!["missing artifact: set 'model' or 'baseline'".into()]))
        }
    };
    let bytes = container::read_file(path)?;
    let (header, params) = container::decode_raw(&bytes)?;
    let mut out = serde_json::to_string_pretty(&header)?;
    let _ = write!(out, "\nparameters: {}\n", params.len());
    Ok(out)
}
