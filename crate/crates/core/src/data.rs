//! Word embeddings, feature files, class phrases, splits and the synthetic
//! paired-data generator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, l2_norm, Mat, SeededRng};

/// A loaded value plus the warnings raised while loading it.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

impl<T> Parsed<T> {
    fn new(value: T, warnings: Vec<String>) -> Self {
        for w in &warnings {
            log::warn!("{w}");
        }
        Parsed { value, warnings }
    }
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        location: location.into(),
        message: message.into(),
    }
}

fn parse_value(cell: &str, location: impl Fn() -> String) -> Result<f64> {
    let x: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(location(), format!("'{cell}' is not a number")))?;
    if !x.is_finite() {
        return Err(parse_err(location(), format!("non-finite value '{cell}'")));
    }
    Ok(x)
}

/// Word vectors with a fixed dimensionality, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    /// Builds a table; duplicate words keep their first vector.
    pub fn from_entries(entries: Vec<(String, Vec<f64>)>) -> Result<Parsed<Self>> {
        let dim = match entries.first() {
            Some((_, v)) if !v.is_empty() => v.len(),
            Some((w, _)) => return Err(Error::invalid(format!("word '{w}' has an empty vector"))),
            None => return Err(Error::invalid("embedding table is empty")),
        };
        let mut table = EmbeddingTable {
            dim,
            words: Vec::with_capacity(entries.len()),
            vectors: Vec::with_capacity(entries.len()),
            index: HashMap::with_capacity(entries.len()),
        };
        let mut warnings = Vec::new();
        for (word, vector) in entries {
            if vector.len() != dim {
                return Err(Error::dims(format!("embedding of '{word}'"), dim, vector.len()));
            }
            ensure_finite(&format!("embedding of '{word}'"), &vector)?;
            if table.index.contains_key(&word) {
                warnings.push(format!("duplicate word '{word}' ignored; keeping the first vector"));
                continue;
            }
            table.index.insert(word.clone(), table.words.len());
            table.words.push(word);
            table.vectors.push(vector);
        }
        Ok(Parsed::new(table, warnings))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vectors[i].as_slice())
    }

    /// Reads the GloVe text format: a word followed by its components, space
    /// separated, one word per line. The dimensionality comes from the first
    /// line.
    pub fn read<R: BufRead>(reader: R, source: &str) -> Result<Parsed<Self>> {
        let mut entries = Vec::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(source, e))?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ').filter(|s| !s.is_empty());
            let word = parts.next().expect("non-empty line").to_string();
            let location = || format!("{source}:{lineno}");
            let values = parts
                .map(|cell| parse_value(cell, location))
                .collect::<Result<Vec<f64>>>()?;
            match dim {
                None if values.is_empty() => {
                    return Err(parse_err(location(), format!("word '{word}' has no vector")))
                }
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(parse_err(
                        location(),
                        format!("expected {d} values for '{word}', found {}", values.len()),
                    ))
                }
                Some(_) => {}
            }
            entries.push((word, values));
        }
        if entries.is_empty() {
            return Err(parse_err(source, "no embeddings found"));
        }
        Self::from_entries(entries)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (word, v) in self.words.iter().zip(&self.vectors) {
            write!(w, "{word}")?;
            for x in v {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Convenience alias: retrieval runs over the whole loaded word table.
pub type Vocabulary = EmbeddingTable;

pub fn parse_embeddings(path: &Path) -> Result<Parsed<EmbeddingTable>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::read(BufReader::new(f), &path.display().to_string())
}

/// A class name and the words of its phrase ("playing piano").
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassLabel {
    pub name: String,
    pub words: Vec<String>,
}

impl ClassLabel {
    pub fn new(name: &str) -> Result<Self> {
        let words: Vec<String> = name.split_whitespace().map(str::to_string).collect();
        if words.is_empty() {
            return Err(Error::invalid("class name is empty"));
        }
        Ok(ClassLabel {
            name: words.join(" "),
            words,
        })
    }
}

/// Mean of the phrase's in-vocabulary word vectors. Unknown words are
/// skipped with a warning; a phrase with no known words is an error.
pub fn class_phrase_vector(class: &ClassLabel, table: &EmbeddingTable) -> Result<Parsed<Vec<f64>>> {
    let mut acc = vec![0.0; table.dim()];
    let mut found = 0usize;
    let mut warnings = Vec::new();
    for word in &class.words {
        match table.get(word) {
            Some(v) => {
                acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
                found += 1;
            }
            None => warnings.push(format!(
                "word '{word}' of class '{}' is not in the vocabulary; skipped",
                class.name
            )),
        }
    }
    if found == 0 {
        return Err(Error::invalid(format!(
            "no word of class '{}' is in the vocabulary",
            class.name
        )));
    }
    acc.iter_mut().for_each(|a| *a /= found as f64);
    Ok(Parsed::new(acc, warnings))
}

/// One row of a feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub class: String,
    pub values: Vec<f64>,
}

const BINARY_MAGIC: &[u8; 4] = b"XMAE";

/// Loads features from CSV (`class,f0,...,f{C-1}`) or the binary variant,
/// chosen by the leading magic bytes.
pub fn load_features(path: &Path) -> Result<Vec<FeatureRow>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    if bytes.starts_with(BINARY_MAGIC) {
        decode_features_binary(&bytes, &name)
    } else {
        read_features_csv(bytes.as_slice(), &name)
    }
}

pub fn read_features_csv<R: std::io::Read>(reader: R, source: &str) -> Result<Vec<FeatureRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("class") {
        return Err(parse_err(format!("{source}:1"), "header must start with 'class'"));
    }
    let c = header.len() - 1;
    if c == 0 {
        return Err(parse_err(format!("{source}:1"), "header declares no feature columns"));
    }
    for (i, h) in header.iter().skip(1).enumerate() {
        if h != format!("f{i}") {
            return Err(parse_err(
                format!("{source}:1"),
                format!("column {} should be 'f{i}', found '{h}'", i + 1),
            ));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let lineno = i + 2;
        if record.len() != c + 1 {
            return Err(parse_err(
                format!("{source}:{lineno}"),
                format!("expected {} columns, found {}", c + 1, record.len()),
            ));
        }
        let class = record[0].trim().to_string();
        if class.is_empty() {
            return Err(parse_err(format!("{source}:{lineno}"), "empty class name"));
        }
        let values = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, cell)| parse_value(cell, || format!("{source}:{lineno}:f{j}")))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(FeatureRow { class, values });
    }
    if rows.is_empty() {
        return Err(parse_err(source, "no feature rows"));
    }
    Ok(rows)
}

fn feature_dim(rows: &[FeatureRow]) -> Result<usize> {
    let c = rows.first().map(|r| r.values.len()).unwrap_or(0);
    if c == 0 {
        return Err(Error::invalid("feature rows are empty"));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.values.len() != c {
            return Err(Error::dims(format!("feature row {i}"), c, r.values.len()));
        }
        if r.class.contains(',') || r.class.contains('"') || r.class.contains('\n') {
            return Err(Error::invalid(format!("class name {:?} contains a reserved character", r.class)));
        }
    }
    Ok(c)
}

pub fn write_features_csv<W: Write>(rows: &[FeatureRow], mut w: W) -> Result<()> {
    let c = feature_dim(rows)?;
    let io = |e| Error::io("features csv", e);
    write!(w, "class").map_err(io)?;
    for i in 0..c {
        write!(w, ",f{i}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for r in rows {
        write!(w, "{}", r.class).map_err(io)?;
        for x in &r.values {
            write!(w, ",{x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    Ok(())
}

/// Binary layout: `"XMAE"`, u32 version, u64 rows, u64 C, then per row a
/// u32 class length, the UTF-8 class and C little-endian f64s.
pub fn encode_features_binary(rows: &[FeatureRow]) -> Result<Vec<u8>> {
    let c = feature_dim(rows)?;
    let mut out = Vec::with_capacity(24 + rows.len() * (c * 8 + 16));
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    out.extend_from_slice(&(c as u64).to_le_bytes());
    for r in rows {
        out.extend_from_slice(&(r.class.len() as u32).to_le_bytes());
        out.extend_from_slice(r.class.as_bytes());
        for x in &r.values {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

fn decode_features_binary(bytes: &[u8], source: &str) -> Result<Vec<FeatureRow>> {
    let mut pos = 4;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos + n;
        let slice = bytes
            .get(pos..end)
            .ok_or_else(|| parse_err(format!("{source}@{pos}"), "truncated binary feature file"))?;
        pos = end;
        Ok(slice)
    };
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4"));
    if version != 1 {
        return Err(parse_err(source, format!("unsupported binary version {version}")));
    }
    let n = u64::from_le_bytes(take(8)?.try_into().expect("8")) as usize;
    let c = u64::from_le_bytes(take(8)?.try_into().expect("8")) as usize;
    let mut rows = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let len = u32::from_le_bytes(take(4)?.try_into().expect("4")) as usize;
        let class = std::str::from_utf8(take(len)?)
            .map_err(|_| parse_err(format!("{source} row {i}"), "class is not UTF-8"))?
            .to_string();
        let values: Vec<f64> = take(c * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8")))
            .collect();
        ensure_finite(&format!("{source} row {i}"), &values)
            .map_err(|e| parse_err(format!("{source} row {i}"), e.to_string()))?;
        rows.push(FeatureRow { class, values });
    }
    if pos != bytes.len() {
        return Err(parse_err(source, "trailing bytes after the last row"));
    }
    Ok(rows)
}

pub fn write_features_file(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let binary = path.extension().is_some_and(|e| e == "bin");
    let bytes = if binary {
        encode_features_binary(rows)?
    } else {
        let mut buf = Vec::new();
        write_features_csv(rows, &mut buf)?;
        buf
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A video feature vector paired with its class and the class's text vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRecord {
    /// Row index in the source feature file.
    pub id: usize,
    pub class: ClassLabel,
    pub video: Vec<f64>,
    pub text: Vec<f64>,
}

/// Attaches text vectors to feature rows; record ids are row indices.
pub fn build_records(rows: &[FeatureRow], table: &EmbeddingTable) -> Result<Parsed<Vec<PairedRecord>>> {
    feature_dim(rows)?;
    let mut cache: BTreeMap<&str, (ClassLabel, Vec<f64>)> = BTreeMap::new();
    let mut warnings = Vec::new();
    for r in rows {
        if !cache.contains_key(r.class.as_str()) {
            let label = ClassLabel::new(&r.class)?;
            let parsed = class_phrase_vector(&label, table)?;
            warnings.extend(parsed.warnings);
            cache.insert(&r.class, (label, parsed.value));
        }
    }
    let records = rows
        .iter()
        .enumerate()
        .map(|(id, r)| {
            let (label, text) = &cache[r.class.as_str()];
            PairedRecord {
                id,
                class: label.clone(),
                video: r.values.clone(),
                text: text.clone(),
            }
        })
        .collect();
    // already logged by class_phrase_vector
    Ok(Parsed {
        value: records,
        warnings,
    })
}

/// Reproducible description of a split: record ids per split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub unseen_classes: Vec<String>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub unseen: Vec<usize>,
}

impl SplitManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Vec<PairedRecord>,
    pub validation: Vec<PairedRecord>,
    pub test: Vec<PairedRecord>,
    pub unseen: Vec<PairedRecord>,
    pub manifest: SplitManifest,
}

/// Sorted distinct class names of a record list.
pub fn class_names(records: &[PairedRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| r.class.name.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

impl SplitDataset {
    /// Rebuilds splits from a manifest, checking disjointness and that no
    /// unseen class occurs in training.
    pub fn from_manifest(records: &[PairedRecord], manifest: SplitManifest) -> Result<Self> {
        let mut used = vec![false; records.len()];
        let mut pick = |ids: &[usize], split: &str| -> Result<Vec<PairedRecord>> {
            ids.iter()
                .map(|&id| {
                    let r = records.get(id).ok_or_else(|| {
                        Error::invalid(format!("{split} split references missing record {id}"))
                    })?;
                    if std::mem::replace(&mut used[id], true) {
                        return Err(Error::invalid(format!("record {id} appears in more than one split")));
                    }
                    Ok(r.clone())
                })
                .collect()
        };
        let train = pick(&manifest.train, "train")?;
        let validation = pick(&manifest.validation, "validation")?;
        let test = pick(&manifest.test, "test")?;
        let unseen = pick(&manifest.unseen, "unseen")?;
        let unseen_set: BTreeSet<&str> = manifest.unseen_classes.iter().map(String::as_str).collect();
        for r in train.iter().chain(&validation).chain(&test) {
            if unseen_set.contains(r.class.name.as_str()) {
                return Err(Error::invalid(format!(
                    "record {} of unseen class '{}' is in a seen split",
                    r.id, r.class.name
                )));
            }
        }
        if let Some(r) = unseen.iter().find(|r| !unseen_set.contains(r.class.name.as_str())) {
            return Err(Error::invalid(format!(
                "record {} in the unseen split has seen class '{}'",
                r.id, r.class.name
            )));
        }
        Ok(SplitDataset {
            train,
            validation,
            test,
            unseen,
            manifest,
        })
    }

    pub fn train_classes(&self) -> Vec<String> {
        class_names(&self.train)
    }
}

/// Splits `n` into parts proportional to `fractions` by largest remainder;
/// remainder ties go to the earlier part. Parts sum exactly to `n`.
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        parts[i] += 1;
    }
    parts
}

/// Chooses `n_unseen` whole classes as the unseen split, then splits the
/// remaining records into train/validation/test by `fractions`.
pub fn make_splits(
    records: &[PairedRecord],
    seed: u64,
    n_unseen: usize,
    fractions: [f64; 3],
) -> Result<SplitDataset> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
        || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to 1"
        )));
    }
    let mut classes = class_names(records);
    if n_unseen >= classes.len() {
        return Err(Error::invalid(format!(
            "cannot hold out {n_unseen} unseen classes from {} classes",
            classes.len()
        )));
    }
    let rng = SeededRng::new(seed);
    rng.substream("split/classes").shuffle(&mut classes);
    let mut unseen_classes: Vec<String> = classes[..n_unseen].to_vec();
    unseen_classes.sort();
    let unseen_set: BTreeSet<&str> = unseen_classes.iter().map(String::as_str).collect();

    let mut unseen = Vec::new();
    let mut seen = Vec::new();
    for r in records {
        if unseen_set.contains(r.class.name.as_str()) {
            unseen.push(r.id);
        } else {
            seen.push(r.id);
        }
    }
    rng.substream("split/records").shuffle(&mut seen);
    let sizes = largest_remainder(seen.len(), &fractions);
    for (name, (&size, &frac)) in ["train", "validation", "test"].iter().zip(sizes.iter().zip(&fractions)) {
        if frac > 0.0 && size == 0 {
            return Err(Error::invalid(format!(
                "{name} split would be empty: {} seen records with fractions {fractions:?}",
                seen.len()
            )));
        }
    }
    let mut rest = seen.as_slice();
    let mut next = |k: usize| {
        let (head, tail) = rest.split_at(k);
        rest = tail;
        let mut v = head.to_vec();
        v.sort_unstable();
        v
    };
    let manifest = SplitManifest {
        seed,
        unseen_classes,
        train: next(sizes[0]),
        validation: next(sizes[1]),
        test: next(sizes[2]),
        unseen,
    };
    let by_id: Vec<PairedRecord> = {
        // manifest ids index the record list by position
        let mut sorted = records.to_vec();
        sorted.sort_by_key(|r| r.id);
        if sorted.iter().enumerate().any(|(i, r)| r.id != i) {
            return Err(Error::invalid("record ids must be 0..n"));
        }
        sorted
    };
    SplitDataset::from_manifest(&by_id, manifest)
}

/// Output of [`synth_generate`].
#[derive(Debug, Clone)]
pub struct SynthData {
    pub rows: Vec<FeatureRow>,
    pub table: EmbeddingTable,
    /// Ground-truth `C × D` map from text prototypes to video prototypes.
    pub map: Mat,
}

/// Synthetic paired data with a known linear cross-modal structure.
///
/// Class `i` is named `class_i`; its text vector is a random unit vector in
/// `D` dimensions. Video vectors are `M · prototype + noise_sigma · N(0, I)`
/// with `M` a fixed random `C × D` map with entries `N(0, 1/D)`.
pub fn synth_generate(
    n_classes: usize,
    per_class: usize,
    c: usize,
    d: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SynthData> {
    if n_classes == 0 || per_class == 0 || c == 0 || d == 0 {
        return Err(Error::invalid("synthetic sizes must be positive"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma {noise_sigma} must be >= 0")));
    }
    let root = SeededRng::new(seed);
    let mut proto_rng = root.substream("synth/prototypes");
    let prototypes: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| proto_rng.normal()).collect();
            let n = l2_norm(&v);
            if n > 1e-12 {
                break v.into_iter().map(|x| x / n).collect();
            }
        })
        .collect();
    let mut map_rng = root.substream("synth/map");
    let scale = 1.0 / (d as f64).sqrt();
    let map = Mat::from_vec(c, d, (0..c * d).map(|_| map_rng.normal() * scale).collect())?;
    let mut noise_rng = root.substream("synth/noise");
    let mut rows = Vec::with_capacity(n_classes * per_class);
    for (i, p) in prototypes.iter().enumerate() {
        let centre = map.matvec(p);
        for _ in 0..per_class {
            let values = centre
                .iter()
                .map(|&m| if noise_sigma > 0.0 { m + noise_sigma * noise_rng.normal() } else { m })
                .collect();
            rows.push(FeatureRow {
                class: format!("class_{i}"),
                values,
            });
        }
    }
    let entries = prototypes
        .into_iter()
        .enumerate()
        .map(|(i, p)| (format!("class_{i}"), p))
        .collect();
    let table = EmbeddingTable::from_entries(entries)?.value;
    Ok(SynthData { rows, table, map })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Result<Parsed<EmbeddingTable>> {
        EmbeddingTable::read(text.as_bytes(), "mem")
    }

    #[test]
    fn glove_line_format() {
        let t = table("cat 0.1 0.2 0.3\n").unwrap().value;
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("cat").unwrap(), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn glove_errors_carry_line_numbers() {
        match table("cat 0.1 0.2 0.3\ndog 1 2 3 4\n") {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "mem:2"),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(table("cat 0.1 x\n"), Err(Error::Parse { .. })));
        assert!(matches!(table("cat 0.1 NaN\n"), Err(Error::Parse { .. })));
        assert!(matches!(table("cat 0.1 inf\n"), Err(Error::Parse { .. })));
        assert!(table("").is_err());
    }

    #[test]
    fn glove_duplicates_keep_first() {
        let p = table("cat 1 2\ncat 3 4\n").unwrap();
        assert_eq!(p.value.len(), 1);
        assert_eq!(p.value.get("cat").unwrap(), &[1.0, 2.0]);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn glove_roundtrip_bitwise() {
        let mut rng = SeededRng::new(1);
        let entries: Vec<(String, Vec<f64>)> = (0..20)
            .map(|i| (format!("w{i}"), (0..7).map(|_| rng.normal() * 1e-3).collect()))
            .collect();
        let t = EmbeddingTable::from_entries(entries).unwrap().value;
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = EmbeddingTable::read(buf.as_slice(), "mem").unwrap().value;
        assert_eq!(back, t);
    }

    #[test]
    fn phrase_vectors() {
        let t = table("piano 1 2\nguitar 3 4\n").unwrap().value;
        let one = ClassLabel::new("piano").unwrap();
        assert_eq!(class_phrase_vector(&one, &t).unwrap().value, vec![1.0, 2.0]);
        let two = ClassLabel::new("piano guitar").unwrap();
        assert_eq!(class_phrase_vector(&two, &t).unwrap().value, vec![2.0, 3.0]);
        let oov = ClassLabel::new("playing piano").unwrap();
        let p = class_phrase_vector(&oov, &t).unwrap();
        assert_eq!(p.value, vec![1.0, 2.0]);
        assert_eq!(p.warnings.len(), 1);
        let err = class_phrase_vector(&ClassLabel::new("juggling balls").unwrap(), &t).unwrap_err();
        assert!(err.to_string().contains("juggling balls"));
    }

    #[test]
    fn feature_csv() {
        let csv = "class,f0,f1,f2,f3\na,1,2,3,4\nb,5,6,7,8\n";
        let rows = read_features_csv(csv.as_bytes(), "mem").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].values, vec![5.0, 6.0, 7.0, 8.0]);

        let ragged = "class,f0,f1,f2,f3\na,1,2,3\n";
        match read_features_csv(ragged.as_bytes(), "mem") {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "mem:2"),
            other => panic!("{other:?}"),
        }
        let bad = "class,f0,f1\na,1,x\n";
        match read_features_csv(bad.as_bytes(), "mem") {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "mem:2:f1"),
            other => panic!("{other:?}"),
        }
        assert!(read_features_csv("label,f0\na,1\n".as_bytes(), "mem").is_err());
        assert!(read_features_csv("class,f0\na,nan\n".as_bytes(), "mem").is_err());
    }

    #[test]
    fn feature_files_roundtrip_in_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let data = synth_generate(50, 200, 8, 4, 0.3, 9).unwrap();
        assert_eq!(data.rows.len(), 10_000);
        for name in ["f.csv", "f.bin"] {
            let p = dir.path().join(name);
            write_features_file(&p, &data.rows).unwrap();
            let back = load_features(&p).unwrap();
            assert_eq!(back, data.rows);
        }
    }

    fn records(classes: usize, per: usize) -> Vec<PairedRecord> {
        let data = synth_generate(classes, per, 3, 2, 0.1, 1).unwrap();
        build_records(&data.rows, &data.table).unwrap().value
    }

    #[test]
    fn largest_remainder_counts() {
        assert_eq!(largest_remainder(1000, &[0.8, 0.1, 0.1]), vec![800, 100, 100]);
        assert_eq!(largest_remainder(10, &[0.34, 0.33, 0.33]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(7, &[0.5, 0.25, 0.25]), vec![3, 2, 2]);
        for n in 0..50 {
            assert_eq!(largest_remainder(n, &[0.7, 0.2, 0.1]).iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn splits_are_disjoint_and_reproducible() {
        let recs = records(2, 10);
        let s = make_splits(&recs, 3, 1, [0.8, 0.1, 0.1]).unwrap();
        assert_eq!(s.unseen.len(), 10);
        assert_eq!(class_names(&s.unseen).len(), 1);
        assert!(!s.train_classes().contains(&s.manifest.unseen_classes[0]));

        let recs = records(10, 100);
        let a = make_splits(&recs, 7, 2, [0.8, 0.1, 0.1]).unwrap();
        let b = make_splits(&recs, 7, 2, [0.8, 0.1, 0.1]).unwrap();
        assert_eq!(a.manifest, b.manifest);
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (640, 80, 80));
        let mut all: Vec<usize> = [&a.manifest.train, &a.manifest.validation, &a.manifest.test, &a.manifest.unseen]
            .into_iter()
            .flatten()
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        let c = make_splits(&recs, 8, 2, [0.8, 0.1, 0.1]).unwrap();
        assert_ne!(a.manifest, c.manifest);
    }

    #[test]
    fn infeasible_splits_rejected() {
        let recs = records(3, 2);
        assert!(make_splits(&recs, 0, 3, [0.8, 0.1, 0.1]).is_err());
        assert!(make_splits(&recs, 0, 0, [0.5, 0.5, 0.5]).is_err());
        assert!(make_splits(&recs, 0, 2, [0.8, 0.1, 0.1]).is_err());
    }

    #[test]
    fn manifest_checks() {
        let recs = records(4, 5);
        let s = make_splits(&recs, 1, 1, [0.6, 0.2, 0.2]).unwrap();
        let mut m = s.manifest.clone();
        m.test.push(m.train[0]);
        assert!(SplitDataset::from_manifest(&recs, m).is_err());
        let mut m = s.manifest.clone();
        m.train.push(m.unseen[0]);
        m.unseen.remove(0);
        assert!(SplitDataset::from_manifest(&recs, m).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        s.manifest.save(&p).unwrap();
        assert_eq!(SplitManifest::load(&p).unwrap(), s.manifest);
    }

    #[test]
    fn synth_noise_free_records_equal_prototypes() {
        let data = synth_generate(3, 4, 5, 3, 0.0, 2).unwrap();
        for (i, chunk) in data.rows.chunks(4).enumerate() {
            let proto = data.table.get(&format!("class_{i}")).unwrap();
            let centre = data.map.matvec(proto);
            assert!(chunk.iter().all(|r| r.values == centre));
        }
        let again = synth_generate(3, 4, 5, 3, 0.0, 2).unwrap();
        assert_eq!(again.rows, data.rows);
    }

    #[test]
    fn synth_records_rebuild_text_vectors() {
        let data = synth_generate(4, 3, 6, 3, 0.1, 5).unwrap();
        let parsed = build_records(&data.rows, &data.table).unwrap();
        assert!(parsed.warnings.is_empty());
        for r in &parsed.value {
            assert_eq!(r.text, data.table.get(&r.class.name).unwrap());
        }
    }

    #[test]
    fn synth_map_recovered_by_least_squares() {
        use nalgebra::DMatrix;
        let (c, d) = (12, 5);
        let data = synth_generate(40, 25, c, d, 0.01, 17).unwrap();
        let recs = build_records(&data.rows, &data.table).unwrap().value;
        let n = recs.len();
        let x = DMatrix::from_fn(n, d, |i, j| recs[i].text[j]);
        let y = DMatrix::from_fn(n, c, |i, j| recs[i].video[j]);
        // solve min ‖X Mᵀ − Y‖ via the normal equations
        let xtx = x.transpose() * &x;
        let mt = xtx.lu().solve(&(x.transpose() * &y)).unwrap();
        let truth = DMatrix::from_fn(d, c, |i, j| data.map.get(j, i));
        let rel = (&mt - &truth).norm() / truth.norm();
        assert!(rel < 0.05, "relative Frobenius error {rel}");
    }
}
