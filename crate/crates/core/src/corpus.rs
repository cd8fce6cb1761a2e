//! Labeled text corpora: CSV ingestion, stratified splits, anomaly
//! downsampling, and a deterministic synthetic multi-domain generator.
//!
//! Preprocessing is deliberately minimal — NFC Unicode normalization and
//! lowercasing, keeping punctuation, URLs and mentions intact — then a cap
//! of 128 whitespace tokens. All operations are pure given (input, seed).

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::{derive_seed, Error, Result};

/// Hard cap on whitespace tokens kept per record.
pub const MAX_TOKENS: usize = 128;

pub const LABEL_NORMAL: u8 = 0;
pub const LABEL_ANOMALY: u8 = 1;

/// One labeled text with its source domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextRecord {
    pub text: String,
    /// 0 = normal, 1 = anomaly.
    pub label: u8,
    pub domain: String,
}

impl TextRecord {
    pub fn is_anomaly(&self) -> bool {
        self.label == LABEL_ANOMALY
    }
}

/// A domain's records split three ways.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    pub domain: String,
    pub train: Vec<TextRecord>,
    pub val: Vec<TextRecord>,
    pub test: Vec<TextRecord>,
}

pub fn count_classes(records: &[TextRecord]) -> (usize, usize) {
    let anom = records.iter().filter(|r| r.is_anomaly()).count();
    (records.len() - anom, anom)
}

pub fn anomaly_rate(records: &[TextRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let (_, anom) = count_classes(records);
    anom as f64 / records.len() as f64
}

/// NFC-normalize, lowercase, and truncate to [`MAX_TOKENS`] whitespace
/// tokens. Punctuation and symbols are kept; whitespace collapses to
/// single spaces so featurization sees a canonical character stream.
pub fn preprocess_text(raw: &str) -> String {
    let normalized: String = raw.nfc().collect::<String>().to_lowercase();
    let tokens: Vec<&str> = normalized.split_whitespace().take(MAX_TOKENS).collect();
    tokens.join(" ")
}

/// Loads a raw labeled CSV into preprocessed records. `label_map` sends
/// raw label strings to 0/1; any unmapped value fails with its row index.
pub fn load_csv(
    path: &Path,
    domain: &str,
    text_column: &str,
    label_column: &str,
    label_map: &BTreeMap<String, u8>,
) -> Result<Vec<TextRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column '{name}'", path.display())))
    };
    let text_idx = find(text_column)?;
    let label_idx = find(label_column)?;

    let mut records = Vec::new();
    for (row, result) in reader.byte_records().enumerate() {
        let record = result.map_err(|e| Error::csv(path, e))?;
        let text = String::from_utf8_lossy(record.get(text_idx).unwrap_or(b"")).into_owned();
        let raw_label =
            String::from_utf8_lossy(record.get(label_idx).unwrap_or(b"")).trim().to_string();
        let label = *label_map.get(&raw_label).ok_or_else(|| {
            Error::Config(format!(
                "{}: row {}: unmapped label value '{raw_label}'",
                path.display(),
                row + 1
            ))
        })?;
        records.push(TextRecord {
            text: preprocess_text(&text),
            label,
            domain: domain.to_string(),
        });
    }
    if records.is_empty() {
        return Err(Error::Data(format!("{}: empty dataset", path.display())));
    }
    Ok(records)
}

/// Largest-remainder apportionment of `n` items over `fractions`; every
/// part is within one of its real-valued ideal.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let ideals: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut parts: Vec<usize> = ideals.iter().map(|&x| x.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = ideals[a] - ideals[a].floor();
        let fb = ideals[b] - ideals[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n - assigned) {
        parts[i] += 1;
    }
    [parts[0], parts[1], parts[2]]
}

/// Stratified train/val/test split: class proportions in each split stay
/// within ±1 record of the ideal, and the three splits partition the
/// input. Deterministic given seed.
pub fn split_stratified(
    records: &[TextRecord],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DomainDataset> {
    let fracs = [fractions.0, fractions.1, fractions.2];
    if fracs.iter().any(|&f| f <= 0.0) {
        return Err(Error::Config("split fractions must be positive".into()));
    }
    if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must sum to 1, got {:.6}",
            fracs.iter().sum::<f64>()
        )));
    }
    let domain = records.first().map(|r| r.domain.clone()).unwrap_or_default();
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in records.iter().enumerate() {
        by_class[r.label as usize].push(i);
    }
    if by_class[0].is_empty() || by_class[1].is_empty() {
        return Err(Error::Data(format!("domain '{domain}': both classes required for a split")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits: [Vec<TextRecord>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for class_indices in &mut by_class {
        class_indices.shuffle(&mut rng);
        let parts = apportion(class_indices.len(), &fracs);
        if parts.iter().any(|&p| p == 0) {
            return Err(Error::Data(format!(
                "domain '{domain}': a split would receive zero records of a class \
                 ({} records apportioned {:?})",
                class_indices.len(),
                parts
            )));
        }
        let mut cursor = 0;
        for (split, &take) in splits.iter_mut().zip(parts.iter()) {
            for &idx in &class_indices[cursor..cursor + take] {
                split.push(records[idx].clone());
            }
            cursor += take;
        }
    }
    for split in &mut splits {
        split.shuffle(&mut rng);
    }
    let [train, val, test] = splits;
    Ok(DomainDataset { domain, train, val, test })
}

/// Number of anomalies to keep so that the post-downsampling rate is
/// `target_rate` with all `n_normal` normals retained.
pub fn downsample_keep_count(target_rate: f64, n_normal: usize) -> usize {
    (target_rate * n_normal as f64 / (1.0 - target_rate)).round() as usize
}

/// Downsamples anomalies to `target_rate`, keeping every normal. Returns
/// the input unchanged when the rate is already at or below the target.
/// The kept anomalies are a uniform sample without replacement and the
/// result is shuffled, both deterministic given seed.
pub fn downsample_anomalies(
    split: &[TextRecord],
    target_rate: f64,
    seed: u64,
) -> Result<Vec<TextRecord>> {
    if !(0.0..1.0).contains(&target_rate) || target_rate <= 0.0 {
        return Err(Error::Config(format!("target anomaly rate must be in (0,1), got {target_rate}")));
    }
    let (n_normal, n_anom) = count_classes(split);
    if n_anom == 0 || anomaly_rate(split) <= target_rate {
        return Ok(split.to_vec());
    }
    let keep = downsample_keep_count(target_rate, n_normal);
    if keep == 0 {
        return Err(Error::Data(format!(
            "downsampling to rate {target_rate} over {n_normal} normals would keep 0 anomalies"
        )));
    }
    let keep = keep.min(n_anom);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anom_indices: Vec<usize> =
        split.iter().enumerate().filter(|(_, r)| r.is_anomaly()).map(|(i, _)| i).collect();
    anom_indices.shuffle(&mut rng);
    let kept: HashSet<usize> = anom_indices.into_iter().take(keep).collect();
    let mut out: Vec<TextRecord> = split
        .iter()
        .enumerate()
        .filter(|(i, r)| !r.is_anomaly() || kept.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// Raises a split's anomaly rate to `target_rate` by downsampling
/// normals, keeping every anomaly. No-op when the split is already at or
/// above the target. Used to rebalance test splits for evaluation.
pub fn rebalance_split(
    split: &[TextRecord],
    target_rate: f64,
    seed: u64,
) -> Result<Vec<TextRecord>> {
    if target_rate <= 0.0 || target_rate >= 1.0 {
        return Err(Error::Config(format!("rebalance rate must be in (0,1), got {target_rate}")));
    }
    let (_, n_anom) = count_classes(split);
    if n_anom == 0 || anomaly_rate(split) >= target_rate {
        return Ok(split.to_vec());
    }
    let keep_normals = (n_anom as f64 * (1.0 - target_rate) / target_rate).round() as usize;
    if keep_normals == 0 {
        return Err(Error::Data(format!(
            "rebalancing to rate {target_rate} would keep 0 normals"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut norm_indices: Vec<usize> =
        split.iter().enumerate().filter(|(_, r)| !r.is_anomaly()).map(|(i, _)| i).collect();
    norm_indices.shuffle(&mut rng);
    let kept: HashSet<usize> = norm_indices.into_iter().take(keep_normals).collect();
    let mut out: Vec<TextRecord> = split
        .iter()
        .enumerate()
        .filter(|(i, r)| r.is_anomaly() || kept.contains(i))
        .map(|(_, r)| r.clone())
        .collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// Synthetic multi-domain corpus configuration.
///
/// Each domain gets its own normal vocabulary and anomaly vocabulary; a
/// shared filler vocabulary appears in both classes and a shared anomaly
/// pool contributes a fixed 40% of every domain's anomaly vocabulary,
/// giving anomalies a cross-domain transferable signal. All token sets
/// are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_domains: usize,
    pub normal_vocab_size: usize,
    pub shared_filler_size: usize,
    pub anomaly_vocab_size: usize,
    pub shared_anomaly_pool_size: usize,
    pub docs_per_domain: usize,
    pub anomaly_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

/// Fraction of each domain's anomaly vocabulary drawn from the shared pool.
pub const SHARED_ANOMALY_FRACTION: f64 = 0.4;
/// Fraction of a normal document's tokens from its domain vocabulary.
const NORMAL_DOMAIN_FRACTION: f64 = 0.7;
/// Fraction of an anomaly document's tokens from its anomaly vocabulary.
const ANOMALY_VOCAB_FRACTION: f64 = 0.4;
/// Synthetic corpora are split 60/20/20 like the real datasets.
pub const SYNTH_FRACTIONS: (f64, f64, f64) = (0.6, 0.2, 0.2);

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_domains: 3,
            normal_vocab_size: 120,
            shared_filler_size: 200,
            anomaly_vocab_size: 50,
            shared_anomaly_pool_size: 20,
            docs_per_domain: 1000,
            anomaly_rate: 0.05,
            min_len: 6,
            max_len: 14,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn shared_take(&self) -> usize {
        (SHARED_ANOMALY_FRACTION * self.anomaly_vocab_size as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_domains == 0 || self.docs_per_domain == 0 {
            return Err(Error::Config("synth: n_domains and docs_per_domain must be >= 1".into()));
        }
        if !(self.anomaly_rate > 0.0 && self.anomaly_rate < 0.5) {
            return Err(Error::Config(format!(
                "synth.anomaly_rate must be in (0, 0.5), got {}",
                self.anomaly_rate
            )));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("synth: need 1 <= min_len <= max_len".into()));
        }
        if self.normal_vocab_size == 0
            || self.shared_filler_size == 0
            || self.anomaly_vocab_size == 0
        {
            return Err(Error::Config("synth: vocabulary sizes must be >= 1".into()));
        }
        if self.shared_take() > self.shared_anomaly_pool_size {
            return Err(Error::Config(format!(
                "synth: shared pool of {} cannot supply {} tokens per domain",
                self.shared_anomaly_pool_size,
                self.shared_take()
            )));
        }
        Ok(())
    }
}

fn fresh_word(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let len = rng.random_range(4..=8);
        let word: String =
            (0..len).map(|_| (b'a' + rng.random_range(0..26u8)) as char).collect();
        if used.insert(word.clone()) {
            return word;
        }
    }
}

fn fresh_vocab(rng: &mut ChaCha8Rng, used: &mut HashSet<String>, n: usize) -> Vec<String> {
    (0..n).map(|_| fresh_word(rng, used)).collect()
}

/// Composes a document of length `len`: `primary_count` tokens uniform
/// from `primary`, the rest uniform from `filler`, positions shuffled.
fn compose_doc(
    rng: &mut ChaCha8Rng,
    primary: &[String],
    filler: &[String],
    len: usize,
    primary_count: usize,
) -> String {
    let mut tokens: Vec<&str> = Vec::with_capacity(len);
    for _ in 0..primary_count {
        tokens.push(primary[rng.random_range(0..primary.len())].as_str());
    }
    for _ in primary_count..len {
        tokens.push(filler[rng.random_range(0..filler.len())].as_str());
    }
    tokens.shuffle(rng);
    tokens.join(" ")
}

/// Token sets behind a generated corpus; exposed so tests can check the
/// disjointness and transfer-signal properties directly.
#[derive(Debug, Clone)]
pub struct SynthVocabularies {
    pub normal: Vec<Vec<String>>,
    pub filler: Vec<String>,
    pub anomaly_pool: Vec<String>,
    pub anomaly: Vec<Vec<String>>,
}

pub fn synth_vocabularies(config: &SynthConfig) -> Result<SynthVocabularies> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x56_4f_43));
    let mut used = HashSet::new();
    let normal: Vec<Vec<String>> = (0..config.n_domains)
        .map(|_| fresh_vocab(&mut rng, &mut used, config.normal_vocab_size))
        .collect();
    let filler = fresh_vocab(&mut rng, &mut used, config.shared_filler_size);
    let anomaly_pool = fresh_vocab(&mut rng, &mut used, config.shared_anomaly_pool_size);
    let shared_take = config.shared_take();
    let anomaly: Vec<Vec<String>> = (0..config.n_domains)
        .map(|_| {
            let mut vocab =
                fresh_vocab(&mut rng, &mut used, config.anomaly_vocab_size - shared_take);
            let mut pool_indices: Vec<usize> = (0..anomaly_pool.len()).collect();
            pool_indices.shuffle(&mut rng);
            vocab.extend(pool_indices.into_iter().take(shared_take).map(|i| anomaly_pool[i].clone()));
            vocab
        })
        .collect();
    Ok(SynthVocabularies { normal, filler, anomaly_pool, anomaly })
}

/// Generates a deterministic multi-domain corpus and splits each domain
/// 60/20/20. Normal documents are 70% domain vocabulary / 30% filler;
/// anomalies are 40% anomaly vocabulary / 60% filler, so every anomaly of
/// length ≥ 2 carries at least one token no normal document can contain.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Vec<DomainDataset>> {
    let vocabs = synth_vocabularies(config)?;
    let n_anom = (config.anomaly_rate * config.docs_per_domain as f64).round() as usize;
    let n_norm = config.docs_per_domain - n_anom;
    if n_anom == 0 {
        return Err(Error::Config("synth: anomaly_rate yields zero anomalies per domain".into()));
    }

    let mut datasets = Vec::with_capacity(config.n_domains);
    for d in 0..config.n_domains {
        let domain = format!("dom{d}");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1 + d as u64));
        let mut records = Vec::with_capacity(config.docs_per_domain);
        for _ in 0..n_norm {
            let len = rng.random_range(config.min_len..=config.max_len);
            let primary = (NORMAL_DOMAIN_FRACTION * len as f64).round() as usize;
            records.push(TextRecord {
                text: compose_doc(&mut rng, &vocabs.normal[d], &vocabs.filler, len, primary),
                label: LABEL_NORMAL,
                domain: domain.clone(),
            });
        }
        for _ in 0..n_anom {
            let len = rng.random_range(config.min_len..=config.max_len);
            let primary = (ANOMALY_VOCAB_FRACTION * len as f64).round() as usize;
            records.push(TextRecord {
                text: compose_doc(&mut rng, &vocabs.anomaly[d], &vocabs.filler, len, primary),
                label: LABEL_ANOMALY,
                domain: domain.clone(),
            });
        }
        let split_seed = derive_seed(config.seed, 1000 + d as u64);
        datasets.push(split_stratified(&records, SYNTH_FRACTIONS, split_seed)?);
    }
    Ok(datasets)
}

/// `<domain>_{train,val,test}.csv` path under `dir`.
pub fn split_path(dir: &Path, domain: &str, split: &str) -> PathBuf {
    dir.join(format!("{domain}_{split}.csv"))
}

fn write_split(path: &Path, records: &[TextRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer.write_record(["text", "label"]).map_err(|e| Error::csv(path, e))?;
    for r in records {
        writer
            .write_record([r.text.as_str(), if r.is_anomaly() { "1" } else { "0" }])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes the three processed split files for a domain.
pub fn save_dataset(dataset: &DomainDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_split(&split_path(dir, &dataset.domain, "train"), &dataset.train)?;
    write_split(&split_path(dir, &dataset.domain, "val"), &dataset.val)?;
    write_split(&split_path(dir, &dataset.domain, "test"), &dataset.test)?;
    Ok(())
}

fn read_split(path: &Path, domain: &str) -> Result<Vec<TextRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let record = result.map_err(|e| Error::csv(path, e))?;
        let text = record.get(0).unwrap_or("").to_string();
        let label = match record.get(1).map(str::trim) {
            Some("0") => LABEL_NORMAL,
            Some("1") => LABEL_ANOMALY,
            other => {
                return Err(Error::Data(format!(
                    "{}: row {}: label must be 0 or 1, got {other:?}",
                    path.display(),
                    row + 1
                )))
            }
        };
        records.push(TextRecord { text, label, domain: domain.to_string() });
    }
    Ok(records)
}

/// Loads one domain's processed splits from `dir`.
pub fn load_dataset(dir: &Path, domain: &str) -> Result<DomainDataset> {
    Ok(DomainDataset {
        domain: domain.to_string(),
        train: read_split(&split_path(dir, domain, "train"), domain)?,
        val: read_split(&split_path(dir, domain, "val"), domain)?,
        test: read_split(&split_path(dir, domain, "test"), domain)?,
    })
}

/// Discovers domains in a processed-data directory by their
/// `<domain>_train.csv` files, sorted by name.
pub fn discover_domains(dir: &Path) -> Result<Vec<String>> {
    let mut domains = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(domain) = name.strip_suffix("_train.csv") {
            domains.push(domain.to_string());
        }
    }
    domains.sort();
    if domains.is_empty() {
        return Err(Error::Data(format!("no `<domain>_train.csv` files found in {}", dir.display())));
    }
    Ok(domains)
}

/// Loads every domain found in `dir`.
pub fn load_all_datasets(dir: &Path) -> Result<Vec<DomainDataset>> {
    discover_domains(dir)?.iter().map(|d| load_dataset(dir, d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn record(text: &str, label: u8) -> TextRecord {
        TextRecord { text: text.to_string(), label, domain: "t".to_string() }
    }

    fn mixed(n_normal: usize, n_anom: usize) -> Vec<TextRecord> {
        let mut v = Vec::new();
        for i in 0..n_normal {
            v.push(record(&format!("normal {i}"), LABEL_NORMAL));
        }
        for i in 0..n_anom {
            v.push(record(&format!("anomaly {i}"), LABEL_ANOMALY));
        }
        v
    }

    #[test]
    fn preprocess_lowercases_normalizes_and_truncates() {
        assert_eq!(preprocess_text("Hello WORLD!!"), "hello world!!");
        // e + combining acute composes to é under NFC.
        assert_eq!(preprocess_text("Cafe\u{0301}"), "caf\u{e9}");
        assert_eq!(preprocess_text(""), "");
        assert_eq!(preprocess_text("$$$ WIN @now http://x.co"), "$$$ win @now http://x.co");
        let long: String = (0..300).map(|i| format!("w{i} ")).collect();
        assert_eq!(preprocess_text(&long).split_whitespace().count(), MAX_TOKENS);
    }

    #[test]
    fn load_csv_maps_labels_and_reports_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "text,label").unwrap();
        writeln!(f, "\"Congratulations! You've won a $1000 gift card\",spam").unwrap();
        writeln!(f, "see you at noon,ham").unwrap();
        drop(f);
        let map: BTreeMap<String, u8> =
            [("ham".to_string(), 0u8), ("spam".to_string(), 1u8)].into_iter().collect();
        let records = load_csv(&path, "sms", "text", "label", &map).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].label, LABEL_ANOMALY);
        assert_eq!(records[0].text, "congratulations! you've won a $1000 gift card");
        assert_eq!(records[1].label, LABEL_NORMAL);

        // Unmapped label fails with the row index.
        let path2 = dir.path().join("bad.csv");
        let mut f = std::fs::File::create(&path2).unwrap();
        writeln!(f, "text,label\nhi,maybe").unwrap();
        drop(f);
        let err = load_csv(&path2, "sms", "text", "label", &map).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("row 1") && m.contains("maybe")));
    }

    #[test]
    fn load_csv_missing_file_and_column() {
        let map: BTreeMap<String, u8> = [("x".to_string(), 0u8)].into_iter().collect();
        assert!(matches!(
            load_csv(Path::new("/nonexistent/f.csv"), "d", "text", "label", &map),
            Err(Error::Io { .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cols.csv");
        std::fs::write(&path, "body,tag\nhi,x\n").unwrap();
        assert!(matches!(
            load_csv(&path, "d", "text", "label", &map),
            Err(Error::Config(ref m)) if m.contains("text")
        ));
    }

    #[test]
    fn stratified_split_counts_match_hand_arithmetic() {
        let records = mixed(90, 10);
        let ds = split_stratified(&records, (0.6, 0.2, 0.2), 11).unwrap();
        let counts =
            |s: &[TextRecord]| (count_classes(s).0, count_classes(s).1);
        assert_eq!(counts(&ds.train), (54, 6));
        assert_eq!(counts(&ds.val), (18, 2));
        assert_eq!(counts(&ds.test), (18, 2));
    }

    #[test]
    fn stratified_split_is_deterministic_and_partitions() {
        let records = mixed(37, 9);
        let a = split_stratified(&records, (0.6, 0.2, 0.2), 5).unwrap();
        let b = split_stratified(&records, (0.6, 0.2, 0.2), 5).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn stratified_split_rejects_bad_fractions_and_thin_classes() {
        let records = mixed(10, 5);
        assert!(matches!(
            split_stratified(&records, (0.5, 0.5, 0.5), 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split_stratified(&records, (0.6, -0.2, 0.6), 1),
            Err(Error::Config(_))
        ));
        // 2 anomalies cannot give every split one.
        let thin = mixed(30, 2);
        assert!(matches!(split_stratified(&thin, (0.6, 0.2, 0.2), 1), Err(Error::Data(_))));
        // Single-class input is rejected.
        let single = mixed(30, 0);
        assert!(matches!(split_stratified(&single, (0.6, 0.2, 0.2), 1), Err(Error::Data(_))));
    }

    #[test]
    fn downsample_keeps_formula_count() {
        // 4825 normals at 3% keeps 149 of 653 anomalies.
        assert_eq!(downsample_keep_count(0.03, 4825), 149);
        assert_eq!(downsample_keep_count(0.03, 100), 3);

        let split = mixed(4825, 653);
        let out = downsample_anomalies(&split, 0.03, 3).unwrap();
        let (n_norm, n_anom) = count_classes(&out);
        assert_eq!((n_norm, n_anom), (4825, 149));
        let rate = anomaly_rate(&out);
        assert!(rate > 0.029 && rate < 0.0305, "rate {rate}");
    }

    #[test]
    fn downsample_noop_when_already_below_target() {
        let split = mixed(100, 2); // ~1.96%
        let out = downsample_anomalies(&split, 0.03, 3).unwrap();
        assert_eq!(out.len(), split.len());
        let (n, a) = count_classes(&out);
        assert_eq!((n, a), (100, 2));
    }

    #[test]
    fn downsample_never_drops_normals_or_duplicates() {
        let split = mixed(50, 20);
        let out = downsample_anomalies(&split, 0.1, 9).unwrap();
        let (n_norm, n_anom) = count_classes(&out);
        assert_eq!(n_norm, 50);
        assert_eq!(n_anom, downsample_keep_count(0.1, 50));
        let mut texts: Vec<&str> = out.iter().map(|r| r.text.as_str()).collect();
        texts.sort_unstable();
        texts.dedup();
        assert_eq!(texts.len(), out.len(), "no duplicates");
        // Deterministic.
        assert_eq!(out, downsample_anomalies(&split, 0.1, 9).unwrap());
    }

    #[test]
    fn downsample_zero_keep_is_an_error() {
        let split = mixed(5, 3); // keep = round(0.03*5/0.97) = 0
        assert!(matches!(downsample_anomalies(&split, 0.03, 1), Err(Error::Data(_))));
    }

    #[test]
    fn rebalance_raises_rate_by_dropping_normals() {
        let split = mixed(190, 10); // 5%
        let out = rebalance_split(&split, 0.2, 4).unwrap();
        let (n_norm, n_anom) = count_classes(&out);
        assert_eq!(n_anom, 10);
        assert_eq!(n_norm, 40);
        // Already above target: unchanged.
        let out2 = rebalance_split(&out, 0.1, 4).unwrap();
        assert_eq!(out2.len(), out.len());
    }

    #[test]
    fn synthetic_corpus_shapes_and_determinism() {
        let config = SynthConfig { docs_per_domain: 200, ..SynthConfig::default() };
        let a = generate_synthetic(&config).unwrap();
        let b = generate_synthetic(&config).unwrap();
        assert_eq!(a.len(), 3);
        for (da, db) in a.iter().zip(&b) {
            assert_eq!(da.train, db.train);
            assert_eq!(da.val, db.val);
            assert_eq!(da.test, db.test);
            let all: Vec<TextRecord> =
                da.train.iter().chain(&da.val).chain(&da.test).cloned().collect();
            let (n_norm, n_anom) = count_classes(&all);
            assert_eq!(n_norm + n_anom, 200);
            assert_eq!(n_anom, 10); // 5% of 200
        }
    }

    #[test]
    fn synthetic_vocabularies_are_disjoint() {
        let config = SynthConfig::default();
        let v = synth_vocabularies(&config).unwrap();
        let mut seen: HashSet<&str> = HashSet::new();
        for vocab in v.normal.iter().chain([&v.filler]) {
            for w in vocab {
                assert!(seen.insert(w), "token {w} reused");
            }
        }
        // Anomaly vocabularies never intersect any normal vocabulary or
        // the filler; across domains they may share pool tokens only.
        for (d, vocab) in v.anomaly.iter().enumerate() {
            assert_eq!(vocab.len(), config.anomaly_vocab_size);
            for w in vocab {
                assert!(!seen.contains(w.as_str()), "anomaly token {w} in normal/filler (domain {d})");
            }
            let in_pool = vocab.iter().filter(|w| v.anomaly_pool.contains(w)).count();
            assert_eq!(in_pool, (SHARED_ANOMALY_FRACTION * config.anomaly_vocab_size as f64).round() as usize);
        }
    }

    #[test]
    fn synthetic_anomalies_carry_out_of_vocabulary_tokens() {
        let config = SynthConfig { docs_per_domain: 120, ..SynthConfig::default() };
        let v = synth_vocabularies(&config).unwrap();
        let normal_tokens: HashSet<&str> = v
            .normal
            .iter()
            .flatten()
            .chain(v.filler.iter())
            .map(String::as_str)
            .collect();
        for ds in generate_synthetic(&config).unwrap() {
            for r in ds.train.iter().chain(&ds.val).chain(&ds.test) {
                if r.is_anomaly() {
                    assert!(
                        r.text.split_whitespace().any(|t| !normal_tokens.contains(t)),
                        "anomaly '{}' has only normal-vocabulary tokens",
                        r.text
                    );
                }
            }
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig { docs_per_domain: 100, ..SynthConfig::default() };
        let datasets = generate_synthetic(&config).unwrap();
        for ds in &datasets {
            save_dataset(ds, dir.path()).unwrap();
        }
        let domains = discover_domains(dir.path()).unwrap();
        assert_eq!(domains, vec!["dom0", "dom1", "dom2"]);
        let loaded = load_all_datasets(dir.path()).unwrap();
        for (a, b) in datasets.iter().zip(&loaded) {
            assert_eq!(a.train, b.train);
            assert_eq!(a.val, b.val);
            assert_eq!(a.test, b.test);
        }
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n_norm in 6usize..60, n_anom in 6usize..30, seed in 0u64..1000) {
            let records = mixed(n_norm, n_anom);
            let ds = split_stratified(&records, (0.6, 0.2, 0.2), seed).unwrap();
            let mut all: Vec<String> = ds.train.iter().chain(&ds.val).chain(&ds.test)
                .map(|r| r.text.clone()).collect();
            all.sort();
            let mut want: Vec<String> = records.iter().map(|r| r.text.clone()).collect();
            want.sort();
            prop_assert_eq!(all, want);
            let (tn, ta) = count_classes(&ds.train);
            // Within one of the stratified ideal.
            prop_assert!((tn as f64 - 0.6 * n_norm as f64).abs() <= 1.0);
            prop_assert!((ta as f64 - 0.6 * n_anom as f64).abs() <= 1.0);
        }
    }
}
