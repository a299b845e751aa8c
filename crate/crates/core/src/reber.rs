//! Reber grammar: validation, generation of valid and corrupted strings,
//! and labelled train/test datasets persisted as CSV with a JSON sidecar.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const ALPHABET: [char; 7] = ['B', 'E', 'P', 'S', 'T', 'V', 'X'];
pub const DEFAULT_MIN_LEN: usize = 11;
/// Longest run a self-loop may emit during generation.
pub const MAX_LOOP_REPEATS: usize = 20;

const START: u8 = 0;
const ACCEPT: u8 = 7;

/// Transition table of the grammar. State 7 is the accepting state.
const TRANSITIONS: [(u8, char, u8); 11] = [
    (0, 'B', 1),
    (1, 'T', 2),
    (1, 'P', 3),
    (2, 'S', 2),
    (2, 'X', 4),
    (3, 'T', 3),
    (3, 'V', 5),
    (4, 'X', 3),
    (4, 'S', 6),
    (5, 'P', 4),
    (5, 'V', 6),
];

fn step(state: u8, c: char) -> Option<u8> {
    if state == 6 && c == 'E' {
        return Some(ACCEPT);
    }
    TRANSITIONS
        .iter()
        .find(|&&(s, ch, _)| s == state && ch == c)
        .map(|&(_, _, next)| next)
}

fn successors(state: u8) -> impl Iterator<Item = (char, u8)> {
    let tail = (state == 6).then_some(('E', ACCEPT));
    TRANSITIONS
        .iter()
        .filter(move |&&(s, _, _)| s == state)
        .map(|&(_, c, n)| (c, n))
        .chain(tail)
}

/// True iff the whole string is consumed by a walk from the start state
/// that ends in the accepting state.
pub fn validate(text: &str) -> bool {
    let mut state = START;
    for c in text.chars() {
        if state == ACCEPT {
            return false;
        }
        match step(state, c) {
            Some(next) => state = next,
            None => return false,
        }
    }
    state == ACCEPT
}

fn walk(rng: &mut Rng) -> String {
    let mut out = String::new();
    let mut state = START;
    let mut run = 0usize;
    while state != ACCEPT {
        let mut options: Vec<(char, u8)> = successors(state).collect();
        if run >= MAX_LOOP_REPEATS {
            options.retain(|&(_, next)| next != state);
        }
        let (c, next) = options[rng.below(options.len())];
        run = if next == state { run + 1 } else { 0 };
        out.push(c);
        state = next;
    }
    out
}

/// Random walk through the grammar, resampled until at least `min_len` long.
pub fn generate_true(rng: &mut Rng, min_len: usize) -> Result<String> {
    check_min_len(min_len)?;
    loop {
        let s = walk(rng);
        if s.len() >= min_len {
            return Ok(s);
        }
    }
}

/// Replaces `k` distinct interior characters with uniform `A`-`Z` letters.
/// The first and last characters are preserved.
pub fn corrupt(text: &str, k: usize, rng: &mut Rng) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    if chars.len() < 3 {
        return text.to_string();
    }
    let interior = chars.len() - 2;
    for idx in rng.sample_indices(interior, k.min(interior)) {
        chars[idx + 1] = (b'A' + rng.below(26) as u8) as char;
    }
    chars.into_iter().collect()
}

/// A valid string with one to three interior positions substituted, retried
/// until the result is rejected by the grammar.
pub fn generate_false(rng: &mut Rng, min_len: usize) -> Result<String> {
    let base = generate_true(rng, min_len)?;
    loop {
        let k = rng.range(1, 4);
        let candidate = corrupt(&base, k, rng);
        if !validate(&candidate) {
            return Ok(candidate);
        }
    }
}

fn check_min_len(min_len: usize) -> Result<()> {
    if min_len < 5 {
        return Err(Error::domain(format!("min_len {min_len} < 5")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub text: String,
    pub label: u8,
}

impl LabeledSequence {
    pub fn new(text: impl Into<String>, label: u8) -> Self {
        LabeledSequence {
            text: text.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<LabeledSequence>,
    pub test: Vec<LabeledSequence>,
    pub seed: u64,
    pub min_len: usize,
}

/// Number of training rows for a pool of `n_total` sequences (75 %).
pub fn train_count(n_total: usize) -> usize {
    n_total * 3 / 4
}

/// Half valid and half corrupted strings, shuffled and split 75/25 by index.
pub fn build_dataset(n_total: usize, seed: u64, min_len: usize) -> Result<Dataset> {
    if n_total < 2 || !n_total.is_multiple_of(2) {
        return Err(Error::domain(format!(
            "dataset size must be even and >= 2, got {n_total}"
        )));
    }
    check_min_len(min_len)?;
    let mut rng = Rng::new(seed);
    let half = n_total / 2;
    let mut pool = Vec::with_capacity(n_total);
    for _ in 0..half {
        pool.push(LabeledSequence::new(generate_true(&mut rng, min_len)?, 1));
    }
    for _ in 0..half {
        pool.push(LabeledSequence::new(generate_false(&mut rng, min_len)?, 0));
    }
    rng.shuffle(&mut pool);
    let test = pool.split_off(train_count(n_total));
    Ok(Dataset {
        train: pool,
        test,
        seed,
        min_len,
    })
}

pub fn length_histogram(seqs: &[LabeledSequence]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in seqs {
        *hist.entry(s.text.chars().count()).or_insert(0) += 1;
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub valid: usize,
    pub invalid: usize,
}

impl ClassCounts {
    pub fn of(seqs: &[LabeledSequence]) -> Self {
        let valid = seqs.iter().filter(|s| s.label == 1).count();
        ClassCounts {
            valid,
            invalid: seqs.len() - valid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub n_total: usize,
    pub min_len: usize,
    pub train: ClassCounts,
    pub test: ClassCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl Dataset {
    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            seed: self.seed,
            n_total: self.train.len() + self.test.len(),
            min_len: self.min_len,
            train: ClassCounts::of(&self.train),
            test: ClassCounts::of(&self.test),
            tool: None,
            config_hash: None,
        }
    }

    pub fn paths(prefix: &Path) -> (PathBuf, PathBuf, PathBuf) {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        (with(".train.csv"), with(".test.csv"), with(".meta.json"))
    }

    /// Writes `<prefix>.train.csv`, `<prefix>.test.csv` and `<prefix>.meta.json`.
    /// `banner`, when given, becomes a leading `#` comment line in each CSV.
    pub fn save(&self, prefix: &Path, banner: Option<&str>, meta: &DatasetMeta) -> Result<()> {
        let (train, test, meta_path) = Self::paths(prefix);
        write_sequences(&train, &self.train, banner)?;
        write_sequences(&test, &self.test, banner)?;
        let mut f = BufWriter::new(File::create(meta_path)?);
        serde_json::to_writer_pretty(&mut f, meta)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn load(prefix: &Path) -> Result<Dataset> {
        let (train, test, meta_path) = Self::paths(prefix);
        let meta: DatasetMeta = serde_json::from_reader(File::open(meta_path)?)?;
        Ok(Dataset {
            train: read_sequences(&train)?,
            test: read_sequences(&test)?,
            seed: meta.seed,
            min_len: meta.min_len,
        })
    }
}

pub fn write_sequences(path: &Path, seqs: &[LabeledSequence], banner: Option<&str>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    if let Some(b) = banner {
        writeln!(out, "# {b}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["label", "sequence"])?;
        for s in seqs {
            w.write_record([s.label.to_string().as_str(), s.text.as_str()])?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sequences(path: &Path) -> Result<Vec<LabeledSequence>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["label", "sequence"] {
        return Err(Error::Parse(format!(
            "{}: expected header label,sequence",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label: u8 = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad label {:?}", &rec[0])))?;
        if label > 1 {
            return Err(Error::Parse(format!("label {label} not in {{0,1}}")));
        }
        let text = rec[1].to_string();
        if !text.is_ascii() {
            return Err(Error::input(format!("non-ASCII sequence {text:?}")));
        }
        out.push(LabeledSequence { text, label });
    }
    Ok(out)
}
