//! Labeled document collections and training/validation/test splits.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    /// The author.
    pub label: String,
    pub genre: Option<String>,
    /// `train` or `test` when the corpus ships its own split.
    pub split: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    /// Sorted by `doc_id`.
    pub documents: Vec<Document>,
    pub provenance: PathBuf,
    pub dedup: bool,
    /// Ids dropped as exact duplicates of an earlier document.
    pub removed_duplicates: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Manifest if `manifest.csv` exists, otherwise directories.
    #[default]
    Auto,
    /// `root/<label>/<file>`.
    Directories,
    /// `root/manifest.csv` with columns `path,label[,genre][,split]`.
    Manifest,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Layout::Auto),
            "dirs" | "directories" => Ok(Layout::Directories),
            "manifest" => Ok(Layout::Manifest),
            _ => Err(Error::Config(format!("unknown corpus layout {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    #[default]
    Author,
    Genre,
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "author" => Ok(LabelMode::Author),
            "genre" => Ok(LabelMode::Genre),
            _ => Err(Error::Config(format!("unknown label mode {s:?} (author or genre)"))),
        }
    }
}

/// Reads a UTF-8 file, reporting the byte offset of the first invalid sequence.
pub fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidUtf8 {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })
}

fn is_hidden(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with('.'))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !is_hidden(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn load_directories(root: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for author_dir in sorted_entries(root)? {
        if !author_dir.is_dir() {
            continue;
        }
        let label = author_dir
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        for file in sorted_entries(&author_dir)? {
            if !file.is_file() {
                continue;
            }
            let name = file.file_name().unwrap_or_default().to_string_lossy();
            docs.push(Document {
                doc_id: format!("{label}/{name}"),
                label: label.clone(),
                genre: None,
                split: None,
                text: read_text(&file)?,
            });
        }
    }
    Ok(docs)
}

fn load_manifest(root: &Path, manifest: &Path) -> Result<Vec<Document>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(manifest)
        .map_err(|e| Error::Data(format!("{}: {e}", manifest.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", manifest.display())))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let missing = |name: &str| {
        Error::Data(format!(
            "{}: missing required column {name:?}",
            manifest.display()
        ))
    };
    let path_col = column("path").ok_or_else(|| missing("path"))?;
    let label_col = column("label").ok_or_else(|| missing("label"))?;
    let genre_col = column("genre");
    let split_col = column("split");
    let mut docs = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("{}: {e}", manifest.display())))?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let rel = field(path_col);
        let label = field(label_col);
        if rel.is_empty() || label.is_empty() {
            return Err(Error::Data(format!(
                "{}: row {} has an empty path or label",
                manifest.display(),
                line + 2
            )));
        }
        let genre = genre_col.map(field).filter(|g| !g.is_empty());
        let split = split_col.map(field).filter(|g| !g.is_empty());
        if let Some(s) = &split {
            if s != "train" && s != "test" {
                return Err(Error::Data(format!(
                    "{}: row {}: split must be train or test, got {s:?}",
                    manifest.display(),
                    line + 2
                )));
            }
        }
        docs.push(Document {
            text: read_text(&root.join(&rel))?,
            doc_id: rel,
            label,
            genre,
            split,
        });
    }
    Ok(docs)
}

/// Reads a corpus from disk. Empty (whitespace-only) files are skipped.
pub fn load_corpus(root: &Path, layout: Layout, dedup: bool) -> Result<Corpus> {
    if !root.is_dir() {
        return Err(Error::Data(format!("corpus directory {} not found", root.display())));
    }
    let manifest = root.join(MANIFEST_NAME);
    let docs = match layout {
        Layout::Manifest => load_manifest(root, &manifest)?,
        Layout::Auto if manifest.is_file() => load_manifest(root, &manifest)?,
        _ => load_directories(root)?,
    };
    let mut corpus = Corpus::from_documents(docs, dedup)?;
    corpus.provenance = root.to_path_buf();
    Ok(corpus)
}

impl Corpus {
    /// Validates ids, drops empty texts and (optionally) exact duplicates.
    pub fn from_documents(mut docs: Vec<Document>, dedup: bool) -> Result<Corpus> {
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        if let Some(w) = docs.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(Error::Data(format!("duplicate document id {:?}", w[0].doc_id)));
        }
        docs.retain(|d| {
            let keep = !d.text.trim().is_empty();
            if !keep {
                log::warn!("skipping empty document {:?}", d.doc_id);
            }
            keep
        });
        let mut removed = Vec::new();
        if dedup {
            let mut seen = HashSet::new();
            let keep: Vec<bool> = docs.iter().map(|d| seen.insert(d.text.as_str())).collect();
            let mut it = keep.into_iter();
            docs.retain(|d| {
                let k = it.next().unwrap_or(true);
                if !k {
                    removed.push(d.doc_id.clone());
                }
                k
            });
        }
        if docs.is_empty() {
            return Err(Error::Data("corpus contains no documents".into()));
        }
        Ok(Corpus {
            documents: docs,
            provenance: PathBuf::new(),
            dedup,
            removed_duplicates: removed,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.documents[i])
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.documents.iter().map(|d| d.label.as_str()).collect()
    }

    /// Label of every document under `mode`.
    pub fn labels_for(&self, mode: LabelMode) -> Result<BTreeMap<String, String>> {
        self.documents
            .iter()
            .map(|d| {
                let label = match mode {
                    LabelMode::Author => d.label.clone(),
                    LabelMode::Genre => d.genre.clone().ok_or_else(|| {
                        Error::Data(format!("document {:?} has no genre", d.doc_id))
                    })?,
                };
                Ok((d.doc_id.clone(), label))
            })
            .collect()
    }

    fn by_author(&self) -> BTreeMap<&str, Vec<&Document>> {
        let mut map: BTreeMap<&str, Vec<&Document>> = BTreeMap::new();
        for d in &self.documents {
            map.entry(d.label.as_str()).or_default().push(d);
        }
        map
    }
}

/// Drops the first `n` characters.
pub fn strip_header(text: &str, n: usize) -> &str {
    match text.char_indices().nth(n) {
        Some((i, _)) => &text[i..],
        None => {
            if n > 0 {
                log::warn!("text of {} characters is shorter than the {n}-character header", text.chars().count());
            }
            ""
        }
    }
}

/// One chunk of one document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChunkRef {
    pub doc_id: String,
    pub chunk_index: usize,
}

/// Document-level assignment of a corpus to the four evaluation sets.
///
/// Training documents listed in `validation1` contribute their final chunk
/// there and all earlier chunks to training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub validation1: Vec<String>,
    pub validation2: Vec<String>,
    pub test: Vec<String>,
    /// Class used for training and scoring each document in the plan.
    pub labels: BTreeMap<String, String>,
    pub seed: u64,
    pub trial_index: usize,
}

/// Chunk lists of a [`SplitPlan`] once chunk counts are known.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResolvedSplit {
    pub train: Vec<ChunkRef>,
    pub validation1: Vec<ChunkRef>,
    pub validation2: Vec<ChunkRef>,
    pub test: Vec<ChunkRef>,
}

fn all_chunks(doc: &str, n: usize) -> impl Iterator<Item = ChunkRef> + '_ {
    (0..n).map(move |chunk_index| ChunkRef {
        doc_id: doc.to_string(),
        chunk_index,
    })
}

impl SplitPlan {
    pub fn class_ids(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self
            .train
            .iter()
            .filter_map(|d| self.labels.get(d).map(String::as_str))
            .collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Expands documents into chunks and checks the sets are disjoint.
    pub fn resolve(&self, chunk_counts: &HashMap<String, usize>) -> Result<ResolvedSplit> {
        let count = |d: &str| {
            chunk_counts
                .get(d)
                .copied()
                .ok_or_else(|| Error::Data(format!("no chunk count for document {d:?}")))
        };
        let v1: BTreeSet<&str> = self.validation1.iter().map(String::as_str).collect();
        let mut out = ResolvedSplit::default();
        for d in &self.train {
            let n = count(d)?;
            if v1.contains(d.as_str()) && n > 0 {
                out.train.extend(all_chunks(d, n - 1));
                out.validation1.push(ChunkRef {
                    doc_id: d.clone(),
                    chunk_index: n - 1,
                });
            } else {
                out.train.extend(all_chunks(d, n));
            }
        }
        for d in &self.validation1 {
            if !self.train.contains(d) {
                return Err(Error::Data(format!(
                    "validation-1 document {d:?} is not a training document"
                )));
            }
        }
        for d in &self.validation2 {
            out.validation2.extend(all_chunks(d, count(d)?));
        }
        for d in &self.test {
            out.test.extend(all_chunks(d, count(d)?));
        }
        out.check_disjoint()?;
        Ok(out)
    }
}

impl ResolvedSplit {
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in self
            .train
            .iter()
            .chain(&self.validation1)
            .chain(&self.validation2)
            .chain(&self.test)
        {
            if !seen.insert(c) {
                return Err(Error::Data(format!(
                    "chunk {} of {:?} appears in two sets",
                    c.chunk_index, c.doc_id
                )));
            }
        }
        Ok(())
    }
}

pub mod federalist_labels {
    pub const HAMILTON: &str = "Hamilton";
    pub const MADISON: &str = "Madison";
    pub const JAY: &str = "Jay";
    pub const JOINT: &str = "joint";
    pub const DISPUTED: &str = "disputed";
}

/// Hamilton-vs-Madison protocol: disputed essays are the test set (scored
/// against Madison), 3 Madison and 8 Hamilton essays are held out whole, and
/// every other solo essay trains with its final chunk held back.
pub fn federalist_split(corpus: &Corpus, seed: u64) -> Result<SplitPlan> {
    use federalist_labels::*;
    let mut ham = Vec::new();
    let mut mad = Vec::new();
    let mut test = Vec::new();
    for d in &corpus.documents {
        let l = d.label.as_str();
        if l.eq_ignore_ascii_case(HAMILTON) {
            ham.push(d.doc_id.clone());
        } else if l.eq_ignore_ascii_case(MADISON) {
            mad.push(d.doc_id.clone());
        } else if l.eq_ignore_ascii_case(DISPUTED) {
            test.push(d.doc_id.clone());
        } else if !(l.eq_ignore_ascii_case(JAY) || l.eq_ignore_ascii_case(JOINT)) {
            return Err(Error::Data(format!("unexpected Federalist label {l:?}")));
        }
    }
    if ham.len() < 9 || mad.len() < 4 || test.is_empty() {
        return Err(Error::Data(format!(
            "Federalist corpus needs Hamilton (>8), Madison (>3) and disputed essays; found {}, {}, {}",
            ham.len(),
            mad.len(),
            test.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mad.shuffle(&mut rng);
    ham.shuffle(&mut rng);
    let mut validation2: Vec<String> = mad[..3].iter().chain(&ham[..8]).cloned().collect();
    let mut train: Vec<String> = mad[3..].iter().chain(&ham[8..]).cloned().collect();
    validation2.sort();
    train.sort();

    let mut labels = BTreeMap::new();
    for d in &validation2 {
        labels.insert(d.clone(), corpus.get(d).map(|x| canonical(&x.label)).unwrap_or_default());
    }
    for d in &train {
        labels.insert(d.clone(), corpus.get(d).map(|x| canonical(&x.label)).unwrap_or_default());
    }
    for d in &test {
        labels.insert(d.clone(), MADISON.to_string());
    }
    Ok(SplitPlan {
        validation1: train.clone(),
        train,
        validation2,
        test,
        labels,
        seed,
        trial_index: 0,
    })
}

fn canonical(label: &str) -> String {
    if label.eq_ignore_ascii_case(federalist_labels::HAMILTON) {
        federalist_labels::HAMILTON.into()
    } else {
        federalist_labels::MADISON.into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPattern {
    /// From each block of five, withhold the 2nd and 4th (the 2nd and 3rd
    /// in the sixth block).
    Blocks,
    /// First half of each author's documents trains, second half tests.
    Half,
    /// The manifest's `split` column.
    Given,
}

impl std::str::FromStr for SplitPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blocks" | "block" => Ok(SplitPattern::Blocks),
            "half" => Ok(SplitPattern::Half),
            "given" => Ok(SplitPattern::Given),
            _ => Err(Error::Config(format!(
                "unknown split pattern {s:?} (blocks, half or given)"
            ))),
        }
    }
}

fn block_withheld(position: usize) -> bool {
    let (block, slot) = (position / 5, position % 5 + 1);
    if block == 5 {
        slot == 2 || slot == 3
    } else {
        slot == 2 || slot == 4
    }
}

/// Deterministic per-author split. Membership depends only on the authors,
/// so relabeling by genre leaves the sets unchanged.
pub fn fixed_split(corpus: &Corpus, pattern: SplitPattern, mode: LabelMode) -> Result<SplitPlan> {
    let labels = corpus.labels_for(mode)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (author, docs) in corpus.by_author() {
        match pattern {
            SplitPattern::Blocks => {
                if docs.len() % 5 != 0 {
                    log::warn!(
                        "author {author:?} has {} documents, leaving a partial block of five",
                        docs.len()
                    );
                }
                for (i, d) in docs.iter().enumerate() {
                    if block_withheld(i) {
                        test.push(d.doc_id.clone());
                    } else {
                        train.push(d.doc_id.clone());
                    }
                }
            }
            SplitPattern::Half => {
                if docs.len() < 2 {
                    log::warn!("author {author:?} has fewer than 2 documents");
                }
                let cut = docs.len().div_ceil(2);
                train.extend(docs[..cut].iter().map(|d| d.doc_id.clone()));
                test.extend(docs[cut..].iter().map(|d| d.doc_id.clone()));
            }
            SplitPattern::Given => {
                for d in docs {
                    match d.split.as_deref() {
                        Some("test") => test.push(d.doc_id.clone()),
                        Some(_) => train.push(d.doc_id.clone()),
                        None => {
                            return Err(Error::Data(format!(
                                "document {:?} has no split assignment",
                                d.doc_id
                            )))
                        }
                    }
                }
            }
        }
    }
    log::info!("fixed split: {} train, {} test documents", train.len(), test.len());
    Ok(SplitPlan {
        train,
        validation1: Vec::new(),
        validation2: Vec::new(),
        test,
        labels,
        seed: 0,
        trial_index: 0,
    })
}

/// Independent, reproducible seed for trial `index` under `master`
/// (SplitMix64 finalizer over the pair).
pub fn trial_seed(master: u64, index: usize) -> u64 {
    let mut z = master ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
