//! End-to-end pipeline: text → chunks → images → classifier → attributions,
//! plus the multi-trial, sweep and self-similarity experiments.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{encode, normalize_text, Base4Sequence, EquivalenceTable};
use crate::attribute::{aggregate, apply_noa, AttributionResult, Decision, NoaThresholds};
use crate::cgr::{fcgr, render, GrayImage};
use crate::chunker::split_document;
use crate::classify::ftt_pca::train_ftt_pca;
use crate::classify::lr::train_lr;
use crate::classify::svm::train_svm;
use crate::classify::{ClassifierKind, LabeledImage, ScoreVector, TrainedModel};
use crate::config::RunConfig;
use crate::corpus::{federalist_split, fixed_split, strip_header, trial_seed, ChunkRef, Corpus, SplitPlan};
use crate::error::{Error, Result};
use crate::model_io::Preprocessing;

/// Turns raw document text into chunk images.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub table: EquivalenceTable,
    pub k: usize,
    pub chunk_size: usize,
    pub strip_diacritics: bool,
    pub header_strip_chars: usize,
}

impl Preprocessor {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(Preprocessor {
            table: cfg.equivalence_table()?,
            k: cfg.k,
            chunk_size: cfg.chunk_size,
            strip_diacritics: cfg.strip_diacritics,
            header_strip_chars: cfg.header_strip_chars,
        })
    }

    /// Rebuilds the preprocessing a model was trained with. Fails if `table`
    /// is not the table the model saw.
    pub fn for_model(p: &Preprocessing, table: EquivalenceTable) -> Result<Self> {
        if table.hash_hex() != p.table_hash {
            return Err(Error::Model(format!(
                "model was trained with character table {} but the current table is {}",
                p.table_hash,
                table.hash_hex()
            )));
        }
        Ok(Preprocessor {
            table,
            k: p.k,
            chunk_size: p.chunk_size,
            strip_diacritics: p.strip_diacritics,
            header_strip_chars: p.header_strip_chars,
        })
    }

    pub fn preprocessing(&self) -> Preprocessing {
        Preprocessing {
            k: self.k,
            chunk_size: self.chunk_size,
            strip_diacritics: self.strip_diacritics,
            header_strip_chars: self.header_strip_chars,
            table_hash: self.table.hash_hex(),
        }
    }

    pub fn encode_text(&self, doc_id: &str, text: &str) -> Base4Sequence {
        let body = strip_header(text, self.header_strip_chars);
        let mut seq = encode(&normalize_text(body, self.strip_diacritics), &self.table);
        seq.source_doc = doc_id.to_string();
        seq
    }

    /// One image per chunk, in chunk order.
    pub fn chunk_images(&self, doc_id: &str, text: &str) -> Result<Vec<GrayImage>> {
        let seq = self.encode_text(doc_id, text);
        split_document(&seq, self.chunk_size, self.k, "")?
            .iter()
            .map(|c| Ok(render(&fcgr(&c.seq, self.k)?)))
            .collect()
    }
}

/// Chunk images of every corpus document, keyed by doc id.
pub fn corpus_images(corpus: &Corpus, pre: &Preprocessor) -> Result<BTreeMap<String, Vec<GrayImage>>> {
    let images: Vec<(String, Vec<GrayImage>)> = corpus
        .documents
        .par_iter()
        .map(|d| Ok((d.doc_id.clone(), pre.chunk_images(&d.doc_id, &d.text)?)))
        .collect::<Result<_>>()?;
    for (id, imgs) in &images {
        if imgs.is_empty() {
            log::warn!("document {id:?} yields no chunks at k={} chunk={}", pre.k, pre.chunk_size);
        }
    }
    Ok(images.into_iter().collect())
}

pub fn train_classifier(
    data: &[LabeledImage],
    class_ids: &[String],
    cfg: &RunConfig,
    seed: u64,
) -> Result<TrainedModel> {
    Ok(match cfg.classifier {
        ClassifierKind::Lr => TrainedModel::Lr(train_lr(data, class_ids, cfg.lr)?),
        ClassifierKind::Svm => {
            let params = crate::classify::SvmParams { seed, ..cfg.svm };
            TrainedModel::Svm(train_svm(data, class_ids, params)?)
        }
        ClassifierKind::FttPca => TrainedModel::FttPca(train_ftt_pca(data, class_ids, cfg.ftt_params())?),
    })
}

pub fn predict_chunks(model: &TrainedModel, images: &[GrayImage]) -> Result<Vec<ScoreVector>> {
    images.par_iter().map(|img| model.predict(img)).collect()
}

/// Scores every chunk, aggregates, and applies NoA when thresholds are set.
pub fn attribute_document(
    model: &TrainedModel,
    doc_id: &str,
    images: &[GrayImage],
    noa: Option<NoaThresholds>,
) -> Result<AttributionResult> {
    let scores = predict_chunks(model, images)?;
    let result = aggregate(doc_id, &scores)?;
    Ok(match noa {
        Some(t) => apply_noa(result, t),
        None => result,
    })
}

/// Labeled training images for `chunks` under `labels`.
pub fn labeled_images(
    chunks: &[ChunkRef],
    images: &BTreeMap<String, Vec<GrayImage>>,
    labels: &BTreeMap<String, String>,
    class_ids: &[String],
) -> Result<Vec<LabeledImage>> {
    chunks
        .iter()
        .map(|c| {
            let label = labels
                .get(&c.doc_id)
                .and_then(|l| class_ids.iter().position(|x| x == l))
                .ok_or_else(|| Error::Data(format!("no training label for {:?}", c.doc_id)))?;
            Ok(LabeledImage {
                image: images[&c.doc_id][c.chunk_index].clone(),
                label,
                doc_id: c.doc_id.clone(),
                chunk_index: c.chunk_index,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl SetAccuracy {
    fn from_flags(flags: impl IntoIterator<Item = bool>) -> Option<SetAccuracy> {
        let (mut correct, mut total) = (0, 0);
        for f in flags {
            total += 1;
            correct += usize::from(f);
        }
        (total > 0).then(|| SetAccuracy {
            correct,
            total,
            accuracy: correct as f64 / total as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocDecision {
    pub doc_id: String,
    pub set: String,
    pub truth: String,
    pub decision: String,
    pub correct: bool,
    pub num_chunks: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub config: RunConfig,
    pub class_ids: Vec<String>,
    pub train_chunks: usize,
    /// Per chunk.
    pub validation1: Option<SetAccuracy>,
    /// Per chunk.
    pub validation2: Option<SetAccuracy>,
    /// Per held-out document, after aggregation.
    pub validation2_documents: Option<SetAccuracy>,
    /// Per document, after aggregation (and NoA when enabled).
    pub test: Option<SetAccuracy>,
    /// Documents without any chunk, left out of every set.
    pub skipped: Vec<String>,
    pub decisions: Vec<DocDecision>,
}

/// Correct when the chunk's top class is the truth.
fn chunk_correct(s: &ScoreVector, truth: &str) -> bool {
    s.best_label() == truth
}

/// Correct when the decision is the truth, or NoA for a truth outside the
/// model's classes.
fn decision_correct(d: &Decision, truth: &str, class_ids: &[String]) -> bool {
    match d {
        Decision::Label(l) => l == truth,
        Decision::NoneOfTheAbove => !class_ids.iter().any(|c| c == truth),
    }
}

pub fn split_for_trial(corpus: &Corpus, cfg: &RunConfig, seed: u64, trial: usize) -> Result<SplitPlan> {
    let mut plan = match cfg.split.pattern() {
        None => federalist_split(corpus, seed)?,
        Some(p) => fixed_split(corpus, p, cfg.label_mode)?,
    };
    plan.seed = seed;
    plan.trial_index = trial;
    Ok(plan)
}

/// One trial on precomputed chunk images.
pub fn run_trial(
    images: &BTreeMap<String, Vec<GrayImage>>,
    plan: &SplitPlan,
    cfg: &RunConfig,
) -> Result<TrialReport> {
    let counts: HashMap<String, usize> = images.iter().map(|(d, v)| (d.clone(), v.len())).collect();
    let split = plan.resolve(&counts)?;
    let class_ids = plan.class_ids();
    let train = labeled_images(&split.train, images, &plan.labels, &class_ids)?;
    let model = train_classifier(&train, &class_ids, cfg, plan.seed)?;

    let truth = |d: &str| plan.labels.get(d).cloned().unwrap_or_default();
    let score_chunks = |chunks: &[ChunkRef]| -> Result<Vec<bool>> {
        chunks
            .par_iter()
            .map(|c| Ok(chunk_correct(&model.predict(&images[&c.doc_id][c.chunk_index])?, &truth(&c.doc_id))))
            .collect()
    };
    let validation1 = SetAccuracy::from_flags(score_chunks(&split.validation1)?);
    let validation2 = SetAccuracy::from_flags(score_chunks(&split.validation2)?);

    let mut skipped = Vec::new();
    let mut decisions = Vec::new();
    for (set, docs, noa) in [
        ("validation2", &plan.validation2, None),
        ("test", &plan.test, cfg.noa.thresholds()),
    ] {
        for d in docs {
            let imgs = &images[d];
            if imgs.is_empty() {
                skipped.push(d.clone());
                continue;
            }
            let r = attribute_document(&model, d, imgs, noa)?;
            let t = truth(d);
            decisions.push(DocDecision {
                doc_id: d.clone(),
                set: set.to_string(),
                correct: decision_correct(&r.decision, &t, &class_ids),
                truth: t,
                decision: r.decision.to_string(),
                num_chunks: r.num_chunks,
                scores: r.aggregated.scores,
            });
        }
    }
    let doc_acc = |set: &str| SetAccuracy::from_flags(decisions.iter().filter(|d| d.set == set).map(|d| d.correct));
    Ok(TrialReport {
        trial: plan.trial_index,
        seed: plan.seed,
        config: cfg.clone(),
        train_chunks: train.len(),
        validation1,
        validation2,
        validation2_documents: doc_acc("validation2"),
        test: doc_acc("test"),
        class_ids,
        skipped,
        decisions,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanAccuracy {
    pub validation1: Option<f64>,
    pub validation2: Option<f64>,
    pub validation2_documents: Option<f64>,
    pub test: Option<f64>,
}

pub fn mean_accuracy(reports: &[TrialReport]) -> MeanAccuracy {
    let mean = |f: &dyn Fn(&TrialReport) -> Option<SetAccuracy>| {
        let v: Vec<f64> = reports.iter().filter_map(|r| f(r).map(|a| a.accuracy)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    MeanAccuracy {
        validation1: mean(&|r| r.validation1),
        validation2: mean(&|r| r.validation2),
        validation2_documents: mean(&|r| r.validation2_documents),
        test: mean(&|r| r.test),
    }
}

/// `cfg.trials` trials with seeds derived from `cfg.seed`, in trial order.
pub fn run_trials(corpus: &Corpus, cfg: &RunConfig) -> Result<Vec<TrialReport>> {
    cfg.validate()?;
    let pre = Preprocessor::from_config(cfg)?;
    let images = corpus_images(corpus, &pre)?;
    run_trials_on(corpus, &images, cfg)
}

fn run_trials_on(
    corpus: &Corpus,
    images: &BTreeMap<String, Vec<GrayImage>>,
    cfg: &RunConfig,
) -> Result<Vec<TrialReport>> {
    (0..cfg.trials)
        .map(|i| {
            let seed = trial_seed(cfg.seed, i);
            let annotate = |e: Error| Error::Trial {
                trial: i,
                source: Box::new(e),
            };
            let plan = split_for_trial(corpus, cfg, seed, i).map_err(annotate)?;
            let report = run_trial(images, &plan, cfg).map_err(annotate)?;
            log::info!(
                "trial {i}: v1 {:?} v2 {:?} test {:?}",
                report.validation1.map(|a| a.accuracy),
                report.validation2.map(|a| a.accuracy),
                report.test.map(|a| a.accuracy)
            );
            Ok(report)
        })
        .collect()
}

/// One JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(items: &[T], mut out: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::Data(format!("writing report: {e}")))?;
        writeln!(out).map_err(|e| Error::Data(format!("writing report: {e}")))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub k: usize,
    pub chunk_size: usize,
    #[serde(flatten)]
    pub mean: MeanAccuracy,
}

/// Mean accuracies over `cfg.trials` trials for every `(k, chunk_size)`.
pub fn sweep(corpus: &Corpus, cfg: &RunConfig, ks: &[usize], chunk_sizes: &[usize]) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::new();
    for &k in ks {
        for &chunk_size in chunk_sizes {
            let mut c = RunConfig { k, chunk_size, ..cfg.clone() };
            if let Some(f) = c.ftt.freq_side {
                c.ftt.freq_side = Some(f.min(1 << k));
            }
            c.validate()?;
            let images = corpus_images(corpus, &Preprocessor::from_config(&c)?)?;
            let reports = run_trials_on(corpus, &images, &c)?;
            cells.push(SweepCell {
                k,
                chunk_size,
                mean: mean_accuracy(&reports),
            });
        }
    }
    Ok(cells)
}

pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Data(format!("writing sweep CSV: {e}"));
    w.write_record(["k", "chunk_size", "validation1", "validation2", "validation2_documents", "test"])
        .map_err(err)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in cells {
        w.write_record([
            c.k.to_string(),
            c.chunk_size.to_string(),
            cell(c.mean.validation1),
            cell(c.mean.validation2),
            cell(c.mean.validation2_documents),
            cell(c.mean.test),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing sweep CSV: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkNeighbors {
    pub doc_id: String,
    pub chunk_index: usize,
    pub same_document: usize,
    pub neighbors: Vec<(String, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfSimReport {
    pub m: usize,
    pub n_components: usize,
    pub total_chunks: usize,
    /// `histogram[j]` chunks have exactly `m - j` same-document neighbours.
    pub histogram: Vec<usize>,
    pub fraction_all_same: f64,
    /// Documents with fewer than two chunks.
    pub flagged: Vec<String>,
    pub chunks: Vec<ChunkNeighbors>,
}

/// For every chunk, how many of its `m` nearest other chunks (FTT+PCA
/// space over all chunks) come from the same document.
pub fn self_similarity(corpus: &Corpus, cfg: &RunConfig, m: usize) -> Result<SelfSimReport> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::Config("m must be at least 1".into()));
    }
    let pre = Preprocessor::from_config(cfg)?;
    let images = corpus_images(corpus, &pre)?;
    let class_ids: Vec<String> = images.keys().cloned().collect();
    let mut data = Vec::new();
    for (label, (doc, imgs)) in images.iter().enumerate() {
        for (i, img) in imgs.iter().enumerate() {
            data.push(LabeledImage {
                image: img.clone(),
                label,
                doc_id: doc.clone(),
                chunk_index: i,
            });
        }
    }
    if data.len() <= m {
        return Err(Error::Data(format!(
            "{} chunks are not enough for {m} neighbours",
            data.len()
        )));
    }
    let mut params = cfg.ftt_params();
    let f = params.freq_side.min(1 << cfg.k);
    let limit = (f * f).min(data.len());
    if params.n_components > limit {
        log::warn!("reducing n_components from {} to {limit}", params.n_components);
        params.n_components = limit;
    }
    let model = train_ftt_pca(&data, &class_ids, params)?;
    let chunks: Vec<ChunkNeighbors> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let d = &data[i];
            let nn = model.nearest_chunks(model.point(i), m, Some((&d.doc_id, d.chunk_index)))?;
            Ok(ChunkNeighbors {
                doc_id: d.doc_id.clone(),
                chunk_index: d.chunk_index,
                same_document: nn.iter().filter(|n| n.doc_id == d.doc_id).count(),
                neighbors: nn.into_iter().map(|n| (n.doc_id, n.chunk_index, n.distance)).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let mut histogram = vec![0; m + 1];
    for c in &chunks {
        histogram[m - c.same_document] += 1;
    }
    let flagged: Vec<String> = images
        .iter()
        .filter(|(_, v)| v.len() < 2)
        .map(|(d, _)| d.clone())
        .collect();
    for d in &flagged {
        log::warn!("document {d:?} has fewer than 2 chunks; its neighbours must come from elsewhere");
    }
    Ok(SelfSimReport {
        m,
        n_components: params.n_components,
        total_chunks: chunks.len(),
        fraction_all_same: histogram[0] as f64 / chunks.len() as f64,
        histogram,
        flagged,
        chunks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::synth::markov_text;

    fn doc(id: &str, label: &str, text: String) -> Document {
        Document {
            doc_id: id.into(),
            label: label.into(),
            genre: None,
            split: None,
            text,
        }
    }

    fn toy_corpus(authors: usize, per: usize, len: usize) -> Corpus {
        let mut docs = Vec::new();
        for a in 0..authors {
            for i in 0..per {
                docs.push(doc(
                    &format!("a{a}/{i:02}"),
                    &format!("a{a}"),
                    markov_text(a as u64, 1000 + (a * per + i) as u64, len),
                ));
            }
        }
        Corpus::from_documents(docs, true).unwrap()
    }

    fn small_config() -> RunConfig {
        RunConfig {
            k: 4,
            chunk_size: 1000,
            ..RunConfig::default()
        }
    }

    #[test]
    fn preprocessing_steps() {
        let pre = Preprocessor::from_config(&RunConfig {
            k: 1,
            chunk_size: 4,
            header_strip_chars: 2,
            ..RunConfig::default()
        })
        .unwrap();
        // "XXAt a" -> "at a" -> 01 33 10 01
        assert_eq!(pre.encode_text("d", "XXAt a").to_ascii(), "01331001");
        let imgs = pre.chunk_images("d", "XXAt a").unwrap();
        assert_eq!(imgs.len(), 2);
        assert_eq!(imgs[0].side(), 2);
        assert!(pre.chunk_images("d", "").unwrap().is_empty());
    }

    #[test]
    fn held_out_split_classifies_well() {
        let corpus = toy_corpus(3, 6, 6000);
        for classifier in [ClassifierKind::Lr, ClassifierKind::Svm, ClassifierKind::FttPca] {
            let cfg = RunConfig {
                classifier,
                ftt: crate::config::FttConfig {
                    n_components: 10,
                    neighbors: 3,
                    ..Default::default()
                },
                ..small_config()
            };
            let reports = run_trials(&corpus, &cfg).unwrap();
            let t = reports[0].test.unwrap();
            assert_eq!(t.total, 9);
            assert!(t.accuracy >= 0.99, "{classifier}: {t:?}");
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let corpus = toy_corpus(2, 4, 4000);
        let cfg = RunConfig { trials: 2, seed: 9, ..small_config() };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_jsonl(&run_trials(&corpus, &cfg).unwrap(), &mut a).unwrap();
        write_jsonl(&run_trials(&corpus, &cfg).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 2);
    }

    #[test]
    fn self_similarity_single_document() {
        let corpus = Corpus::from_documents(vec![doc("only", "x", markov_text(1, 2, 3000))], false).unwrap();
        let cfg = RunConfig { k: 4, chunk_size: 1000, ..RunConfig::default() };
        let r = self_similarity(&corpus, &cfg, 3).unwrap();
        assert_eq!(r.total_chunks, 6);
        assert_eq!(r.histogram, vec![6, 0, 0, 0]);
        assert_eq!(r.fraction_all_same, 1.0);
        for c in &r.chunks {
            assert!(c.neighbors.iter().all(|n| n.1 != c.chunk_index));
        }
    }

    #[test]
    fn self_similarity_separates_styles_and_flags_short_docs() {
        let mut docs: Vec<Document> = (0..3)
            .map(|a| doc(&format!("d{a}"), "x", markov_text(a, 50 + a, 24000)))
            .collect();
        docs.push(doc("short", "x", markov_text(7, 3, 3000)));
        let corpus = Corpus::from_documents(docs, false).unwrap();
        let cfg = RunConfig { k: 5, chunk_size: 4000, ..RunConfig::default() };
        let r = self_similarity(&corpus, &cfg, 3).unwrap();
        assert_eq!(r.flagged, vec!["short"]);
        let long: Vec<_> = r.chunks.iter().filter(|c| c.doc_id != "short").collect();
        let all = long.iter().filter(|c| c.same_document == 3).count();
        assert!(all as f64 >= 0.9 * long.len() as f64, "{all} of {}", long.len());
    }

    #[test]
    fn sweep_grid_shape() {
        let corpus = toy_corpus(2, 4, 3000);
        let cells = sweep(&corpus, &small_config(), &[3, 4], &[500, 1000]).unwrap();
        assert_eq!(cells.len(), 4);
        let mut buf = Vec::new();
        write_sweep_csv(&cells, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,chunk_size,validation1,validation2,validation2_documents,test\n3,500,,,,"));
        assert_eq!(text.lines().count(), 5);
    }
}
