mod args;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use fcgr::alphabet::{digit_stats, DigitPair};
use fcgr::attribute::{self, top_k, AttributionResult};
use fcgr::cgr::{fcgr, render};
use fcgr::classify::{class_list, TrainedModel};
use fcgr::config::RunConfig;
use fcgr::corpus::{load_corpus, read_text, ChunkRef, Corpus};
use fcgr::experiment::{
    attribute_document, corpus_images, labeled_images, mean_accuracy, self_similarity, sweep,
    train_classifier, write_jsonl, write_sweep_csv, Preprocessor,
};
use fcgr::image_io::{chunk_image_name, write_image};
use fcgr::model_io::{self, ModelFile};
use fcgr::{Error, ErrorKind, Result};
use serde::Serialize;

use args::{Cli, Command, RunArgs};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// The named file, or standard output.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut w: Box<dyn Write>, path: Option<&Path>) -> Result<()> {
    w.flush()
        .map_err(|e| Error::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Data(e.to_string()))?;
    writeln!(w).map_err(|e| Error::io(path.unwrap_or(Path::new("<stdout>")), e))?;
    finish(w, path)
}

/// `(id, text)` for a file, or for every file below a directory (ids are
/// relative paths, in sorted order).
fn collect_inputs(path: &Path) -> Result<Vec<(String, String)>> {
    if path.is_file() {
        let id = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        return Ok(vec![(id, read_text(path)?)]);
    }
    let mut files = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let p = entry.map_err(|e| Error::io(&dir, e))?.path();
            let hidden = p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'));
            if hidden || p.file_name().is_some_and(|n| n == fcgr::corpus::MANIFEST_NAME) {
                continue;
            }
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no input files under {}", path.display())));
    }
    files
        .into_iter()
        .map(|f| {
            let id = f.strip_prefix(path).unwrap_or(&f).to_string_lossy().replace('\\', "/");
            Ok((id, read_text(&f)?))
        })
        .collect()
}

fn load(cfg: &RunConfig, root: &Path) -> Result<Corpus> {
    let corpus = load_corpus(root, cfg.layout, cfg.dedup)?;
    if !corpus.removed_duplicates.is_empty() {
        log::info!("removed {} duplicate documents", corpus.removed_duplicates.len());
    }
    Ok(corpus)
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<(ModelFile, Preprocessor)> {
    let table = cfg.equivalence_table()?;
    let file = model_io::load(path, Some(&table.hash_hex()))?;
    let pre = Preprocessor::for_model(&file.preprocessing, table)?;
    Ok((file, pre))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Encode { input, output, run } => cmd_encode(&input, &output, &run),
        Command::Render {
            input,
            output,
            chunks_dir,
            run,
        } => cmd_render(&input, &output, chunks_dir.as_deref(), &run),
        Command::Train { corpus, model, run } => cmd_train(&corpus, &model, &run),
        Command::Evaluate {
            corpus,
            model,
            max_top_k,
            output,
            run,
        } => cmd_evaluate(&corpus, &model, max_top_k, output.as_deref(), &run),
        Command::Attribute {
            model,
            input,
            format,
            output,
            run,
        } => cmd_attribute(&model, &input, &format, output.as_deref(), &run),
        Command::Selfsim { corpus, m, output, run } => {
            let cfg = run.resolve()?;
            let report = self_similarity(&load(&cfg, &corpus)?, &cfg, m)?;
            eprintln!(
                "{} chunks, {:.2}% with all {m} neighbours from the same document; histogram (all..0): {:?}",
                report.total_chunks,
                100.0 * report.fraction_all_same,
                report.histogram
            );
            if !report.flagged.is_empty() {
                eprintln!("documents with fewer than 2 chunks: {}", report.flagged.join(", "));
            }
            write_json(&report, output.as_deref())
        }
        Command::Fingerprint {
            model,
            input,
            query,
            output,
            run,
        } => cmd_fingerprint(&model, &input, query, output.as_deref(), &run),
        Command::Trials { corpus, output, run } => {
            let cfg = run.resolve()?;
            let reports = fcgr::experiment::run_trials(&load(&cfg, &corpus)?, &cfg)?;
            let mut w = sink(output.as_deref())?;
            write_jsonl(&reports, &mut w)?;
            finish(w, output.as_deref())?;
            let mean = mean_accuracy(&reports);
            eprintln!("{}", serde_json::to_string(&mean).map_err(|e| Error::Data(e.to_string()))?);
            Ok(())
        }
        Command::Sweep {
            corpus,
            ks,
            chunks,
            output,
            run,
        } => {
            let cfg = run.resolve()?;
            let sizes = parse_range(&chunks)?;
            let cells = sweep(&load(&cfg, &corpus)?, &cfg, &ks, &sizes)?;
            let mut w = sink(output.as_deref())?;
            write_sweep_csv(&cells, &mut w)?;
            finish(w, output.as_deref())
        }
        Command::PrepareFederalist { source, output } => {
            let n = fcgr::federalist::prepare(&source, &output)?;
            eprintln!("wrote {n} essays and {}", output.join(fcgr::corpus::MANIFEST_NAME).display());
            Ok(())
        }
    }
}

fn parse_range(list: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad chunk list {list:?} (start:stop:step or a,b,c)"));
    let nums = |s: &str| -> Result<Vec<usize>> {
        s.split([',', ':'])
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect()
    };
    if list.contains(':') {
        match nums(list)?.as_slice() {
            &[start, stop, step] if step > 0 && start <= stop => Ok((start..=stop).step_by(step).collect()),
            _ => Err(bad()),
        }
    } else {
        nums(list)
    }
}

fn cmd_encode(input: &Path, output: &Path, run: &RunArgs) -> Result<()> {
    let cfg = run.resolve()?;
    let pre = Preprocessor::from_config(&cfg)?;
    let text = read_text(input)?;
    let seq = pre.encode_text(&input.display().to_string(), &text);
    std::fs::write(output, seq.to_ascii()).map_err(|e| Error::io(output, e))?;
    let stats = digit_stats(&seq);
    let mut err = io::stderr().lock();
    let _ = writeln!(err, "{} characters encoded, {} digits", stats.total(), seq.len());
    for i in 0..16 {
        let code = DigitPair::from_index(i);
        let _ = writeln!(err, "{code}\t{}", stats.count(code));
    }
    Ok(())
}

fn cmd_render(input: &Path, output: &Path, chunks_dir: Option<&Path>, run: &RunArgs) -> Result<()> {
    let cfg = run.resolve()?;
    let pre = Preprocessor::from_config(&cfg)?;
    let text = read_text(input)?;
    let id = input.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let seq = pre.encode_text(&id, &text);
    write_image(&render(&fcgr(&seq, cfg.k)?), output)?;
    if let Some(dir) = chunks_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let images = pre.chunk_images(&id, &text)?;
        for (i, img) in images.iter().enumerate() {
            write_image(img, &dir.join(chunk_image_name(&id, i, cfg.k)))?;
        }
        eprintln!("wrote {} chunk images to {}", images.len(), dir.display());
    }
    Ok(())
}

fn cmd_train(corpus_dir: &Path, model_path: &Path, run: &RunArgs) -> Result<()> {
    let cfg = run.resolve()?;
    let corpus = load(&cfg, corpus_dir)?;
    let pre = Preprocessor::from_config(&cfg)?;
    let images = corpus_images(&corpus, &pre)?;
    let labels = corpus.labels_for(cfg.label_mode)?;
    let chunks: Vec<ChunkRef> = images
        .iter()
        .flat_map(|(doc, v)| {
            (0..v.len()).map(move |chunk_index| ChunkRef {
                doc_id: doc.clone(),
                chunk_index,
            })
        })
        .collect();
    let class_ids = class_list(chunks.iter().map(|c| labels[&c.doc_id].as_str()));
    let data = labeled_images(&chunks, &images, &labels, &class_ids)?;
    let model = train_classifier(&data, &class_ids, &cfg, cfg.seed)?;
    model_io::save(
        &ModelFile {
            preprocessing: pre.preprocessing(),
            model,
        },
        model_path,
    )?;
    eprintln!(
        "trained {} on {} chunks from {} documents, {} classes",
        cfg.classifier,
        data.len(),
        corpus.len(),
        class_ids.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct TopK {
    k: usize,
    accuracy: f64,
}

#[derive(Serialize)]
struct EvalDoc {
    doc_id: String,
    truth: String,
    decision: String,
    correct: bool,
    num_chunks: usize,
}

#[derive(Serialize)]
struct EvalReport {
    documents: usize,
    chunks: usize,
    document_accuracy: f64,
    chunk_accuracy: f64,
    top_k: Vec<TopK>,
    skipped: Vec<String>,
    per_document: Vec<EvalDoc>,
}

fn cmd_evaluate(
    corpus_dir: &Path,
    model_path: &Path,
    max_top_k: usize,
    output: Option<&Path>,
    run: &RunArgs,
) -> Result<()> {
    let cfg = run.resolve()?;
    let (file, pre) = load_model(model_path, &cfg)?;
    let corpus = load(&cfg, corpus_dir)?;
    let labels = corpus.labels_for(cfg.label_mode)?;
    let images = corpus_images(&corpus, &pre)?;
    let model = &file.model;
    let classes = model.class_ids();
    let kmax = max_top_k.min(classes.len()).max(1);
    let mut per_document = Vec::new();
    let mut skipped = Vec::new();
    let mut top_hits = vec![0usize; kmax];
    let (mut chunk_hits, mut chunk_total) = (0, 0);
    for (doc, imgs) in &images {
        if imgs.is_empty() {
            skipped.push(doc.clone());
            continue;
        }
        let truth = &labels[doc];
        for img in imgs {
            chunk_total += 1;
            chunk_hits += usize::from(model.predict(img)?.best_label() == truth);
        }
        let r = attribute_document(model, doc, imgs, cfg.noa.thresholds())?;
        for (k, hits) in top_hits.iter_mut().enumerate() {
            *hits += usize::from(top_k(&r, k + 1)?.contains(truth));
        }
        let correct = match r.decision.label() {
            Some(l) => l == truth,
            None => !classes.contains(truth),
        };
        per_document.push(EvalDoc {
            doc_id: doc.clone(),
            truth: truth.clone(),
            decision: r.decision.to_string(),
            correct,
            num_chunks: r.num_chunks,
        });
    }
    let n = per_document.len();
    if n == 0 {
        return Err(Error::Data("no document produced a chunk".into()));
    }
    let report = EvalReport {
        documents: n,
        chunks: chunk_total,
        document_accuracy: per_document.iter().filter(|d| d.correct).count() as f64 / n as f64,
        chunk_accuracy: chunk_hits as f64 / chunk_total as f64,
        top_k: top_hits
            .iter()
            .enumerate()
            .map(|(k, &h)| TopK {
                k: k + 1,
                accuracy: h as f64 / n as f64,
            })
            .collect(),
        skipped,
        per_document,
    };
    eprintln!(
        "document accuracy {:.4} ({} documents), chunk accuracy {:.4}",
        report.document_accuracy, n, report.chunk_accuracy
    );
    write_json(&report, output)
}

fn attribute_inputs(
    model: &TrainedModel,
    pre: &Preprocessor,
    inputs: &[(String, String)],
    cfg: &RunConfig,
) -> Result<Vec<AttributionResult>> {
    let mut results = Vec::new();
    for (id, text) in inputs {
        let imgs = pre.chunk_images(id, text)?;
        if imgs.is_empty() {
            log::warn!("{id}: too short for a single chunk, skipped");
            continue;
        }
        results.push(attribute_document(model, id, &imgs, cfg.noa.thresholds())?);
    }
    Ok(results)
}

fn cmd_attribute(model_path: &Path, input: &Path, format: &str, output: Option<&Path>, run: &RunArgs) -> Result<()> {
    let cfg = run.resolve()?;
    let (file, pre) = load_model(model_path, &cfg)?;
    let results = attribute_inputs(&file.model, &pre, &collect_inputs(input)?, &cfg)?;
    let mut w = sink(output)?;
    if format == "json" {
        attribute::write_json(&results, &mut w)?;
    } else {
        attribute::write_csv(&results, &mut w)?;
    }
    finish(w, output)
}

fn cmd_fingerprint(
    model_path: &Path,
    input: &Path,
    query: Option<usize>,
    output: Option<&Path>,
    run: &RunArgs,
) -> Result<()> {
    let cfg = run.resolve()?;
    let (file, pre) = load_model(model_path, &cfg)?;
    let TrainedModel::FttPca(model) = &file.model else {
        return Err(Error::Model(format!(
            "{} is a {} model; fingerprints need ftt-pca components",
            model_path.display(),
            file.model.kind()
        )));
    };
    let n = model.params.n_components;
    let mut header: Vec<String> = vec!["doc_id".into(), "chunk_index".into()];
    header.extend((0..n).map(|i| format!("s{i}")));
    if let Some(m) = query {
        for j in 1..=m {
            header.extend([format!("nn{j}_doc"), format!("nn{j}_chunk"), format!("nn{j}_distance")]);
        }
    }
    let mut rows: BTreeMap<(String, usize), Vec<String>> = BTreeMap::new();
    for (id, text) in collect_inputs(input)? {
        for (i, img) in pre.chunk_images(&id, &text)?.iter().enumerate() {
            let sig = model.signature(img)?;
            let mut row: Vec<String> = vec![id.clone(), i.to_string()];
            row.extend(sig.iter().map(|v| format!("{v:e}")));
            if let Some(m) = query {
                for nb in model.nearest_chunks(&sig, m, None)? {
                    row.extend([nb.doc_id, nb.chunk_index.to_string(), format!("{:e}", nb.distance)]);
                }
            }
            rows.insert((id.clone(), i), row);
        }
    }
    let mut w = sink(output)?;
    let path = output.map(PathBuf::from).unwrap_or_else(|| PathBuf::from("<stdout>"));
    let line = |cells: &[String]| cells.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(",");
    writeln!(w, "{}", line(&header)).map_err(|e| Error::io(&path, e))?;
    for row in rows.values() {
        writeln!(w, "{}", line(row)).map_err(|e| Error::io(&path, e))?;
    }
    finish(w, output)
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
