use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fcgr::classify::{ClassifierKind, TransformKind};
use fcgr::config::{Preset, RunConfig, SplitKind};
use fcgr::corpus::{LabelMode, Layout};
use fcgr::Result;

#[derive(Debug, Parser)]
#[command(name = "fcgr", version, about = "Authorship attribution with frequency chaos game images")]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a text file as a stream of base-4 digits.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Render the FCGR image of a text (PGM, or PNG by extension).
    Render {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write one image per chunk into this directory.
        #[arg(long)]
        chunks_dir: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train a classifier on every document of a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Accuracy and top-k tables of a model on a labeled corpus.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Largest k in the top-k table.
        #[arg(long, default_value_t = 5)]
        max_top_k: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Attribute unlabeled texts (a file or a directory of files).
    Attribute {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
        #[arg(long, value_parser = ["csv", "json"], default_value = "csv")]
        format: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Nearest-neighbour self-similarity of chunks across a corpus.
    Selfsim {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(short, default_value_t = 3)]
        m: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Signature vectors of texts under an ftt-pca model.
    Fingerprint {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
        /// Append the nearest stored chunks and their distances.
        #[arg(long)]
        query: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Repeated randomized train/validate/test runs (JSON lines).
    Trials {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Mean accuracies over a grid of k and chunk sizes (CSV).
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4,5,6,7")]
        ks: Vec<usize>,
        /// `start:stop:step` or a comma list, in base-4 digits.
        #[arg(long, default_value = "500:10000:500")]
        chunks: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Split the Project Gutenberg Federalist text into a labeled corpus.
    PrepareFederalist {
        source: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Settings shared by the pipeline commands. Flags override the config
/// file, which overrides the preset (or built-in defaults).
#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// TOML file with run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// federalist, ccat, pan12 or brazilian.
    #[arg(long)]
    pub preset: Option<Preset>,
    /// lr, svm or ftt-pca.
    #[arg(long)]
    pub classifier: Option<ClassifierKind>,
    #[arg(short = 'k', long)]
    pub k: Option<usize>,
    /// Chunk length in base-4 digits (0 = whole document).
    #[arg(long, conflicts_with = "chunk_chars")]
    pub chunk_size: Option<usize>,
    /// Chunk length in text characters (two digits each).
    #[arg(long)]
    pub chunk_chars: Option<usize>,
    /// Reject weak attributions as none-of-the-above.
    #[arg(long)]
    pub noa: bool,
    #[arg(long)]
    pub noa_min_prob: Option<f64>,
    #[arg(long)]
    pub noa_margin: Option<f64>,
    /// cosine or sine.
    #[arg(long)]
    pub ftt_kind: Option<TransformKind>,
    /// Side of the retained frequency block.
    #[arg(long)]
    pub ftt_f: Option<usize>,
    /// Principal components kept.
    #[arg(long)]
    pub ftt_n: Option<usize>,
    /// Neighbours voting per prediction.
    #[arg(long)]
    pub ftt_m: Option<usize>,
    #[arg(long)]
    pub lr_l2: Option<f64>,
    #[arg(long)]
    pub svm_c: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub strip_diacritics: bool,
    /// Characters dropped from the start of every document.
    #[arg(long)]
    pub header_strip: Option<usize>,
    /// federalist, blocks, half or given.
    #[arg(long)]
    pub split: Option<SplitKind>,
    /// author or genre.
    #[arg(long)]
    pub label_mode: Option<LabelMode>,
    /// Keep byte-identical documents.
    #[arg(long)]
    pub no_dedup: bool,
    /// auto, dirs or manifest.
    #[arg(long)]
    pub layout: Option<Layout>,
    /// Character table replacing the standard one.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = self.preset.map(RunConfig::preset).unwrap_or_default();
        if let Some(path) = &self.config {
            c = c.overlay_toml_file(path)?;
        }
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag.clone() {
                    c.$($field)+ = v;
                }
            };
        }
        set!(self.classifier => classifier);
        set!(self.k => k);
        set!(self.chunk_size => chunk_size);
        set!(self.chunk_chars.map(|n| 2 * n) => chunk_size);
        set!(self.noa_min_prob => noa.min_prob);
        set!(self.noa_margin => noa.margin_factor);
        set!(self.ftt_kind => ftt.kind);
        set!(self.ftt_f.map(Some) => ftt.freq_side);
        set!(self.ftt_n => ftt.n_components);
        set!(self.ftt_m => ftt.neighbors);
        set!(self.lr_l2 => lr.l2);
        set!(self.svm_c => svm.c);
        set!(self.seed => seed);
        set!(self.trials => trials);
        set!(self.header_strip => header_strip_chars);
        set!(self.split => split);
        set!(self.label_mode => label_mode);
        set!(self.layout => layout);
        set!(self.table.clone().map(Some) => table);
        if self.noa {
            c.noa.enabled = true;
        }
        if self.strip_diacritics {
            c.strip_diacritics = true;
        }
        if self.no_dedup {
            c.dedup = false;
        }
        c.validate()?;
        Ok(c)
    }
}
