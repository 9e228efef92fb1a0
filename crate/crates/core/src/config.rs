//! Run settings shared by the library pipeline and the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alphabet::EquivalenceTable;
use crate::attribute::NoaThresholds;
use crate::classify::{ClassifierKind, FttPcaParams, LrParams, SvmParams, TransformKind};
use crate::corpus::{LabelMode, Layout, SplitPattern};
use crate::error::{Error, Result};

pub const MAX_K: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    /// Hamilton/Madison protocol with randomized held-out essays.
    Federalist,
    Blocks,
    Half,
    Given,
}

impl SplitKind {
    pub fn pattern(self) -> Option<SplitPattern> {
        match self {
            SplitKind::Federalist => None,
            SplitKind::Blocks => Some(SplitPattern::Blocks),
            SplitKind::Half => Some(SplitPattern::Half),
            SplitKind::Given => Some(SplitPattern::Given),
        }
    }
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "federalist" {
            return Ok(SplitKind::Federalist);
        }
        Ok(match s.parse::<SplitPattern>()? {
            SplitPattern::Blocks => SplitKind::Blocks,
            SplitPattern::Half => SplitKind::Half,
            SplitPattern::Given => SplitKind::Given,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoaConfig {
    pub enabled: bool,
    pub min_prob: f64,
    pub margin_factor: f64,
}

impl Default for NoaConfig {
    fn default() -> Self {
        let t = NoaThresholds::default();
        NoaConfig {
            enabled: false,
            min_prob: t.min_prob,
            margin_factor: t.margin_factor,
        }
    }
}

impl NoaConfig {
    pub fn thresholds(&self) -> Option<NoaThresholds> {
        self.enabled.then_some(NoaThresholds {
            min_prob: self.min_prob,
            margin_factor: self.margin_factor,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FttConfig {
    pub kind: TransformKind,
    /// Defaults to `min(100, 2^k)`.
    pub freq_side: Option<usize>,
    pub n_components: usize,
    pub neighbors: usize,
}

impl Default for FttConfig {
    fn default() -> Self {
        let p = FttPcaParams::default();
        FttConfig {
            kind: p.kind,
            freq_side: None,
            n_components: p.n_components,
            neighbors: p.neighbors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub classifier: ClassifierKind,
    pub k: usize,
    /// Base-4 digits per chunk; 0 turns each document into one image.
    pub chunk_size: usize,
    pub noa: NoaConfig,
    pub ftt: FttConfig,
    pub lr: LrParams,
    pub svm: SvmParams,
    pub seed: u64,
    pub trials: usize,
    pub strip_diacritics: bool,
    pub header_strip_chars: usize,
    pub split: SplitKind,
    pub label_mode: LabelMode,
    pub dedup: bool,
    pub layout: Layout,
    /// Replacement character table.
    pub table: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            classifier: ClassifierKind::Lr,
            k: 7,
            chunk_size: 8500,
            noa: NoaConfig::default(),
            ftt: FttConfig::default(),
            lr: LrParams::default(),
            svm: SvmParams::default(),
            seed: 0,
            trials: 1,
            strip_diacritics: false,
            header_strip_chars: 0,
            split: SplitKind::Half,
            label_mode: LabelMode::Author,
            dedup: true,
            layout: Layout::Auto,
            table: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Federalist,
    Ccat,
    Pan12,
    Brazilian,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "federalist" => Ok(Preset::Federalist),
            "ccat" | "ccat10" | "ccat-10" | "ccat50" | "ccat-50" => Ok(Preset::Ccat),
            "pan12" | "pan-12" => Ok(Preset::Pan12),
            "brazilian" | "portuguese" => Ok(Preset::Brazilian),
            _ => Err(Error::Config(format!(
                "unknown preset {s:?} (federalist, ccat, pan12, brazilian)"
            ))),
        }
    }
}

impl RunConfig {
    pub fn preset(p: Preset) -> RunConfig {
        let base = RunConfig::default();
        match p {
            Preset::Federalist => RunConfig {
                split: SplitKind::Federalist,
                trials: 30,
                ..base
            },
            Preset::Ccat => RunConfig {
                chunk_size: 0,
                split: SplitKind::Half,
                ..base
            },
            Preset::Pan12 => RunConfig {
                split: SplitKind::Given,
                noa: NoaConfig {
                    enabled: true,
                    ..NoaConfig::default()
                },
                ..base
            },
            Preset::Brazilian => RunConfig {
                chunk_size: 0,
                strip_diacritics: true,
                header_strip_chars: 50,
                split: SplitKind::Blocks,
                ..base
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn from_toml_file(path: &Path) -> Result<RunConfig> {
        RunConfig::default().overlay_toml_file(path)
    }

    /// Settings from `text` on top of `self`; keys absent from `text` keep
    /// their current values.
    pub fn overlay_toml(&self, text: &str) -> Result<RunConfig> {
        let bad = |e: String| Error::Config(format!("config file: {e}"));
        let mut base = toml::Table::try_from(self).map_err(|e| bad(e.to_string()))?;
        let top: toml::Table = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        merge(&mut base, top);
        toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| bad(e.to_string()))
    }

    pub fn overlay_toml_file(&self, path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.overlay_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(m.replacen("config file", &path.display().to_string(), 1)),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=MAX_K).contains(&self.k) {
            return bad(format!("k={} must be between 1 and {MAX_K}", self.k));
        }
        if self.chunk_size != 0 && self.chunk_size < 2 * self.k {
            return bad(format!(
                "chunk size {} must be 0 (whole document) or at least 2k = {}",
                self.chunk_size,
                2 * self.k
            ));
        }
        let side = 1usize << self.k;
        if let Some(f) = self.ftt.freq_side {
            if f == 0 || f > side {
                return bad(format!("frequency block f={f} must be in 1..={side} for k={}", self.k));
            }
        }
        if self.ftt.n_components == 0 {
            return bad("n_components must be at least 1".into());
        }
        if self.ftt.neighbors == 0 {
            return bad("neighbors must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        let n = &self.noa;
        if !(n.min_prob.is_finite() && n.min_prob >= 0.0 && n.margin_factor.is_finite() && n.margin_factor >= 0.0)
        {
            return bad("NoA thresholds must be finite and nonnegative".into());
        }
        if !(self.lr.l2 >= 0.0 && self.lr.tol > 0.0) {
            return bad("lr needs l2 >= 0 and tol > 0".into());
        }
        if !(self.svm.c > 0.0 && self.svm.tol > 0.0) {
            return bad("svm needs c > 0 and tol > 0".into());
        }
        Ok(())
    }

    pub fn ftt_params(&self) -> FttPcaParams {
        FttPcaParams {
            kind: self.ftt.kind,
            freq_side: self.ftt.freq_side.unwrap_or(100.min(1 << self.k)),
            n_components: self.ftt.n_components,
            neighbors: self.ftt.neighbors,
        }
    }

    pub fn equivalence_table(&self) -> Result<EquivalenceTable> {
        match &self.table {
            None => Ok(EquivalenceTable::standard()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                EquivalenceTable::parse(&text)
            }
        }
    }
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
