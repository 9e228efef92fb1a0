//! Versioned binary container for trained models.
//!
//! Layout: 8-byte magic, `u32` LE format version, `u32` LE header length,
//! a UTF-8 JSON header, then the arrays named in the header as
//! little-endian `f64`, back to back in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::lr::TrainReport;
use crate::classify::{
    ClassifierKind, FttPcaModel, FttPcaParams, LrModel, LrParams, SvmModel, SvmParams, TrainedModel,
};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FCGRMODL";
pub const FORMAT_VERSION: u32 = 1;

/// Text preprocessing a model was trained with; applied again at prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub k: usize,
    pub chunk_size: usize,
    pub strip_diacritics: bool,
    pub header_strip_chars: usize,
    pub table_hash: String,
}

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub preprocessing: Preprocessing,
    pub model: TrainedModel,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayDesc {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PointId {
    doc_id: String,
    chunk_index: usize,
    label: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Hyper {
    Lr { params: LrParams, report: TrainReport },
    Svm { params: SvmParams },
    FttPca { params: FttPcaParams, image_side: usize, points: Vec<PointId> },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: ClassifierKind,
    class_ids: Vec<String>,
    dim: usize,
    preprocessing: Preprocessing,
    hyper: Hyper,
    arrays: Vec<ArrayDesc>,
}

fn desc(name: &str, shape: &[usize]) -> ArrayDesc {
    ArrayDesc {
        name: name.into(),
        shape: shape.to_vec(),
    }
}

pub fn to_bytes(file: &ModelFile) -> Result<Vec<u8>> {
    let (dim, hyper, arrays): (usize, Hyper, Vec<(ArrayDesc, &[f64])>) = match &file.model {
        TrainedModel::Lr(m) => (
            m.dim,
            Hyper::Lr {
                params: m.params,
                report: TrainReport {
                    loss_history: Vec::new(),
                    ..m.report.clone()
                },
            },
            vec![(desc("weights", &[m.class_ids.len(), m.dim + 1]), &m.weights[..])],
        ),
        TrainedModel::Svm(m) => (
            m.dim,
            Hyper::Svm { params: m.params },
            vec![
                (desc("weights", &[m.class_ids.len(), m.dim]), &m.weights[..]),
                (desc("biases", &[m.class_ids.len()]), &m.biases[..]),
            ],
        ),
        TrainedModel::FttPca(m) => {
            let f = m.params.freq_side;
            let n = m.params.n_components;
            (
                m.image_side * m.image_side,
                Hyper::FttPca {
                    params: m.params,
                    image_side: m.image_side,
                    points: m
                        .point_ids
                        .iter()
                        .zip(&m.point_labels)
                        .map(|((doc_id, chunk_index), &label)| PointId {
                            doc_id: doc_id.clone(),
                            chunk_index: *chunk_index,
                            label,
                        })
                        .collect(),
                },
                vec![
                    (desc("right_singular", &[f * f, n]), &m.right_singular[..]),
                    (desc("singular_values", &[n]), &m.singular_values[..]),
                    (desc("points", &[m.len(), n]), &m.points[..]),
                ],
            )
        }
    };
    let header = Header {
        kind: file.model.kind(),
        class_ids: file.model.class_ids().to_vec(),
        dim,
        preprocessing: file.preprocessing.clone(),
        hyper,
        arrays: Vec::new(),
    };
    let mut header = header;
    let mut payload = Vec::new();
    for (d, data) in arrays {
        debug_assert_eq!(d.shape.iter().product::<usize>(), data.len());
        for v in data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        header.arrays.push(d);
    }
    let json = serde_json::to_vec(&header).map_err(|e| Error::Model(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Model("truncated file".into()))
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelFile> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Model("not a model file".into()));
    }
    let version = read_u32(bytes, 8)?;
    if version != FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let hlen = read_u32(bytes, 12)? as usize;
    let json = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| Error::Model("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| Error::Model(format!("bad header: {e}")))?;

    let mut offset = 16 + hlen;
    let mut arrays: Vec<(String, Vec<f64>)> = Vec::new();
    for d in &header.arrays {
        let count: usize = d.shape.iter().product();
        let raw = bytes
            .get(offset..offset + 8 * count)
            .ok_or_else(|| Error::Model(format!("array {:?} is truncated", d.name)))?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        arrays.push((d.name.clone(), values));
        offset += 8 * count;
    }
    if offset != bytes.len() {
        return Err(Error::Model("trailing bytes after arrays".into()));
    }
    let mut take = |name: &str| -> Result<Vec<f64>> {
        let i = arrays
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Model(format!("missing array {name:?}")))?;
        Ok(arrays.swap_remove(i).1)
    };
    let c = header.class_ids.len();
    let dim = header.dim;
    let model = match (header.kind, header.hyper) {
        (ClassifierKind::Lr, Hyper::Lr { params, report }) => {
            let weights = take("weights")?;
            if weights.len() != c * (dim + 1) {
                return Err(Error::Model("lr weight shape does not match dim".into()));
            }
            TrainedModel::Lr(LrModel {
                class_ids: header.class_ids,
                dim,
                weights,
                params,
                report,
            })
        }
        (ClassifierKind::Svm, Hyper::Svm { params }) => {
            let weights = take("weights")?;
            let biases = take("biases")?;
            if weights.len() != c * dim || biases.len() != c {
                return Err(Error::Model("svm array shapes do not match dim".into()));
            }
            TrainedModel::Svm(SvmModel {
                class_ids: header.class_ids,
                dim,
                weights,
                biases,
                params,
            })
        }
        (ClassifierKind::FttPca, Hyper::FttPca { params, image_side, points }) => {
            let v = take("right_singular")?;
            let s = take("singular_values")?;
            let p = take("points")?;
            let (ids, labels) = points
                .into_iter()
                .map(|pt| ((pt.doc_id, pt.chunk_index), pt.label))
                .unzip();
            TrainedModel::FttPca(FttPcaModel::from_parts(
                header.class_ids,
                image_side,
                params,
                v,
                s,
                p,
                labels,
                ids,
            )?)
        }
        (kind, _) => {
            return Err(Error::Model(format!("header for {kind} has mismatched parameters")))
        }
    };
    Ok(ModelFile {
        preprocessing: header.preprocessing,
        model,
    })
}

pub fn save(file: &ModelFile, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(file)?).map_err(|e| Error::io(path, e))
}

/// Loads a model and, when `table_hash` is given, checks it was trained
/// with that character table.
pub fn load(path: &Path, table_hash: Option<&str>) -> Result<ModelFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file = from_bytes(&bytes)?;
    if let Some(h) = table_hash {
        if file.preprocessing.table_hash != h {
            return Err(Error::Model(format!(
                "{}: trained with character table {} but the current table is {h}",
                path.display(),
                file.preprocessing.table_hash
            )));
        }
    }
    Ok(file)
}
