//! Frequency chaos game representation of text for authorship attribution.
//!
//! Text is mapped to a base-4 digit stream, turned into k-mer count images,
//! and classified chunk by chunk; chunk scores are averaged per document.

pub mod alphabet;
pub mod attribute;
pub mod cgr;
pub mod chunker;
pub mod classify;
pub mod config;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod federalist;
pub mod image_io;
pub mod model_io;
pub mod synth;

pub use alphabet::{encode, normalize_text, Base4Sequence, EquivalenceTable};
pub use cgr::{fcgr, render, FcgrMatrix, GrayImage};
pub use error::{Error, ErrorKind, Result};
