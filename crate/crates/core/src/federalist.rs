//! The Federalist essays: authorship table and a splitter for the plain-text
//! Project Gutenberg edition (ebook #18).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::corpus::{federalist_labels, MANIFEST_NAME};
use crate::error::{Error, Result};

pub const NUM_ESSAYS: usize = 85;

const MADISON_ESSAYS: &[usize] = &[10, 14, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48];
const JAY_ESSAYS: &[usize] = &[2, 3, 4, 5, 64];
const JOINT_ESSAYS: &[usize] = &[18, 19, 20];
const DISPUTED_ESSAYS: &[usize] = &[49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 62, 63];

/// Label of essay `number` under the Gutenberg assignments.
pub fn essay_label(number: usize) -> Option<&'static str> {
    use federalist_labels::*;
    if !(1..=NUM_ESSAYS).contains(&number) {
        None
    } else if MADISON_ESSAYS.contains(&number) {
        Some(MADISON)
    } else if JAY_ESSAYS.contains(&number) {
        Some(JAY)
    } else if JOINT_ESSAYS.contains(&number) {
        Some(JOINT)
    } else if DISPUTED_ESSAYS.contains(&number) {
        Some(DISPUTED)
    } else {
        Some(HAMILTON)
    }
}

const MIN_ESSAY_BYTES: usize = 200;

fn header_number(line: &str) -> Option<usize> {
    let rest = line.trim().strip_prefix("FEDERALIST")?;
    let rest = rest.trim_start_matches('.').trim_start();
    let rest = rest.strip_prefix("No.")?.trim();
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() || rest.len() != digits.len() {
        return None;
    }
    digits.parse().ok()
}

fn is_byline(line: &str) -> bool {
    let upper = line.trim().to_uppercase();
    let words: Vec<&str> = upper
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|w| !w.is_empty())
        .collect();
    !words.is_empty()
        && words
            .iter()
            .all(|w| matches!(*w, "HAMILTON" | "MADISON" | "JAY" | "AND" | "OR" | "WITH"))
}

/// Splits the Gutenberg text into essays keyed by number. Essay headings
/// and author bylines are removed; for a repeated number the first full
/// copy is kept.
pub fn split_essays(text: &str) -> BTreeMap<usize, String> {
    let mut essays: BTreeMap<usize, String> = BTreeMap::new();
    let mut current: Option<(usize, Vec<&str>)> = None;
    let flush = |cur: Option<(usize, Vec<&str>)>, essays: &mut BTreeMap<usize, String>| {
        if let Some((n, lines)) = cur {
            let body = lines.join("\n").trim().to_string() + "\n";
            match essays.get(&n) {
                // a short earlier hit is a contents line, not the essay
                Some(prev) if prev.len() >= MIN_ESSAY_BYTES => {
                    log::warn!("essay {n} appears more than once; keeping the first copy");
                }
                _ => {
                    essays.insert(n, body);
                }
            }
        }
    };
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with("*** END OF") || trimmed.starts_with("End of the Project Gutenberg") {
            break;
        }
        if let Some(n) = header_number(line) {
            flush(current.take(), &mut essays);
            current = Some((n, Vec::new()));
            continue;
        }
        if let Some((_, lines)) = current.as_mut() {
            if lines.len() < 20 && is_byline(line) {
                continue;
            }
            lines.push(line);
        }
    }
    flush(current, &mut essays);
    essays
}

/// Writes one file per essay plus `manifest.csv` under `out_dir`.
/// Returns the number of essays written.
pub fn prepare(source: &Path, out_dir: &Path) -> Result<usize> {
    let bytes = fs::read(source).map_err(|e| Error::io(source, e))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::InvalidUtf8 {
        path: source.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })?;
    let essays = split_essays(&text.replace("\r\n", "\n"));
    let missing: Vec<usize> = (1..=NUM_ESSAYS).filter(|n| !essays.contains_key(n)).collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "{}: essays {missing:?} not found",
            source.display()
        )));
    }
    let essay_dir = out_dir.join("essays");
    fs::create_dir_all(&essay_dir).map_err(|e| Error::io(&essay_dir, e))?;
    let mut manifest = String::from("path,label,genre\n");
    for (n, body) in essays.iter().filter(|(n, _)| **n <= NUM_ESSAYS) {
        let rel = format!("essays/federalist_{n:02}.txt");
        let path = out_dir.join(&rel);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        manifest.push_str(&format!("{rel},{},\n", essay_label(*n).unwrap_or_default()));
    }
    let mpath = out_dir.join(MANIFEST_NAME);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    Ok(NUM_ESSAYS)
}
