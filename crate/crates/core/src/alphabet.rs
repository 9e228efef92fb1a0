//! Text normalization and the 16-class base-4 alphabet.
//!
//! Every character that survives normalization is mapped to one of sixteen
//! equivalence classes, and each class is written as an ordered pair of
//! base-4 digits. The resulting digit stream is what the FCGR is built
//! from. Characters that belong to no class are dropped.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A pair of base-4 digits `(hi, lo)` assigned to one equivalence class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DigitPair {
    pub hi: u8,
    pub lo: u8,
}

impl DigitPair {
    pub fn new(hi: u8, lo: u8) -> Result<Self> {
        if hi > 3 || lo > 3 {
            return Err(Error::Config(format!(
                "digit pair {hi}{lo} is not a pair of base-4 digits"
            )));
        }
        Ok(DigitPair { hi, lo })
    }

    /// Position of the pair in `0..16` (`hi * 4 + lo`).
    pub fn index(self) -> usize {
        (self.hi * 4 + self.lo) as usize
    }

    pub fn from_index(index: usize) -> Self {
        debug_assert!(index < 16);
        DigitPair {
            hi: (index / 4) as u8,
            lo: (index % 4) as u8,
        }
    }
}

impl std::fmt::Display for DigitPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.hi, self.lo)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceClass {
    pub chars: Vec<char>,
    pub code: DigitPair,
}

/// Maps normalized characters to base-4 digit pairs.
///
/// Exactly sixteen classes, one per digit pair. Anything not listed in a
/// class is omitted from the encoding.
#[derive(Debug, Clone)]
pub struct EquivalenceTable {
    classes: Vec<EquivalenceClass>,
    ascii: [Option<DigitPair>; 128],
    other: HashMap<char, DigitPair>,
}

const WHITESPACE: &[char] = &[' ', '\t', '\n', '\r'];
const PUNCTUATION_AND_DIGITS: &str = "()-+[]0123456789?!:;,.";

impl Default for EquivalenceTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl EquivalenceTable {
    /// The standard English table.
    ///
    /// `f` is not listed in the published grouping; it is placed with
    /// `{u, v, w}` alongside its voiced counterpart `v`.
    pub fn standard() -> Self {
        let groups: [(&[char], u8, u8); 16] = [
            (&['b', 'd'], 0, 0),
            (&['a'], 0, 1),
            (&['i', 'y'], 0, 2),
            (&['h', 'j', 'g'], 0, 3),
            (WHITESPACE, 1, 0),
            (&['l'], 1, 1),
            (&['c', 'k', 'q', 'x', 'z'], 1, 2),
            (&['m', 'n'], 1, 3),
            (&['p'], 2, 0),
            (&['r'], 2, 1),
            (&['e'], 2, 2),
            (&['o'], 2, 3),
            (&['u', 'v', 'w', 'f'], 3, 0),
            (&['s'], 3, 1),
            (&[], 3, 2),
            (&['t'], 3, 3),
        ];
        let classes = groups
            .iter()
            .map(|&(chars, hi, lo)| {
                let chars = if (hi, lo) == (3, 2) {
                    PUNCTUATION_AND_DIGITS.chars().collect()
                } else {
                    chars.to_vec()
                };
                EquivalenceClass {
                    chars,
                    code: DigitPair { hi, lo },
                }
            })
            .collect();
        Self::from_classes(classes).expect("standard table is well formed")
    }

    /// Builds a table from explicit classes, checking that there are
    /// sixteen of them with distinct codes and that no character appears
    /// twice.
    pub fn from_classes(classes: Vec<EquivalenceClass>) -> Result<Self> {
        if classes.len() != 16 {
            return Err(Error::Config(format!(
                "equivalence table needs 16 classes, got {}",
                classes.len()
            )));
        }
        let mut seen_codes = [false; 16];
        let mut ascii = [None; 128];
        let mut other = HashMap::new();
        for class in &classes {
            let idx = class.code.index();
            if seen_codes[idx] {
                return Err(Error::Config(format!(
                    "code {} assigned to more than one class",
                    class.code
                )));
            }
            seen_codes[idx] = true;
            for &c in &class.chars {
                let previous = if (c as u32) < 128 {
                    ascii[c as usize].replace(class.code)
                } else {
                    other.insert(c, class.code)
                };
                if previous.is_some() {
                    return Err(Error::Config(format!(
                        "character {c:?} appears in more than one class"
                    )));
                }
            }
        }
        Ok(EquivalenceTable {
            classes,
            ascii,
            other,
        })
    }

    /// Parses a table override file.
    ///
    /// One class per line: the member characters (no raw whitespace; use
    /// `\s`, `\t`, `\n`, `\r` and `\\`), then whitespace, then the
    /// two-digit code. Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut classes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::Config(format!("table line {}: {msg}", lineno + 1));
            let (chars_part, code_part) = line
                .rsplit_once(char::is_whitespace)
                .ok_or_else(|| bad("expected `<characters> <code>`"))?;
            let code_digits: Vec<u8> = code_part
                .chars()
                .map(|c| c.to_digit(4).map(|d| d as u8))
                .collect::<Option<_>>()
                .ok_or_else(|| bad("code must be two base-4 digits"))?;
            if code_digits.len() != 2 {
                return Err(bad("code must be two base-4 digits"));
            }
            let chars = unescape_chars(chars_part.trim()).map_err(|m| bad(&m))?;
            classes.push(EquivalenceClass {
                chars,
                code: DigitPair::new(code_digits[0], code_digits[1])?,
            });
        }
        Self::from_classes(classes)
    }

    /// Serializes to the override-file format accepted by [`parse`](Self::parse).
    pub fn to_override_text(&self) -> String {
        let mut out = String::new();
        for class in &self.classes {
            for &c in &class.chars {
                match c {
                    ' ' => out.push_str("\\s"),
                    '\t' => out.push_str("\\t"),
                    '\n' => out.push_str("\\n"),
                    '\r' => out.push_str("\\r"),
                    '\\' => out.push_str("\\\\"),
                    c => out.push(c),
                }
            }
            let _ = writeln!(out, " {}", class.code);
        }
        out
    }

    pub fn classes(&self) -> &[EquivalenceClass] {
        &self.classes
    }

    #[inline]
    pub fn code_of(&self, c: char) -> Option<DigitPair> {
        if (c as u32) < 128 {
            self.ascii[c as usize]
        } else {
            self.other.get(&c).copied()
        }
    }

    pub fn is_omitted(&self, c: char) -> bool {
        self.code_of(c).is_none()
    }

    /// Stable SHA-256 over a canonical form of the table, stored in model
    /// files so a model is never applied with a different alphabet.
    pub fn hash_hex(&self) -> String {
        let mut canonical: BTreeMap<usize, Vec<char>> = BTreeMap::new();
        for class in &self.classes {
            let mut chars = class.chars.clone();
            chars.sort_unstable();
            canonical.insert(class.code.index(), chars);
        }
        let mut hasher = Sha256::new();
        for (code, chars) in canonical {
            hasher.update(DigitPair::from_index(code).to_string().as_bytes());
            hasher.update(b":");
            for c in chars {
                let mut buf = [0u8; 4];
                hasher.update(c.encode_utf8(&mut buf).as_bytes());
            }
            hasher.update(b"\n");
        }
        hasher.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn unescape_chars(s: &str) -> std::result::Result<Vec<char>, String> {
    let mut out = Vec::new();
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('s') => out.push(' '),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => return Err(format!("unknown escape \\{other}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

/// A document (or a slice of one) as base-4 digits.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Base4Sequence {
    pub digits: Vec<u8>,
    pub source_doc: String,
    /// Start position within the full encoding of `source_doc`, in digits.
    pub offset: usize,
}

impl Base4Sequence {
    pub fn new(digits: Vec<u8>, source_doc: impl Into<String>) -> Self {
        Base4Sequence {
            digits,
            source_doc: source_doc.into(),
            offset: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    /// ASCII rendering, one `'0'..='3'` byte per digit.
    pub fn to_ascii(&self) -> String {
        self.digits.iter().map(|&d| (b'0' + d) as char).collect()
    }
}

/// Lowercases `raw` and, when asked, replaces accented Latin letters by
/// their base letter. Lowercasing happens first, so `É` becomes `e`.
pub fn normalize_text(raw: &str, strip_diacritics: bool) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        for lc in c.to_lowercase() {
            if !strip_diacritics {
                out.push(lc);
            } else if is_combining_mark(lc) {
                // decomposed accents vanish with the flag on
            } else {
                out.push(strip_accent(lc));
            }
        }
    }
    out
}

fn is_combining_mark(c: char) -> bool {
    ('\u{0300}'..='\u{036F}').contains(&c)
}

/// Base letter for a lowercase Latin-1 or Latin Extended-A letter carrying
/// a diacritic; any other character is returned unchanged.
fn strip_accent(c: char) -> char {
    match c {
        'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' | 'ā' | 'ă' | 'ą' => 'a',
        'ç' | 'ć' | 'ĉ' | 'ċ' | 'č' => 'c',
        'ď' | 'đ' => 'd',
        'è' | 'é' | 'ê' | 'ë' | 'ē' | 'ĕ' | 'ė' | 'ę' | 'ě' => 'e',
        'ĝ' | 'ğ' | 'ġ' | 'ģ' => 'g',
        'ĥ' | 'ħ' => 'h',
        'ì' | 'í' | 'î' | 'ï' | 'ĩ' | 'ī' | 'ĭ' | 'į' | 'ı' => 'i',
        'ĵ' => 'j',
        'ķ' => 'k',
        'ĺ' | 'ļ' | 'ľ' | 'ŀ' | 'ł' => 'l',
        'ñ' | 'ń' | 'ņ' | 'ň' | 'ŉ' => 'n',
        'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ø' | 'ō' | 'ŏ' | 'ő' => 'o',
        'ŕ' | 'ŗ' | 'ř' => 'r',
        'ś' | 'ŝ' | 'ş' | 'š' | 'ſ' => 's',
        'ţ' | 'ť' | 'ŧ' => 't',
        'ù' | 'ú' | 'û' | 'ü' | 'ũ' | 'ū' | 'ŭ' | 'ů' | 'ű' | 'ų' => 'u',
        'ŵ' => 'w',
        'ý' | 'ÿ' | 'ŷ' => 'y',
        'ź' | 'ż' | 'ž' => 'z',
        other => other,
    }
}

/// Encodes already-normalized text. Each character in the table emits its
/// two digits (hi then lo); omitted characters emit nothing.
pub fn encode(text: &str, table: &EquivalenceTable) -> Base4Sequence {
    let mut digits = Vec::with_capacity(text.len() * 2);
    for c in text.chars() {
        if let Some(code) = table.code_of(c) {
            digits.push(code.hi);
            digits.push(code.lo);
        }
    }
    Base4Sequence {
        digits,
        source_doc: String::new(),
        offset: 0,
    }
}

/// Occurrence counts over an encoded sequence, read as consecutive digit
/// pairs from the start.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize)]
pub struct DigitStats {
    /// Indexed by [`DigitPair::index`].
    pub pair_counts: [u64; 16],
    pub leading: [u64; 4],
    pub trailing: [u64; 4],
}

impl DigitStats {
    pub fn total(&self) -> u64 {
        self.pair_counts.iter().sum()
    }

    /// Count for the class whose code is `code`.
    pub fn count(&self, code: DigitPair) -> u64 {
        self.pair_counts[code.index()]
    }
}

/// Per-class and marginal digit counts. A trailing unpaired digit (only
/// possible for odd-length slices) is ignored.
pub fn digit_stats(seq: &Base4Sequence) -> DigitStats {
    let mut stats = DigitStats::default();
    for pair in seq.digits.chunks_exact(2) {
        let (hi, lo) = (pair[0] as usize, pair[1] as usize);
        stats.pair_counts[hi * 4 + lo] += 1;
        stats.leading[hi] += 1;
        stats.trailing[lo] += 1;
    }
    stats
}
