//! Tab-separated dataset files.
//!
//! - scored pairs: `term1<TAB>term2<TAB>score`, higher score = more related
//! - preferences: `t1<TAB>t2<TAB>t3<TAB>t4<TAB>label`, label `+1` or `-1`
//! - document groups: `doc_id<TAB>group`
//!
//! Blank lines and lines starting with `#` are skipped. Terms are matched
//! against the dictionary as written first and otherwise after the same
//! lowercasing and stemming used at ingestion.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::{Dictionary, Tokenizer};
use crate::error::{Error, Result};
use crate::index::Index;
use crate::preferences::{Label, Preference, ScoredPair, TermPair};
use crate::trainer::TrainerConfig;
use crate::TermId;

/// Maps surface forms to dictionary ids.
pub struct TermResolver<'a> {
    dictionary: &'a Dictionary,
    tokenizer: Tokenizer,
}

impl<'a> TermResolver<'a> {
    pub fn new(dictionary: &'a Dictionary, stemmed: bool) -> Self {
        TermResolver {
            dictionary,
            tokenizer: Tokenizer::new(Vec::new(), stemmed),
        }
    }

    pub fn for_index(index: &'a Index) -> Self {
        Self::new(index.dictionary(), index.stemmed())
    }

    pub fn resolve(&self, raw: &str) -> Option<TermId> {
        let raw = raw.trim();
        self.dictionary
            .id(raw)
            .or_else(|| self.dictionary.id(&self.tokenizer.normalize_term(raw)))
    }

    pub fn normalize(&self, raw: &str) -> String {
        self.tokenizer.normalize_term(raw)
    }
}

/// Accepts `+1`, `1`, `-1` and the Unicode minus sign.
pub fn parse_label(s: &str) -> Option<Label> {
    match s.trim() {
        "+1" | "1" => Some(Label::Pos),
        "-1" | "\u{2212}1" => Some(Label::Neg),
        _ => None,
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        msg: msg.into(),
    }
}

/// A term that could not be matched, with its line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownTerm {
    pub line: usize,
    pub term: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPairsFile {
    pub pairs: Vec<ScoredPair>,
    /// Terms missing from the dictionary; their rows are skipped.
    pub unknown: Vec<UnknownTerm>,
    /// Rows whose two terms map to the same dictionary entry.
    pub self_pairs: Vec<usize>,
}

/// Reads a scored-pairs file. A first row whose score does not parse is
/// taken as a header.
pub fn read_scored_pairs(path: &Path, resolver: &TermResolver) -> Result<ScoredPairsFile> {
    let text = fs::read_to_string(path)?;
    let mut out = ScoredPairsFile {
        pairs: Vec::new(),
        unknown: Vec::new(),
        self_pairs: Vec::new(),
    };
    for (n, (line, cols)) in data_lines(&text).enumerate() {
        if cols.len() != 3 {
            return Err(parse_err(path, line, format!("expected 3 columns, got {}", cols.len())));
        }
        let score = match cols[2].trim().parse::<f64>() {
            Ok(s) => s,
            Err(_) if n == 0 => continue,
            Err(_) => return Err(parse_err(path, line, format!("bad score {:?}", cols[2]))),
        };
        let ids: Vec<Option<TermId>> = cols[..2].iter().map(|t| resolver.resolve(t)).collect();
        let mut missing = false;
        for (raw, id) in cols[..2].iter().zip(&ids) {
            if id.is_none() {
                missing = true;
                out.unknown.push(UnknownTerm {
                    line,
                    term: raw.trim().to_string(),
                });
            }
        }
        if missing {
            continue;
        }
        match TermPair::new(ids[0].unwrap(), ids[1].unwrap()) {
            Ok(pair) => out.pairs.push(ScoredPair { pair, score }),
            Err(_) => out.self_pairs.push(line),
        }
    }
    Ok(out)
}

fn term(dict: &Dictionary, id: TermId) -> &str {
    dict.term(id).expect("term id from this dictionary")
}

pub fn format_scored_pairs(pairs: &[ScoredPair], dict: &Dictionary) -> String {
    let mut out = String::new();
    for sp in pairs {
        writeln!(
            out,
            "{}\t{}\t{}",
            term(dict, sp.pair.lo()),
            term(dict, sp.pair.hi()),
            sp.score
        )
        .unwrap();
    }
    out
}

pub fn write_scored_pairs(path: &Path, pairs: &[ScoredPair], dict: &Dictionary) -> Result<()> {
    Ok(fs::write(path, format_scored_pairs(pairs, dict))?)
}

pub fn read_preferences(path: &Path, resolver: &TermResolver) -> Result<Vec<Preference>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (line, cols) in data_lines(&text) {
        if cols.len() != 5 {
            return Err(parse_err(path, line, format!("expected 5 columns, got {}", cols.len())));
        }
        let mut ids = [0; 4];
        for (slot, raw) in ids.iter_mut().zip(&cols[..4]) {
            *slot = resolver
                .resolve(raw)
                .ok_or_else(|| parse_err(path, line, format!("unknown term {:?}", raw.trim())))?;
        }
        let y = parse_label(cols[4]).ok_or_else(|| parse_err(path, line, format!("bad label {:?}", cols[4])))?;
        let p = Preference::canonical(ids[0], ids[1], ids[2], ids[3], y)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(p);
    }
    Ok(out)
}

pub fn format_preferences(prefs: &[Preference], dict: &Dictionary) -> String {
    let mut out = String::new();
    for p in prefs {
        let (a, b) = (p.a(), p.b());
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            term(dict, a.lo()),
            term(dict, a.hi()),
            term(dict, b.lo()),
            term(dict, b.hi()),
            p.label()
        )
        .unwrap();
    }
    out
}

pub fn write_preferences(path: &Path, prefs: &[Preference], dict: &Dictionary) -> Result<()> {
    Ok(fs::write(path, format_preferences(prefs, dict))?)
}

pub fn read_config(path: &Path) -> Result<TrainerConfig> {
    TrainerConfig::parse(&fs::read_to_string(path)?)
}

pub fn write_config(path: &Path, config: &TrainerConfig) -> Result<()> {
    Ok(fs::write(path, config.to_config_string())?)
}

pub fn read_doc_groups(path: &Path) -> Result<HashMap<u32, String>> {
    let text = fs::read_to_string(path)?;
    let mut out = HashMap::new();
    for (line, cols) in data_lines(&text) {
        if cols.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 columns, got {}", cols.len())));
        }
        let doc: u32 = cols[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad document id {:?}", cols[0])))?;
        out.insert(doc, cols[1].trim().to_string());
    }
    Ok(out)
}
