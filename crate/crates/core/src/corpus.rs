//! Raw text to tokenized contexts, plus the term dictionary.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::porter;
use crate::TermId;

/// Line that separates documents inside a single corpus file.
pub const DOCUMENT_SEPARATOR: &str = "\x0C";

/// Article filter threshold used when the filter is switched on.
pub const DEFAULT_MIN_NONSTOP: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub doc_id: u32,
    pub source_name: String,
    pub body: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Sentence,
    Paragraph,
    Document,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sentence" => Ok(Granularity::Sentence),
            "paragraph" => Ok(Granularity::Paragraph),
            "document" => Ok(Granularity::Document),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Granularity::Sentence => "sentence",
            Granularity::Paragraph => "paragraph",
            Granularity::Document => "document",
        })
    }
}

/// Splits a document body into context texts.
///
/// Sentences are cut at every literal `.`, paragraphs at runs of blank lines.
/// Segments that are empty or whitespace-only are dropped.
pub fn split_contexts(body: &str, granularity: Granularity) -> Vec<&str> {
    let keep = |s: &&str| !s.trim().is_empty();
    match granularity {
        Granularity::Sentence => body.split('.').filter(keep).collect(),
        Granularity::Paragraph => split_paragraphs(body).into_iter().filter(keep).collect(),
        Granularity::Document => Some(body).filter(keep).into_iter().collect(),
    }
}

fn split_paragraphs(body: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut pos = 0;
    let mut blank_run = false;
    for line in body.split_inclusive('\n') {
        let is_blank = line.trim().is_empty();
        if is_blank && !blank_run {
            out.push(&body[start..pos]);
            blank_run = true;
        } else if !is_blank && blank_run {
            start = pos;
            blank_run = false;
        }
        pos += line.len();
    }
    if !blank_run {
        out.push(&body[start..]);
    }
    out.into_iter().map(|p| p.trim_end_matches(['\n', '\r'])).collect()
}

/// Lowercasing, stopword removal and optional Porter stemming.
#[derive(Debug, Clone, Default)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
    stem: bool,
}

impl Tokenizer {
    pub fn new(stopwords: impl IntoIterator<Item = String>, stem: bool) -> Self {
        Tokenizer {
            stopwords: stopwords.into_iter().map(|s| s.to_lowercase()).collect(),
            stem,
        }
    }

    pub fn stems(&self) -> bool {
        self.stem
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !self.stopwords.contains(*t))
            .map(|t| if self.stem { porter::stem(t) } else { t.to_string() })
            .filter(|t| !t.is_empty())
            .collect()
    }

    /// Maps a raw surface form (possibly several words) to the string used
    /// as a dictionary key: tokens normalized as in [`tokenize`](Self::tokenize)
    /// but without stopword removal, joined by single spaces.
    pub fn normalize_term(&self, raw: &str) -> String {
        let lower = raw.to_lowercase();
        let parts: Vec<String> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| if self.stem { porter::stem(t) } else { t.to_string() })
            .collect();
        parts.join(" ")
    }
}

pub fn tokenize(text: &str, stopwords: &HashSet<String>, stem: bool) -> Vec<String> {
    Tokenizer::new(stopwords.iter().cloned(), stem).tokenize(text)
}

/// Keep/drop decision for the article filter. `min_nonstop == 0` disables it.
pub fn filter_document(tokens: &[String], min_nonstop: usize) -> bool {
    tokens.len() >= min_nonstop
}

/// Stemmed vocabulary with dense ids, sorted by descending occurrence count
/// and then ascending term string.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dictionary {
    terms: Vec<String>,
    freq: Vec<u64>,
    lookup: HashMap<String, TermId>,
}

impl Dictionary {
    /// Builds a dictionary from `(term, count)` entries, applying the
    /// canonical ordering. Duplicate terms are rejected.
    pub fn from_counts(mut entries: Vec<(String, u64)>) -> Result<Self> {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_sorted(entries)
    }

    /// Builds a dictionary from entries that are already in canonical order.
    pub(crate) fn from_sorted(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(entries.len());
        let mut terms = Vec::with_capacity(entries.len());
        let mut freq = Vec::with_capacity(entries.len());
        for (i, (term, count)) in entries.into_iter().enumerate() {
            if count == 0 {
                return Err(Error::CorruptArtifact(format!("term {term:?} has zero frequency")));
            }
            if lookup.insert(term.clone(), i as TermId).is_some() {
                return Err(Error::CorruptArtifact(format!("duplicate term {term:?}")));
            }
            terms.push(term);
            freq.push(count);
        }
        Ok(Dictionary { terms, freq, lookup })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, id: TermId) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn freq(&self, id: TermId) -> Option<u64> {
        self.freq.get(id as usize).copied()
    }

    pub fn id(&self, term: &str) -> Option<TermId> {
        self.lookup.get(term).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.freq
    }

    pub fn iter(&self) -> impl Iterator<Item = (TermId, &str, u64)> + '_ {
        self.terms
            .iter()
            .zip(&self.freq)
            .enumerate()
            .map(|(i, (t, &f))| (i as TermId, t.as_str(), f))
    }

    /// Multi-token entries (phrases), as their token sequences.
    pub fn phrases(&self) -> impl Iterator<Item = (TermId, Vec<&str>)> + '_ {
        self.iter()
            .filter(|(_, t, _)| t.contains(' '))
            .map(|(id, t, _)| (id, t.split(' ').collect()))
    }

    /// A dictionary restricted to the given terms (in their current order),
    /// with ids renumbered densely.
    pub fn subset<'a>(&self, keep: impl IntoIterator<Item = &'a str>) -> Dictionary {
        let keep: HashSet<&str> = keep.into_iter().collect();
        let entries = self
            .iter()
            .filter(|(_, t, _)| keep.contains(t))
            .map(|(_, t, f)| (t.to_string(), f))
            .collect();
        Dictionary::from_sorted(entries).expect("subset of a valid dictionary is valid")
    }
}

/// Counts term occurrences over all contexts and keeps the `top_n` most
/// frequent. Each phrase (a sequence of already-normalized tokens) is counted
/// as an extra entry whenever it appears as a consecutive run.
pub fn build_dictionary<S: AsRef<[String]> + Sync>(
    contexts: &[S],
    top_n: Option<usize>,
    phrases: &[Vec<String>],
) -> Result<Dictionary> {
    let counts = contexts
        .par_iter()
        .fold(HashMap::<String, u64>::new, |mut acc, ctx| {
            let tokens = ctx.as_ref();
            for t in tokens {
                *acc.entry(t.clone()).or_default() += 1;
            }
            for phrase in phrases {
                let hits = count_phrase(tokens, phrase);
                if hits > 0 {
                    *acc.entry(phrase.join(" ")).or_default() += hits;
                }
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut entries: Vec<(String, u64)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(n) = top_n {
        entries.truncate(n);
    }
    Dictionary::from_sorted(entries)
}

pub(crate) fn count_phrase<T: AsRef<str>>(tokens: &[String], phrase: &[T]) -> u64 {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return 0;
    }
    tokens
        .windows(phrase.len())
        .filter(|w| w.iter().zip(phrase).all(|(a, b)| a == b.as_ref()))
        .count() as u64
}

/// A context after tokenization, tagged with the document it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedContext {
    pub doc_id: u32,
    pub tokens: Vec<String>,
}

impl AsRef<[String]> for TokenizedContext {
    fn as_ref(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub granularity: Granularity,
    pub tokenizer: Tokenizer,
    /// Minimum number of non-stopword tokens per document; 0 keeps all.
    pub min_nonstop: usize,
    pub top_n: Option<usize>,
    /// Phrases as raw text, normalized with `tokenizer` before matching.
    pub phrases: Vec<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            granularity: Granularity::Paragraph,
            tokenizer: Tokenizer::default(),
            min_nonstop: 0,
            top_n: None,
            phrases: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub contexts: Vec<TokenizedContext>,
    pub dictionary: Dictionary,
    pub kept_documents: usize,
    pub dropped_documents: usize,
}

/// Runs filtering, context splitting, tokenization and dictionary
/// construction. Documents are processed in parallel; output order follows
/// document order and is independent of scheduling.
pub fn ingest(docs: &[RawDocument], opts: &IngestOptions) -> Result<Ingested> {
    let per_doc: Vec<Option<Vec<TokenizedContext>>> = docs
        .par_iter()
        .map(|doc| {
            if opts.min_nonstop > 0 {
                let tokens = opts.tokenizer.tokenize(&doc.body);
                if !filter_document(&tokens, opts.min_nonstop) {
                    return None;
                }
            }
            Some(
                split_contexts(&doc.body, opts.granularity)
                    .into_iter()
                    .map(|text| TokenizedContext {
                        doc_id: doc.doc_id,
                        tokens: opts.tokenizer.tokenize(text),
                    })
                    .collect(),
            )
        })
        .collect();

    let kept_documents = per_doc.iter().filter(|d| d.is_some()).count();
    let dropped_documents = per_doc.len() - kept_documents;
    let contexts: Vec<TokenizedContext> = per_doc.into_iter().flatten().flatten().collect();
    if contexts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let phrases: Vec<Vec<String>> = opts
        .phrases
        .iter()
        .map(|p| opts.tokenizer.normalize_term(p))
        .filter(|p| p.contains(' '))
        .map(|p| p.split(' ').map(str::to_string).collect())
        .collect();
    let dictionary = build_dictionary(&contexts, opts.top_n, &phrases)?;
    Ok(Ingested {
        contexts,
        dictionary,
        kept_documents,
        dropped_documents,
    })
}

/// Loads a corpus from a directory of `.txt` files (one document per file,
/// ids in ascending file name order) or from a single file whose documents
/// are separated by lines containing only a form feed.
pub fn load_corpus(path: &Path) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        for file in files {
            let body = fs::read_to_string(&file)?;
            let name = file
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            push_doc(&mut docs, name, body);
        }
    } else {
        let text = fs::read_to_string(path)?;
        let name = path.display().to_string();
        let mut current = String::new();
        let mut part = 0;
        for line in text.split_inclusive('\n') {
            if line.trim_end_matches(['\n', '\r']) == DOCUMENT_SEPARATOR {
                push_doc(&mut docs, format!("{name}#{part}"), std::mem::take(&mut current));
                part += 1;
            } else {
                current.push_str(line);
            }
        }
        push_doc(&mut docs, format!("{name}#{part}"), current);
    }
    Ok(docs)
}

fn push_doc(docs: &mut Vec<RawDocument>, source_name: String, body: String) {
    if body.trim().is_empty() {
        return;
    }
    let doc_id = docs.len() as u32;
    docs.push(RawDocument {
        doc_id,
        source_name,
        body,
    });
}

/// Reads a list file with one entry per line, skipping blank lines.
pub fn load_lines(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn sentence_split_on_literal_period() {
        assert_eq!(split_contexts("A b. C d.", Granularity::Sentence), vec!["A b", " C d"]);
        assert_eq!(split_contexts("...", Granularity::Sentence), Vec::<&str>::new());
        assert_eq!(
            split_contexts("e.g. this", Granularity::Sentence),
            vec!["e", "g", " this"]
        );
    }

    #[test]
    fn paragraph_split_on_blank_lines() {
        assert_eq!(
            split_contexts("p1\n\np2\n\n\np3", Granularity::Paragraph),
            vec!["p1", "p2", "p3"]
        );
        assert_eq!(
            split_contexts("line one\nline two\n  \nnext", Granularity::Paragraph),
            vec!["line one\nline two", "next"]
        );
        assert_eq!(split_contexts("\n\n", Granularity::Paragraph), Vec::<&str>::new());
    }

    #[test]
    fn document_is_identity() {
        let body = "Whole. Body\n\nhere";
        assert_eq!(split_contexts(body, Granularity::Document), vec![body]);
        assert!(split_contexts("  ", Granularity::Document).is_empty());
    }

    #[test]
    fn tokenize_stems_and_lowercases() {
        let t = Tokenizer::new(Vec::<String>::new(), true);
        assert_eq!(t.tokenize("Running, runs!"), vec!["run", "run"]);
        assert!(t.tokenize("").is_empty());
    }

    #[test]
    fn tokenize_drops_stopwords_before_stemming() {
        let t = Tokenizer::new(vec!["the".to_string()], false);
        assert_eq!(t.tokenize("the cat"), vec!["cat"]);
        assert_eq!(t.tokenize("The CAT"), vec!["cat"]);
        // "was" is matched as a surface form, not after stemming to "wa".
        let t = Tokenizer::new(vec!["was".to_string()], true);
        assert_eq!(t.tokenize("was"), Vec::<String>::new());
    }

    #[test]
    fn normalize_term_joins_phrases() {
        let t = Tokenizer::new(Vec::<String>::new(), true);
        assert_eq!(t.normalize_term("New  Computers"), "new comput");
        assert_eq!(t.normalize_term("Money"), "monei");
    }

    #[test]
    fn article_filter_boundary() {
        let tokens = vec!["w".to_string(); 99];
        assert!(!filter_document(&tokens, 100));
        let tokens = vec!["w".to_string(); 100];
        assert!(filter_document(&tokens, 100));
        assert!(filter_document(&[], 0));
    }

    #[test]
    fn dictionary_counts_fixture() {
        let ctxs = vec![toks("a b"), toks("a c"), toks("a b c")];
        let d = build_dictionary(&ctxs, None, &[]).unwrap();
        assert_eq!(d.terms(), &["a", "b", "c"]);
        assert_eq!(d.frequencies(), &[3, 2, 2]);
    }

    #[test]
    fn dictionary_top_n_and_ties() {
        let d = build_dictionary(&[toks("x x y")], Some(1), &[]).unwrap();
        assert_eq!(d.terms(), &["x"]);
        let d = build_dictionary(&[toks("y x")], Some(1), &[]).unwrap();
        assert_eq!(d.terms(), &["x"]);
        let d = build_dictionary(&[toks("y x")], Some(10), &[]).unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn dictionary_counts_phrases() {
        let phrase = vec!["new".to_string(), "york".to_string()];
        let d = build_dictionary(&[toks("new york is new york")], None, &[phrase]).unwrap();
        assert_eq!(d.freq(d.id("new york").unwrap()), Some(2));
        assert_eq!(d.freq(d.id("new").unwrap()), Some(2));
        assert_eq!(d.phrases().count(), 1);
    }

    #[test]
    fn empty_corpus_rejected() {
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert!(matches!(build_dictionary(&empty, None, &[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn ingest_filters_and_splits() {
        let docs = vec![
            RawDocument {
                doc_id: 0,
                source_name: "a".into(),
                body: "alpha beta. gamma".into(),
            },
            RawDocument {
                doc_id: 1,
                source_name: "b".into(),
                body: "tiny".into(),
            },
        ];
        let opts = IngestOptions {
            granularity: Granularity::Sentence,
            min_nonstop: 2,
            ..Default::default()
        };
        let out = ingest(&docs, &opts).unwrap();
        assert_eq!(out.kept_documents, 1);
        assert_eq!(out.dropped_documents, 1);
        assert_eq!(out.contexts.len(), 2);
        assert_eq!(out.contexts[1].tokens, vec!["gamma"]);
    }

    #[test]
    fn load_corpus_single_file_with_separators() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.txt");
        fs::write(&path, "doc one\n\x0C\ndoc two\n\x0C\n\n").unwrap();
        let docs = load_corpus(&path).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[1].doc_id, 1);
        assert_eq!(docs[1].body.trim(), "doc two");
    }

    #[test]
    fn load_corpus_directory_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "second").unwrap();
        fs::write(dir.path().join("a.txt"), "first").unwrap();
        fs::write(dir.path().join("c.md"), "ignored").unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].body, "first");
        assert_eq!(docs[0].source_name, "a.txt");
    }
}
