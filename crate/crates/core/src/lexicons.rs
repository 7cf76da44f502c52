//! Term lists and their matching rules.
//!
//! Lexicon files are UTF-8 lines of `term[<TAB>category[<TAB>weight]]`;
//! blank lines and lines starting with `#` are ignored. `Terms` lexicons are
//! normalised (tokenised, lowercased, single-space joined) so that multi-word
//! entries match consecutive tokens. `Patterns` lexicons keep their entries
//! verbatim and are used for raw-text matching such as emoticons.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::embeddings::{nearest, EmbeddingTable};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::textproc::{stem, tokenize, StemRules, TokenList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconKind {
    Terms,
    Patterns,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LexEntry {
    pub category: Option<String>,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub name: String,
    pub kind: LexiconKind,
    pub entries: BTreeMap<String, LexEntry>,
    max_words: usize,
}

/// Normalises a term the way tokens are normalised before matching.
pub fn normalize_term(term: &str) -> String {
    tokenize(term).lowercased().join(" ")
}

impl Lexicon {
    pub fn new(name: impl Into<String>, kind: LexiconKind) -> Self {
        Lexicon { name: name.into(), kind, entries: BTreeMap::new(), max_words: 0 }
    }

    pub fn from_terms<'a>(
        name: impl Into<String>,
        kind: LexiconKind,
        terms: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let mut lex = Lexicon::new(name, kind);
        for t in terms {
            lex.insert(t, LexEntry::default());
        }
        lex
    }

    pub fn from_categorized<'a>(name: impl Into<String>, terms: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut lex = Lexicon::new(name, LexiconKind::Terms);
        for (t, c) in terms {
            lex.insert(t, LexEntry { category: Some(c.to_string()), weight: None });
        }
        lex
    }

    /// Inserts a term after normalisation. Returns false when the normalised
    /// term is empty or already present (the first entry is kept).
    pub fn insert(&mut self, term: &str, entry: LexEntry) -> bool {
        let key = match self.kind {
            LexiconKind::Terms => normalize_term(term),
            LexiconKind::Patterns => term.trim().to_string(),
        };
        if key.is_empty() || self.entries.contains_key(&key) {
            return false;
        }
        self.max_words = self.max_words.max(key.split(' ').count());
        self.entries.insert(key, entry);
        true
    }

    pub fn parse(name: &str, kind: LexiconKind, content: &str, path: &Path) -> Result<Self> {
        let mut lex = Lexicon::new(name, kind);
        for (n, raw) in content.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let malformed = |message: &str| Error::Malformed {
                path: path.to_path_buf(),
                line: n + 1,
                message: message.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() > 3 {
                return Err(malformed("more than three tab-separated columns"));
            }
            let category = match cols.get(1).map(|c| c.trim()) {
                Some("") => return Err(malformed("empty category column")),
                Some(c) => Some(c.to_lowercase()),
                None => None,
            };
            let weight = match cols.get(2).map(|w| w.trim()) {
                Some(w) => Some(w.parse::<f64>().map_err(|_| malformed("weight is not a number"))?),
                None => None,
            };
            let term = cols[0];
            if !lex.insert(term, LexEntry { category, weight }) {
                warn!("{}:{}: duplicate or empty term `{}` ignored", path.display(), n + 1, term.trim());
            }
        }
        if lex.entries.is_empty() {
            return Err(Error::Empty { path: path.to_path_buf() });
        }
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.entries.contains_key(term)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn categories(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<String> =
            self.entries.values().filter_map(|e| e.category.clone()).collect();
        set.into_iter().collect()
    }

    /// Counts entry occurrences in already-normalised (lowercased) tokens.
    /// Every (start, length) window that equals an entry is one match.
    pub fn count_in<S: AsRef<str>>(&self, tokens: &[S]) -> MatchCounts {
        let mut counts = MatchCounts::default();
        let mut buf = String::new();
        for start in 0..tokens.len() {
            buf.clear();
            for len in 1..=self.max_words.min(tokens.len() - start) {
                if len > 1 {
                    buf.push(' ');
                }
                buf.push_str(tokens[start + len - 1].as_ref());
                if let Some(entry) = self.entries.get(buf.as_str()) {
                    counts.record(entry);
                }
            }
        }
        counts
    }

    /// Copy of the lexicon with every word of every entry stemmed.
    pub fn stemmed(&self, rules: &StemRules) -> Lexicon {
        let mut out = Lexicon::new(self.name.clone(), self.kind);
        for (term, entry) in &self.entries {
            let s: Vec<String> = term.split(' ').map(|w| stem(w, rules)).collect();
            out.insert(&s.join(" "), entry.clone());
        }
        out
    }
}

pub fn load_lexicon(path: impl AsRef<Path>, kind: LexiconKind) -> Result<Lexicon> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Lexicon::parse(&name, kind, &content, path)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub total: usize,
    pub by_category: BTreeMap<String, usize>,
}

impl MatchCounts {
    fn record(&mut self, entry: &LexEntry) {
        self.total += 1;
        if let Some(c) = &entry.category {
            *self.by_category.entry(c.clone()).or_insert(0) += 1;
        }
    }

    pub fn category(&self, name: &str) -> usize {
        self.by_category.get(name).copied().unwrap_or(0)
    }
}

/// Matches a lexicon against a token list, optionally comparing stems.
pub fn count_matches(tokens: &TokenList, lexicon: &Lexicon, stems: Option<&StemRules>) -> MatchCounts {
    let lower = tokens.lowercased();
    match stems {
        None => lexicon.count_in(&lower),
        Some(rules) => {
            let stemmed: Vec<String> = lower.iter().map(|t| stem(t, rules)).collect();
            lexicon.stemmed(rules).count_in(&stemmed)
        }
    }
}

/// Adds the `k` nearest vocabulary neighbours of every base term. Neighbours
/// inherit the base term's category and weight.
pub fn expand_lexicon<T: Scalar>(base: &Lexicon, embeddings: &EmbeddingTable<T>, k: usize) -> Result<Lexicon> {
    if k == 0 {
        return Err(Error::invalid("expansion size k must be at least 1"));
    }
    if embeddings.vocab_size() == 0 {
        return Err(Error::invalid("cannot expand a lexicon with an empty embedding table"));
    }
    let mut out = base.clone();
    out.name = format!("{}_{}", base.name, k);
    for (term, entry) in &base.entries {
        if !embeddings.contains(term) {
            continue;
        }
        for (neighbour, _) in nearest(embeddings, term, k)? {
            out.insert(&neighbour, entry.clone());
        }
    }
    Ok(out)
}

pub const POSITIVE: &str = "positive";
pub const NEGATIVE: &str = "negative";

/// Polarity, emotion and opinion lexicons used for the sentiment bundle.
#[derive(Debug, Clone)]
pub struct SentimentResources {
    pub polarity: Lexicon,
    pub emotions: Lexicon,
    pub opinion: Lexicon,
}

impl SentimentResources {
    pub fn new(polarity: Lexicon, emotions: Lexicon, opinion: Lexicon) -> Result<Self> {
        for lex in [&polarity, &opinion] {
            if let Some((term, _)) =
                lex.entries.iter().find(|(_, e)| !matches!(e.category.as_deref(), Some(POSITIVE) | Some(NEGATIVE)))
            {
                return Err(Error::invalid(format!(
                    "lexicon `{}`: term `{term}` must be categorised positive or negative",
                    lex.name
                )));
            }
        }
        if let Some((term, _)) = emotions.entries.iter().find(|(_, e)| e.category.is_none()) {
            return Err(Error::invalid(format!("emotion term `{term}` has no category")));
        }
        Ok(SentimentResources { polarity, emotions, opinion })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PolarityCounts {
    pub positive: usize,
    pub negative: usize,
}

impl PolarityCounts {
    pub fn net(&self) -> i64 {
        self.positive as i64 - self.negative as i64
    }

    fn from_matches(m: &MatchCounts) -> Self {
        PolarityCounts { positive: m.category(POSITIVE), negative: m.category(NEGATIVE) }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentimentScores {
    pub n_tokens: usize,
    pub polarity: PolarityCounts,
    pub opinion: PolarityCounts,
    /// Every emotion category of the lexicon, zero counts included.
    pub emotions: BTreeMap<String, usize>,
}

impl SentimentScores {
    fn norm(&self, x: f64) -> f64 {
        if self.n_tokens == 0 {
            0.0
        } else {
            x / self.n_tokens as f64
        }
    }

    /// Flattened named features: counts, net score and the same values
    /// divided by the token count.
    pub fn features(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (prefix, p) in [("polarity", self.polarity), ("opinion", self.opinion)] {
            for (suffix, v) in [("pos", p.positive as f64), ("neg", p.negative as f64), ("net", p.net() as f64)] {
                out.push((format!("{prefix}_{suffix}"), v));
                out.push((format!("{prefix}_{suffix}_norm"), self.norm(v)));
            }
        }
        for (emotion, &c) in &self.emotions {
            out.push((format!("emotion_{emotion}"), c as f64));
            out.push((format!("emotion_{emotion}_norm"), self.norm(c as f64)));
        }
        out
    }
}

/// Sentiment counts from lowercased tokens.
pub fn sentiment_scores_lower<S: AsRef<str>>(lower: &[S], res: &SentimentResources) -> SentimentScores {
    let emo = res.emotions.count_in(lower);
    let emotions = res
        .emotions
        .categories()
        .into_iter()
        .map(|c| {
            let n = emo.category(&c);
            (c, n)
        })
        .collect();
    SentimentScores {
        n_tokens: lower.len(),
        polarity: PolarityCounts::from_matches(&res.polarity.count_in(lower)),
        opinion: PolarityCounts::from_matches(&res.opinion.count_in(lower)),
        emotions,
    }
}

pub fn sentiment_scores(tokens: &TokenList, res: &SentimentResources) -> SentimentScores {
    sentiment_scores_lower(&tokens.lowercased(), res)
}

/// Entity types every gazetteer set must provide.
pub const REQUIRED_ENTITY_TYPES: [&str; 4] = ["location", "country", "person_name", "date_unit"];

/// Named-entity gazetteers, one lexicon per entity type (the lexicon name).
#[derive(Debug, Clone)]
pub struct Gazetteers {
    lexicons: Vec<Lexicon>,
}

impl Gazetteers {
    pub fn new(lexicons: Vec<Lexicon>) -> Result<Self> {
        let names: HashSet<&str> = lexicons.iter().map(|l| l.name.as_str()).collect();
        if let Some(missing) = REQUIRED_ENTITY_TYPES.iter().find(|t| !names.contains(**t)) {
            return Err(Error::invalid(format!("gazetteer for entity type `{missing}` is missing")));
        }
        Ok(Gazetteers { lexicons })
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.lexicons.iter().map(|l| l.name.as_str())
    }

    pub fn lexicons(&self) -> &[Lexicon] {
        &self.lexicons
    }
}

pub fn gazetteer_entities_lower<S: AsRef<str>>(lower: &[S], gazetteers: &Gazetteers) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for lex in &gazetteers.lexicons {
        *out.entry(lex.name.clone()).or_insert(0) += lex.count_in(lower).total;
    }
    out
}

/// Per-entity-type match counts. Terms listed in several gazetteers count in
/// each of them.
pub fn gazetteer_entities(tokens: &TokenList, gazetteers: &Gazetteers) -> BTreeMap<String, usize> {
    gazetteer_entities_lower(&tokens.lowercased(), gazetteers)
}
