//! Surface-form primitives: tokens, stems, n-grams, affixes, emoticons and
//! punctuation statistics.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicons::Lexicon;

/// A maximal run of one repeated punctuation character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PunctRun {
    pub mark: char,
    pub len: usize,
    pub span: Range<usize>,
}

/// Tokens of a text with their byte spans in the source string.
///
/// Tokens are maximal runs of alphanumeric characters. Everything that is
/// neither alphanumeric nor whitespace is kept as [`PunctRun`]s.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenList {
    pub tokens: Vec<String>,
    pub offsets: Vec<Range<usize>>,
    pub punct: Vec<PunctRun>,
}

impl TokenList {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Lowercased copies of the tokens.
    pub fn lowercased(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.to_lowercase()).collect()
    }
}

pub fn tokenize(text: &str) -> TokenList {
    let mut out = TokenList::default();
    let mut word_start: Option<usize> = None;
    let mut run: Option<(char, usize, usize)> = None;

    fn close_run(out: &mut TokenList, run: &mut Option<(char, usize, usize)>, end: usize) {
        if let Some((mark, start, len)) = run.take() {
            out.punct.push(PunctRun { mark, len, span: start..end });
        }
    }
    fn close_word(out: &mut TokenList, text: &str, start: &mut Option<usize>, end: usize) {
        if let Some(s) = start.take() {
            out.tokens.push(text[s..end].to_string());
            out.offsets.push(s..end);
        }
    }

    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            close_run(&mut out, &mut run, i);
            word_start.get_or_insert(i);
        } else if c.is_whitespace() {
            close_run(&mut out, &mut run, i);
            close_word(&mut out, text, &mut word_start, i);
        } else {
            close_word(&mut out, text, &mut word_start, i);
            match &mut run {
                Some((mark, _, len)) if *mark == c => *len += 1,
                _ => {
                    close_run(&mut out, &mut run, i);
                    run = Some((c, i, 1));
                }
            }
        }
    }
    close_run(&mut out, &mut run, text.len());
    close_word(&mut out, text, &mut word_start, text.len());
    out
}

/// Suffix-rewrite table for a longest-match stemmer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StemRules {
    pub rules: HashMap<String, String>,
    pub min_stem_length: usize,
    #[serde(skip)]
    max_suffix_chars: usize,
}

impl StemRules {
    pub fn new(rules: impl IntoIterator<Item = (String, String)>, min_stem_length: usize) -> Self {
        let rules: HashMap<String, String> = rules
            .into_iter()
            .map(|(s, r)| (s.to_lowercase(), r.to_lowercase()))
            .filter(|(s, _)| !s.is_empty())
            .collect();
        let max_suffix_chars = rules.keys().map(|s| s.chars().count()).max().unwrap_or(0);
        StemRules { rules, min_stem_length: min_stem_length.max(1), max_suffix_chars }
    }

    /// Parses `suffix<TAB>replacement` lines. A missing replacement column
    /// means the suffix is stripped. Blank lines and `#` lines are skipped.
    pub fn parse(content: &str, min_stem_length: usize, path: &Path) -> Result<Self> {
        let mut rules = Vec::new();
        for (n, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let suffix = cols.next().unwrap_or_default().trim();
            let replacement = cols.next().unwrap_or_default().trim();
            if suffix.is_empty() || cols.next().is_some() {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: "expected `suffix<TAB>replacement`".into(),
                });
            }
            rules.push((suffix.to_string(), replacement.to_string()));
        }
        Ok(StemRules::new(rules, min_stem_length))
    }

    pub fn load(path: impl AsRef<Path>, min_stem_length: usize) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content, min_stem_length, path)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Applies the longest suffix rule whose result keeps at least
/// `min_stem_length` characters. Tokens with no applicable rule are returned
/// unchanged.
pub fn stem(token: &str, rules: &StemRules) -> String {
    let max = if rules.max_suffix_chars == 0 {
        rules.rules.keys().map(|s| s.chars().count()).max().unwrap_or(0)
    } else {
        rules.max_suffix_chars
    };
    let boundaries: Vec<usize> = token.char_indices().map(|(i, _)| i).collect();
    let n_chars = boundaries.len();
    for suffix_len in (1..=max.min(n_chars)).rev() {
        let cut = boundaries[n_chars - suffix_len];
        if let Some(replacement) = rules.rules.get(&token[cut..]) {
            let kept = n_chars - suffix_len + replacement.chars().count();
            if kept >= rules.min_stem_length {
                let mut out = String::with_capacity(cut + replacement.len());
                out.push_str(&token[..cut]);
                out.push_str(replacement);
                return out;
            }
        }
    }
    token.to_string()
}

/// Space-joined, lowercased windows of `n` consecutive tokens.
pub fn word_ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> Vec<String> {
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    tokens.windows(n).map(|w| w.iter().map(|t| t.as_ref().to_lowercase()).collect::<Vec<_>>().join(" ")).collect()
}

/// Lowercased windows of `n` consecutive characters inside one token, no padding.
pub fn char_ngrams(token: &str, n: usize) -> Vec<String> {
    let chars: Vec<char> = token.to_lowercase().chars().collect();
    if n == 0 || chars.len() < n {
        return Vec::new();
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffixSide {
    Prefix,
    Suffix,
}

/// First or last `k` characters, lowercased. Short tokens come back whole.
pub fn affix(token: &str, k: usize, side: AffixSide) -> String {
    let chars: Vec<char> = token.to_lowercase().chars().collect();
    if chars.len() <= k {
        return chars.into_iter().collect();
    }
    match side {
        AffixSide::Prefix => chars[..k].iter().collect(),
        AffixSide::Suffix => chars[chars.len() - k..].iter().collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PunctStats {
    pub excl_single: usize,
    pub excl_elong: usize,
    pub quest_single: usize,
    pub quest_elong: usize,
    pub dots_single: usize,
    pub dots_elong: usize,
    pub word_count: usize,
    pub allcaps_count: usize,
}

impl PunctStats {
    pub fn fields(&self) -> [(&'static str, usize); 8] {
        [
            ("excl_single", self.excl_single),
            ("excl_elong", self.excl_elong),
            ("quest_single", self.quest_single),
            ("quest_elong", self.quest_elong),
            ("dots_single", self.dots_single),
            ("dots_elong", self.dots_elong),
            ("word_count", self.word_count),
            ("allcaps_count", self.allcaps_count),
        ]
    }
}

impl std::ops::Add for PunctStats {
    type Output = PunctStats;

    fn add(self, o: PunctStats) -> PunctStats {
        PunctStats {
            excl_single: self.excl_single + o.excl_single,
            excl_elong: self.excl_elong + o.excl_elong,
            quest_single: self.quest_single + o.quest_single,
            quest_elong: self.quest_elong + o.quest_elong,
            dots_single: self.dots_single + o.dots_single,
            dots_elong: self.dots_elong + o.dots_elong,
            word_count: self.word_count + o.word_count,
            allcaps_count: self.allcaps_count + o.allcaps_count,
        }
    }
}

fn is_allcaps(token: &str) -> bool {
    token.chars().count() >= 2
        && token.chars().any(char::is_alphabetic)
        && token.chars().filter(|c| c.is_alphabetic()).all(char::is_uppercase)
}

pub fn punct_stats(text: &str) -> PunctStats {
    let normalized;
    let text = if text.contains('…') {
        normalized = text.replace('…', "...");
        normalized.as_str()
    } else {
        text
    };
    punct_stats_of(&tokenize(text))
}

/// Punctuation statistics from an existing tokenisation. Callers must have
/// already expanded `…` to `...` if they want it counted as dots.
pub fn punct_stats_of(tokens: &TokenList) -> PunctStats {
    let mut s = PunctStats {
        word_count: tokens.len(),
        allcaps_count: tokens.tokens.iter().filter(|t| is_allcaps(t)).count(),
        ..PunctStats::default()
    };
    for run in &tokens.punct {
        let single = run.len == 1;
        match (run.mark, single) {
            ('!', true) => s.excl_single += 1,
            ('!', false) => s.excl_elong += 1,
            ('?', true) => s.quest_single += 1,
            ('?', false) => s.quest_elong += 1,
            ('.', true) => s.dots_single += 1,
            ('.', false) => s.dots_elong += 1,
            _ => {}
        }
    }
    s
}

/// Counts emoticon patterns in raw text, scanning left to right and taking
/// the longest pattern at each position.
pub fn extract_emoticons(text: &str, lexicon: &Lexicon) -> BTreeMap<String, usize> {
    let patterns: Vec<&str> = lexicon.terms().collect();
    let mut counts = BTreeMap::new();
    if patterns.is_empty() {
        return counts;
    }
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        let best = patterns.iter().filter(|p| rest.starts_with(**p)).max_by_key(|p| p.len());
        match best {
            Some(p) => {
                *counts.entry(p.to_string()).or_insert(0) += 1;
                i += p.len();
            }
            None => {
                i += rest.chars().next().map(char::len_utf8).unwrap_or(1);
            }
        }
    }
    counts
}
