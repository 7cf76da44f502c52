//! Group-tagged feature extraction, the train-fit column registry and
//! min-max + L2 scaling.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::corpus::{Comment, Example};
use crate::embeddings::load_cluster_assignment;
use crate::error::{Error, Result};
use crate::lexicons::{
    gazetteer_entities_lower, load_lexicon, sentiment_scores_lower, Gazetteers, Lexicon, LexiconKind,
    SentimentResources,
};
use crate::scalar::Scalar;
use crate::textproc::{
    affix, char_ngrams, extract_emoticons, punct_stats_of, stem, tokenize, word_ngrams, AffixSide, StemRules,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    #[serde(rename = "bow_no_stop")]
    BowNoStop,
    #[serde(rename = "bow_with_stop")]
    BowWithStop,
    #[serde(rename = "bow_stems")]
    BowStems,
    #[serde(rename = "word_2grams")]
    Word2Grams,
    #[serde(rename = "word_3grams")]
    Word3Grams,
    #[serde(rename = "char_ngrams")]
    CharNgrams,
    #[serde(rename = "word_prefix")]
    WordPrefix,
    #[serde(rename = "word_suffix")]
    WordSuffix,
    #[serde(rename = "emoticons")]
    Emoticons,
    #[serde(rename = "punct")]
    Punct,
    #[serde(rename = "metadata")]
    Metadata,
    #[serde(rename = "w2v_clusters")]
    W2vClusters,
    #[serde(rename = "sentiment")]
    Sentiment,
    #[serde(rename = "bad_words")]
    BadWords,
    #[serde(rename = "mentions")]
    Mentions,
    #[serde(rename = "pos")]
    Pos,
    #[serde(rename = "ne")]
    Ne,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 17] = [
        FeatureGroup::BowNoStop,
        FeatureGroup::BowWithStop,
        FeatureGroup::BowStems,
        FeatureGroup::Word2Grams,
        FeatureGroup::Word3Grams,
        FeatureGroup::CharNgrams,
        FeatureGroup::WordPrefix,
        FeatureGroup::WordSuffix,
        FeatureGroup::Emoticons,
        FeatureGroup::Punct,
        FeatureGroup::Metadata,
        FeatureGroup::W2vClusters,
        FeatureGroup::Sentiment,
        FeatureGroup::BadWords,
        FeatureGroup::Mentions,
        FeatureGroup::Pos,
        FeatureGroup::Ne,
    ];

    pub const BOW: [FeatureGroup; 3] = [FeatureGroup::BowNoStop, FeatureGroup::BowWithStop, FeatureGroup::BowStems];

    /// Machine name used in config files and `--mask`.
    pub fn name(self) -> &'static str {
        use FeatureGroup::*;
        match self {
            BowNoStop => "bow_no_stop",
            BowWithStop => "bow_with_stop",
            BowStems => "bow_stems",
            Word2Grams => "word_2grams",
            Word3Grams => "word_3grams",
            CharNgrams => "char_ngrams",
            WordPrefix => "word_prefix",
            WordSuffix => "word_suffix",
            Emoticons => "emoticons",
            Punct => "punct",
            Metadata => "metadata",
            W2vClusters => "w2v_clusters",
            Sentiment => "sentiment",
            BadWords => "bad_words",
            Mentions => "mentions",
            Pos => "pos",
            Ne => "ne",
        }
    }

    /// Human-readable row label for report tables.
    pub fn label(self) -> &'static str {
        use FeatureGroup::*;
        match self {
            BowNoStop => "bow, no stop",
            BowWithStop => "bow with stop",
            BowStems => "bow stems",
            Word2Grams => "word 2-grams",
            Word3Grams => "word 3-grams",
            CharNgrams => "char n-grams",
            WordPrefix => "word preff",
            WordSuffix => "word suff",
            Emoticons => "emoticons",
            Punct => "punct",
            Metadata => "metadata",
            W2vClusters => "w2v clusters",
            Sentiment => "sentiment",
            BadWords => "bad words",
            Mentions => "mentions",
            Pos => "POS",
            Ne => "NE",
        }
    }

    /// Abbreviation used when several groups are listed in one label.
    pub fn short(self) -> &'static str {
        use FeatureGroup::*;
        match self {
            Sentiment => "sent",
            BadWords => "bad",
            Mentions => "ment",
            Metadata => "meta",
            Pos => "pos",
            Ne => "NE",
            other => other.name(),
        }
    }

    fn bit(self) -> u32 {
        1 << (self as u32)
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_lowercase().replace(['-', ' '], "_");
        let alias = match key.as_str() {
            "sent" => Some(FeatureGroup::Sentiment),
            "bad" => Some(FeatureGroup::BadWords),
            "ment" => Some(FeatureGroup::Mentions),
            "meta" => Some(FeatureGroup::Metadata),
            "punctuation" => Some(FeatureGroup::Punct),
            "emoticon" => Some(FeatureGroup::Emoticons),
            _ => None,
        };
        alias
            .or_else(|| FeatureGroup::ALL.iter().copied().find(|g| g.name() == key))
            .ok_or_else(|| Error::UnknownGroup(s.trim().to_string()))
    }
}

/// A set of feature groups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupMask(u32);

impl GroupMask {
    pub fn empty() -> Self {
        GroupMask(0)
    }

    pub fn all() -> Self {
        FeatureGroup::ALL.iter().copied().collect()
    }

    pub fn only(g: FeatureGroup) -> Self {
        GroupMask(g.bit())
    }

    pub fn bow() -> Self {
        FeatureGroup::BOW.iter().copied().collect()
    }

    pub fn contains(self, g: FeatureGroup) -> bool {
        self.0 & g.bit() != 0
    }

    pub fn with(self, g: FeatureGroup) -> Self {
        GroupMask(self.0 | g.bit())
    }

    pub fn without(self, g: FeatureGroup) -> Self {
        GroupMask(self.0 & !g.bit())
    }

    pub fn union(self, o: GroupMask) -> Self {
        GroupMask(self.0 | o.0)
    }

    pub fn intersect(self, o: GroupMask) -> Self {
        GroupMask(self.0 & o.0)
    }

    pub fn minus(self, o: GroupMask) -> Self {
        GroupMask(self.0 & !o.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = FeatureGroup> {
        FeatureGroup::ALL.into_iter().filter(move |g| self.contains(*g))
    }

    /// Comma-joined abbreviations with the first letter capitalised, e.g.
    /// `Sent,bad,pos,NE`.
    pub fn short_label(self) -> String {
        let joined = self.iter().map(FeatureGroup::short).collect::<Vec<_>>().join(",");
        let mut chars = joined.chars();
        match chars.next() {
            Some(c) => c.to_uppercase().chain(chars).collect(),
            None => joined,
        }
    }
}

impl FromIterator<FeatureGroup> for GroupMask {
    fn from_iter<I: IntoIterator<Item = FeatureGroup>>(iter: I) -> Self {
        GroupMask(iter.into_iter().fold(0, |acc, g| acc | g.bit()))
    }
}

impl fmt::Display for GroupMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(FeatureGroup::name).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for GroupMask {
    type Err = Error;

    /// Comma-separated group names, or `all`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(GroupMask::all());
        }
        s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
    }
}

impl Serialize for GroupMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for GroupMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            List(Vec<String>),
            Text(String),
        }
        let parsed = match Repr::deserialize(d)? {
            Repr::List(v) => v.iter().map(|s| s.parse()).collect::<Result<GroupMask>>(),
            Repr::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureKey {
    pub group: FeatureGroup,
    pub name: String,
}

/// Raw (unscaled) feature values keyed by group and name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawFeatures(BTreeMap<FeatureKey, f64>);

impl RawFeatures {
    pub fn new() -> Self {
        RawFeatures::default()
    }

    pub fn add(&mut self, group: FeatureGroup, name: impl Into<String>, value: f64) {
        *self.0.entry(FeatureKey { group, name: name.into() }).or_insert(0.0) += value;
    }

    pub fn set(&mut self, group: FeatureGroup, name: impl Into<String>, value: f64) {
        self.0.insert(FeatureKey { group, name: name.into() }, value);
    }

    pub fn get(&self, group: FeatureGroup, name: &str) -> Option<f64> {
        self.0.get(&FeatureKey { group, name: name.to_string() }).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureKey, f64)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn groups(&self) -> GroupMask {
        self.0.keys().map(|k| k.group).collect()
    }

    /// Keeps only the features of the groups in `mask`.
    pub fn restrict(&self, mask: GroupMask) -> RawFeatures {
        RawFeatures(self.0.iter().filter(|(k, _)| mask.contains(k.group)).map(|(k, v)| (k.clone(), *v)).collect())
    }

    pub fn extend(&mut self, other: RawFeatures) {
        for (k, v) in other.0 {
            *self.0.entry(k).or_insert(0.0) += v;
        }
    }
}

impl FromIterator<(FeatureKey, f64)> for RawFeatures {
    fn from_iter<I: IntoIterator<Item = (FeatureKey, f64)>>(iter: I) -> Self {
        let mut r = RawFeatures::new();
        for (k, v) in iter {
            *r.0.entry(k).or_insert(0.0) += v;
        }
        r
    }
}

/// Posting-time and thread-position features of one comment. Values are
/// 0/1 flags for a single comment and averages for aggregated users.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetadataFeatures {
    pub worktime: f64,
    pub night: f64,
    pub weekend: f64,
    pub rank_ratio: f64,
}

impl MetadataFeatures {
    /// Uses the wall-clock time of the timestamp's own UTC offset (the
    /// forum's local time). Worktime is 9:00 ≤ t < 19:00, night is
    /// t ≥ 21:00 or t < 6:00; the hours in between set neither flag.
    pub fn from_comment(c: &Comment) -> Self {
        let hour = c.timestamp.hour();
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        MetadataFeatures {
            worktime: flag((9..19).contains(&hour)),
            night: flag(!(6..21).contains(&hour)),
            weekend: flag(matches!(c.timestamp.weekday(), Weekday::Sat | Weekday::Sun)),
            rank_ratio: c.rank as f64 / c.thread_size.max(1) as f64,
        }
    }

    pub fn mean<'a>(comments: impl IntoIterator<Item = &'a Comment>) -> Self {
        let mut sum = MetadataFeatures::default();
        let mut n = 0usize;
        for c in comments {
            let m = MetadataFeatures::from_comment(c);
            sum.worktime += m.worktime;
            sum.night += m.night;
            sum.weekend += m.weekend;
            sum.rank_ratio += m.rank_ratio;
            n += 1;
        }
        if n > 0 {
            let n = n as f64;
            sum.worktime /= n;
            sum.night /= n;
            sum.weekend /= n;
            sum.rank_ratio /= n;
        }
        sum
    }

    pub fn fields(&self) -> [(&'static str, f64); 4] {
        [("worktime", self.worktime), ("night", self.night), ("weekend", self.weekend), ("rank_ratio", self.rank_ratio)]
    }
}

/// Fine tag plus its one- and two-character coarse prefixes, without repeats.
pub fn pos_tag_expansion(tag: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(3);
    let chars: Vec<char> = tag.chars().collect();
    for cut in [chars.len(), 1, 2] {
        if cut == 0 || cut > chars.len() {
            continue;
        }
        let t: String = chars[..cut].iter().collect();
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Tag used for tokens the POS dictionary does not know.
pub const FALLBACK_POS_TAG: &str = "X";

/// Everything feature extraction may need. Each group checks for its own
/// resource.
#[derive(Debug, Clone, Default)]
pub struct FeatureResources {
    pub stopwords: Option<HashSet<String>>,
    pub stem_rules: Option<StemRules>,
    pub emoticons: Option<Lexicon>,
    pub clusters: Option<HashMap<String, usize>>,
    pub sentiment: Option<SentimentResources>,
    pub bad_words: Vec<Lexicon>,
    pub mentions: Vec<Lexicon>,
    pub gazetteers: Option<Gazetteers>,
    pub pos_dictionary: Option<HashMap<String, String>>,
}

/// Minimum stem length used for rule files loaded from a resource directory.
pub const DEFAULT_MIN_STEM_LENGTH: usize = 3;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn lexicons_in(dir: &Path) -> Result<Vec<Lexicon>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths.into_iter().map(|p| load_lexicon(p, LexiconKind::Terms)).collect()
}

pub fn load_word_list(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    Ok(read(path)?.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty() && !l.starts_with('#')).collect())
}

/// `word<TAB>tag` lines.
pub fn load_pos_dictionary(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let mut map = HashMap::new();
    for (n, line) in read(path)?.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (w, t) = line.split_once('\t').ok_or_else(|| Error::Malformed {
            path: path.to_path_buf(),
            line: n + 1,
            message: "expected `word<TAB>tag`".into(),
        })?;
        map.insert(w.trim().to_lowercase(), t.trim().to_string());
    }
    Ok(map)
}

impl FeatureResources {
    /// Loads whatever is present in a resource directory:
    ///
    /// ```text
    /// stopwords.txt  stem_rules.tsv  emoticons.txt  clusters.tsv  pos_dictionary.tsv
    /// sentiment/{polarity,emotions,opinion}.tsv
    /// bad_words/*.txt  mentions/*.txt  gazetteers/<entity_type>.txt
    /// ```
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::invalid(format!("resource directory {} does not exist", dir.display())));
        }
        let mut res = FeatureResources::default();
        let p = dir.join("stopwords.txt");
        if p.is_file() {
            res.stopwords = Some(load_word_list(&p)?);
        }
        let p = dir.join("stem_rules.tsv");
        if p.is_file() {
            res.stem_rules = Some(StemRules::load(&p, DEFAULT_MIN_STEM_LENGTH)?);
        }
        let p = dir.join("emoticons.txt");
        if p.is_file() {
            res.emoticons = Some(load_lexicon(&p, LexiconKind::Patterns)?);
        }
        let p = dir.join("clusters.tsv");
        if p.is_file() {
            res.clusters = Some(load_cluster_assignment(&p)?);
        }
        let p = dir.join("pos_dictionary.tsv");
        if p.is_file() {
            res.pos_dictionary = Some(load_pos_dictionary(&p)?);
        }
        let s = dir.join("sentiment");
        if s.is_dir() {
            res.sentiment = Some(SentimentResources::new(
                load_lexicon(s.join("polarity.tsv"), LexiconKind::Terms)?,
                load_lexicon(s.join("emotions.tsv"), LexiconKind::Terms)?,
                load_lexicon(s.join("opinion.tsv"), LexiconKind::Terms)?,
            )?);
        }
        res.bad_words = lexicons_in(&dir.join("bad_words"))?;
        res.mentions = lexicons_in(&dir.join("mentions"))?;
        let g = lexicons_in(&dir.join("gazetteers"))?;
        if !g.is_empty() {
            res.gazetteers = Some(Gazetteers::new(g)?);
        }
        Ok(res)
    }

    /// Whether the resource behind `group` is loaded. POS counts as available
    /// only with a dictionary; comments carrying their own tags work without.
    pub fn has(&self, group: FeatureGroup) -> bool {
        use FeatureGroup::*;
        match group {
            BowWithStop | Word2Grams | Word3Grams | CharNgrams | WordPrefix | WordSuffix | Punct | Metadata => true,
            BowNoStop => self.stopwords.is_some(),
            BowStems => self.stem_rules.is_some(),
            Emoticons => self.emoticons.is_some(),
            W2vClusters => self.clusters.is_some(),
            Sentiment => self.sentiment.is_some(),
            BadWords => !self.bad_words.is_empty(),
            Mentions => !self.mentions.is_empty(),
            Pos => self.pos_dictionary.is_some(),
            Ne => self.gazetteers.is_some(),
        }
    }

    pub fn available(&self) -> GroupMask {
        FeatureGroup::ALL.iter().copied().filter(|g| self.has(*g)).collect()
    }

    /// Fails on the first enabled group whose resource is missing. POS is
    /// checked per comment instead.
    pub fn check(&self, mask: GroupMask) -> Result<()> {
        match mask.iter().find(|g| *g != FeatureGroup::Pos && !self.has(*g)) {
            Some(g) => Err(Error::MissingResource(g)),
            None => Ok(()),
        }
    }
}

/// Extracts the raw features of every group in `mask` for one comment.
pub fn extract_raw(comment: &Comment, mask: GroupMask, res: &FeatureResources) -> Result<RawFeatures> {
    extract_with_metadata(comment, None, mask, res)
}

/// As [`extract_raw`], using the example's aggregated metadata when present.
pub fn extract_example(example: &Example, mask: GroupMask, res: &FeatureResources) -> Result<RawFeatures> {
    extract_with_metadata(&example.comment, example.metadata, mask, res)
}

pub fn extract_with_metadata(
    comment: &Comment,
    metadata: Option<MetadataFeatures>,
    mask: GroupMask,
    res: &FeatureResources,
) -> Result<RawFeatures> {
    use FeatureGroup::*;
    res.check(mask)?;
    let text = comment.text.replace('…', "...");
    let tokens = tokenize(&text);
    let lower = tokens.lowercased();
    let mut out = RawFeatures::new();

    if mask.contains(BowWithStop) {
        for t in &lower {
            out.add(BowWithStop, t.as_str(), 1.0);
        }
    }
    if mask.contains(BowNoStop) {
        let stop = res.stopwords.as_ref().ok_or(Error::MissingResource(BowNoStop))?;
        for t in lower.iter().filter(|t| !stop.contains(*t)) {
            out.add(BowNoStop, t.as_str(), 1.0);
        }
    }
    if mask.contains(BowStems) {
        let rules = res.stem_rules.as_ref().ok_or(Error::MissingResource(BowStems))?;
        for t in &lower {
            out.add(BowStems, stem(t, rules), 1.0);
        }
    }
    for (group, n) in [(Word2Grams, 2), (Word3Grams, 3)] {
        if mask.contains(group) {
            for g in word_ngrams(&lower, n) {
                out.add(group, g, 1.0);
            }
        }
    }
    if mask.contains(CharNgrams) {
        for t in &lower {
            for n in [3, 4] {
                for g in char_ngrams(t, n) {
                    out.add(CharNgrams, g, 1.0);
                }
            }
        }
    }
    for (group, side) in [(WordPrefix, AffixSide::Prefix), (WordSuffix, AffixSide::Suffix)] {
        if mask.contains(group) {
            for t in &lower {
                for k in [3, 4] {
                    out.add(group, format!("{k}:{}", affix(t, k, side)), 1.0);
                }
            }
        }
    }
    if mask.contains(Emoticons) {
        let lex = res.emoticons.as_ref().ok_or(Error::MissingResource(Emoticons))?;
        for (e, c) in extract_emoticons(&comment.text, lex) {
            out.add(Emoticons, e, c as f64);
        }
    }
    if mask.contains(Punct) {
        for (name, v) in punct_stats_of(&tokens).fields() {
            out.set(Punct, name, v as f64);
        }
    }
    if mask.contains(Metadata) {
        let m = metadata.unwrap_or_else(|| MetadataFeatures::from_comment(comment));
        for (name, v) in m.fields() {
            out.set(Metadata, name, v);
        }
    }
    if mask.contains(W2vClusters) {
        let clusters = res.clusters.as_ref().ok_or(Error::MissingResource(W2vClusters))?;
        for t in &lower {
            if let Some(c) = clusters.get(t) {
                out.add(W2vClusters, format!("c{c}"), 1.0);
            }
        }
    }
    if mask.contains(Sentiment) {
        let s = res.sentiment.as_ref().ok_or(Error::MissingResource(Sentiment))?;
        for (name, v) in sentiment_scores_lower(&lower, s).features() {
            out.set(Sentiment, name, v);
        }
    }
    for (group, lexicons) in [(BadWords, &res.bad_words), (Mentions, &res.mentions)] {
        if mask.contains(group) {
            for lex in lexicons {
                out.add(group, lex.name.as_str(), lex.count_in(&lower).total as f64);
            }
        }
    }
    if mask.contains(Pos) {
        let tags: Vec<String> = match (&comment.pos_tags, &res.pos_dictionary) {
            (Some(tags), _) => tags.clone(),
            (None, Some(dict)) => {
                lower.iter().map(|t| dict.get(t).cloned().unwrap_or_else(|| FALLBACK_POS_TAG.to_string())).collect()
            }
            (None, None) => return Err(Error::MissingResource(Pos)),
        };
        let denom = tags.len() as f64;
        for tag in &tags {
            for t in pos_tag_expansion(tag) {
                out.add(Pos, t, 1.0 / denom);
            }
        }
    }
    if mask.contains(Ne) {
        let g = res.gazetteers.as_ref().ok_or(Error::MissingResource(Ne))?;
        for (ty, c) in gazetteer_entities_lower(&lower, g) {
            out.set(Ne, ty, c as f64);
        }
    }
    Ok(out)
}

/// Bijection between the `(group, name)` pairs seen in training and column
/// ids. Columns follow the sorted key order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<FeatureKey>", into = "Vec<FeatureKey>")]
pub struct FeatureRegistry {
    keys: Vec<FeatureKey>,
    index: HashMap<FeatureKey, usize>,
}

impl From<Vec<FeatureKey>> for FeatureRegistry {
    fn from(keys: Vec<FeatureKey>) -> Self {
        let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        FeatureRegistry { keys, index }
    }
}

impl From<FeatureRegistry> for Vec<FeatureKey> {
    fn from(r: FeatureRegistry) -> Self {
        r.keys
    }
}

impl FeatureRegistry {
    pub fn n_columns(&self) -> usize {
        self.keys.len()
    }

    pub fn column(&self, key: &FeatureKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, column: usize) -> &FeatureKey {
        &self.keys[column]
    }

    pub fn keys(&self) -> &[FeatureKey] {
        &self.keys
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScalerStats<T> {
    pub min: Vec<T>,
    pub max: Vec<T>,
    /// Columns whose absent (zero) value scales to something non-zero.
    shifted: Vec<usize>,
}

impl<T: Scalar> ScalerStats<T> {
    pub fn new(min: Vec<T>, max: Vec<T>) -> Self {
        let mut s = ScalerStats { min, max, shifted: Vec::new() };
        s.shifted = (0..s.min.len()).filter(|&j| s.scale(j, T::zero()) != T::zero()).collect();
        s
    }

    /// Min-max scaled value clipped to [0, 1]; constant columns give 0.
    pub fn scale(&self, column: usize, value: T) -> T {
        let (lo, hi) = (self.min[column], self.max[column]);
        if !(hi > lo) {
            return T::zero();
        }
        ((value - lo) / (hi - lo)).max(T::zero()).min(T::one())
    }
}

/// Registers every training feature and records per-column min/max, with
/// absent features counting as 0.
pub fn fit_registry<T: Scalar>(train: &[RawFeatures]) -> Result<(FeatureRegistry, ScalerStats<T>)> {
    if train.is_empty() {
        return Err(Error::invalid("cannot fit a feature registry on an empty training set"));
    }
    let keys: BTreeSet<&FeatureKey> = train.iter().flat_map(|r| r.0.keys()).collect();
    let registry = FeatureRegistry::from(keys.into_iter().cloned().collect::<Vec<_>>());
    let n = registry.n_columns();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut present = vec![0usize; n];
    for r in train {
        for (k, &v) in &r.0 {
            let j = registry.index[k];
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
            present[j] += 1;
        }
    }
    for j in 0..n {
        if present[j] < train.len() {
            lo[j] = lo[j].min(0.0);
            hi[j] = hi[j].max(0.0);
        }
    }
    let scaler = ScalerStats::new(lo.into_iter().map(T::of).collect(), hi.into_iter().map(T::of).collect());
    Ok((registry, scaler))
}

/// Sparse vector of `(column, value)` pairs sorted by column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureVector<T> {
    entries: Vec<(usize, T)>,
}

impl<T: Scalar> FeatureVector<T> {
    /// Sorts by column and sums duplicate columns.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, T)>) -> Self {
        let mut entries: Vec<(usize, T)> = pairs.into_iter().collect();
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, T)> = Vec::with_capacity(entries.len());
        for (c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 = last.1 + v,
                _ => merged.push((c, v)),
            }
        }
        FeatureVector { entries: merged }
    }

    pub fn dense(values: &[T]) -> Self {
        FeatureVector { entries: values.iter().copied().enumerate().collect() }
    }

    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, w: &[T]) -> T {
        self.entries.iter().map(|&(c, v)| w[c] * v).sum()
    }

    pub fn norm(&self) -> T {
        self.entries.iter().map(|&(_, v)| v * v).sum::<T>().sqrt()
    }

    /// Divides by the Euclidean norm; all-zero vectors are left unchanged.
    pub fn l2_normalize(mut self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            for e in &mut self.entries {
                e.1 = e.1 / n;
            }
        }
        self
    }

    pub fn max_column(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0)
    }
}

/// Min-max scales known features with training statistics, drops unseen
/// ones, then L2-normalises.
pub fn transform<T: Scalar>(
    raw: &RawFeatures,
    registry: &FeatureRegistry,
    scaler: &ScalerStats<T>,
) -> FeatureVector<T> {
    let mut pairs: Vec<(usize, T)> =
        raw.iter().filter_map(|(k, v)| registry.column(k).map(|j| (j, scaler.scale(j, T::of(v))))).collect();
    let touched: HashSet<usize> = pairs.iter().map(|p| p.0).collect();
    for &j in &scaler.shifted {
        if !touched.contains(&j) {
            pairs.push((j, scaler.scale(j, T::zero())));
        }
    }
    pairs.retain(|p| p.1 != T::zero());
    FeatureVector::from_pairs(pairs).l2_normalize()
}

#[derive(Serialize)]
struct DumpRow<'a> {
    comment_id: &'a str,
    group: FeatureGroup,
    name: &'a str,
    value: f64,
}

/// Writes one JSON line per `(comment id, group, name, value)`.
pub fn write_feature_dump<'a, W: Write>(
    mut out: W,
    rows: impl IntoIterator<Item = (&'a str, &'a RawFeatures)>,
) -> Result<()> {
    for (id, raw) in rows {
        for (k, value) in raw.iter() {
            let row = DumpRow { comment_id: id, group: k.group, name: &k.name, value };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n").map_err(|e| Error::io("<feature dump>", e))?;
        }
    }
    Ok(())
}
