//! Forum comments, accusation mining, annotator agreement and dataset
//! construction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset};
use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::MetadataFeatures;
use crate::lexicons::Lexicon;
use crate::textproc::tokenize;

/// Authors need at least this many comments to supply non-troll examples.
pub const MIN_NON_TROLL_COMMENTS: usize = 100;

/// Minimum-mention thresholds of the user-level study.
pub const USER_THRESHOLDS: [usize; 4] = [5, 10, 15, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub user_id: String,
    pub publication_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub timestamp: DateTime<FixedOffset>,
    pub rank: u32,
    pub thread_size: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_tags: Option<Vec<String>>,
}

impl Comment {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("comment id is empty"));
        }
        if self.rank < 1 || self.thread_size < 1 {
            return Err(Error::invalid(format!("comment {}: rank and thread_size must be at least 1", self.id)));
        }
        if self.rank > self.thread_size {
            return Err(Error::invalid(format!(
                "comment {}: rank {} exceeds thread size {}",
                self.id, self.rank, self.thread_size
            )));
        }
        if self.parent_id.as_deref() == Some(self.id.as_str()) {
            return Err(Error::invalid(format!("comment {} replies to itself", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    PaidTroll,
    MentionedTroll,
    NonTroll,
}

impl Label {
    pub fn is_troll(self) -> bool {
        !matches!(self, Label::NonTroll)
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "paid_troll" | "paid" => Ok(Label::PaidTroll),
            "mentioned_troll" | "mentioned" => Ok(Label::MentionedTroll),
            "non_troll" | "non" => Ok(Label::NonTroll),
            other => Err(Error::invalid(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum InputFormat {
    #[default]
    Jsonl,
    Csv,
}

impl InputFormat {
    /// `.csv` files are CSV, everything else line-delimited JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Jsonl,
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Ok(InputFormat::Jsonl),
            "csv" => Ok(InputFormat::Csv),
            other => Err(Error::invalid(format!("unsupported input format `{other}`"))),
        }
    }
}

/// Strict ingestion aborts on the first bad record; lenient skips and warns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum IngestMode {
    Strict,
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordIssue {
    pub line: usize,
    pub record_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub comments: Vec<Comment>,
    pub skipped: Vec<RecordIssue>,
}

#[derive(Debug, Deserialize)]
struct CsvRecord {
    id: String,
    user_id: String,
    publication_id: String,
    #[serde(default)]
    parent_id: Option<String>,
    timestamp: Option<String>,
    rank: u32,
    thread_size: u32,
    text: String,
    #[serde(default)]
    pos_tags: Option<String>,
}

impl CsvRecord {
    fn into_comment(self) -> Result<Comment> {
        let ts = self
            .timestamp
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| Error::invalid("missing field `timestamp`"))?;
        let timestamp = DateTime::parse_from_rfc3339(ts.trim())
            .map_err(|e| Error::invalid(format!("invalid timestamp `{ts}`: {e}")))?;
        Ok(Comment {
            id: self.id,
            user_id: self.user_id,
            publication_id: self.publication_id,
            parent_id: self.parent_id.filter(|p| !p.trim().is_empty()),
            timestamp,
            rank: self.rank,
            thread_size: self.thread_size,
            text: self.text,
            pos_tags: self
                .pos_tags
                .filter(|p| !p.trim().is_empty())
                .map(|p| p.split_whitespace().map(str::to_string).collect()),
        })
    }
}

fn record(
    out: &mut Ingested,
    path: &Path,
    mode: IngestMode,
    line: usize,
    id: Option<String>,
    parsed: Result<Comment>,
) -> Result<()> {
    match parsed.and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => out.comments.push(c),
        Err(e) => {
            let message = e.to_string();
            let who = id.as_deref().map(|i| format!("record `{i}`: ")).unwrap_or_default();
            if mode == IngestMode::Strict {
                return Err(Error::Malformed { path: path.to_path_buf(), line, message: format!("{who}{message}") });
            }
            warn!("{}:{line}: skipping {who}{message}", path.display());
            out.skipped.push(RecordIssue { line, record_id: id, message });
        }
    }
    Ok(())
}

/// Reads comments in file order. Bad records abort in strict mode and are
/// skipped (and reported with their line number) in lenient mode.
pub fn load_comments(path: impl AsRef<Path>, format: InputFormat, mode: IngestMode) -> Result<Ingested> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Ingested::default();
    match format {
        InputFormat::Jsonl => {
            for (n, line) in content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string));
                let parsed = serde_json::from_str::<Comment>(line).map_err(Error::from);
                record(&mut out, path, mode, n + 1, id, parsed)?;
            }
        }
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(content.as_bytes());
            let headers = reader.headers()?.clone();
            for row in reader.records() {
                let (line, id, parsed) = match row {
                    Ok(r) => {
                        let line = r.position().map(|p| p.line() as usize).unwrap_or(0);
                        let id = headers.iter().position(|h| h == "id").and_then(|i| r.get(i)).map(str::to_string);
                        let parsed = r
                            .deserialize::<CsvRecord>(Some(&headers))
                            .map_err(Error::from)
                            .and_then(CsvRecord::into_comment);
                        (line, id, parsed)
                    }
                    Err(e) => {
                        let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                        (line, None, Err(Error::from(e)))
                    }
                };
                record(&mut out, path, mode, line, id, parsed)?;
            }
        }
    }
    Ok(out)
}

pub fn write_comments<W: Write>(mut out: W, comments: &[Comment]) -> Result<()> {
    for c in comments {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccusationCandidate {
    pub accusation_comment_id: String,
    pub accused_comment_id: String,
    pub matched_trigger: String,
    #[serde(default)]
    pub annotator_decisions: Vec<bool>,
}

impl AccusationCandidate {
    /// Unannotated candidates are trusted; annotated ones need every
    /// annotator to agree it is an accusation.
    pub fn is_confirmed(&self) -> bool {
        self.annotator_decisions.iter().all(|&d| d)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Mining {
    pub candidates: Vec<AccusationCandidate>,
    /// Replies whose parent is not in the corpus.
    pub dangling: Vec<String>,
}

/// Finds replies containing a token that starts with a trigger stem
/// (case-insensitive). The parent comment is the accused one.
pub fn mine_accusations(comments: &[Comment], triggers: &Lexicon) -> Result<Mining> {
    if triggers.is_empty() {
        return Err(Error::invalid("trigger lexicon is empty"));
    }
    let ids: HashSet<&str> = comments.iter().map(|c| c.id.as_str()).collect();
    let stems: Vec<&str> = triggers.terms().collect();
    let mut out = Mining::default();
    for c in comments {
        let Some(parent) = c.parent_id.as_deref() else { continue };
        if !ids.contains(parent) {
            warn!("comment {} replies to unknown comment {parent}; skipped", c.id);
            out.dangling.push(c.id.clone());
            continue;
        }
        let hit = tokenize(&c.text).lowercased().into_iter().find_map(|tok| {
            stems
                .iter()
                .filter(|s| tok.starts_with(**s))
                .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| b.cmp(a)))
                .map(|s| s.to_string())
        });
        if let Some(trigger) = hit {
            out.candidates.push(AccusationCandidate {
                accusation_comment_id: c.id.clone(),
                accused_comment_id: parent.to_string(),
                matched_trigger: trigger,
                annotator_decisions: Vec::new(),
            });
        }
    }
    Ok(out)
}

/// Cohen's kappa between two annotators' labels.
///
/// Computed as `(n·agree − Σ a_k·b_k) / (n² − Σ a_k·b_k)` on integer counts,
/// which equals `(p_o − p_e) / (1 − p_e)`. When chance agreement is 1 (both
/// annotators constant and identical) the result is defined as 1.0.
pub fn cohen_kappa<L: Ord>(labels_a: &[L], labels_b: &[L]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::invalid(format!("label lists differ in length: {} vs {}", labels_a.len(), labels_b.len())));
    }
    if labels_a.is_empty() {
        return Err(Error::invalid("label lists are empty"));
    }
    let n = labels_a.len() as i128;
    let agree = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count() as i128;
    let mut ca: BTreeMap<&L, i128> = BTreeMap::new();
    let mut cb: BTreeMap<&L, i128> = BTreeMap::new();
    for (a, b) in labels_a.iter().zip(labels_b) {
        *ca.entry(a).or_insert(0) += 1;
        *cb.entry(b).or_insert(0) += 1;
    }
    let chance: i128 = ca.iter().map(|(k, a)| a * cb.get(k).copied().unwrap_or(0)).sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(((n * agree - chance) as f64 / denom as f64).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserStats {
    pub user_id: String,
    pub comment_count: usize,
    /// Distinct confirmed accusing comments aimed at this user's comments.
    pub accusation_mentions: usize,
    /// Distinct authors of those accusing comments.
    pub distinct_accusers: usize,
}

/// Per-user comment and accusation counts, sorted by user id.
pub fn user_stats(comments: &[Comment], candidates: &[AccusationCandidate]) -> Vec<UserStats> {
    let by_id: HashMap<&str, &Comment> = comments.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut stats: BTreeMap<&str, (usize, BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
    for c in comments {
        stats.entry(c.user_id.as_str()).or_default().0 += 1;
    }
    for cand in candidates.iter().filter(|c| c.is_confirmed()) {
        let (Some(accused), Some(accuser)) =
            (by_id.get(cand.accused_comment_id.as_str()), by_id.get(cand.accusation_comment_id.as_str()))
        else {
            continue;
        };
        let e = stats.entry(accused.user_id.as_str()).or_default();
        e.1.insert(accuser.id.as_str());
        e.2.insert(accuser.user_id.as_str());
    }
    stats
        .into_iter()
        .map(|(u, (n, acc, who))| UserStats {
            user_id: u.to_string(),
            comment_count: n,
            accusation_mentions: acc.len(),
            distinct_accusers: who.len(),
        })
        .collect()
}

/// Authors of comments that received a confirmed accusation.
pub fn accused_users(comments: &[Comment], candidates: &[AccusationCandidate]) -> HashSet<String> {
    let by_id: HashMap<&str, &Comment> = comments.iter().map(|c| (c.id.as_str(), c)).collect();
    candidates
        .iter()
        .filter(|c| c.is_confirmed())
        .filter_map(|c| by_id.get(c.accused_comment_id.as_str()).map(|c| c.user_id.clone()))
        .collect()
}

/// One labelled example. `metadata` overrides the comment's own posting-time
/// features (used for user-level aggregates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    #[serde(flatten)]
    pub comment: Comment,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<MetadataFeatures>,
}

impl Example {
    pub fn new(comment: Comment, label: Label) -> Self {
        Example { comment, label, metadata: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub examples: Vec<Example>,
    pub pairing_seed: u64,
    pub dropped_troll_ids: Vec<String>,
}

impl LabeledDataset {
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.examples.iter().filter(|e| e.label.is_troll()).count();
        (pos, self.examples.len() - pos)
    }

    pub fn is_balanced(&self) -> bool {
        let (p, n) = self.class_counts();
        p == n
    }

    pub fn labels(&self) -> Vec<bool> {
        self.examples.iter().map(|e| e.label.is_troll()).collect()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// One JSON object per line: the comment fields plus `label`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.examples {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Example>> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut out = Vec::new();
        for (n, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: Example = serde_json::from_str(line).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
            out.push(e);
        }
        Ok(out)
    }
}

/// Pairs every troll comment with a random non-troll comment from the same
/// publication.
///
/// Eligible partners are written by authors with at least
/// [`MIN_NON_TROLL_COMMENTS`] comments who are neither accused nor authors of
/// any troll comment in the input. Partners are drawn without replacement
/// while unused ones remain in the thread, then with replacement. Troll
/// comments without any eligible partner are dropped and listed.
pub fn build_pairs(
    troll_comments: &[(Comment, Label)],
    all_comments: &[Comment],
    stats: &[UserStats],
    accused_users: &HashSet<String>,
    seed: u64,
) -> LabeledDataset {
    let counts: HashMap<&str, usize> = stats.iter().map(|s| (s.user_id.as_str(), s.comment_count)).collect();
    let troll_ids: HashSet<&str> = troll_comments.iter().map(|(c, _)| c.id.as_str()).collect();
    let troll_authors: HashSet<&str> = troll_comments.iter().map(|(c, _)| c.user_id.as_str()).collect();
    let mut by_pub: HashMap<&str, Vec<&Comment>> = HashMap::new();
    for c in all_comments {
        let eligible = counts.get(c.user_id.as_str()).copied().unwrap_or(0) >= MIN_NON_TROLL_COMMENTS
            && !accused_users.contains(&c.user_id)
            && !troll_authors.contains(c.user_id.as_str())
            && !troll_ids.contains(c.id.as_str());
        if eligible {
            by_pub.entry(c.publication_id.as_str()).or_default().push(c);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: HashSet<&str> = HashSet::new();
    let mut ds = LabeledDataset { pairing_seed: seed, ..Default::default() };
    for (troll, label) in troll_comments {
        let pool = by_pub.get(troll.publication_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if pool.is_empty() {
            ds.dropped_troll_ids.push(troll.id.clone());
            continue;
        }
        let fresh: Vec<&Comment> = pool.iter().copied().filter(|c| !used.contains(c.id.as_str())).collect();
        let partner =
            if fresh.is_empty() { pool[rng.gen_range(0..pool.len())] } else { fresh[rng.gen_range(0..fresh.len())] };
        used.insert(partner.id.as_str());
        ds.examples.push(Example::new(troll.clone(), *label));
        ds.examples.push(Example::new(partner.clone(), Label::NonTroll));
    }
    ds
}

#[derive(Debug, Clone, Default)]
pub struct UserDataset {
    pub dataset: LabeledDataset,
    pub min_mentions: usize,
    /// Users at or above the threshold.
    pub positives: usize,
    /// Never-accused users with enough comments, before subsampling.
    pub negatives: usize,
    /// Majority-class accuracy of the unbalanced user set.
    pub majority_baseline: f64,
}

/// Builds a balanced user-level dataset: users with at least `min_mentions`
/// accusations against never-accused prolific users. Each example
/// concatenates all of the user's comments and averages their metadata.
pub fn build_user_dataset(
    comments: &[Comment],
    stats: &[UserStats],
    min_mentions: usize,
    seed: u64,
) -> Result<UserDataset> {
    if min_mentions == 0 {
        return Err(Error::invalid("min_mentions must be at least 1"));
    }
    let mut positives: Vec<&str> =
        stats.iter().filter(|s| s.accusation_mentions >= min_mentions).map(|s| s.user_id.as_str()).collect();
    let mut negatives: Vec<&str> = stats
        .iter()
        .filter(|s| s.accusation_mentions == 0 && s.comment_count >= MIN_NON_TROLL_COMMENTS)
        .map(|s| s.user_id.as_str())
        .collect();
    positives.sort_unstable();
    negatives.sort_unstable();
    let mut out =
        UserDataset { min_mentions, positives: positives.len(), negatives: negatives.len(), ..Default::default() };
    out.dataset.pairing_seed = seed;
    if positives.is_empty() {
        warn!("no user has {min_mentions} or more accusation mentions");
        return Ok(out);
    }
    let total = positives.len() + negatives.len();
    out.majority_baseline = positives.len().max(negatives.len()) as f64 / total as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = positives.len().min(negatives.len());
    for side in [&mut positives, &mut negatives] {
        if side.len() > keep {
            let mut picked: Vec<&str> = side.choose_multiple(&mut rng, keep).copied().collect();
            picked.sort_unstable();
            *side = picked;
        }
    }

    let mut by_user: HashMap<&str, Vec<&Comment>> = HashMap::new();
    for c in comments {
        by_user.entry(c.user_id.as_str()).or_default().push(c);
    }
    for (users, label) in [(&positives, Label::MentionedTroll), (&negatives, Label::NonTroll)] {
        for &u in users.iter() {
            let Some(own) = by_user.get(u) else { continue };
            out.dataset.examples.push(aggregate_user(u, own, label));
        }
    }
    Ok(out)
}

fn aggregate_user(user: &str, comments: &[&Comment], label: Label) -> Example {
    let text = comments.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join("\n");
    let pos_tags = if comments.iter().all(|c| c.pos_tags.is_some()) {
        Some(comments.iter().flat_map(|c| c.pos_tags.clone().unwrap_or_default()).collect())
    } else {
        None
    };
    let first = comments[0];
    Example {
        comment: Comment {
            id: format!("user:{user}"),
            user_id: user.to_string(),
            publication_id: String::new(),
            parent_id: None,
            timestamp: first.timestamp,
            rank: 1,
            thread_size: 1,
            text,
            pos_tags,
        },
        label,
        metadata: Some(MetadataFeatures::mean(comments.iter().copied())),
    }
}
