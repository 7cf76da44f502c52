//! Experiment drivers: feature-group ablations, the user-level
//! minimum-mentions study and the accusation detector, plus report
//! rendering.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_user_dataset, Comment, Example, UserStats, USER_THRESHOLDS};
use crate::error::{Error, Result};
use crate::features::{extract_example, FeatureGroup, FeatureResources, GroupMask, RawFeatures};
use crate::learn::{cross_validate, fit_model, CvResult, Metrics, Model, TrainParams, DEFAULT_FOLDS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    All,
    LeaveOneOut,
    SingleGroup,
    GroupCombo,
    UserLevel,
    AccusationDetector,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "all" => Ok(Mode::All),
            "leave_one_out" | "loo" => Ok(Mode::LeaveOneOut),
            "single_group" | "single" => Ok(Mode::SingleGroup),
            "group_combo" | "combo" => Ok(Mode::GroupCombo),
            "user_level" | "user" => Ok(Mode::UserLevel),
            "accusation_detector" => Ok(Mode::AccusationDetector),
            other => Err(Error::invalid(format!("unknown experiment mode `{other}`"))),
        }
    }
}

/// Working precision of the numeric core.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// A named group combination. Written either as a comma list of group names,
/// whose order is kept in the label, or as `{ label, groups }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComboSpec {
    Groups(String),
    Labeled { label: String, groups: String },
}

impl ComboSpec {
    pub fn resolve(&self) -> Result<(String, GroupMask)> {
        let groups_text = match self {
            ComboSpec::Groups(g) => g,
            ComboSpec::Labeled { groups, .. } => groups,
        };
        let groups: Vec<FeatureGroup> =
            groups_text.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
        if groups.is_empty() {
            return Err(Error::invalid("group combination is empty"));
        }
        let label = match self {
            ComboSpec::Labeled { label, .. } => label.clone(),
            ComboSpec::Groups(_) => combo_label(&groups),
        };
        Ok((label, groups.into_iter().collect()))
    }
}

/// `Sent,bad,pos,NE` style label in the given order.
pub fn combo_label(groups: &[FeatureGroup]) -> String {
    let joined = groups.iter().map(|g| g.short()).collect::<Vec<_>>().join(",");
    let mut chars = joined.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => joined,
    }
}

/// The four combinations reported alongside the single-group results.
pub fn default_combos() -> Vec<ComboSpec> {
    vec![
        ComboSpec::Groups("sentiment,bad_words,pos,ne,metadata,punct".into()),
        ComboSpec::Groups("sentiment,bad_words,pos,ne".into()),
        ComboSpec::Labeled { label: "Only sent,bad".into(), groups: "sentiment,bad_words".into() },
        ComboSpec::Groups("sentiment,bad_words,mentions,ne".into()),
    ]
}

/// Experiment settings, read from a flat TOML file.
///
/// ```toml
/// dataset = "mentioned"
/// mode = "leave_one_out"
/// mask = "all"
/// folds = 10
/// seed = 42
/// C = 1.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub title: Option<String>,
    pub mode: Mode,
    /// Groups available to the experiment.
    pub mask: GroupMask,
    /// Groups ablated or run alone; defaults to every group in `mask`.
    pub groups: Option<GroupMask>,
    pub combos: Vec<ComboSpec>,
    pub thresholds: Vec<usize>,
    /// Adds a pinned `All` row above single-group and combination rows.
    pub with_all: bool,
    pub folds: usize,
    pub seed: u64,
    #[serde(rename = "C")]
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub precision: Precision,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let p = TrainParams::default();
        ExperimentConfig {
            dataset: String::new(),
            title: None,
            mode: Mode::All,
            mask: GroupMask::all(),
            groups: None,
            combos: Vec::new(),
            thresholds: Vec::new(),
            with_all: false,
            folds: DEFAULT_FOLDS,
            seed: 0,
            c: p.c,
            tol: p.tol,
            max_iter: p.max_iter,
            precision: Precision::F64,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn params(&self) -> TrainParams {
        TrainParams { c: self.c, tol: self.tol, max_iter: self.max_iter, seed: self.seed }
    }

    /// Thresholds of a user-level run, defaulting to 5, 10, 15 and 20.
    pub fn user_thresholds(&self) -> Vec<usize> {
        if self.thresholds.is_empty() {
            USER_THRESHOLDS.to_vec()
        } else {
            self.thresholds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if self.folds < 2 {
            return Err(Error::invalid(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.mask.is_empty() {
            return Err(Error::invalid("feature mask is empty"));
        }
        if !self.thresholds.is_empty() {
            if self.mode != Mode::UserLevel {
                return Err(Error::invalid("thresholds are only valid in user_level mode"));
            }
            if self.thresholds.windows(2).any(|w| w[0] >= w[1]) || self.thresholds[0] == 0 {
                return Err(Error::invalid("thresholds must be positive and strictly ascending"));
            }
        }
        if self.mode == Mode::GroupCombo && self.combos.is_empty() {
            return Err(Error::invalid("group_combo mode needs at least one combination"));
        }
        for c in &self.combos {
            c.resolve()?;
        }
        Ok(())
    }

    fn ablated_groups(&self) -> GroupMask {
        self.groups.unwrap_or(self.mask).intersect(self.mask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    /// F-score in percent.
    pub f: f64,
    /// Accuracy in percent.
    pub acc: f64,
}

impl ReportRow {
    fn from_metrics(label: impl Into<String>, m: &Metrics) -> Self {
        ReportRow { label: label.into(), f: 100.0 * m.f1, acc: 100.0 * m.accuracy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    /// Row shown above the ranked rows, outside the ordering.
    pub pinned: Option<ReportRow>,
    /// Sorted by descending F; ties keep run order.
    pub rows: Vec<ReportRow>,
    pub baseline: ReportRow,
    /// Hash of the fold assignment shared by every row.
    pub fold_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Percentages; `None` when the threshold leaves no usable data.
    pub acc: Option<f64>,
    pub f: Option<f64>,
    pub majority_baseline: Option<f64>,
    /// Accuracy minus the majority baseline of the unbalanced user set.
    pub diff: Option<f64>,
    /// Accuracy minus the balanced 50% baseline.
    pub diff_balanced: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub title: String,
    pub rows: Vec<ThresholdRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub title: String,
    pub examples: usize,
    pub positives: usize,
    pub metrics: Metrics,
    pub fold_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Ablation(ReportTable),
    Users(ThresholdTable),
    Detector(DetectorReport),
}

/// Extracts every group of `mask` for each example, in parallel and in
/// input order.
pub fn extract_all(examples: &[Example], mask: GroupMask, res: &FeatureResources) -> Result<Vec<RawFeatures>> {
    examples.par_iter().map(|e| extract_example(e, mask, res)).collect()
}

fn run_cv(raws: &[RawFeatures], labels: &[bool], mask: GroupMask, cfg: &ExperimentConfig) -> Result<CvResult> {
    let params = cfg.params();
    match cfg.precision {
        Precision::F64 => cross_validate::<f64>(raws, labels, cfg.folds, &params, mask, cfg.seed),
        Precision::F32 => cross_validate::<f32>(raws, labels, cfg.folds, &params, mask, cfg.seed),
    }
}

/// Row label for the configuration with `group` excluded.
pub fn leave_out_label(group: FeatureGroup) -> String {
    let l = group.label();
    if l.contains(',') {
        format!("All - ({l})")
    } else {
        format!("All - {l}")
    }
}

/// The configurations (label, mask) a table mode evaluates, in run order.
pub fn table_rows(cfg: &ExperimentConfig) -> Result<Vec<(String, GroupMask)>> {
    let base = cfg.mask;
    Ok(match cfg.mode {
        Mode::All => vec![("All".into(), base)],
        Mode::LeaveOneOut => std::iter::once(("All".to_string(), base))
            .chain(cfg.ablated_groups().iter().map(|g| (leave_out_label(g), base.without(g))))
            .collect(),
        Mode::SingleGroup => {
            cfg.ablated_groups().iter().map(|g| (format!("Only {}", g.label()), GroupMask::only(g))).collect()
        }
        Mode::GroupCombo => cfg
            .combos
            .iter()
            .map(|c| c.resolve())
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .map(|(l, m)| (l, m.intersect(base)))
            .collect(),
        other => return Err(Error::invalid(format!("{other:?} is not a table ablation mode"))),
    })
}

fn default_title(cfg: &ExperimentConfig) -> String {
    let what = match cfg.mode {
        Mode::All => "All features",
        Mode::LeaveOneOut => "Ablation excluding feature groups",
        Mode::SingleGroup => "Individual feature groups",
        Mode::GroupCombo => "Feature group combinations",
        Mode::UserLevel => "Users by minimum number of mentions",
        Mode::AccusationDetector => "Accusation detector",
    };
    if cfg.dataset.is_empty() {
        what.to_string()
    } else {
        format!("{}: {what}", cfg.dataset)
    }
}

/// Cross-validates every configuration of the mode on a balanced dataset.
/// All rows share one fold assignment.
pub fn run_ablation(examples: &[Example], cfg: &ExperimentConfig, res: &FeatureResources) -> Result<ReportTable> {
    cfg.validate()?;
    let labels: Vec<bool> = examples.iter().map(|e| e.label.is_troll()).collect();
    let pos = labels.iter().filter(|&&l| l).count();
    if pos * 2 != labels.len() {
        return Err(Error::invalid(format!(
            "ablation needs a balanced dataset, got {pos} positive of {}",
            labels.len()
        )));
    }
    let mut configs = table_rows(cfg)?;
    if let Some((label, mask)) = configs.iter().find(|(_, m)| m.is_empty()) {
        return Err(Error::invalid(format!("configuration `{label}` ({mask}) selects no groups")));
    }
    let pinned_all = cfg.with_all && matches!(cfg.mode, Mode::SingleGroup | Mode::GroupCombo);
    if pinned_all {
        configs.insert(0, ("All".into(), cfg.mask));
    }
    let needed = configs.iter().fold(GroupMask::empty(), |acc, (_, m)| acc.union(*m));
    info!("extracting {} groups for {} examples", needed.len(), examples.len());
    let raws = extract_all(examples, needed, res)?;

    let results: Vec<(String, CvResult)> = configs
        .into_par_iter()
        .map(|(label, mask)| run_cv(&raws, &labels, mask, cfg).map(|r| (label, r)))
        .collect::<Result<_>>()?;

    let fold_hash = results[0].1.fold_hash();
    if results.iter().any(|(_, r)| r.fold_hash() != fold_hash) {
        return Err(Error::invalid("rows were evaluated on different fold assignments"));
    }
    let mut rows: Vec<ReportRow> = results.iter().map(|(l, r)| ReportRow::from_metrics(l.clone(), &r.pooled)).collect();
    let pinned = if pinned_all { Some(rows.remove(0)) } else { None };
    rows.sort_by(|a, b| b.f.total_cmp(&a.f));
    Ok(ReportTable {
        title: cfg.title.clone().unwrap_or_else(|| default_title(cfg)),
        pinned,
        rows,
        baseline: ReportRow { label: "Baseline".into(), f: 50.0, acc: 50.0 },
        fold_hash,
    })
}

/// One column per threshold: users with at least that many accusation
/// mentions against never-accused prolific users, classified from all of
/// their comments.
pub fn run_user_experiment(
    comments: &[Comment],
    stats: &[UserStats],
    cfg: &ExperimentConfig,
    res: &FeatureResources,
) -> Result<ThresholdTable> {
    cfg.validate()?;
    let thresholds = cfg.user_thresholds();
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        let data = build_user_dataset(comments, stats, t, cfg.seed)?;
        let mut row = ThresholdRow {
            threshold: t,
            positives: data.positives,
            negatives: data.negatives,
            acc: None,
            f: None,
            majority_baseline: None,
            diff: None,
            diff_balanced: None,
        };
        let per_class = data.dataset.len() / 2;
        if per_class < cfg.folds {
            warn!("threshold {t}: {per_class} users per class is fewer than {} folds; row left empty", cfg.folds);
            rows.push(row);
            continue;
        }
        let raws = extract_all(&data.dataset.examples, cfg.mask, res)?;
        let cv = run_cv(&raws, &data.dataset.labels(), cfg.mask, cfg)?;
        let acc = 100.0 * cv.pooled.accuracy;
        let base = 100.0 * data.majority_baseline;
        row.acc = Some(acc);
        row.f = Some(100.0 * cv.pooled.f1);
        row.majority_baseline = Some(base);
        row.diff = Some(acc - base);
        row.diff_balanced = Some(acc - 50.0);
        rows.push(row);
    }
    Ok(ThresholdTable { title: cfg.title.clone().unwrap_or_else(|| default_title(cfg)), rows })
}

/// Bag-of-words groups usable with the loaded resources.
pub fn detector_mask(res: &FeatureResources) -> GroupMask {
    GroupMask::bow().intersect(res.available())
}

/// Cross-validated bag-of-words classifier separating accusing replies from
/// other replies.
pub fn run_accusation_detector(
    candidates: &[(Comment, bool)],
    cfg: &ExperimentConfig,
    res: &FeatureResources,
) -> Result<DetectorReport> {
    cfg.validate()?;
    let labels: Vec<bool> = candidates.iter().map(|(_, l)| *l).collect();
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::invalid("accusation detector needs both accusations and non-accusations"));
    }
    let mask = detector_mask(res);
    let raws: Vec<RawFeatures> =
        candidates.par_iter().map(|(c, _)| crate::features::extract_raw(c, mask, res)).collect::<Result<_>>()?;
    let cv = run_cv(&raws, &labels, mask, cfg)?;
    Ok(DetectorReport {
        title: cfg.title.clone().unwrap_or_else(|| "Accusation detector (bag of words)".into()),
        examples: labels.len(),
        positives,
        metrics: cv.pooled,
        fold_hash: cv.fold_hash(),
    })
}

/// Trains one model on every example.
pub fn train_model<T: Scalar>(
    examples: &[Example],
    mask: GroupMask,
    params: &TrainParams,
    res: &FeatureResources,
) -> Result<Model<T>> {
    let raws = extract_all(examples, mask, res)?;
    let labels: Vec<bool> = examples.iter().map(|e| e.label.is_troll()).collect();
    fit_model(&raws, &labels, mask, params)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::invalid(format!("unknown report format `{other}`"))),
        }
    }
}

type CellFn = fn(&ThresholdRow) -> String;

/// Two decimals, rounding halves upwards.
pub fn fmt2(x: f64) -> String {
    let r = ((x * 100.0) + 0.5 + 1e-9).floor() / 100.0;
    let s = format!("{r:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn fmt_signed(x: f64) -> String {
    let s = fmt2(x);
    if s.starts_with('-') {
        s
    } else {
        format!("+{s}")
    }
}

fn opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map(f).unwrap_or_else(|| "empty".into())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn markdown(report: &Report, out: &mut String) {
    match report {
        Report::Ablation(t) => {
            let _ = writeln!(out, "### {}\n", t.title);
            out.push_str("| Features | F | Acc |\n|:--|--:|--:|\n");
            for r in t.pinned.iter().chain(&t.rows).chain([&t.baseline]) {
                let _ = writeln!(out, "| {} | {} | {} |", r.label, fmt2(r.f), fmt2(r.acc));
            }
        }
        Report::Users(t) => {
            let _ = writeln!(out, "### {}\n", t.title);
            out.push_str("| |");
            for r in &t.rows {
                let _ = write!(out, " {} |", r.threshold);
            }
            out.push_str("\n|:--|");
            out.push_str(&"--:|".repeat(t.rows.len()));
            out.push('\n');
            let lines: [(&str, CellFn); 5] = [
                ("Acc", |r| opt(r.acc, fmt2)),
                ("Diff", |r| opt(r.diff, fmt_signed)),
                ("Diff (balanced)", |r| opt(r.diff_balanced, fmt_signed)),
                ("Majority", |r| opt(r.majority_baseline, fmt2)),
                ("Users", |r| format!("{}/{}", r.positives, r.negatives)),
            ];
            for (name, cell) in lines {
                let _ = write!(out, "| {name} |");
                for r in &t.rows {
                    let _ = write!(out, " {} |", cell(r));
                }
                out.push('\n');
            }
        }
        Report::Detector(d) => {
            let m = &d.metrics;
            let _ = writeln!(out, "### {}\n", d.title);
            out.push_str("| Metric | Value |\n|:--|--:|\n");
            for (name, v) in [("F1", m.f1), ("Precision", m.precision), ("Recall", m.recall), ("Acc", m.accuracy)] {
                let _ = writeln!(out, "| {name} | {} |", fmt2(100.0 * v));
            }
            let _ = writeln!(out, "| Examples | {} ({} positive) |", d.examples, d.positives);
        }
    }
}

fn csv(report: &Report, out: &mut String) {
    match report {
        Report::Ablation(t) => {
            out.push_str("label,f,acc\n");
            for r in t.pinned.iter().chain(&t.rows).chain([&t.baseline]) {
                let _ = writeln!(out, "{},{},{}", csv_field(&r.label), fmt2(r.f), fmt2(r.acc));
            }
        }
        Report::Users(t) => {
            out.push_str("threshold,positives,negatives,f,acc,majority_baseline,diff,diff_balanced\n");
            let cell = |x: Option<f64>| x.map(fmt2).unwrap_or_default();
            for r in &t.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.threshold,
                    r.positives,
                    r.negatives,
                    cell(r.f),
                    cell(r.acc),
                    cell(r.majority_baseline),
                    cell(r.diff),
                    cell(r.diff_balanced)
                );
            }
        }
        Report::Detector(d) => {
            out.push_str("label,f,acc\n");
            let _ = writeln!(
                out,
                "{},{},{}",
                csv_field(&d.title),
                fmt2(100.0 * d.metrics.f1),
                fmt2(100.0 * d.metrics.accuracy)
            );
        }
    }
}

/// Renders reports in order; blocks are separated by one blank line.
pub fn render_report(reports: &[Report], format: ReportFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to render"));
    }
    let mut out = String::new();
    for (i, r) in reports.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match format {
            ReportFormat::Markdown => markdown(r, &mut out),
            ReportFormat::Csv => csv(r, &mut out),
        }
    }
    Ok(out)
}

pub fn emit_report(reports: &[Report], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_report(reports, format)?).map_err(|e| Error::io(path, e))
}
