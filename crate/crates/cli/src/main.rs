//! Command-line front end: every subcommand reads and writes files, so a
//! pipeline can be resumed from any stage.

mod manifest;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::Value;

use manifest::Manifest;
use trollscope::corpus::{
    accused_users, build_pairs, cohen_kappa, load_comments, mine_accusations, user_stats, write_comments,
    AccusationCandidate, Comment, IngestMode, InputFormat, Label, LabeledDataset,
};
use trollscope::embeddings::{
    centroid_path, kmeans, load_cluster_assignment, load_vectors, train_skipgram, SkipGramParams,
};
use trollscope::experiments::{
    default_combos, render_report, run_ablation, run_accusation_detector, run_user_experiment, train_model,
    ExperimentConfig, Mode, Precision, Report, ReportFormat,
};
use trollscope::features::{extract_example, extract_raw, FeatureResources, GroupMask, RawFeatures};
use trollscope::learn::{compute_metrics, Model};
use trollscope::lexicons::{load_lexicon, LexiconKind};
use trollscope::textproc::tokenize;

#[derive(Debug, Parser)]
#[command(name = "trollscope", version, about = "Troll-comment detection pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Experiment configuration (TOML, flat keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cross-validation folds; overrides the configuration.
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Comma-separated feature groups, or `all`.
    #[arg(long, global = true)]
    mask: Option<String>,
    /// Abort on the first malformed input record instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    /// Directory with stopwords, stem rules, lexicons and gazetteers.
    #[arg(long, global = true, env = "TROLLSCOPE_RESOURCES")]
    resources: Option<PathBuf>,
    /// Word cluster file (`word<TAB>id`) replacing the resource one.
    #[arg(long, global = true)]
    clusters: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a comment dump and rewrite it as line-delimited JSON.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        /// `jsonl` or `csv`; inferred from the extension by default.
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find replies that accuse their parent comment of trolling.
    MineAccusations {
        #[arg(long)]
        comments: PathBuf,
        /// Trigger stems; defaults to `triggers.txt` in the resource directory.
        #[arg(long)]
        triggers: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cohen's kappa between two label files with one label per line.
    Kappa { a: PathBuf, b: PathBuf },
    /// Pair troll comments with non-troll comments from the same thread.
    Pair {
        #[arg(long)]
        comments: PathBuf,
        /// Mined candidates; confirmed ones give the mentioned trolls.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Comment ids known to be paid, one per line; replaces mentioned trolls.
        #[arg(long)]
        paid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train skip-gram word vectors on the comment texts.
    TrainEmbeddings {
        #[arg(long)]
        comments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        window: usize,
        #[arg(long, default_value_t = 5)]
        negatives: usize,
        #[arg(long, default_value_t = 5)]
        min_count: usize,
        #[arg(long, default_value_t = 1)]
        epochs: usize,
        #[arg(long, default_value_t = 0.025)]
        learning_rate: f64,
    },
    /// Cluster word vectors with k-means.
    Cluster {
        #[arg(long)]
        vectors: PathBuf,
        /// Number of clusters; must not exceed the vocabulary size.
        #[arg(long, default_value_t = 5372)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        /// Stop once no centroid moves this far.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Train a classifier on a labelled dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of a trained model on a labelled dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated feature-group ablation.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        /// all, leave-one-out, single-group or group-combo.
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        output: ReportOutput,
    },
    /// User-level classification at several accusation thresholds.
    UserExperiment {
        #[arg(long)]
        comments: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        /// Comma-separated minimum mention counts.
        #[arg(long)]
        thresholds: Option<String>,
        #[command(flatten)]
        output: ReportOutput,
    },
    /// Bag-of-words classifier separating true accusations from false ones.
    AccusationDetector {
        #[arg(long)]
        comments: PathBuf,
        /// Candidates carrying annotator decisions.
        #[arg(long)]
        candidates: PathBuf,
        #[command(flatten)]
        output: ReportOutput,
    },
    /// Render saved JSON reports as markdown or CSV.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        output: ReportOutput,
    },
    /// Append a troll probability to every comment of a file.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ReportOutput {
    /// Output file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// md, csv or json; inferred from the output extension by default.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OutFormat {
    Rendered(ReportFormat),
    Json,
}

impl ReportOutput {
    fn format(&self) -> Result<OutFormat> {
        let name = match (&self.format, &self.out) {
            (Some(f), _) => f.to_lowercase(),
            (None, Some(p)) => p.extension().and_then(|e| e.to_str()).unwrap_or("md").to_lowercase(),
            (None, None) => "md".into(),
        };
        if name == "json" {
            return Ok(OutFormat::Json);
        }
        match name.parse::<ReportFormat>() {
            Ok(f) => Ok(OutFormat::Rendered(f)),
            Err(_) if self.format.is_none() => Ok(OutFormat::Rendered(ReportFormat::Markdown)),
            Err(e) => Err(e.into()),
        }
    }
}

struct Ctx {
    global: Global,
    cfg: ExperimentConfig,
}

impl Ctx {
    fn new(global: Global) -> Result<Self> {
        let mut cfg = match &global.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = global.seed {
            cfg.seed = s;
        }
        if let Some(f) = global.folds {
            cfg.folds = f;
        }
        if let Some(m) = &global.mask {
            cfg.mask = m.parse()?;
        }
        Ok(Ctx { global, cfg })
    }

    fn ingest_mode(&self) -> IngestMode {
        if self.global.strict {
            IngestMode::Strict
        } else {
            IngestMode::Lenient
        }
    }

    fn comments(&self, path: &Path) -> Result<Vec<Comment>> {
        let ingested = load_comments(path, InputFormat::from_path(path), self.ingest_mode())?;
        if !ingested.skipped.is_empty() {
            warn!("{}: skipped {} malformed records", path.display(), ingested.skipped.len());
        }
        Ok(ingested.comments)
    }

    fn resources(&self) -> Result<FeatureResources> {
        let mut res = match &self.global.resources {
            Some(dir) => FeatureResources::load_dir(dir)?,
            None => FeatureResources::default(),
        };
        if let Some(p) = &self.global.clusters {
            res.clusters = Some(load_cluster_assignment(p)?);
        }
        Ok(res)
    }

    /// An explicit `--mask` must be fully backed by resources; a mask from the
    /// configuration or the default is narrowed to what is loaded.
    fn mask(&self, res: &FeatureResources) -> Result<GroupMask> {
        if self.global.mask.is_some() {
            res.check(self.cfg.mask)?;
            return Ok(self.cfg.mask);
        }
        let mask = self.cfg.mask.intersect(res.available());
        let dropped = self.cfg.mask.minus(mask);
        if !dropped.is_empty() {
            warn!("feature groups without resources are skipped: {dropped}");
        }
        if mask.is_empty() {
            bail!("no requested feature group has its resources loaded");
        }
        Ok(mask)
    }

    fn manifest(&self, command: &str) -> Result<Manifest> {
        let mut m = Manifest::new(command, self.cfg.seed, serde_json::to_value(&self.cfg)?);
        if let Some(p) = &self.global.config {
            m.input(p)?;
        }
        Ok(m)
    }

    fn manifest_with_resources(&self, command: &str) -> Result<Manifest> {
        let mut m = self.manifest(command)?;
        if let Some(dir) = &self.global.resources {
            m.input(dir)?;
        }
        if let Some(p) = &self.global.clusters {
            m.input(p)?;
        }
        Ok(m)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn read_candidates(path: &Path) -> Result<Vec<AccusationCandidate>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{}:{}: bad candidate", path.display(), n + 1)))
        .collect()
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text.lines().map(|l| l.trim().to_string()).collect())
}

/// Writes `text` to `out`, or stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn render(reports: &[Report], format: OutFormat) -> Result<String> {
    Ok(match format {
        OutFormat::Json => serde_json::to_string_pretty(reports)? + "\n",
        OutFormat::Rendered(f) => render_report(reports, f)?,
    })
}

fn emit_reports(reports: &[Report], output: &ReportOutput, manifest: Manifest) -> Result<()> {
    let text = render(reports, output.format()?)?;
    emit(output.out.as_deref(), &text)?;
    if let Some(p) = &output.out {
        manifest.write(&[p])?;
    }
    Ok(())
}

/// A model trained in either precision.
enum AnyModel {
    F64(Model<f64>),
    F32(Model<f32>),
}

impl AnyModel {
    fn load(path: &Path) -> Result<Self> {
        match Model::<f64>::load(path) {
            Ok(m) => Ok(AnyModel::F64(m)),
            Err(e64) => Model::<f32>::load(path).map(AnyModel::F32).map_err(|_| e64.into()),
        }
    }

    fn mask(&self) -> GroupMask {
        match self {
            AnyModel::F64(m) => m.mask,
            AnyModel::F32(m) => m.mask,
        }
    }

    fn score(&self, raw: &RawFeatures) -> (bool, f64) {
        match self {
            AnyModel::F64(m) => m.score(raw),
            AnyModel::F32(m) => {
                let (y, p) = m.score(raw);
                (y, p as f64)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(cli.global)?;
    match cli.command {
        Command::Ingest { input, format, out } => {
            let format = match format {
                Some(f) => f.parse()?,
                None => InputFormat::from_path(&input),
            };
            let ingested = load_comments(&input, format, ctx.ingest_mode())?;
            for issue in &ingested.skipped {
                warn!("line {}: {}", issue.line, issue.message);
            }
            let mut w = create(&out)?;
            write_comments(&mut w, &ingested.comments)?;
            w.flush()?;
            eprintln!("ingested {} comments, skipped {}", ingested.comments.len(), ingested.skipped.len());
            let mut m = ctx.manifest("ingest")?;
            m.input(&input)?;
            m.write(&[&out])
        }
        Command::MineAccusations { comments, triggers, out } => {
            let triggers = match (triggers, &ctx.global.resources) {
                (Some(p), _) => p,
                (None, Some(dir)) => dir.join("triggers.txt"),
                (None, None) => bail!("no trigger file: pass --triggers or --resources"),
            };
            let lexicon = load_lexicon(&triggers, LexiconKind::Terms)?;
            let corpus = ctx.comments(&comments)?;
            let mining = mine_accusations(&corpus, &lexicon)?;
            let mut w = create(&out)?;
            for c in &mining.candidates {
                serde_json::to_writer(&mut w, c)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
            eprintln!("{} candidates, {} replies to missing comments", mining.candidates.len(), mining.dangling.len());
            let mut m = ctx.manifest("mine-accusations")?;
            m.input(&comments)?;
            m.input(&triggers)?;
            m.write(&[&out])
        }
        Command::Kappa { a, b } => {
            let kappa = cohen_kappa(&read_lines(&a)?, &read_lines(&b)?)?;
            println!("{kappa:?}");
            Ok(())
        }
        Command::Pair { comments, candidates, paid, out } => {
            let corpus = ctx.comments(&comments)?;
            let cands = match &candidates {
                Some(p) => read_candidates(p)?,
                None => Vec::new(),
            };
            let trolls: Vec<(Comment, Label)> = match &paid {
                Some(p) => {
                    let ids: HashSet<String> = read_lines(p)?.into_iter().filter(|l| !l.is_empty()).collect();
                    let found: Vec<(Comment, Label)> =
                        corpus.iter().filter(|c| ids.contains(&c.id)).map(|c| (c.clone(), Label::PaidTroll)).collect();
                    if found.len() < ids.len() {
                        warn!("{} paid comment ids are not in the corpus", ids.len() - found.len());
                    }
                    found
                }
                None if candidates.is_some() => {
                    let accused: HashSet<&str> =
                        cands.iter().filter(|c| c.is_confirmed()).map(|c| c.accused_comment_id.as_str()).collect();
                    corpus
                        .iter()
                        .filter(|c| accused.contains(c.id.as_str()))
                        .map(|c| (c.clone(), Label::MentionedTroll))
                        .collect()
                }
                None => bail!("pair needs --candidates or --paid"),
            };
            let stats = user_stats(&corpus, &cands);
            let accused = accused_users(&corpus, &cands);
            let ds = build_pairs(&trolls, &corpus, &stats, &accused, ctx.cfg.seed);
            if !ds.dropped_troll_ids.is_empty() {
                warn!("{} troll comments have no eligible partner and were dropped", ds.dropped_troll_ids.len());
            }
            let mut w = create(&out)?;
            ds.write_jsonl(&mut w)?;
            w.flush()?;
            eprintln!("{} examples ({} pairs)", ds.len(), ds.len() / 2);
            let mut m = ctx.manifest("pair")?;
            m.input(&comments)?;
            for p in candidates.iter().chain(&paid) {
                m.input(p)?;
            }
            m.write(&[&out])
        }
        Command::TrainEmbeddings { comments, out, dim, window, negatives, min_count, epochs, learning_rate } => {
            let corpus = ctx.comments(&comments)?;
            let sentences: Vec<Vec<String>> = corpus.iter().map(|c| tokenize(&c.text).lowercased()).collect();
            let params =
                SkipGramParams { dim, window, negatives, min_count, epochs, learning_rate, seed: ctx.cfg.seed };
            let table = train_skipgram::<f32, _>(&sentences, &params)?;
            table.save(&out)?;
            eprintln!("{} words x {} dimensions", table.vocab_size(), table.dim());
            let mut m = Manifest::new("train-embeddings", ctx.cfg.seed, serde_json::to_value(params)?);
            m.input(&comments)?;
            m.write(&[&out])
        }
        Command::Cluster { vectors, k, out, max_iter, tol } => {
            let table = load_vectors::<f32>(&vectors)?;
            let model = kmeans(&table, k, ctx.cfg.seed, max_iter, tol)?;
            if !model.converged {
                warn!("k-means stopped after {max_iter} iterations without converging");
            }
            model.save(&out)?;
            let config = serde_json::json!({ "k": k, "max_iter": max_iter, "tol": tol });
            let mut m = Manifest::new("cluster", ctx.cfg.seed, config);
            m.input(&vectors)?;
            m.write(&[&out, &centroid_path(&out)])
        }
        Command::Train { dataset, out } => {
            let res = ctx.resources()?;
            let mask = ctx.mask(&res)?;
            let examples = LabeledDataset::read_jsonl(&dataset)?;
            let params = ctx.cfg.params();
            match ctx.cfg.precision {
                Precision::F64 => train_model::<f64>(&examples, mask, &params, &res)?.save(&out)?,
                Precision::F32 => train_model::<f32>(&examples, mask, &params, &res)?.save(&out)?,
            }
            let mut m = ctx.manifest_with_resources("train")?;
            m.input(&dataset)?;
            m.write(&[&out])
        }
        Command::Evaluate { model, dataset, out } => {
            let res = ctx.resources()?;
            let model_file = model;
            let model = AnyModel::load(&model_file)?;
            let examples = LabeledDataset::read_jsonl(&dataset)?;
            let mut predictions = Vec::with_capacity(examples.len());
            for e in &examples {
                predictions.push(model.score(&extract_example(e, model.mask(), &res)?).0);
            }
            let gold: Vec<bool> = examples.iter().map(|e| e.label.is_troll()).collect();
            let metrics = compute_metrics(&predictions, &gold)?;
            emit(out.as_deref(), &(serde_json::to_string_pretty(&metrics)? + "\n"))?;
            if let Some(p) = &out {
                let mut m = ctx.manifest_with_resources("evaluate")?;
                m.input(&model_file)?;
                m.input(&dataset)?;
                m.write(&[p])?;
            }
            Ok(())
        }
        Command::Ablate { dataset, mode, output } => {
            let res = ctx.resources()?;
            let mut cfg = ctx.cfg.clone();
            cfg.mask = ctx.mask(&res)?;
            cfg.mode = match (&mode, &ctx.global.config) {
                (Some(m), _) => m.parse()?,
                (None, Some(_)) => cfg.mode,
                (None, None) => Mode::LeaveOneOut,
            };
            if !matches!(cfg.mode, Mode::All | Mode::LeaveOneOut | Mode::SingleGroup | Mode::GroupCombo) {
                bail!("ablate runs all, leave-one-out, single-group or group-combo; use the dedicated command instead");
            }
            if cfg.mode == Mode::GroupCombo && cfg.combos.is_empty() {
                cfg.combos = default_combos();
            }
            if cfg.dataset.is_empty() {
                cfg.dataset = dataset.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            }
            let examples = LabeledDataset::read_jsonl(&dataset)?;
            let table = run_ablation(&examples, &cfg, &res)?;
            info!("{} rows, fold hash {}", table.rows.len(), table.fold_hash);
            let mut m = Manifest::new("ablate", cfg.seed, serde_json::to_value(&cfg)?);
            add_common_inputs(&ctx, &mut m)?;
            m.input(&dataset)?;
            emit_reports(&[Report::Ablation(table)], &output, m)
        }
        Command::UserExperiment { comments, candidates, thresholds, output } => {
            let res = ctx.resources()?;
            let mut cfg = ctx.cfg.clone();
            cfg.mode = Mode::UserLevel;
            cfg.mask = ctx.mask(&res)?;
            if let Some(t) = &thresholds {
                cfg.thresholds = t
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|_| anyhow!("bad threshold `{s}`")))
                    .collect::<Result<_>>()?;
            }
            cfg.validate()?;
            let corpus = ctx.comments(&comments)?;
            let cands = read_candidates(&candidates)?;
            let stats = user_stats(&corpus, &cands);
            let table = run_user_experiment(&corpus, &stats, &cfg, &res)?;
            let mut m = Manifest::new("user-experiment", cfg.seed, serde_json::to_value(&cfg)?);
            add_common_inputs(&ctx, &mut m)?;
            m.input(&comments)?;
            m.input(&candidates)?;
            emit_reports(&[Report::Users(table)], &output, m)
        }
        Command::AccusationDetector { comments, candidates, output } => {
            let res = ctx.resources()?;
            let mut cfg = ctx.cfg.clone();
            cfg.mode = Mode::AccusationDetector;
            let corpus = ctx.comments(&comments)?;
            let by_id: HashMap<&str, &Comment> = corpus.iter().map(|c| (c.id.as_str(), c)).collect();
            let cands = read_candidates(&candidates)?;
            let mut data = Vec::new();
            for c in cands.iter().filter(|c| !c.annotator_decisions.is_empty()) {
                match by_id.get(c.accusation_comment_id.as_str()) {
                    Some(reply) => data.push(((*reply).clone(), c.is_confirmed())),
                    None => warn!("candidate reply {} is not in the corpus", c.accusation_comment_id),
                }
            }
            if data.is_empty() {
                bail!("no annotated candidate replies found in the corpus");
            }
            let report = run_accusation_detector(&data, &cfg, &res)?;
            let mut m = Manifest::new("accusation-detector", cfg.seed, serde_json::to_value(&cfg)?);
            add_common_inputs(&ctx, &mut m)?;
            m.input(&comments)?;
            m.input(&candidates)?;
            emit_reports(&[Report::Detector(report)], &output, m)
        }
        Command::Report { inputs, output } => {
            let mut reports = Vec::new();
            for p in &inputs {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                let value: Value =
                    serde_json::from_str(&text).with_context(|| format!("{} is not JSON", p.display()))?;
                match value {
                    Value::Array(_) => reports.extend(serde_json::from_value::<Vec<Report>>(value)?),
                    _ => reports.push(serde_json::from_value::<Report>(value)?),
                }
            }
            let mut m = ctx.manifest("report")?;
            for p in &inputs {
                m.input(p)?;
            }
            emit_reports(&reports, &output, m)
        }
        Command::Score { model, input, out } => {
            let res = ctx.resources()?;
            let scorer = AnyModel::load(&model)?;
            res.check(scorer.mask())?;
            let corpus = ctx.comments(&input)?;
            let mut probability: HashMap<&str, f64> = HashMap::with_capacity(corpus.len());
            for c in &corpus {
                probability.insert(c.id.as_str(), scorer.score(&extract_raw(c, scorer.mask(), &res)?).1);
            }
            let text = match InputFormat::from_path(&input) {
                InputFormat::Jsonl => append_jsonl(&input, &probability)?,
                InputFormat::Csv => append_csv(&input, &probability)?,
            };
            emit(out.as_deref(), &text)?;
            if let Some(p) = &out {
                let mut m = ctx.manifest_with_resources("score")?;
                m.input(&model)?;
                m.input(&input)?;
                m.write(&[p])?;
            }
            Ok(())
        }
    }
}

fn add_common_inputs(ctx: &Ctx, m: &mut Manifest) -> Result<()> {
    for p in ctx.global.config.iter().chain(&ctx.global.resources).chain(&ctx.global.clusters) {
        m.input(p)?;
    }
    Ok(())
}

/// Copies every JSON record with a `probability` field added; records that
/// were not scored get `null`.
fn append_jsonl(path: &Path, probability: &HashMap<&str, f64>) -> Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = String::with_capacity(text.len() + text.len() / 4);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let Ok(Value::Object(mut record)) = serde_json::from_str::<Value>(line) else { continue };
        let p = record.get("id").and_then(Value::as_str).and_then(|id| probability.get(id)).copied();
        record.insert("probability".into(), p.map_or(Value::Null, Value::from));
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}

/// Copies the CSV with a trailing `probability` column; unscored rows get an
/// empty cell.
fn append_csv(path: &Path, probability: &HashMap<&str, f64>) -> Result<String> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let mut header = reader.headers()?.clone();
    let id_col =
        header.iter().position(|h| h == "id").ok_or_else(|| anyhow!("{} has no `id` column", path.display()))?;
    header.push_field("probability");
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(&header)?;
    for record in reader.records() {
        let mut record = record?;
        let p = record.get(id_col).and_then(|id| probability.get(id)).map_or(String::new(), |p| p.to_string());
        record.push_field(&p);
        writer.write_record(&record)?;
    }
    Ok(String::from_utf8(writer.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
