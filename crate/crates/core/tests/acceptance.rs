//! Acceptance gate. Every criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.
//!
//! `ensure!` takes the passing condition, so a NaN fails the criterion.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trollscope::corpus::{build_user_dataset, cohen_kappa, user_stats};
use trollscope::embeddings::{kmeans_points, EmbeddingTable};
use trollscope::experiments::{
    extract_all, render_report, run_ablation, run_accusation_detector, run_user_experiment, train_model,
    ExperimentConfig, Mode, Report, ReportFormat,
};
use trollscope::features::{
    extract_raw, pos_tag_expansion, transform, FeatureGroup, FeatureKey, FeatureRegistry, FeatureResources,
    FeatureVector, GroupMask, MetadataFeatures, RawFeatures, ScalerStats,
};
use trollscope::learn::{
    cross_validate, objective_and_gradient, prepare_fold, stratified_folds, train_lr, TrainParams,
};
use trollscope::lexicons::{
    count_matches, expand_lexicon, gazetteer_entities, load_lexicon, sentiment_scores, Gazetteers, Lexicon,
    LexiconKind, SentimentResources,
};
use trollscope::scalar::sigmoid;
use trollscope::textproc::{
    affix, char_ngrams, extract_emoticons, punct_stats, stem, tokenize, word_ngrams, AffixSide, StemRules,
};
use trollscope::{Comment, Example, Label};

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<FeatureVector<f64>> = (0..20)
            .map(|_| FeatureVector::dense(&(0..10).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let ys: Vec<bool> = (0..20).map(|_| rng.gen_bool(0.5)).collect();
        let theta: Vec<f64> = (0..11).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for c in [0.1, 1.0, 10.0] {
            let (_, g) = objective_and_gradient(&theta, &xs, &ys, c);
            let mut diff2 = 0.0;
            let mut norm2 = 0.0;
            for j in 0..theta.len() {
                let h = 1e-6 * (1.0 + theta[j].abs());
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (objective_and_gradient(&up, &xs, &ys, c).0 - objective_and_gradient(&down, &xs, &ys, c).0)
                    / (2.0 * h);
                diff2 += (fd - g[j]).powi(2);
                norm2 += g[j].powi(2);
            }
            let rel = diff2.sqrt() / norm2.sqrt().max(1e-12);
            worst = worst.max(rel);
            ensure!(rel < 1e-5, "seed {seed}, C={c}: relative error {rel:.2e}");
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("max relative error {worst:.2e} over 30 checks in {:.2?}", elapsed))
}

fn lr_optimum() -> Outcome {
    let (mut lo, mut hi) = (0.0f64, 2.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid < 2.0 * sigmoid(-mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = 0.5 * (lo + hi);
    let xs = vec![FeatureVector::dense(&[1.0]), FeatureVector::dense(&[-1.0])];
    let lr =
        train_lr(&xs, &[true, false], 1, &TrainParams { c: 1.0, ..Default::default() }).map_err(|e| e.to_string())?;
    let w = lr.weights[0];
    ensure!((w - oracle).abs() < 1e-3, "w = {w}, oracle {oracle}");
    ensure!(lr.intercept.abs() < 1e-6, "b = {}", lr.intercept);
    Ok(format!("w = {w:.6} (oracle {oracle:.6}), b = {:.1e}", lr.intercept))
}

fn kappa_oracle() -> Outcome {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y, n) in [(1, 1, 20), (1, 0, 5), (0, 1, 10), (0, 0, 15)] {
        a.extend(std::iter::repeat_n(x, n));
        b.extend(std::iter::repeat_n(y, n));
    }
    let k = cohen_kappa(&a, &b).map_err(|e| e.to_string())?;
    ensure!((k - 0.4).abs() < 1e-9, "confusion kappa {k}");
    let same = cohen_kappa(&a, &a).map_err(|e| e.to_string())?;
    ensure!(same == 1.0, "identical lists give {same}");
    let opposite = cohen_kappa(&[1, 0], &[0, 1]).map_err(|e| e.to_string())?;
    ensure!(opposite == -1.0, "opposite lists give {opposite}");
    Ok(format!("kappa = {k}, identical = {same}, opposite = {opposite}"))
}

fn kmeans_checks() -> Outcome {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 300;
        let pts: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let r = kmeans_points(&pts, 3, 7, seed, 100, 0.0).map_err(|e| e.to_string())?;
        for w in r.objective_history.windows(2) {
            ensure!(w[1] <= w[0] * (1.0 + 1e-12), "dataset {seed}: objective rose {} -> {}", w[0], w[1]);
        }
    }
    let four = [0.0, 0.0, 0.0, 1.0, 10.0, 10.0, 10.0, 11.0];
    let all = kmeans_points(&four, 2, 4, 1, 50, 0.0).map_err(|e| e.to_string())?;
    ensure!(all.objective() == 0.0, "k = n objective {}", all.objective());

    let mut best = (f64::INFINITY, Vec::new());
    for mask in 1u32..15 {
        let mut cost = 0.0;
        let mut cents = Vec::new();
        for side in [true, false] {
            let members: Vec<usize> = (0..4).filter(|i| ((mask >> i) & 1 == 1) == side).collect();
            let cx = members.iter().map(|&i| four[2 * i]).sum::<f64>() / members.len() as f64;
            let cy = members.iter().map(|&i| four[2 * i + 1]).sum::<f64>() / members.len() as f64;
            cost += members.iter().map(|&i| (four[2 * i] - cx).powi(2) + (four[2 * i + 1] - cy).powi(2)).sum::<f64>();
            cents.push((cx, cy));
        }
        if cost < best.0 {
            cents.sort_by(|a, b| a.partial_cmp(b).unwrap());
            best = (cost, cents);
        }
    }
    ensure!(best.1 == vec![(0.0, 0.5), (10.0, 10.5)], "oracle centroids {:?}", best.1);
    let r = kmeans_points(&four, 2, 2, 9, 100, 0.0).map_err(|e| e.to_string())?;
    let mut got: Vec<(f64, f64)> = r.centroids.chunks(2).map(|c| (c[0], c[1])).collect();
    got.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ensure!(got == best.1, "k-means centroids {got:?}");
    Ok("objective monotone on 5 datasets; k = n gives 0; centroids (0,0.5),(10,10.5) match brute force".into())
}

fn baseline_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let raws: Vec<RawFeatures> = (0..1000)
        .map(|_| {
            let mut r = RawFeatures::new();
            for j in 0..20 {
                r.set(FeatureGroup::Punct, format!("noise{j}"), rng.gen_range(0.0..10.0));
            }
            r
        })
        .collect();
    let labels: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
    let cv = cross_validate::<f64>(&raws, &labels, 10, &TrainParams::default(), GroupMask::all(), 7)
        .map_err(|e| e.to_string())?;
    let acc = cv.pooled.accuracy;
    ensure!((0.45..=0.55).contains(&acc), "pooled accuracy {acc}");
    Ok(format!("pooled accuracy {acc:.4} on label-independent features"))
}

fn planted_signal() -> Outcome {
    let start = Instant::now();
    let corpus = common::planted_corpus(1000, 11, 0.8, 0.5);
    let raws = extract_all(&corpus.examples, GroupMask::all(), &corpus.resources).map_err(|e| e.to_string())?;
    let labels: Vec<bool> = corpus.examples.iter().map(|e| e.label.is_troll()).collect();
    let p = TrainParams::default();
    let all = GroupMask::all();
    let no_meta = all.without(FeatureGroup::Metadata);
    let no_meta_bow = no_meta.minus(GroupMask::bow());
    let acc = |mask| {
        cross_validate::<f64>(&raws, &labels, 10, &p, mask, 5).map(|r| r.pooled.accuracy).map_err(|e| e.to_string())
    };
    let (a_all, a_meta, a_both) = (acc(all)?, acc(no_meta)?, acc(no_meta_bow)?);
    let elapsed = start.elapsed();
    let detail = format!(
        "all {:.2}%, all - metadata {:.2}%, all - metadata - bow {:.2}% in {:.1?}",
        100.0 * a_all,
        100.0 * a_meta,
        100.0 * a_both,
        elapsed
    );
    ensure!(a_all >= 0.90, "{detail}: all-features accuracy below 0.90");
    ensure!(a_all - a_meta >= 0.05, "{detail}: dropping metadata costs under 5 points");
    ensure!(a_both <= 0.65, "{detail}: without metadata and bow above 0.65");
    ensure!(elapsed < Duration::from_secs(60), "{detail}: over 60 s");
    Ok(detail)
}

fn ablation_structure() -> Outcome {
    let corpus = common::planted_corpus(400, 23, 0.8, 0.5);
    let cfg = ExperimentConfig { mode: Mode::LeaveOneOut, seed: 3, dataset: "planted".into(), ..Default::default() };
    let table = run_ablation(&corpus.examples, &cfg, &corpus.resources).map_err(|e| e.to_string())?;
    ensure!(table.rows.len() == 18, "{} rows", table.rows.len());
    ensure!(table.baseline.f == 50.0 && table.baseline.acc == 50.0, "baseline {:?}", table.baseline);
    ensure!(table.rows.windows(2).all(|w| w[0].f >= w[1].f), "rows not sorted by F");
    let md = render_report(&[Report::Ablation(table.clone())], ReportFormat::Markdown).map_err(|e| e.to_string())?;
    ensure!(md.contains("| Baseline | 50.00 | 50.00 |"), "baseline row not rendered");

    let labels: Vec<bool> = corpus.examples.iter().map(|e| e.label.is_troll()).collect();
    let raws = extract_all(&corpus.examples, GroupMask::all(), &corpus.resources).map_err(|e| e.to_string())?;
    let single = cross_validate::<f64>(&raws, &labels, cfg.folds, &cfg.params(), GroupMask::all(), cfg.seed)
        .map_err(|e| e.to_string())?;
    let all_row = table.rows.iter().find(|r| r.label == "All").ok_or("no All row")?;
    ensure!(all_row.f == 100.0 * single.pooled.f1 && all_row.acc == 100.0 * single.pooled.accuracy, "All row differs");
    ensure!(table.fold_hash == single.fold_hash(), "fold hash differs from a direct run");

    let again = run_ablation(&corpus.examples, &cfg, &corpus.resources).map_err(|e| e.to_string())?;
    let md2 = render_report(&[Report::Ablation(again)], ReportFormat::Markdown).map_err(|e| e.to_string())?;
    ensure!(md == md2, "re-run is not byte-identical");
    Ok(format!("18 rows + baseline 50.00/50.00, sorted, byte-identical re-run; top row `{}`", table.rows[0].label))
}

fn accusation_detector() -> Outcome {
    let replies = common::accusation_replies(1000, 31);
    let res = common::demo_resources();
    let cfg = ExperimentConfig { mode: Mode::AccusationDetector, seed: 1, ..Default::default() };
    let report = run_accusation_detector(&replies, &cfg, &res).map_err(|e| e.to_string())?;
    let f1 = report.metrics.f1;
    ensure!(f1 >= 0.9, "F1 {f1}");

    let examples: Vec<Example> = replies
        .iter()
        .map(|(c, l)| Example::new(c.clone(), if *l { Label::MentionedTroll } else { Label::NonTroll }))
        .collect();
    let mask = trollscope::experiments::detector_mask(&res);
    let model = train_model::<f64>(&examples, mask, &cfg.params(), &res).map_err(|e| e.to_string())?;
    for (j, w) in model.weights.iter().enumerate() {
        let g = model.registry.key(j).group;
        ensure!(*w == 0.0 || FeatureGroup::BOW.contains(&g), "non-bow column {g} has weight {w}");
    }
    Ok(format!("bag-of-words CV F1 {:.4} on {} replies; only bow columns weighted", f1, report.examples))
}

fn comment_at(text: &str, ts: &str, rank: u32, size: u32) -> Comment {
    Comment {
        id: "c".into(),
        user_id: "u".into(),
        publication_id: "p".into(),
        parent_id: None,
        timestamp: chrono::DateTime::parse_from_rfc3339(ts).unwrap(),
        rank,
        thread_size: size,
        text: text.into(),
        pos_tags: None,
    }
}

fn feature_suite() -> Outcome {
    let mut checks = 0;
    macro_rules! check {
        ($cond:expr, $what:expr) => {{
            checks += 1;
            ensure!($cond, "{}", $what);
        }};
    }
    let sv = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    // tokenisation
    check!(tokenize("Боко е тук.").tokens == sv(&["Боко", "е", "тук"]), "tokenize plain");
    check!(tokenize("").tokens.is_empty(), "tokenize empty");
    let t = tokenize("GERB-то!!!");
    let runs: Vec<(char, usize)> = t.punct.iter().map(|r| (r.mark, r.len)).collect();
    check!(t.tokens == sv(&["GERB", "то"]) && runs == vec![('-', 1), ('!', 3)], "tokenize punctuation runs");

    // stemming
    let rules = StemRules::new([("ation".to_string(), String::new())], 3);
    check!(stem("manipulation", &rules) == "manipul", "stem ation");
    check!(stem("trol", &rules) == "trol", "stem identity");
    let nested = StemRules::new([("ing".to_string(), String::new()), ("oning".to_string(), "on".to_string())], 3);
    check!(stem("questioning", &nested) == "question", "stem longest suffix");

    // n-grams and affixes
    let abc = sv(&["a", "b", "c"]);
    check!(word_ngrams(&abc, 2) == sv(&["a b", "b c"]), "word 2-grams");
    check!(word_ngrams(&abc, 3) == sv(&["a b c"]), "word 3-grams");
    check!(word_ngrams(&sv(&["a"]), 2).is_empty(), "word 2-grams short");
    check!(char_ngrams("trol", 3) == sv(&["tro", "rol"]), "char 3-grams");
    check!(char_ngrams("trol", 4) == sv(&["trol"]), "char 4-grams");
    check!(char_ngrams("ab", 3).is_empty(), "char n-grams short");
    check!(affix("manipulation", 4, AffixSide::Prefix) == "mani", "prefix");
    check!(affix("manipulation", 4, AffixSide::Suffix) == "tion", "suffix");
    check!(affix("ab", 3, AffixSide::Prefix) == "ab", "short-token affix");

    // punctuation
    check!(punct_stats("").fields().iter().all(|(_, v)| *v == 0), "punct empty");
    let p = punct_stats("Чакай!!! Наистина ли?");
    check!(p.excl_elong == 1 && p.quest_single == 1 && p.word_count == 3, "punct runs");
    check!(punct_stats("ТОВА Е СКАНДАЛ").allcaps_count == 2, "all-caps length rule");

    // emoticons
    let emo = Lexicon::from_terms("emoticons", LexiconKind::Patterns, [":)", ":))"]);
    let only_smile = Lexicon::from_terms("emoticons", LexiconKind::Patterns, [":)"]);
    check!(extract_emoticons("a :) b :)", &only_smile) == BTreeMap::from([(":)".to_string(), 2)]), "emoticon count");
    check!(extract_emoticons("nothing here", &emo).is_empty(), "no emoticons");
    check!(extract_emoticons("yes :))", &emo) == BTreeMap::from([(":))".to_string(), 1)]), "emoticon longest match");

    // lexicons
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("triggers.txt");
    std::fs::write(&path, "трол\nТрол\n").map_err(|e| e.to_string())?;
    check!(load_lexicon(&path, LexiconKind::Terms).map(|l| l.len()).ok() == Some(1), "lexicon normalisation");
    check!(load_lexicon(dir.path().join("missing.txt"), LexiconKind::Terms).is_err(), "missing lexicon file");
    let base = Lexicon::from_terms("bad", LexiconKind::Terms, ["idiot", "absent"]);
    let table = EmbeddingTable::<f64>::from_rows(
        2,
        vec![
            ("idiot".into(), vec![1.0, 0.0]),
            ("n1".into(), vec![0.9, 0.1]),
            ("n2".into(), vec![0.8, 0.2]),
            ("n3".into(), vec![0.7, 0.3]),
            ("far".into(), vec![-1.0, 0.0]),
        ],
    )
    .map_err(|e| e.to_string())?;
    let grown = expand_lexicon(&base, &table, 3).map_err(|e| e.to_string())?;
    check!(grown.len() == 5 && grown.contains("n3") && !grown.contains("far"), "lexicon expansion");
    let oov = Lexicon::from_terms("bad", LexiconKind::Terms, ["absent"]);
    check!(expand_lexicon(&oov, &table, 3).map(|l| l.len()).ok() == Some(1), "expansion out of vocabulary");
    let with_n1 = Lexicon::from_terms("bad", LexiconKind::Terms, ["idiot", "n1"]);
    check!(expand_lexicon(&with_n1, &table, 3).map(|l| l.len()).ok() == Some(4), "expansion without duplicates");

    let bad = Lexicon::from_terms("bad", LexiconKind::Terms, ["идиот", "глупак"]);
    check!(count_matches(&tokenize("идиот и глупак"), &bad, None).total == 2, "bad-word count");
    check!(count_matches(&tokenize("нищо"), &bad, None).total == 0, "no bad words");
    let pol = Lexicon::from_terms("politicians", LexiconKind::Terms, ["бат бойко"]);
    check!(count_matches(&tokenize("Бат Бойко каза"), &pol, None).total == 1, "two-token mention");

    let polarity =
        Lexicon::from_categorized("polarity", [("добър", "positive"), ("хубав", "positive"), ("лош", "negative")]);
    let emotions = Lexicon::from_categorized("emotions", [("добър", "joy"), ("страх", "fear")]);
    let opinion = Lexicon::from_categorized("opinion", [("против", "negative")]);
    let sent = SentimentResources::new(polarity, emotions, opinion).map_err(|e| e.to_string())?;
    let s = sentiment_scores(&tokenize("добър хубав лош"), &sent);
    check!(s.polarity.positive == 2 && s.polarity.negative == 1 && s.polarity.net() == 1, "polarity counts");
    let empty = sentiment_scores(&tokenize(""), &sent);
    check!(empty.features().iter().all(|(_, v)| *v == 0.0), "empty sentiment");
    check!(s.emotions.get("joy") == Some(&1), "polarity and emotion both count");

    let gaz = Gazetteers::new(vec![
        Lexicon::from_terms("location", LexiconKind::Terms, ["варна", "грузия"]),
        Lexicon::from_terms("country", LexiconKind::Terms, ["русия", "грузия"]),
        Lexicon::from_terms("person_name", LexiconKind::Terms, ["иван"]),
        Lexicon::from_terms("date_unit", LexiconKind::Terms, ["ден"]),
    ])
    .map_err(|e| e.to_string())?;
    let ne = gazetteer_entities(&tokenize("Русия"), &gaz);
    check!(ne.get("country") == Some(&1) && ne.get("location") == Some(&0), "one country");
    check!(gazetteer_entities(&tokenize("нищо"), &gaz).values().all(|&v| v == 0), "no entities");
    let both = gazetteer_entities(&tokenize("Грузия"), &gaz);
    check!(both.get("country") == Some(&1) && both.get("location") == Some(&1), "shared surface form");

    // features
    let res = FeatureResources::default();
    let meta =
        extract_raw(&comment_at("", "2015-01-07T10:00:00+02:00", 1, 1), GroupMask::only(FeatureGroup::Metadata), &res)
            .map_err(|e| e.to_string())?;
    check!(meta.len() == 4, "empty text metadata");
    let mut tagged = comment_at("a b c d e f g h i j", "2015-01-07T10:00:00+02:00", 1, 1);
    let mut tags = vec!["Vpitf".to_string(); 10];
    tags[3] = "Npmsi".into();
    tagged.pos_tags = Some(tags);
    let pos = extract_raw(&tagged, GroupMask::only(FeatureGroup::Pos), &res).map_err(|e| e.to_string())?;
    check!(pos_tag_expansion("Npmsi") == sv(&["Npmsi", "N", "Np"]), "POS triple");
    check!(
        ["Npmsi", "N", "Np"].iter().all(|t| (pos.get(FeatureGroup::Pos, t).unwrap_or(0.0) - 0.1).abs() < 1e-12),
        "POS shares 0.1"
    );
    let sat = MetadataFeatures::from_comment(&comment_at("", "2015-01-10T23:00:00+02:00", 5, 20));
    check!((sat.night, sat.weekend, sat.worktime, sat.rank_ratio) == (1.0, 1.0, 0.0, 0.25), "Saturday 23:00");
    for h in ["19:30:00", "20:00:00", "06:00:00", "08:30:00"] {
        let m = MetadataFeatures::from_comment(&comment_at("", &format!("2015-01-07T{h}+02:00"), 1, 1));
        check!(m.worktime == 0.0 && m.night == 0.0, format!("gap hour {h}"));
    }
    let sc = ScalerStats::new(vec![0.0f64], vec![4.0]);
    check!(sc.scale(0, 2.0) == 0.5, "min-max 0.5");
    let v = FeatureVector::from_pairs([(0, 3.0f64), (1, 4.0)]).l2_normalize();
    check!(v.entries() == [(0, 0.6), (1, 0.8)], "L2 (3,4)");
    let key = FeatureKey { group: FeatureGroup::Punct, name: "x".into() };
    let reg = FeatureRegistry::from(vec![key]);
    let mut unseen = RawFeatures::new();
    unseen.add(FeatureGroup::BowWithStop, "never", 1.0);
    check!(transform(&unseen, &reg, &sc).is_empty(), "unseen features vanish");
    Ok(format!("{checks} stated examples hold"))
}

fn no_leakage() -> Outcome {
    let corpus = common::planted_corpus(200, 41, 0.8, 0.5);
    let mut raws = extract_all(&corpus.examples, GroupMask::all(), &corpus.resources).map_err(|e| e.to_string())?;
    let labels: Vec<bool> = corpus.examples.iter().map(|e| e.label.is_troll()).collect();
    let folds = stratified_folds(&labels, 5, 9).map_err(|e| e.to_string())?;
    let train: Vec<usize> = (0..raws.len()).filter(|&i| folds[i] != 0).collect();
    let held: Vec<usize> = (0..raws.len()).filter(|&i| folds[i] == 0).collect();
    let train_set: HashSet<usize> = train.iter().copied().collect();
    ensure!(held.iter().all(|i| !train_set.contains(i)), "held-out example in training split");
    let (reg_a, sc_a) = prepare_fold::<f64>(&raws, &train).map_err(|e| e.to_string())?;
    for &i in &held {
        let mut r = RawFeatures::new();
        r.add(FeatureGroup::BowWithStop, format!("leak{i}"), 1e6);
        r.set(FeatureGroup::Punct, "word_count", 1e9);
        r.set(FeatureGroup::Metadata, "rank_ratio", -5.0);
        raws[i] = r;
    }
    let (reg_b, sc_b) = prepare_fold::<f64>(&raws, &train).map_err(|e| e.to_string())?;
    ensure!(reg_a == reg_b, "registry changed with held-out contents");
    ensure!(sc_a == sc_b, "scaler changed with held-out contents");
    Ok(format!("{} columns and scaler unchanged after mutating {} held-out rows", reg_a.n_columns(), held.len()))
}

fn user_level() -> Outcome {
    let corpus = common::user_corpus(40, 60, 17);
    let stats = user_stats(&corpus.comments, &corpus.candidates);
    let thresholds = [5usize, 10, 15, 20];
    let mut previous: Option<HashSet<String>> = None;
    for &t in thresholds.iter().rev() {
        let data = build_user_dataset(&corpus.comments, &stats, t, 3).map_err(|e| e.to_string())?;
        let positives: HashSet<String> =
            stats.iter().filter(|s| s.accusation_mentions >= t).map(|s| s.user_id.clone()).collect();
        ensure!(data.positives == positives.len(), "threshold {t}: positive count mismatch");
        if let Some(higher) = &previous {
            ensure!(higher.is_subset(&positives), "a user counted above {t} is missing at {t}");
        }
        previous = Some(positives);
    }
    let cfg = ExperimentConfig {
        mode: Mode::UserLevel,
        thresholds: thresholds.to_vec(),
        folds: 5,
        seed: 2,
        ..Default::default()
    };
    let table = run_user_experiment(&corpus.comments, &stats, &cfg, &corpus.resources).map_err(|e| e.to_string())?;
    ensure!(table.rows.iter().map(|r| r.threshold).collect::<Vec<_>>() == thresholds, "threshold columns");
    let md = render_report(&[Report::Users(table.clone())], ReportFormat::Markdown).map_err(|e| e.to_string())?;
    ensure!(md.contains("| | 5 | 10 | 15 | 20 |"), "table header missing thresholds:\n{md}");
    let accs: Vec<String> = table.rows.iter().map(|r| r.acc.map_or("empty".into(), |a| format!("{a:.1}"))).collect();
    Ok(format!("nested positives across thresholds; Acc by threshold [{}]", accs.join(", ")))
}

fn main() {
    let criteria: [(&str, Criterion); 11] = [
        ("gradient oracle", gradient_oracle),
        ("LR optimum oracle", lr_optimum),
        ("kappa oracle", kappa_oracle),
        ("k-means", kmeans_checks),
        ("baseline sanity", baseline_sanity),
        ("planted-signal end-to-end", planted_signal),
        ("ablation harness structure", ablation_structure),
        ("accusation detector", accusation_detector),
        ("feature-extraction unit suite", feature_suite),
        ("no-leakage mutation", no_leakage),
        ("user-level experiment harness", user_level),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
