mod common;

use std::collections::HashSet;

use trollscope::corpus::{accused_users, build_pairs, user_stats, Label, LabeledDataset};
use trollscope::experiments::{
    extract_all, render_report, run_ablation, train_model, ExperimentConfig, Mode, Report, ReportFormat,
};
use trollscope::features::{FeatureGroup, GroupMask};
use trollscope::learn::{Model, TrainParams};

#[test]
fn pairs_ablation_and_model_round_trip() {
    let corpus = common::user_corpus(20, 30, 8);
    let stats = user_stats(&corpus.comments, &corpus.candidates);
    let accused = accused_users(&corpus.comments, &corpus.candidates);
    let accused_ids: HashSet<&str> = corpus.candidates.iter().map(|c| c.accused_comment_id.as_str()).collect();
    let trolls: Vec<_> = corpus
        .comments
        .iter()
        .filter(|c| accused_ids.contains(c.id.as_str()))
        .map(|c| (c.clone(), Label::MentionedTroll))
        .collect();
    let ds = build_pairs(&trolls, &corpus.comments, &stats, &accused, 4);
    assert!(ds.is_balanced());
    assert_eq!(ds.len() + 2 * ds.dropped_troll_ids.len(), 2 * trolls.len());
    for pair in ds.examples.chunks(2) {
        assert_eq!(pair[0].comment.publication_id, pair[1].comment.publication_id);
        assert!(!accused.contains(&pair[1].comment.user_id));
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.jsonl");
    ds.write_jsonl(std::fs::File::create(&path).unwrap()).unwrap();
    let examples = LabeledDataset::read_jsonl(&path).unwrap();
    assert_eq!(examples, ds.examples);

    let meta = GroupMask::only(FeatureGroup::Metadata);
    let cfg = ExperimentConfig { mode: Mode::All, mask: meta, folds: 5, seed: 1, ..Default::default() };
    let table = run_ablation(&examples, &cfg, &corpus.resources).unwrap();
    let all = &table.rows[0];
    assert_eq!(all.label, "All");
    assert!(all.acc > 75.0, "night posting should separate the classes: {}", all.acc);
    let md = render_report(&[Report::Ablation(table)], ReportFormat::Markdown).unwrap();
    assert!(md.contains("| All |"));

    let model = train_model::<f64>(&examples, meta, &TrainParams::default(), &corpus.resources).unwrap();
    let model_path = dir.path().join("model.json");
    model.save(&model_path).unwrap();
    let loaded = Model::<f64>::load(&model_path).unwrap();
    assert_eq!(loaded, model);
    for raw in extract_all(&examples, meta, &corpus.resources).unwrap() {
        assert_eq!(loaded.score(&raw), model.score(&raw));
    }
}
