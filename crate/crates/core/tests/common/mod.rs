//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use chrono::{DateTime, Duration, FixedOffset, TimeZone};
use rand::distributions::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trollscope::corpus::{AccusationCandidate, Comment, Example, Label};
use trollscope::features::FeatureResources;

pub fn demo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("resources").join("demo")
}

pub fn demo_resources() -> FeatureResources {
    FeatureResources::load_dir(demo_dir()).expect("demo resources load")
}

const CONSONANTS: [char; 6] = ['к', 'л', 'м', 'н', 'р', 'т'];
const VOWELS: [char; 3] = ['а', 'о', 'и'];

/// Words built from a small syllable inventory, so every character n-gram,
/// prefix and suffix of one word is shared by many others.
pub struct Vocabulary {
    pub filler: Vec<String>,
    pub planted: Vec<String>,
    /// Words from the demo lexicons, drawn independently of the label.
    pub lexical: Vec<String>,
}

fn syllables() -> Vec<String> {
    CONSONANTS.iter().flat_map(|c| VOWELS.iter().map(move |v| format!("{c}{v}"))).collect()
}

impl Vocabulary {
    pub fn new(rng: &mut ChaCha8Rng, n_filler: usize, n_planted: usize) -> Self {
        let syl = syllables();
        let mut all: Vec<String> = Vec::new();
        for a in &syl {
            for b in &syl {
                for c in &syl {
                    all.push(format!("{a}{b}{c}"));
                }
            }
        }
        all.shuffle(rng);
        let planted = all[..n_planted].to_vec();
        let filler = all[n_planted..n_planted + n_filler].to_vec();
        let lexical = [
            "и",
            "на",
            "да",
            "не",
            "за",
            "това",
            "добър",
            "лош",
            "лъжа",
            "браво",
            "гняв",
            "радост",
            "страх",
            "подкрепям",
            "против",
            "идиот",
            "боклук",
            "борисов",
            "путин",
            "бсп",
            "софия",
            "русия",
            "бойко",
            "година",
            "правителство",
            "държава",
            "говори",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        Vocabulary { filler, planted, lexical }
    }

    /// Every word mapped to one of `k` clusters by position.
    pub fn clusters(&self, k: usize) -> HashMap<String, usize> {
        self.filler.iter().chain(&self.planted).enumerate().map(|(i, w)| (w.clone(), i % k)).collect()
    }
}

fn tz() -> FixedOffset {
    FixedOffset::east_opt(2 * 3600).unwrap()
}

/// A timestamp in January 2015 at the given local hour.
pub fn timestamp(rng: &mut ChaCha8Rng, hour: u32) -> DateTime<FixedOffset> {
    let day = rng.gen_range(1..=31);
    tz().with_ymd_and_hms(2015, 1, day, hour, rng.gen_range(0..60), rng.gen_range(0..60)).unwrap()
}

pub fn night_hour(rng: &mut ChaCha8Rng) -> u32 {
    *[22, 23, 0, 1, 2, 3, 4, 5].choose(rng).unwrap()
}

pub fn day_hour(rng: &mut ChaCha8Rng) -> u32 {
    rng.gen_range(10..17)
}

fn sentence(rng: &mut ChaCha8Rng, vocab: &Vocabulary, planted: Option<&str>) -> String {
    let len = rng.gen_range(8..16);
    let mut words: Vec<String> = (0..len)
        .map(|_| {
            if rng.gen_bool(0.15) {
                vocab.lexical.choose(rng).unwrap().clone()
            } else {
                vocab.filler.choose(rng).unwrap().clone()
            }
        })
        .collect();
    if let Some(p) = planted {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, p.to_string());
    }
    let mut text = words.join(" ");
    text.push_str(["", ".", "!", "?", "...", "!!"].choose(rng).unwrap());
    if rng.gen_bool(0.1) {
        text.push(' ');
        text.push_str([":)", ":(", ":D", "xD"].choose(rng).unwrap());
    }
    if rng.gen_bool(0.1) {
        text = text.to_uppercase();
    }
    text
}

pub struct PlantedCorpus {
    pub examples: Vec<Example>,
    pub resources: FeatureResources,
    pub vocabulary: Vocabulary,
}

/// Balanced corpus where troll comments are posted at night with
/// probability `p_night` and contain one planted word with probability
/// `p_planted`. Everything else is label-independent.
pub fn planted_corpus(n: usize, seed: u64, p_night: f64, p_planted: f64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocabulary = Vocabulary::new(&mut rng, 500, 20);
    let mut resources = demo_resources();
    resources.clusters = Some(vocabulary.clusters(40));
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let troll = i % 2 == 0;
        let hour = if troll && rng.gen_bool(p_night) { night_hour(&mut rng) } else { day_hour(&mut rng) };
        let planted =
            if troll && rng.gen_bool(p_planted) { vocabulary.planted.choose(&mut rng).cloned() } else { None };
        let size = rng.gen_range(1..200);
        let comment = Comment {
            id: format!("c{i}"),
            user_id: if troll { format!("t{}", rng.gen_range(0..15)) } else { format!("u{}", rng.gen_range(0..60)) },
            publication_id: format!("p{}", rng.gen_range(0..80)),
            parent_id: None,
            timestamp: timestamp(&mut rng, hour),
            rank: rng.gen_range(1..=size),
            thread_size: size,
            text: sentence(&mut rng, &vocabulary, planted.as_deref()),
            pos_tags: None,
        };
        examples.push(Example::new(comment, if troll { Label::MentionedTroll } else { Label::NonTroll }));
    }
    PlantedCorpus { examples, resources, vocabulary }
}

pub const TRIGGER_WORDS: [&str; 8] = ["трол", "тролче", "тролът", "мурзилка", "мурзи", "платен", "платени", "агент"];

/// Replies labelled as accusations or not; accusations contain one or two
/// trigger words, the rest never do. Filler words follow a Zipf law over a
/// large vocabulary, as in real text, so most of them are rare.
pub fn accusation_replies(n: usize, seed: u64) -> Vec<(Comment, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocabulary::new(&mut rng, 2000, 0);
    let zipf = WeightedIndex::new((1..=vocab.filler.len()).map(|r| 1.0 / r as f64)).unwrap();
    (0..n)
        .map(|i| {
            let accusation = i % 2 == 0;
            let len = rng.gen_range(8..16);
            let mut words: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.15) {
                        vocab.lexical.choose(&mut rng).unwrap().as_str()
                    } else {
                        vocab.filler[rng.sample(&zipf)].as_str()
                    }
                })
                .collect();
            if accusation {
                for _ in 0..rng.gen_range(1..=2) {
                    words.insert(0, TRIGGER_WORDS.choose(&mut rng).unwrap());
                }
            }
            let mut text = words.join(" ");
            text.push_str(["", ".", "!", "?"].choose(&mut rng).unwrap());
            if rng.gen_bool(0.1) {
                text = text.to_uppercase();
            }
            let hour = day_hour(&mut rng);
            let c = Comment {
                id: format!("r{i}"),
                user_id: format!("u{}", rng.gen_range(0..50)),
                publication_id: format!("p{}", rng.gen_range(0..30)),
                parent_id: Some(format!("x{i}")),
                timestamp: timestamp(&mut rng, hour),
                rank: 2,
                thread_size: 10,
                text,
                pos_tags: None,
            };
            (c, accusation)
        })
        .collect()
}

pub struct UserCorpus {
    pub comments: Vec<Comment>,
    pub candidates: Vec<AccusationCandidate>,
    pub resources: FeatureResources,
}

/// `n_accused` users receiving between 5 and 25 confirmed accusations and
/// `n_clean` prolific users who are never accused. Accused users post at
/// night more often. Both kinds post 100 to 130 comments, so comment
/// volume carries no label information.
pub fn user_corpus(n_accused: usize, n_clean: usize, seed: u64) -> UserCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocabulary::new(&mut rng, 300, 0);
    let mut comments = Vec::new();
    let mut candidates = Vec::new();
    let base = tz().with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap();
    let mut next_id = 0usize;
    let mut push =
        |comments: &mut Vec<Comment>, rng: &mut ChaCha8Rng, user: &str, parent: Option<String>, night: bool| {
            let hour = if night { night_hour(rng) } else { day_hour(rng) };
            let ts = base + Duration::days(rng.gen_range(0..31)) + Duration::hours(hour as i64);
            let id = format!("m{next_id}");
            next_id += 1;
            comments.push(Comment {
                id: id.clone(),
                user_id: user.to_string(),
                publication_id: format!("p{}", rng.gen_range(0..40)),
                parent_id: parent,
                timestamp: ts,
                rank: 1,
                thread_size: 5,
                text: sentence(rng, &vocab, None),
                pos_tags: None,
            });
            id
        };
    for u in 0..n_accused {
        let user = format!("accused{u}");
        let mentions = 5 + (u % 21);
        let n_comments = rng.gen_range(100..=130);
        for m in 0..n_comments {
            let id = push(&mut comments, &mut rng, &user, None, m % 3 != 0);
            if m < mentions {
                let accuser = format!("accuser{}", (u + m) % 37);
                let reply = push(&mut comments, &mut rng, &accuser, Some(id.clone()), false);
                candidates.push(AccusationCandidate {
                    accusation_comment_id: reply,
                    accused_comment_id: id,
                    matched_trigger: "трол".into(),
                    annotator_decisions: Vec::new(),
                });
            }
        }
    }
    for u in 0..n_clean {
        let user = format!("clean{u}");
        for _ in 0..rng.gen_range(100..=130) {
            let night = rng.gen_bool(0.05);
            push(&mut comments, &mut rng, &user, None, night);
        }
    }
    UserCorpus { comments, candidates, resources: demo_resources() }
}
