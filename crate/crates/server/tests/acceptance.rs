//! Acceptance suite: one line per criterion, nonzero exit on any failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use common::{culture_text, Harness};
use icls_core::domain::{
    Catalog, Category, CategoryId, CategoryName, ChunkId, ContentUnit, Country, CountryId, Enrollment, LearnerId,
    Lesson, LessonId, ProgressState, QuizId, UnitId, UnitKind, UnitStatus,
};
use icls_core::gamification::{rank, standing_order, GamificationRules, LearnerLedger, LedgerBook, Standing};
use icls_core::ingestion::{Chunk, DEFAULT_REPLY_RESERVE};
use icls_core::llm::{render_chat_prompt, render_quiz_prompt, render_summary_prompt, LlmGateway};
use icls_core::proficiency::{category_quiz_means, compute_proficiency, EngagementStats};
use icls_core::scribe::{is_stopword, Scribe};
use icls_core::treasury::{generate_summary, plan_strategy, validate_summary, SummaryStrategy, SummaryVerdict};
use icls_core::worldwise::{parse_quiz, render_quiz_text, Question, Quiz};
use icls_server::db::DbError;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::json;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn core_path(rel: &str) -> String {
    format!("{}/../core/tests/{rel}", env!("CARGO_MANIFEST_DIR"))
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(core_path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn block_on<F: std::future::Future>(f: F) -> F::Output {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap()
        .block_on(f)
}

fn prompt_fidelity() -> Outcome {
    let cases = [
        (
            "summary",
            render_summary_prompt("<<DATA>>", "<<USER>>"),
            "golden/summary.txt",
        ),
        ("quiz", render_quiz_prompt("<<DATA>>"), "golden/quiz.txt"),
        ("chat", render_chat_prompt(&["<<DATA>>"], "<<USER>>"), "golden/chat.txt"),
    ];
    for (name, rendered, golden) in cases {
        let rendered = rendered.map_err(|e| format!("{name}: {e}"))?;
        ensure!(rendered == read(golden), "{name} prompt differs from {golden}");
    }
    Ok("3 of 3 templates byte-identical".into())
}

const TEXT_CHARS: &[char] = &[
    'a', 'b', 'c', 'k', 'm', 'o', 'r', 's', 't', 'z', 'A', 'K', 'Q', '0', '7', ' ', ' ', '?', ',', '.', '\'', '"', '(',
    ')', '-', ':', 'é', 'ñ', '日', '本',
];

fn field(rng: &mut StdRng) -> String {
    loop {
        let len = rng.random_range(1..40);
        let s: String = (0..len)
            .map(|_| TEXT_CHARS[rng.random_range(0..TEXT_CHARS.len())])
            .collect();
        let s = s.trim().to_string();
        if !s.is_empty() {
            return s;
        }
    }
}

fn random_quiz(rng: &mut StdRng, id: i64) -> Quiz {
    let n = rng.random_range(10..=15);
    let questions = (0..n)
        .map(|_| Question {
            stem: field(rng),
            options: std::array::from_fn(|_| field(rng)),
            answer_index: rng.random_range(1..=4),
        })
        .collect();
    Quiz::new(QuizId(id), UnitId(id), questions).unwrap()
}

fn quiz_round_trip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let quizzes: Vec<Quiz> = (1..=1000).map(|i| random_quiz(&mut rng, i)).collect();
    let started = Instant::now();
    for quiz in &quizzes {
        let parsed = parse_quiz(&render_quiz_text(quiz));
        ensure!(
            parsed.rejects.is_empty(),
            "quiz {} produced rejects {:?}",
            quiz.quiz_id,
            parsed.rejects
        );
        let back = Quiz::new(quiz.quiz_id, quiz.unit_id, parsed.questions).map_err(|e| e.to_string())?;
        ensure!(&back == quiz, "quiz {} did not round-trip", quiz.quiz_id);
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("1000 quizzes in {elapsed:.2?}"))
}

/// Question blocks the parser should detect: lines that alone open a block.
fn detected_blocks(text: &str) -> usize {
    text.lines().map(|line| parse_quiz(line).block_count()).sum()
}

const FUZZ_TOKENS: &[&str] = &[
    "Question",
    "question 3:",
    "Option",
    "Option 2:",
    "Answer:",
    "answer: 4",
    "**",
    ":",
    "\n",
    "\n\n",
    " ",
    "1)",
    "5",
    "Answer: Option 9",
    "__",
    "\r\n",
    "\u{0}",
    "é",
];

fn mutate(rng: &mut StdRng, base: &str) -> String {
    let mut lines: Vec<String> = base.lines().map(String::from).collect();
    for _ in 0..rng.random_range(1..=6) {
        if lines.is_empty() {
            lines.push(String::new());
        }
        let i = rng.random_range(0..lines.len());
        match rng.random_range(0..6) {
            0 => {
                lines.remove(i);
            }
            1 => {
                let copy = lines[i].clone();
                lines.insert(i, copy);
            }
            2 => {
                let j = rng.random_range(0..lines.len());
                lines.swap(i, j);
            }
            3 => {
                let cut = lines[i]
                    .char_indices()
                    .map(|(p, _)| p)
                    .nth(rng.random_range(0..=lines[i].chars().count().max(1)) / 2);
                if let Some(cut) = cut {
                    lines[i].truncate(cut);
                }
            }
            4 => lines[i].push_str(FUZZ_TOKENS[rng.random_range(0..FUZZ_TOKENS.len())]),
            _ => lines[i] = lines[i].replace(|c: char| c.is_ascii_digit(), &rng.random_range(0..10).to_string()),
        }
    }
    lines.join("\n")
}

fn check_parse(text: &str) -> Result<(), String> {
    let parsed = catch_unwind(|| parse_quiz(text)).map_err(|_| format!("parser panicked on {text:?}"))?;
    let detected = detected_blocks(text);
    ensure!(
        parsed.block_count() == detected,
        "{} questions + {} rejects for {detected} blocks in {text:?}",
        parsed.questions.len(),
        parsed.rejects.len()
    );
    ensure!(
        parsed.questions.iter().all(Question::is_valid),
        "invalid question accepted from {text:?}"
    );
    Ok(())
}

fn parser_totality() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..10_000 {
        let len = rng.random_range(0..400);
        let bytes: Vec<u8> = if rng.random_bool(0.5) {
            (0..len).map(|_| rng.random()).collect()
        } else {
            (0..len / 4)
                .flat_map(|_| FUZZ_TOKENS[rng.random_range(0..FUZZ_TOKENS.len())].bytes())
                .collect()
        };
        check_parse(&String::from_utf8_lossy(&bytes))?;
    }
    let fixture = read("fixtures/quiz_12_blocks.txt");
    for _ in 0..200 {
        check_parse(&mutate(&mut rng, &fixture))?;
    }
    let parsed = parse_quiz(&fixture);
    ensure!(
        parsed.block_count() == 12 && parsed.questions.len() == 10 && parsed.rejects.len() == 2,
        "fixture gave {} questions and {} rejects",
        parsed.questions.len(),
        parsed.rejects.len()
    );
    Ok("10000 random + 200 mutated inputs, fixture 12 blocks -> 10 questions".into())
}

const VOCAB: &[&str] = &[
    "tea", "ceremony", "matcha", "kimono", "festival", "lantern", "sushi", "rice", "temple", "shrine", "drum", "dance",
    "the", "of", "and", "Kyoto", "Osaka", "silk", "fan", "poem", "bow", "guest", "host", "season",
];

fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !is_stopword(t))
        .collect()
}

fn bucket(term: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in term.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h % 256
}

/// Brute-force hybrid score of every chunk: `alpha * (1 + cos) / 2 + (1 - alpha) * coverage`.
fn brute_force(chunks: &[String], query: &str, alpha: f64) -> Vec<(u32, f64)> {
    let counts = |text: &str| {
        let mut m = BTreeMap::new();
        for t in terms(text) {
            *m.entry(bucket(&t)).or_insert(0.0) += 1.0;
        }
        m
    };
    let norm = |m: &BTreeMap<u64, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    let q = counts(query);
    let q_terms: BTreeSet<String> = terms(query).into_iter().collect();
    let mut scored: Vec<(u32, f64)> = chunks
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let c = counts(text);
            let cos = if norm(&q) == 0.0 || norm(&c) == 0.0 {
                0.0
            } else {
                q.iter().map(|(k, v)| v * c.get(k).unwrap_or(&0.0)).sum::<f64>() / (norm(&q) * norm(&c))
            };
            let c_terms: BTreeSet<String> = terms(text).into_iter().collect();
            let coverage = if q_terms.is_empty() {
                0.0
            } else {
                q_terms.intersection(&c_terms).count() as f64 / q_terms.len() as f64
            };
            (i as u32, alpha * (1.0 + cos) / 2.0 + (1.0 - alpha) * coverage)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored
}

fn sentence(rng: &mut StdRng) -> String {
    let n = rng.random_range(1..14);
    (0..n)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn retrieval_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(13);
    let unit = UnitId(1);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(1..=200);
        let texts: Vec<String> = (0..n).map(|_| sentence(&mut rng)).collect();
        let query = sentence(&mut rng);
        let chunks: Vec<Chunk> = texts
            .iter()
            .enumerate()
            .map(|(i, text)| Chunk {
                chunk_id: ChunkId {
                    unit_id: unit,
                    ordinal: i as u32,
                },
                unit_id: unit,
                ordinal: i as u32,
                text: text.clone(),
                token_estimate: text.len().div_ceil(4),
                overlap_chars: 0,
            })
            .collect();
        let scribe = Scribe::<f64>::default();
        scribe.index_unit(unit, &chunks).map_err(|e| e.to_string())?;
        for alpha in [rng.random_range(0.0..=1.0), 0.0, 1.0] {
            let got = scribe.retrieve(unit, &query, n, alpha).map_err(|e| e.to_string())?;
            let want = brute_force(&texts, &query, alpha);
            ensure!(got.len() == n, "case {case}: {} hits for {n} chunks", got.len());
            let by_id: BTreeMap<u32, f64> = want.iter().copied().collect();
            for (pos, hit) in got.iter().enumerate() {
                let expected = by_id[&hit.chunk_id.ordinal];
                let diff = (hit.hybrid_score - expected).abs();
                worst = worst.max(diff);
                ensure!(diff <= 1e-9, "case {case}: score {} vs {expected}", hit.hybrid_score);
                let (want_id, want_score) = want[pos];
                ensure!(
                    hit.chunk_id.ordinal == want_id || (want_score - expected).abs() <= 1e-12,
                    "case {case} alpha {alpha}: rank {pos} is chunk {} not {want_id}",
                    hit.chunk_id.ordinal
                );
            }
            let component = |h: &icls_core::ScoredChunk64| match alpha {
                0.0 => Some(h.keyword_component),
                1.0 => Some(h.cosine_component),
                _ => None,
            };
            for pair in got.windows(2) {
                if let (Some(a), Some(b)) = (component(&pair[0]), component(&pair[1])) {
                    ensure!(
                        component(&pair[0]) == Some(pair[0].hybrid_score),
                        "alpha {alpha} mixes components"
                    );
                    ensure!(
                        a > b || (a == b && pair[0].chunk_id.ordinal < pair[1].chunk_id.ordinal),
                        "case {case}: alpha {alpha} ordering broken"
                    );
                }
            }
        }
    }
    Ok(format!("100 corpora x 3 alphas, max score error {worst:.1e}"))
}

fn summary_contract() -> Outcome {
    let gateway = LlmGateway::mock();
    let mut checked = 0;
    for (i, words) in [5, 40, 120, 199, 200, 450, 1200, 4000].into_iter().enumerate() {
        let text = culture_text(&format!("Topic{i}"), words);
        for instruction in ["", "Focus on etiquette."] {
            let summary =
                generate_summary(&gateway, UnitId(i as i64 + 1), &text, instruction).map_err(|e| e.to_string())?;
            ensure!(
                summary.word_count >= 200,
                "{words}-word source gave {} words",
                summary.word_count
            );
            ensure!(
                validate_summary(&summary.text)
                    == SummaryVerdict::Accepted {
                        word_count: summary.word_count
                    },
                "stored word count disagrees with text"
            );
            checked += 1;
        }
    }
    let long = culture_text("Long", 16_000);
    let prompt = render_summary_prompt(&long, "").map_err(|e| e.to_string())?;
    let tokens = gateway.estimate(&prompt);
    let window = gateway.config().context_window;
    ensure!(tokens >= 20_000, "long document is only {tokens} tokens");
    let predicted = if tokens + DEFAULT_REPLY_RESERVE <= window {
        SummaryStrategy::SinglePass
    } else {
        SummaryStrategy::MapReduce
    };
    ensure!(
        predicted == SummaryStrategy::MapReduce,
        "arithmetic predicts {predicted:?}"
    );
    let planned = plan_strategy(&gateway, &long, "").map_err(|e| e.to_string())?;
    ensure!(planned == predicted, "planned {planned:?}");
    let summary = generate_summary(&gateway, UnitId(99), &long, "").map_err(|e| e.to_string())?;
    ensure!(
        summary.strategy == SummaryStrategy::MapReduce,
        "ran {:?}",
        summary.strategy
    );
    ensure!(
        summary.word_count >= 200,
        "map-reduce summary has {} words",
        summary.word_count
    );
    Ok(format!(
        "{checked} mock summaries >= 200 words, {tokens}-token document -> map_reduce"
    ))
}

fn t(secs: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_772_000_000 + secs, 0).unwrap()
}

const LEARNER: LearnerId = LearnerId(1);
const COUNTRY: CountryId = CountryId(1);

/// One country, two categories, four single-unit lessons.
fn small_catalog() -> Catalog {
    let mut catalog = Catalog::default();
    catalog.countries.insert(
        COUNTRY,
        Country {
            country_id: COUNTRY,
            name: "Japan".into(),
            categories: vec![CategoryId(1), CategoryId(2)],
        },
    );
    for (c, name) in [(1, CategoryName::Customs), (2, CategoryName::Cuisine)] {
        catalog.categories.insert(
            CategoryId(c),
            Category {
                category_id: CategoryId(c),
                country_id: COUNTRY,
                name,
                lessons: vec![LessonId(2 * c - 1), LessonId(2 * c)],
            },
        );
    }
    for l in 1..=4 {
        catalog.lessons.insert(
            LessonId(l),
            Lesson {
                lesson_id: LessonId(l),
                category_id: CategoryId((l + 1) / 2),
                title: format!("Lesson {l}"),
                content_units: vec![UnitId(l)],
            },
        );
        catalog.units.insert(
            UnitId(l),
            ContentUnit {
                unit_id: UnitId(l),
                lesson_id: LessonId(l),
                kind: UnitKind::Document,
                source_name: "x.txt".into(),
                raw_text: "text".into(),
                summary_id: None,
                quiz_id: None,
                indexed: true,
                status: UnitStatus::Published,
                errors: Vec::new(),
            },
        );
    }
    catalog
}

fn trailing_run(days: &BTreeSet<NaiveDate>) -> u32 {
    let Some(last) = days.last() else {
        return 0;
    };
    (0..)
        .take_while(|k| days.contains(&(*last - chrono::Duration::days(*k))))
        .count() as u32
}

const RUNGS: [ProgressState; 3] = [
    ProgressState::Watched,
    ProgressState::SummaryTested,
    ProgressState::PracticeTested,
];

fn one_sequence(rng: &mut StdRng, catalog: &Catalog, rules: &GamificationRules) -> Result<(), String> {
    let units: Vec<UnitId> = catalog.units.keys().copied().collect();
    let mut ledger = LearnerLedger::new(LEARNER, t(0));
    let mut enrollment = Enrollment::new(LEARNER, COUNTRY, units.clone(), t(0));
    let mut results: Vec<(UnitId, f64)> = Vec::new();
    let mut days = BTreeSet::new();
    let mut clock = 0i64;
    for _ in 0..rng.random_range(1..40) {
        clock += rng.random_range(1..3600);
        match rng.random_range(0..3) {
            0 => {
                let unit = units[rng.random_range(0..units.len())];
                let to = RUNGS[rng.random_range(0..3)];
                let before = ledger.unit_xp(unit);
                if enrollment.advance(unit, to).is_ok() {
                    let delta = ledger
                        .award_lesson_xp(rules, unit, to, t(clock))
                        .map_err(|e| e.to_string())?;
                    ensure!(delta == rules.tier(to) - before, "delta {delta} for {to:?}");
                } else {
                    ensure!(ledger.unit_xp(unit) == before, "refused step changed XP");
                }
            }
            1 => results.push((
                units[rng.random_range(0..units.len())],
                rng.random_range(0..=10) as f64 / 10.0,
            )),
            _ => {
                clock += rng.random_range(0..3) * 86_400;
                let streak = ledger.record_login(t(clock));
                days.insert(t(clock).date_naive());
                ensure!(
                    streak.current_length == trailing_run(&days),
                    "streak {} vs {:?}",
                    streak.current_length,
                    days
                );
            }
        }
        for unit in &units {
            let xp = ledger.unit_xp(*unit);
            ensure!([0, 5, 7, 12].contains(&xp), "unit XP {xp}");
            ensure!(
                xp == rules.tier(enrollment.progress(*unit)),
                "XP {xp} disagrees with progress"
            );
        }
        ledger.verify().map_err(|e| e.to_string())?;
        ensure!(
            ledger.total_xp() == units.iter().map(|u| u64::from(ledger.unit_xp(*u))).sum::<u64>(),
            "total XP is not the sum of unit XP"
        );
        let held = ledger.badges().to_vec();
        let means = category_quiz_means(catalog, &results);
        ledger.evaluate_badges(rules, catalog, |u| enrollment.progress(u), &means, t(clock));
        ensure!(ledger.badges().starts_with(&held), "badges were lost");
    }
    Ok(())
}

fn leaderboard_order(rng: &mut StdRng) -> Result<(), String> {
    let n = rng.random_range(2..12);
    let standings: Vec<Standing> = (0..n)
        .map(|i| Standing {
            learner_id: LearnerId(i),
            total_xp: [0, 5, 7, 12, 24][rng.random_range(0..5)],
            reached_at: t(rng.random_range(0..4) * 60),
        })
        .collect();
    let ranked = rank(standings.clone(), None);
    let mut shuffled = standings.clone();
    shuffled.shuffle(rng);
    ensure!(rank(shuffled, None) == ranked, "ranking depends on input order");
    let by_id: BTreeMap<LearnerId, Standing> = standings.iter().map(|s| (s.learner_id, *s)).collect();
    for (i, pair) in ranked.windows(2).enumerate() {
        let (a, b) = (by_id[&pair[0].learner_id], by_id[&pair[1].learner_id]);
        ensure!(standing_order(&a, &b).is_lt(), "entries {i} and {} out of order", i + 1);
        let expected = a.total_xp > b.total_xp
            || (a.total_xp == b.total_xp && (a.reached_at, a.learner_id) < (b.reached_at, b.learner_id));
        ensure!(expected, "tie-break violated between {:?} and {:?}", a, b);
    }
    ensure!(
        ranked.iter().enumerate().all(|(i, e)| e.rank == i + 1),
        "ranks not dense"
    );
    Ok(())
}

fn concurrent_ledgers() -> Result<u64, String> {
    let book = Arc::new(LedgerBook::new(GamificationRules::default()));
    for l in 1..=16 {
        book.register(LearnerId(l), t(0)).map_err(|e| e.to_string())?;
    }
    let handles: Vec<_> = (0..8u64)
        .map(|seed| {
            let book = book.clone();
            std::thread::spawn(move || {
                let mut rng = StdRng::seed_from_u64(100 + seed);
                let (mut xp, mut coins) = (0u64, 0u64);
                for i in 0..2_000 {
                    let learner = LearnerId(rng.random_range(1..=16));
                    let unit = UnitId(rng.random_range(1..=10));
                    let rung = RUNGS[rng.random_range(0..3)];
                    let correct = rng.random_range(0..=10);
                    let (dx, dc) = book
                        .with_learner(learner, |rules, l| {
                            let dx = l.award_lesson_xp(rules, unit, rung, t(i)).unwrap_or(0);
                            (dx, l.award_quiz_coins(rules, QuizId(1), correct, t(i)))
                        })
                        .unwrap();
                    xp += u64::from(dx);
                    coins += u64::from(dc);
                }
                (xp, coins)
            })
        })
        .collect();
    let (mut xp, mut coins) = (0, 0);
    for h in handles {
        let (x, c) = h.join().map_err(|_| "worker panicked".to_string())?;
        xp += x;
        coins += c;
    }
    let (mut book_xp, mut book_coins) = (0, 0);
    for learner in book.learners() {
        let ledger = book.snapshot(learner).map_err(|e| e.to_string())?;
        ledger.verify().map_err(|e| e.to_string())?;
        for unit in 1..=10 {
            ensure!(
                [0, 5, 7, 12].contains(&ledger.unit_xp(UnitId(unit))),
                "unit XP out of tier set"
            );
        }
        book_xp += ledger.total_xp();
        book_coins += ledger.total_coins();
    }
    ensure!(
        (book_xp, book_coins) == (xp, coins),
        "book holds {book_xp}/{book_coins}, awarded {xp}/{coins}"
    );
    let board = book.leaderboard(None, None);
    ensure!(board.len() == 16, "leaderboard lost learners");
    Ok(xp + coins)
}

fn gamification_invariants() -> Outcome {
    let catalog = small_catalog();
    let rules = GamificationRules::default();
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..10_000 {
        one_sequence(&mut rng, &catalog, &rules)?;
        leaderboard_order(&mut rng)?;
    }
    let moved = concurrent_ledgers()?;
    Ok(format!(
        "10000 sequences + 10000 leaderboards, 8 threads moved {moved} points"
    ))
}

fn stats(seconds: u64, attempts: u64, mean: f64) -> EngagementStats<f64> {
    EngagementStats {
        learner_id: LEARNER,
        country_id: COUNTRY,
        total_seconds: seconds,
        attempt_count: attempts,
        result_count: u64::from(mean > 0.0),
        score_sum: mean,
        mean_quiz_score: mean,
    }
}

fn proficiency_formula() -> Outcome {
    let cases = [((0, 0, 0.0), 0.0), ((36_000, 50, 1.0), 1.0), ((18_000, 25, 0.8), 0.68)];
    for ((s, a, m), want) in cases {
        let got = compute_proficiency(&stats(s, a, m)).value;
        ensure!((got - want).abs() <= 1e-12, "({s}, {a}, {m}) gave {got}, want {want}");
    }
    let mut rng = StdRng::seed_from_u64(19);
    for _ in 0..1000 {
        let (s, a, m) = (
            rng.random_range(0..80_000),
            rng.random_range(0..120),
            rng.random_range(0.0..=1.0),
        );
        let base = compute_proficiency(&stats(s, a, m)).value;
        let bumped = [
            stats(s + rng.random_range(0..20_000), a, m),
            stats(s, a + rng.random_range(0..30), m),
            stats(s, a, (m + rng.random_range(0.0..0.5)).min(1.0)),
        ];
        for b in &bumped {
            let v = compute_proficiency(b).value;
            ensure!(v >= base && (0.0..=1.0).contains(&v), "{b:?} scored {v} below {base}");
        }
    }
    Ok("3 tabulated cases at 1e-12, 1000 perturbations monotone".into())
}

fn end_to_end() -> Outcome {
    block_on(async {
        let h = Harness::new();
        let country = h.create_country("Japan", &["Customs"]).await;
        let started = Instant::now();
        let unit = h
            .upload(country, "Customs", "Tea ceremony", &culture_text("Tea", 2500))
            .await;
        let upload_time = started.elapsed();
        ensure!(upload_time < Duration::from_secs(10), "upload took {upload_time:?}");
        ensure!(unit["status"] == "published", "unit is {}", unit["status"]);
        ensure!(
            unit["summary"]["word_count"].as_u64().unwrap_or(0) >= 200,
            "short summary"
        );
        ensure!(
            unit["quiz"]["questions"].as_array().map_or(0, Vec::len) >= 10,
            "short quiz"
        );
        ensure!(
            unit["indexed"] == true && unit["chunk_count"].as_u64().unwrap_or(0) > 1,
            "not indexed"
        );
        let unit = unit["unit_id"].as_i64().unwrap();

        let (me, token) = h.learner("Aiko", country, None).await;
        let (status, watched) = h
            .post(&format!("/units/{unit}/watch"), &token, json!({"seconds": 300}))
            .await;
        ensure!(
            status == StatusCode::OK && watched["xp_awarded"] == 5,
            "watch: {watched}"
        );
        let (status, quiz) = h.get(&format!("/units/{unit}/quiz"), &token).await;
        ensure!(
            status == StatusCode::OK && quiz["question_count"].as_u64() >= Some(10),
            "quiz: {quiz}"
        );
        let (status, graded) = h.submit(&token, unit, 8).await;
        ensure!(status == StatusCode::OK, "submit: {graded}");
        ensure!(
            graded["xp_awarded"] == 2 && graded["coins_awarded"] == 8,
            "awards: {graded}"
        );
        let (status, chat) = h
            .post(&format!("/units/{unit}/chat"), &token, json!({"question": "Why bow?"}))
            .await;
        ensure!(
            status == StatusCode::OK && chat["source_count"].as_u64() > Some(0),
            "chat: {chat}"
        );
        let (_, board) = h.get("/leaderboard", &token).await;
        ensure!(
            board["entries"][0]["learner_id"] == me && board["entries"][0]["total_xp"] == 7,
            "board: {board}"
        );
        let seen = h.learner_responses.load(std::sync::atomic::Ordering::Relaxed);
        Ok(format!(
            "upload in {upload_time:.2?}, {seen} learner responses without answer_index"
        ))
    })
}

fn durability() -> Outcome {
    block_on(async {
        let h = Harness::new();
        let country = h.create_country("Japan", &["Customs"]).await;
        let unit = h.upload(country, "Customs", "Tea", &culture_text("Tea", 1500)).await["unit_id"]
            .as_i64()
            .unwrap();
        let (aiko, token) = h.learner("Aiko", country, None).await;
        h.post(&format!("/units/{unit}/watch"), &token, json!({"seconds": 120}))
            .await;
        h.submit(&token, unit, 10).await;
        h.post("/daily-challenge/claim", &token, json!({})).await;
        let before = h.app.export();
        let vectors: usize = before.vectors.values().map(Vec::len).sum();

        let reopened = h.reopen().map_err(|e| e.to_string())?;
        ensure!(reopened.app.export() == before, "state differs after restart");

        drop(reopened);
        let conn = rusqlite::Connection::open(h.db_path()).map_err(|e| e.to_string())?;
        conn.execute(
            "UPDATE learner_totals SET coins = coins + 1 WHERE learner_id = ?1",
            [aiko],
        )
        .map_err(|e| e.to_string())?;
        drop(conn);
        match h.reopen() {
            Err(DbError::LedgerMismatch(_)) => {}
            Err(e) => return Err(format!("tampered totals gave {e}")),
            Ok(_) => return Err("tampered totals loaded".into()),
        }
        Ok(format!(
            "{vectors} vectors restored bit-exactly, tampered totals refused"
        ))
    })
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("prompt fidelity", prompt_fidelity),
        ("quiz round-trip", quiz_round_trip),
        ("parser totality and recovery", parser_totality),
        ("retrieval oracle", retrieval_oracle),
        ("summary contract", summary_contract),
        ("gamification invariants", gamification_invariants),
        ("proficiency formula", proficiency_formula),
        ("end-to-end pipeline", end_to_end),
        ("durability", durability),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
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
