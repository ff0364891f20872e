//! SQLite persistence.
//!
//! Timestamps are RFC 3339 text with nanoseconds, embeddings are
//! little-endian `f64` blobs and scores are 8-byte reals, so a reload
//! reproduces the in-memory state exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use icls_core::domain::{
    Category, CategoryId, CategoryName, ChunkId, ContentUnit, Country, CountryId, Enrollment, FriendRequestId,
    LearnerId, LearnerProfile, Lesson, LessonId, ProgressState, QuizId, StageError, SummaryId, UnitId, UnitKind,
    UnitStatus,
};
use icls_core::gamification::{Badge, BadgeKind, CoinLedgerEntry, CoinReason, Streak, XpLedgerEntry, XpReason};
use icls_core::proficiency::{EngagementEvent, EngagementKind};
use icls_core::scribe::EmbeddingVector;
use icls_core::treasury::{Summary, SummaryStrategy};
use icls_core::worldwise::{Question, Quiz};
use icls_core::VectorRecord64;
use rusqlite::{params, Connection, OptionalExtension, Row, Transaction};
use thiserror::Error;

use crate::model::{Change, FriendRequest, FriendState, QuizResultRecord, Session, State, Story};

#[derive(Debug, Error)]
pub enum DbError {
    #[error(transparent)]
    Sqlite(#[from] rusqlite::Error),
    #[error("corrupt row in `{table}`: {detail}")]
    Corrupt { table: &'static str, detail: String },
    #[error("ledger check failed on startup: {0}")]
    LedgerMismatch(String),
}

impl DbError {
    pub fn is_constraint(&self) -> bool {
        matches!(
            self,
            DbError::Sqlite(rusqlite::Error::SqliteFailure(e, _))
                if e.code == rusqlite::ErrorCode::ConstraintViolation
        )
    }
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS countries (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE COLLATE NOCASE CHECK (length(trim(name)) > 0)
);
CREATE TABLE IF NOT EXISTS categories (
    id INTEGER PRIMARY KEY,
    country_id INTEGER NOT NULL REFERENCES countries(id) ON DELETE CASCADE,
    name TEXT NOT NULL CHECK (name IN ('Art','Music','Cinema','Literature','Festivals','Fashion',
                                       'Cuisine','Beverage','Customs','Dance','Travel')),
    position INTEGER NOT NULL,
    UNIQUE (country_id, name)
);
CREATE TABLE IF NOT EXISTS lessons (
    id INTEGER PRIMARY KEY,
    category_id INTEGER NOT NULL REFERENCES categories(id) ON DELETE CASCADE,
    title TEXT NOT NULL CHECK (length(trim(title)) > 0),
    position INTEGER NOT NULL,
    UNIQUE (category_id, title)
);
CREATE TABLE IF NOT EXISTS units (
    id INTEGER PRIMARY KEY,
    lesson_id INTEGER NOT NULL REFERENCES lessons(id) ON DELETE CASCADE,
    position INTEGER NOT NULL,
    kind TEXT NOT NULL CHECK (kind IN ('document','video_transcript')),
    source_name TEXT NOT NULL,
    raw_text TEXT NOT NULL CHECK (length(raw_text) > 0),
    status TEXT NOT NULL CHECK (status IN ('draft','published')),
    indexed INTEGER NOT NULL CHECK (indexed IN (0,1)),
    errors TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS summaries (
    id INTEGER PRIMARY KEY,
    unit_id INTEGER NOT NULL UNIQUE REFERENCES units(id) ON DELETE CASCADE,
    text TEXT NOT NULL,
    word_count INTEGER NOT NULL CHECK (word_count >= 200),
    strategy TEXT NOT NULL CHECK (strategy IN ('single_pass','map_reduce')),
    generated_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS quizzes (
    id INTEGER PRIMARY KEY,
    unit_id INTEGER NOT NULL UNIQUE REFERENCES units(id) ON DELETE CASCADE
);
CREATE TABLE IF NOT EXISTS quiz_questions (
    quiz_id INTEGER NOT NULL REFERENCES quizzes(id) ON DELETE CASCADE,
    ordinal INTEGER NOT NULL,
    stem TEXT NOT NULL,
    option1 TEXT NOT NULL,
    option2 TEXT NOT NULL,
    option3 TEXT NOT NULL,
    option4 TEXT NOT NULL,
    answer_index INTEGER NOT NULL CHECK (answer_index BETWEEN 1 AND 4),
    PRIMARY KEY (quiz_id, ordinal)
);
CREATE TABLE IF NOT EXISTS vector_records (
    unit_id INTEGER NOT NULL REFERENCES units(id) ON DELETE CASCADE,
    ordinal INTEGER NOT NULL,
    text TEXT NOT NULL,
    embedding BLOB NOT NULL,
    terms TEXT NOT NULL,
    PRIMARY KEY (unit_id, ordinal)
);
CREATE TABLE IF NOT EXISTS learners (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL CHECK (length(trim(name)) > 0),
    email TEXT NOT NULL UNIQUE,
    password_digest TEXT NOT NULL,
    immersion_country INTEGER NOT NULL REFERENCES countries(id),
    learning_motivation TEXT NOT NULL,
    self_rated_knowledge INTEGER NOT NULL CHECK (self_rated_knowledge BETWEEN 1 AND 5),
    daily_goal_minutes INTEGER NOT NULL CHECK (daily_goal_minutes > 0),
    notifications_opt_in INTEGER NOT NULL CHECK (notifications_opt_in IN (0,1)),
    org_id TEXT,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS learner_totals (
    learner_id INTEGER PRIMARY KEY REFERENCES learners(id),
    xp INTEGER NOT NULL CHECK (xp >= 0),
    coins INTEGER NOT NULL CHECK (coins >= 0),
    streak_length INTEGER NOT NULL CHECK (streak_length >= 0),
    streak_last_date TEXT,
    CHECK ((streak_length >= 1) = (streak_last_date IS NOT NULL))
);
CREATE TABLE IF NOT EXISTS sessions (
    token TEXT PRIMARY KEY,
    learner_id INTEGER NOT NULL REFERENCES learners(id),
    expires_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS enrollments (
    learner_id INTEGER NOT NULL REFERENCES learners(id),
    country_id INTEGER NOT NULL REFERENCES countries(id),
    enrolled_at TEXT NOT NULL,
    PRIMARY KEY (learner_id, country_id)
);
CREATE TABLE IF NOT EXISTS unit_progress (
    learner_id INTEGER NOT NULL,
    country_id INTEGER NOT NULL,
    unit_id INTEGER NOT NULL REFERENCES units(id),
    state TEXT NOT NULL CHECK (state IN ('not_started','watched','summary_tested','practice_tested')),
    PRIMARY KEY (learner_id, unit_id),
    FOREIGN KEY (learner_id, country_id) REFERENCES enrollments(learner_id, country_id)
);
CREATE TABLE IF NOT EXISTS xp_ledger (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    learner_id INTEGER NOT NULL REFERENCES learners(id),
    unit_id INTEGER NOT NULL REFERENCES units(id),
    tier INTEGER NOT NULL CHECK (tier > 0),
    amount INTEGER NOT NULL CHECK (amount > 0),
    at TEXT NOT NULL,
    UNIQUE (learner_id, unit_id, tier)
);
CREATE TABLE IF NOT EXISTS coin_ledger (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    learner_id INTEGER NOT NULL REFERENCES learners(id),
    amount INTEGER NOT NULL CHECK (amount > 0),
    reason TEXT NOT NULL CHECK (reason IN ('daily_challenge','quiz_correct')),
    quiz_id INTEGER REFERENCES quizzes(id),
    correct_count INTEGER,
    challenge_date TEXT,
    at TEXT NOT NULL,
    UNIQUE (learner_id, challenge_date),
    CHECK ((reason = 'daily_challenge') = (challenge_date IS NOT NULL)),
    CHECK ((reason = 'quiz_correct') = (quiz_id IS NOT NULL AND correct_count > 0))
);
CREATE TABLE IF NOT EXISTS badges (
    learner_id INTEGER NOT NULL REFERENCES learners(id),
    kind TEXT NOT NULL CHECK (kind IN ('country','category')),
    subject_id INTEGER NOT NULL,
    awarded_at TEXT NOT NULL,
    PRIMARY KEY (learner_id, kind, subject_id)
);
CREATE TABLE IF NOT EXISTS challenge_completions (
    learner_id INTEGER NOT NULL REFERENCES learners(id),
    date TEXT NOT NULL,
    PRIMARY KEY (learner_id, date)
);
CREATE TABLE IF NOT EXISTS quiz_results (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    learner_id INTEGER NOT NULL REFERENCES learners(id),
    quiz_id INTEGER NOT NULL REFERENCES quizzes(id),
    unit_id INTEGER NOT NULL REFERENCES units(id),
    correct_count INTEGER NOT NULL CHECK (correct_count >= 0),
    total INTEGER NOT NULL CHECK (total >= correct_count),
    score REAL NOT NULL CHECK (score BETWEEN 0 AND 1),
    answers TEXT NOT NULL,
    per_question TEXT NOT NULL,
    submitted_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS engagement_events (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    learner_id INTEGER NOT NULL REFERENCES learners(id),
    country_id INTEGER NOT NULL REFERENCES countries(id),
    kind TEXT NOT NULL CHECK (kind IN ('time_spent','quiz_attempt','quiz_result')),
    seconds INTEGER CHECK (seconds > 0),
    score REAL CHECK (score BETWEEN 0 AND 1),
    at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS friend_requests (
    id INTEGER PRIMARY KEY,
    from_learner INTEGER NOT NULL REFERENCES learners(id),
    to_learner INTEGER NOT NULL REFERENCES learners(id),
    state TEXT NOT NULL CHECK (state IN ('pending','accepted','declined')),
    created_at TEXT NOT NULL,
    CHECK (from_learner <> to_learner)
);
CREATE TABLE IF NOT EXISTS stories (
    id INTEGER PRIMARY KEY,
    country_id INTEGER REFERENCES countries(id) ON DELETE CASCADE,
    title TEXT NOT NULL,
    url TEXT NOT NULL,
    created_at TEXT NOT NULL
);
";

pub fn ts(at: &DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Nanos, true)
}

fn corrupt(table: &'static str, detail: impl Into<String>) -> DbError {
    DbError::Corrupt {
        table,
        detail: detail.into(),
    }
}

fn parse_ts(table: &'static str, text: &str) -> Result<DateTime<Utc>, DbError> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| corrupt(table, format!("timestamp `{text}`: {e}")))
}

fn parse_date(table: &'static str, text: &str) -> Result<NaiveDate, DbError> {
    NaiveDate::from_str(text).map_err(|e| corrupt(table, format!("date `{text}`: {e}")))
}

fn json_text<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn from_json<T: serde::de::DeserializeOwned>(table: &'static str, text: &str) -> Result<T, DbError> {
    serde_json::from_str(text).map_err(|e| corrupt(table, e.to_string()))
}

pub struct Database {
    conn: Connection,
}

impl Database {
    pub fn open(path: &Path) -> Result<Self, DbError> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self, DbError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, DbError> {
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Database { conn })
    }

    /// Writes all changes in one transaction.
    pub fn persist(&mut self, changes: &[Change]) -> Result<(), DbError> {
        let tx = self.conn.transaction()?;
        for change in changes {
            write_change(&tx, change)?;
        }
        tx.commit()?;
        Ok(())
    }

    /// Loads the whole state and re-verifies every ledger against its stored totals.
    pub fn load(&self) -> Result<State, DbError> {
        let mut state = State::default();
        for change in self.replay()? {
            state.apply(change);
        }
        let mut stmt = self
            .conn
            .prepare("SELECT learner_id, xp, coins FROM learner_totals ORDER BY learner_id")?;
        let totals = stmt
            .query_map([], |r| {
                Ok((LearnerId(r.get(0)?), r.get::<_, i64>(1)?, r.get::<_, i64>(2)?))
            })?
            .collect::<Result<Vec<_>, _>>()?;
        if totals.len() != state.ledgers.len() {
            return Err(DbError::LedgerMismatch(format!(
                "{} totals rows for {} learners",
                totals.len(),
                state.ledgers.len()
            )));
        }
        for (learner, xp, coins) in totals {
            let ledger = state
                .ledgers
                .get(&learner)
                .ok_or_else(|| DbError::LedgerMismatch(format!("totals for unknown learner {learner}")))?;
            ledger
                .verify_against(xp as u64, coins as u64)
                .map_err(|e| DbError::LedgerMismatch(e.to_string()))?;
        }
        Ok(state)
    }

    /// Stored rows as the change list that would recreate them, in dependency order.
    fn replay(&self) -> Result<Vec<Change>, DbError> {
        let mut out = Vec::new();
        self.load_catalog(&mut out)?;
        self.load_learners(&mut out)?;
        self.load_activity(&mut out)?;
        Ok(out)
    }

    fn rows<T>(&self, sql: &str, map: impl FnMut(&Row<'_>) -> rusqlite::Result<T>) -> Result<Vec<T>, DbError> {
        let mut stmt = self.conn.prepare(sql)?;
        let rows = stmt.query_map([], map)?.collect::<Result<Vec<_>, _>>()?;
        Ok(rows)
    }

    fn load_catalog(&self, out: &mut Vec<Change>) -> Result<(), DbError> {
        for (id, name) in self.rows("SELECT id, name FROM countries ORDER BY id", |r| {
            Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?))
        })? {
            out.push(Change::AddCountry(Country {
                country_id: CountryId(id),
                name,
                categories: Vec::new(),
            }));
        }
        for (id, country, name) in self.rows(
            "SELECT id, country_id, name FROM categories ORDER BY country_id, position",
            |r| Ok((r.get::<_, i64>(0)?, r.get::<_, i64>(1)?, r.get::<_, String>(2)?)),
        )? {
            out.push(Change::AddCategory(Category {
                category_id: CategoryId(id),
                country_id: CountryId(country),
                name: CategoryName::from_str(&name).map_err(|e| corrupt("categories", e.to_string()))?,
                lessons: Vec::new(),
            }));
        }
        for (id, category, title) in self.rows(
            "SELECT id, category_id, title FROM lessons ORDER BY category_id, position",
            |r| Ok((r.get::<_, i64>(0)?, r.get::<_, i64>(1)?, r.get::<_, String>(2)?)),
        )? {
            out.push(Change::AddLesson(Lesson {
                lesson_id: LessonId(id),
                category_id: CategoryId(category),
                title,
                content_units: Vec::new(),
            }));
        }
        type UnitRow = (i64, i64, String, String, String, String, bool, String);
        let units: Vec<UnitRow> = self.rows(
            "SELECT id, lesson_id, kind, source_name, raw_text, status, indexed, errors
             FROM units ORDER BY lesson_id, position",
            |r| {
                Ok((
                    r.get(0)?,
                    r.get(1)?,
                    r.get(2)?,
                    r.get(3)?,
                    r.get(4)?,
                    r.get(5)?,
                    r.get(6)?,
                    r.get(7)?,
                ))
            },
        )?;
        for (id, lesson, kind, source_name, raw_text, status, indexed, errors) in units {
            out.push(Change::AddUnit(ContentUnit {
                unit_id: UnitId(id),
                lesson_id: LessonId(lesson),
                kind: UnitKind::from_str(&kind).map_err(|e| corrupt("units", e))?,
                source_name,
                raw_text,
                summary_id: None,
                quiz_id: None,
                indexed,
                status: match status.as_str() {
                    "published" => UnitStatus::Published,
                    _ => UnitStatus::Draft,
                },
                errors: from_json::<Vec<StageError>>("units", &errors)?,
            }));
        }
        type SummaryRow = (i64, i64, String, i64, String, String);
        let summaries: Vec<SummaryRow> = self.rows(
            "SELECT id, unit_id, text, word_count, strategy, generated_at FROM summaries ORDER BY id",
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?)),
        )?;
        for (id, unit, text, word_count, strategy, generated_at) in summaries {
            out.push(Change::AddSummary(
                SummaryId(id),
                Summary {
                    unit_id: UnitId(unit),
                    text,
                    word_count: word_count as usize,
                    strategy: if strategy == "map_reduce" {
                        SummaryStrategy::MapReduce
                    } else {
                        SummaryStrategy::SinglePass
                    },
                    generated_at: parse_ts("summaries", &generated_at)?,
                },
            ));
        }
        let quizzes = self.rows("SELECT id, unit_id FROM quizzes ORDER BY id", |r| {
            Ok((r.get::<_, i64>(0)?, r.get::<_, i64>(1)?))
        })?;
        let mut questions: BTreeMap<i64, Vec<Question>> = BTreeMap::new();
        type QuestionRow = (i64, String, [String; 4], u8);
        let question_rows: Vec<QuestionRow> = self.rows(
            "SELECT quiz_id, stem, option1, option2, option3, option4, answer_index
             FROM quiz_questions ORDER BY quiz_id, ordinal",
            |r| {
                Ok((
                    r.get(0)?,
                    r.get(1)?,
                    [r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?],
                    r.get(6)?,
                ))
            },
        )?;
        for (quiz, stem, options, answer_index) in question_rows {
            questions.entry(quiz).or_default().push(Question {
                stem,
                options,
                answer_index,
            });
        }
        for (id, unit) in quizzes {
            out.push(Change::AddQuiz(Quiz {
                quiz_id: QuizId(id),
                unit_id: UnitId(unit),
                questions: questions.remove(&id).unwrap_or_default(),
            }));
        }
        let mut vectors: BTreeMap<UnitId, Vec<VectorRecord64>> = BTreeMap::new();
        type VectorRow = (i64, u32, String, Vec<u8>, String);
        let vector_rows: Vec<VectorRow> = self.rows(
            "SELECT unit_id, ordinal, text, embedding, terms FROM vector_records ORDER BY unit_id, ordinal",
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?)),
        )?;
        for (unit, ordinal, text, embedding, terms) in vector_rows {
            let unit_id = UnitId(unit);
            vectors.entry(unit_id).or_default().push(VectorRecord64 {
                chunk_id: ChunkId { unit_id, ordinal },
                unit_id,
                text,
                embedding: EmbeddingVector::from_le_bytes(&embedding)
                    .ok_or_else(|| corrupt("vector_records", "embedding length"))?,
                term_set: from_json::<BTreeSet<String>>("vector_records", &terms)?,
            });
        }
        for (unit, records) in vectors {
            out.push(Change::ReplaceVectors(unit, records));
        }
        let stories: Vec<(i64, Option<i64>, String, String, String)> = self.rows(
            "SELECT id, country_id, title, url, created_at FROM stories ORDER BY id",
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?)),
        )?;
        for (id, country, title, url, created_at) in stories {
            out.push(Change::AddStory(Story {
                story_id: id,
                country_id: country.map(CountryId),
                title,
                url,
                created_at: parse_ts("stories", &created_at)?,
            }));
        }
        Ok(())
    }

    fn load_learners(&self, out: &mut Vec<Change>) -> Result<(), DbError> {
        type LearnerRow = (
            i64,
            String,
            String,
            String,
            i64,
            String,
            i64,
            i64,
            bool,
            Option<String>,
            String,
        );
        let learners: Vec<LearnerRow> = self.rows(
            "SELECT id, name, email, password_digest, immersion_country, learning_motivation,
                    self_rated_knowledge, daily_goal_minutes, notifications_opt_in, org_id, created_at
             FROM learners ORDER BY id",
            |r| {
                Ok((
                    r.get(0)?,
                    r.get(1)?,
                    r.get(2)?,
                    r.get(3)?,
                    r.get(4)?,
                    r.get(5)?,
                    r.get(6)?,
                    r.get(7)?,
                    r.get(8)?,
                    r.get(9)?,
                    r.get(10)?,
                ))
            },
        )?;
        for (id, name, email, digest, country, motivation, rating, goal, opt_in, org_id, created_at) in learners {
            out.push(Change::AddLearner(LearnerProfile {
                learner_id: LearnerId(id),
                name,
                email,
                password_digest: digest,
                immersion_country: CountryId(country),
                learning_motivation: motivation,
                self_rated_knowledge: rating,
                daily_goal_minutes: goal,
                notifications_opt_in: opt_in,
                org_id,
                created_at: parse_ts("learners", &created_at)?,
            }));
        }
        let sessions: Vec<(String, i64, String)> = self.rows(
            "SELECT token, learner_id, expires_at FROM sessions ORDER BY token",
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)),
        )?;
        for (token, learner, expires_at) in sessions {
            out.push(Change::AddSession(Session {
                token,
                learner_id: LearnerId(learner),
                expires_at: parse_ts("sessions", &expires_at)?,
            }));
        }
        let mut progress: BTreeMap<(i64, i64), BTreeMap<UnitId, ProgressState>> = BTreeMap::new();
        for (learner, country, unit, state) in self.rows(
            "SELECT learner_id, country_id, unit_id, state FROM unit_progress",
            |r| {
                Ok((
                    r.get::<_, i64>(0)?,
                    r.get::<_, i64>(1)?,
                    r.get::<_, i64>(2)?,
                    r.get::<_, String>(3)?,
                ))
            },
        )? {
            let state = ProgressState::from_str(&state).map_err(|e| corrupt("unit_progress", e))?;
            progress
                .entry((learner, country))
                .or_default()
                .insert(UnitId(unit), state);
        }
        for (learner, country, enrolled_at) in self.rows(
            "SELECT learner_id, country_id, enrolled_at FROM enrollments ORDER BY learner_id, country_id",
            |r| Ok((r.get::<_, i64>(0)?, r.get::<_, i64>(1)?, r.get::<_, String>(2)?)),
        )? {
            out.push(Change::AddEnrollment(Enrollment {
                learner_id: LearnerId(learner),
                country_id: CountryId(country),
                enrolled_at: parse_ts("enrollments", &enrolled_at)?,
                unit_progress: progress.remove(&(learner, country)).unwrap_or_default(),
            }));
        }
        for (learner, length, last) in self.rows(
            "SELECT learner_id, streak_length, streak_last_date FROM learner_totals ORDER BY learner_id",
            |r| Ok((r.get::<_, i64>(0)?, r.get::<_, u32>(1)?, r.get::<_, Option<String>>(2)?)),
        )? {
            out.push(Change::SetStreak(
                LearnerId(learner),
                Streak {
                    current_length: length,
                    last_active_utc_date: last.map(|d| parse_date("learner_totals", &d)).transpose()?,
                },
            ));
        }
        Ok(())
    }

    fn load_activity(&self, out: &mut Vec<Change>) -> Result<(), DbError> {
        for (learner, unit, tier, amount, at) in self.rows(
            "SELECT learner_id, unit_id, tier, amount, at FROM xp_ledger ORDER BY id",
            |r| {
                Ok((
                    r.get::<_, i64>(0)?,
                    r.get::<_, i64>(1)?,
                    r.get::<_, u32>(2)?,
                    r.get::<_, u32>(3)?,
                    r.get::<_, String>(4)?,
                ))
            },
        )? {
            out.push(Change::AddXp(XpLedgerEntry {
                learner_id: LearnerId(learner),
                amount,
                reason: XpReason::LessonTier {
                    unit_id: UnitId(unit),
                    tier,
                },
                at: parse_ts("xp_ledger", &at)?,
            }));
        }
        type CoinRow = (i64, u32, String, Option<i64>, Option<u32>, Option<String>, String);
        let coins: Vec<CoinRow> = self.rows(
            "SELECT learner_id, amount, reason, quiz_id, correct_count, challenge_date, at
             FROM coin_ledger ORDER BY id",
            |r| {
                Ok((
                    r.get(0)?,
                    r.get(1)?,
                    r.get(2)?,
                    r.get(3)?,
                    r.get(4)?,
                    r.get(5)?,
                    r.get(6)?,
                ))
            },
        )?;
        for (learner, amount, reason, quiz, count, date, at) in coins {
            let reason = match (reason.as_str(), quiz, count, date) {
                ("quiz_correct", Some(quiz), Some(count), _) => CoinReason::QuizCorrect {
                    quiz_id: QuizId(quiz),
                    count,
                },
                ("daily_challenge", _, _, Some(date)) => CoinReason::DailyChallenge {
                    date: parse_date("coin_ledger", &date)?,
                },
                _ => return Err(corrupt("coin_ledger", format!("reason `{reason}` without its fields"))),
            };
            out.push(Change::AddCoins(CoinLedgerEntry {
                learner_id: LearnerId(learner),
                amount,
                reason,
                at: parse_ts("coin_ledger", &at)?,
            }));
        }
        for (learner, kind, subject, awarded_at) in self.rows(
            "SELECT learner_id, kind, subject_id, awarded_at FROM badges ORDER BY rowid",
            |r| {
                Ok((
                    r.get::<_, i64>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, i64>(2)?,
                    r.get::<_, String>(3)?,
                ))
            },
        )? {
            out.push(Change::AddBadge(Badge {
                learner_id: LearnerId(learner),
                kind: if kind == "country" {
                    BadgeKind::Country(CountryId(subject))
                } else {
                    BadgeKind::Category(CategoryId(subject))
                },
                awarded_at: parse_ts("badges", &awarded_at)?,
            }));
        }
        for (learner, date) in self.rows(
            "SELECT learner_id, date FROM challenge_completions ORDER BY learner_id, date",
            |r| Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?)),
        )? {
            out.push(Change::CompleteChallenge(
                LearnerId(learner),
                parse_date("challenge_completions", &date)?,
            ));
        }
        type ResultRow = (i64, i64, i64, usize, usize, f64, String, String, String);
        let results: Vec<ResultRow> = self.rows(
            "SELECT learner_id, quiz_id, unit_id, correct_count, total, score, answers, per_question, submitted_at
             FROM quiz_results ORDER BY id",
            |r| {
                Ok((
                    r.get(0)?,
                    r.get(1)?,
                    r.get(2)?,
                    r.get(3)?,
                    r.get(4)?,
                    r.get(5)?,
                    r.get(6)?,
                    r.get(7)?,
                    r.get(8)?,
                ))
            },
        )?;
        for (learner, quiz, unit, correct, total, score, answers, per_question, at) in results {
            out.push(Change::AddQuizResult(QuizResultRecord {
                learner_id: LearnerId(learner),
                quiz_id: QuizId(quiz),
                unit_id: UnitId(unit),
                correct_count: correct,
                total,
                score,
                answers: from_json("quiz_results", &answers)?,
                per_question: from_json("quiz_results", &per_question)?,
                submitted_at: parse_ts("quiz_results", &at)?,
            }));
        }
        type EventRow = (i64, i64, String, Option<u64>, Option<f64>, String);
        let events: Vec<EventRow> = self.rows(
            "SELECT learner_id, country_id, kind, seconds, score, at FROM engagement_events ORDER BY id",
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?)),
        )?;
        for (learner, country, kind, seconds, score, at) in events {
            let kind = match (kind.as_str(), seconds, score) {
                ("time_spent", Some(seconds), _) => EngagementKind::TimeSpent { seconds },
                ("quiz_attempt", _, _) => EngagementKind::QuizAttempt,
                ("quiz_result", _, Some(score)) => EngagementKind::QuizResult { score },
                _ => {
                    return Err(corrupt(
                        "engagement_events",
                        format!("kind `{kind}` without its fields"),
                    ))
                }
            };
            out.push(Change::AddEvent(EngagementEvent {
                learner_id: LearnerId(learner),
                country_id: CountryId(country),
                kind,
                at: parse_ts("engagement_events", &at)?,
            }));
        }
        type RequestRow = (i64, i64, i64, String, String);
        let requests: Vec<RequestRow> = self.rows(
            "SELECT id, from_learner, to_learner, state, created_at FROM friend_requests ORDER BY id",
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?)),
        )?;
        for (id, from, to, state, created_at) in requests {
            out.push(Change::AddFriendRequest(FriendRequest {
                request_id: FriendRequestId(id),
                from_learner: LearnerId(from),
                to_learner: LearnerId(to),
                state: FriendState::parse(&state).ok_or_else(|| corrupt("friend_requests", state.clone()))?,
                created_at: parse_ts("friend_requests", &created_at)?,
            }));
        }
        Ok(())
    }
}

fn write_change(tx: &Transaction<'_>, change: &Change) -> Result<(), DbError> {
    match change {
        Change::AddLearner(p) => {
            tx.execute(
                "INSERT INTO learners (id, name, email, password_digest, immersion_country, learning_motivation,
                    self_rated_knowledge, daily_goal_minutes, notifications_opt_in, org_id, created_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11)",
                params![
                    p.learner_id.0,
                    p.name,
                    p.email,
                    p.password_digest,
                    p.immersion_country.0,
                    p.learning_motivation,
                    p.self_rated_knowledge,
                    p.daily_goal_minutes,
                    p.notifications_opt_in,
                    p.org_id,
                    ts(&p.created_at)
                ],
            )?;
            tx.execute(
                "INSERT INTO learner_totals (learner_id, xp, coins, streak_length, streak_last_date)
                 VALUES (?1, 0, 0, 0, NULL)",
                params![p.learner_id.0],
            )?;
        }
        Change::AddSession(s) => {
            tx.execute(
                "INSERT INTO sessions (token, learner_id, expires_at) VALUES (?1, ?2, ?3)",
                params![s.token, s.learner_id.0, ts(&s.expires_at)],
            )?;
        }
        Change::RemoveSession(token) => {
            tx.execute("DELETE FROM sessions WHERE token = ?1", params![token])?;
        }
        Change::AddCountry(c) => {
            tx.execute(
                "INSERT INTO countries (id, name) VALUES (?1, ?2)",
                params![c.country_id.0, c.name],
            )?;
        }
        Change::AddCategory(c) => {
            tx.execute(
                "INSERT INTO categories (id, country_id, name, position)
                 VALUES (?1, ?2, ?3, (SELECT COUNT(*) FROM categories WHERE country_id = ?2))",
                params![c.category_id.0, c.country_id.0, c.name.as_str()],
            )?;
        }
        Change::AddLesson(l) => {
            tx.execute(
                "INSERT INTO lessons (id, category_id, title, position)
                 VALUES (?1, ?2, ?3, (SELECT COUNT(*) FROM lessons WHERE category_id = ?2))",
                params![l.lesson_id.0, l.category_id.0, l.title],
            )?;
        }
        Change::AddUnit(u) => {
            tx.execute(
                "INSERT INTO units (id, lesson_id, position, kind, source_name, raw_text, status, indexed, errors)
                 VALUES (?1, ?2, (SELECT COUNT(*) FROM units WHERE lesson_id = ?2), ?3, ?4, ?5, ?6, ?7, ?8)",
                params![
                    u.unit_id.0,
                    u.lesson_id.0,
                    u.kind.as_str(),
                    u.source_name,
                    u.raw_text,
                    status_str(u.status),
                    u.indexed,
                    json_text(&u.errors)
                ],
            )?;
        }
        Change::UpdateUnit(u) => {
            let updated = tx.execute(
                "UPDATE units SET status = ?2, indexed = ?3, errors = ?4 WHERE id = ?1",
                params![u.unit_id.0, status_str(u.status), u.indexed, json_text(&u.errors)],
            )?;
            if updated != 1 {
                return Err(DbError::Sqlite(rusqlite::Error::QueryReturnedNoRows));
            }
        }
        Change::RemoveCountry(id) => {
            tx.execute("DELETE FROM countries WHERE id = ?1", params![id.0])?;
        }
        Change::AddSummary(id, s) => {
            tx.execute(
                "INSERT INTO summaries (id, unit_id, text, word_count, strategy, generated_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![
                    id.0,
                    s.unit_id.0,
                    s.text,
                    s.word_count as i64,
                    s.strategy.as_str(),
                    ts(&s.generated_at)
                ],
            )?;
        }
        Change::AddQuiz(q) => {
            tx.execute(
                "INSERT INTO quizzes (id, unit_id) VALUES (?1, ?2)",
                params![q.quiz_id.0, q.unit_id.0],
            )?;
            let mut stmt = tx.prepare(
                "INSERT INTO quiz_questions (quiz_id, ordinal, stem, option1, option2, option3, option4, answer_index)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            )?;
            for (i, question) in q.questions.iter().enumerate() {
                let [a, b, c, d] = &question.options;
                stmt.execute(params![
                    q.quiz_id.0,
                    i as i64,
                    question.stem,
                    a,
                    b,
                    c,
                    d,
                    question.answer_index
                ])?;
            }
        }
        Change::ReplaceVectors(unit, records) => {
            tx.execute("DELETE FROM vector_records WHERE unit_id = ?1", params![unit.0])?;
            let mut stmt = tx.prepare(
                "INSERT INTO vector_records (unit_id, ordinal, text, embedding, terms) VALUES (?1, ?2, ?3, ?4, ?5)",
            )?;
            for r in records {
                stmt.execute(params![
                    unit.0,
                    r.chunk_id.ordinal,
                    r.text,
                    r.embedding.to_le_bytes(),
                    json_text(&r.term_set)
                ])?;
            }
        }
        Change::AddEnrollment(e) => {
            tx.execute(
                "INSERT INTO enrollments (learner_id, country_id, enrolled_at) VALUES (?1, ?2, ?3)",
                params![e.learner_id.0, e.country_id.0, ts(&e.enrolled_at)],
            )?;
            for (unit, state) in &e.unit_progress {
                set_progress(tx, e.learner_id, e.country_id, *unit, *state)?;
            }
        }
        Change::SetProgress {
            learner_id,
            country_id,
            unit_id,
            state,
        } => set_progress(tx, *learner_id, *country_id, *unit_id, *state)?,
        Change::AddXp(e) => {
            let XpReason::LessonTier { unit_id, tier } = e.reason;
            tx.execute(
                "INSERT INTO xp_ledger (learner_id, unit_id, tier, amount, at) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![e.learner_id.0, unit_id.0, tier, e.amount, ts(&e.at)],
            )?;
            tx.execute(
                "UPDATE learner_totals SET xp = xp + ?2 WHERE learner_id = ?1",
                params![e.learner_id.0, e.amount],
            )?;
        }
        Change::AddCoins(e) => {
            let (reason, quiz, count, date) = match e.reason {
                CoinReason::QuizCorrect { quiz_id, count } => ("quiz_correct", Some(quiz_id.0), Some(count), None),
                CoinReason::DailyChallenge { date } => ("daily_challenge", None, None, Some(date.to_string())),
            };
            tx.execute(
                "INSERT INTO coin_ledger (learner_id, amount, reason, quiz_id, correct_count, challenge_date, at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                params![e.learner_id.0, e.amount, reason, quiz, count, date, ts(&e.at)],
            )?;
            tx.execute(
                "UPDATE learner_totals SET coins = coins + ?2 WHERE learner_id = ?1",
                params![e.learner_id.0, e.amount],
            )?;
        }
        Change::AddBadge(b) => {
            let (kind, subject) = match b.kind {
                BadgeKind::Country(c) => ("country", c.0),
                BadgeKind::Category(c) => ("category", c.0),
            };
            tx.execute(
                "INSERT INTO badges (learner_id, kind, subject_id, awarded_at) VALUES (?1, ?2, ?3, ?4)",
                params![b.learner_id.0, kind, subject, ts(&b.awarded_at)],
            )?;
        }
        Change::SetStreak(learner, streak) => {
            tx.execute(
                "UPDATE learner_totals SET streak_length = ?2, streak_last_date = ?3 WHERE learner_id = ?1",
                params![
                    learner.0,
                    streak.current_length,
                    streak.last_active_utc_date.map(|d| d.to_string())
                ],
            )?;
        }
        Change::CompleteChallenge(learner, date) => {
            tx.execute(
                "INSERT INTO challenge_completions (learner_id, date) VALUES (?1, ?2)",
                params![learner.0, date.to_string()],
            )?;
        }
        Change::AddQuizResult(r) => {
            tx.execute(
                "INSERT INTO quiz_results (learner_id, quiz_id, unit_id, correct_count, total, score, answers,
                    per_question, submitted_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
                params![
                    r.learner_id.0,
                    r.quiz_id.0,
                    r.unit_id.0,
                    r.correct_count as i64,
                    r.total as i64,
                    r.score,
                    json_text(&r.answers),
                    json_text(&r.per_question),
                    ts(&r.submitted_at)
                ],
            )?;
        }
        Change::AddEvent(e) => {
            let (kind, seconds, score) = match e.kind {
                EngagementKind::TimeSpent { seconds } => ("time_spent", Some(seconds as i64), None),
                EngagementKind::QuizAttempt => ("quiz_attempt", None, None),
                EngagementKind::QuizResult { score } => ("quiz_result", None, Some(score)),
            };
            tx.execute(
                "INSERT INTO engagement_events (learner_id, country_id, kind, seconds, score, at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![e.learner_id.0, e.country_id.0, kind, seconds, score, ts(&e.at)],
            )?;
        }
        Change::AddFriendRequest(r) => {
            tx.execute(
                "INSERT INTO friend_requests (id, from_learner, to_learner, state, created_at)
                 VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    r.request_id.0,
                    r.from_learner.0,
                    r.to_learner.0,
                    r.state.as_str(),
                    ts(&r.created_at)
                ],
            )?;
        }
        Change::SetFriendState(id, state) => {
            tx.execute(
                "UPDATE friend_requests SET state = ?2 WHERE id = ?1",
                params![id.0, state.as_str()],
            )?;
        }
        Change::AddStory(s) => {
            tx.execute(
                "INSERT INTO stories (id, country_id, title, url, created_at) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![s.story_id, s.country_id.map(|c| c.0), s.title, s.url, ts(&s.created_at)],
            )?;
        }
    }
    Ok(())
}

fn set_progress(
    tx: &Transaction<'_>,
    learner: LearnerId,
    country: CountryId,
    unit: UnitId,
    state: ProgressState,
) -> Result<(), DbError> {
    tx.execute(
        "INSERT INTO unit_progress (learner_id, country_id, unit_id, state) VALUES (?1, ?2, ?3, ?4)
         ON CONFLICT (learner_id, unit_id) DO UPDATE SET state = excluded.state",
        params![learner.0, country.0, unit.0, state.as_str()],
    )?;
    Ok(())
}

fn status_str(status: UnitStatus) -> &'static str {
    match status {
        UnitStatus::Draft => "draft",
        UnitStatus::Published => "published",
    }
}

/// Ledger totals as stored, for startup checks and tests.
pub fn stored_totals(db: &Database, learner: LearnerId) -> Result<Option<(i64, i64)>, DbError> {
    Ok(db
        .conn
        .query_row(
            "SELECT xp, coins FROM learner_totals WHERE learner_id = ?1",
            params![learner.0],
            |r| Ok((r.get(0)?, r.get(1)?)),
        )
        .optional()?)
}

/// Rebuilt ledger for one learner straight from the ledger tables.
pub fn ledger_sums(db: &Database, learner: LearnerId) -> Result<(i64, i64), DbError> {
    let xp: i64 = db.conn.query_row(
        "SELECT COALESCE(SUM(amount), 0) FROM xp_ledger WHERE learner_id = ?1",
        params![learner.0],
        |r| r.get(0),
    )?;
    let coins: i64 = db.conn.query_row(
        "SELECT COALESCE(SUM(amount), 0) FROM coin_ledger WHERE learner_id = ?1",
        params![learner.0],
        |r| r.get(0),
    )?;
    Ok((xp, coins))
}
