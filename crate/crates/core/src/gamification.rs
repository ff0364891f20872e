//! XP and coin ledgers, badges, login streaks, daily challenges and leaderboards.
//!
//! Every mutation is split into a `plan_*` step that validates and returns the
//! record to be written, and an `apply_*` step that folds the record into the
//! ledger. Callers that persist state write the planned records first and
//! apply them only after the write commits.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Catalog, CategoryId, CountryId, LearnerId, ProgressState, QuizId, UnitId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GamificationRules {
    pub watched_xp: u32,
    pub summary_tested_xp: u32,
    pub practice_tested_xp: u32,
    pub coins_per_correct: u32,
    pub daily_challenge_coins: u32,
    pub mastery_threshold: f64,
}

impl Default for GamificationRules {
    fn default() -> Self {
        GamificationRules {
            watched_xp: 5,
            summary_tested_xp: 7,
            practice_tested_xp: 12,
            coins_per_correct: 1,
            daily_challenge_coins: 10,
            mastery_threshold: 0.8,
        }
    }
}

impl GamificationRules {
    /// Cumulative XP a unit is worth at `state`.
    pub fn tier(&self, state: ProgressState) -> u32 {
        match state {
            ProgressState::NotStarted => 0,
            ProgressState::Watched => self.watched_xp,
            ProgressState::SummaryTested => self.summary_tested_xp,
            ProgressState::PracticeTested => self.practice_tested_xp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GamificationError {
    #[error("unit {unit} already holds the {state} award")]
    DuplicateAward { unit: UnitId, state: ProgressState },
    #[error("no XP tier for {0}")]
    NoTier(ProgressState),
    #[error("daily challenge for {0} already claimed")]
    AlreadyClaimed(NaiveDate),
    #[error("daily challenge for {0} not completed")]
    ChallengeNotCompleted(NaiveDate),
    #[error("unknown learner {0}")]
    UnknownLearner(LearnerId),
    #[error("learner {0} already has a ledger")]
    LearnerExists(LearnerId),
    #[error("unknown leaderboard scope `{0}`")]
    UnknownScope(String),
    #[error("leaderboard scope `{0}` needs a subject")]
    MissingScopeSubject(String),
    #[error("ledger for learner {learner}: {detail}")]
    Inconsistent { learner: LearnerId, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XpReason {
    LessonTier { unit_id: UnitId, tier: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XpLedgerEntry {
    pub learner_id: LearnerId,
    pub amount: u32,
    pub reason: XpReason,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoinReason {
    DailyChallenge { date: NaiveDate },
    QuizCorrect { quiz_id: QuizId, count: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinLedgerEntry {
    pub learner_id: LearnerId,
    pub amount: u32,
    pub reason: CoinReason,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum BadgeKind {
    Country(CountryId),
    Category(CategoryId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Badge {
    pub learner_id: LearnerId,
    pub kind: BadgeKind,
    pub awarded_at: DateTime<Utc>,
}

/// Consecutive UTC days with at least one login.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Streak {
    pub current_length: u32,
    pub last_active_utc_date: Option<NaiveDate>,
}

impl Streak {
    /// The streak after a login on `date`. Dates before the last login change nothing.
    pub fn after_login(self, date: NaiveDate) -> Streak {
        let current_length = match self.last_active_utc_date {
            None => 1,
            Some(last) if date <= last => return self,
            Some(last) if last.succ_opt() == Some(date) => self.current_length + 1,
            Some(_) => 1,
        };
        Streak {
            current_length,
            last_active_utc_date: Some(date),
        }
    }
}

/// One learner's gamification state with cached totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerLedger {
    pub learner_id: LearnerId,
    pub created_at: DateTime<Utc>,
    xp: Vec<XpLedgerEntry>,
    coins: Vec<CoinLedgerEntry>,
    badges: Vec<Badge>,
    streak: Streak,
    challenge_completions: BTreeSet<NaiveDate>,
    challenge_claims: BTreeSet<NaiveDate>,
    unit_xp: BTreeMap<UnitId, u32>,
    total_xp: u64,
    total_coins: u64,
}

impl LearnerLedger {
    pub fn new(learner_id: LearnerId, created_at: DateTime<Utc>) -> Self {
        LearnerLedger {
            learner_id,
            created_at,
            xp: Vec::new(),
            coins: Vec::new(),
            badges: Vec::new(),
            streak: Streak::default(),
            challenge_completions: BTreeSet::new(),
            challenge_claims: BTreeSet::new(),
            unit_xp: BTreeMap::new(),
            total_xp: 0,
            total_coins: 0,
        }
    }

    /// Rebuilds a ledger from stored records, re-deriving every cached total.
    pub fn restore(
        learner_id: LearnerId,
        created_at: DateTime<Utc>,
        xp: Vec<XpLedgerEntry>,
        coins: Vec<CoinLedgerEntry>,
        badges: Vec<Badge>,
        streak: Streak,
        challenge_completions: BTreeSet<NaiveDate>,
    ) -> Self {
        let mut ledger = LearnerLedger::new(learner_id, created_at);
        ledger.streak = streak;
        ledger.challenge_completions = challenge_completions;
        for entry in xp {
            ledger.apply_xp(entry);
        }
        for entry in coins {
            ledger.apply_coins(entry);
        }
        ledger.badges = badges;
        ledger
    }

    pub fn xp_entries(&self) -> &[XpLedgerEntry] {
        &self.xp
    }

    pub fn coin_entries(&self) -> &[CoinLedgerEntry] {
        &self.coins
    }

    pub fn badges(&self) -> &[Badge] {
        &self.badges
    }

    pub fn has_badge(&self, kind: BadgeKind) -> bool {
        self.badges.iter().any(|b| b.kind == kind)
    }

    pub fn streak(&self) -> Streak {
        self.streak
    }

    pub fn total_xp(&self) -> u64 {
        self.total_xp
    }

    pub fn total_coins(&self) -> u64 {
        self.total_coins
    }

    pub fn unit_xp(&self, unit: UnitId) -> u32 {
        self.unit_xp.get(&unit).copied().unwrap_or(0)
    }

    pub fn challenge_completed(&self, date: NaiveDate) -> bool {
        self.challenge_completions.contains(&date)
    }

    pub fn challenge_claimed(&self, date: NaiveDate) -> bool {
        self.challenge_claims.contains(&date)
    }

    pub fn challenge_completions(&self) -> &BTreeSet<NaiveDate> {
        &self.challenge_completions
    }

    /// When the current XP total was reached: the last XP award, else sign-up.
    pub fn xp_reached_at(&self) -> DateTime<Utc> {
        self.xp.last().map_or(self.created_at, |e| e.at)
    }

    pub fn standing(&self) -> Standing {
        Standing {
            learner_id: self.learner_id,
            total_xp: self.total_xp,
            reached_at: self.xp_reached_at(),
        }
    }

    /// Checks the cached totals against the ledger sums.
    pub fn verify(&self) -> Result<(), GamificationError> {
        let xp: u64 = self.xp.iter().map(|e| u64::from(e.amount)).sum();
        let coins: u64 = self.coins.iter().map(|e| u64::from(e.amount)).sum();
        if xp != self.total_xp || coins != self.total_coins {
            return Err(self.inconsistent(format!(
                "cached totals xp={} coins={} but ledgers sum to xp={xp} coins={coins}",
                self.total_xp, self.total_coins
            )));
        }
        if let Some((unit, total)) = self.unit_xp.iter().find(|(_, t)| ![0, 5, 7, 12].contains(*t)) {
            return Err(self.inconsistent(format!("unit {unit} holds {total} XP")));
        }
        Ok(())
    }

    /// Checks stored totals (e.g. a persisted summary row) against the ledger sums.
    pub fn verify_against(&self, total_xp: u64, total_coins: u64) -> Result<(), GamificationError> {
        self.verify()?;
        if total_xp != self.total_xp || total_coins != self.total_coins {
            return Err(self.inconsistent(format!(
                "stored totals xp={total_xp} coins={total_coins} but ledgers sum to xp={} coins={}",
                self.total_xp, self.total_coins
            )));
        }
        Ok(())
    }

    fn inconsistent(&self, detail: String) -> GamificationError {
        GamificationError::Inconsistent {
            learner: self.learner_id,
            detail,
        }
    }

    pub fn plan_lesson_xp(
        &self,
        rules: &GamificationRules,
        unit: UnitId,
        reached: ProgressState,
        at: DateTime<Utc>,
    ) -> Result<XpLedgerEntry, GamificationError> {
        if reached == ProgressState::NotStarted {
            return Err(GamificationError::NoTier(reached));
        }
        let tier = rules.tier(reached);
        let current = self.unit_xp(unit);
        if tier <= current {
            return Err(GamificationError::DuplicateAward { unit, state: reached });
        }
        Ok(XpLedgerEntry {
            learner_id: self.learner_id,
            amount: tier - current,
            reason: XpReason::LessonTier { unit_id: unit, tier },
            at,
        })
    }

    pub fn apply_xp(&mut self, entry: XpLedgerEntry) {
        let XpReason::LessonTier { unit_id, tier } = entry.reason;
        self.unit_xp.insert(unit_id, tier);
        self.total_xp += u64::from(entry.amount);
        self.xp.push(entry);
    }

    /// Returns the XP delta.
    pub fn award_lesson_xp(
        &mut self,
        rules: &GamificationRules,
        unit: UnitId,
        reached: ProgressState,
        at: DateTime<Utc>,
    ) -> Result<u32, GamificationError> {
        let entry = self.plan_lesson_xp(rules, unit, reached, at)?;
        let amount = entry.amount;
        self.apply_xp(entry);
        Ok(amount)
    }

    /// `None` when nothing was answered correctly.
    pub fn plan_quiz_coins(
        &self,
        rules: &GamificationRules,
        quiz_id: QuizId,
        correct: u32,
        at: DateTime<Utc>,
    ) -> Option<CoinLedgerEntry> {
        let amount = correct.checked_mul(rules.coins_per_correct)?;
        (amount > 0).then_some(CoinLedgerEntry {
            learner_id: self.learner_id,
            amount,
            reason: CoinReason::QuizCorrect {
                quiz_id,
                count: correct,
            },
            at,
        })
    }

    pub fn apply_coins(&mut self, entry: CoinLedgerEntry) {
        if let CoinReason::DailyChallenge { date } = entry.reason {
            self.challenge_claims.insert(date);
        }
        self.total_coins += u64::from(entry.amount);
        self.coins.push(entry);
    }

    /// Returns the coin delta.
    pub fn award_quiz_coins(
        &mut self,
        rules: &GamificationRules,
        quiz_id: QuizId,
        correct: u32,
        at: DateTime<Utc>,
    ) -> u32 {
        match self.plan_quiz_coins(rules, quiz_id, correct, at) {
            Some(entry) => {
                let amount = entry.amount;
                self.apply_coins(entry);
                amount
            }
            None => 0,
        }
    }

    pub fn plan_login(&self, at: DateTime<Utc>) -> Streak {
        self.streak.after_login(at.date_naive())
    }

    pub fn apply_streak(&mut self, streak: Streak) {
        self.streak = streak;
    }

    pub fn record_login(&mut self, at: DateTime<Utc>) -> Streak {
        self.streak = self.plan_login(at);
        self.streak
    }

    pub fn record_challenge_completion(&mut self, date: NaiveDate) -> bool {
        self.challenge_completions.insert(date)
    }

    pub fn plan_daily_claim(
        &self,
        rules: &GamificationRules,
        date: NaiveDate,
        at: DateTime<Utc>,
    ) -> Result<CoinLedgerEntry, GamificationError> {
        if self.challenge_claimed(date) {
            return Err(GamificationError::AlreadyClaimed(date));
        }
        if !self.challenge_completed(date) {
            return Err(GamificationError::ChallengeNotCompleted(date));
        }
        Ok(CoinLedgerEntry {
            learner_id: self.learner_id,
            amount: rules.daily_challenge_coins,
            reason: CoinReason::DailyChallenge { date },
            at,
        })
    }

    /// Returns the coin delta.
    pub fn claim_daily_challenge(
        &mut self,
        rules: &GamificationRules,
        date: NaiveDate,
        at: DateTime<Utc>,
    ) -> Result<u32, GamificationError> {
        let entry = self.plan_daily_claim(rules, date, at)?;
        let amount = entry.amount;
        self.apply_coins(entry);
        Ok(amount)
    }

    /// Badges earned but not yet held, categories before countries.
    ///
    /// A category badge needs every published lesson of the category finished
    /// up to the summary test and a mean quiz score in the category at or
    /// above the mastery threshold. A country badge needs a badge for each of
    /// its categories.
    pub fn plan_badges(
        &self,
        rules: &GamificationRules,
        catalog: &Catalog,
        progress: impl Fn(UnitId) -> ProgressState,
        category_means: &BTreeMap<CategoryId, f64>,
        at: DateTime<Utc>,
    ) -> Vec<Badge> {
        let mut held: BTreeSet<BadgeKind> = self.badges.iter().map(|b| b.kind).collect();
        let mut fresh = Vec::new();
        let mut award = |kind: BadgeKind, held: &mut BTreeSet<BadgeKind>| {
            if held.insert(kind) {
                fresh.push(Badge {
                    learner_id: self.learner_id,
                    kind,
                    awarded_at: at,
                });
            }
        };
        for category in catalog.categories.values() {
            let lessons = catalog.published_lessons_of_category(category.category_id);
            let mastered = category_means
                .get(&category.category_id)
                .is_some_and(|m| *m >= rules.mastery_threshold);
            if mastered && !lessons.is_empty() && lessons.iter().all(|l| catalog.lesson_finished(*l, &progress)) {
                award(BadgeKind::Category(category.category_id), &mut held);
            }
        }
        for country in catalog.countries.values() {
            let complete = !country.categories.is_empty()
                && country
                    .categories
                    .iter()
                    .all(|c| held.contains(&BadgeKind::Category(*c)));
            if complete {
                award(BadgeKind::Country(country.country_id), &mut held);
            }
        }
        fresh
    }

    pub fn apply_badge(&mut self, badge: Badge) {
        if !self.has_badge(badge.kind) {
            self.badges.push(badge);
        }
    }

    pub fn evaluate_badges(
        &mut self,
        rules: &GamificationRules,
        catalog: &Catalog,
        progress: impl Fn(UnitId) -> ProgressState,
        category_means: &BTreeMap<CategoryId, f64>,
        at: DateTime<Utc>,
    ) -> Vec<Badge> {
        let fresh = self.plan_badges(rules, catalog, progress, category_means, at);
        for badge in &fresh {
            self.apply_badge(badge.clone());
        }
        fresh
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope", content = "subject", rename_all = "snake_case")]
pub enum LeaderboardScope {
    Global,
    Country(CountryId),
    Friends(LearnerId),
    Organization(String),
}

impl LeaderboardScope {
    /// Parses the `scope` / `subject` query pair. Friends default to `me`.
    pub fn parse(scope: &str, subject: Option<&str>, me: LearnerId) -> Result<Self, GamificationError> {
        let subject = subject.map(str::trim).filter(|s| !s.is_empty());
        let missing = || GamificationError::MissingScopeSubject(scope.to_string());
        let id = |s: &str| {
            s.parse::<i64>()
                .map_err(|_| GamificationError::UnknownScope(format!("{scope}={s}")))
        };
        match scope.trim().to_ascii_lowercase().as_str() {
            "" | "global" => Ok(LeaderboardScope::Global),
            "country" => Ok(LeaderboardScope::Country(CountryId(id(subject.ok_or_else(missing)?)?))),
            "friends" => Ok(LeaderboardScope::Friends(match subject {
                Some(s) => LearnerId(id(s)?),
                None => me,
            })),
            "organization" | "org" => Ok(LeaderboardScope::Organization(subject.ok_or_else(missing)?.to_string())),
            other => Err(GamificationError::UnknownScope(other.to_string())),
        }
    }
}

/// A learner's leaderboard sort key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Standing {
    pub learner_id: LearnerId,
    pub total_xp: u64,
    pub reached_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub learner_id: LearnerId,
    pub total_xp: u64,
    pub rank: usize,
}

/// XP descending, then earliest to reach the total, then learner id.
pub fn standing_order(a: &Standing, b: &Standing) -> Ordering {
    b.total_xp
        .cmp(&a.total_xp)
        .then(a.reached_at.cmp(&b.reached_at))
        .then(a.learner_id.cmp(&b.learner_id))
}

pub fn rank(mut standings: Vec<Standing>, limit: Option<usize>) -> Vec<LeaderboardEntry> {
    standings.sort_by(standing_order);
    standings
        .into_iter()
        .take(limit.unwrap_or(usize::MAX))
        .enumerate()
        .map(|(i, s)| LeaderboardEntry {
            learner_id: s.learner_id,
            total_xp: s.total_xp,
            rank: i + 1,
        })
        .collect()
}

/// Ledgers for many learners; writes for one learner are serialized by its own lock.
#[derive(Debug, Default)]
pub struct LedgerBook {
    rules: GamificationRules,
    ledgers: RwLock<BTreeMap<LearnerId, Arc<Mutex<LearnerLedger>>>>,
}

impl LedgerBook {
    pub fn new(rules: GamificationRules) -> Self {
        LedgerBook {
            rules,
            ledgers: RwLock::default(),
        }
    }

    pub fn rules(&self) -> &GamificationRules {
        &self.rules
    }

    pub fn register(&self, learner: LearnerId, created_at: DateTime<Utc>) -> Result<(), GamificationError> {
        let mut ledgers = self.ledgers.write().expect("ledger book lock poisoned");
        if ledgers.contains_key(&learner) {
            return Err(GamificationError::LearnerExists(learner));
        }
        ledgers.insert(learner, Arc::new(Mutex::new(LearnerLedger::new(learner, created_at))));
        Ok(())
    }

    /// Runs `f` with exclusive access to one learner's ledger.
    pub fn with_learner<R>(
        &self,
        learner: LearnerId,
        f: impl FnOnce(&GamificationRules, &mut LearnerLedger) -> R,
    ) -> Result<R, GamificationError> {
        let handle = self
            .ledgers
            .read()
            .expect("ledger book lock poisoned")
            .get(&learner)
            .cloned()
            .ok_or(GamificationError::UnknownLearner(learner))?;
        let mut ledger = handle.lock().expect("learner ledger lock poisoned");
        Ok(f(&self.rules, &mut ledger))
    }

    pub fn snapshot(&self, learner: LearnerId) -> Result<LearnerLedger, GamificationError> {
        self.with_learner(learner, |_, l| l.clone())
    }

    pub fn learners(&self) -> Vec<LearnerId> {
        self.ledgers
            .read()
            .expect("ledger book lock poisoned")
            .keys()
            .copied()
            .collect()
    }

    pub fn leaderboard(&self, members: Option<&BTreeSet<LearnerId>>, limit: Option<usize>) -> Vec<LeaderboardEntry> {
        let handles: Vec<_> = self
            .ledgers
            .read()
            .expect("ledger book lock poisoned")
            .iter()
            .filter(|(id, _)| members.is_none_or(|m| m.contains(id)))
            .map(|(_, h)| h.clone())
            .collect();
        let standings = handles
            .iter()
            .map(|h| h.lock().expect("learner ledger lock poisoned").standing())
            .collect();
        rank(standings, limit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Category, CategoryName, ContentUnit, Country, Lesson, LessonId, UnitKind, UnitStatus};
    use chrono::TimeZone;

    fn t(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_720_000_000 + secs, 0).unwrap()
    }

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn ledger() -> LearnerLedger {
        LearnerLedger::new(LearnerId(1), t(0))
    }

    #[test]
    fn xp_tiers_are_cumulative() {
        let rules = GamificationRules::default();
        let mut l = ledger();
        let u = UnitId(3);
        assert_eq!(l.award_lesson_xp(&rules, u, ProgressState::Watched, t(1)), Ok(5));
        assert_eq!(l.award_lesson_xp(&rules, u, ProgressState::SummaryTested, t(2)), Ok(2));
        assert_eq!(
            l.award_lesson_xp(&rules, u, ProgressState::SummaryTested, t(3)),
            Err(GamificationError::DuplicateAward {
                unit: u,
                state: ProgressState::SummaryTested
            })
        );
        assert_eq!(l.unit_xp(u), 7);
        assert_eq!(l.award_lesson_xp(&rules, u, ProgressState::PracticeTested, t(4)), Ok(5));
        assert_eq!(l.total_xp(), 12);
        assert_eq!(l.xp_entries().len(), 3);
        assert_eq!(l.xp_reached_at(), t(4));
        assert!(l.award_lesson_xp(&rules, u, ProgressState::NotStarted, t(5)).is_err());
        l.verify().unwrap();
    }

    #[test]
    fn quiz_coins() {
        let rules = GamificationRules::default();
        let mut l = ledger();
        assert_eq!(l.award_quiz_coins(&rules, QuizId(1), 8, t(1)), 8);
        assert_eq!(l.award_quiz_coins(&rules, QuizId(1), 0, t(2)), 0);
        assert_eq!(l.coin_entries().len(), 1);
        assert_eq!(l.award_quiz_coins(&rules, QuizId(2), 3, t(3)), 3);
        assert_eq!(l.total_coins(), 11);
    }

    #[test]
    fn streak_examples() {
        let mut l = ledger();
        let at = |d: &str| date(d).and_hms_opt(23, 30, 0).unwrap().and_utc();
        assert_eq!(l.record_login(at("2024-07-01")).current_length, 1);
        assert_eq!(l.record_login(at("2024-07-01")).current_length, 1);
        assert_eq!(l.record_login(at("2024-07-02")).current_length, 2);
        assert_eq!(l.record_login(at("2024-06-20")).current_length, 2);
        let s = l.record_login(at("2024-07-05"));
        assert_eq!(s.current_length, 1);
        assert_eq!(s.last_active_utc_date, Some(date("2024-07-05")));
    }

    #[test]
    fn daily_challenge_claims() {
        let rules = GamificationRules::default();
        let mut l = ledger();
        let d = date("2024-07-01");
        assert_eq!(
            l.claim_daily_challenge(&rules, d, t(1)),
            Err(GamificationError::ChallengeNotCompleted(d))
        );
        l.record_challenge_completion(d);
        assert_eq!(l.claim_daily_challenge(&rules, d, t(2)), Ok(10));
        assert_eq!(
            l.claim_daily_challenge(&rules, d, t(3)),
            Err(GamificationError::AlreadyClaimed(d))
        );
        assert_eq!(l.total_coins(), 10);
    }

    fn catalog(categories: usize) -> Catalog {
        let mut c = Catalog::default();
        let country = CountryId(1);
        let mut category_ids = Vec::new();
        for i in 0..categories {
            let cat = CategoryId(i as i64 + 1);
            let lesson = LessonId(i as i64 + 1);
            let unit = UnitId(i as i64 + 1);
            category_ids.push(cat);
            c.categories.insert(
                cat,
                Category {
                    category_id: cat,
                    country_id: country,
                    name: CategoryName::ALL[i],
                    lessons: vec![lesson],
                },
            );
            c.lessons.insert(
                lesson,
                Lesson {
                    lesson_id: lesson,
                    category_id: cat,
                    title: format!("lesson {i}"),
                    content_units: vec![unit],
                },
            );
            c.units.insert(
                unit,
                ContentUnit {
                    unit_id: unit,
                    lesson_id: lesson,
                    kind: UnitKind::Document,
                    source_name: "s".into(),
                    raw_text: "text".into(),
                    summary_id: None,
                    quiz_id: None,
                    indexed: true,
                    status: UnitStatus::Published,
                    errors: Vec::new(),
                },
            );
        }
        c.countries.insert(
            country,
            Country {
                country_id: country,
                name: "Japan".into(),
                categories: category_ids,
            },
        );
        c
    }

    #[test]
    fn category_badge_threshold() {
        let rules = GamificationRules::default();
        let cat = catalog(2);
        let done = |_: UnitId| ProgressState::SummaryTested;
        let mut l = ledger();
        let low = BTreeMap::from([(CategoryId(1), 0.75)]);
        assert!(l.evaluate_badges(&rules, &cat, done, &low, t(1)).is_empty());
        let high = BTreeMap::from([(CategoryId(1), 0.85)]);
        let fresh = l.evaluate_badges(&rules, &cat, done, &high, t(2));
        assert_eq!(fresh.len(), 1);
        assert_eq!(fresh[0].kind, BadgeKind::Category(CategoryId(1)));
        assert!(l.evaluate_badges(&rules, &cat, done, &high, t(3)).is_empty());
        let watched = |_: UnitId| ProgressState::Watched;
        let mut other = ledger();
        assert!(other.evaluate_badges(&rules, &cat, watched, &high, t(4)).is_empty());
    }

    #[test]
    fn country_badge_after_all_categories() {
        let rules = GamificationRules::default();
        let cat = catalog(11);
        let done = |_: UnitId| ProgressState::PracticeTested;
        let mut means: BTreeMap<CategoryId, f64> = (1..=10).map(|i| (CategoryId(i), 0.9)).collect();
        let mut l = ledger();
        assert_eq!(l.evaluate_badges(&rules, &cat, done, &means, t(1)).len(), 10);
        assert!(!l.has_badge(BadgeKind::Country(CountryId(1))));
        means.insert(CategoryId(11), 1.0);
        let fresh = l.evaluate_badges(&rules, &cat, done, &means, t(2));
        assert_eq!(
            fresh.iter().map(|b| b.kind).collect::<Vec<_>>(),
            vec![BadgeKind::Category(CategoryId(11)), BadgeKind::Country(CountryId(1))]
        );
    }

    #[test]
    fn leaderboard_tie_break() {
        let standings = vec![
            Standing {
                learner_id: LearnerId(1),
                total_xp: 100,
                reached_at: t(10),
            },
            Standing {
                learner_id: LearnerId(2),
                total_xp: 50,
                reached_at: t(5),
            },
            Standing {
                learner_id: LearnerId(3),
                total_xp: 100,
                reached_at: t(20),
            },
        ];
        let board = rank(standings.clone(), None);
        let order: Vec<_> = board.iter().map(|e| (e.learner_id.0, e.rank)).collect();
        assert_eq!(order, vec![(1, 1), (3, 2), (2, 3)]);
        assert_eq!(rank(standings, Some(2)).len(), 2);
    }

    #[test]
    fn scope_parsing() {
        let me = LearnerId(9);
        assert_eq!(
            LeaderboardScope::parse("global", None, me),
            Ok(LeaderboardScope::Global)
        );
        assert_eq!(
            LeaderboardScope::parse("friends", None, me),
            Ok(LeaderboardScope::Friends(me))
        );
        assert_eq!(
            LeaderboardScope::parse("country", Some("4"), me),
            Ok(LeaderboardScope::Country(CountryId(4)))
        );
        assert!(LeaderboardScope::parse("country", None, me).is_err());
        assert!(LeaderboardScope::parse("galaxy", None, me).is_err());
    }

    #[test]
    fn restore_matches_live_ledger() {
        let rules = GamificationRules::default();
        let mut l = ledger();
        l.award_lesson_xp(&rules, UnitId(1), ProgressState::Watched, t(1))
            .unwrap();
        l.award_quiz_coins(&rules, QuizId(1), 4, t(2));
        l.record_challenge_completion(date("2024-07-03"));
        l.claim_daily_challenge(&rules, date("2024-07-03"), t(3)).unwrap();
        l.record_login(t(4));
        let back = LearnerLedger::restore(
            l.learner_id,
            l.created_at,
            l.xp_entries().to_vec(),
            l.coin_entries().to_vec(),
            l.badges().to_vec(),
            l.streak(),
            l.challenge_completions().clone(),
        );
        assert_eq!(back, l);
        back.verify_against(5, 14).unwrap();
        assert!(back.verify_against(6, 14).is_err());
    }

    #[test]
    fn book_rejects_unknown_and_duplicate_learners() {
        let book = LedgerBook::default();
        book.register(LearnerId(1), t(0)).unwrap();
        assert_eq!(
            book.register(LearnerId(1), t(0)),
            Err(GamificationError::LearnerExists(LearnerId(1)))
        );
        assert!(matches!(
            book.with_learner(LearnerId(2), |_, _| ()),
            Err(GamificationError::UnknownLearner(_))
        ));
        let friends = BTreeSet::from([LearnerId(1)]);
        assert_eq!(book.leaderboard(Some(&friends), None).len(), 1);
    }
}
