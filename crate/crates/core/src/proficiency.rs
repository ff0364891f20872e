//! Engagement telemetry and the per-country proficiency score.
//!
//! ```text
//! time_norm    = min(total_seconds / time_cap, 1)        time_cap    = 36000 s
//! attempt_norm = min(attempt_count / attempt_cap, 1)     attempt_cap = 50
//! value        = 0.2 * time_norm + 0.2 * attempt_norm + 0.6 * mean_quiz_score
//! ```

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Catalog, CategoryId, CountryId, Enrollment, LearnerId, LessonId, ProgressState, UnitId};
use crate::scalar::{clamp, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProficiencyError {
    #[error("invalid event: {0}")]
    InvalidEvent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngagementKind {
    TimeSpent { seconds: u64 },
    QuizAttempt,
    QuizResult { score: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementEvent {
    pub learner_id: LearnerId,
    pub country_id: CountryId,
    pub kind: EngagementKind,
    pub at: DateTime<Utc>,
}

impl EngagementEvent {
    pub fn validate(&self) -> Result<(), ProficiencyError> {
        match self.kind {
            EngagementKind::TimeSpent { seconds: 0 } => {
                Err(ProficiencyError::InvalidEvent("time spent must be positive".into()))
            }
            EngagementKind::QuizResult { score } if !(0.0..=1.0).contains(&score) => Err(
                ProficiencyError::InvalidEvent(format!("quiz score {score} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementStats<T> {
    pub learner_id: LearnerId,
    pub country_id: CountryId,
    pub total_seconds: u64,
    pub attempt_count: u64,
    pub result_count: u64,
    pub score_sum: T,
    /// Zero until the first quiz result.
    pub mean_quiz_score: T,
}

impl<T: Scalar> EngagementStats<T> {
    pub fn empty(learner_id: LearnerId, country_id: CountryId) -> Self {
        EngagementStats {
            learner_id,
            country_id,
            total_seconds: 0,
            attempt_count: 0,
            result_count: 0,
            score_sum: T::zero(),
            mean_quiz_score: T::zero(),
        }
    }

    /// Folds one event in; the stats are left untouched on error.
    pub fn record(&mut self, event: &EngagementEvent) -> Result<(), ProficiencyError> {
        event.validate()?;
        if event.learner_id != self.learner_id || event.country_id != self.country_id {
            return Err(ProficiencyError::InvalidEvent(format!(
                "event for learner {} / country {} applied to stats of learner {} / country {}",
                event.learner_id, event.country_id, self.learner_id, self.country_id
            )));
        }
        match event.kind {
            EngagementKind::TimeSpent { seconds } => {
                self.total_seconds = self.total_seconds.saturating_add(seconds);
            }
            EngagementKind::QuizAttempt => self.attempt_count += 1,
            EngagementKind::QuizResult { score } => {
                self.result_count += 1;
                self.score_sum = self.score_sum + T::lit(score);
                self.mean_quiz_score = self.score_sum / T::from_u64(self.result_count).expect("count fits scalar");
            }
        }
        Ok(())
    }

    pub fn from_events<'a>(
        learner_id: LearnerId,
        country_id: CountryId,
        events: impl IntoIterator<Item = &'a EngagementEvent>,
    ) -> Result<Self, ProficiencyError> {
        let mut stats = Self::empty(learner_id, country_id);
        for event in events {
            stats.record(event)?;
        }
        Ok(stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProficiencyComponents<T> {
    pub time_norm: T,
    pub attempt_norm: T,
    pub score_term: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProficiencyScore<T> {
    pub learner_id: LearnerId,
    pub country_id: CountryId,
    pub value: T,
    pub components: ProficiencyComponents<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProficiencyModel<T> {
    pub time_cap_seconds: T,
    pub attempt_cap: T,
    pub time_weight: T,
    pub attempt_weight: T,
    pub score_weight: T,
}

impl<T: Scalar> Default for ProficiencyModel<T> {
    fn default() -> Self {
        ProficiencyModel {
            time_cap_seconds: T::lit(36_000.0),
            attempt_cap: T::lit(50.0),
            time_weight: T::lit(0.2),
            attempt_weight: T::lit(0.2),
            score_weight: T::lit(0.6),
        }
    }
}

impl<T: Scalar> ProficiencyModel<T> {
    pub fn compute(&self, stats: &EngagementStats<T>) -> ProficiencyScore<T> {
        let unit = |x: T| clamp(x, T::zero(), T::one());
        let time_norm = unit(T::from_u64(stats.total_seconds).expect("seconds fit scalar") / self.time_cap_seconds);
        let attempt_norm = unit(T::from_u64(stats.attempt_count).expect("count fits scalar") / self.attempt_cap);
        let score_term = unit(stats.mean_quiz_score);
        let value = self.time_weight * time_norm + self.attempt_weight * attempt_norm + self.score_weight * score_term;
        ProficiencyScore {
            learner_id: stats.learner_id,
            country_id: stats.country_id,
            value: unit(value),
            components: ProficiencyComponents {
                time_norm,
                attempt_norm,
                score_term,
            },
        }
    }
}

pub fn compute_proficiency<T: Scalar>(stats: &EngagementStats<T>) -> ProficiencyScore<T> {
    ProficiencyModel::default().compute(stats)
}

/// Mean quiz score per category over a learner's results.
pub fn category_quiz_means(catalog: &Catalog, results: &[(UnitId, f64)]) -> BTreeMap<CategoryId, f64> {
    let mut sums: BTreeMap<CategoryId, (f64, usize)> = BTreeMap::new();
    for (unit, score) in results {
        if let Some(category) = catalog.category_of_unit(*unit) {
            let entry = sums.entry(category.category_id).or_default();
            entry.0 += score;
            entry.1 += 1;
        }
    }
    sums.into_iter().map(|(c, (sum, n))| (c, sum / n as f64)).collect()
}

/// Progress of a unit across a learner's enrollments.
pub fn unit_progress(catalog: &Catalog, enrollments: &[Enrollment], unit: UnitId) -> ProgressState {
    let Some(country) = catalog.country_of_unit(unit) else {
        return ProgressState::NotStarted;
    };
    enrollments
        .iter()
        .find(|e| e.country_id == country)
        .map_or(ProgressState::NotStarted, |e| e.progress(unit))
}

pub struct RecommendationInput<'a> {
    pub catalog: &'a Catalog,
    pub enrollments: &'a [Enrollment],
    pub quiz_results: &'a [(UnitId, f64)],
    /// Enrollments of each friend.
    pub friends: &'a [Vec<Enrollment>],
}

/// Unfinished lessons ordered by category weakness, then friend completion.
///
/// Categories with quiz results come first, weakest mean first; categories
/// without results follow. Within equal weakness, lessons a friend finished
/// come first. Remaining ties keep catalog order. Only lessons of enrolled
/// countries are considered, or the whole catalog when not enrolled anywhere.
pub fn recommend(input: &RecommendationInput<'_>) -> Vec<LessonId> {
    let catalog = input.catalog;
    let enrolled: BTreeSet<CountryId> = input.enrollments.iter().map(|e| e.country_id).collect();
    let means = category_quiz_means(catalog, input.quiz_results);
    let own = |u: UnitId| unit_progress(catalog, input.enrollments, u);

    let mut ranked: Vec<(usize, LessonId, Option<f64>, bool)> = catalog
        .published_lessons()
        .into_iter()
        .enumerate()
        .filter(|(_, l)| enrolled.is_empty() || catalog.country_of_lesson(*l).is_some_and(|c| enrolled.contains(&c)))
        .filter(|(_, l)| !catalog.lesson_finished(*l, own))
        .map(|(position, lesson)| {
            let category = catalog.lessons[&lesson].category_id;
            let friend_done = input
                .friends
                .iter()
                .any(|friend| catalog.lesson_finished(lesson, |u| unit_progress(catalog, friend, u)));
            (position, lesson, means.get(&category).copied(), friend_done)
        })
        .collect();

    ranked.sort_by(|a, b| {
        let weakness = match (a.2, b.2) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        };
        weakness.then(b.3.cmp(&a.3)).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
    });
    ranked.into_iter().map(|r| r.1).collect()
}
