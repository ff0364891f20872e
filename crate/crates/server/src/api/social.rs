use std::collections::BTreeSet;
use std::sync::Arc;

use axum::extract::State as AppState;
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::Json;
use chrono::NaiveDate;
use icls_core::domain::{
    normalize_email, CategoryId, CategoryName, CountryId, FriendRequestId, LearnerId, LearnerProfile, LessonId, QuizId,
};
use icls_core::gamification::{rank, Badge, LeaderboardScope, Streak};
use icls_core::proficiency::{recommend, RecommendationInput};
use serde::{Deserialize, Serialize};

use super::catalog::{enrollment_view, EnrollmentView};
use super::learning::{quiz_view, QuizView};
use super::{learner_name, Body, Id, Params};
use crate::app::App;
use crate::auth::AuthLearner;
use crate::error::ApiError;
use crate::model::{Change, FriendRequest, FriendState, State, Story};

/// The challenge quiz for a UTC date: published quizzes by id, cycled by day number.
pub fn daily_quiz(state: &State, date: NaiveDate) -> Option<QuizId> {
    let quizzes = state.published_quizzes();
    if quizzes.is_empty() {
        return None;
    }
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
    let day = (date - epoch).num_days();
    Some(quizzes[day.rem_euclid(quizzes.len() as i64) as usize])
}

#[derive(Debug, Deserialize)]
pub struct LeaderboardQuery {
    #[serde(default)]
    pub scope: String,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub learner_id: LearnerId,
    pub name: String,
    pub total_xp: u64,
}

#[derive(Debug, Serialize)]
pub struct LeaderboardView {
    #[serde(flatten)]
    pub scope: LeaderboardScope,
    pub entries: Vec<LeaderboardRow>,
}

fn scope_members(
    state: &State,
    scope: &LeaderboardScope,
    me: LearnerId,
) -> Result<Option<BTreeSet<LearnerId>>, ApiError> {
    Ok(match scope {
        LeaderboardScope::Global => None,
        LeaderboardScope::Country(country) => {
            if !state.catalog.countries.contains_key(country) {
                return Err(ApiError::not_found(format!("country {country}")));
            }
            Some(
                state
                    .enrollments
                    .keys()
                    .filter(|(_, c)| c == country)
                    .map(|(l, _)| *l)
                    .collect(),
            )
        }
        LeaderboardScope::Friends(of) => {
            if *of != me {
                return Err(ApiError::forbidden("only your own friends leaderboard is visible"));
            }
            let mut members = state.friends_of(me);
            members.insert(me);
            Some(members)
        }
        LeaderboardScope::Organization(org) => {
            let members: BTreeSet<LearnerId> = state
                .learners
                .values()
                .filter(|p| p.org_id.as_deref() == Some(org.as_str()))
                .map(|p| p.learner_id)
                .collect();
            if members.is_empty() {
                return Err(ApiError::not_found(format!("organization `{org}`")));
            }
            Some(members)
        }
    })
}

pub async fn leaderboard(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Params(query): Params<LeaderboardQuery>,
) -> Result<Json<LeaderboardView>, ApiError> {
    let scope = LeaderboardScope::parse(&query.scope, query.subject.as_deref(), auth.learner_id)?;
    let inner = app.lock();
    let state = &inner.state;
    let members = scope_members(state, &scope, auth.learner_id)?;
    let standings = state
        .ledgers
        .values()
        .filter(|l| members.as_ref().is_none_or(|m| m.contains(&l.learner_id)))
        .map(|l| l.standing())
        .collect();
    let entries = rank(standings, query.limit)
        .into_iter()
        .map(|e| LeaderboardRow {
            rank: e.rank,
            learner_id: e.learner_id,
            name: learner_name(state, e.learner_id),
            total_xp: e.total_xp,
        })
        .collect();
    Ok(Json(LeaderboardView { scope, entries }))
}

#[derive(Debug, Serialize)]
pub struct ProfileView {
    pub learner: LearnerProfile,
    pub total_xp: u64,
    pub total_coins: u64,
    pub streak: Streak,
    pub badges: Vec<Badge>,
    pub enrollments: Vec<EnrollmentView>,
    pub friends: Vec<LearnerId>,
}

pub async fn profile(AppState(app): AppState<Arc<App>>, auth: AuthLearner) -> Json<ProfileView> {
    let inner = app.lock();
    let state = &inner.state;
    let learner = auth.learner_id;
    let ledger = &state.ledgers[&learner];
    Json(ProfileView {
        learner: state.learners[&learner].clone(),
        total_xp: ledger.total_xp(),
        total_coins: ledger.total_coins(),
        streak: ledger.streak(),
        badges: ledger.badges().to_vec(),
        enrollments: state
            .learner_enrollments(learner)
            .iter()
            .map(|e| enrollment_view(state, e))
            .collect(),
        friends: state.friends_of(learner).into_iter().collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct Recommendation {
    pub lesson_id: LessonId,
    pub title: String,
    pub category_id: CategoryId,
    pub category: CategoryName,
    pub country_id: CountryId,
}

pub async fn recommendations(AppState(app): AppState<Arc<App>>, auth: AuthLearner) -> Json<Vec<Recommendation>> {
    let inner = app.lock();
    let state = &inner.state;
    let learner = auth.learner_id;
    let enrollments = state.learner_enrollments(learner);
    let scores = state.learner_scores(learner);
    let friends: Vec<_> = state
        .friends_of(learner)
        .into_iter()
        .map(|f| state.learner_enrollments(f))
        .collect();
    let lessons = recommend(&RecommendationInput {
        catalog: &state.catalog,
        enrollments: &enrollments,
        quiz_results: &scores,
        friends: &friends,
    });
    Json(
        lessons
            .into_iter()
            .map(|l| {
                let lesson = &state.catalog.lessons[&l];
                let category = &state.catalog.categories[&lesson.category_id];
                Recommendation {
                    lesson_id: l,
                    title: lesson.title.clone(),
                    category_id: category.category_id,
                    category: category.name,
                    country_id: category.country_id,
                }
            })
            .collect(),
    )
}

#[derive(Debug, Serialize)]
pub struct FriendView {
    pub learner_id: LearnerId,
    pub name: String,
}

#[derive(Debug, Serialize)]
pub struct FriendsView {
    pub friends: Vec<FriendView>,
    pub incoming: Vec<FriendRequest>,
    pub outgoing: Vec<FriendRequest>,
}

pub async fn friends(AppState(app): AppState<Arc<App>>, auth: AuthLearner) -> Json<FriendsView> {
    let inner = app.lock();
    let state = &inner.state;
    let me = auth.learner_id;
    let pending = |r: &&FriendRequest| r.state == FriendState::Pending;
    Json(FriendsView {
        friends: state
            .friends_of(me)
            .into_iter()
            .map(|f| FriendView {
                learner_id: f,
                name: learner_name(state, f),
            })
            .collect(),
        incoming: state
            .friend_requests
            .values()
            .filter(pending)
            .filter(|r| r.to_learner == me)
            .cloned()
            .collect(),
        outgoing: state
            .friend_requests
            .values()
            .filter(pending)
            .filter(|r| r.from_learner == me)
            .cloned()
            .collect(),
    })
}

#[derive(Debug, Deserialize)]
pub struct FriendRequestBody {
    #[serde(default)]
    pub to_learner: Option<LearnerId>,
    #[serde(default)]
    pub email: Option<String>,
}

pub async fn send_request(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Body(body): Body<FriendRequestBody>,
) -> Result<impl IntoResponse, ApiError> {
    let now = app.now();
    let me = auth.learner_id;
    let mut inner = app.lock();
    let state = &inner.state;
    let to = match (body.to_learner, body.email.as_deref()) {
        (Some(id), _) => id,
        (None, Some(email)) => *state
            .emails
            .get(&normalize_email(email))
            .ok_or_else(|| ApiError::not_found("no learner with that email"))?,
        (None, None) => return Err(ApiError::invalid("invalid-field", "name `to_learner` or `email`")),
    };
    if !state.learners.contains_key(&to) {
        return Err(ApiError::not_found(format!("learner {to}")));
    }
    if to == me {
        return Err(ApiError::invalid("invalid-field", "cannot befriend yourself"));
    }
    let open = state.friend_requests.values().any(|r| {
        r.state != FriendState::Declined
            && ((r.from_learner == me && r.to_learner == to) || (r.from_learner == to && r.to_learner == me))
    });
    if open {
        return Err(ApiError::conflict(
            "duplicate-request",
            format!("a request between {me} and {to} is already open or accepted"),
        ));
    }
    let request = FriendRequest {
        request_id: state.next_friend_request_id(),
        from_learner: me,
        to_learner: to,
        state: FriendState::Pending,
        created_at: now,
    };
    inner.commit(vec![Change::AddFriendRequest(request.clone())])?;
    Ok((StatusCode::CREATED, Json(request)))
}

fn answer_request(app: &App, me: LearnerId, id: FriendRequestId, to: FriendState) -> Result<FriendRequest, ApiError> {
    let mut inner = app.lock();
    let request = inner
        .state
        .friend_requests
        .get(&id)
        .filter(|r| r.to_learner == me || r.from_learner == me)
        .ok_or_else(|| ApiError::not_found(format!("friend request {id}")))?;
    if request.to_learner != me {
        return Err(ApiError::forbidden("only the recipient can answer a request"));
    }
    if request.state != FriendState::Pending {
        return Err(ApiError::conflict(
            "request-closed",
            format!("request {id} is already {}", request.state.as_str()),
        ));
    }
    let mut answered = request.clone();
    answered.state = to;
    inner.commit(vec![Change::SetFriendState(id, to)])?;
    Ok(answered)
}

pub async fn accept_request(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Id(id): Id<FriendRequestId>,
) -> Result<Json<FriendRequest>, ApiError> {
    answer_request(&app, auth.learner_id, id, FriendState::Accepted).map(Json)
}

pub async fn decline_request(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
    Id(id): Id<FriendRequestId>,
) -> Result<Json<FriendRequest>, ApiError> {
    answer_request(&app, auth.learner_id, id, FriendState::Declined).map(Json)
}

#[derive(Debug, Serialize)]
pub struct DailyChallengeView {
    pub date: NaiveDate,
    pub quiz: Option<QuizView>,
    pub completed: bool,
    pub claimed: bool,
    pub reward_coins: u32,
}

pub async fn daily_challenge(AppState(app): AppState<Arc<App>>, auth: AuthLearner) -> Json<DailyChallengeView> {
    let today = app.now().date_naive();
    let inner = app.lock();
    let state = &inner.state;
    let ledger = &state.ledgers[&auth.learner_id];
    Json(DailyChallengeView {
        date: today,
        quiz: daily_quiz(state, today).map(|q| quiz_view(&state.quizzes[&q])),
        completed: ledger.challenge_completed(today),
        claimed: ledger.challenge_claimed(today),
        reward_coins: app.rules().daily_challenge_coins,
    })
}

#[derive(Debug, Serialize)]
pub struct ClaimView {
    pub date: NaiveDate,
    pub coins_awarded: u32,
    pub total_coins: u64,
}

pub async fn claim_daily_challenge(
    AppState(app): AppState<Arc<App>>,
    auth: AuthLearner,
) -> Result<Json<ClaimView>, ApiError> {
    let now = app.now();
    let today = now.date_naive();
    let mut inner = app.lock();
    let entry = inner.state.ledgers[&auth.learner_id].plan_daily_claim(app.rules(), today, now)?;
    let coins_awarded = entry.amount;
    inner.commit(vec![Change::AddCoins(entry)])?;
    Ok(Json(ClaimView {
        date: today,
        coins_awarded,
        total_coins: inner.state.ledgers[&auth.learner_id].total_coins(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct StoriesQuery {
    #[serde(default)]
    pub country_id: Option<CountryId>,
}

pub async fn stories(
    AppState(app): AppState<Arc<App>>,
    _auth: AuthLearner,
    Params(query): Params<StoriesQuery>,
) -> Json<Vec<Story>> {
    let inner = app.lock();
    Json(
        inner
            .state
            .stories
            .values()
            .filter(|s| query.country_id.is_none() || s.country_id == query.country_id)
            .cloned()
            .collect(),
    )
}
