//! Quizzes: generation through the quiz prompt, the marker text format and
//! grading.
//!
//! The text format is line oriented:
//!
//! ```text
//! *Question :** Capital of Japan?
//! *Option :** Kyoto
//! *Option :** Tokyo
//! *Option :** Osaka
//! *Option :** Nara
//! *Answer :** 2
//! ```
//!
//! Parsing is tolerant of model drift (asterisks, case, spacing, numbered
//! markers, `Option N` answers) and never fails: every block opened by a
//! question marker ends up either as a [`Question`] or as a [`RejectedBlock`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use num_rational::Ratio;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{LearnerId, QuizId, UnitId};
use crate::llm::{render_quiz_prompt, LlmError, LlmGateway, PromptKind};

pub const MIN_QUIZ_QUESTIONS: usize = 10;
pub const OPTIONS_PER_QUESTION: usize = 4;
pub const GENERATION_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub stem: String,
    pub options: [String; OPTIONS_PER_QUESTION],
    /// 1-based index into `options`.
    pub answer_index: u8,
}

impl Question {
    pub fn is_valid(&self) -> bool {
        !self.stem.trim().is_empty()
            && self.options.iter().all(|o| !o.trim().is_empty())
            && (1..=OPTIONS_PER_QUESTION as u8).contains(&self.answer_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quiz {
    pub quiz_id: QuizId,
    pub unit_id: UnitId,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuizError {
    #[error("quiz has {valid} valid questions, at least {MIN_QUIZ_QUESTIONS} required")]
    Underfull { valid: usize, best: ParsedQuiz },
    #[error("question {0} is malformed")]
    InvalidQuestion(usize),
    #[error("unit text is empty")]
    EmptyUnit,
    #[error("submission targets quiz {submitted}, not {expected}")]
    QuizMismatch { expected: QuizId, submitted: QuizId },
    #[error("answer for question {ordinal} is outside the quiz")]
    OrdinalOutOfRange { ordinal: usize },
    #[error("answer {choice} for question {ordinal} is not an option number")]
    ChoiceOutOfRange { ordinal: usize, choice: u8 },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

impl Quiz {
    /// Accepts only quizzes with enough well-formed questions.
    pub fn new(quiz_id: QuizId, unit_id: UnitId, questions: Vec<Question>) -> Result<Self, QuizError> {
        if let Some(bad) = questions.iter().position(|q| !q.is_valid()) {
            return Err(QuizError::InvalidQuestion(bad));
        }
        if questions.len() < MIN_QUIZ_QUESTIONS {
            return Err(QuizError::Underfull {
                valid: questions.len(),
                best: ParsedQuiz {
                    questions,
                    rejects: Vec::new(),
                },
            });
        }
        Ok(Quiz {
            quiz_id,
            unit_id,
            questions,
        })
    }
}

/// Why a detected block did not become a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    EmptyStem,
    OptionCount,
    EmptyOption,
    MissingAnswer,
    MultipleAnswers,
    AnswerInvalid,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::EmptyStem => "empty-stem",
            RejectReason::OptionCount => "option-count",
            RejectReason::EmptyOption => "empty-option",
            RejectReason::MissingAnswer => "missing-answer",
            RejectReason::MultipleAnswers => "multiple-answers",
            RejectReason::AnswerInvalid => "answer-invalid",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedBlock {
    pub block_text: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedQuiz {
    pub questions: Vec<Question>,
    pub rejects: Vec<RejectedBlock>,
}

impl ParsedQuiz {
    pub fn block_count(&self) -> usize {
        self.questions.len() + self.rejects.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Question,
    Option,
    Answer,
}

static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^[\s*#>_-]*(question|option|answer)(?:\s*\d{1,3}[.)]?)?\s*:[\s*_]*(.*)$").expect("marker pattern")
});

static ANSWER_VALUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(?:option\s*)?(\d+)\s*[.)]?$").expect("answer pattern"));

fn classify(line: &str) -> Option<(Marker, String)> {
    let caps = MARKER.captures(line)?;
    let marker = match caps[1].chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('q') => Marker::Question,
        Some('o') => Marker::Option,
        _ => Marker::Answer,
    };
    Some((marker, caps[2].trim().to_string()))
}

fn parse_answer(value: &str) -> Option<u8> {
    let value = value.trim_matches(|c: char| c == '*' || c.is_whitespace());
    let caps = ANSWER_VALUE.captures(value)?;
    caps[1].parse::<u8>().ok()
}

#[derive(Default)]
struct Block {
    lines: Vec<String>,
    stem: String,
    options: Vec<String>,
    answers: Vec<String>,
    last: Option<Marker>,
}

impl Block {
    fn continue_field(&mut self, text: &str) {
        let target = match self.last {
            Some(Marker::Question) | None => &mut self.stem,
            Some(Marker::Option) => match self.options.last_mut() {
                Some(option) => option,
                None => &mut self.stem,
            },
            // free text after the answer is commentary
            Some(Marker::Answer) => return,
        };
        if !target.is_empty() {
            target.push(' ');
        }
        target.push_str(text);
    }

    fn finish(self) -> Result<Question, RejectedBlock> {
        let block_text = self.lines.join("\n");
        let reject = |reason| RejectedBlock {
            block_text: block_text.clone(),
            reason,
        };
        if self.stem.trim().is_empty() {
            return Err(reject(RejectReason::EmptyStem));
        }
        if self.options.len() != OPTIONS_PER_QUESTION {
            return Err(reject(RejectReason::OptionCount));
        }
        if self.options.iter().any(|o| o.trim().is_empty()) {
            return Err(reject(RejectReason::EmptyOption));
        }
        let answer = match self.answers.as_slice() {
            [] => return Err(reject(RejectReason::MissingAnswer)),
            [one] => one,
            _ => return Err(reject(RejectReason::MultipleAnswers)),
        };
        let answer_index = match parse_answer(answer) {
            Some(n @ 1..=4) => n,
            _ => return Err(reject(RejectReason::AnswerInvalid)),
        };
        let options: [String; OPTIONS_PER_QUESTION] =
            self.options.try_into().map_err(|_| reject(RejectReason::OptionCount))?;
        Ok(Question {
            stem: self.stem.trim().to_string(),
            options,
            answer_index,
        })
    }
}

/// Splits `raw` into question blocks and validates each one. Never fails.
///
/// Text before the first question marker is ignored.
pub fn parse_quiz(raw: &str) -> ParsedQuiz {
    let mut parsed = ParsedQuiz::default();
    let mut current: Option<Block> = None;
    let close = |block: Block, parsed: &mut ParsedQuiz| match block.finish() {
        Ok(q) => parsed.questions.push(q),
        Err(r) => parsed.rejects.push(r),
    };

    for line in raw.lines() {
        let classified = classify(line);
        if let Some((Marker::Question, text)) = &classified {
            if let Some(block) = current.take() {
                close(block, &mut parsed);
            }
            current = Some(Block {
                lines: vec![line.to_string()],
                stem: text.clone(),
                last: Some(Marker::Question),
                ..Block::default()
            });
            continue;
        }
        let Some(block) = current.as_mut() else {
            continue;
        };
        if line.trim().is_empty() {
            continue;
        }
        block.lines.push(line.to_string());
        match classified {
            Some((Marker::Option, text)) => {
                block.options.push(text);
                block.last = Some(Marker::Option);
            }
            Some((Marker::Answer, text)) => {
                block.answers.push(text);
                block.last = Some(Marker::Answer);
            }
            _ => block.continue_field(line.trim()),
        }
    }
    if let Some(block) = current.take() {
        close(block, &mut parsed);
    }
    parsed
}

/// Canonical marker text: one question line, four option lines and one
/// answer line per question, blocks separated by a blank line.
///
/// Round-trips through [`parse_quiz`] for single-line, trimmed texts that do
/// not start with `*` or `_`.
pub fn render_quiz_text(quiz: &Quiz) -> String {
    render_questions(&quiz.questions)
}

pub fn render_questions(questions: &[Question]) -> String {
    let mut out = String::new();
    for (i, q) in questions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("*Question :** {}\n", q.stem));
        for option in &q.options {
            out.push_str(&format!("*Option :** {option}\n"));
        }
        out.push_str(&format!("*Answer :** {}\n", q.answer_index));
    }
    out
}

/// Result of [`generate_quiz`] before an id is assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedQuiz {
    pub questions: Vec<Question>,
    pub rejects: Vec<RejectedBlock>,
    pub attempts: usize,
}

/// Up to three generation attempts, keeping the one with the most valid questions.
pub fn generate_quiz(gateway: &LlmGateway, unit_text: &str) -> Result<GeneratedQuiz, QuizError> {
    let prompt = render_quiz_prompt(unit_text).map_err(|_| QuizError::EmptyUnit)?;
    let request = gateway.request(PromptKind::Quiz, prompt);
    let mut best: Option<ParsedQuiz> = None;
    for attempt in 1..=GENERATION_ATTEMPTS {
        let result = gateway.complete(&request)?;
        let parsed = parse_quiz(&result.text);
        if best.as_ref().is_none_or(|b| parsed.questions.len() > b.questions.len()) {
            best = Some(parsed);
        }
        let best_ref = best.as_ref().expect("set above");
        if best_ref.questions.len() >= MIN_QUIZ_QUESTIONS {
            let best = best.expect("set above");
            return Ok(GeneratedQuiz {
                questions: best.questions,
                rejects: best.rejects,
                attempts: attempt,
            });
        }
    }
    let best = best.unwrap_or_default();
    Err(QuizError::Underfull {
        valid: best.questions.len(),
        best,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub learner_id: LearnerId,
    pub quiz_id: QuizId,
    /// Question ordinal (0-based) → chosen option (1-based). Skipped questions are absent.
    pub answers: BTreeMap<usize, u8>,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionFeedback {
    pub answered: bool,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeReport {
    pub correct_count: usize,
    pub total: usize,
    pub score: f64,
    pub per_question: Vec<QuestionFeedback>,
}

impl GradeReport {
    pub fn exact_score(&self) -> Ratio<usize> {
        Ratio::new(self.correct_count, self.total.max(1))
    }
}

/// Unanswered questions count as incorrect.
pub fn grade(quiz: &Quiz, submission: &Submission) -> Result<GradeReport, QuizError> {
    if submission.quiz_id != quiz.quiz_id {
        return Err(QuizError::QuizMismatch {
            expected: quiz.quiz_id,
            submitted: submission.quiz_id,
        });
    }
    for (&ordinal, &choice) in &submission.answers {
        if ordinal >= quiz.questions.len() {
            return Err(QuizError::OrdinalOutOfRange { ordinal });
        }
        if !(1..=OPTIONS_PER_QUESTION as u8).contains(&choice) {
            return Err(QuizError::ChoiceOutOfRange { ordinal, choice });
        }
    }
    let per_question: Vec<QuestionFeedback> = quiz
        .questions
        .iter()
        .enumerate()
        .map(|(i, q)| match submission.answers.get(&i) {
            Some(&choice) => QuestionFeedback {
                answered: true,
                correct: choice == q.answer_index,
            },
            None => QuestionFeedback {
                answered: false,
                correct: false,
            },
        })
        .collect();
    let correct_count = per_question.iter().filter(|f| f.correct).count();
    let total = quiz.questions.len();
    Ok(GradeReport {
        correct_count,
        total,
        score: if total == 0 {
            0.0
        } else {
            correct_count as f64 / total as f64
        },
        per_question,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock::ScriptedProvider;
    use crate::llm::GatewayConfig;
    use proptest::prelude::*;
    use std::sync::Arc;

    const JAPAN: &str = "*Question :** Capital of Japan?\n*Option :** Kyoto\n*Option :** Tokyo\n*Option :** Osaka\n*Option :** Nara\n*Answer :** 2";

    fn question(n: usize, answer: u8) -> Question {
        Question {
            stem: format!("Question number {n}?"),
            options: ["a".into(), "b".into(), "c".into(), "d".into()],
            answer_index: answer,
        }
    }

    fn quiz(n: usize) -> Quiz {
        Quiz::new(
            QuizId(1),
            UnitId(1),
            (0..n.max(10)).map(|i| question(i, (i % 4 + 1) as u8)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_bold_marker_format() {
        let parsed = parse_quiz(JAPAN);
        assert!(parsed.rejects.is_empty());
        assert_eq!(parsed.questions.len(), 1);
        let q = &parsed.questions[0];
        assert_eq!(q.stem, "Capital of Japan?");
        assert_eq!(q.options[1], "Tokyo");
        assert_eq!(q.answer_index, 2);
    }

    #[test]
    fn three_options_rejected() {
        let parsed = parse_quiz("*Question :** Q?\n*Option :** a\n*Option :** b\n*Option :** c\n*Answer :** 1");
        assert!(parsed.questions.is_empty());
        assert_eq!(parsed.rejects.len(), 1);
        assert_eq!(parsed.rejects[0].reason, RejectReason::OptionCount);
        assert_eq!(parsed.rejects[0].reason.as_str(), "option-count");
    }

    #[test]
    fn tolerant_markers() {
        let raw = "Here is your quiz:\n\n**Question 1:** What is sake?\noption: rice wine\nOPTION : beer\n* Option:** tea\n  Option 4: soda\nanswer: option 1\n";
        let parsed = parse_quiz(raw);
        assert_eq!(parsed.rejects, vec![]);
        assert_eq!(parsed.questions[0].answer_index, 1);
        assert_eq!(parsed.questions[0].options[2], "tea");
        let lower = parse_quiz("question: q\noption: a\noption: b\noption: c\noption: d\nanswer: option 2");
        assert_eq!(lower.questions[0].answer_index, 2);
        let bold = parse_quiz("Question : q\nOption : a\nOption : b\nOption : c\nOption : d\nAnswer : **3**");
        assert_eq!(bold.questions[0].answer_index, 3);
    }

    #[test]
    fn continuation_lines_join() {
        let parsed = parse_quiz("*Question :** Which dish\nis from Kerala?\n*Option :** Appam\n*Option :** Dhokla\n*Option :** Momo\nwith chutney\n*Option :** Poha\n*Answer :** 1\nbecause it is.");
        let q = &parsed.questions[0];
        assert_eq!(q.stem, "Which dish is from Kerala?");
        assert_eq!(q.options[2], "Momo with chutney");
    }

    #[test]
    fn answer_problems() {
        let base = "*Question :** Q\n*Option :** a\n*Option :** b\n*Option :** c\n*Option :** d\n";
        assert_eq!(parse_quiz(base).rejects[0].reason, RejectReason::MissingAnswer);
        assert_eq!(
            parse_quiz(&format!("{base}*Answer :** 5")).rejects[0].reason,
            RejectReason::AnswerInvalid
        );
        assert_eq!(
            parse_quiz(&format!("{base}*Answer :** Tokyo")).rejects[0].reason,
            RejectReason::AnswerInvalid
        );
        assert_eq!(
            parse_quiz(&format!("{base}*Answer :** 1\n*Answer :** 2")).rejects[0].reason,
            RejectReason::MultipleAnswers
        );
        assert_eq!(
            parse_quiz("*Question :**\n*Option :** a\n*Option :** b\n*Option :** c\n*Option :** d\n*Answer :** 1")
                .rejects[0]
                .reason,
            RejectReason::EmptyStem
        );
        assert_eq!(
            parse_quiz("*Question :** Q\n*Option :** a\n*Option :**\n*Option :** c\n*Option :** d\n*Answer :** 1")
                .rejects[0]
                .reason,
            RejectReason::EmptyOption
        );
    }

    #[test]
    fn render_shape() {
        let q = Quiz {
            quiz_id: QuizId(1),
            unit_id: UnitId(1),
            questions: vec![question(0, 4)],
        };
        let text = render_quiz_text(&q);
        let markers = text.lines().filter(|l| l.starts_with('*')).count();
        assert_eq!(markers, 6);
        assert!(text.lines().any(|l| l == "*Answer :** 4"));
        assert_eq!(parse_quiz(&text).questions, q.questions);
    }

    #[test]
    fn quiz_requires_ten_questions() {
        let nine: Vec<Question> = (0..9).map(|i| question(i, 1)).collect();
        assert!(matches!(
            Quiz::new(QuizId(1), UnitId(1), nine),
            Err(QuizError::Underfull { valid: 9, .. })
        ));
        let mut bad: Vec<Question> = (0..10).map(|i| question(i, 1)).collect();
        bad[3].answer_index = 0;
        assert!(matches!(
            Quiz::new(QuizId(1), UnitId(1), bad),
            Err(QuizError::InvalidQuestion(3))
        ));
    }

    #[test]
    fn grading() {
        let q = quiz(10);
        let all: BTreeMap<usize, u8> = q
            .questions
            .iter()
            .enumerate()
            .map(|(i, x)| (i, x.answer_index))
            .collect();
        let sub = |answers| Submission {
            learner_id: LearnerId(1),
            quiz_id: QuizId(1),
            answers,
            submitted_at: Utc::now(),
        };
        let r = grade(&q, &sub(all.clone())).unwrap();
        assert_eq!(r.score, 1.0);

        let r = grade(&q, &sub(BTreeMap::new())).unwrap();
        assert_eq!(r.score, 0.0);
        assert!(r.per_question.iter().all(|f| !f.answered));

        let seven: BTreeMap<usize, u8> = all.iter().filter(|(i, _)| **i <= 6).map(|(i, a)| (*i, *a)).collect();
        let r = grade(&q, &sub(seven)).unwrap();
        // 7 correct of 10
        assert_eq!(r.correct_count, 7);
        assert_eq!(r.score, 7.0 / 10.0);
        assert_eq!(r.exact_score(), Ratio::new(7, 10));

        let mut wrong = sub(BTreeMap::new());
        wrong.quiz_id = QuizId(2);
        assert!(matches!(grade(&q, &wrong), Err(QuizError::QuizMismatch { .. })));
        assert!(matches!(
            grade(&q, &sub(BTreeMap::from([(10, 1)]))),
            Err(QuizError::OrdinalOutOfRange { ordinal: 10 })
        ));
        assert!(matches!(
            grade(&q, &sub(BTreeMap::from([(0, 5)]))),
            Err(QuizError::ChoiceOutOfRange { .. })
        ));
    }

    #[test]
    fn generation_with_mock() {
        let g = generate_quiz(
            &LlmGateway::mock(),
            "Flamenco is a Spanish dance form with guitar and song.",
        )
        .unwrap();
        assert_eq!(g.questions.len(), 10);
        assert_eq!(g.attempts, 1);
    }

    #[test]
    fn generation_keeps_best_and_reports_underfull() {
        let six = render_questions(&(0..6).map(|i| question(i, 2)).collect::<Vec<_>>());
        let eight = render_questions(&(0..8).map(|i| question(i, 2)).collect::<Vec<_>>());
        let provider = Arc::new(ScriptedProvider::new(vec![Ok(six.clone()), Ok(eight), Ok(six)]));
        let gateway = LlmGateway::new(provider.clone(), GatewayConfig::default());
        match generate_quiz(&gateway, "text") {
            Err(QuizError::Underfull { valid, best }) => {
                assert_eq!(valid, 8);
                assert_eq!(best.questions.len(), 8);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(provider.calls(), 3);
    }

    #[test]
    fn generation_succeeds_on_retry() {
        let six = render_questions(&(0..6).map(|i| question(i, 2)).collect::<Vec<_>>());
        let twelve = render_questions(&(0..12).map(|i| question(i, 2)).collect::<Vec<_>>());
        let provider = Arc::new(ScriptedProvider::new(vec![Ok(six), Ok(twelve)]));
        let gateway = LlmGateway::new(provider.clone(), GatewayConfig::default());
        let g = generate_quiz(&gateway, "text").unwrap();
        assert_eq!((g.questions.len(), g.attempts), (12, 2));
        assert_eq!(provider.calls(), 2);
    }

    fn arb_text() -> impl Strategy<Value = String> {
        "[A-Za-z0-9][A-Za-z0-9 ,.?'()-]{0,40}".prop_map(|s| s.trim().to_string())
    }

    fn arb_question() -> impl Strategy<Value = Question> {
        (arb_text(), [arb_text(), arb_text(), arb_text(), arb_text()], 1u8..=4).prop_map(
            |(stem, options, answer_index)| Question {
                stem,
                options,
                answer_index,
            },
        )
    }

    proptest! {
        #[test]
        fn round_trip(questions in proptest::collection::vec(arb_question(), 10..14)) {
            let q = Quiz::new(QuizId(1), UnitId(1), questions).unwrap();
            let parsed = parse_quiz(&render_quiz_text(&q));
            prop_assert!(parsed.rejects.is_empty());
            prop_assert_eq!(parsed.questions, q.questions);
        }

        #[test]
        fn parser_is_total(raw in "\\PC{0,400}") {
            let parsed = parse_quiz(&raw);
            let markers = raw.lines().filter(|l| matches!(classify(l), Some((Marker::Question, _)))).count();
            prop_assert_eq!(parsed.block_count(), markers);
        }

        #[test]
        fn more_correct_answers_never_lower_score(answers in proptest::collection::btree_map(0usize..10, 1u8..=4, 0..10), extra in 0usize..10) {
            let q = quiz(10);
            let sub = Submission { learner_id: LearnerId(1), quiz_id: QuizId(1), answers: answers.clone(), submitted_at: Utc::now() };
            let before = grade(&q, &sub).unwrap();
            let mut improved = sub.clone();
            improved.answers.insert(extra, q.questions[extra].answer_index);
            let after = grade(&q, &improved).unwrap();
            prop_assert!((0.0..=1.0).contains(&before.score));
            prop_assert!(after.score >= before.score);
        }
    }
}
