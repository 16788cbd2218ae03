//! Outcome labeling from a patient's dated BMI sequence.
//!
//! A patient enters the cohort with at least two BMI recordings spanning
//! at least two years (fixed at 730 days). They are positive when a BMI
//! recorded at least 730 days after the first one crosses upward into a
//! higher obesity class:
//!
//!   start < 30        and later >= 30
//!   30 <= start < 35  and later >= 35
//!   35 <= start < 40  and later >= 40
//!
//! Anything else — including normal-to-overweight transitions — is
//! negative. A positive patient's observation window ends at the first
//! qualifying recording; a negative keeps the full span.

use chrono::NaiveDate;

/// Minimum days between the first BMI and both the last recording
/// (cohort inclusion) and a qualifying recording (positive labeling).
pub const MIN_SPAN_DAYS: i64 = 730;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmiObservation {
    pub date: NaiveDate,
    pub bmi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exclusion {
    NoBmi,
    SingleBmi,
    Span,
}

impl std::fmt::Display for Exclusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exclusion::NoBmi => write!(f, "no BMI"),
            Exclusion::SingleBmi => write!(f, "single BMI"),
            Exclusion::Span => write!(f, "span"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelDecision {
    Included { class: bool, window_start: NaiveDate, window_end: NaiveDate },
    Excluded(Exclusion),
}

fn dangerous_gain(start: f64, later: f64) -> bool {
    (start < 30.0 && later >= 30.0)
        || ((30.0..35.0).contains(&start) && later >= 35.0)
        || ((35.0..40.0).contains(&start) && later >= 40.0)
}

/// Labels a patient from their BMI sequence, sorted by date.
pub fn label_patient(observations: &[BmiObservation]) -> LabelDecision {
    debug_assert!(observations.windows(2).all(|w| w[0].date <= w[1].date));
    let Some(first) = observations.first() else {
        return LabelDecision::Excluded(Exclusion::NoBmi);
    };
    if observations.len() < 2 {
        return LabelDecision::Excluded(Exclusion::SingleBmi);
    }
    let last = observations.last().unwrap();
    if (last.date - first.date).num_days() < MIN_SPAN_DAYS {
        return LabelDecision::Excluded(Exclusion::Span);
    }
    for obs in &observations[1..] {
        if (obs.date - first.date).num_days() >= MIN_SPAN_DAYS && dangerous_gain(first.bmi, obs.bmi)
        {
            return LabelDecision::Included {
                class: true,
                window_start: first.date,
                window_end: obs.date,
            };
        }
    }
    LabelDecision::Included { class: false, window_start: first.date, window_end: last.date }
}
