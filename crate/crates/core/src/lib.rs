//! Evaluation toolkit for lines-and-tubes (L&T) reporting in chest X-ray
//! reports: LLM-backed structured-report extraction, instance matching and
//! F1 metrics with bootstrap confidence intervals, report-text preprocessing,
//! reader-study statistics, and a synthetic oracle for end-to-end checks.

pub mod adapters;
pub mod extraction;
pub mod jsonl;
pub mod metrics;
pub mod prompts;
pub mod reportprep;
pub mod schema;
pub mod studystats;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;
