use std::sync::LazyLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledExample;
use super::metrics::{compute_metrics, EvalReport};
use crate::error::{Error, Result};

/// Everything needed to render a one-shot classification prompt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instruction: String,
    pub shot_text: String,
    /// `"yes"` or `"no"`.
    pub shot_label: String,
    pub query_text: String,
    pub disorder: String,
}

pub fn default_instruction(disorder: &str) -> String {
    format!(
        "You help a counselor screen messages posted on an online support forum. \
         Read each message and judge whether its writer shows signs of {disorder}."
    )
}

impl PromptBundle {
    /// Picks the labeled shot uniformly from `train`.
    pub fn one_shot(train: &[LabeledExample], query: &str, disorder: &str, rng: &mut impl Rng) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let shot = &train[rng.random_range(0..train.len())];
        Ok(Self {
            instruction: default_instruction(disorder),
            shot_text: shot.text.clone(),
            shot_label: if shot.label == 1 { "yes" } else { "no" }.into(),
            query_text: query.to_string(),
            disorder: disorder.to_string(),
        })
    }
}

pub fn render_prompt(b: &PromptBundle) -> String {
    format!(
        "{instruction}\n\n\
         Message:\n{shot}\n\
         Signs of {disorder}: {label}\n\n\
         Message:\n{query}\n\
         Signs of {disorder}? Reply with a single word, yes or no.\n",
        instruction = b.instruction.trim(),
        shot = b.shot_text.trim(),
        label = b.shot_label,
        query = b.query_text.trim(),
        disorder = b.disorder,
    )
}

static ANSWER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());

/// First standalone yes/no in the response, case-insensitive.
pub fn parse_response(raw: &str) -> Result<u8> {
    match ANSWER.captures(raw) {
        Some(c) => Ok(u8::from(c[1].eq_ignore_ascii_case("yes"))),
        None => Err(Error::Unparseable(raw.to_string())),
    }
}

/// One recorded generation and the gold label of its query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordedResponse {
    pub response: String,
    pub label: u8,
}

/// Scores recorded responses; unparseable ones count as negative and are tallied.
pub fn score_responses(records: &[RecordedResponse]) -> Result<EvalReport> {
    let mut unparsed = 0;
    let preds: Vec<u8> = records
        .iter()
        .map(|r| {
            parse_response(&r.response).unwrap_or_else(|_| {
                unparsed += 1;
                0
            })
        })
        .collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let mut report = compute_metrics(&preds, &labels)?;
    report.unparsed_count = Some(unparsed);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bundle() -> PromptBundle {
        PromptBundle {
            instruction: default_instruction("anxiety"),
            shot_text: "I keep worrying about everything.".into(),
            shot_label: "yes".into(),
            query_text: "Had a lovely walk today.".into(),
            disorder: "anxiety".into(),
        }
    }

    #[test]
    fn rendering() {
        let b = bundle();
        let out = render_prompt(&b);
        assert_eq!(out, render_prompt(&b));
        assert!(out.contains("Signs of anxiety: yes"));
        assert!(out.contains("Signs of anxiety? Reply"));
        assert!(out.find(&b.shot_text).unwrap() < out.find(&b.query_text).unwrap());
        assert!(out.trim_end().ends_with("yes or no."));
    }

    #[test]
    fn shot_comes_from_train() {
        let train = vec![LabeledExample::new("only one", 0)];
        let b = PromptBundle::one_shot(&train, "q", "stress", &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!((b.shot_text.as_str(), b.shot_label.as_str()), ("only one", "no"));
    }

    #[test]
    fn parsing() {
        assert_eq!(parse_response("Yes, this post shows signs.").unwrap(), 1);
        assert_eq!(parse_response("no").unwrap(), 0);
        assert_eq!(parse_response("NO. Not really, yes?").unwrap(), 0);
        assert!(parse_response("The post is ambiguous.").is_err());
        assert!(parse_response("nothing yesterday").is_err());
    }

    #[test]
    fn replay_scoring() {
        let recs = [("Yes.", 1), ("No", 1), ("unclear", 1), ("no", 0)]
            .map(|(r, l)| RecordedResponse { response: r.into(), label: l });
        let rep = score_responses(&recs).unwrap();
        assert_eq!((rep.tp, rep.fn_, rep.tn, rep.unparsed_count), (1, 2, 1, Some(1)));
    }
}
