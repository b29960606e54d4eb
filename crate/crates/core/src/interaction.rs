//! Ownership questions, respondents, answer interpretation and state updates.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{complete_with_retry, extract_json_object, ChatModel, LlmError, ResponseError};
use crate::map::ObjectRecord;
use crate::prompts::{self, fill, join_names, round_to};
use crate::roster::Roster;
use crate::scores::{OwnerSet, OwnershipScores};
use crate::scoring::{detect_shared, ShareParams};
use crate::state::AcquisitionState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub object_id: String,
    pub text: String,
    pub focus_candidates: Vec<String>,
    /// Set when the chat reply had to be truncated or replaced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Per-user owner flags in roster order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerVector(IndexMap<String, bool>);

impl AnswerVector {
    pub fn from_owners(roster: &Roster, owners: &OwnerSet) -> Self {
        Self(
            roster
                .names()
                .map(|n| (n.to_string(), owners.contains(n)))
                .collect(),
        )
    }

    pub fn get(&self, user: &str) -> Option<bool> {
        self.0.get(user).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, bool)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn owners(&self) -> OwnerSet {
        self.0
            .iter()
            .filter(|(_, v)| **v)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn is_all_false(&self) -> bool {
        !self.0.values().any(|v| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub vector: AnswerVector,
    /// Set when the chat interpreter failed and the rule-based parser was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Error)]
pub enum RespondError {
    #[error("no ground truth for object {0}")]
    NoTruth(String),
    #[error("scripted answers exhausted at object {0}")]
    ScriptExhausted(String),
    #[error("console input closed")]
    EndOfInput,
    #[error("console i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ApplyError {
    #[error("object {0} was already asked")]
    AlreadyAsked(String),
    #[error("unknown object {0}")]
    UnknownObject(String),
}

pub enum Respondent {
    Oracle(BTreeMap<String, OwnerSet>),
    Scripted(VecDeque<String>),
    Console {
        input: Box<dyn BufRead>,
        output: Box<dyn Write>,
    },
}

impl Respondent {
    pub fn kind(&self) -> &'static str {
        match self {
            Respondent::Oracle(_) => "oracle",
            Respondent::Scripted(_) => "scripted",
            Respondent::Console { .. } => "console",
        }
    }

    /// One answer per non-blank line.
    pub fn scripted_from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Respondent::Scripted(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        ))
    }

    pub fn stdio() -> Self {
        Respondent::Console {
            input: Box::new(std::io::BufReader::new(std::io::stdin())),
            output: Box::new(std::io::stdout()),
        }
    }

    pub fn respond(&mut self, q: &Question) -> Result<String, RespondError> {
        match self {
            Respondent::Oracle(truth) => truth
                .get(&q.object_id)
                .map(oracle_sentence)
                .ok_or_else(|| RespondError::NoTruth(q.object_id.clone())),
            Respondent::Scripted(queue) => queue
                .pop_front()
                .ok_or_else(|| RespondError::ScriptExhausted(q.object_id.clone())),
            Respondent::Console { input, output } => {
                write!(output, "{}\n> ", q.text)?;
                output.flush()?;
                let mut line = String::new();
                if input.read_line(&mut line)? == 0 {
                    return Err(RespondError::EndOfInput);
                }
                Ok(line.trim().to_string())
            }
        }
    }
}

/// "It belongs to Bob.", "It belongs to Bob and Mary.", "It belongs to Bob, Mary and Tom."
pub fn oracle_sentence(owners: &OwnerSet) -> String {
    let names: Vec<&str> = owners.iter().map(String::as_str).collect();
    let list = match names.as_slice() {
        [] => return "It belongs to someone else.".to_string(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    };
    format!("It belongs to {list}.")
}

fn focus(scores: &OwnershipScores) -> Vec<String> {
    scores
        .ranked()
        .into_iter()
        .take(2)
        .map(|(u, _)| u.to_string())
        .collect()
}

pub fn template_question(rec: &ObjectRecord) -> Question {
    let focus = focus(&rec.scores);
    let named = match focus.as_slice() {
        [a] => format!("{a} or someone else"),
        [a, b, ..] => format!("{a}, {b}, or someone else"),
        [] => "someone".to_string(),
    };
    Question {
        object_id: rec.object_id.clone(),
        text: format!(
            "Is this {} (object {}) owned by {named}?",
            rec.class_label, rec.object_id
        ),
        focus_candidates: focus,
        note: None,
    }
}

pub fn build_question_prompt(rec: &ObjectRecord, roster: &Roster) -> String {
    let [x, y, z] = rec.position.map(|c| round_to(c, 2));
    let position = format!("[{x}, {y}, {z}]");
    let p_final: serde_json::Map<String, serde_json::Value> = rec
        .scores
        .iter()
        .map(|(u, s)| (u.to_string(), round_to(s, 3).into()))
        .collect();
    let p_final = serde_json::Value::Object(p_final).to_string();
    let owners = join_names(roster.names());
    fill(
        prompts::QUESTION_TEMPLATE,
        &[
            ("OBJECT_ID", &rec.object_id),
            ("OBJECT_CLASS", &rec.class_label),
            ("POSITION", &position),
            ("OWNERS", &owners),
            ("P_FINAL", &p_final),
        ],
    )
}

/// Splits off the first sentence; the flag reports whether anything followed it.
pub fn first_sentence(text: &str) -> (String, bool) {
    let unquoted: String = text
        .chars()
        .filter(|c| !matches!(c, '"' | '`' | '\u{201c}' | '\u{201d}'))
        .collect();
    let t = unquoted.trim().trim_matches('\'').trim();
    let mut chars = t.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '?' | '.' | '!') {
            let at_break = chars.peek().is_none_or(|(_, n)| n.is_whitespace());
            if at_break {
                let end = i + c.len_utf8();
                let rest = t[end..].trim();
                return (t[..end].to_string(), !rest.is_empty());
            }
        }
    }
    (t.to_string(), false)
}

fn parse_question_reply(reply: &str) -> Result<(String, bool), ResponseError> {
    let (text, truncated) = first_sentence(reply);
    if text.is_empty() {
        Err(ResponseError::new("empty question", reply))
    } else {
        Ok((text, truncated))
    }
}

/// Template question, or a chat-generated one when `chat` is given.
pub fn generate_question(
    rec: &ObjectRecord,
    roster: &Roster,
    chat: Option<&mut dyn ChatModel>,
) -> Result<Question, LlmError> {
    let template = template_question(rec);
    let Some(chat) = chat else {
        return Ok(template);
    };
    let prompt = build_question_prompt(rec, roster);
    Ok(
        match complete_with_retry(chat, &prompt, parse_question_reply)? {
            Ok((text, truncated)) => Question {
                text,
                note: truncated.then(|| "reply truncated to its first sentence".to_string()),
                ..template
            },
            Err(reason) => Question {
                note: Some(format!("template fallback: {reason}")),
                ..template
            },
        },
    )
}

fn normalize_token(token: &str) -> String {
    let lower = token.to_lowercase().replace('\u{2019}', "'");
    let stripped = lower
        .strip_suffix("'s")
        .or_else(|| lower.strip_suffix('\''))
        .unwrap_or(&lower);
    stripped.to_string()
}

/// Marks every roster name mentioned in the answer, ignoring case and possessives.
pub fn rule_interpret(answer: &str, roster: &Roster) -> AnswerVector {
    let tokens: Vec<String> = answer
        .split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .filter(|t| !t.is_empty())
        .map(normalize_token)
        .collect();
    AnswerVector(
        roster
            .names()
            .map(|n| {
                let key = n.to_lowercase();
                (n.to_string(), tokens.contains(&key))
            })
            .collect(),
    )
}

pub fn build_interpretation_prompt(q: &Question, answer: &str, roster: &Roster) -> String {
    let names: Vec<&str> = roster.names().collect();
    let lines = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let sep = if i + 1 < names.len() { "," } else { "" };
            format!("    \"{n}\": true/false{sep}")
        })
        .collect::<Vec<_>>()
        .join("\n");
    fill(
        prompts::INTERPRETATION_TEMPLATE,
        &[
            ("QUESTION", &q.text),
            ("USER_ANSWER", answer),
            ("OWNERS", &join_names(names.iter().copied())),
            ("CANDIDATE_LINES", &lines),
        ],
    )
}

pub fn parse_interpretation_response(
    text: &str,
    roster: &Roster,
) -> Result<AnswerVector, ResponseError> {
    let obj = extract_json_object(text, "ownership_boolean")
        .ok_or_else(|| ResponseError::new("no ownership_boolean object", text))?;
    let flags = obj["ownership_boolean"]
        .as_object()
        .ok_or_else(|| ResponseError::new("ownership_boolean is not an object", text))?;
    let mut out = IndexMap::new();
    for n in roster.names() {
        let v = flags
            .get(n)
            .ok_or_else(|| ResponseError::new(format!("missing user {n}"), text))?
            .as_bool()
            .ok_or_else(|| ResponseError::new(format!("non-boolean flag for {n}"), text))?;
        out.insert(n.to_string(), v);
    }
    Ok(AnswerVector(out))
}

/// Rule-based interpretation, or chat-based with rule fallback when `chat` is given.
pub fn interpret_answer(
    q: &Question,
    answer: &str,
    roster: &Roster,
    chat: Option<&mut dyn ChatModel>,
) -> Result<Interpretation, LlmError> {
    let Some(chat) = chat else {
        return Ok(Interpretation {
            vector: rule_interpret(answer, roster),
            note: None,
        });
    };
    let prompt = build_interpretation_prompt(q, answer, roster);
    Ok(
        match complete_with_retry(chat, &prompt, |r| parse_interpretation_response(r, roster))? {
            Ok(vector) => Interpretation { vector, note: None },
            Err(reason) => Interpretation {
                vector: rule_interpret(answer, roster),
                note: Some(format!("rule-based fallback: {reason}")),
            },
        },
    )
}

/// Records the answer: named owners get score 1 and everyone else 0. An
/// all-false answer keeps the scores and flags the object for revisiting.
pub fn apply_answer(
    state: &mut AcquisitionState,
    object_id: &str,
    v: &AnswerVector,
    share: &ShareParams,
) -> Result<(), ApplyError> {
    let rec = state
        .map
        .get_mut(object_id)
        .ok_or_else(|| ApplyError::UnknownObject(object_id.to_string()))?;
    if rec.asked {
        return Err(ApplyError::AlreadyAsked(object_id.to_string()));
    }
    rec.asked = true;
    let owners = v.owners();
    if owners.is_empty() {
        state.needs_revisit.insert(object_id.to_string());
    } else {
        rec.scores =
            OwnershipScores::from_pairs(v.iter().map(|(u, b)| (u, if b { 1.0 } else { 0.0 })));
        rec.share = detect_shared(&rec.scores, share);
    }
    state.answers.insert(object_id.to_string(), owners);
    Ok(())
}
