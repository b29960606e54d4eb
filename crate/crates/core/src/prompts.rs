//! Prompt templates for ownership inference, question generation and answer
//! interpretation. Slots are written `{NAME}` and filled by [`fill`].

pub const NOT_AVAILABLE: &str = "not available";

pub const INFERENCE_TEMPLATE: &str = "\
You are an excellent household robot.
Your task: estimate ownership probability for ONE target object using ALL given information sources.

IMPORTANT:
- This is MULTI-LABEL probability (each person independently between 0 and 1).
- The probabilities MUST NOT sum to 1.
- Output numbers only (0..1), no formulas.

{MEMBER_BACKGROUND}

### Target Object
- object_id: {OBJECT_ID}
- class: {OBJECT_CLASS}

### Similar Objects (may include known_ownership for asked==1 or high-confidence)
{SIMILAR_OBJECTS}

### Nearby Objects (may include known_ownership)
{NEARBY_OBJECTS}

### Usage History (last {WINDOW_DAYS} days)
{USAGE_HISTORY}

### Output
Return ONLY the following JSON (no other explanation, no code fences):
{
  \"ownership_distribution\": {OUTPUT_FORMAT}
}
";

pub const QUESTION_TEMPLATE: &str = "\
You are a dialogue module for a home-service robot.
Based on the given information, generate exactly ONE natural English question
that the robot will ask the user to identify the owner of an object.

The robot needs to ask the user who owns the following object.

### Object Information
[Object ID]
{OBJECT_ID}

[Object class]
{OBJECT_CLASS}

[Position information]
{POSITION}

[Ownership candidates]
{OWNERS}

[Ownership probability distribution P_final (if available)]
{P_FINAL}

--- Requirements for the generated question ---
- Produce ONLY one single English question sentence.
- Make it sound natural and conversational, as if a home robot is asking the user directly.
- If possible, include light contextual details such as the object's class name,
  so the user can easily understand which object is being referred to.
- P_final represents estimated multi-label ownership probabilities for each candidate owner
  (the values do not necessarily sum to 1). Use this distribution to design a question that is
  easy for the user to answer, for example by focusing on the 1–2 most likely owners as explicit
  options and treating the others as 'someone else' if appropriate.
- You may mention the ownership candidates ({OWNERS}) or 'someone else'.
- The output must be ONLY the question sentence.
  Do NOT include explanations, bullet points, JSON, quotes, or additional text.
";

pub const INTERPRETATION_TEMPLATE: &str = "\
You are an excellent household robot.
From the dialogue between the robot and the user, you must decide,
for each candidate person, whether they are an owner of the object (True) or not (False).
Multiple people can be owners (shared / joint ownership is allowed).

Below is the robot's question to the user and the user's answer.

[Robot's question]
{QUESTION}

[User's answer]
{USER_ANSWER}

[Ownership candidates]
{OWNERS}

--- Decision rules ---
- For each candidate person, return true if they can reasonably be considered an owner of the object,
  and false if they should not be considered an owner.
- It is allowed that more than one person is true (shared ownership is possible).
- If the user mentions someone who is not in the candidate list, you should normally return false
  for all candidates, unless the user also clearly indicates one of the candidates as an owner.
- Even if the user's answer is vague, try to make a reasonable true/false decision for each candidate.
- If it is truly impossible to decide, you may return false for all candidates.

--- Output format ---
Return ONLY the following JSON. Do NOT include any extra text, explanation, or natural language.
{
  \"ownership_boolean\": {
{CANDIDATE_LINES}
  }
}
";

/// Replaces every `{KEY}` slot. Values are inserted literally and never rescanned.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (key, value) in slots {
            let token_len = key.len() + 2;
            if tail.len() >= token_len
                && tail[1..].starts_with(key)
                && tail.as_bytes()[token_len - 1] == b'}'
            {
                out.push_str(value);
                rest = &tail[token_len..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// Rounds to `places` decimals for compact prompt rendering.
pub fn round_to(x: f64, places: i32) -> f64 {
    let m = 10f64.powi(places);
    (x * m).round() / m
}

/// Candidate list as `Bob, Mary, Tom`.
pub fn join_names<'a>(names: impl IntoIterator<Item = &'a str>) -> String {
    names.into_iter().collect::<Vec<_>>().join(", ")
}
