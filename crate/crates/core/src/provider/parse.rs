//! Line-oriented parsers for the five response grammars.
//!
//! Keywords are matched case-insensitively at line starts after trimming;
//! markdown fences and leading chatter are tolerated. Parsers never panic:
//! every input yields a parsed value or a `ProviderError::Parse` carrying
//! the offending text for the caller's fallback.

use serde::{Deserialize, Serialize};

use super::ProviderError;

/// One proposed idea with its rationale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedGeneration {
    pub ideas: Vec<(String, String)>,
}

/// Outcome of an idea-classification call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub exists: bool,
    pub idea_id: Option<u64>,
    pub updated_description: Option<String>,
    pub new_description: Option<String>,
}

/// Outcome of an idea-selection call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedSelection {
    pub idea_id: u64,
    pub experiment_description: String,
    pub candidate_payload: String,
}

/// Case-insensitive ASCII prefix strip. Keywords are pure ASCII, so this
/// stays byte-exact on arbitrary unicode input.
fn strip_prefix_ci<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    let mut rest = line;
    for kc in keyword.chars() {
        let mut it = rest.chars();
        let c = it.next()?;
        if !c.eq_ignore_ascii_case(&kc) {
            return None;
        }
        rest = it.as_str();
    }
    Some(rest)
}

/// Lines outside markdown fences, trimmed.
fn prose_lines(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut in_fence = false;
    for raw in text.lines() {
        let line = raw.trim();
        if line.starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if !in_fence {
            out.push(line);
        }
    }
    out
}

fn find_value<'a>(lines: &[&'a str], keyword: &str) -> Option<&'a str> {
    lines
        .iter()
        .find_map(|l| strip_prefix_ci(l, keyword).map(str::trim))
}

const GENERATION_KEYWORDS: &[&str] = &["idea:", "reasoning:"];

/// Parses the generation grammar: one or more `Idea:` lines, each with an
/// optional `Reasoning:` line.
pub fn parse_generation(text: &str) -> Result<ParsedGeneration, ProviderError> {
    let lines = prose_lines(text);
    let mut ideas: Vec<(String, String)> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = strip_prefix_ci(line, "idea:") {
            let (body, next) = take_continuation(rest.trim(), &lines, i + 1, GENERATION_KEYWORDS);
            ideas.push((body, String::new()));
            i = next;
            continue;
        }
        if let Some(rest) = strip_prefix_ci(line, "reasoning:") {
            let (body, next) = take_continuation(rest.trim(), &lines, i + 1, GENERATION_KEYWORDS);
            if let Some(last) = ideas.last_mut() {
                last.1 = body;
            }
            i = next;
            continue;
        }
        i += 1;
    }
    ideas.retain(|(idea, _)| !idea.is_empty());
    if ideas.is_empty() {
        return Err(ProviderError::parse(
            "generation",
            "no `Idea:` lines found",
            text,
        ));
    }
    Ok(ParsedGeneration { ideas })
}

/// Joins a keyword's remainder with following plain lines until a blank
/// line or the next keyword. Returns the body and the index to resume at.
fn take_continuation(
    first: &str,
    lines: &[&str],
    mut i: usize,
    keywords: &[&str],
) -> (String, usize) {
    let mut body = first.to_string();
    while i < lines.len() {
        let line = lines[i];
        if line.is_empty() || keywords.iter().any(|k| strip_prefix_ci(line, k).is_some()) {
            break;
        }
        if !body.is_empty() {
            body.push(' ');
        }
        body.push_str(line);
        i += 1;
    }
    (body, i)
}

/// Parses the classification grammar (`Idea Exists: True/False` plus the
/// id/description lines for each branch).
pub fn parse_classification(text: &str) -> Result<Classification, ProviderError> {
    let lines = prose_lines(text);
    let exists_raw = find_value(&lines, "idea exists:").ok_or_else(|| {
        ProviderError::parse("classification", "missing `Idea Exists:` line", text)
    })?;
    let exists = match exists_raw
        .trim_end_matches(['.', '!'])
        .to_ascii_lowercase()
        .as_str()
    {
        "true" => true,
        "false" => false,
        other => {
            return Err(ProviderError::parse(
                "classification",
                format!("`Idea Exists:` must be True or False, got {other:?}"),
                text,
            ))
        }
    };
    if exists {
        let id_raw = find_value(&lines, "idea id:").ok_or_else(|| {
            ProviderError::parse("classification", "missing `Idea ID:` line", text)
        })?;
        let idea_id = parse_int(id_raw).ok_or_else(|| {
            ProviderError::parse(
                "classification",
                format!("`Idea ID:` is not an integer: {id_raw:?}"),
                text,
            )
        })?;
        Ok(Classification {
            exists: true,
            idea_id: Some(idea_id),
            updated_description: find_value(&lines, "updated description:")
                .filter(|s| !s.is_empty())
                .map(str::to_string),
            new_description: None,
        })
    } else {
        Ok(Classification {
            exists: false,
            idea_id: None,
            updated_description: None,
            new_description: find_value(&lines, "idea description:")
                .filter(|s| !s.is_empty())
                .map(str::to_string),
        })
    }
}

fn parse_int(raw: &str) -> Option<u64> {
    raw.trim()
        .trim_start_matches('#')
        .trim_end_matches(['.', ',', ';'])
        .trim()
        .parse()
        .ok()
}

/// Parses the selection grammar: idea id, experiment description, and the
/// fenced candidate payload.
pub fn parse_selection(text: &str) -> Result<ParsedSelection, ProviderError> {
    let lines = prose_lines(text);
    let id_raw = find_value(&lines, "idea id:")
        .ok_or_else(|| ProviderError::parse("selection", "missing `Idea ID:` line", text))?;
    let idea_id = parse_int(id_raw).ok_or_else(|| {
        ProviderError::parse(
            "selection",
            format!("`Idea ID:` is not an integer: {id_raw:?}"),
            text,
        )
    })?;
    let description = find_value(&lines, "experiment description:")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| {
            ProviderError::parse("selection", "missing `Experiment description:` line", text)
        })?;
    let candidate_payload = fenced_block(text).ok_or_else(|| {
        ProviderError::parse("selection", "missing fenced candidate block", text)
    })?;
    Ok(ParsedSelection {
        idea_id,
        experiment_description: description.to_string(),
        candidate_payload,
    })
}

/// Content of the first ``` fenced block, verbatim minus the fence lines.
fn fenced_block(text: &str) -> Option<String> {
    let mut inner: Vec<&str> = Vec::new();
    let mut in_fence = false;
    for raw in text.lines() {
        if raw.trim_start().starts_with("```") {
            if in_fence {
                return Some(inner.join("\n"));
            }
            in_fence = true;
            continue;
        }
        if in_fence {
            inner.push(raw);
        }
    }
    None
}

/// Parses the summarization grammar: the `- Results:` bullet.
pub fn parse_summary(text: &str) -> Result<String, ProviderError> {
    let lines = prose_lines(text);
    for (i, line) in lines.iter().enumerate() {
        let rest = strip_prefix_ci(line, "- results:")
            .or_else(|| strip_prefix_ci(line, "results:"));
        if let Some(rest) = rest {
            let (body, _) = take_continuation(rest.trim(), &lines, i + 1, &["- results:"]);
            if body.is_empty() {
                return Err(ProviderError::parse("summary", "empty summary body", text));
            }
            return Ok(body);
        }
    }
    Err(ProviderError::parse(
        "summary",
        "missing `- Results:` line",
        text,
    ))
}

/// Parses the capping grammar: `Dropping Ideas: [i, j, ...]`.
pub fn parse_capping(text: &str) -> Result<Vec<u64>, ProviderError> {
    let lines = prose_lines(text);
    let raw = find_value(&lines, "dropping ideas:")
        .ok_or_else(|| ProviderError::parse("capping", "missing `Dropping Ideas:` line", text))?;
    let open = raw.find('[').ok_or_else(|| {
        ProviderError::parse("capping", "expected a bracketed list of ids", text)
    })?;
    let close = raw[open..]
        .find(']')
        .map(|c| open + c)
        .ok_or_else(|| ProviderError::parse("capping", "unterminated id list", text))?;
    let inner = &raw[open + 1..close];
    let mut ids = Vec::new();
    for token in inner.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        match parse_int(token) {
            Some(id) => ids.push(id),
            None => {
                return Err(ProviderError::parse(
                    "capping",
                    format!("non-integer id in list: {token:?}"),
                    text,
                ))
            }
        }
    }
    Ok(ids)
}
