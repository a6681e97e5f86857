use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("no code block")]
    NoCode,
    #[error("expected stages 0..{expected}, found markers {found:?}")]
    StageMarkers { expected: usize, found: Vec<usize> },
}

const FENCE: &str = "```";

/// Returns the contents of the first fenced code block. Without a fence the
/// whole response is accepted only if every non-empty line looks like code.
pub fn extract_code(text: &str) -> Result<String, ExtractError> {
    if let Some(block) = first_fenced_block(text) {
        if block.trim().is_empty() {
            return Err(ExtractError::NoCode);
        }
        return Ok(block);
    }
    let trimmed = text.trim_matches('\n').trim_end();
    let mut saw_statement = false;
    for line in trimmed.lines() {
        let l = line.trim();
        if l.is_empty() {
            continue;
        }
        if !looks_like_code(l) {
            return Err(ExtractError::NoCode);
        }
        if !l.starts_with('#') {
            saw_statement = true;
        }
    }
    if saw_statement {
        Ok(trimmed.to_string())
    } else {
        Err(ExtractError::NoCode)
    }
}

fn first_fenced_block(text: &str) -> Option<String> {
    let mut lines = text.lines();
    for line in lines.by_ref() {
        if line.trim_start().starts_with(FENCE) {
            let mut body = Vec::new();
            for inner in lines.by_ref() {
                if inner.trim_start().starts_with(FENCE) {
                    break;
                }
                body.push(inner);
            }
            return Some(body.join("\n").trim_end().to_string());
        }
    }
    None
}

/// Text preceding the first fence (or the whole text when there is none).
pub fn prose_before_code(text: &str) -> &str {
    match text.find(FENCE) {
        Some(i) => &text[..i],
        None => "",
    }
}

const KEYWORDS: &[&str] = &[
    "def ", "return", "if ", "elif ", "else", "for ", "while ", "import ", "from ", "class ", "try",
    "except", "finally", "pass", "with ", "lambda", "break", "continue", "raise ", "global ", "@",
];

fn looks_like_code(line: &str) -> bool {
    if line.starts_with('#') {
        return true;
    }
    if KEYWORDS.iter().any(|k| line.starts_with(k)) {
        return true;
    }
    // Prose sentences end in terminal punctuation after several words.
    let words = line.split_whitespace().count();
    let ends_like_sentence = line.ends_with('.') || line.ends_with('!') || line.ends_with('?');
    if words >= 4 && ends_like_sentence {
        return false;
    }
    line.contains(['=', '(', ')', '[', ']', '{', '}'])
}

/// Splits a one-shot multi-stage listing on `# --- stage <i> ---` marker
/// lines. Markers must cover exactly `0..stage_count` in order; text before
/// the first marker is prepended to stage 0.
pub fn split_stages(code: &str, stage_count: usize) -> Result<Vec<String>, ExtractError> {
    let mut preamble = String::new();
    let mut found: Vec<usize> = Vec::new();
    let mut parts: Vec<String> = Vec::new();
    for line in code.lines() {
        if let Some(idx) = parse_marker(line) {
            found.push(idx);
            parts.push(String::new());
            continue;
        }
        let target = parts.last_mut().unwrap_or(&mut preamble);
        target.push_str(line);
        target.push('\n');
    }
    let expected: Vec<usize> = (0..stage_count).collect();
    if found != expected {
        return Err(ExtractError::StageMarkers {
            expected: stage_count,
            found,
        });
    }
    if !preamble.trim().is_empty() {
        parts[0] = format!("{preamble}{}", parts[0]);
    }
    let parts: Vec<String> = parts.into_iter().map(|p| p.trim_matches('\n').trim_end().to_string()).collect();
    if parts.iter().any(|p| p.trim().is_empty()) {
        return Err(ExtractError::NoCode);
    }
    Ok(parts)
}

fn parse_marker(line: &str) -> Option<usize> {
    let body = line.trim().strip_prefix('#')?.trim();
    let body = body.strip_prefix("---")?.strip_suffix("---")?.trim();
    let idx = body.strip_prefix("stage")?.trim();
    idx.parse().ok()
}

/// First `{...}` span in `text`, without the braces.
pub fn braced_thought(text: &str) -> Option<String> {
    let start = text.find('{')?;
    let end = start + text[start..].find('}')?;
    let inner = text[start + 1..end].trim();
    (!inner.is_empty()).then(|| inner.to_string())
}
