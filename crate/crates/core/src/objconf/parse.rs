use super::types::RawObjectBlock;
use super::{Diagnostic, SourceLocation};

struct OpenBlock {
    kind: String,
    attributes: Vec<(String, String)>,
    location: SourceLocation,
}

/// Splits object-definition text into raw blocks.
///
/// Never fails: malformed regions produce diagnostics and are skipped.
pub fn parse_objects(file: &str, text: &str) -> (Vec<RawObjectBlock>, Vec<Diagnostic>) {
    let mut blocks = Vec::new();
    let mut diagnostics = Vec::new();
    let mut open: Option<OpenBlock> = None;

    let at = |line: usize| SourceLocation {
        file: file.to_string(),
        line,
    };

    for (idx, raw) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }

        if let Some(rest) = define_header(line) {
            if let Some(prev) = open.take() {
                diagnostics.push(unterminated(&prev));
            }
            match parse_header(rest) {
                Some(kind) => {
                    open = Some(OpenBlock {
                        kind,
                        attributes: Vec::new(),
                        location: at(lineno),
                    })
                }
                None => diagnostics.push(Diagnostic::error(
                    Some(at(lineno)),
                    format!("malformed define line '{line}', expected 'define <kind>{{'"),
                )),
            }
            continue;
        }

        let Some(block) = open.as_mut() else {
            diagnostics.push(Diagnostic::error(
                Some(at(lineno)),
                format!("unexpected text outside of a define block: '{line}'"),
            ));
            continue;
        };

        if line == "}" {
            let block = open.take().expect("open block");
            blocks.push(RawObjectBlock {
                kind: block.kind,
                attributes: block.attributes,
                location: block.location,
            });
            continue;
        }

        let (key, value) = match line.split_once(char::is_whitespace) {
            Some((k, v)) => (k, v.trim()),
            None => (line, ""),
        };
        if key.contains(['{', '}']) {
            diagnostics.push(Diagnostic::error(
                Some(at(lineno)),
                format!("malformed attribute line '{line}'"),
            ));
            continue;
        }
        if value.is_empty() {
            diagnostics.push(Diagnostic::error(
                Some(at(lineno)),
                format!("attribute '{key}' has no value"),
            ));
            continue;
        }
        if let Some(slot) = block.attributes.iter_mut().find(|(k, _)| k == key) {
            diagnostics.push(Diagnostic::warning(
                Some(at(lineno)),
                format!("duplicate attribute '{key}', last occurrence wins"),
            ));
            slot.1 = value.to_string();
        } else {
            block.attributes.push((key.to_string(), value.to_string()));
        }
    }

    if let Some(prev) = open.take() {
        diagnostics.push(unterminated(&prev));
    }
    (blocks, diagnostics)
}

fn define_header(line: &str) -> Option<&str> {
    let rest = line.strip_prefix("define")?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest.trim())
    } else {
        None
    }
}

fn parse_header(rest: &str) -> Option<String> {
    let kind = rest.strip_suffix('{')?.trim_end();
    if !kind.is_empty() && kind.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Some(kind.to_string())
    } else {
        None
    }
}

fn unterminated(block: &OpenBlock) -> Diagnostic {
    Diagnostic::error(
        Some(block.location.clone()),
        format!("unterminated '{}' block", block.kind),
    )
}
