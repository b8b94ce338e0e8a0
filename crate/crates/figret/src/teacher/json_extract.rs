//! Lenient JSON extraction: real models wrap their JSON verdicts in prose, so
//! take the first balanced object or array and parse that.

use serde_json::Value;

use crate::error::{Error, Result};

/// Find and parse the first JSON object or array embedded in `text`.
pub fn extract_first_json(text: &str) -> Result<Value> {
    let bytes = text.as_bytes();
    let start = bytes
        .iter()
        .position(|&b| b == b'{' || b == b'[')
        .ok_or_else(|| Error::TeacherProtocol("no JSON object or array in reply".into()))?;

    let open = bytes[start];
    let close = if open == b'{' { b'}' } else { b']' };
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            _ if b == open => depth += 1,
            _ if b == close => {
                depth -= 1;
                if depth == 0 {
                    let candidate = &text[start..=i];
                    return serde_json::from_str(candidate).map_err(|e| {
                        Error::TeacherProtocol(format!("reply contains malformed JSON: {e}"))
                    });
                }
            }
            _ => {}
        }
    }
    Err(Error::TeacherProtocol("unbalanced JSON in reply".into()))
}
