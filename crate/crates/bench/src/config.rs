//! Layer configuration files: a JSON array of [`LayerConfig`] objects.

use std::fs;
use std::path::Path;

use mobconv_core::LayerConfig;

use crate::error::CliError;

pub fn load_layers(path: &Path) -> Result<Vec<LayerConfig>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_layers(&text)
}

/// Parses and validates a config. Every error names the 1-based line it
/// refers to.
pub fn parse_layers(text: &str) -> Result<Vec<LayerConfig>, CliError> {
    let layers: Vec<LayerConfig> = serde_json::from_str(text)
        .map_err(|e| CliError::Config(format!("line {}: {}", e.line(), strip_position(&e.to_string()))))?;
    if layers.is_empty() {
        return Err(CliError::Config("line 1: config contains no layers".into()));
    }
    let lines = object_start_lines(text);
    for (idx, layer) in layers.iter().enumerate() {
        if let Err(e) = layer.validate() {
            let line = lines.get(idx).copied().unwrap_or(1);
            return Err(CliError::Config(format!("line {line}: {e}")));
        }
    }
    Ok(layers)
}

/// serde_json appends " at line X column Y"; the line is reported up front instead.
fn strip_position(msg: &str) -> &str {
    msg.rfind(" at line ").map_or(msg, |i| &msg[..i])
}

/// Line numbers where each element object of the top-level array opens.
fn object_start_lines(text: &str) -> Vec<usize> {
    let (mut line, mut depth) = (1usize, 0usize);
    let (mut in_str, mut escaped) = (false, false);
    let mut starts = Vec::new();
    for ch in text.chars() {
        if ch == '\n' {
            line += 1;
        }
        if in_str {
            match (escaped, ch) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            '[' | '{' => {
                if ch == '{' && depth == 1 {
                    starts.push(line);
                }
                depth += 1;
            }
            ']' | '}' => depth = depth.saturating_sub(1),
            _ => {}
        }
    }
    starts
}

#[cfg(test)]
mod tests {
    use super::*;
    use mobconv_core::LayerKind;

    const GOOD: &str = r#"[
  {"name": "D1", "kind": "dwconv", "h_i": 114, "w_i": 114, "c_i": 32, "h_f": 3, "w_f": 3, "stride": 1},
  {"name": "P1", "kind": "pwconv", "h_i": 112, "w_i": 112, "c_i": 32, "c_o": 64}
]"#;

    fn message(text: &str) -> String {
        match parse_layers(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_both_kinds() {
        let layers = parse_layers(GOOD).unwrap();
        assert_eq!(layers.len(), 2);
        assert_eq!(layers[0].kind, LayerKind::Dwconv);
        assert_eq!(layers[1].c_o, Some(64));
        assert_eq!(layers[1].stride, 1);
    }

    #[test]
    fn unknown_field_rejected_with_line() {
        let text = GOOD.replace("\"c_o\": 64", "\"c_out\": 64");
        let m = message(&text);
        assert!(m.starts_with("line 3:"), "{m}");
        assert!(m.contains("c_out"), "{m}");
    }

    #[test]
    fn channel_mismatch_rejected_at_parse_time() {
        let text = GOOD.replace("\"c_i\": 32, \"h_f\"", "\"c_i\": 32, \"c_o\": 16, \"h_f\"");
        let m = message(&text);
        assert!(m.starts_with("line 2:") && m.contains("c_o"), "{m}");
    }

    #[test]
    fn geometry_rejected() {
        let m = message(&GOOD.replace("\"h_i\": 114", "\"h_i\": 2"));
        assert!(m.starts_with("line 2:"), "{m}");
        let m = message(&GOOD.replace("\"stride\": 1}", "\"stride\": 4}"));
        assert!(m.contains("divisible"), "{m}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "[\n  {\"name\": \"x\",\n  \"kind\": }\n]";
        assert!(message(text).starts_with("line 3:"));
        assert!(message("[]").contains("no layers"));
    }

    #[test]
    fn braces_inside_strings_ignored() {
        let text =
            "[\n{\"name\": \"{[weird\", \"kind\": \"pwconv\", \"h_i\": 1, \"w_i\": 1, \"c_i\": 1, \"c_o\": 0}\n]";
        assert!(message(text).starts_with("line 2:"));
    }
}
