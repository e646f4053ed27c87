//! Results file written by the runtime shim.
//!
//! One record per line: `P <id>` for each probe fire, then optionally a
//! single `E <type>\t<line>\t<base64 message>`. A trailing line without a
//! newline is a partial write from a killed child and is ignored.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawException {
    pub type_name: String,
    /// Line in the composed program.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResultsError {
    #[error("malformed record on line {line}: {text:?}")]
    Malformed { line: usize, text: String },
    #[error("record after the exception record on line {0}")]
    AfterException(usize),
}

pub fn parse_results(text: &str) -> Result<(Vec<u32>, Option<RawException>), ResultsError> {
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut probes = Vec::new();
    let mut exception = None;
    for (i, record) in complete.lines().enumerate() {
        let line = i + 1;
        if record.is_empty() {
            continue;
        }
        let malformed = || ResultsError::Malformed {
            line,
            text: record.to_string(),
        };
        if exception.is_some() {
            return Err(ResultsError::AfterException(line));
        }
        if let Some(id) = record.strip_prefix("P ") {
            probes.push(id.trim().parse().map_err(|_| malformed())?);
        } else if let Some(rest) = record.strip_prefix("E ") {
            let mut fields = rest.splitn(3, '\t');
            let (Some(type_name), Some(at), Some(encoded)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(malformed());
            };
            let bytes = STANDARD.decode(encoded.trim()).map_err(|_| malformed())?;
            exception = Some(RawException {
                type_name: type_name.to_string(),
                line: at.trim().parse().map_err(|_| malformed())?,
                message: String::from_utf8_lossy(&bytes).into_owned(),
            });
        } else {
            return Err(malformed());
        }
    }
    Ok((probes, exception))
}

/// Renders records in the file format, for tests and simulated runs.
pub fn render_results(probes: &[u32], exception: Option<&RawException>) -> String {
    let mut out: String = probes.iter().map(|p| format!("P {p}\n")).collect();
    if let Some(e) = exception {
        out.push_str(&format!("E {}\t{}\t{}\n", e.type_name, e.line, STANDARD.encode(&e.message)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn probes_in_order() {
        assert_eq!(parse_results("P 1\nP 2\n").unwrap(), (vec![1, 2], None));
        assert_eq!(parse_results("").unwrap(), (vec![], None));
    }

    #[test]
    fn exception_record() {
        let msg = STANDARD.encode("dummy() missing 1 required positional argument: 'alias'\nsecond line");
        let text = format!("P 1\nE TypeError\t14\t{msg}\n");
        let (probes, e) = parse_results(&text).unwrap();
        assert_eq!(probes, [1]);
        let e = e.unwrap();
        assert_eq!(e.type_name, "TypeError");
        assert_eq!(e.line, 14);
        assert!(e.message.ends_with("'alias'\nsecond line"));
    }

    #[test]
    fn partial_last_line_is_ignored() {
        assert_eq!(parse_results("P 1\nP 2\nP 3").unwrap().0, [1, 2]);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(parse_results("X 1\n").is_err());
        assert!(parse_results("P one\n").is_err());
        assert!(parse_results("E TypeError\t3\n").is_err());
        assert!(parse_results("E T\t1\tAA==\nP 1\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(probes in proptest::collection::vec(1u32..1000, 0..50),
                      exc in proptest::option::of(("[A-Za-z]{1,12}", 1usize..500, "\\PC{0,40}"))) {
            let exception = exc.map(|(t, l, m)| RawException { type_name: t, line: l, message: m });
            let text = render_results(&probes, exception.as_ref());
            prop_assert_eq!(parse_results(&text).unwrap(), (probes, exception));
        }
    }
}
