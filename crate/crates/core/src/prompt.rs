//! Prompt construction for the three guidance steps and parsing of the
//! structured responses.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ContractViolation, CoverageSet, ExceptionInfo, ExecutionOutcome, Snippet};
use crate::scope::UndefinedRefs;

/// Version tag of the prompt texts below; recorded in reports.
pub const PROMPT_VERSION: &str = "1";

pub const SYSTEM_MESSAGE: &str = "You are an expert Python programmer.";

const STEP1_INSTRUCTION: &str =
    "Provide self-contained and concrete Python values to initialize the undefined variables in the code snippet.";

const STEP2_PROBLEM: &str =
    "When trying to execute the code snippet with the provided imports and initialization, the following error happens:";

const STEP2_TASK: &str = "Provide a fixed version of the imports and initialization to solve the error and make the code snippet executable.";

const STEP3_PROBLEM: &str = "When trying to execute the code snippet with the provided imports and initialization, the lines commented with \"uncovered\" are not executed.";

const STEP3_TASK: &str =
    "Provide a modified version of the imports and initialization to execute one of the uncovered paths in the code snippet.";

pub const RESPONSE_SPEC: &str = "\
Respond strictly with JSON. The JSON should be compatible with the TypeScript type \"Response\":

```ts
interface Response {
  // Python import statements, one string per import
  imports: string[];

  // Python code to initialize undefined variables, one string per variable
  initialization: string[];
}
```";

pub const UNCOVERED_MARK: &str = " # uncovered";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub messages: Vec<Message>,
}

impl Conversation {
    pub fn push(&mut self, role: Role, content: impl Into<String>) {
        self.messages.push(Message {
            role,
            content: content.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Plain-text transcript, one headed section per message.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            let _ = writeln!(out, "=== {role} ===\n{}", m.content);
        }
        out
    }
}

/// Imports and initialization statements proposed by a generator.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorResponse {
    pub imports: Vec<String>,
    pub initialization: Vec<String>,
}

impl GeneratorResponse {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("string lists serialize")
    }
}

#[derive(Debug, Error)]
#[error("unparseable response: {0}")]
pub struct ResponseParseError(pub String);

fn fenced(label: &str, body: &str) -> String {
    let body = body.strip_suffix('\n').unwrap_or(body);
    format!("# begin {label}\n{body}\n# end {label}")
}

fn names_block(label: &str, names: &[String]) -> String {
    let mut out = format!("# begin {label}\n");
    for name in names {
        out.push_str(name);
        out.push('\n');
    }
    out.push_str(&format!("# end {label}"));
    out
}

fn join_blocks(blocks: &[&str]) -> String {
    blocks.join("\n\n")
}

pub fn gen_prompt1(snippet: &Snippet, refs: &UndefinedRefs) -> Conversation {
    let code = fenced("code snippet", snippet.source());
    let names = undefined_blocks(refs);
    let mut c = Conversation::default();
    c.push(Role::System, SYSTEM_MESSAGE);
    c.push(Role::User, join_blocks(&[STEP1_INSTRUCTION, &code, &names, RESPONSE_SPEC]));
    c
}

/// The undefined-variable and undefined-member blocks of the step-1 prompt.
pub fn undefined_blocks(refs: &UndefinedRefs) -> String {
    join_blocks(&[
        &names_block("undefined variables", &refs.variables),
        &names_block("undefined attributes and methods", &refs.members),
    ])
}

/// Renders the error block. Lines are snippet-relative; errors raised inside
/// the prefix carry no snippet line.
pub fn error_block(snippet: &Snippet, exception: &ExceptionInfo) -> String {
    let mut body = String::new();
    match exception.snippet_line {
        Some(line) => {
            let _ = writeln!(body, "Execution error at line {line}:");
            let _ = writeln!(body, "{}", snippet.source_line(line).unwrap_or_default());
        }
        None => {
            let _ = writeln!(body, "Execution error in the imports and initialization:");
        }
    }
    if exception.message.is_empty() {
        body.push_str(&exception.type_name);
    } else {
        let _ = write!(body, "{}: {}", exception.type_name, exception.message);
    }
    fenced("error message", &body)
}

/// Extends the conversation that produced the failing prefix with the
/// error report. `previous` must end with the assistant turn that proposed
/// the prefix.
pub fn gen_prompt2(
    previous: &Conversation,
    snippet: &Snippet,
    outcome: &ExecutionOutcome,
) -> Result<Conversation, ContractViolation> {
    let exception = outcome
        .exception
        .as_ref()
        .ok_or_else(|| ContractViolation("error prompt requested for a run without an exception".into()))?;
    let block = error_block(snippet, exception);
    let mut c = previous.clone();
    c.push(Role::User, join_blocks(&[STEP2_PROBLEM, &block, STEP2_TASK, RESPONSE_SPEC]));
    Ok(c)
}

/// Appends the uncovered mark to the annotation line of every statement
/// whose probe did not fire.
pub fn annotate_uncovered(snippet: &Snippet, covered: &CoverageSet) -> String {
    let mut marked = vec![false; snippet.line_count() + 1];
    for entry in snippet.statement_index() {
        if !covered.contains(entry.probe_id) {
            marked[entry.mark_line] = true;
        }
    }
    let mut out = String::with_capacity(snippet.source().len());
    for (i, line) in snippet.source().split_inclusive('\n').enumerate() {
        let (text, eol) = match line.strip_suffix('\n') {
            Some(t) => match t.strip_suffix('\r') {
                Some(t2) => (t2, "\r\n"),
                None => (t, "\n"),
            },
            None => (line, ""),
        };
        out.push_str(text);
        if marked.get(i + 1).copied().unwrap_or(false) {
            out.push_str(UNCOVERED_MARK);
        }
        out.push_str(eol);
    }
    out
}

/// A fresh conversation carrying the annotated snippet.
pub fn gen_prompt3(annotated: &str) -> Conversation {
    let code = fenced("code snippet", annotated);
    let mut c = Conversation::default();
    c.push(Role::System, SYSTEM_MESSAGE);
    c.push(Role::User, join_blocks(&[STEP3_PROBLEM, &code, STEP3_TASK, RESPONSE_SPEC]));
    c
}

/// Strict parse after removing at most one surrounding code fence.
pub fn parse_response(raw: &str) -> Result<GeneratorResponse, ResponseParseError> {
    let body = strip_fence(raw.trim());
    serde_json::from_str(body.trim()).map_err(|e| ResponseParseError(e.to_string()))
}

fn strip_fence(text: &str) -> &str {
    let Some(rest) = text.strip_prefix("```") else {
        return text;
    };
    let Some(inner) = rest.strip_suffix("```") else {
        return text;
    };
    // Drop an optional language tag on the opening fence line.
    match inner.split_once('\n') {
        Some((tag, body)) if !tag.trim_start().starts_with('{') => body,
        _ => inner,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProbeId;
    use proptest::prelude::*;

    fn example() -> Snippet {
        Snippet::new("running", crate::fixtures::RUNNING_EXAMPLE).unwrap()
    }

    #[test]
    fn prompt1_has_five_blocks_in_order() {
        let s = example();
        let refs = crate::scope::get_undefined_refs(&s).unwrap();
        let c = gen_prompt1(&s, &refs);
        assert_eq!(c.messages.len(), 2);
        let text = &c.messages[1].content;
        let positions: Vec<usize> = [
            STEP1_INSTRUCTION,
            "# begin code snippet\ntry:\n",
            "# begin undefined variables\n",
            "# begin undefined attributes and methods\nself.user_type\nself.name\nself.alias\n# end undefined attributes and methods",
            "Respond strictly with JSON.",
        ]
        .iter()
        .map(|needle| text.find(needle).unwrap_or_else(|| panic!("missing {needle:?}")))
        .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(text.contains("    result = 1\n# end code snippet"));
    }

    #[test]
    fn prompt1_with_no_refs_keeps_empty_blocks() {
        let s = Snippet::new("t", "x = 1").unwrap();
        let text = gen_prompt1(&s, &UndefinedRefs::default()).messages[1].content.clone();
        assert!(text.contains("# begin undefined variables\n# end undefined variables"));
        assert!(text.contains("# begin undefined attributes and methods\n# end undefined attributes and methods"));
    }

    #[test]
    fn prompt2_error_block() {
        let s = Snippet::new("t", "a = 1\nb = a / 0\n").unwrap();
        let outcome = ExecutionOutcome::failed(
            [ProbeId(1)].into_iter().collect(),
            ExceptionInfo {
                type_name: "ZeroDivisionError".into(),
                message: "division by zero".into(),
                snippet_line: Some(2),
            },
        );
        let mut c = Conversation::default();
        c.push(Role::User, "q");
        c.push(Role::Assistant, "a");
        let c2 = gen_prompt2(&c, &s, &outcome).unwrap();
        assert_eq!(c2.messages.len(), 3);
        assert_eq!(&c2.messages[..2], &c.messages[..]);
        assert!(c2.messages[2].content.contains(
            "# begin error message\nExecution error at line 2:\nb = a / 0\nZeroDivisionError: division by zero\n# end error message"
        ));
    }

    #[test]
    fn prompt2_requires_exception() {
        let s = Snippet::new("t", "x = 1").unwrap();
        let ok = ExecutionOutcome::clean(CoverageSet::new());
        assert!(gen_prompt2(&Conversation::default(), &s, &ok).is_err());
    }

    #[test]
    fn prefix_errors_render_without_line() {
        let s = Snippet::new("t", "x = 1").unwrap();
        let e = ExceptionInfo {
            type_name: "NameError".into(),
            message: "name 'q' is not defined".into(),
            snippet_line: None,
        };
        assert_eq!(
            error_block(&s, &e),
            "# begin error message\nExecution error in the imports and initialization:\nNameError: name 'q' is not defined\n# end error message"
        );
    }

    #[test]
    fn annotation_matches_branch_marks() {
        let s = example();
        let covered: CoverageSet = (1..=6).map(ProbeId).collect();
        let annotated = annotate_uncovered(&s, &covered);
        assert!(annotated.contains("            result = -1 # uncovered\n"));
        assert!(annotated.contains("        result = -2 # uncovered\n"));
        assert!(annotated.contains("except SystemExit: # uncovered\n"));
        assert!(annotated.contains("    result = 1 # uncovered\n"));
        assert!(annotated.contains("        else:\n"));
        assert_eq!(annotated.matches(UNCOVERED_MARK).count(), 4);
    }

    #[test]
    fn full_coverage_leaves_source_unchanged() {
        let s = example();
        assert_eq!(annotate_uncovered(&s, &s.full_coverage()), s.source());
    }

    #[test]
    fn prompt3_is_fresh() {
        let c = gen_prompt3("x = 1 # uncovered\n");
        assert_eq!(c.messages[0].role, Role::System);
        assert!(c.messages[1]
            .content
            .contains("# begin code snippet\nx = 1 # uncovered\n# end code snippet"));
    }

    #[test]
    fn parses_plain_and_fenced_responses() {
        let raw = r#"{"imports":["import pandas as pd"],"initialization":["df = pd.DataFrame()"]}"#;
        let want = GeneratorResponse {
            imports: vec!["import pandas as pd".into()],
            initialization: vec!["df = pd.DataFrame()".into()],
        };
        assert_eq!(parse_response(raw).unwrap(), want);
        assert_eq!(parse_response(&format!("```json\n{raw}\n```")).unwrap(), want);
        assert_eq!(parse_response(&format!("  ```\n{raw}\n```\n")).unwrap(), want);
        assert_eq!(
            parse_response(r#"{"imports":[],"initialization":[]}"#).unwrap(),
            GeneratorResponse::default()
        );
    }

    #[test]
    fn rejects_other_shapes() {
        for bad in [
            "",
            "not json",
            r#"{"imports":[]}"#,
            r#"{"imports":[],"initialization":[],"extra":1}"#,
            r#"{"imports":[1],"initialization":[]}"#,
            "Here you go: {\"imports\":[],\"initialization\":[]}",
            "```json\n```json\n{\"imports\":[],\"initialization\":[]}\n```\n```",
        ] {
            assert!(parse_response(bad).is_err(), "{bad:?}");
        }
    }

    proptest! {
        #[test]
        fn annotation_marks_count_unfired(mask in proptest::collection::vec(any::<bool>(), 10)) {
            let s = example();
            let covered: CoverageSet = mask
                .iter()
                .enumerate()
                .filter(|(_, on)| **on)
                .map(|(i, _)| ProbeId(i as u32 + 1))
                .collect();
            let annotated = annotate_uncovered(&s, &covered);
            prop_assert_eq!(annotated.matches(UNCOVERED_MARK).count(), 10 - covered.len());
            for (orig, new) in s.source().lines().zip(annotated.lines()) {
                prop_assert!(new.starts_with(orig));
            }
        }
    }
}
