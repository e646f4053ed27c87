//! Deterministic offline generator. Each undefined name gets a value from a
//! small set of families; the variant number rotates the assignment so
//! successive samples explore different values.

use crate::prompt::GeneratorResponse;
use crate::scope::UndefinedRefs;

use super::{Generator, GeneratorBatch, GeneratorRequest, GeneratorUnavailable, Sample};

/// Value families in rotation order.
pub const VALUE_FAMILIES: [&str; 8] = [
    "stub", "empty-string", "email", "zero", "one", "empty-list", "none", "callable",
];

const STUB: &str = "types.SimpleNamespace";
const CALLABLE: &str = "lambda *args, **kwargs: ";

fn literal(family: usize) -> String {
    match family % VALUE_FAMILIES.len() {
        0 => format!("{STUB}()"),
        1 => "''".into(),
        2 => "'a@b.c'".into(),
        3 => "0".into(),
        4 => "1".into(),
        5 => "[]".into(),
        6 => "None".into(),
        _ => format!("{CALLABLE}None"),
    }
}

/// A value of `family`, wrapped in an argument-absorbing callable when the
/// name is called in the snippet.
fn value(family: usize, called: bool) -> String {
    let family = family % VALUE_FAMILIES.len();
    if called && family != 7 {
        format!("{CALLABLE}{}", literal(family))
    } else {
        literal(family)
    }
}

pub fn heuristic_generate(refs: &UndefinedRefs, seed: u64, variant: usize) -> GeneratorResponse {
    let step = seed as usize;
    let mut initialization = Vec::with_capacity(refs.variables.len());
    let mut uses_stub = false;
    for (i, name) in refs.variables.iter().enumerate() {
        let family = variant.wrapping_add(i.wrapping_mul(step)) % VALUE_FAMILIES.len();
        let called = refs.called.contains(name);
        let members: Vec<&str> = refs.members_of(name).collect();
        let rhs = if members.is_empty() {
            value(family, called)
        } else {
            let fields: Vec<String> = members
                .iter()
                .enumerate()
                .map(|(j, attr)| {
                    let path = format!("{name}.{attr}");
                    let v = value(family + j + 1, refs.called.contains(&path));
                    format!("{attr}={v}")
                })
                .collect();
            let stub = format!("{STUB}({})", fields.join(", "));
            if called {
                format!("{CALLABLE}{stub}")
            } else {
                stub
            }
        };
        uses_stub |= rhs.contains(STUB);
        initialization.push(format!("{name} = {rhs}"));
    }
    let imports = if uses_stub { vec!["import types".to_string()] } else { Vec::new() };
    GeneratorResponse {
        imports,
        initialization,
    }
}

/// Generator answering every request from the hints' undefined references.
#[derive(Debug, Clone, Default)]
pub struct HeuristicGenerator {
    pub seed: u64,
}

impl HeuristicGenerator {
    pub fn new(seed: u64) -> Self {
        HeuristicGenerator { seed }
    }
}

impl Generator for HeuristicGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorBatch, GeneratorUnavailable> {
        let base = request.hints.query_index * request.samples;
        let responses = (0..request.samples)
            .map(|i| {
                let response = heuristic_generate(&request.hints.refs, self.seed, base + i);
                Sample {
                    raw: response.to_json(),
                    parsed: Some(response),
                    parse_error: None,
                }
            })
            .collect();
        Ok(GeneratorBatch { responses })
    }

    fn name(&self) -> &str {
        "heuristic"
    }
}
