//! A worked example used by tests, benchmarks and the CLI demo: a snippet
//! with two nested conditionals inside a `try`, and hand-written prefixes
//! that each drive it down a different path.

use std::sync::Arc;
use std::time::Duration;

use crate::generator::{Generator, GeneratorBatch, GeneratorRequest, GeneratorUnavailable, Sample};
use crate::harness::{ExecBackend, HarnessError, RawOutcome};
use crate::instrument::{LineOrigin, Program, PROBE_NAME};
use crate::prompt::GeneratorResponse;

/// Ten executable statements; no single run can cover all of them.
pub const RUNNING_EXAMPLE: &str = "\
try:
    register = get_register_func(self.user_type)
    if register is not None:
        self.email = register(self.name, self.alias)
        if '@' in self.email:
            result = 0
        else:
            result = -1
    else:
        result = -2
except SystemExit:
    result = 1
";

/// Two-argument registration function called with one argument: fails with a
/// `TypeError` on the first line of the `try` block.
pub const PREFIX_WRONG_ARITY: (&[&str], &[&str]) = (
    &["from unittest.mock import Mock"],
    &[
        "def dummy_register_func(name, alias):\n    return name + '@' + alias",
        "get_register_func = dummy_register_func",
        "self = Mock(user_type='admin', alias='doe')\nself.name = 'john'",
    ],
);

/// The returned register function takes a single argument, so the call that
/// assigns `self.email` fails.
pub const PREFIX_SHORT_REGISTER: (&[&str], &[&str]) = (
    &["from unittest.mock import Mock"],
    &[
        "def get_register_func(user_type):\n    return lambda name: name",
        "self = Mock(user_type='admin', alias='doe')\nself.name = 'john'",
    ],
);

/// Runs cleanly through both `if` branches.
pub const PREFIX_HAPPY_PATH: (&[&str], &[&str]) = (
    &["from unittest.mock import Mock"],
    &[
        "def dummy_register_func(user_type):\n    def register(name, alias):\n        return name + '@' + alias + '.com'\n    return register",
        "get_register_func = dummy_register_func",
        "self = Mock(user_type='admin', alias='doe')\nself.name = 'john'",
    ],
);

/// The registered e-mail lacks an `@`.
pub const PREFIX_NO_AT_SIGN: (&[&str], &[&str]) = (
    &["from unittest.mock import Mock"],
    &[
        "def get_register_func(user_type):\n    return lambda name, alias: name + '.' + alias",
        "self = Mock(user_type='guest', alias='doe')\nself.name = 'john'",
    ],
);

/// No register function is available for the user type.
pub const PREFIX_NO_REGISTER: (&[&str], &[&str]) = (
    &["from unittest.mock import Mock"],
    &[
        "def get_register_func(user_type):\n    return None",
        "self = Mock(user_type='unknown', alias='doe')\nself.name = 'john'",
    ],
);

/// Looking up the register function exits the interpreter.
pub const PREFIX_SYSTEM_EXIT: (&[&str], &[&str]) = (
    &["import sys", "from unittest.mock import Mock"],
    &[
        "def get_register_func(user_type):\n    sys.exit(1)",
        "self = Mock(user_type='admin', alias='doe')\nself.name = 'john'",
    ],
);

/// A fixture prefix as (imports, initializations).
pub type FixturePrefix = (&'static [&'static str], &'static [&'static str]);

/// The fixture rendered as a well-formed generator response.
pub fn response_json(prefix: FixturePrefix) -> String {
    GeneratorResponse {
        imports: prefix.0.iter().map(|s| s.to_string()).collect(),
        initialization: prefix.1.iter().map(|s| s.to_string()).collect(),
    }
    .to_json()
}

/// First program line holding code from snippet line `line`, skipping
/// inserted probe calls.
fn program_line_of(program: &Program, line: usize) -> usize {
    let lines: Vec<&str> = program.text.lines().collect();
    (program.prelude_lines + 1..=lines.len())
        .find(|&l| program.origin(l) == LineOrigin::Snippet(line) && !lines[l - 1].contains(PROBE_NAME))
        .unwrap_or(0)
}

/// What a real interpreter does with the running example behind each
/// fixture prefix, without starting one. Prefixes run alone always succeed;
/// an unrecognised prefix fails on the first line with a `NameError`.
pub fn simulate_running_example(program: &Program) -> RawOutcome {
    if !program.with_snippet {
        return RawOutcome::clean([]);
    }
    let text = &program.text;
    let raised = |probes: &[u32], type_name: &str, line: usize, message: &str| {
        RawOutcome::raised(probes.iter().copied(), type_name, program_line_of(program, line), message)
    };
    if text.contains("def dummy_register_func(name, alias)") {
        raised(&[1], "TypeError", 2, "dummy_register_func() missing 1 required positional argument: 'alias'")
    } else if text.contains("lambda name: name") {
        raised(&[1, 2, 3], "TypeError", 4, "<lambda>() takes 1 positional argument but 2 were given")
    } else if text.contains("def register(name, alias)") {
        RawOutcome::clean([1, 2, 3, 4, 5, 6])
    } else if text.contains("name + '.' + alias") {
        RawOutcome::clean([1, 2, 3, 4, 5, 7])
    } else if text.contains("return None") {
        RawOutcome::clean([1, 2, 3, 8])
    } else if text.contains("sys.exit(1)") {
        RawOutcome::clean([1, 9, 10])
    } else {
        raised(&[1], "NameError", 2, "name 'get_register_func' is not defined")
    }
}

pub fn running_example_backend() -> Arc<dyn ExecBackend> {
    Arc::new(|program: &Program, _: Duration| -> Result<RawOutcome, HarnessError> {
        Ok(simulate_running_example(program))
    })
}

/// Generator that answers query `i` with the `i`-th scripted batch, and
/// with nothing once the script runs out.
pub struct ScriptedGenerator {
    script: Vec<Vec<String>>,
}

impl ScriptedGenerator {
    pub fn new(script: Vec<Vec<String>>) -> Self {
        ScriptedGenerator { script }
    }

    /// Each batch given as fixture prefixes.
    pub fn from_fixtures(script: &[&[FixturePrefix]]) -> Self {
        Self::new(
            script
                .iter()
                .map(|batch| batch.iter().map(|p| response_json(*p)).collect())
                .collect(),
        )
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorBatch, GeneratorUnavailable> {
        let batch = self.script.get(request.hints.query_index).cloned().unwrap_or_default();
        Ok(GeneratorBatch {
            responses: batch.into_iter().map(Sample::from_raw).collect(),
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Query script that walks the running example from 0.3 to full coverage
/// with two samples per query: two failing step-1 prefixes, one repaired
/// prefix per failure, then one new path per coverage query.
pub fn running_example_script() -> ScriptedGenerator {
    ScriptedGenerator::from_fixtures(&[
        &[PREFIX_WRONG_ARITY, PREFIX_SHORT_REGISTER],
        &[PREFIX_HAPPY_PATH],
        &[PREFIX_HAPPY_PATH],
        &[PREFIX_NO_AT_SIGN],
        &[PREFIX_NO_REGISTER],
        &[PREFIX_SYSTEM_EXIT],
    ])
}
