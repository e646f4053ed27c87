//! Shared data model: snippets, prefixes, coverage, the prefix tree and the
//! run configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::source::{parse_suite, SyntaxError};
use crate::statements::{collect_units, UnitKind};

/// Identifier of one coverage probe; probes are numbered `1..=total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbeId(pub u32);

impl fmt::Display for ProbeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error)]
pub enum AdmissionError {
    #[error("snippet does not parse: {0}")]
    Syntax(#[from] SyntaxError),
    #[error("snippet has no executable statements")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("contract violation: {0}")]
pub struct ContractViolation(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementEntry {
    pub probe_id: ProbeId,
    pub line: usize,
    /// Line that receives annotations for this statement (the last line of
    /// a multi-line simple statement, the colon line of a header).
    pub mark_line: usize,
    pub kind: UnitKind,
}

/// A syntactically valid piece of code together with its executable
/// statement index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    id: String,
    source: String,
    statement_index: Vec<StatementEntry>,
}

impl Snippet {
    pub fn new(id: impl Into<String>, source: impl Into<String>) -> Result<Self, AdmissionError> {
        let source = source.into();
        let suite = parse_suite(&source)?;
        let units = collect_units(&source, &suite);
        if units.is_empty() {
            return Err(AdmissionError::Empty);
        }
        let statement_index = units
            .iter()
            .enumerate()
            .map(|(i, unit)| StatementEntry {
                probe_id: ProbeId(i as u32 + 1),
                line: unit.line,
                mark_line: unit.mark_line,
                kind: unit.kind,
            })
            .collect();
        Ok(Snippet {
            id: id.into(),
            source,
            statement_index,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn statement_index(&self) -> &[StatementEntry] {
        &self.statement_index
    }

    pub fn total_statements(&self) -> usize {
        self.statement_index.len()
    }

    pub fn probe_ids(&self) -> impl Iterator<Item = ProbeId> + '_ {
        self.statement_index.iter().map(|e| e.probe_id)
    }

    pub fn entry(&self, probe: ProbeId) -> Option<&StatementEntry> {
        let idx = (probe.0 as usize).checked_sub(1)?;
        self.statement_index.get(idx)
    }

    pub fn line_of(&self, probe: ProbeId) -> Option<usize> {
        self.entry(probe).map(|e| e.line)
    }

    pub fn line_count(&self) -> usize {
        self.source.lines().count()
    }

    /// Text of the 1-based source line `line`, without its newline.
    pub fn source_line(&self, line: usize) -> Option<&str> {
        self.source.lines().nth(line.checked_sub(1)?)
    }

    pub fn full_coverage(&self) -> CoverageSet {
        self.probe_ids().collect()
    }
}

/// Set of probes that fired during one or more runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoverageSet {
    fired: BTreeSet<ProbeId>,
}

impl CoverageSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, probe: ProbeId) -> bool {
        self.fired.insert(probe)
    }

    pub fn contains(&self, probe: ProbeId) -> bool {
        self.fired.contains(&probe)
    }

    pub fn len(&self) -> usize {
        self.fired.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fired.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ProbeId> + '_ {
        self.fired.iter().copied()
    }

    pub fn union(&self, other: &CoverageSet) -> CoverageSet {
        CoverageSet {
            fired: self.fired.union(&other.fired).copied().collect(),
        }
    }

    pub fn extend_from(&mut self, other: &CoverageSet) {
        self.fired.extend(other.fired.iter().copied());
    }

    /// Number of probes in `self` that `other` lacks.
    pub fn count_new(&self, other: &CoverageSet) -> usize {
        self.fired.difference(&other.fired).count()
    }

    pub fn is_subset(&self, other: &CoverageSet) -> bool {
        self.fired.is_subset(&other.fired)
    }
}

impl FromIterator<ProbeId> for CoverageSet {
    fn from_iter<I: IntoIterator<Item = ProbeId>>(iter: I) -> Self {
        CoverageSet {
            fired: iter.into_iter().collect(),
        }
    }
}

/// Exact coverage fraction `covered / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRatio {
    pub covered: usize,
    pub total: usize,
}

impl CoverageRatio {
    pub fn as_f64(self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.covered as f64 / self.total as f64
        }
    }

    pub fn is_full(self) -> bool {
        self.covered == self.total
    }
}

impl PartialOrd for CoverageRatio {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        let lhs = self.covered as u128 * other.total as u128;
        let rhs = other.covered as u128 * self.total as u128;
        Some(lhs.cmp(&rhs))
    }
}

pub fn coverage_ratio(coverage: &CoverageSet, snippet: &Snippet) -> Result<CoverageRatio, ContractViolation> {
    let total = snippet.total_statements();
    if let Some(bad) = coverage.iter().find(|p| p.0 == 0 || p.0 as usize > total) {
        return Err(ContractViolation(format!(
            "probe {bad} is outside 1..={total} of snippet {}",
            snippet.id()
        )));
    }
    Ok(CoverageRatio {
        covered: coverage.len(),
        total,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrefixId(pub String);

impl fmt::Display for PrefixId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Guidance step that produced a prefix; also its level in the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Undefinedness,
    Error,
    Coverage,
}

impl Step {
    pub const ALL: [Step; 3] = [Step::Undefinedness, Step::Error, Step::Coverage];

    pub fn level(self) -> usize {
        match self {
            Step::Undefinedness => 1,
            Step::Error => 2,
            Step::Coverage => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixStatus {
    Fresh,
    PostProcessed,
    Discarded,
}

/// Import statements and initialization statements prepended to a snippet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prefix {
    pub id: PrefixId,
    pub imports: Vec<String>,
    pub initializations: Vec<String>,
    pub origin_step: Step,
    pub parent: Option<PrefixId>,
    pub status: PrefixStatus,
}

impl Prefix {
    pub fn new(
        id: PrefixId,
        imports: Vec<String>,
        initializations: Vec<String>,
        origin_step: Step,
        parent: Option<PrefixId>,
    ) -> Result<Self, ContractViolation> {
        if parent.is_none() != (origin_step == Step::Undefinedness) {
            return Err(ContractViolation(format!(
                "prefix {id}: only undefinedness-step prefixes are parentless"
            )));
        }
        Ok(Prefix {
            id,
            imports,
            initializations,
            origin_step,
            parent,
            status: PrefixStatus::Fresh,
        })
    }

    /// Entries in execution order: imports first, then initializations.
    pub fn entries(&self) -> impl Iterator<Item = &String> {
        self.imports.iter().chain(self.initializations.iter())
    }

    pub fn render(&self) -> String {
        self.entries().map(String::as_str).collect::<Vec<_>>().join("\n")
    }

    pub fn line_count(&self) -> usize {
        self.entries().map(|e| e.lines().count().max(1)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExceptionInfo {
    pub type_name: String,
    pub message: String,
    /// Snippet-relative line; absent when the error surfaced in the prefix.
    pub snippet_line: Option<usize>,
}

/// Result of running a prefix together with the instrumented snippet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub coverage: CoverageSet,
    pub exception: Option<ExceptionInfo>,
    pub timed_out: bool,
    /// Seconds.
    pub wall_time: f64,
}

impl ExecutionOutcome {
    pub fn clean(coverage: CoverageSet) -> Self {
        ExecutionOutcome {
            coverage,
            exception: None,
            timed_out: false,
            wall_time: 0.0,
        }
    }

    pub fn failed(coverage: CoverageSet, exception: ExceptionInfo) -> Self {
        ExecutionOutcome {
            coverage,
            exception: Some(exception),
            timed_out: false,
            wall_time: 0.0,
        }
    }

    pub fn validate(&self, snippet: &Snippet) -> Result<(), ContractViolation> {
        coverage_ratio(&self.coverage, snippet)?;
        if self.timed_out && self.exception.is_some() {
            return Err(ContractViolation("timed-out outcome carries an exception".into()));
        }
        if let Some(line) = self.exception.as_ref().and_then(|e| e.snippet_line) {
            if line == 0 || line > snippet.line_count() {
                return Err(ContractViolation(format!(
                    "exception line {line} outside snippet of {} lines",
                    snippet.line_count()
                )));
            }
        }
        Ok(())
    }
}

/// One explored prefix and what happened to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub prefix: Prefix,
    pub outcome: Option<ExecutionOutcome>,
    /// Raw generator text the prefix was parsed from.
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Explored prefixes rooted at a snippet; levels follow the guidance steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixTree {
    pub root: String,
    pub nodes: Vec<TreeNode>,
}

impl PrefixTree {
    pub fn new(root: impl Into<String>) -> Self {
        PrefixTree {
            root: root.into(),
            nodes: Vec::new(),
        }
    }

    pub fn get(&self, id: &PrefixId) -> Option<&TreeNode> {
        self.nodes.iter().find(|n| &n.prefix.id == id)
    }

    pub fn get_mut(&mut self, id: &PrefixId) -> Option<&mut TreeNode> {
        self.nodes.iter_mut().find(|n| &n.prefix.id == id)
    }

    pub fn children(&self, id: &PrefixId) -> impl Iterator<Item = &TreeNode> + '_ {
        let id = id.clone();
        self.nodes
            .iter()
            .filter(move |n| n.prefix.parent.as_ref() == Some(&id))
    }

    pub fn at_level(&self, step: Step) -> impl Iterator<Item = &TreeNode> + '_ {
        self.nodes.iter().filter(move |n| n.prefix.origin_step == step)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Union of coverage over executed, non-discarded nodes whose step is at
    /// most `step`.
    pub fn coverage_through(&self, step: Step) -> CoverageSet {
        let mut union = CoverageSet::new();
        for node in &self.nodes {
            if node.prefix.origin_step <= step && node.prefix.status == PrefixStatus::PostProcessed {
                if let Some(outcome) = &node.outcome {
                    union.extend_from(&outcome.coverage);
                }
            }
        }
        union
    }

    /// Checks the level structure: level-1 nodes are roots, level-2 parents
    /// are level 1, level-3 parents are level 2 or (when level 2 is empty of
    /// usable seeds) level 1.
    pub fn check_levels(&self) -> Result<(), ContractViolation> {
        for node in &self.nodes {
            let prefix = &node.prefix;
            let parent_step = match &prefix.parent {
                None => None,
                Some(pid) => Some(
                    self.get(pid)
                        .ok_or_else(|| ContractViolation(format!("{}: missing parent {pid}", prefix.id)))?
                        .prefix
                        .origin_step,
                ),
            };
            let ok = match (prefix.origin_step, parent_step) {
                (Step::Undefinedness, None) => true,
                (Step::Error, Some(Step::Undefinedness)) => true,
                (Step::Coverage, Some(Step::Error | Step::Undefinedness)) => true,
                _ => false,
            };
            if !ok {
                return Err(ContractViolation(format!(
                    "{}: {:?} node under {:?}",
                    prefix.id, prefix.origin_step, parent_step
                )));
            }
        }
        Ok(())
    }
}

/// The maintained prefix set `P`, the single best prefix and budget use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub prefixes: Vec<PrefixId>,
    pub best: Option<PrefixId>,
    pub cumulative: CoverageSet,
    pub queries_used: usize,
    pub explored: usize,
    /// Set when the generator became unavailable before the search finished.
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Heuristic,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Completions requested per query.
    pub n: usize,
    /// Coverage-guidance attempts.
    pub k: usize,
    #[serde(with = "secs")]
    pub prefix_timeout: Duration,
    pub postprocess_attempts: usize,
    pub generator: GeneratorKind,
    pub env_dir: PathBuf,
    pub install_deps: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 10,
            k: 10,
            prefix_timeout: Duration::from_secs(30),
            postprocess_attempts: 10,
            generator: GeneratorKind::Heuristic,
            env_dir: PathBuf::from(".prefixer-env"),
            install_deps: true,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ContractViolation> {
        if self.n == 0 {
            return Err(ContractViolation("n must be at least 1".into()));
        }
        if self.prefix_timeout.is_zero() {
            return Err(ContractViolation("prefix timeout must be positive".into()));
        }
        if self.postprocess_attempts == 0 {
            return Err(ContractViolation("post-processing needs at least one attempt".into()));
        }
        Ok(())
    }

    /// Upper bound on tree nodes: `n + n*n + k*n`.
    pub fn node_budget(&self) -> usize {
        self.n + self.n * self.n + self.k * self.n
    }
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::RUNNING_EXAMPLE;
    use proptest::prelude::*;

    fn probes(ids: impl IntoIterator<Item = u32>) -> CoverageSet {
        ids.into_iter().map(ProbeId).collect()
    }

    #[test]
    fn ratio_of_empty_and_full_coverage() {
        let s = Snippet::new("s", RUNNING_EXAMPLE).unwrap();
        assert_eq!(s.total_statements(), 10);
        assert_eq!(coverage_ratio(&CoverageSet::new(), &s).unwrap().as_f64(), 0.0);
        assert_eq!(coverage_ratio(&s.full_coverage(), &s).unwrap().as_f64(), 1.0);
    }

    #[test]
    fn first_three_try_body_statements_give_thirty_percent() {
        let s = Snippet::new("s", RUNNING_EXAMPLE).unwrap();
        let lines = [2, 3, 4];
        let fired: CoverageSet = s
            .statement_index()
            .iter()
            .filter(|e| lines.contains(&e.line))
            .map(|e| e.probe_id)
            .collect();
        assert_eq!(coverage_ratio(&fired, &s).unwrap().as_f64(), 0.30);
    }

    #[test]
    fn out_of_range_probe_is_a_contract_violation() {
        let s = Snippet::new("s", "x = 1\n").unwrap();
        assert!(coverage_ratio(&probes([2]), &s).is_err());
        assert!(coverage_ratio(&probes([0]), &s).is_err());
    }

    #[test]
    fn admission_rejects_bad_and_empty_sources() {
        assert!(matches!(Snippet::new("s", "x = (\n"), Err(AdmissionError::Syntax(_))));
        assert!(matches!(Snippet::new("s", "# nothing\n"), Err(AdmissionError::Empty)));
    }

    #[test]
    fn parent_iff_not_first_step() {
        let id = PrefixId("a".into());
        assert!(Prefix::new(id.clone(), vec![], vec![], Step::Undefinedness, None).is_ok());
        assert!(Prefix::new(id.clone(), vec![], vec![], Step::Error, None).is_err());
        assert!(Prefix::new(id.clone(), vec![], vec![], Step::Undefinedness, Some(id.clone())).is_err());
    }

    #[test]
    fn prefix_renders_imports_then_initializations() {
        let mut p = Prefix::new(PrefixId("p".into()), vec!["import os".into()], vec!["x = 1".into()], Step::Undefinedness, None).unwrap();
        assert_eq!(p.render(), "import os\nx = 1");
        p.imports.clear();
        p.initializations.clear();
        assert_eq!(p.render(), "");
    }

    #[test]
    fn outcome_validation() {
        let s = Snippet::new("s", "x = 1\ny = 2\n").unwrap();
        let mut o = ExecutionOutcome::failed(
            probes([1]),
            ExceptionInfo { type_name: "E".into(), message: "m".into(), snippet_line: Some(3) },
        );
        assert!(o.validate(&s).is_err());
        o.exception.as_mut().unwrap().snippet_line = Some(2);
        assert!(o.validate(&s).is_ok());
        o.timed_out = true;
        assert!(o.validate(&s).is_err());
    }

    #[test]
    fn default_budget_is_210_nodes() {
        assert_eq!(RunConfig::default().node_budget(), 210);
    }

    proptest! {
        #[test]
        fn union_never_lowers_ratio(a in proptest::collection::btree_set(1u32..=20, 0..20),
                                    b in proptest::collection::btree_set(1u32..=20, 0..20)) {
            let src: String = (0..20).map(|i| format!("v{i} = {i}\n")).collect();
            let s = Snippet::new("s", src).unwrap();
            let a = probes(a);
            let b = probes(b);
            let ra = coverage_ratio(&a, &s).unwrap();
            let rb = coverage_ratio(&b, &s).unwrap();
            let ru = coverage_ratio(&a.union(&b), &s).unwrap();
            prop_assert!(ru >= ra && ru >= rb);
        }

        #[test]
        fn coverage_and_prefix_round_trip_through_json(ids in proptest::collection::btree_set(1u32..50, 0..30),
                                                      imports in proptest::collection::vec("[a-z ]{0,12}", 0..4)) {
            let c = probes(ids);
            let back: CoverageSet = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            prop_assert_eq!(&back, &c);
            let p = Prefix::new(PrefixId("p1".into()), imports, vec!["x = 1".into()], Step::Error, Some(PrefixId("p0".into()))).unwrap();
            let back: Prefix = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
            prop_assert_eq!(back, p);
        }
    }

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
