//! The three-step prefix search.
//!
//! Step 1 asks for values for the statically undefined names. Step 2 feeds
//! each failing step-1 prefix's error back into its conversation. Step 3
//! repeatedly shows the snippet with not-yet-covered statements marked and
//! asks for prefixes reaching them, until everything is covered or the
//! attempt budget runs out.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{Generator, GeneratorRequest, GeneratorUnavailable, RequestHints, Sample};
use crate::harness::Harness;
use crate::instrument::{instrument, InstrumentError, InstrumentedSnippet};
use crate::model::{
    coverage_ratio, CoverageRatio, CoverageSet, Prefix, PrefixId, PrefixStatus, PrefixTree, SearchResult, Snippet,
    Step, TreeNode,
};
use crate::prompt::{annotate_uncovered, gen_prompt1, gen_prompt2, gen_prompt3, Conversation, Role};
use crate::scope::{get_undefined_refs, AnalysisError, UndefinedRefs};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: Step,
    pub prompts_sent: usize,
    pub prefixes_generated: usize,
    pub prefixes_discarded: usize,
    /// Cumulative coverage ratio once the step finished.
    pub coverage_after: f64,
}

/// The maintained prefix set with its coverage bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrefixSet {
    pub members: Vec<(PrefixId, CoverageSet)>,
    /// Best individual prefix and its coverage size.
    pub best: Option<(PrefixId, usize)>,
    pub cumulative: CoverageSet,
}

impl PrefixSet {
    pub fn ids(&self) -> Vec<PrefixId> {
        self.members.iter().map(|(id, _)| id.clone()).collect()
    }

    fn contains(&self, id: &PrefixId) -> bool {
        self.members.iter().any(|(m, _)| m == id)
    }
}

/// Greedy maintenance of `P` and `p_best`: a candidate joins when it adds
/// at least one new probe; the best prefix changes only on strictly larger
/// coverage and always stays a member. Prefixes covering nothing never
/// become best.
pub fn update_prefixes(set: &mut PrefixSet, candidates: &[(PrefixId, CoverageSet)]) {
    for (id, coverage) in candidates {
        if coverage.count_new(&set.cumulative) > 0 {
            set.cumulative.extend_from(coverage);
            if !set.contains(id) {
                set.members.push((id.clone(), coverage.clone()));
            }
        }
        let better = match &set.best {
            None => !coverage.is_empty(),
            Some((_, size)) => coverage.len() > *size,
        };
        if better {
            set.best = Some((id.clone(), coverage.len()));
            if !set.contains(id) {
                set.members.push((id.clone(), coverage.clone()));
            }
        }
    }
}

pub fn cumulative_cov(members: &[(PrefixId, CoverageSet)], snippet: &Snippet) -> CoverageRatio {
    let mut union = CoverageSet::new();
    for (_, c) in members {
        union.extend_from(c);
    }
    coverage_ratio(&union, snippet).unwrap_or(CoverageRatio {
        covered: union.len(),
        total: snippet.total_statements(),
    })
}

/// Everything a search produced.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub result: SearchResult,
    pub tree: PrefixTree,
    pub traces: Vec<StepTrace>,
    pub refs: UndefinedRefs,
    pub wall_time: f64,
    /// Why the search stopped early, when it did.
    pub stop_reason: Option<String>,
}

struct Search<'a> {
    snippet: &'a Snippet,
    inst: InstrumentedSnippet,
    refs: UndefinedRefs,
    generator: &'a dyn Generator,
    harness: &'a Harness,
    tree: PrefixTree,
    set: PrefixSet,
    queries: usize,
    traces: Vec<StepTrace>,
    conversations: Vec<(PrefixId, Conversation)>,
}

impl Search<'_> {
    fn full(&self) -> bool {
        self.set.cumulative.len() >= self.snippet.total_statements()
    }

    fn ratio(&self) -> f64 {
        cumulative_cov(&self.set.members, self.snippet).as_f64()
    }

    fn query(&mut self, conversation: &Conversation, step: Step) -> Result<Vec<Sample>, GeneratorUnavailable> {
        let request = GeneratorRequest {
            conversation: conversation.clone(),
            samples: self.harness.config.n,
            hints: RequestHints {
                refs: self.refs.clone(),
                step: Some(step),
                query_index: self.queries,
            },
        };
        self.queries += 1;
        let mut batch = self.generator.generate(&request)?;
        batch.responses.truncate(self.harness.config.n);
        Ok(batch.responses)
    }

    /// Evaluates a batch, adds its nodes to the tree and feeds executed
    /// prefixes to the greedy set. Returns the ids of the new nodes.
    fn absorb(&mut self, samples: Vec<Sample>, step: Step, parent: Option<&PrefixId>, trace: &mut StepTrace) -> Vec<PrefixId> {
        let query = self.queries - 1;
        let mut candidates = Vec::new();
        let mut ids = Vec::new();
        for (i, sample) in samples.into_iter().enumerate() {
            let id = PrefixId(format!("{}-{query}-{i}", step.level()));
            let (imports, initializations) = match &sample.parsed {
                Some(r) => (r.imports.clone(), r.initialization.clone()),
                None => (Vec::new(), Vec::new()),
            };
            let mut prefix = Prefix::new(id.clone(), imports, initializations, step, parent.cloned())
                .expect("lineage follows the step");
            trace.prefixes_generated += 1;
            let node = if sample.parsed.is_none() {
                prefix.status = PrefixStatus::Discarded;
                TreeNode {
                    prefix,
                    outcome: None,
                    raw_response: sample.raw,
                    note: Some(format!(
                        "unparseable response: {}",
                        sample.parse_error.unwrap_or_default()
                    )),
                }
            } else {
                let eval = self.harness.evaluate(prefix, self.snippet, &self.inst);
                if let (PrefixStatus::PostProcessed, Some(outcome)) = (eval.prefix.status, &eval.outcome) {
                    candidates.push((id.clone(), outcome.coverage.clone()));
                }
                TreeNode {
                    prefix: eval.prefix,
                    outcome: eval.outcome,
                    raw_response: sample.raw,
                    note: eval.note,
                }
            };
            if node.prefix.status == PrefixStatus::Discarded {
                trace.prefixes_discarded += 1;
            }
            self.tree.nodes.push(node);
            ids.push(id);
        }
        update_prefixes(&mut self.set, &candidates);
        ids
    }

    fn finish_trace(&mut self, mut trace: StepTrace) {
        trace.coverage_after = self.ratio();
        self.traces.push(trace);
    }

    fn step1(&mut self) -> Result<(), GeneratorUnavailable> {
        let mut trace = new_trace(Step::Undefinedness);
        let conversation = gen_prompt1(self.snippet, &self.refs);
        trace.prompts_sent += 1;
        let samples = match self.query(&conversation, Step::Undefinedness) {
            Ok(s) => s,
            Err(e) => {
                self.finish_trace(trace);
                return Err(e);
            }
        };
        let raws: Vec<String> = samples.iter().map(|s| s.raw.clone()).collect();
        let ids = self.absorb(samples, Step::Undefinedness, None, &mut trace);
        for (id, raw) in ids.into_iter().zip(raws) {
            let mut c = conversation.clone();
            c.push(Role::Assistant, raw);
            self.conversations.push((id, c));
        }
        self.finish_trace(trace);
        Ok(())
    }

    fn step2(&mut self) -> Result<(), GeneratorUnavailable> {
        let mut trace = new_trace(Step::Error);
        let failing: Vec<(PrefixId, crate::model::ExecutionOutcome)> = self
            .tree
            .at_level(Step::Undefinedness)
            .filter_map(|n| {
                let outcome = n.outcome.as_ref()?;
                outcome.exception.as_ref()?;
                Some((n.prefix.id.clone(), outcome.clone()))
            })
            .collect();
        let mut result = Ok(());
        for (parent, outcome) in failing {
            if self.full() {
                break;
            }
            let history = self
                .conversations
                .iter()
                .find(|(id, _)| *id == parent)
                .map(|(_, c)| c.clone())
                .unwrap_or_default();
            let conversation = gen_prompt2(&history, self.snippet, &outcome).expect("failing outcome has an exception");
            trace.prompts_sent += 1;
            match self.query(&conversation, Step::Error) {
                Ok(samples) => {
                    self.absorb(samples, Step::Error, Some(&parent), &mut trace);
                }
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        self.finish_trace(trace);
        result
    }

    /// Executed, post-processed prefixes of the given level.
    fn seeds(&self, step: Step) -> Vec<(PrefixId, usize)> {
        self.tree
            .at_level(step)
            .filter(|n| n.prefix.status == PrefixStatus::PostProcessed)
            .filter_map(|n| Some((n.prefix.id.clone(), n.outcome.as_ref()?.coverage.len())))
            .collect()
    }

    fn step3(&mut self) -> Result<(), GeneratorUnavailable> {
        let mut trace = new_trace(Step::Coverage);
        let mut seeds = self.seeds(Step::Error);
        if seeds.is_empty() {
            seeds = self.seeds(Step::Undefinedness);
        }
        // Children hang off the best seed; the earliest wins ties.
        let parent = seeds
            .iter()
            .fold(None::<&(PrefixId, usize)>, |best, s| match best {
                Some(b) if b.1 >= s.1 => Some(b),
                _ => Some(s),
            })
            .map(|(id, _)| id.clone());
        let mut result = Ok(());
        if let Some(parent) = parent {
            for _ in 0..self.harness.config.k {
                if self.full() {
                    break;
                }
                let annotated = annotate_uncovered(self.snippet, &self.set.cumulative);
                let conversation = gen_prompt3(&annotated);
                trace.prompts_sent += 1;
                match self.query(&conversation, Step::Coverage) {
                    Ok(samples) => {
                        self.absorb(samples, Step::Coverage, Some(&parent), &mut trace);
                    }
                    Err(e) => {
                        result = Err(e);
                        break;
                    }
                }
            }
        }
        self.finish_trace(trace);
        result
    }
}

fn new_trace(step: Step) -> StepTrace {
    StepTrace {
        step,
        prompts_sent: 0,
        prefixes_generated: 0,
        prefixes_discarded: 0,
        coverage_after: 0.0,
    }
}

pub fn run(snippet: &Snippet, generator: &dyn Generator, harness: &Harness) -> Result<SearchOutcome, SearchError> {
    let started = Instant::now();
    let refs = get_undefined_refs(snippet)?;
    let inst = instrument(snippet)?;
    let mut search = Search {
        snippet,
        inst,
        refs,
        generator,
        harness,
        tree: PrefixTree::new(snippet.id()),
        set: PrefixSet::default(),
        queries: 0,
        traces: Vec::new(),
        conversations: Vec::new(),
    };

    let mut stop_reason = None;
    let mut degraded = false;
    for step in Step::ALL {
        if search.full() {
            stop_reason = Some("full coverage".to_string());
            break;
        }
        let done = match step {
            Step::Undefinedness => search.step1(),
            Step::Error => search.step2(),
            Step::Coverage => search.step3(),
        };
        if let Err(e) = done {
            degraded = true;
            stop_reason = Some(e.to_string());
            break;
        }
    }

    let result = SearchResult {
        prefixes: search.set.ids(),
        best: search.set.best.as_ref().map(|(id, _)| id.clone()),
        cumulative: search.set.cumulative.clone(),
        queries_used: search.queries,
        explored: search.tree.len(),
        degraded,
    };
    Ok(SearchOutcome {
        result,
        tree: search.tree,
        traces: search.traces,
        refs: search.refs,
        wall_time: started.elapsed().as_secs_f64(),
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::generator::GeneratorBatch;
    use crate::harness::{ExecBackend, HarnessError, RawOutcome};
    use crate::instrument::Program;
    use crate::model::{ProbeId, RunConfig};
    use proptest::prelude::*;
    use std::sync::Arc;
    use std::time::Duration;

    fn cov(ids: &[u32]) -> CoverageSet {
        ids.iter().map(|i| ProbeId(*i)).collect()
    }

    fn pid(s: &str) -> PrefixId {
        PrefixId(s.into())
    }

    #[test]
    fn first_candidate_joins_and_becomes_best() {
        let mut set = PrefixSet::default();
        update_prefixes(&mut set, &[(pid("c"), cov(&[1, 2]))]);
        assert_eq!(set.ids(), [pid("c")]);
        assert_eq!(set.best.unwrap().0, pid("c"));
    }

    #[test]
    fn redundant_candidate_is_ignored() {
        let mut set = PrefixSet::default();
        update_prefixes(&mut set, &[(pid("a"), cov(&[1, 2, 3])), (pid("b"), cov(&[2, 3]))]);
        assert_eq!(set.ids(), [pid("a")]);
        assert_eq!(set.best.unwrap().0, pid("a"));
    }

    #[test]
    fn better_individual_is_inserted_even_without_new_probes() {
        let mut set = PrefixSet::default();
        update_prefixes(&mut set, &[(pid("a"), cov(&[1, 2]))]);
        update_prefixes(&mut set, &[(pid("b"), cov(&[3]))]);
        assert_eq!(set.ids(), [pid("a"), pid("b")]);
        update_prefixes(&mut set, &[(pid("c"), cov(&[1, 2, 3]))]);
        assert_eq!(set.ids(), [pid("a"), pid("b"), pid("c")]);
        assert_eq!(set.best.as_ref().unwrap().0, pid("c"));
        assert_eq!(set.cumulative, cov(&[1, 2, 3]));
    }

    #[test]
    fn ties_keep_the_earlier_best() {
        let mut set = PrefixSet::default();
        update_prefixes(&mut set, &[(pid("a"), cov(&[1])), (pid("b"), cov(&[2]))]);
        assert_eq!(set.best.unwrap().0, pid("a"));
    }

    #[test]
    fn cumulative_ratio() {
        let s = Snippet::new("t", "a=1\nb=2\nc=3\nd=4\ne=5\nf=6\ng=7\nh=8\ni=9\nj=10").unwrap();
        assert_eq!(cumulative_cov(&[], &s).as_f64(), 0.0);
        let members = vec![(pid("a"), cov(&[1, 2, 3, 4, 5])), (pid("b"), cov(&[6, 7, 8, 9, 10]))];
        assert_eq!(cumulative_cov(&members, &s).as_f64(), 1.0);
    }

    fn example() -> Snippet {
        Snippet::new("running", fixtures::RUNNING_EXAMPLE).unwrap()
    }

    fn harness(backend: Arc<dyn ExecBackend>, n: usize, k: usize) -> Harness {
        Harness::new(
            backend,
            RunConfig {
                n,
                k,
                install_deps: false,
                ..RunConfig::default()
            },
        )
    }

    fn coverage_steps(outcome: &SearchOutcome) -> Vec<f64> {
        outcome.traces.iter().map(|t| t.coverage_after).collect()
    }

    #[test]
    fn running_example_reaches_full_coverage() {
        let h = harness(fixtures::running_example_backend(), 2, 10);
        let out = run(&example(), &fixtures::running_example_script(), &h).unwrap();
        assert_eq!(coverage_steps(&out), [0.3, 0.6, 1.0]);
        assert_eq!(out.result.cumulative.len(), 10);
        assert_eq!(out.result.queries_used, 6);
        assert_eq!(out.result.best, Some(pid("2-1-0")));
        assert_eq!(
            out.result.prefixes,
            ["1-0-0", "1-0-1", "2-1-0", "3-3-0", "3-4-0", "3-5-0"].map(pid)
        );
        out.tree.check_levels().unwrap();
        assert!(out.tree.at_level(Step::Coverage).all(|n| n.prefix.parent == Some(pid("2-1-0"))));
        assert!(!out.result.degraded);
    }

    #[test]
    fn step_one_failures_without_coverage_leave_four_prefixes() {
        // Both step-1 prefixes blow up before the first statement runs.
        let backend = Arc::new(|program: &Program, _: Duration| -> Result<RawOutcome, HarnessError> {
            let raw = fixtures::simulate_running_example(program);
            if program.with_snippet && raw.exception.is_some() {
                Ok(RawOutcome::raised([], "TypeError", program.prelude_lines + 2, "bad call"))
            } else {
                Ok(raw)
            }
        });
        let h = harness(backend, 2, 10);
        let out = run(&example(), &fixtures::running_example_script(), &h).unwrap();
        assert_eq!(coverage_steps(&out), [0.0, 0.6, 1.0]);
        assert_eq!(out.result.prefixes.len(), 4);
        assert_eq!(out.result.best, Some(pid("2-1-0")));
    }

    #[test]
    fn full_coverage_in_step_one_stops_the_search() {
        let script = fixtures::ScriptedGenerator::from_fixtures(&[&[
            fixtures::PREFIX_HAPPY_PATH,
            fixtures::PREFIX_NO_AT_SIGN,
            fixtures::PREFIX_NO_REGISTER,
            fixtures::PREFIX_SYSTEM_EXIT,
        ]]);
        let h = harness(fixtures::running_example_backend(), 4, 10);
        let out = run(&example(), &script, &h).unwrap();
        assert_eq!(out.result.queries_used, 1);
        assert_eq!(out.traces.len(), 1);
        assert_eq!(out.stop_reason.as_deref(), Some("full coverage"));
        assert_eq!(out.result.prefixes.len(), 4);
    }

    #[test]
    fn persistent_failures_use_the_whole_budget() {
        let unknown = r#"{"imports": [], "initialization": ["x = 1"]}"#.to_string();
        let generator = move |req: &GeneratorRequest| -> Result<GeneratorBatch, GeneratorUnavailable> {
            Ok(GeneratorBatch {
                responses: vec![Sample::from_raw(unknown.clone()); req.samples],
            })
        };
        let h = harness(fixtures::running_example_backend(), 3, 4);
        let out = run(&example(), &generator, &h).unwrap();
        assert_eq!(out.tree.len(), h.config.node_budget());
        assert_eq!(out.result.queries_used, 1 + 3 + 4);
        assert_eq!(out.result.prefixes.len(), 1);
        assert_eq!(coverage_steps(&out), [0.1, 0.1, 0.1]);
        out.tree.check_levels().unwrap();
    }

    #[test]
    fn unparseable_responses_are_discarded_and_later_steps_skip() {
        let generator = |req: &GeneratorRequest| -> Result<GeneratorBatch, GeneratorUnavailable> {
            Ok(GeneratorBatch {
                responses: vec![Sample::from_raw("Sure! Here is some code."); req.samples],
            })
        };
        let h = harness(fixtures::running_example_backend(), 2, 5);
        let out = run(&example(), &generator, &h).unwrap();
        assert_eq!(out.result.queries_used, 1);
        assert!(out.result.prefixes.is_empty() && out.result.best.is_none());
        assert!(out.tree.nodes.iter().all(|n| n.prefix.status == PrefixStatus::Discarded));
        assert!(out.tree.nodes[0].note.as_ref().unwrap().starts_with("unparseable response"));
        assert_eq!(out.traces[0].prefixes_discarded, 2);
    }

    #[test]
    fn generator_outage_degrades_the_result() {
        let inner = fixtures::running_example_script();
        let generator = move |req: &GeneratorRequest| -> Result<GeneratorBatch, GeneratorUnavailable> {
            if req.hints.query_index >= 2 {
                return Err(GeneratorUnavailable("connection refused".into()));
            }
            inner.generate(req)
        };
        let h = harness(fixtures::running_example_backend(), 2, 10);
        let out = run(&example(), &generator, &h).unwrap();
        assert!(out.result.degraded);
        assert!(out.stop_reason.unwrap().contains("connection refused"));
        assert_eq!(out.result.cumulative.len(), 6);
        assert_eq!(out.traces.len(), 2);
    }

    #[test]
    fn unanalyzable_snippet_is_an_error() {
        let s = Snippet::new("bad", "x = __pfx_probe__").unwrap();
        let h = harness(fixtures::running_example_backend(), 1, 1);
        assert!(matches!(
            run(&s, &fixtures::running_example_script(), &h),
            Err(SearchError::Instrument(_))
        ));
    }

    proptest! {
        #[test]
        fn greedy_set_matches_brute_force(seq in proptest::collection::vec(proptest::collection::btree_set(1u32..12, 0..6), 0..20)) {
            let candidates: Vec<(PrefixId, CoverageSet)> = seq
                .iter()
                .enumerate()
                .map(|(i, c)| (PrefixId(format!("p{i}")), c.iter().map(|p| ProbeId(*p)).collect()))
                .collect();
            let mut set = PrefixSet::default();
            let mut previous = 0;
            for c in &candidates {
                update_prefixes(&mut set, std::slice::from_ref(c));
                prop_assert!(set.cumulative.len() >= previous);
                previous = set.cumulative.len();
            }
            let mut union = CoverageSet::new();
            for (_, c) in &candidates {
                union.extend_from(c);
            }
            let mut member_union = CoverageSet::new();
            for (_, c) in &set.members {
                member_union.extend_from(c);
            }
            prop_assert_eq!(&set.cumulative, &union);
            prop_assert_eq!(&member_union, &union);
            let max = candidates.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
            if max == 0 {
                prop_assert!(set.best.is_none() && set.members.is_empty());
            } else {
                let (best, size) = set.best.clone().unwrap();
                prop_assert_eq!(size, max);
                prop_assert!(set.members.iter().any(|(m, _)| *m == best));
            }
        }
    }
}
