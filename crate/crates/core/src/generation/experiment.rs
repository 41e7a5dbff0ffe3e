// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use chrono::Utc;
use futures::future::{BoxFuture, FutureExt};
use futures::stream::{self, StreamExt};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::backend::timed;
use super::{run_id, Backend, GenerationConfig, GenerationError, GenerationRequest, GenerationRun, Payload};
use crate::dataset::{DatasetExample, Split};
use crate::prompt::{
    apply_chat_template, render_chat_prompt, render_finetune_prompt, PromptStrategy, DEFAULT_SYSTEM_PROMPT,
};

pub const DEFAULT_REPETITIONS: u32 = 5;
pub const DEFAULT_CONCURRENCY: usize = 4;

/// Where runs are looked up (for idempotency) and persisted as they finish.
pub trait RunLedger: Send + Sync {
    fn find_run(&self, run_id: &str) -> Option<GenerationRun>;
    fn record_run(&self, run: &GenerationRun) -> Result<(), String>;
}

#[derive(Debug, Default)]
pub struct MemoryRuns {
    runs: Mutex<BTreeMap<String, GenerationRun>>,
}

impl MemoryRuns {
    pub fn runs(&self) -> Vec<GenerationRun> {
        self.runs.lock().values().cloned().collect()
    }
}

impl RunLedger for MemoryRuns {
    fn find_run(&self, run_id: &str) -> Option<GenerationRun> {
        self.runs.lock().get(run_id).cloned()
    }

    fn record_run(&self, run: &GenerationRun) -> Result<(), String> {
        self.runs.lock().entry(run.run_id.clone()).or_insert_with(|| run.clone());
        Ok(())
    }
}

fn default_repetitions() -> u32 {
    DEFAULT_REPETITIONS
}

fn default_concurrency() -> usize {
    DEFAULT_CONCURRENCY
}

/// Experiment file: models to run, repetitions, and optionally a subset of
/// test facilities (all of them when empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub models: Vec<GenerationConfig>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub facilities: Vec<String>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub facility_id: String,
    pub model_id: String,
    pub repetition_index: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Completed runs ordered by facility, model, repetition.
    pub runs: Vec<GenerationRun>,
    pub failures: Vec<CellFailure>,
    /// Runs that already existed and were returned unchanged.
    pub reused: usize,
}

impl ExperimentReport {
    pub fn cells(&self) -> usize {
        self.runs.len() + self.failures.len()
    }
}

/// Backend request and the prompt text recorded with the run.
pub fn build_request(
    example: &DatasetExample,
    config: &GenerationConfig,
    repetition: u32,
) -> Result<(GenerationRequest, String), GenerationError> {
    let (payload, prompt_text) = match config.strategy {
        PromptStrategy::FineTuneInstruction => {
            let p = render_finetune_prompt(&example.input, &example.context)?;
            (Payload::Prompt(p.clone()), p)
        }
        PromptStrategy::SystemPromptChat => {
            let system = config.system_prompt.as_deref().unwrap_or(DEFAULT_SYSTEM_PROMPT);
            let messages = render_chat_prompt(system, &example.input, &example.context)?;
            let rendered = apply_chat_template(&messages, &config.template()?)?;
            (Payload::Messages(messages), rendered)
        }
    };
    let request = GenerationRequest {
        payload,
        temperature: config.temperature,
        max_new_tokens: config.max_new_tokens,
        seed: config.seed.map(|s| s.wrapping_add(u64::from(repetition) - 1)),
    };
    Ok((request, prompt_text))
}

/// Runs one cell. An existing run with the same (facility, model, repetition)
/// is returned as is, flagged `true`.
pub async fn generate(
    example: &DatasetExample,
    config: &GenerationConfig,
    repetition: u32,
    backend: &dyn Backend,
    ledger: &dyn RunLedger,
) -> Result<(GenerationRun, bool), GenerationError> {
    if repetition == 0 {
        return Err(GenerationError::InvalidConfig("repetitions are numbered from 1".into()));
    }
    config.validate()?;
    let id = run_id(&example.facility_id, &config.model_id, repetition);
    if let Some(existing) = ledger.find_run(&id) {
        return Ok((existing, true));
    }
    let (request, prompt_text) = build_request(example, config, repetition)?;
    let (text, latency) = timed(backend.complete(&request)).await;
    let run = GenerationRun {
        run_id: id,
        facility_id: example.facility_id.clone(),
        model_id: config.model_id.clone(),
        repetition_index: repetition,
        prompt_text,
        output_text: text?,
        latency_ms: latency.as_millis() as u64,
        created_at: Utc::now(),
    };
    ledger.record_run(&run).map_err(GenerationError::Store)?;
    Ok((run, false))
}

/// Runs every facility × model × repetition cell with at most `concurrency`
/// requests in flight. Cell failures are collected, not fatal.
pub async fn run_experiment(
    examples: &[DatasetExample],
    configs: &[GenerationConfig],
    repetitions: u32,
    concurrency: usize,
    backend: &dyn Backend,
    ledger: &dyn RunLedger,
) -> Result<ExperimentReport, GenerationError> {
    if let Some(e) = examples.iter().find(|e| e.split == Split::Train) {
        return Err(GenerationError::SplitViolation(e.facility_id.clone()));
    }
    if repetitions == 0 {
        return Err(GenerationError::InvalidConfig("repetitions must be at least 1".into()));
    }
    let mut models = BTreeSet::new();
    for c in configs {
        c.validate()?;
        if !models.insert(c.model_id.as_str()) {
            return Err(GenerationError::InvalidConfig(format!("model `{}` listed twice", c.model_id)));
        }
    }
    let mut facilities = BTreeSet::new();
    for e in examples {
        if !facilities.insert(e.facility_id.as_str()) {
            return Err(GenerationError::InvalidConfig(format!("facility `{}` listed twice", e.facility_id)));
        }
    }

    let cells: Vec<(&DatasetExample, &GenerationConfig, u32)> = examples
        .iter()
        .flat_map(|e| configs.iter().flat_map(move |c| (1..=repetitions).map(move |r| (e, c, r))))
        .collect();
    // Boxed so the future stays Send when spawned on a runtime.
    let cells: Vec<BoxFuture<'_, _>> = cells
        .into_iter()
        .map(|(e, c, r)| async move { (e, c, r, generate(e, c, r, backend, ledger).await) }.boxed())
        .collect();
    let outcomes: Vec<_> = stream::iter(cells).buffer_unordered(concurrency.max(1)).collect().await;

    let mut report = ExperimentReport { runs: Vec::new(), failures: Vec::new(), reused: 0 };
    for (e, c, r, outcome) in outcomes {
        match outcome {
            Ok((run, reused)) => {
                report.reused += usize::from(reused);
                report.runs.push(run);
            }
            Err(err) => report.failures.push(CellFailure {
                facility_id: e.facility_id.clone(),
                model_id: c.model_id.clone(),
                repetition_index: r,
                error: err.to_string(),
            }),
        }
    }
    let key = |f: &str, m: &str, r: u32| (f.to_owned(), m.to_owned(), r);
    report.runs.sort_by_key(|x| key(&x.facility_id, &x.model_id, x.repetition_index));
    report.failures.sort_by_key(|x| key(&x.facility_id, &x.model_id, x.repetition_index));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use async_trait::async_trait;

    use super::*;
    use crate::generation::EchoBackend;

    fn example(i: usize, split: Split) -> DatasetExample {
        DatasetExample {
            facility_id: format!("f{i:02}"),
            split,
            input: format!("Write me a hotel brochure for the hotel H{i} in C."),
            context: format!("Dining: Bar {i}"),
            output: String::new(),
        }
    }

    fn configs() -> Vec<GenerationConfig> {
        vec![
            GenerationConfig::new("ft", PromptStrategy::FineTuneInstruction),
            GenerationConfig::new("chat", PromptStrategy::SystemPromptChat),
        ]
    }

    #[tokio::test]
    async fn twenty_by_two_by_five() {
        let examples: Vec<_> = (0..20).map(|i| example(i, Split::Test)).collect();
        let ledger = MemoryRuns::default();
        let report = run_experiment(&examples, &configs(), 5, 4, &EchoBackend, &ledger).await.unwrap();
        assert_eq!(report.runs.len(), 200);
        assert!(report.failures.is_empty());
        let contexts: BTreeMap<_, _> = examples.iter().map(|e| (&e.facility_id, &e.context)).collect();
        assert!(report.runs.iter().all(|r| &r.output_text == contexts[&r.facility_id]));
        assert_eq!(ledger.runs().len(), 200);

        let again = run_experiment(&examples, &configs(), 5, 4, &EchoBackend, &ledger).await.unwrap();
        assert_eq!(again.reused, 200);
        assert_eq!(again.runs, report.runs);
    }

    #[tokio::test]
    async fn training_facility_is_rejected() {
        let examples = vec![example(0, Split::Test), example(1, Split::Train)];
        let err = run_experiment(&examples, &configs(), 1, 1, &EchoBackend, &MemoryRuns::default()).await.unwrap_err();
        assert_eq!(err, GenerationError::SplitViolation("f01".into()));
    }

    #[tokio::test]
    async fn single_cell() {
        let report =
            run_experiment(&[example(3, Split::Test)], &configs()[..1], 1, 4, &EchoBackend, &MemoryRuns::default())
                .await
                .unwrap();
        assert_eq!(report.runs.len(), 1);
        assert_eq!(report.runs[0].repetition_index, 1);
    }

    struct Flaky {
        calls: AtomicUsize,
        in_flight: AtomicUsize,
        peak: AtomicUsize,
    }

    #[async_trait]
    impl Backend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }

        async fn complete(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            tokio::time::sleep(std::time::Duration::from_millis(2)).await;
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            if self.calls.fetch_add(1, Ordering::SeqCst).is_multiple_of(3) {
                Err(GenerationError::BackendRejected { status: 400, body: "no".into() })
            } else {
                Ok(EchoBackend::respond(request))
            }
        }
    }

    #[tokio::test]
    async fn failures_are_counted_per_cell() {
        let backend = Flaky { calls: AtomicUsize::new(0), in_flight: AtomicUsize::new(0), peak: AtomicUsize::new(0) };
        let examples: Vec<_> = (0..6).map(|i| example(i, Split::Test)).collect();
        let report = run_experiment(&examples, &configs(), 3, 2, &backend, &MemoryRuns::default()).await.unwrap();
        assert_eq!(report.cells(), 36);
        assert_eq!(report.failures.len(), 12);
        assert!(backend.peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn seeds_vary_by_repetition() {
        let mut c = GenerationConfig::new("ft", PromptStrategy::FineTuneInstruction);
        c.seed = Some(10);
        let e = example(0, Split::Test);
        assert_eq!(build_request(&e, &c, 1).unwrap().0.seed, Some(10));
        assert_eq!(build_request(&e, &c, 3).unwrap().0.seed, Some(12));
    }

    #[test]
    fn chat_prompt_is_recorded_through_the_template() {
        let (req, text) = build_request(&example(0, Split::Test), &configs()[1], 1).unwrap();
        assert!(matches!(req.payload, Payload::Messages(ref m) if m.len() == 2));
        assert!(text.starts_with("<s><<SYS>>\n"));
        assert!(text.ends_with("Context: Dining: Bar 0 [/INST]"));
    }
}
