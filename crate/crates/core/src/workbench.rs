// SPDX-License-Identifier: Apache-2.0

//! Pipeline operations over a [`Workspace`], shared by the CLI and the HTTP
//! service so both paths produce identical records and reports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::Utc;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::context::{ContextDocument, ContextError, FieldMap};
use crate::dataset::{build_example, export_dataset, split_dataset, DatasetExample, Split};
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate, auto_match, compute_metrics, render_report_table, AnnotationRecord, FacilityMetrics, ModelReport,
    RunMetrics,
};
use crate::generation::{
    build_request, run_experiment, Backend, ExperimentReport, ExperimentSpec, GenerationConfig, GenerationRun,
};
use crate::ingest::{
    group_by_identity, merge_providers, parse_catalog, validate_descriptors, FacilityRecord, IngestError,
    MergedFacility, ProviderDescriptor,
};
use crate::prompt::PromptStrategy;
use crate::store::Workspace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub provider_id: String,
    pub records: usize,
    pub facilities: usize,
    pub contexts: usize,
    /// Facilities without a context, with the reason.
    pub skipped: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub struct Workbench {
    ws: Workspace,
    /// Serializes operations that rewrite several collections together.
    pipeline: Mutex<()>,
}

impl Workbench {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        Ok(Self { ws: Workspace::open(root)?, pipeline: Mutex::new(()) })
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }

    pub fn root(&self) -> &Path {
        self.ws.root()
    }

    /// Registers a provider. Re-registering an identical descriptor is a no-op.
    pub fn register_provider(&self, descriptor: ProviderDescriptor) -> Result<ProviderDescriptor> {
        let _guard = self.pipeline.lock();
        descriptor.validate()?;
        if let Some(existing) = self.ws.providers.get(&descriptor.provider_id) {
            if existing == descriptor {
                return Ok(existing);
            }
            return Err(Error::Conflict(format!(
                "provider `{}` is already registered with a different descriptor",
                descriptor.provider_id
            )));
        }
        let mut all = self.ws.providers.list();
        all.push(descriptor.clone());
        if all.iter().filter(|d| d.priority == 1).count() > 1 {
            return Err(Error::Conflict("a primary provider (priority 1) is already registered".into()));
        }
        self.ws.providers.put(descriptor.clone())?;
        Ok(descriptor)
    }

    pub fn providers(&self) -> Vec<ProviderDescriptor> {
        let mut all = self.ws.providers.list();
        all.sort_by(|a, b| (a.priority, &a.provider_id).cmp(&(b.priority, &b.provider_id)));
        all
    }

    fn provider(&self, provider_id: &str) -> Result<ProviderDescriptor> {
        self.ws.providers.get(provider_id).ok_or_else(|| IngestError::UnknownProvider(provider_id.to_owned()).into())
    }

    /// Parses and cleans one provider catalog, replacing that provider's
    /// previous records, then re-merges facilities and rebuilds contexts.
    pub fn ingest(&self, provider_id: &str, payload: &[u8]) -> Result<IngestSummary> {
        let descriptor = self.provider(provider_id)?;
        let parsed: Vec<FacilityRecord> =
            parse_catalog(payload, &descriptor)?.into_iter().map(FacilityRecord::cleaned).collect();
        let count = parsed.len();
        let _guard = self.pipeline.lock();
        let mut records: Vec<FacilityRecord> =
            self.ws.records.list().into_iter().filter(|r| r.provider_id != provider_id).collect();
        records.extend(parsed);
        let (facilities, contexts, skipped) = self.rebuild(&records)?;
        self.ws.records.replace_all(records)?;
        self.ws.facilities.replace_all(facilities.clone())?;
        self.ws.contexts.replace_all(contexts.clone())?;
        Ok(IngestSummary {
            provider_id: provider_id.to_owned(),
            records: count,
            facilities: facilities.len(),
            contexts: contexts.len(),
            skipped,
        })
    }

    /// Adds one facility record by hand.
    pub fn add_facility(&self, record: FacilityRecord) -> Result<MergedFacility> {
        self.provider(&record.provider_id)?;
        record.check().map_err(Error::Validation)?;
        let record = record.cleaned();
        let _guard = self.pipeline.lock();
        let mut records = self.ws.records.list();
        if records.iter().any(|r| r.provider_id == record.provider_id && r.facility_id == record.facility_id) {
            return Err(Error::Conflict(format!(
                "facility `{}` already exists for provider `{}`",
                record.facility_id, record.provider_id
            )));
        }
        let key = record.key();
        records.push(record);
        let (facilities, contexts, _) = self.rebuild(&records)?;
        self.ws.records.replace_all(records)?;
        self.ws.facilities.replace_all(facilities.clone())?;
        self.ws.contexts.replace_all(contexts)?;
        Ok(facilities.into_iter().find(|f| f.record.key() == key).expect("merged facility present"))
    }

    #[allow(clippy::type_complexity)]
    fn rebuild(
        &self,
        records: &[FacilityRecord],
    ) -> Result<(Vec<MergedFacility>, Vec<ContextDocument>, Vec<(String, String)>)> {
        let descriptors = self.providers();
        validate_descriptors(&descriptors)?;
        let field_map = FieldMap::layered(&descriptors);
        let mut facilities = Vec::new();
        let mut ids = BTreeSet::new();
        for group in group_by_identity(records).into_values() {
            let merged = merge_providers(&group, &descriptors)?;
            if !ids.insert(merged.record.facility_id.clone()) {
                return Err(IngestError::ConflictingIdentity(format!(
                    "two different facilities resolve to id `{}`",
                    merged.record.facility_id
                ))
                .into());
            }
            facilities.push(merged);
        }
        let mut contexts = Vec::new();
        let mut skipped = Vec::new();
        for f in &facilities {
            match ContextDocument::from_record(&f.record, &field_map) {
                Ok(c) => contexts.push(c),
                Err(e @ ContextError::NoFeatures(_)) => skipped.push((f.record.facility_id.clone(), e.to_string())),
                Err(e) => return Err(e.into()),
            }
        }
        Ok((facilities, contexts, skipped))
    }

    pub fn facilities(&self) -> Vec<MergedFacility> {
        self.ws.facilities.list()
    }

    pub fn facility(&self, facility_id: &str) -> Result<MergedFacility> {
        self.ws.facilities.get(facility_id).ok_or_else(|| Error::not_found("facility", facility_id))
    }

    pub fn context(&self, facility_id: &str) -> Result<ContextDocument> {
        self.ws.contexts.get(facility_id).ok_or_else(|| Error::not_found("context", facility_id))
    }

    pub fn contexts(&self) -> Vec<ContextDocument> {
        self.ws.contexts.list()
    }

    /// Reference output of a facility: the first provider, by rank, whose
    /// reference field is filled.
    fn reference(&self, facility: &MergedFacility) -> Option<String> {
        self.providers()
            .iter()
            .filter_map(|d| d.reference_field.as_deref())
            .find_map(|f| facility.record.field(f).filter(|v| !v.trim().is_empty()))
            .map(str::to_owned)
    }

    /// Builds one example per facility with a context and splits them.
    pub fn split(&self, train_count: usize, seed: u64) -> Result<SplitSummary> {
        let _guard = self.pipeline.lock();
        let mut examples = Vec::new();
        for f in self.ws.facilities.list() {
            let Some(ctx) = self.ws.contexts.get(&f.record.facility_id) else {
                continue;
            };
            let reference = self.reference(&f);
            examples.push(build_example(&f.record, &ctx, reference.as_deref(), Split::Test)?);
        }
        let (train, test) = split_dataset(examples, train_count, seed)?;
        let summary = SplitSummary {
            train: train.iter().map(|e| e.facility_id.clone()).collect(),
            test: test.iter().map(|e| e.facility_id.clone()).collect(),
        };
        self.ws.examples.replace_all(train.into_iter().chain(test).collect())?;
        Ok(summary)
    }

    pub fn examples(&self, split: Option<Split>) -> Vec<DatasetExample> {
        self.ws.examples.list().into_iter().filter(|e| split.is_none_or(|s| e.split == s)).collect()
    }

    pub fn example(&self, facility_id: &str) -> Result<DatasetExample> {
        self.ws.examples.get(facility_id).ok_or_else(|| Error::not_found("dataset example", facility_id))
    }

    pub fn export(&self, split: Split, path: &Path) -> Result<usize> {
        Ok(export_dataset(&self.examples(Some(split)), path)?)
    }

    /// The prompt text a model would receive for `facility_id`.
    pub fn render_prompt(&self, facility_id: &str, strategy: PromptStrategy, template: Option<&str>) -> Result<String> {
        let example = self.example(facility_id)?;
        let mut config = GenerationConfig::new("preview", strategy);
        config.chat_template = template.map(str::to_owned);
        Ok(build_request(&example, &config, 1)?.1)
    }

    /// Runs an experiment over the test split (or the listed facilities).
    pub async fn experiment(&self, spec: &ExperimentSpec, backend: &dyn Backend) -> Result<ExperimentReport> {
        let examples: Vec<DatasetExample> = if spec.facilities.is_empty() {
            self.examples(Some(Split::Test))
        } else {
            spec.facilities.iter().map(|id| self.example(id)).collect::<Result<_>>()?
        };
        if examples.is_empty() {
            return Err(Error::Validation("no test examples; split the dataset first".into()));
        }
        Ok(run_experiment(&examples, &spec.models, spec.repetitions, spec.concurrency, backend, &self.ws).await?)
    }

    pub fn runs(&self, model_id: Option<&str>) -> Vec<GenerationRun> {
        let mut runs: Vec<GenerationRun> =
            self.ws.runs.list().into_iter().filter(|r| model_id.is_none_or(|m| r.model_id == m)).collect();
        runs.sort_by(|a, b| {
            (&a.model_id, &a.facility_id, a.repetition_index).cmp(&(&b.model_id, &b.facility_id, b.repetition_index))
        });
        runs
    }

    pub fn run(&self, run_id: &str) -> Result<GenerationRun> {
        self.ws.runs.get(run_id).ok_or_else(|| Error::not_found("run", run_id))
    }

    pub fn annotations(&self, run_id: &str) -> Result<Vec<AnnotationRecord>> {
        self.run(run_id)?;
        Ok(self.ws.annotations_for(run_id))
    }

    /// Validates and stores an annotation, replacing an earlier one by the
    /// same annotator. An empty `run_id` in the record is filled in.
    pub fn annotate(&self, run_id: &str, mut record: AnnotationRecord) -> Result<RunMetrics> {
        let run = self.run(run_id)?;
        if record.run_id.is_empty() {
            record.run_id = run_id.to_owned();
        } else if record.run_id != run_id {
            return Err(Error::Validation(format!(
                "annotation is for run `{}` but was posted to `{run_id}`",
                record.run_id
            )));
        }
        let context = self.context(&run.facility_id)?;
        let metrics = compute_metrics(&record, &context, &run.output_text)?;
        self.ws.annotations.put(record)?;
        Ok(metrics)
    }

    pub fn auto_annotate(&self, run_id: &str, threshold: f64) -> Result<(AnnotationRecord, RunMetrics)> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Validation(format!("threshold {threshold} is outside [0, 1]")));
        }
        let run = self.run(run_id)?;
        let context = self.context(&run.facility_id)?;
        let mut record = auto_match(&context, &run.output_text, threshold);
        record.run_id = run_id.to_owned();
        record.completed_at = Utc::now();
        let metrics = self.annotate(run_id, record.clone())?;
        Ok((record, metrics))
    }

    /// Auto-annotates every run (of one model, if given) that has no annotation yet.
    pub fn auto_annotate_pending(&self, model_id: Option<&str>, threshold: f64) -> Result<usize> {
        let mut n = 0;
        for run in self.runs(model_id) {
            if self.ws.annotations_for(&run.run_id).is_empty() {
                self.auto_annotate(&run.run_id, threshold)?;
                n += 1;
            }
        }
        Ok(n)
    }

    /// Annotation a run is scored with: the latest human one, else the automatic one.
    pub fn effective_annotation(&self, run_id: &str) -> Option<AnnotationRecord> {
        let all = self.ws.annotations_for(run_id);
        let human = all.iter().filter(|a| !a.is_auto()).max_by_key(|a| (a.completed_at, a.annotator.clone()));
        human.or_else(|| all.iter().find(|a| a.is_auto())).cloned()
    }

    pub fn run_metrics(&self, run_id: &str) -> Result<Option<RunMetrics>> {
        let run = self.run(run_id)?;
        let Some(annotation) = self.effective_annotation(run_id) else {
            return Ok(None);
        };
        let context = self.context(&run.facility_id)?;
        Ok(Some(compute_metrics(&annotation, &context, &run.output_text)?))
    }

    pub fn models(&self) -> Vec<String> {
        let set: BTreeSet<String> = self.ws.runs.list().into_iter().map(|r| r.model_id).collect();
        set.into_iter().collect()
    }

    pub fn report(&self, model_id: &str) -> Result<ModelReport> {
        let runs = self.runs(Some(model_id));
        if runs.is_empty() {
            return Err(Error::NoRuns(Some(model_id.to_owned())));
        }
        let mut by_facility: BTreeMap<String, Vec<RunMetrics>> = BTreeMap::new();
        let mut missing = 0;
        for run in &runs {
            match self.run_metrics(&run.run_id)? {
                Some(m) => by_facility.entry(run.facility_id.clone()).or_default().push(m),
                None => missing += 1,
            }
        }
        if missing > 0 {
            return Err(Error::Unannotated { model: model_id.to_owned(), count: missing });
        }
        let facilities: Vec<FacilityMetrics> = by_facility
            .into_iter()
            .map(|(facility_id, repetitions)| FacilityMetrics { facility_id, repetitions })
            .collect();
        Ok(aggregate(model_id, &facilities, false)?)
    }

    /// Reports for the given models, or every model with runs.
    pub fn reports(&self, models: &[String]) -> Result<Vec<ModelReport>> {
        let models = if models.is_empty() { self.models() } else { models.to_vec() };
        if models.is_empty() {
            return Err(Error::NoRuns(None));
        }
        models.iter().map(|m| self.report(m)).collect()
    }

    pub fn report_text(&self, models: &[String]) -> Result<String> {
        Ok(render_report_table(&self.reports(models)?))
    }
}
