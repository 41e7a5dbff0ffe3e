// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeSet;

use common::{golden, read};
use lodgewright_core::context::{parse_context, render_context, ContextDocument, FeatureCategory, FieldMap};
use lodgewright_core::dataset::{build_example, export_dataset, import_dataset, DatasetExample, Split};
use lodgewright_core::generation::{build_request, GenerationConfig};
use lodgewright_core::ingest::FacilityRecord;
use lodgewright_core::prompt::{
    apply_chat_template, render_chat_prompt, ChatMessage, ChatRole, ChatTemplate, PromptError, PromptStrategy,
    DEFAULT_SYSTEM_PROMPT,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Deserialize)]
struct Sample {
    record: FacilityRecord,
    expected_features: Vec<(String, FeatureCategory, String)>,
}

fn sample() -> (FacilityRecord, Vec<(String, FeatureCategory, String)>) {
    let f: Sample = serde_json::from_str(&read("sample_record.json")).unwrap();
    (f.record.cleaned(), f.expected_features)
}

fn sample_context() -> ContextDocument {
    ContextDocument::from_record(&sample().0, &FieldMap::shipped()).unwrap()
}

fn sample_example() -> DatasetExample {
    build_example(&sample().0, &sample_context(), None, Split::Test).unwrap()
}

#[test]
fn sample_features_match_hand_labels() {
    let (_, expected) = sample();
    let doc = sample_context();
    let got: BTreeSet<(String, FeatureCategory, String)> =
        doc.features.iter().map(|f| (f.feature_id.clone(), f.category, f.text.clone())).collect();
    assert_eq!(got, expected.into_iter().collect());
    let categories: BTreeSet<_> = doc.features.iter().map(|f| f.category).collect();
    assert_eq!(categories.len(), 6);
}

#[test]
fn sample_context_golden_and_round_trip() {
    let doc = sample_context();
    assert_eq!(doc.serialized, golden("sample_context.txt"));
    assert_eq!(parse_context(&doc.serialized).unwrap(), doc.features);
}

#[test]
fn request_sentence_golden() {
    assert_eq!(sample_example().input, golden("request.txt"));
}

#[test]
fn finetune_prompt_golden() {
    let config = GenerationConfig::new("m", PromptStrategy::FineTuneInstruction);
    let (_, prompt) = build_request(&sample_example(), &config, 1).unwrap();
    assert_eq!(prompt, golden("finetune_prompt.txt"));
    assert!(prompt.contains(&golden("request.txt")));
    assert!(prompt.contains(&golden("sample_context.txt")));
}

#[test]
fn default_system_prompt_renders_golden() {
    let example = sample_example();
    let messages = render_chat_prompt(DEFAULT_SYSTEM_PROMPT, &example.input, &example.context).unwrap();
    let rendered = apply_chat_template(&messages, &ChatTemplate::builtin("mixtral-system").unwrap()).unwrap();
    assert_eq!(rendered, golden("chat_mixtral_system.txt"));

    let config = GenerationConfig::new("m", PromptStrategy::SystemPromptChat);
    let (_, recorded) = build_request(&example, &config, 1).unwrap();
    assert_eq!(recorded, rendered);
}

#[test]
fn system_role_rejected_without_support() {
    let messages = vec![ChatMessage::new(ChatRole::System, "s"), ChatMessage::new(ChatRole::User, "u")];
    let err = apply_chat_template(&messages, &ChatTemplate::builtin("mistral-instruct").unwrap()).unwrap_err();
    assert!(matches!(err, PromptError::UnsupportedRole { role: ChatRole::System, .. }));
}

#[test]
fn random_contexts_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let doc = common::random_context(&mut rng);
        let text = render_context(&doc.features).unwrap();
        assert_eq!(parse_context(&text).unwrap(), doc.features, "{text}");
    }
}

fn arb_example() -> impl Strategy<Value = DatasetExample> {
    ("[a-z]{1,8}", prop::bool::ANY, "[ -~]{1,40}", "\\PC{0,60}").prop_map(|(id, train, ctx, out)| DatasetExample {
        facility_id: id,
        split: if train { Split::Train } else { Split::Test },
        input: "Write me a hotel brochure for the hotel X in Y.".into(),
        context: ctx,
        output: out,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_export_import_round_trip(examples in prop::collection::vec(arb_example(), 0..12)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        export_dataset(&examples, &path).unwrap();
        let back = import_dataset(&path).unwrap();
        let expected: Vec<_> = examples.iter().map(DatasetExample::to_record).collect();
        prop_assert_eq!(back, expected);
    }
}
