use chrono::{TimeZone, Utc};
use hpo_core::ledger::{import_rows, FieldMapping};
use hpo_core::{GroupKey, HyperparameterSet, Ledger, Source, Task, TrialRecord};
use proptest::prelude::*;
use serde_json::{json, Map, Value};

fn source() -> impl Strategy<Value = Source> {
    prop_oneof![
        Just(Source::Tpe),
        Just(Source::Random),
        Just(Source::Manual),
        Just(Source::Import),
        (1u32..5).prop_map(Source::LlmCycle),
    ]
}

prop_compose! {
    fn record()(
        model_id in prop_oneof![Just("ResNet".to_string()), Just("VGG".to_string()), "[A-Za-z][A-Za-z0-9_-]{0,15}"],
        text in any::<bool>(),
        epochs in prop_oneof![Just(1u32), Just(2), Just(5), 1u32..40],
        log_lr in -4.0f64..=0.0,
        momentum in 0.01f64..=0.99,
        batch in prop::sample::select(vec![4i64, 5, 8, 16, 32, 64]),
        accuracy in 0.0f64..=1.0,
        source in source(),
        secs in 0i64..4_000_000_000,
        nanos in 0u32..1_000_000_000,
    ) -> TrialRecord {
        let mut r = TrialRecord::new(
            model_id,
            if text { Task::TextGeneration } else { Task::ImageClassification },
            epochs,
            HyperparameterSet::new(10f64.powf(log_lr), momentum, batch),
            accuracy,
            source,
        );
        r.created_at = Utc.timestamp_opt(secs, nanos).unwrap();
        r
    }
}

fn ledger_of(records: Vec<TrialRecord>) -> Ledger {
    let mut l = Ledger::new();
    for r in records {
        l.append(r).unwrap();
    }
    l
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn save_load_is_lossless(records in prop::collection::vec(record(), 0..40)) {
        let ledger = ledger_of(records);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.json");
        ledger.save(&path).unwrap();
        let loaded = Ledger::load(&path).unwrap();
        prop_assert_eq!(&loaded, &ledger);
        prop_assert_eq!(loaded.to_json(), ledger.to_json());
    }

    #[test]
    fn filter_is_pure(
        records in prop::collection::vec(record(), 0..40),
        model in prop::option::of(prop_oneof![Just("ResNet".to_string()), Just("VGG".to_string())]),
        epochs in prop::option::of(prop_oneof![Just(1u32), Just(2), Just(5)]),
        source in prop::option::of(source()),
    ) {
        let ledger = ledger_of(records);
        let key = GroupKey { model_id: model, epochs, source };
        let selected = ledger.filter(&key);
        prop_assert!(selected.iter().all(|r| key.matches(r)));
        let expected: Vec<&TrialRecord> = ledger.records().iter().filter(|r| key.matches(r)).collect();
        prop_assert_eq!(&selected, &expected);

        let again = ledger_of(selected.iter().map(|r| (*r).clone()).collect());
        let twice: Vec<&TrialRecord> = again.filter(&key);
        prop_assert_eq!(twice, selected);
    }

    #[test]
    fn import_copies_fields(records in prop::collection::vec(record(), 1..20)) {
        let mapping: FieldMapping = [
            ("model_id", "nn"),
            ("epochs", "ep"),
            ("learning_rate", "lr"),
            ("momentum", "mom"),
            ("batch_size", "bs"),
            ("accuracy", "acc"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let rows: Vec<Map<String, Value>> = records
            .iter()
            .map(|r| {
                let v = json!({
                    "nn": r.model_id,
                    "ep": r.epochs,
                    "lr": r.params.learning_rate,
                    "mom": r.params.momentum,
                    "bs": r.params.batch_size,
                    "acc": r.accuracy,
                    "unrelated": "ignored",
                });
                v.as_object().unwrap().clone()
            })
            .collect();
        let outcome = import_rows(&rows, &mapping).unwrap();
        prop_assert!(outcome.rejections.is_empty());
        prop_assert_eq!(outcome.ledger.len(), records.len());
        for (got, want) in outcome.ledger.records().iter().zip(&records) {
            prop_assert_eq!(&got.model_id, &want.model_id);
            prop_assert_eq!(got.epochs, want.epochs);
            prop_assert_eq!(got.params, want.params);
            prop_assert_eq!(got.accuracy, want.accuracy);
            prop_assert_eq!(got.source, Source::Import);
        }
    }
}

#[test]
fn cycle_growth_keeps_prefix() {
    use hpo_core::finetune::{expand_cycle, ValidatedSuggestion};

    let space = hpo_core::paper_search_space();
    let mut ledger = Ledger::new();
    for i in 0..3700u32 {
        let acc = f64::from(i % 100) / 100.0;
        ledger
            .append(TrialRecord::new(
                format!("model{}", i % 17),
                Task::ImageClassification,
                [1, 2, 5][(i % 3) as usize],
                HyperparameterSet::new(0.001, 0.9, 32),
                acc,
                Source::Tpe,
            ))
            .unwrap();
    }
    let before = ledger.clone();
    let validated: Vec<ValidatedSuggestion> = (0..3407u32)
        .map(|i| ValidatedSuggestion {
            model_id: format!("model{}", i % 17),
            task: Task::ImageClassification,
            epochs: 1,
            params: HyperparameterSet::new(0.01, 0.5, 16),
            measured_accuracy: 0.5,
        })
        .collect();
    let rejected = expand_cycle(&mut ledger, &validated, 1, &space).unwrap();
    assert!(rejected.is_empty());
    assert_eq!(ledger.len(), 7107);
    assert_eq!(&ledger.records()[..3700], before.records());
}
