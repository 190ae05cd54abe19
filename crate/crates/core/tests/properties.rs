//! Cross-module properties over random inputs.

use proptest::prelude::*;
use sqlrank_core::dataset::{
    format_schema_context, sample_balanced, DbSchema, Difficulty, TableSchema, TaskExample,
};
use sqlrank_core::discriminator::DiscriminationScore;
use sqlrank_core::generator::{
    generate_candidates, CandidateBatch, CandidateSql, GenerationParams, ModelKind,
};
use sqlrank_core::llm_backend::{CompletionRequest, FixtureRecord, LlmBackend, MockBackend};
use sqlrank_core::metrics::{
    exact_match, hit_at_1, macro_f1, mrr, pairwise_accuracy, partial_match, repetition_ratio,
    sentence_entropy, LabeledBatch,
};
use sqlrank_core::planner::rerank;

fn examples(per_tier: [usize; 4]) -> Vec<TaskExample> {
    let mut out = Vec::new();
    for (tier, n) in Difficulty::ALL.iter().zip(per_tier) {
        for _ in 0..n {
            let id = out.len();
            out.push(TaskExample {
                id: id.to_string(),
                question: format!("question {id}"),
                gold_sql: "SELECT 1".into(),
                db_id: "db".into(),
                difficulty: *tier,
            });
        }
    }
    out
}

fn batch_of(n: usize) -> CandidateBatch {
    CandidateBatch {
        example_id: "e".into(),
        candidates: (0..n)
            .map(|i| CandidateSql::from_output(format!("SELECT {i}"), ModelKind::NonReasoning))
            .collect(),
    }
}

fn score(v: f64, failed: bool) -> DiscriminationScore {
    if failed {
        DiscriminationScore::fallback()
    } else {
        DiscriminationScore::new(v).unwrap()
    }
}

/// (score, failed, correct, eligible) per candidate.
fn entries() -> impl Strategy<Value = Vec<(f64, bool, bool, bool)>> {
    prop::collection::vec(
        (
            prop_oneof![Just(0.25), Just(0.5), Just(0.75), 0.0f64..=1.0],
            prop::bool::weighted(0.15),
            any::<bool>(),
            prop::bool::weighted(0.8),
        ),
        0..7,
    )
}

fn labeled(entries: &[(f64, bool, bool, bool)], f: impl Fn(f64) -> f64) -> LabeledBatch {
    let scores: Vec<_> = entries.iter().map(|e| score(f(e.0), e.1)).collect();
    let eligible: Vec<bool> = entries.iter().map(|e| e.3).collect();
    let labels: Vec<bool> = entries.iter().map(|e| e.2).collect();
    LabeledBatch::from_ranked(
        &rerank(&batch_of(entries.len()), &scores, &eligible, None),
        &labels,
    )
}

fn sql() -> impl Strategy<Value = String> {
    (
        prop::sample::select(vec!["name", "age", "name, age", "count(*)", "max(age)"]),
        prop::sample::select(vec!["singer", "concert"]),
        prop::option::of(prop::sample::select(vec![
            "age > 20",
            "country = 'France'",
            "age < 30",
        ])),
        prop::option::of(prop::sample::select(vec!["country", "age"])),
        prop::option::of(prop::sample::select(vec!["age", "age DESC", "name"])),
        prop::option::of(1u32..3),
    )
        .prop_map(|(cols, table, cond, group, order, limit)| {
            let mut q = format!("SELECT {cols} FROM {table}");
            if let Some(c) = cond {
                q += &format!(" WHERE {c}");
            }
            if let Some(g) = group {
                q += &format!(" GROUP BY {g}");
            }
            if let Some(o) = order {
                q += &format!(" ORDER BY {o}");
            }
            if let Some(l) = limit {
                q += &format!(" LIMIT {l}");
            }
            q
        })
}

proptest! {
    #[test]
    fn balanced_sample_is_tier_exact_subset(extra in prop::array::uniform4(0usize..6), n in 0usize..5, seed in any::<u64>()) {
        let pool = examples(extra.map(|e| e + n));
        let picked = sample_balanced(&pool, n, seed).unwrap();
        prop_assert_eq!(picked.len(), 4 * n);
        for tier in Difficulty::ALL {
            prop_assert_eq!(picked.iter().filter(|e| e.difficulty == tier).count(), n);
        }
        for e in &picked {
            prop_assert!(pool.contains(e));
        }
        prop_assert_eq!(sample_balanced(&pool, n, seed).unwrap(), picked);
    }

    #[test]
    fn schema_context_is_injective(
        a in prop::collection::vec(("[a-c]{1,3}", prop::collection::btree_set("[a-c]{1,3}", 1..4)), 1..4),
        b in prop::collection::vec(("[a-c]{1,3}", prop::collection::btree_set("[a-c]{1,3}", 1..4)), 1..4),
    ) {
        let build = |spec: &Vec<(String, std::collections::BTreeSet<String>)>| {
            let mut seen = std::collections::BTreeSet::new();
            let tables = spec
                .iter()
                .filter(|(name, _)| seen.insert(name.clone()))
                .map(|(name, cols)| TableSchema { name: name.clone(), columns: cols.iter().cloned().collect() })
                .collect();
            DbSchema::new("db", tables).unwrap()
        };
        let (sa, sb) = (build(&a), build(&b));
        prop_assert_eq!(sa.tables == sb.tables, format_schema_context(&sa) == format_schema_context(&sb));
    }

    #[test]
    fn mock_is_referentially_transparent(text in "[a-zA-Z ,.;\n]{0,120}", prompt in "[a-z ]{1,30}", budget in 1u32..80, n in 1u32..4) {
        let make = || MockBackend::new(vec![FixtureRecord::regex(".*", text.clone())]).unwrap();
        let mut request = CompletionRequest::new(prompt.clone(), budget);
        request.n_samples = n;
        let first = make().complete(&request);
        prop_assert_eq!(&first, &make().complete(&request));
        let backend = make();
        prop_assert_eq!(backend.complete(&request), backend.complete(&request));
    }

    #[test]
    fn extraction_ok_means_select(raw in "(SELECT|select|WITH|Here is|```sql\n)?[ a-z*;\n`]{0,60}", reasoning in any::<bool>()) {
        let kind = if reasoning { ModelKind::Reasoning } else { ModelKind::NonReasoning };
        let c = CandidateSql::from_output(raw, kind);
        if c.extraction_ok {
            let sql = c.extracted_sql.unwrap();
            prop_assert!(sql.trim_start().to_ascii_uppercase().starts_with("SELECT"));
        }
    }

    #[test]
    fn exec_check_choice_is_executable_when_possible(scores in prop::collection::vec((0.0f64..=1.0, any::<bool>(), any::<bool>()), 0..7)) {
        let s: Vec<_> = scores.iter().map(|e| score(e.0, e.1)).collect();
        let executable: Vec<bool> = scores.iter().map(|e| e.2).collect();
        let ranked = rerank(&batch_of(scores.len()), &s, &executable, Some(&executable));
        match ranked.chosen() {
            Some(e) => prop_assert!(executable[e.original_index]),
            None => prop_assert!(executable.iter().all(|x| !x)),
        }
        prop_assert_eq!(rerank(&batch_of(scores.len()), &s, &executable, Some(&executable)), ranked);
    }

    #[test]
    fn metrics_are_percentages(batches in prop::collection::vec(entries(), 1..8)) {
        let lbs: Vec<_> = batches.iter().map(|b| labeled(b, |x| x)).collect();
        let pairs: Vec<_> = lbs.iter().flat_map(|b| b.pairs()).collect();
        let flat: Vec<_> = lbs.iter().flat_map(|b| b.entries.clone()).collect();
        for v in [pairwise_accuracy(&pairs), macro_f1(&flat, 0.5), hit_at_1(&lbs), mrr(&lbs)].into_iter().flatten() {
            prop_assert!((0.0..=100.0).contains(&v), "{}", v);
        }
    }

    #[test]
    fn ranking_metrics_invariant_under_monotone_transform(batches in prop::collection::vec(entries(), 1..8)) {
        let base: Vec<_> = batches.iter().map(|b| labeled(b, |x| x)).collect();
        for f in [|x: f64| x * x, |x: f64| x.sqrt(), |x: f64| 0.5 * x + 0.25] {
            let t: Vec<_> = batches.iter().map(|b| labeled(b, f)).collect();
            prop_assert_eq!(hit_at_1(&t), hit_at_1(&base));
            prop_assert_eq!(mrr(&t), mrr(&base));
            let p = |v: &[LabeledBatch]| pairwise_accuracy(&v.iter().flat_map(|b| b.pairs()).collect::<Vec<_>>());
            prop_assert_eq!(p(&t), p(&base));
        }
    }

    #[test]
    fn full_partial_f1_iff_exact_match(pred in sql(), gold in sql()) {
        let pm: sqlrank_core::metrics::PartialMatch<f64> = partial_match(&[Some(pred.as_str())], &[gold.as_str()]);
        prop_assert_eq!(pm.f1 == 100.0, exact_match(&pred, &gold), "{} / {}", pred, gold);
    }

    #[test]
    fn no_repetition_iff_maximal_entropy(s in prop::collection::vec("[ab]{1,2}", 1..8)) {
        let r: f64 = repetition_ratio(&s);
        let h: f64 = sentence_entropy(&s);
        prop_assert!(h >= 0.0);
        let max = (s.len() as f64).log2();
        prop_assert!(h <= max + 1e-12);
        prop_assert_eq!(r == 0.0, (h - max).abs() < 1e-12);
    }
}

#[test]
fn batch_keeps_backend_sample_order() {
    let example = &examples([1, 0, 0, 0])[0];
    let schema = DbSchema::new(
        "db",
        vec![TableSchema {
            name: "t".into(),
            columns: vec!["a".into()],
        }],
    )
    .unwrap();
    let records = (0..5)
        .map(|i| FixtureRecord::regex(".*", format!("SELECT {i};")))
        .collect();
    let backend = MockBackend::new(records).unwrap();
    let batch = generate_candidates(
        &backend,
        example,
        &schema,
        ModelKind::NonReasoning,
        &GenerationParams::default(),
    );
    let got: Vec<_> = batch
        .candidates
        .iter()
        .map(|c| c.extracted_sql.clone().unwrap())
        .collect();
    assert_eq!(
        got,
        (0..5).map(|i| format!("SELECT {i};")).collect::<Vec<_>>()
    );
}
