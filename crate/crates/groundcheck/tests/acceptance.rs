//! Acceptance suite: one test per criterion, each printing a PASS line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//! Everything runs offline with mock transports and tiny models.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use groundcheck::eval::{aggregate_atomic_verdicts, macro_f1};
use groundcheck::filtering::{
    kmedoids, run_filter_pipeline, FilterConfig, FilterReport, FilterStage,
};
use groundcheck::gateway::bandit::LogitBandit;
use groundcheck::gateway::mock::{ByteNllLm, HashEmbedder, HashScorer, ScriptedLm, UniformLm};
use groundcheck::gateway::tiny::{TinyLm, TinyLmConfig};
use groundcheck::gateway::{embed, score_continuation, TrainableLm};
use groundcheck::grpo::{
    compute_advantages, grpo_loss_parts, rollout_group_with, train_grpo_with, GrpoConfig,
};
use groundcheck::rewards::{composite_reward, RewardBreakdown, RewardConfig};
use groundcheck::sft::{sft_loss, train_sft, SftConfig, SftExample, TargetMode};
use groundcheck::tags::{normalize_answer, parse_tagged_response, TaggedResponse};
use groundcheck::types::{LabeledSample, SynthRecord};

fn pass(criterion: usize, what: &str) {
    println!("[PASS] criterion {criterion}: {what}");
}

fn word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(3..9);
    (0..len)
        .map(|_| (b'a' + rng.gen_range(0..26u8)) as char)
        .collect()
}

fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

fn random_record(rng: &mut ChaCha8Rng, id: usize) -> SynthRecord {
    let gold = rng.gen_range(0..2u8);
    let predicted = match rng.gen_range(0..10) {
        0 => "maybe",
        n if n < 6 => {
            if gold == 1 {
                "Yes"
            } else {
                "No"
            }
        }
        _ => {
            if gold == 1 {
                "No"
            } else {
                "Yes"
            }
        }
    };
    let raw = format!(
        "<think>{}</think><reason>{}</reason><answer>{predicted}</answer>",
        sentence(rng, 6),
        sentence(rng, 8),
    );
    SynthRecord {
        sample: LabeledSample::new(
            format!("rec{id}"),
            sentence(rng, 12),
            sentence(rng, 5),
            gold,
            "fuzz",
        )
        .unwrap(),
        response: parse_tagged_response(&raw),
        raw_response: raw,
        generator_id: "fuzz".to_string(),
    }
}

/// Independent rendering path for the oracle: plain string replacement on
/// the template bodies, never touching the library's render or filter
/// helpers.
mod oracle {
    use super::*;
    use groundcheck::prompt;

    fn fill(body: &str, pairs: &[(&str, &str)]) -> String {
        let mut text = body.to_string();
        for (name, value) in pairs {
            text = text.replace(&format!("[{name}]"), value);
        }
        text
    }

    fn ppl(scorer: &dyn groundcheck::gateway::LanguageModel, context: &str, answer: &str) -> f64 {
        score_continuation(scorer, context, answer)
            .unwrap()
            .perplexity
    }

    fn response_prefix_with(record: &SynthRecord) -> String {
        format!(
            "<think>{}</think><reason>{}</reason><answer>",
            record.response.think, record.response.reason
        )
    }

    pub fn label_keeps(record: &SynthRecord) -> bool {
        record.response.answer_label == Some(record.sample.label)
    }

    pub fn explanation_keeps(
        record: &SynthRecord,
        scorer: &dyn groundcheck::gateway::LanguageModel,
    ) -> bool {
        let answer = if record.sample.label == 1 { "Yes" } else { "No" };
        let without_ctx = format!(
            "{}\n\n<think>{}</think><answer>",
            fill(
                prompt::COT_ANSWER.body,
                &[
                    ("DOCUMENT", record.sample.doc.as_str()),
                    ("CLAIM", record.sample.claim.as_str())
                ]
            ),
            record.response.think
        );
        let with_ctx = format!(
            "{}\n\n{}",
            fill(
                prompt::TRAINING.body,
                &[
                    ("DOCUMENT", record.sample.doc.as_str()),
                    ("CLAIM", record.sample.claim.as_str())
                ]
            ),
            response_prefix_with(record)
        );
        ppl(scorer, &with_ctx, answer) < ppl(scorer, &without_ctx, answer)
    }

    pub struct Probes {
        pub records: Vec<SynthRecord>,
        pub base: Vec<f64>,
    }

    /// Rebuilds the probe set from scratch: embeddings, k-medoids, and
    /// base perplexities all computed here.
    pub fn build_probes(
        survivors: &[SynthRecord],
        embedder: &dyn groundcheck::gateway::Embedder,
        k: usize,
        scorer: &dyn groundcheck::gateway::LanguageModel,
        seed: u64,
    ) -> Probes {
        let points: Vec<Vec<f64>> = survivors
            .iter()
            .map(|r| {
                embed(
                    embedder,
                    &format!("{}\n{}", r.sample.doc, r.sample.claim),
                )
                .unwrap()
            })
            .collect();
        let clustering = kmedoids::k_medoids(&points, k, seed).unwrap();
        let records: Vec<SynthRecord> = clustering
            .medoid_indices
            .iter()
            .map(|&i| survivors[i].clone())
            .collect();
        let base = records
            .iter()
            .map(|probe| {
                let ctx = format!(
                    "{}\n\n{}",
                    fill(
                        prompt::TRAINING.body,
                        &[
                            ("DOCUMENT", probe.sample.doc.as_str()),
                            ("CLAIM", probe.sample.claim.as_str())
                        ]
                    ),
                    response_prefix_with(probe)
                );
                let answer = if probe.sample.label == 1 { "Yes" } else { "No" };
                ppl(scorer, &ctx, answer)
            })
            .collect();
        Probes { records, base }
    }

    pub fn diversity_keeps(
        candidate: &SynthRecord,
        probes: &Probes,
        scorer: &dyn groundcheck::gateway::LanguageModel,
    ) -> bool {
        let demo = format!(
            "{}\n\n<think>{}</think><reason>{}</reason><answer>{}</answer>",
            fill(
                prompt::TRAINING.body,
                &[
                    ("DOCUMENT", candidate.sample.doc.as_str()),
                    ("CLAIM", candidate.sample.claim.as_str())
                ]
            ),
            candidate.response.think,
            candidate.response.reason,
            candidate.response.answer_text,
        );
        let mut improved = 0usize;
        for (probe, &base) in probes.records.iter().zip(&probes.base) {
            let ctx = format!(
                "{}\n\n{}",
                fill(
                    prompt::DIVERSITY_DEMO.body,
                    &[
                        ("DOCUMENT", probe.sample.doc.as_str()),
                        ("CLAIM", probe.sample.claim.as_str()),
                        ("Tested Sample", demo.as_str())
                    ]
                ),
                response_prefix_with(probe)
            );
            let answer = if probe.sample.label == 1 { "Yes" } else { "No" };
            if ppl(scorer, &ctx, answer) < base {
                improved += 1;
            }
        }
        2 * improved >= probes.records.len()
    }
}

#[test]
fn criterion_01_filter_pipeline_matches_brute_force_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF117E5);
    let mut reports = Vec::new();
    for case in 0..200u64 {
        let n = rng.gen_range(1..=24);
        let k = rng.gen_range(1..=4usize);
        let records: Vec<SynthRecord> = (0..n).map(|i| random_record(&mut rng, i)).collect();
        let scorer = HashScorer::new(case * 31 + 7);
        let embedder = HashEmbedder::new(16);
        let cfg = FilterConfig { k, seed: case };

        let (retained, report, decisions) =
            run_filter_pipeline(&records, &scorer, &embedder, &cfg).unwrap();

        // Oracle: independent staging over Eqs. (3), (6), (9).
        let label_pass: Vec<SynthRecord> = records
            .iter()
            .filter(|r| oracle::label_keeps(r))
            .cloned()
            .collect();
        let exp_pass: Vec<SynthRecord> = label_pass
            .iter()
            .filter(|r| oracle::explanation_keeps(r, &scorer))
            .cloned()
            .collect();
        let expected_retained: Vec<String> = if exp_pass.is_empty() {
            Vec::new()
        } else {
            let k_eff = k.min(exp_pass.len()).max(1);
            let probes = oracle::build_probes(&exp_pass, &embedder, k_eff, &scorer, cfg.seed);
            exp_pass
                .iter()
                .filter(|r| oracle::diversity_keeps(r, &probes, &scorer))
                .map(|r| r.sample.id.clone())
                .collect()
        };

        let got_retained: Vec<String> =
            retained.iter().map(|r| r.sample.id.clone()).collect();
        assert_eq!(got_retained, expected_retained, "case {case} retained set");

        // Monotone staging: a record has a decision for a stage exactly
        // when it survived every earlier stage.
        for record in &records {
            let stages: Vec<FilterStage> = decisions
                .iter()
                .filter(|d| d.record_id == record.sample.id)
                .map(|d| d.stage)
                .collect();
            let mut expected_stages = vec![FilterStage::Label];
            if oracle::label_keeps(record) {
                expected_stages.push(FilterStage::Explanation);
                if oracle::explanation_keeps(record, &scorer) && !exp_pass.is_empty() {
                    expected_stages.push(FilterStage::Diversity);
                }
            }
            assert_eq!(stages, expected_stages, "case {case} record {}", record.sample.id);
        }

        // Decision-level agreement: every stage verdict matches the oracle.
        for decision in &decisions {
            let record = records
                .iter()
                .find(|r| r.sample.id == decision.record_id)
                .unwrap();
            let expected = match decision.stage {
                FilterStage::Label => oracle::label_keeps(record),
                FilterStage::Explanation => oracle::explanation_keeps(record, &scorer),
                FilterStage::Diversity => {
                    let k_eff = k.min(exp_pass.len()).max(1);
                    let probes =
                        oracle::build_probes(&exp_pass, &embedder, k_eff, &scorer, cfg.seed);
                    oracle::diversity_keeps(record, &probes, &scorer)
                }
            };
            assert_eq!(
                decision.retained, expected,
                "case {case} record {} stage {:?}",
                decision.record_id, decision.stage
            );
        }

        assert_eq!(
            report.removed_by_label,
            records.len() - label_pass.len(),
            "case {case} label bucket"
        );
        assert_eq!(
            report.removed_by_explanation,
            label_pass.len() - exp_pass.len(),
            "case {case} explanation bucket"
        );
        reports.push(report);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}");
    // Stash for criterion 2's conservation check.
    assert!(reports.iter().all(|r| r.partition_holds()));
    pass(1, "filter pipeline equals brute-force oracle on 200 fuzz cases");
}

#[test]
fn criterion_02_filter_report_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0157);
    for case in 0..50u64 {
        let n = rng.gen_range(0..=24);
        let records: Vec<SynthRecord> = (0..n).map(|i| random_record(&mut rng, i)).collect();
        let scorer = HashScorer::new(case);
        let embedder = HashEmbedder::new(16);
        let cfg = FilterConfig {
            k: rng.gen_range(1..=4),
            seed: case,
        };
        let (_, report, _) = run_filter_pipeline(&records, &scorer, &embedder, &cfg).unwrap();
        assert!(report.partition_holds(), "case {case}");
        assert_eq!(report.input_count, n);
    }

    // Production-scale arithmetic fixture exercises the invariant checker.
    let large_run = FilterReport {
        input_count: 35_554,
        removed_by_label: 14_258,
        removed_by_explanation: 4_363,
        removed_by_diversity: 5_004,
        retained: 11_929,
    };
    assert!(large_run.partition_holds());
    let broken = FilterReport {
        retained: 11_930,
        ..large_run
    };
    assert!(!broken.partition_holds());
    pass(2, "report buckets partition the input; large-scale fixture checks out");
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(combo.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        combo[i] += 1;
        for j in (i + 1)..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

#[test]
fn criterion_03_kmedoids_local_optimality_and_exhaustive_match() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x3D01D5);
    for case in 0..50u64 {
        let n = rng.gen_range(2..=12usize);
        let k = rng.gen_range(1..=3.min(n));
        let dim = rng.gen_range(2..=5);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0f64)).collect())
            .collect();
        let result = kmedoids::k_medoids(&points, k, case).unwrap();
        assert!(
            kmedoids::is_swap_optimal(&points, &result.medoid_indices),
            "case {case}: a single swap improves the cost"
        );
        if n <= 8 {
            let normalized: Vec<Vec<f64>> =
                points.iter().map(|p| kmedoids::normalize(p)).collect();
            let dist: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| kmedoids::cosine_distance(&normalized[i], &normalized[j]))
                        .collect()
                })
                .collect();
            let best = combinations(n, k)
                .into_iter()
                .map(|combo| kmedoids::clustering_cost(&dist, &combo))
                .fold(f64::INFINITY, f64::min);
            assert!(
                (result.total_cost - best).abs() < 1e-9,
                "case {case}: cost {} vs exhaustive {best}",
                result.total_cost
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 5, "took {elapsed:?}");
    pass(3, "k-medoids is swap-optimal and matches exhaustive search at n <= 8");
}

#[test]
fn criterion_04_reward_truth_table() {
    let sample = LabeledSample::new("t", "doc body", "claim body", 1, "unit").unwrap();
    let cfg = RewardConfig::default();
    for pred_ok in [false, true] {
        for exp_helps in [false, true] {
            for format_ok in [false, true] {
                let answer = if pred_ok { "Yes" } else { "No" };
                let raw = if format_ok {
                    format!("<think>t</think><reason>why</reason><answer>{answer}</answer>")
                } else {
                    format!("<reason>why</reason><answer>{answer}</answer>")
                };
                let novice =
                    ScriptedLm::constant(format!("<answer>{}</answer>", if exp_helps { "Yes" } else { "No" }));
                let got = composite_reward(&raw, &sample, &novice, &cfg).unwrap();
                let expected = RewardBreakdown::new(pred_ok as u8, exp_helps as u8, format_ok as u8);
                assert_eq!(got, expected, "case pred={pred_ok} exp={exp_helps} fmt={format_ok}");
                assert_eq!(got.r_final, got.r_pred + got.r_exp + got.r_format);
            }
        }
    }
    pass(4, "all 8 reward combinations yield exact component breakdowns");
}

#[test]
fn criterion_05_perplexity_contracts() {
    // Uniform mock: PPL equals the vocabulary size (f64 precision).
    for vocab in [2usize, 10, 50, 256] {
        let lm = UniformLm::new(vocab);
        let score = score_continuation(&lm, "prompt", "abc").unwrap();
        assert!(
            (score.perplexity - vocab as f64).abs() <= 1e-9 * vocab as f64,
            "vocab {vocab}: got {}",
            score.perplexity
        );
    }

    // Teacher-forced factorization on the tiny model.
    let lm = TinyLm::new(TinyLmConfig::default(), 21);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..20 {
        let prompt = sentence(&mut rng, 4);
        let a = sentence(&mut rng, 2);
        let b = sentence(&mut rng, 2);
        let whole = score_continuation(&lm, &prompt, &format!("{a}{b}")).unwrap();
        let left = score_continuation(&lm, &prompt, &a).unwrap();
        let right = score_continuation(&lm, &format!("{prompt}{a}"), &b).unwrap();
        assert!(
            (whole.total_nll - (left.total_nll + right.total_nll)).abs() < 1e-6,
            "factorization violated"
        );
    }

    // Training-time loss equals gateway NLL on random mock batches.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for batch_case in 0..50 {
        let table: Vec<f64> = (0..256).map(|_| rng.gen_range(0.1..3.0)).collect();
        let model = {
            let table = table.clone();
            ByteNllLm::new(move |b| table[b as usize])
        };
        let batch: Vec<SftExample> = (0..rng.gen_range(1..6))
            .map(|_| SftExample {
                input_text: sentence(&mut rng, 5),
                target_text: sentence(&mut rng, 4),
            })
            .collect();
        let loss = sft_loss(&model, &batch).unwrap();
        let mut nll = 0.0;
        let mut tokens = 0usize;
        for example in &batch {
            let score = score_continuation(
                &model,
                &example.scoring_prompt(),
                &example.target_text,
            )
            .unwrap();
            nll += score.total_nll;
            tokens += score.token_count;
        }
        assert!(
            (loss - nll / tokens as f64).abs() < 1e-6,
            "batch {batch_case}: {loss} vs {}",
            nll / tokens as f64
        );
    }
    pass(5, "uniform PPL = V, factorization holds, sft loss equals gateway NLL");
}

#[test]
fn criterion_06_grpo_mechanics() {
    // Advantages: zero mean per group, exactly zero for zero variance.
    let mut rng = ChaCha8Rng::seed_from_u64(0x6A);
    for _ in 0..100 {
        let n = rng.gen_range(2..9);
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
        let advantages = compute_advantages(&rewards);
        let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
        assert!(mean.abs() <= 1e-6);
    }
    assert_eq!(compute_advantages(&[2.0; 5]), vec![0.0; 5]);

    // Fresh rollouts: w = 1, clip inactive, loss = beta * KL.
    let reward_fn = |raw: &str, s: &LabeledSample| {
        Ok(RewardBreakdown::new(
            (normalize_answer(raw) == Some(s.label)) as u8,
            0,
            0,
        ))
    };
    let sample = LabeledSample::new("s", "doc", "claim", 1, "unit").unwrap();
    let mut policy = LogitBandit::new();
    policy.params_mut()[0] = 0.7;
    let reference = LogitBandit::new();
    let cfg = GrpoConfig {
        group_size: 6,
        minibatch_size: 1,
        epochs: 1,
        max_new_tokens: 4,
        ..Default::default()
    };
    let group = rollout_group_with(&policy, &sample, &cfg, &reward_fn, 3).unwrap();
    let parts =
        grpo_loss_parts(&policy, &reference, std::slice::from_ref(&group), &cfg).unwrap();
    assert_eq!(parts.clip_fraction, 0.0);
    assert!((parts.loss - cfg.kl_coefficient * parts.kl).abs() < 1e-12);

    // KL estimator: nonnegative always, zero at policy == reference.
    assert!(parts.kl >= 0.0);
    let self_parts =
        grpo_loss_parts(&policy, &policy, std::slice::from_ref(&group), &cfg).unwrap();
    assert_eq!(self_parts.kl, 0.0);
    for seed in 0..20 {
        let mut other = LogitBandit::new();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        other.params_mut()[0] = r.gen_range(-2.0..2.0);
        other.params_mut()[1] = r.gen_range(-2.0..2.0);
        let g = rollout_group_with(&other, &sample, &cfg, &reward_fn, seed).unwrap();
        let p = grpo_loss_parts(&other, &reference, &[g], &cfg).unwrap();
        assert!(p.kl >= 0.0, "seed {seed}: negative KL {}", p.kl);
    }
    pass(6, "advantages zero-mean, w=1 gives loss = beta*KL, KL estimator nonnegative");
}

#[test]
fn criterion_07_grpo_smoke_learning_on_the_bandit() {
    let started = Instant::now();
    let dataset: Vec<LabeledSample> = (0..50)
        .map(|i| LabeledSample::new(format!("s{i}"), "doc text", "claim text", 1, "bandit").unwrap())
        .collect();
    let mut policy = LogitBandit::new();
    let reference = LogitBandit::new();
    let cfg = GrpoConfig {
        group_size: 7,
        learning_rate: 0.1,
        minibatch_size: 1,
        epochs: 1,
        seed: 2024,
        max_new_tokens: 4,
        ..Default::default()
    };
    let reward_fn = |raw: &str, s: &LabeledSample| {
        Ok(RewardBreakdown::new(
            (normalize_answer(raw) == Some(s.label)) as u8,
            0,
            0,
        ))
    };
    let initial = policy.action_prob("Yes", cfg.rollout_temperature).unwrap();
    let metrics = train_grpo_with(&mut policy, &reference, &dataset, &cfg, &reward_fn).unwrap();
    let trained = policy.action_prob("Yes", cfg.rollout_temperature).unwrap();
    assert_eq!(metrics.steps.len(), 50);
    assert!(initial <= 0.6, "initial expected reward {initial}");
    assert!(trained >= 0.9, "trained expected reward {trained}");
    assert!(metrics.steps.last().unwrap().mean_reward >= 0.9);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    pass(7, "bandit mean reward rises from <= 0.6 to >= 0.9 in 50 steps");
}

fn smoke_record(i: usize) -> SynthRecord {
    let gold = (i % 2) as u8;
    let answer = if gold == 1 { "Yes" } else { "No" };
    let raw = format!(
        "<think>Checked claim {i} against the document.</think>\
         <reason>The document states the fact claimed in item {i}.</reason>\
         <answer>{answer}</answer>"
    );
    SynthRecord {
        sample: LabeledSample::new(
            format!("r{i}"),
            format!("Item {i}: the recorded value matches the ledger."),
            format!("Item {i} matches the ledger."),
            gold,
            "smoke",
        )
        .unwrap(),
        response: parse_tagged_response(&raw),
        raw_response: raw,
        generator_id: "smoke".to_string(),
    }
}

#[test]
fn criterion_08_sft_smoke_learning() {
    let started = Instant::now();
    let dataset: Vec<SynthRecord> = (0..64).map(smoke_record).collect();
    let cfg = SftConfig {
        learning_rate: 0.01,
        weight_decay: 0.0,
        batch_size: 16,
        epochs: 3,
        target_mode: TargetMode::CotExpAnswer,
        seed: 7,
        max_sequence_length: 8192,
    };
    let mut model = TinyLm::new(TinyLmConfig::default(), 1);
    assert!(model.param_count() <= 1_000_000);
    let metrics = train_sft(&mut model, &dataset, &cfg).unwrap();
    assert!(
        metrics.final_loss <= 0.7 * metrics.initial_loss,
        "NLL went {} -> {}",
        metrics.initial_loss,
        metrics.final_loss
    );

    // Bit-identical trajectory on a second same-seed run.
    let mut again = TinyLm::new(TinyLmConfig::default(), 1);
    let repeat = train_sft(&mut again, &dataset, &cfg).unwrap();
    let a: Vec<u64> = metrics.steps.iter().map(|s| s.loss.to_bits()).collect();
    let b: Vec<u64> = repeat.steps.iter().map(|s| s.loss.to_bits()).collect();
    assert_eq!(a, b);
    assert_eq!(model.params(), again.params());

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}");
    pass(8, "tiny-model SFT cuts target NLL by >= 30% with identical same-seed runs");
}

#[test]
fn criterion_09_macro_f1_oracle() {
    // Hand-computed fixture.
    let score = macro_f1(&[Some(1), Some(0), Some(0), Some(0)], &[1, 1, 0, 0]).unwrap();
    assert!((score - 73.333333333).abs() < 1e-6);

    // 100 random prediction/gold sets against an independent
    // confusion-matrix computation.
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1);
    for case in 0..100 {
        let n = rng.gen_range(1..60);
        let golds: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let preds: Vec<Option<u8>> = (0..n)
            .map(|_| match rng.gen_range(0..5) {
                0 => None,
                _ => Some(rng.gen_range(0..2)),
            })
            .collect();
        let ours = macro_f1(&preds, &golds).unwrap();

        let effective: Vec<u8> = preds
            .iter()
            .zip(&golds)
            .map(|(p, &g)| p.unwrap_or(1 - g))
            .collect();
        let mut oracle = 0.0;
        for class in [0u8, 1u8] {
            let tp = effective
                .iter()
                .zip(&golds)
                .filter(|(&p, &g)| p == class && g == class)
                .count() as f64;
            let pred_count = effective.iter().filter(|&&p| p == class).count() as f64;
            let act_count = golds.iter().filter(|&&g| g == class).count() as f64;
            let precision = if pred_count > 0.0 { tp / pred_count } else { 0.0 };
            let recall = if act_count > 0.0 { tp / act_count } else { 0.0 };
            if precision + recall > 0.0 {
                oracle += 2.0 * precision * recall / (precision + recall);
            }
        }
        oracle = oracle / 2.0 * 100.0;
        assert!((ours - oracle).abs() < 1e-9, "case {case}: {ours} vs {oracle}");
    }
    pass(9, "macro-F1 matches the confusion-matrix oracle to 1e-9");
}

#[test]
fn criterion_10_parsing_and_format_totality() {
    // 500 fuzzed well-formed responses round-trip exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(0x7A9);
    for case in 0..500 {
        let answer = match rng.gen_range(0..4) {
            0 => "Yes".to_string(),
            1 => "No".to_string(),
            2 => "maybe".to_string(),
            _ => sentence(&mut rng, 1),
        };
        let think_len = rng.gen_range(0..8);
        let reason_len = rng.gen_range(0..8);
        let original = TaggedResponse {
            think: sentence(&mut rng, think_len),
            reason: sentence(&mut rng, reason_len),
            answer_label: normalize_answer(&answer),
            answer_text: answer,
            well_formed: true,
        };
        let reparsed = parse_tagged_response(&original.serialize_tagged());
        assert_eq!(reparsed, original, "case {case}");
    }

    // Every malformation class scores r_format = 0 and parses totally.
    let malformed = [
        "<think>t</think><reason>r</reason><answer>Yes", // missing close
        "<reason>r</reason><think>t</think><answer>Yes</answer>", // reorder
        "<think>a</think><think>b</think><reason>r</reason><answer>Yes</answer>", // duplicate
        "<think>t</think><answer>Yes</answer>",          // missing span
        "",                                              // empty
        "plain text with no tags at all",
    ];
    for raw in malformed {
        let parsed = parse_tagged_response(raw);
        assert!(!parsed.well_formed, "{raw:?}");
        assert_eq!(groundcheck::rewards::reward_format(raw), 0, "{raw:?}");
    }
    // A bad answer word keeps the format reward (tags are fine) but
    // yields no label.
    let odd = "<think>t</think><reason>r</reason><answer>perhaps</answer>";
    assert_eq!(groundcheck::rewards::reward_format(odd), 1);
    assert_eq!(parse_tagged_response(odd).answer_label, None);
    pass(10, "500 round trips exact; malformation classes parse totally with r_format = 0");
}

#[test]
fn criterion_11_end_to_end_micro_pipeline() {
    use groundcheck::pipeline::{run_stage, PipelineConfig, Stage};
    use groundcheck::types::write_corpus;

    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let fixture = |prefix: &str, n: usize| -> Vec<LabeledSample> {
        let facts = [
            ("the museum opened in 1902", "the museum opened in 1955"),
            ("the river flows north", "the river flows south"),
            ("the bridge spans four hundred meters", "the bridge spans two meters"),
            ("the observatory sits on the ridge", "the observatory floats offshore"),
        ];
        (0..n)
            .map(|i| {
                let (true_fact, false_fact) = facts[i % facts.len()];
                let label = (i % 2) as u8;
                let doc = format!("Record {prefix}{i}: {true_fact}. The curator confirmed it.");
                let claim = format!(
                    "Record {prefix}{i}: {}",
                    if label == 1 { true_fact } else { false_fact }
                );
                LabeledSample::new(format!("{prefix}{i}"), doc, claim, label, "fixture").unwrap()
            })
            .collect()
    };
    write_corpus(root.join("corpus.jsonl"), &fixture("c", 50)).unwrap();
    write_corpus(root.join("rl_corpus.jsonl"), &fixture("r", 8)).unwrap();
    std::fs::create_dir_all(root.join("tasks")).unwrap();
    write_corpus(root.join("tasks/task_a.jsonl"), &fixture("a", 10)).unwrap();
    write_corpus(root.join("tasks/task_b.jsonl"), &fixture("b", 8)).unwrap();

    let mut config = PipelineConfig::default();
    config.paths.run_dir = root.join("run");
    config.paths.corpus_in = root.join("corpus.jsonl");
    config.paths.synth_out = root.join("run/synth.jsonl");
    config.paths.filtered_out = root.join("run/filtered.jsonl");
    config.paths.rl_corpus = root.join("rl_corpus.jsonl");
    config.paths.sft_checkpoint = root.join("run/checkpoints/sft");
    config.paths.rl_checkpoint = root.join("run/checkpoints/rl");
    config.paths.reports_dir = root.join("run/reports");
    config.evaluation.tasks_dir = root.join("tasks");
    config.evaluation.model =
        format!("checkpoint:{}", root.join("run/checkpoints/rl").display());
    config.filtering.k = 2;
    config.sft.learning_rate = 0.01;
    config.sft.epochs = 1;
    config.grpo.group_size = 4;
    config.grpo.epochs = 1;
    config.grpo.minibatch_size = 2;
    config.grpo.max_new_tokens = 32;
    config.grpo.learning_rate = 0.005;
    let config_path = root.join("pipeline.toml");
    std::fs::write(&config_path, toml::to_string_pretty(&config).unwrap()).unwrap();

    // Synthesis: every sample succeeds against the offline oracle and
    // round-trips.
    let outcome = run_stage(Stage::Synthesize, &config_path, &[]).unwrap();
    assert_eq!(outcome.summary["succeeded"], 50);
    let records = groundcheck::types::read_synth_records(root.join("run/synth.jsonl")).unwrap();
    assert_eq!(records.len(), 50);
    assert!(records.iter().all(|r| r.round_trip_stable()));

    // Filter: counts partition, decisions cover every record.
    let outcome = run_stage(Stage::Filter, &config_path, &[]).unwrap();
    let report: FilterReport =
        serde_json::from_value(outcome.summary.clone()).unwrap();
    assert!(report.partition_holds());
    assert!(report.retained > 0, "no records survived filtering");

    // SFT: checkpoint and metrics exist; loss decreased.
    let outcome = run_stage(Stage::Sft, &config_path, &[]).unwrap();
    assert!(outcome.summary["final_loss"].as_f64().unwrap()
        < outcome.summary["initial_loss"].as_f64().unwrap());
    assert!(root.join("run/checkpoints/sft/params.bin").exists());

    // RL: 10 gradient steps (8 prompts / minibatch 2 = 4 steps per
    // epoch; bump epochs via override to reach 10+).
    let outcome = run_stage(
        Stage::Rl,
        &config_path,
        &["grpo.epochs=3".to_string()],
    )
    .unwrap();
    assert!(outcome.summary["steps"].as_u64().unwrap() >= 10);
    assert!(root.join("run/checkpoints/rl/params.bin").exists());
    assert!(root.join("run/reports/reward_traces.jsonl").exists());

    // Eval on the two fixture tasks.
    let outcome = run_stage(Stage::Eval, &config_path, &[]).unwrap();
    assert_eq!(outcome.summary["runs"], 2);
    assert!(outcome.summary["per_task"]["task_a"].is_number());
    assert!(outcome.summary["per_task"]["task_b"].is_number());

    // Every stage wrote its manifest.
    for stage in ["synthesize", "filter", "sft", "rl", "eval"] {
        let manifest = root.join(format!("run/manifest-{stage}.json"));
        assert!(manifest.exists(), "missing {}", manifest.display());
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
        assert!(value["wall_time_secs"].is_number());
        assert!(value["config"].is_object());
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
    pass(11, "micro pipeline runs end to end with all manifests and invariants");
}

#[test]
fn criterion_12_aggregation_rule_and_figure_examples() {
    // AND-fold, exhaustive to length 6.
    for len in 1..=6usize {
        for bits in 0..(1u32 << len) {
            let verdicts: Vec<u8> = (0..len).map(|i| ((bits >> i) & 1) as u8).collect();
            let expected = verdicts.iter().all(|&v| v == 1) as u8;
            assert_eq!(aggregate_atomic_verdicts(&verdicts).unwrap(), expected);
        }
    }

    // Decontextualization figure examples.
    use groundcheck::eval::{decompose_claim, decontextualize_claim};
    use groundcheck::gateway::remote::{ChatClient, MockTransport, RemoteClientConfig};
    let client = |replies: Vec<&str>| {
        ChatClient::with_transport(
            RemoteClientConfig {
                api_key_env: String::new(),
                backoff_base: 0.0,
                ..Default::default()
            },
            Box::new(MockTransport::new(
                replies.into_iter().map(|r| Ok(r.to_string())).collect(),
            )),
        )
    };

    let c = client(vec![r#"{"label": "yes", "decontext": "NA"}"#]);
    let (standalone, rewritten) = decontextualize_claim(
        "The idea of human rights spread quickly from Babylon to Greece and eventually Rome, where the concept of \"natural law\" arose.",
        "The ancient Greeks had some concept of human rights.",
        &c,
    )
    .unwrap();
    assert!(standalone);
    assert!(rewritten.is_none());

    let c = client(vec![
        r#"{"label": "no", "decontext": "Poetry can provide an easy way for children to remember a lesson or value."}"#,
    ]);
    let (standalone, rewritten) = decontextualize_claim(
        "It can also provide an easy way for children to remember a lesson or value.",
        "There are many reasons why poetry is important for children.",
        &c,
    )
    .unwrap();
    assert!(!standalone);
    assert_eq!(
        rewritten.as_deref(),
        Some("Poetry can provide an easy way for children to remember a lesson or value.")
    );

    // Decomposition figure example: the title-changes sentence splits
    // into its two facts.
    let c = client(vec![
        "- Lord Steven Regal won the World Television Championship.\n\n- The Nasty Boys won the World Tag Team Championship.",
    ]);
    let facts = decompose_claim(
        "Other title changes included Lord Steven Regal and The Nasty Boys winning the World Television Championship and the World Tag Team Championship respectively.",
        &c,
    )
    .unwrap();
    assert_eq!(
        facts,
        vec![
            "Lord Steven Regal won the World Television Championship.".to_string(),
            "The Nasty Boys won the World Tag Team Championship.".to_string(),
        ]
    );
    pass(12, "verdict aggregation is the AND-fold; figure examples parse to their outputs");
}

#[test]
fn acceptance_summary_table_renders() {
    // Smoke check that the human-readable results table stays stable.
    let per_task: BTreeMap<String, f64> =
        [("alpha".to_string(), 90.0), ("beta".to_string(), 80.0)]
            .into_iter()
            .collect();
    let result = groundcheck::eval::EvalResult::from_per_task(per_task, 2);
    let table = groundcheck::eval::render_results_table(&result);
    assert!(table.starts_with("alpha"));
    assert!(table.contains("85.0"));
}
