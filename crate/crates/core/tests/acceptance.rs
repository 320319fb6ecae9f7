//! Acceptance suite. Runs every criterion, prints one `PASS` or `FAIL` line
//! for each, and exits non-zero if any failed.

mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polycon_core::cli::{run, Cli, Command, ReportArgs};
use polycon_core::collect::{collect, GenerationClients};
use polycon_core::config::{RunConfig, TrainLanguages};
use polycon_core::consistency::aggregate;
use polycon_core::degeneration::detect_degeneration;
use polycon_core::empathy::{mechanism_agreement, profile_match, EmpathyEvaluator, EmpathyProfile};
use polycon_core::heuristic::{bleu, rouge_l, rouge_n, ExactMatch, RougeLEvaluator};
use polycon_core::info::{info_consistency_pair, InfoConsistencyEvaluator, InfoDetail, RuleBasedBackend, NO_CLAIMS};
use polycon_core::lang::LanguageCode;
use polycon_core::pipeline::{evaluate_store, translate_store};
use polycon_core::registry::http_transports;
use polycon_core::report::{group_means, GroupingKind, LanguageGrouping};
use polycon_core::store::RunStore;
use polycon_core::tokenize::TokenSequence;
use polycon_core::translate::{back_translation_self_check, translate_response, IdentityClient, TranslationClient};
use polycon_core::transport::{RetryPolicy, TransportError};
use polycon_core::types::{DecodeMode, ModelResponse};
use polycon_core::{Evaluator, NO_ANSWER};

use common::*;

static REPORTED: AtomicBool = AtomicBool::new(false);

fn report(name: &str, ok: bool, detail: String) {
    REPORTED.store(true, Ordering::SeqCst);
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn main() {
    let criteria: [(&str, fn()); 9] = [
        ("identity_pipeline_scores_exactly_one", identity_pipeline_scores_exactly_one),
        ("heuristic_metrics_match_brute_force", heuristic_metrics_match_brute_force),
        ("fact_precision_duality", fact_precision_duality),
        ("no_answer_candidate_scores_zero", no_answer_candidate_scores_zero),
        ("empathy_exact_match_equivalence", empathy_exact_match_equivalence),
        ("degeneration_retry_and_detection", degeneration_retry_and_detection),
        ("back_translation_dropout_matches_simulation", back_translation_dropout_matches_simulation),
        ("grouping_fidelity_and_golden_render", grouping_fidelity_and_golden_render),
        ("collect_resume_is_idempotent", collect_resume_is_idempotent),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, criterion) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        REPORTED.store(false, Ordering::SeqCst);
        let outcome = std::panic::catch_unwind(criterion);
        if outcome.is_err() {
            failed += 1;
            if !REPORTED.load(Ordering::SeqCst) {
                println!("FAIL {name}: panicked before reporting");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn run_config(languages: &[&str], models: &[&str]) -> RunConfig {
    let mut text = format!(
        "languages = [{}]\nprompt_set = \"unused.jsonl\"\n",
        languages.iter().map(|l| format!("\"{l}\"")).collect::<Vec<_>>().join(", ")
    );
    for m in models {
        text.push_str(&format!("\n[[models]]\nid = \"{m}\"\nendpoint = \"http://127.0.0.1:9\"\n"));
    }
    let mut config = RunConfig::from_toml_str(&text).unwrap();
    config.retry = RetryPolicy::immediate(3);
    config
}

fn all_thirty() -> Vec<&'static str> {
    polycon_core::lang::EVALUATION_LANGUAGES.iter().map(|(c, _)| *c).collect()
}

fn clients(models: &[&str], client: std::sync::Arc<ParagraphModel>) -> GenerationClients {
    models
        .iter()
        .map(|m| (m.to_string(), client.clone() as std::sync::Arc<dyn polycon_core::generation::GenerationClient>))
        .collect()
}

fn identity_pipeline_scores_exactly_one() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = run_config(&all_thirty(), &["m"]);
    let prompts = synthetic_prompts(20, &config.all_languages());
    let store = RunStore::open(dir.path(), &config.config_hash().unwrap()).unwrap();
    let model = std::sync::Arc::new(ParagraphModel::new());
    collect(&config, &prompts, &clients(&["m"], model), &store).unwrap();
    translate_store(&store, &IdentityClient, &config.degeneration, 1).unwrap();

    let evaluators: Vec<Box<dyn Evaluator>> = vec![
        Box::new(ExactMatch),
        Box::new(RougeLEvaluator),
        Box::new(InfoConsistencyEvaluator::default()),
        Box::new(EmpathyEvaluator::default()),
    ];
    let mut bad = Vec::new();
    let mut cells = 0;
    for e in &evaluators {
        let results = evaluate_store(&store, e.as_ref()).unwrap();
        assert_eq!(results.len(), 30);
        for r in results {
            cells += 1;
            if r.value != 1.0 || r.n_prompts != 20 {
                bad.push(format!("{}/{}={}", r.evaluator_id, r.language, r.value));
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = bad.is_empty() && elapsed.as_secs_f64() < 5.0;
    report(
        "identity pipeline",
        ok,
        format!("{cells} (evaluator, language) cells, {} not 1.0, {elapsed:.2?}", bad.len()),
    );
    assert!(bad.is_empty(), "{bad:?}");
    assert!(elapsed.as_secs_f64() < 5.0);
}

// Brute-force reference implementations over sequences of symbols 0..3.

const MAX_LEN: usize = 8;
const SYMBOLS: [&str; 3] = ["a", "b", "c"];

/// Index of the first sequence of each length; sequences are ordered by
/// length, then lexicographically.
fn offset(len: usize) -> usize {
    (3usize.pow(len as u32) - 1) / 2
}

fn index_of(seq: &[u8]) -> usize {
    offset(seq.len()) + seq.iter().fold(0, |acc, &s| acc * 3 + s as usize)
}

fn all_sequences() -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..MAX_LEN {
        let next: Vec<Vec<u8>> = layer
            .iter()
            .flat_map(|s: &Vec<u8>| {
                (0..3u8).map(move |x| {
                    let mut t = s.clone();
                    t.push(x);
                    t
                })
            })
            .collect();
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Per-sequence n-gram count tables for n = 1..=4, flattened.
const NGRAM_BASE: [usize; 5] = [0, 0, 3, 12, 39];

fn ngram_table(seq: &[u8]) -> [u8; 120] {
    let mut t = [0u8; 120];
    for n in 1..=4 {
        for w in 0..(seq.len() + 1).saturating_sub(n) {
            let code = seq[w..w + n].iter().fold(0, |acc, &s| acc * 3 + s as usize);
            t[NGRAM_BASE[n] + code] += 1;
        }
    }
    t
}

fn clipped(a: &[u8; 120], b: &[u8; 120], n: usize) -> usize {
    let lo = NGRAM_BASE[n];
    (lo..lo + 3usize.pow(n as u32)).map(|i| a[i].min(b[i]) as usize).sum()
}

const WORDS: usize = 9841usize.div_ceil(64);

/// Bit i is set when sequence i is a subsequence.
fn subsequence_bits(seq: &[u8]) -> [u64; WORDS] {
    let mut bits = [0u64; WORDS];
    for mask in 0u32..(1 << seq.len()) {
        let sub: Vec<u8> = (0..seq.len()).filter(|i| mask >> i & 1 == 1).map(|i| seq[i]).collect();
        let i = index_of(&sub);
        bits[i / 64] |= 1 << (i % 64);
    }
    bits
}

fn length_of_index(i: usize) -> usize {
    (0..=MAX_LEN).rev().find(|&k| offset(k) <= i).unwrap()
}

/// Longest common subsequence: the longest sequence both contain.
fn oracle_lcs(a: &[u64; WORDS], b: &[u64; WORDS], max: usize) -> usize {
    let top = (offset(max + 1) - 1) / 64;
    for w in (0..=top).rev() {
        let both = a[w] & b[w];
        if both != 0 {
            return length_of_index(w * 64 + 63 - both.leading_zeros() as usize);
        }
    }
    unreachable!("the empty sequence is common to all")
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Expected ROUGE (precision, recall, f, insufficient) from raw counts.
fn oracle_rouge(overlap: usize, cand_total: usize, ref_total: usize) -> (f64, f64, f64, bool) {
    if cand_total == 0 && ref_total == 0 {
        return (0.0, 0.0, 0.0, true);
    }
    let p = if cand_total == 0 { 0.0 } else { overlap as f64 / cand_total as f64 };
    let r = if ref_total == 0 { 0.0 } else { overlap as f64 / ref_total as f64 };
    (p, r, f1(p, r), false)
}

fn oracle_bleu(overlaps: &[usize; 5], rlen: usize, clen: usize) -> Option<f64> {
    if rlen == 0 {
        return None;
    }
    if clen == 0 {
        return Some(0.0);
    }
    let mut log_sum = 0.0;
    for (n, &m) in overlaps.iter().enumerate().skip(1) {
        let total = (clen + 1).saturating_sub(n);
        if n == 1 && m == 0 {
            return Some(0.0);
        }
        let p = if m > 0 { m as f64 / total as f64 } else { 1.0 / (total as f64 + 1.0) };
        log_sum += p.ln();
    }
    let bp = if clen < rlen { (1.0 - rlen as f64 / clen as f64).exp() } else { 1.0 };
    Some((bp * (log_sum / 4.0).exp()).min(1.0))
}

/// True when `c` introduces symbols not used in `r` in increasing order,
/// given that `r` itself does. Each relabelling class of pairs then has one
/// representative.
fn canonical_pair(r: &[u8], c: &[u8]) -> bool {
    let mut next = 0u8;
    for &s in r.iter().chain(c) {
        if s > next {
            return false;
        }
        if s == next {
            next += 1;
        }
    }
    true
}

fn heuristic_metrics_match_brute_force() {
    let start = Instant::now();
    let seqs = all_sequences();
    assert_eq!(seqs.len(), 9841);
    let tokens: Vec<TokenSequence> = seqs
        .iter()
        .map(|s| TokenSequence::from_tokens(s.iter().map(|&x| SYMBOLS[x as usize])))
        .collect();
    let tables: Vec<[u8; 120]> = seqs.iter().map(|s| ngram_table(s)).collect();
    let subs: Vec<[u64; WORDS]> = seqs.iter().map(|s| subsequence_bits(s)).collect();

    // candidates[k]: sequences that are canonical after a reference using k symbols
    let candidates: Vec<Vec<usize>> = (0..=3u8)
        .map(|k| {
            let prefix: Vec<u8> = (0..k).collect();
            (0..seqs.len()).filter(|&i| canonical_pair(&prefix, &seqs[i])).collect()
        })
        .collect();
    let mut pairs = 0u64;
    let mut mismatches = Vec::new();
    for (ri, r) in seqs.iter().enumerate() {
        if !canonical_pair(r, &[]) {
            continue;
        }
        let used = r.iter().max().map_or(0, |&m| m as usize + 1);
        for &ci in &candidates[used] {
            let c = &seqs[ci];
            pairs += 1;
            let (rt, ct) = (&tables[ri], &tables[ci]);
            let (rtok, ctok) = (&tokens[ri], &tokens[ci]);
            let mut overlaps = [0; 5];
            for (n, o) in overlaps.iter_mut().enumerate().skip(1) {
                *o = clipped(rt, ct, n);
            }

            let got = bleu(rtok, ctok, 4).ok().map(|b| b.value);
            if got != oracle_bleu(&overlaps, r.len(), c.len()) {
                mismatches.push(format!("bleu {r:?} {c:?}"));
            }
            for (n, &overlap) in overlaps.iter().enumerate().take(3).skip(1) {
                let g = rouge_n(rtok, ctok, n).unwrap();
                let total = |len: usize| (len + 1).saturating_sub(n);
                let want = oracle_rouge(overlap, total(c.len()), total(r.len()));
                if (g.precision, g.recall, g.f, g.insufficient_input) != want {
                    mismatches.push(format!("rouge{n} {r:?} {c:?}"));
                }
            }
            let g = rouge_l(rtok, ctok);
            let want = if r.is_empty() || c.is_empty() {
                (0.0, 0.0, 0.0, r.is_empty() && c.is_empty())
            } else {
                let l = oracle_lcs(&subs[ri], &subs[ci], r.len().min(c.len())) as f64;
                let (p, rc) = (l / c.len() as f64, l / r.len() as f64);
                (p, rc, f1(p, rc), false)
            };
            if (g.precision, g.recall, g.f, g.insufficient_input) != want {
                mismatches.push(format!("rougeL {r:?} {c:?}"));
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = mismatches.is_empty() && elapsed.as_secs_f64() < 60.0;
    report(
        "heuristic oracle equivalence",
        ok,
        format!(
            "{pairs} pair classes (all pairs of length <= {MAX_LEN} up to symbol relabelling), {} mismatches, {elapsed:.2?}",
            mismatches.len()
        ),
    );
    assert!(mismatches.is_empty(), "{:?}", &mismatches[..mismatches.len().min(10)]);
    assert!(elapsed.as_secs_f64() < 60.0);
}

const POOL: [&str; 24] = [
    "river", "valley", "coast", "farmers", "rice", "cotton", "spring", "water", "village", "hills", "forest",
    "glacier", "ocean", "storm", "harbor", "bridge", "market", "castle", "desert", "island", "meadow", "canyon",
    "lighthouse", "orchard",
];

fn random_sentence(rng: &mut ChaCha8Rng) -> String {
    let w: Vec<&str> = POOL.choose_multiple(rng, 4).copied().collect();
    format!("The {} {} near the {} {}.", w[0], w[1], w[2], w[3])
}

fn random_text(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let k = rng.random_range(min..=max);
    (0..k).map(|_| random_sentence(rng)).collect::<Vec<_>>().join(" ")
}

fn fact_precision_duality() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let backend = RuleBasedBackend::default();
    let mut violations = Vec::new();
    let mut partial = 0;
    for i in 0..500 {
        let a = random_text(&mut rng, 1, 6);
        let b = if rng.random_bool(0.5) {
            // share some sentences so support is mixed
            let mut s: Vec<String> = a.split_inclusive(". ").map(|x| x.trim().to_string()).collect();
            s.retain(|_| rng.random_bool(0.6));
            s.push(random_text(&mut rng, 1, 3));
            s.shuffle(&mut rng);
            s.join(" ")
        } else {
            random_text(&mut rng, 1, 6)
        };
        let ab = info_consistency_pair(&a, &b, &backend).unwrap();
        let ba = info_consistency_pair(&b, &a, &backend).unwrap();
        let (dab, dba) = (InfoDetail::from_score(&ab).unwrap(), InfoDetail::from_score(&ba).unwrap());
        if dab.precision_dir > 0.0 && dab.precision_dir < 1.0 {
            partial += 1;
        }
        if dab.precision_dir != dba.recall_dir || dab.recall_dir != dba.precision_dir || ab.value != ba.value {
            violations.push(i);
        }
    }
    report(
        "fact-precision duality",
        violations.is_empty(),
        format!("500 random pairs ({partial} with partial support), {} violations", violations.len()),
    );
    assert!(violations.is_empty(), "{violations:?}");
}

fn no_answer_candidate_scores_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let backend = RuleBasedBackend::default();
    let mut references: Vec<String> = natural_paragraphs();
    references.extend((0..50).map(|_| random_text(&mut rng, 1, 5)));
    references.push("Yes.".into());
    let mut total = 0;
    let mut failures = Vec::new();
    for reference in &references {
        for sentinel in [NO_ANSWER, " No answer ", "No answer\n"] {
            total += 1;
            let s = info_consistency_pair(reference, sentinel, &backend).unwrap();
            if s.value != 0.0 || !s.has_flag(NO_CLAIMS) {
                failures.push(reference.clone());
            }
        }
    }

    // the same rule through collection, translation and scoring
    let dir = tempfile::tempdir().unwrap();
    let config = run_config(&["fr", "ja", "hi"], &["m"]);
    let prompts = synthetic_prompts(6, &config.all_languages());
    let store = RunStore::open(dir.path(), &config.config_hash().unwrap()).unwrap();
    let mut model = ParagraphModel::new();
    model.blocked = vec!["[fr] q01".into(), "[ja] q01".into(), "[hi] q04".into(), "[fr] q05".into()];
    collect(&config, &prompts, &clients(&["m"], std::sync::Arc::new(model)), &store).unwrap();
    translate_store(&store, &IdentityClient, &config.degeneration, 1).unwrap();
    let results = evaluate_store(&store, &InfoConsistencyEvaluator::default()).unwrap();
    let mut pipeline_sentinels = 0;
    for r in &results {
        for (pid, s) in &r.per_prompt {
            if s.has_flag("status:recitation_sentinel") {
                total += 1;
                pipeline_sentinels += 1;
                if s.value != 0.0 || !s.has_flag(NO_CLAIMS) {
                    failures.push(format!("{}/{pid}", r.language));
                }
            }
        }
    }
    assert_eq!(pipeline_sentinels, 4);
    report(
        "zero-claim rule",
        failures.is_empty(),
        format!("{total} sentinel fixtures, {} not scored 0 with no_claims", failures.len()),
    );
    assert!(failures.is_empty(), "{failures:?}");
}

fn empathy_exact_match_equivalence() {
    let mut wrong_pairs = 0;
    for a in 0..8u8 {
        for b in 0..8u8 {
            let (pa, pb) = (EmpathyProfile::from_index(a), EmpathyProfile::from_index(b));
            let all_equal = pa.er == pb.er && pa.ip == pb.ip && pa.ex == pb.ex;
            let s = profile_match(pa, pb);
            if (s.value == 1.0) != all_equal || !(s.value == 0.0 || s.value == 1.0) {
                wrong_pairs += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lang = LanguageCode::parse("fr").unwrap();
    let mut bound_violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=40);
        let per_prompt = (0..n)
            .map(|i| {
                let s = profile_match(
                    EmpathyProfile::from_index(rng.random_range(0..8)),
                    EmpathyProfile::from_index(rng.random_range(0..8)),
                );
                (format!("p{i:02}"), s)
            })
            .collect();
        let result = aggregate("m", &lang, "empathy_exact", per_prompt).unwrap();
        let agreement = mechanism_agreement(&result).unwrap();
        if agreement.iter().any(|&a| result.value > a) {
            bound_violations += 1;
        }
    }
    let ok = wrong_pairs == 0 && bound_violations == 0;
    report(
        "empathy exact-match equivalence",
        ok,
        format!("64 profile pairs ({wrong_pairs} wrong), 1000 random sets ({bound_violations} bound violations)"),
    );
    assert!(ok);
}

/// Greedy decoding loops on sentences mentioning "loop"; sampling is clean.
struct LoopOnGreedy;

impl TranslationClient for LoopOnGreedy {
    fn id(&self) -> &str {
        "loop-on-greedy"
    }

    fn translate(&self, s: &str, _: &LanguageCode, _: &LanguageCode, d: DecodeMode) -> Result<String, TransportError> {
        if s.contains("loop") && !d.is_sampled() {
            Ok(format!("{} {}", s, "the same words again ".repeat(6)))
        } else {
            Ok(s.to_string())
        }
    }
}

fn degenerate_fixtures() -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let paragraphs = natural_paragraphs();
    let mut out = Vec::new();
    for i in 0..60 {
        let unit_len = rng.random_range(3..=6);
        let unit: Vec<&str> = POOL.choose_multiple(&mut rng, unit_len).copied().collect();
        let copies = rng.random_range(4..=9);
        let prefix = if i % 2 == 0 { paragraphs[i % paragraphs.len()].as_str() } else { "" };
        out.push(format!("{prefix} {}", vec![unit.join(" "); copies].join(" ")));
    }
    out.push("我们今天去公园".to_string() + &"我们今天".repeat(5));
    out.push("ฉันไปตลาด".repeat(5));
    out.push("Das ist sehr gut, das ist sehr gut, das ist sehr gut, das ist sehr gut.".into());
    out
}

fn degeneration_retry_and_detection() {
    let fr = LanguageCode::parse("fr").unwrap();
    let text = "Bonjour. Ceci est une loop. Rien de spécial ici. Encore une loop ! Fin.";
    let response = ModelResponse::ok("p", "m", fr, text).unwrap();
    let t = translate_response(&response, &LoopOnGreedy).unwrap();
    let expected: Vec<DecodeMode> = t
        .per_sentence
        .iter()
        .map(|s| if s.source.contains("loop") { DecodeMode::RETRY } else { DecodeMode::Greedy })
        .collect();
    let modes: Vec<DecodeMode> = t.per_sentence.iter().map(|s| s.decode_mode).collect();
    let retry_ok = modes == expected
        && modes.iter().filter(|m| m.is_sampled()).count() == 2
        && DecodeMode::RETRY == DecodeMode::Sampled { temperature: 0.7, top_p: 0.95 }
        && t.degeneration_flags.is_empty();

    let degenerate = degenerate_fixtures();
    let flagged = degenerate.iter().filter(|d| detect_degeneration(d).degenerate).count();
    let natural = natural_paragraphs();
    assert_eq!(natural.len(), 50);
    let false_positives = natural.iter().filter(|p| detect_degeneration(p).degenerate).count();

    let ok = retry_ok && flagged == degenerate.len() && false_positives == 0;
    report(
        "degeneration retry",
        ok,
        format!(
            "modes {modes:?}; flagged {flagged}/{} degenerate, {false_positives}/50 natural",
            degenerate.len()
        ),
    );
    assert!(ok);
}

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ne", "su", "tar", "ri", "po", "vel", "du", "gam", "fe"];

/// Multi-sentence responses whose sentences share no content words, so a
/// sentence's claim survives a round trip exactly when the sentence does.
fn dropout_responses(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let words: Vec<String> = SYLLABLES
        .iter()
        .flat_map(|a| SYLLABLES.iter().flat_map(move |b| SYLLABLES.iter().map(move |c| format!("{a}{b}{c}"))))
        .collect();
    (0..n)
        .map(|_| {
            let k = rng.random_range(3..=7);
            let picked: Vec<&String> = words.choose_multiple(rng, 4 * k).collect();
            picked
                .chunks(4)
                .map(|w| format!("The {} {} and the {} {}.", w[0], w[1], w[2], w[3]))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

fn back_translation_dropout_matches_simulation() {
    let start = Instant::now();
    let p_drop = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let responses = dropout_responses(&mut rng, 200);
    let client = SentenceDropper::new(p_drop, 99);
    let fr = LanguageCode::parse("fr").unwrap();
    let result = back_translation_self_check(&responses, &fr, &client, &InfoConsistencyEvaluator::default()).unwrap();
    let recall: Vec<f64> = result
        .per_prompt
        .values()
        .map(|s| InfoDetail::from_score(s).unwrap().recall_dir)
        .collect();
    let observed = recall.iter().sum::<f64>() / recall.len() as f64;

    // simulate the drop process directly on the same sentence counts
    let counts: Vec<usize> = responses.iter().map(|r| r.matches(". ").count() + 1).collect();
    let mut sim = ChaCha8Rng::seed_from_u64(7);
    let trials = 2000;
    let mut total = 0.0;
    for _ in 0..trials {
        let mut sum = 0.0;
        for &k in &counts {
            let kept = (0..k).filter(|_| !sim.random_bool(p_drop)).count();
            sum += kept as f64 / k as f64;
        }
        total += sum / counts.len() as f64;
    }
    let expected = total / trials as f64;
    let elapsed = start.elapsed();
    let ok = (observed - expected).abs() <= 0.05 && elapsed.as_secs_f64() < 30.0;
    report(
        "back-translation Monte Carlo",
        ok,
        format!("recall direction {observed:.4} vs simulation {expected:.4} over 200 responses, {elapsed:.2?}"),
    );
    assert!(ok);
}

fn lc(codes: &[&str]) -> Vec<LanguageCode> {
    let mut v: Vec<LanguageCode> = codes.iter().map(|c| lang(c)).collect();
    v.sort();
    v
}

fn report_cli(out: &std::path::Path) -> Cli {
    Cli {
        config: Some(fixture_root().join("config.toml")),
        store: fixture_root().join("store"),
        dry_run: false,
        resume: true,
        no_resume: false,
        command: Command::Report(ReportArgs {
            group_by: Vec::new(),
            evaluator: None,
            out: out.to_path_buf(),
        }),
    }
}

fn grouping_fidelity_and_golden_render() {
    let script: BTreeMap<&str, Vec<LanguageCode>> = [
        ("Latin", lc(&["cs", "de", "es", "fr", "id", "it", "nl", "pl", "pt", "ro", "tr", "vi"])),
        ("Indic", lc(&["bn", "gu", "hi", "kn", "ml", "pa", "ta", "te"])),
        ("PArb", lc(&["ar", "fa", "ur"])),
        ("Oth1", lc(&["el", "he", "ja", "ko", "ru", "th", "zh"])),
    ]
    .into_iter()
    .collect();
    let family: BTreeMap<&str, Vec<LanguageCode>> = [
        ("Rom", lc(&["de", "es", "fr", "it", "nl", "pt", "ro"])),
        ("Slav", lc(&["cs", "pl", "ru"])),
        ("IA", lc(&["bn", "fa", "gu", "hi", "pa", "ur"])),
        ("Drav", lc(&["kn", "ml", "ta", "te"])),
        ("Oth2", lc(&["ar", "el", "id", "he", "ja", "ko", "th", "tr", "vi", "zh"])),
    ]
    .into_iter()
    .collect();
    let as_map = |g: LanguageGrouping| -> BTreeMap<String, Vec<LanguageCode>> {
        g.groups
            .into_iter()
            .map(|(label, mut m)| {
                m.sort();
                (label, m)
            })
            .collect()
    };
    let to_owned = |m: &BTreeMap<&str, Vec<LanguageCode>>| -> BTreeMap<String, Vec<LanguageCode>> {
        m.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    };
    let membership_ok = as_map(LanguageGrouping::script()) == to_owned(&script)
        && as_map(LanguageGrouping::family()) == to_owned(&family)
        && script.values().map(Vec::len).collect::<Vec<_>>() == [8, 12, 7, 3]
        && family.values().map(Vec::len).collect::<Vec<_>>() == [4, 6, 10, 7, 3];

    // hand-built fixtures
    let drav: BTreeMap<LanguageCode, f64> =
        [("kn", 0.0), ("ml", 0.1), ("ta", 0.1), ("te", 0.04)].iter().map(|(c, v)| (lang(c), *v)).collect();
    let m = group_means(&drav, &LanguageGrouping::family()).unwrap();
    let mut means_ok = (m["Drav"].unwrap() - 0.06).abs() <= 1e-12 && m["Rom"].is_none();
    let constant: BTreeMap<LanguageCode, f64> = all_thirty().iter().map(|c| (lang(c), 0.5)).collect();
    for g in [LanguageGrouping::script(), LanguageGrouping::family()] {
        means_ok &= group_means(&constant, &g).unwrap().values().all(|v| (v.unwrap() - 0.5).abs() <= 1e-12);
    }
    let mixed: BTreeMap<LanguageCode, f64> =
        [("cs", 0.25), ("de", 0.5), ("ar", 0.9), ("fa", 0.3), ("ja", 1.0)].iter().map(|(c, v)| (lang(c), *v)).collect();
    let s = group_means(&mixed, &LanguageGrouping::script()).unwrap();
    means_ok &= (s["Latin"].unwrap() - 0.375).abs() <= 1e-12
        && (s["PArb"].unwrap() - 0.6).abs() <= 1e-12
        && (s["Oth1"].unwrap() - 1.0).abs() <= 1e-12
        && s["Indic"].is_none();
    let train = group_means(&mixed, &LanguageGrouping::train(&TrainLanguages::Unknown)).unwrap();
    means_ok &= train.values().all(Option::is_none);

    // golden render, twice
    let golden = fixture_root().join("golden");
    let mut renders = Vec::new();
    for _ in 0..2 {
        let out = tempfile::tempdir().unwrap();
        run(&report_cli(out.path()), &http_transports()).unwrap();
        renders.push(snapshot(out.path()));
    }
    let golden_files = snapshot(&golden);
    let golden_ok = renders[0] == renders[1] && renders[0] == golden_files && golden_files.len() == 5;

    let ok = membership_ok && means_ok && golden_ok;
    report(
        "grouping fidelity",
        ok,
        format!(
            "membership {membership_ok}, hand means {means_ok}, golden render of {} files stable {golden_ok}",
            golden_files.len()
        ),
    );
    assert!(membership_ok && means_ok);
    assert!(golden_ok, "report output differs from {}", golden.display());
    assert_eq!(GroupingKind::ALL.len(), 3);
}

fn collect_resume_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let models = ["model-a", "model-b"];
    let config = run_config(&["fr", "ja"], &models);
    let prompts = synthetic_prompts(5, &config.all_languages());
    let hash = config.config_hash().unwrap();

    let mut first_model = ParagraphModel::new();
    first_model.blocked = vec!["[ja] q02".into()];
    let first_model = std::sync::Arc::new(first_model);
    let first = {
        let store = RunStore::open(dir.path(), &hash).unwrap();
        collect(&config, &prompts, &clients(&models, first_model.clone()), &store).unwrap()
    };
    let before = snapshot(dir.path());

    let second_model = std::sync::Arc::new(ParagraphModel::new());
    let second = {
        let store = RunStore::open(dir.path(), &hash).unwrap();
        collect(&config, &prompts, &clients(&models, second_model.clone()), &store).unwrap()
    };
    let after = snapshot(dir.path());

    let ok = first.generated == 30
        && first_model.calls() == 30
        && second.generated == 0
        && second.skipped == 30
        && second_model.calls() == 0
        && before == after;
    report(
        "resume idempotence",
        ok,
        format!(
            "first run {} records, second run {} generation calls, store identical {}",
            first.generated,
            second_model.calls(),
            before == after
        ),
    );
    assert!(ok);
}
