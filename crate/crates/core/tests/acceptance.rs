//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

mod common;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::corpus;
use common::oracle::{self, NaivePredictor};
use ntpzip_core::codec::{self, parse_body, BodyRecord, CodecConfig, CodecMode, Container};
use ntpzip_core::membership::{self, ProbeConfigs};
use ntpzip_core::metrics::{self, batch_start_lines};
use ntpzip_core::predictor::{MarkovModel, PredictorConfig, QuantBits};
use ntpzip_core::tokenizer::{train_word_vocab, Vocabulary};

type Outcome = Result<String, String>;

const QUANTS: [QuantBits; 3] = [QuantBits::Four, QuantBits::Eight, QuantBits::Sixteen];

struct Setup {
    vocab: Vocabulary,
    model: MarkovModel,
    corpus: Vec<u8>,
}

/// Models of varied order over byte and word vocabularies.
fn model_pool(rng: &mut ChaCha8Rng) -> Vec<Setup> {
    (0..12)
        .map(|i| {
            let words = rng.gen_range(20..400);
            let lex = corpus::lexicon(rng, words);
            let size = rng.gen_range(2_000..30_000);
            let text = if i % 4 == 3 {
                corpus::random_bytes(rng, size)
            } else {
                corpus::prose(rng, &lex, size)
            };
            let vocab = if i % 2 == 0 {
                Vocabulary::bytes()
            } else {
                train_word_vocab(&text[..text.len().min(8_000)], rng.gen_range(257..700)).unwrap()
            };
            let order = rng.gen_range(1..=4);
            let model = MarkovModel::train(&vocab.encode(&text), order, vocab.len()).unwrap();
            Setup {
                vocab,
                model,
                corpus: text,
            }
        })
        .collect()
}

/// Up to 64 KiB, log-uniform in length, mixing corpus excerpts, mutated
/// excerpts, raw bytes (mostly invalid UTF-8) and short repeats.
fn random_text(rng: &mut ChaCha8Rng, setup: &Setup) -> Vec<u8> {
    let len = ((rng.gen::<f64>() * (65_537f64).ln()).exp() as usize).saturating_sub(1);
    let len = len.min(64 * 1024);
    match rng.gen_range(0..4) {
        0 => corpus::random_bytes(rng, len),
        1 | 2 => {
            let c = &setup.corpus;
            let start = rng.gen_range(0..c.len());
            let mut t: Vec<u8> = c.iter().cycle().skip(start).take(len).copied().collect();
            if rng.gen_bool(0.5) {
                for _ in 0..(len / 50) {
                    let i = rng.gen_range(0..t.len());
                    t[i] = rng.gen();
                }
            }
            t
        }
        _ => {
            let unit_len = rng.gen_range(1..8);
            let unit = corpus::random_bytes(rng, unit_len);
            unit.iter().cycle().take(len).copied().collect()
        }
    }
}

fn accounting_holds(container: &[u8], n_tokens: usize) -> bool {
    let parsed = Container::from_bytes(container).unwrap();
    let records = parse_body(&parsed.body).unwrap();
    let prefix = parsed.header.literal_prefix_len as usize;
    let lead = n_tokens.min(prefix);
    let counted: u64 = records[lead..]
        .iter()
        .map(|r| match r {
            BodyRecord::Counter(n) => *n,
            BodyRecord::Literal(_) => 1,
        })
        .sum();
    counted == (n_tokens - lead) as u64
}

fn round_trip_suite() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let pool = model_pool(&mut rng);
    let started = Instant::now();
    let trials = 10_000;
    let mut failures = Vec::new();
    let mut accounting_checked = 0;
    let mut accounting_failures = 0;
    let mut total_bytes = 0usize;
    for trial in 0..trials {
        let setup = pool.choose(&mut rng).unwrap();
        let text = random_text(&mut rng, setup);
        total_bytes += text.len();
        let window = if rng.gen_bool(0.3) { rng.gen_range(1..=12) } else { rng.gen_range(1..=2048) };
        let quant = *QUANTS.choose(&mut rng).unwrap();
        let mode = if rng.gen_bool(0.5) { CodecMode::Counter } else { CodecMode::Rank };
        let config = CodecConfig::new(PredictorConfig::new(window, quant).unwrap()).with_mode(mode);
        let packed = codec::compress(&text, &setup.vocab, &setup.model, &config).unwrap();
        match codec::decompress(&packed, &setup.vocab, &setup.model) {
            Ok(back) if back == text => {}
            other => failures.push(format!("trial {trial}: {:?}", other.map(|b| b.len()))),
        }
        if mode == CodecMode::Counter {
            accounting_checked += 1;
            if !accounting_holds(&packed, setup.vocab.encode(&text).len()) {
                accounting_failures += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let round_trip = if failures.is_empty() {
        Ok(format!("{trials}/{trials} exact ({total_bytes} bytes, {secs:.1}s)"))
    } else {
        Err(format!("{} failures, first: {}", failures.len(), failures[0]))
    };
    let accounting = if accounting_failures == 0 {
        Ok(format!("{accounting_checked} counter-mode containers"))
    } else {
        Err(format!("{accounting_failures}/{accounting_checked} violate accounting"))
    };
    (round_trip, accounting)
}

fn oracle_suite() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let instances = 1_200;
    let mut mismatches = Vec::new();
    let mut accounting_failures = 0;
    for i in 0..instances {
        let words = rng.gen_range(3..30);
        let lex = corpus::lexicon(&mut rng, words);
        let train_len = rng.gen_range(20..600);
        let train_text = corpus::prose(&mut rng, &lex, train_len);
        let vocab = if rng.gen_bool(0.5) {
            Vocabulary::bytes()
        } else {
            train_word_vocab(&train_text, rng.gen_range(257..300)).unwrap()
        };
        let train = vocab.encode(&train_text);
        if train.len() < 2 {
            continue;
        }
        let order = rng.gen_range(1..=4);
        let model = MarkovModel::train(&train, order, vocab.len()).unwrap();
        let naive = NaivePredictor {
            training: train,
            order,
            vocab_size: vocab.len(),
        };
        let text = if rng.gen_bool(0.7) {
            let start = rng.gen_range(0..train_text.len());
            let len = rng.gen_range(0..300);
            train_text.iter().cycle().skip(start).take(len).copied().collect()
        } else {
            let len = rng.gen_range(0..120);
            corpus::random_bytes(&mut rng, len)
        };
        let tokens = vocab.encode(&text);
        let window = rng.gen_range(1..=40);
        let quant = *QUANTS.choose(&mut rng).unwrap();
        let prefix = if rng.gen_bool(0.8) { 10 } else { rng.gen_range(0..16) };
        let mode = if rng.gen_bool(0.5) { CodecMode::Counter } else { CodecMode::Rank };
        let config = CodecConfig::new(PredictorConfig::new(window, quant).unwrap())
            .with_mode(mode)
            .with_literal_prefix(prefix);
        let packed = codec::compress(&text, &vocab, &model, &config).unwrap();
        let body = Container::from_bytes(&packed).unwrap().body;
        let (w, b, p) = (window as usize, quant.bits(), prefix as usize);
        let expected = match mode {
            CodecMode::Counter => oracle::compress_body(&tokens, &naive, w, b, p),
            CodecMode::Rank => oracle::compress_rank_body(&tokens, &naive, w, b, p),
        };
        if body != expected.as_bytes() {
            mismatches.push(i);
        }
        if mode == CodecMode::Counter {
            if oracle::decompress_body(&expected, &naive, w, b, p) != tokens {
                mismatches.push(i);
            }
            if !accounting_holds(&packed, tokens.len()) {
                accounting_failures += 1;
            }
        }
    }
    let equivalence = if mismatches.is_empty() {
        Ok(format!("{instances} instances byte-identical to the reference interpreter"))
    } else {
        Err(format!("{} mismatches, first instance {}", mismatches.len(), mismatches[0]))
    };
    let accounting = if accounting_failures == 0 {
        Ok("holds on every oracle instance".to_owned())
    } else {
        Err(format!("{accounting_failures} violations"))
    };
    (equivalence, accounting)
}

fn close(actual: f64, expected: f64, tol: f64, what: &str, failures: &mut Vec<String>) {
    if (actual - expected).abs() > tol {
        failures.push(format!("{what} = {actual:.4}, expected {expected} ± {tol}"));
    }
}

fn metrics_against_tables() -> Outcome {
    let mut failures = Vec::new();
    close(metrics::ratio(148_479, 3_682).unwrap(), 40.32, 0.01, "ratio(alice29)", &mut failures);
    close(metrics::ratio(441_034, 16_273).unwrap(), 27.10, 0.01, "ratio(Frankenstein)", &mut failures);
    close(metrics::bpc(16_273, 441_034).unwrap(), 0.296, 0.01, "bpc(Frankenstein)", &mut failures);
    close(metrics::bpc(3_682, 148_479).unwrap(), 0.200, 0.01, "bpc(alice29)", &mut failures);
    close(metrics::ratio(3_415_511, 629_738).unwrap(), 5.42, 0.01, "ratio(enwik9 total)", &mut failures);
    let starts = batch_start_lines(13_147_026, 10).unwrap();
    let table: [u64; 10] = [
        0, 1_314_702, 2_629_404, 3_944_106, 5_258_808, 6_573_510, 7_888_212, 9_202_914,
        10_517_616, 11_832_318,
    ];
    if starts != table {
        failures.push(format!("batch starts {starts:?}"));
    }
    if failures.is_empty() {
        Ok("ratios, bpc and batch index column match".to_owned())
    } else {
        Err(failures.join("; "))
    }
}

struct MembershipFixture {
    vocab: Vocabulary,
    model: MarkovModel,
    members: Vec<Vec<u8>>,
    outsiders: Vec<Vec<u8>>,
}

const DOC_BYTES: usize = 4_096;

fn membership_fixture() -> MembershipFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let lex = corpus::lexicon(&mut rng, 3_000);
    let corpus_text = corpus::prose(&mut rng, &lex, 256 * 1024);
    let vocab = train_word_vocab(&corpus_text[..48 * 1024], 2_048).unwrap();
    let model = MarkovModel::train(&vocab.encode(&corpus_text), 3, vocab.len()).unwrap();
    // Twenty disjoint in-corpus excerpts and twenty fresh documents.
    let stride = corpus_text.len() / 20;
    let members = (0..20)
        .map(|i| corpus_text[i * stride..i * stride + DOC_BYTES].to_vec())
        .collect();
    let outsiders = (0..20).map(|_| corpus::prose(&mut rng, &lex, DOC_BYTES)).collect();
    MembershipFixture {
        vocab,
        model,
        members,
        outsiders,
    }
}

fn membership_separation(f: &MembershipFixture) -> Outcome {
    let configs = ProbeConfigs::for_predictor(&f.model);
    let ratios = |docs: &[Vec<u8>]| -> Vec<f64> {
        docs.iter()
            .map(|d| membership::degradation_ratio(d, &f.vocab, &f.model, &configs).unwrap())
            .collect()
    };
    let members = ratios(&f.members);
    let outsiders = ratios(&f.outsiders);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m_mean, o_mean) = (mean(&members[..10]), mean(&outsiders[..10]));
    let threshold = membership::calibrate_threshold(&members[..10], &outsiders[..10]).unwrap();
    let correct = members[10..].iter().filter(|&&r| r > threshold).count()
        + outsiders[10..].iter().filter(|&&r| r <= threshold).count();
    let accuracy = correct as f64 / 20.0;
    let summary = format!(
        "mean ratio members {m_mean:.2} vs non-members {o_mean:.2}; threshold {threshold:.3}; held-out accuracy {:.0}%",
        accuracy * 100.0
    );
    if m_mean > o_mean && accuracy >= 0.8 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn sizes(f: &MembershipFixture, doc: &[u8]) -> (usize, usize, usize) {
    let configs = ProbeConfigs::for_predictor(&f.model);
    let size = |c: PredictorConfig| {
        codec::compress(doc, &f.vocab, &f.model, &CodecConfig::new(c))
            .unwrap()
            .len()
    };
    (size(configs.best), size(configs.worst), codec::deflate(doc, 6).len())
}

fn beats_deflate(f: &MembershipFixture) -> Outcome {
    let wins = f.members[..10]
        .iter()
        .filter(|d| {
            let (best, _, deflated) = sizes(f, d);
            best < deflated
        })
        .count();
    let msg = format!("{wins}/10 in-corpus documents smaller than DEFLATE alone");
    if wins >= 9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn best_not_worse_than_worst(f: &MembershipFixture) -> Outcome {
    let configs = ProbeConfigs::for_predictor(&f.model);
    let ok = f.members[..10]
        .iter()
        .filter(|d| {
            let (best, worst, _) = sizes(f, d);
            best <= worst
        })
        .count();
    let msg = format!(
        "{ok}/10 in-corpus documents: best (window {}, {} bits) <= worst (window {}, {} bits)",
        configs.best.window(),
        configs.best.quant_bits(),
        configs.worst.window(),
        configs.worst.quant_bits()
    );
    if ok >= 9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    let (round_trip, rt_accounting) = round_trip_suite();
    results.push(("round-trip losslessness (10,000 random triples)", round_trip));
    let (equivalence, oracle_accounting) = oracle_suite();
    results.push(("oracle equivalence (>= 1,000 instances)", equivalence));
    let accounting = match (rt_accounting, oracle_accounting) {
        (Ok(a), Ok(b)) => Ok(format!("{a}; {b}")),
        (Err(e), _) | (_, Err(e)) => Err(e),
    };
    results.push(("counter accounting invariant", accounting));
    results.push(("metrics against reported values", metrics_against_tables()));

    let started = Instant::now();
    let fixture = membership_fixture();
    results.push(("membership separation", membership_separation(&fixture)));
    results.push(("beats DEFLATE on in-corpus text", beats_deflate(&fixture)));
    results.push(("best config <= worst config on in-corpus text", best_not_worse_than_worst(&fixture)));
    let membership_secs = started.elapsed().as_secs_f64();

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("membership fixture and probes took {membership_secs:.1}s");
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", results.len());
}
