//! End-to-end acceptance checks. Criteria run one after another inside a
//! single test so that the timed ones do not compete for CPU; each prints one
//! PASS/FAIL line and the test fails if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use jointseg::charrepr::{build_vocab, char_contexts, embed_char, CharTables, GlyphSet, RadicalTable};
use jointseg::corpus::format_corpus;
use jointseg::crf::{log_partition, viterbi, ScoreLattice};
use jointseg::eval::{mcnemar_midp, oov_recall, vocabulary, word_f1};
use jointseg::labelspace::{decode_labels, encode_labels, is_well_formed, BoundaryTag, ComboLabel};
use jointseg::linalg::Mat;
use jointseg::synth::{synthetic_corpus, SynthSpec, FUNCTION_TAG};
use jointseg::tagger::{bench, BenchReport};
use jointseg::trainer::{lr_at_epoch, train, Resources};
use jointseg::{archive, Ensemble, Model, TaggedSentence, TrainConfig, Word};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn random_lattice(n: usize, k: usize, rng: &mut impl Rng) -> ScoreLattice {
    let mut s = Mat::zeros(n, k);
    let mut t = Mat::zeros(k, k);
    s.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-3.0..3.0));
    t.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-3.0..3.0));
    let start = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let end = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ScoreLattice::new(s, t, start, end).unwrap()
}

/// Every label sequence of length `n` over `k` labels, in lexicographic order.
fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |j| {
                    let mut q = p.clone();
                    q.push(j);
                    q
                })
            })
            .collect();
    }
    out
}

fn brute_score(lat: &ScoreLattice, path: &[usize]) -> f64 {
    let mut total = lat.start[path[0]] + lat.end[path[path.len() - 1]];
    for (i, &y) in path.iter().enumerate() {
        total += lat.s.get(i, y);
        if i > 0 {
            total += lat.t.get(path[i - 1], y);
        }
    }
    total
}

fn crf_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=5);
        let lat = random_lattice(n, k, &mut rng);
        let scores: Vec<(Vec<usize>, f64)> = all_paths(n, k)
            .into_iter()
            .map(|p| {
                let s = brute_score(&lat, &p);
                (p, s)
            })
            .collect();
        let max = scores.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let logz = max + scores.iter().map(|x| (x.1 - max).exp()).sum::<f64>().ln();
        let got = log_partition(&lat, None);
        let rel = (got - logz).abs() / logz.abs().max(1e-300);
        worst = worst.max(rel);
        check(rel <= 1e-8, || format!("case {case} (n={n}, k={k}): logZ {got} vs brute force {logz}"))?;

        let mut best = &scores[0];
        for s in &scores[1..] {
            if s.1 > best.1 {
                best = s;
            }
        }
        let path = viterbi(&lat, None);
        check(path == best.0, || format!("case {case}: viterbi {path:?} vs exhaustive {:?}", best.0))?;
    }
    let secs = t0.elapsed().as_secs_f64();
    check(secs < 5.0, || format!("took {secs:.2}s"))?;
    Ok(format!("100 lattices, max rel. logZ error {worst:.1e}, all argmax equal, {secs:.2}s"))
}

// ---------------------------------------------------------------- 2

fn gradients() -> Outcome {
    let t0 = Instant::now();
    let (model, sentence) = common::gradient_toy();
    let report = common::gradient_check(&model, &sentence, 12, 1e-6);
    let secs = t0.elapsed().as_secs_f64();
    for prefix in ["ngram.", "radical", "gru.fwd.", "gru.bwd.", "glyph.conv1.", "glyph.fc", "crf.w", "crf.trans"] {
        check(report.tensors.iter().any(|t| t.starts_with(prefix)), || format!("no {prefix} tensor checked"))?;
    }
    check(report.max_rel <= 1e-4, || format!("max rel. error {:.2e} at {}", report.max_rel, report.worst))?;
    check(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} checks over {} tensors, max rel. error {:.1e} ({} at a smaller step), {secs:.1}s",
        report.coords,
        report.tensors.len(),
        report.max_rel,
        report.refined
    ))
}

// ---------------------------------------------------------------- 3, 4, 6, 8

struct Overfit {
    corpus: Vec<TaggedSentence>,
    model: Model,
}

fn char_accuracy(gold: &[TaggedSentence], pred: &[TaggedSentence]) -> f64 {
    let (mut right, mut total) = (0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        let gl = encode_labels(g).unwrap();
        let pl = encode_labels(p).unwrap();
        total += gl.len();
        right += gl.iter().zip(&pl).filter(|(a, b)| a == b).count();
    }
    right as f64 / total as f64
}

fn raw(corpus: &[TaggedSentence]) -> Vec<Vec<char>> {
    corpus.iter().map(TaggedSentence::chars).collect()
}

fn overfit(slot: &mut Option<Overfit>) -> Outcome {
    let spec = SynthSpec::default();
    let corpus = synthetic_corpus(&spec, 50, 11);
    let chars: usize = corpus.iter().map(TaggedSentence::char_len).sum();
    let cfg = TrainConfig::default();
    check(cfg.epochs == 30, || "default epochs changed".into())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t0 = Instant::now();
    let out = pool
        .install(|| train(&corpus, &corpus, &cfg, Resources::default(), |_| {}))
        .map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    let pred = out.model.tag_batch(&raw(&corpus), 10, 10).map_err(|e| e.to_string())?;
    let acc = char_accuracy(&corpus, &pred);
    *slot = Some(Overfit {
        corpus,
        model: out.model,
    });
    check(acc >= 0.99, || format!("accuracy {acc:.4}"))?;
    check(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "50 sentences / {chars} chars / {} tags, selected epoch {}, char-label accuracy {acc:.4}, {secs:.1}s on one thread",
        spec.tags, out.best_epoch
    ))
}

fn pruning(state: &Option<Overfit>) -> Outcome {
    let o = state.as_ref().ok_or("needs the overfit model")?;
    let labels = o.model.labels.labels();
    for b in [BoundaryTag::B, BoundaryTag::I, BoundaryTag::E] {
        let l = ComboLabel::new(b, FUNCTION_TAG);
        check(!o.model.labels.contains(&l), || format!("{l} present"))?;
    }
    check(o.model.labels.contains(&ComboLabel::new(BoundaryTag::S, FUNCTION_TAG)), || {
        "S-DEG missing".into()
    })?;
    // Training sentences plus random strings over the training characters.
    let mut inputs = raw(&o.corpus);
    let pool: Vec<char> = inputs.iter().flatten().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.gen_range(1..40);
        inputs.push((0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect());
    }
    let pred = o.model.tag_batch(&inputs, 50, 10).map_err(|e| e.to_string())?;
    let mut deg = 0;
    for s in &pred {
        for l in encode_labels(s).unwrap() {
            check(labels.contains(&l), || format!("prediction uses {l}, outside the label space"))?;
            if l.pos == FUNCTION_TAG {
                check(l.boundary == BoundaryTag::S, || format!("prediction contains {l}"))?;
                deg += 1;
            }
        }
    }
    Ok(format!(
        "k = {}, no B/I/E-{FUNCTION_TAG}; {} sentences tagged, {deg} {FUNCTION_TAG} predictions all S",
        o.model.labels.k(),
        inputs.len()
    ))
}

fn ensemble_identity(state: &Option<Overfit>) -> Outcome {
    let o = state.as_ref().ok_or("needs the overfit model")?;
    let m = &o.model;
    let four = Ensemble::new(vec![m, m, m, m]).map_err(|e| e.to_string())?;
    let mut same = 0;
    for (i, chars) in raw(&o.corpus).iter().enumerate() {
        let single = m.tag(chars).map_err(|e| e.to_string())?;
        let ens = four.tag(chars).map_err(|e| e.to_string())?;
        check(single == ens, || format!("sentence {} differs", i + 1))?;
        same += 1;
    }
    Ok(format!("{same}/{same} sentences identical with 4 copies"))
}

fn bucketing(state: &Option<Overfit>) -> Outcome {
    let o = state.as_ref().ok_or("needs the overfit model")?;
    let mut inputs = raw(&o.corpus);
    // Vary lengths so buckets actually differ.
    for (i, s) in inputs.iter_mut().enumerate() {
        s.truncate(5 + (i * 7) % 26);
    }
    let reference = format_corpus(&o.model.tag_batch(&inputs, 1, 1).map_err(|e| e.to_string())?);
    let mut runs = 0;
    for batch in [1, 3, 500] {
        for width in [1, 2, 5, 10, 64] {
            let out = format_corpus(&o.model.tag_batch(&inputs, batch, width).map_err(|e| e.to_string())?);
            check(out == reference, || format!("batch {batch}, bucket width {width} differs"))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} batch/bucket settings byte-identical (batch 1..500, width 1..64)"))
}

// ---------------------------------------------------------------- 5

fn scheme_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tags = ["NN", "VV", "AD", "DEG", "PU"];
    for case in 0..1000 {
        let words: Vec<Word> = (0..rng.gen_range(1..12))
            .map(|_| {
                let len = rng.gen_range(1..=5);
                let surface: String = (0..len)
                    .map(|_| char::from_u32(rng.gen_range(0x4E00..0x9FA6)).unwrap())
                    .collect();
                Word::new(surface, tags[rng.gen_range(0..tags.len())])
            })
            .collect();
        let s = TaggedSentence::new(words).unwrap();
        let labels = encode_labels(&s).map_err(|e| e.to_string())?;
        check(is_well_formed(&labels), || format!("case {case}: ill-formed labels"))?;
        let back = decode_labels(&s.chars(), &labels).map_err(|e| e.to_string())?;
        check(back == s, || format!("case {case}: round trip changed the sentence"))?;
    }
    Ok("1000 random sentences round-trip exactly".into())
}

// ---------------------------------------------------------------- 7

fn schedule() -> Outcome {
    let cfg = TrainConfig::default();
    let lr = |t| lr_at_epoch(t, &cfg).unwrap();
    let (a, b, c) = (lr(1), lr(2), lr(21));
    check(a == 0.1, || format!("t=1: {a}"))?;
    check((b - 0.0952381).abs() <= 1e-7, || format!("t=2: {b}"))?;
    check((c - 0.05).abs() <= 1e-12, || format!("t=21: {c}"))?;
    Ok(format!("lr(1)={a}, lr(2)={b:.7}, lr(21)={c}"))
}

// ---------------------------------------------------------------- 9

fn metrics() -> Outcome {
    let s = |pairs: &[(&str, &str)]| TaggedSentence::from_pairs(pairs).unwrap();
    let gold = vec![s(&[("ab", "N"), ("c", "V")])];
    let pred = vec![s(&[("a", "N"), ("b", "N"), ("c", "V")])];
    let m = word_f1(&gold, &pred, false).map_err(|e| e.to_string())?;
    check(m.p == 1.0 / 3.0 && m.r == 0.5 && (m.f - 0.4).abs() < 1e-15, || format!("{m:?}"))?;
    let pred_w = vec![s(&[("a", "N"), ("b", "N"), ("c", "W")])];
    let j = word_f1(&gold, &pred_w, true).map_err(|e| e.to_string())?;
    check(j.p == 0.0 && j.r == 0.0 && j.f == 0.0, || format!("joint {j:?}"))?;

    let vocab = vocabulary(&[s(&[("c", "X")])]);
    let oov = |g: &[TaggedSentence], p: &[TaggedSentence], joint| oov_recall(g, p, &vocab, joint).unwrap();
    check(oov(&[s(&[("c", "V")])], &[s(&[("c", "V")])], false).is_none(), || "empty OOV set".into())?;
    check(oov(&gold, &gold, true) == Some(1.0), || "single OOV word".into())?;
    let g2 = vec![s(&[("ab", "N"), ("c", "V"), ("de", "N")])];
    let missed = vec![s(&[("ab", "V"), ("c", "V"), ("d", "N"), ("e", "N")])];
    let hit = vec![s(&[("ab", "V"), ("c", "V"), ("de", "N")])];
    check(oov(&g2, &missed, false) == Some(0.5) && oov(&g2, &missed, true) == Some(0.0), || {
        "two OOV words, one missed".into()
    })?;
    check(oov(&g2, &hit, false) == Some(1.0) && oov(&g2, &hit, true) == Some(0.5), || {
        "two OOV words, one mistagged".into()
    })?;

    let p11 = mcnemar_midp(1, 1).map_err(|e| e.to_string())?;
    let p05 = mcnemar_midp(0, 5).map_err(|e| e.to_string())?;
    check(p11 == 1.0, || format!("midp(1,1) = {p11}"))?;
    check(p05 == 0.03125, || format!("midp(0,5) = {p05}"))?;
    Ok(format!("P={:.4} R={} F={}; OOV cases ok; midp(1,1)={p11}, midp(0,5)={p05}", m.p, m.r, m.f))
}

// ---------------------------------------------------------------- 10

fn dimensions() -> Outcome {
    let chars: Vec<char> = "夏天太热".chars().collect();
    let mut glyphs = GlyphSet::default();
    glyphs.insert('夏', jointseg::charrepr::GlyphBitmap::new(30, 30, vec![0.5; 900]).unwrap());
    let mut dims = Vec::new();
    for (order, radicals, glyph) in [(1, false, false), (3, true, false), (5, true, true)] {
        let vocab = build_vocab(std::slice::from_ref(&chars), order).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tables = CharTables::init(&vocab, 64, radicals.then_some(30), glyph, &mut rng);
        let g = glyph.then_some(&glyphs);
        let ctxs = char_contexts(&chars, &vocab, radicals.then(RadicalTable::builtin), g);
        let v = embed_char(&ctxs[0], &tables, g, 0.5, false, &mut rng).map_err(|e| e.to_string())?;
        dims.push(v.len());
    }
    check(dims == [64, 222, 450], || format!("dims {dims:?}"))?;
    Ok(format!("unigram {} / 3-gram+radical {} / 5-gram+radical+glyph {}", dims[0], dims[1], dims[2]))
}

// ---------------------------------------------------------------- 11

fn bench_model(tags: usize, dir: &Path) -> (std::path::PathBuf, usize) {
    let spec = SynthSpec {
        tags,
        single_char_tag: false,
        ..SynthSpec::default()
    };
    let corpus = synthetic_corpus(&spec, 40, 1);
    let cfg = TrainConfig {
        max_order: 1,
        radicals: false,
        char_dim: 8,
        hidden_size: 8,
        ..TrainConfig::default()
    };
    let model = Model::build(&corpus, &cfg, None, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let path = dir.join(format!("bench{tags}.bin"));
    archive::save(&model, &path).unwrap();
    (path, model.labels.k())
}

/// Fastest of several runs, to keep scheduler noise out of the ratios.
fn best_of(path: &Path, input: &[Vec<char>]) -> Result<BenchReport, String> {
    let mut best: Option<BenchReport> = None;
    for _ in 0..5 {
        let (_, r) = bench(&[path], input, 100, 10).map_err(|e| e.to_string())?;
        if best.as_ref().is_none_or(|b| r.timing.decoding_secs < b.timing.decoding_secs) {
            best = Some(r);
        }
    }
    Ok(best.unwrap())
}

fn throughput() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (small, k_small) = bench_model(4, dir.path());
    let (large, k_large) = bench_model(8, dir.path());
    let k_growth = k_large as f64 / k_small as f64;
    check((1.9..=2.2).contains(&k_growth), || format!("k {k_small} vs {k_large}"))?;
    let sentences = raw(&synthetic_corpus(&SynthSpec::default(), 2000, 99));
    let (half, full) = (&sentences[..1000], &sentences[..]);

    let r_half = best_of(&small, half)?;
    let r_full = best_of(&small, full)?;
    let r_large = best_of(&large, full)?;
    let n_ratio = r_full.timing.decoding_secs / r_half.timing.decoding_secs;
    let k_ratio = r_large.timing.decoding_secs / r_full.timing.decoding_secs;
    let detail = format!(
        "decode {:.1}ms/{:.1}ms for 1000/2000 sentences (x{n_ratio:.2}, expect 2), k {k_small}->{k_large}: {:.1}ms (x{k_ratio:.2}, expect {:.1}); {:.0} sent/s, {:.0} chars/s, init {:.3}s",
        r_half.timing.decoding_secs * 1e3,
        r_full.timing.decoding_secs * 1e3,
        r_large.timing.decoding_secs * 1e3,
        k_growth * k_growth,
        r_full.sentences_per_sec(),
        r_full.chars_per_sec(),
        r_full.init_secs
    );
    check((1.0..=4.0).contains(&n_ratio), || format!("sentence scaling off: {detail}"))?;
    // Quadratic in k, within a factor of two, and strictly faster than linear.
    let quad = k_growth * k_growth;
    check(k_ratio >= quad / 2.0 && k_ratio <= quad * 2.0 && k_ratio > k_growth, || {
        format!("label scaling off: {detail}")
    })?;
    Ok(detail)
}

// ----------------------------------------------------------------

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match &result {
        Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
        Err(why) => println!("criterion {n:>2} FAIL  {name}: {why}"),
    }
    result.is_ok()
}

#[test]
fn acceptance() {
    let mut overfit_state = None;
    let results = [
        run(1, "CRF oracle equivalence", crf_oracle),
        run(2, "full-pipeline gradient check", gradients),
        run(3, "overfit benchmark", || overfit(&mut overfit_state)),
        run(4, "label pruning", || pruning(&overfit_state)),
        run(5, "BIES scheme round trip", scheme_round_trip),
        run(6, "ensemble identity", || ensemble_identity(&overfit_state)),
        run(7, "learning-rate schedule", schedule),
        run(8, "bucketing invariance", || bucketing(&overfit_state)),
        run(9, "metric fixtures", metrics),
        run(10, "representation dimensions", dimensions),
        run(11, "throughput scaling", throughput),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len(), "some acceptance criteria failed");
}
