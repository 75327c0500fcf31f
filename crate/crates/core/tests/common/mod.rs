#![allow(dead_code)]

use std::path::Path;

use jointseg::charrepr::{GlyphBitmap, GlyphSet};
use jointseg::corpus::parse_corpus;
use jointseg::{Model, TaggedSentence, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus(text: &str) -> Vec<TaggedSentence> {
    parse_corpus(text, Path::new("<test>")).unwrap()
}

/// Deterministic pseudo-random bitmaps for `chars`.
pub fn glyph_set(chars: &str, seed: u64) -> GlyphSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = GlyphSet::default();
    for ch in chars.chars() {
        let px = (0..900).map(|_| rng.gen::<f64>()).collect();
        set.insert(ch, GlyphBitmap::new(30, 30, px).unwrap());
    }
    set
}

/// A small model over a 3-character sentence with four labels, using every
/// feature: n-grams up to order 2, radicals and glyphs.
pub fn gradient_toy() -> (Model, TaggedSentence) {
    let train = corpus("夏天_NT 热_VA\n太_NT\n");
    let cfg = TrainConfig {
        max_order: 2,
        char_dim: 3,
        radical_dim: 2,
        hidden_size: 3,
        glyphs: true,
        dropout: 0.5,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let model = Model::build(&train, &cfg, None, Some(glyph_set("夏天热太", 5)), &mut rng).unwrap();
    assert_eq!(model.labels.k(), 4);
    (model, train[0].clone())
}

const STEPS: [f64; 3] = [1e-5, 1e-6, 1e-7];

pub struct GradCheck {
    /// Largest relative error over all checked coordinates and directions.
    pub max_rel: f64,
    pub worst: String,
    pub coords: usize,
    /// Checks that only agreed at a smaller step (a ReLU or max-pool kink
    /// lies within the default step of the point).
    pub refined: usize,
    pub tensors: Vec<String>,
}

/// Compares analytic gradients of the training loss (dropout masks fixed by
/// reseeding) with central differences: up to `per_tensor` sampled
/// coordinates of every tensor plus one random direction per tensor.
/// Relative error is `|a − n| / max(|a|, |n|, floor)`. A check that fails at
/// step 1e-5 is repeated at 1e-6 and 1e-7 and the best agreement is kept.
pub fn gradient_check(model: &Model, sentence: &TaggedSentence, per_tensor: usize, floor: f64) -> GradCheck {
    let chars = sentence.chars();
    let gold = model.labels.encode_indices(sentence).unwrap();
    let seed = 77;
    let loss = |m: &Model| {
        m.sentence_loss(&chars, &gold, chars.len(), &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
    };
    let mut grads = model.params.zeros_like();
    model
        .sentence_gradient(&chars, &gold, chars.len(), &mut grads, &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, m)| (n, m.as_slice().to_vec()))
        .collect();

    let mut work = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut out = GradCheck {
        max_rel: 0.0,
        worst: String::new(),
        coords: 0,
        refined: 0,
        tensors: analytic.iter().map(|(n, _)| n.clone()).collect(),
    };
    let rel_err = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(floor);
    // `numeric(h)` is the central difference with step `h`.
    let mut record = |what: String, a: f64, numeric: &mut dyn FnMut(f64) -> f64| {
        let mut n = numeric(STEPS[0]);
        let mut rel = rel_err(a, n);
        if rel > 1e-4 {
            for &h in &STEPS[1..] {
                let m = numeric(h);
                if rel_err(a, m) < rel {
                    (n, rel) = (m, rel_err(a, m));
                }
            }
            if rel <= 1e-4 {
                out.refined += 1;
            }
        }
        if rel > out.max_rel {
            out.max_rel = rel;
            out.worst = format!("{what}: analytic {a:e}, numeric {n:e}");
        }
        out.coords += 1;
    };

    for (ti, (name, g)) in analytic.iter().enumerate() {
        let len = g.len();
        let mut coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            // Prefer coordinates with a non-zero gradient, then random ones.
            let mut nz: Vec<usize> = (0..len).filter(|&i| g[i] != 0.0).collect();
            let mut picked = Vec::new();
            while picked.len() < per_tensor / 2 && !nz.is_empty() {
                picked.push(nz.swap_remove(rng.gen_range(0..nz.len())));
            }
            while picked.len() < per_tensor {
                picked.push(rng.gen_range(0..len));
            }
            picked
        };
        coords.dedup();
        for &i in &coords {
            let orig = work.params.tensors_mut()[ti].as_slice()[i];
            let mut numeric = |h: f64| {
                work.params.tensors_mut()[ti].as_mut_slice()[i] = orig + h;
                let lp = loss(&work);
                work.params.tensors_mut()[ti].as_mut_slice()[i] = orig - h;
                let lm = loss(&work);
                work.params.tensors_mut()[ti].as_mut_slice()[i] = orig;
                (lp - lm) / (2.0 * h)
            };
            record(format!("{name}[{i}]"), g[i], &mut numeric);
        }

        let dir: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let orig = work.params.tensors_mut()[ti].as_slice().to_vec();
        let shifted = |step: f64| -> Vec<f64> { orig.iter().zip(&dir).map(|(o, d)| o + step * d).collect() };
        let mut numeric = |h: f64| {
            work.params.tensors_mut()[ti].as_mut_slice().copy_from_slice(&shifted(h));
            let lp = loss(&work);
            work.params.tensors_mut()[ti].as_mut_slice().copy_from_slice(&shifted(-h));
            let lm = loss(&work);
            work.params.tensors_mut()[ti].as_mut_slice().copy_from_slice(&orig);
            (lp - lm) / (2.0 * h)
        };
        let directional: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        record(format!("{name} along random direction"), directional, &mut numeric);
    }
    out
}
