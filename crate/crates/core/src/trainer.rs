//! Training: Adagrad with per-epoch learning-rate decay, global-norm
//! clipping, length buckets and dev-set model selection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::charrepr::{GlyphSet, RadicalTable};
use crate::error::{Error, Result};
use crate::eval::word_f1;
use crate::labelspace::TaggedSentence;
use crate::linalg::{l2_norm_sq, Mat};
use crate::model::{Model, ModelParams};
use crate::nn::glorot_uniform;

/// Hyperparameters and feature switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub decay: f64,
    pub clip_norm: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub min_adopt_epoch: usize,
    pub max_order: usize,
    pub char_dim: usize,
    pub radical_dim: usize,
    pub hidden_size: usize,
    pub radicals: bool,
    pub glyphs: bool,
    pub pretrained: bool,
    pub bucket_width: usize,
    pub adagrad_eps: f64,
    /// Starting value of the squared-gradient accumulators.
    pub adagrad_initial: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.1,
            decay: 0.05,
            clip_norm: 5.0,
            dropout: 0.5,
            batch_size: 10,
            epochs: 30,
            min_adopt_epoch: 5,
            max_order: 3,
            char_dim: 64,
            radical_dim: 30,
            hidden_size: 200,
            radicals: true,
            glyphs: false,
            pretrained: false,
            bucket_width: 10,
            adagrad_eps: 1e-8,
            adagrad_initial: 0.1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad("decay must be non-negative");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.adagrad_eps.is_nan() || self.adagrad_eps <= 0.0 {
            return bad("adagrad_eps must be positive");
        }
        if !(self.adagrad_initial >= 0.0 && self.adagrad_initial.is_finite()) {
            return bad("adagrad_initial must be non-negative");
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("min_adopt_epoch", self.min_adopt_epoch),
            ("max_order", self.max_order),
            ("char_dim", self.char_dim),
            ("radical_dim", self.radical_dim),
            ("hidden_size", self.hidden_size),
            ("bucket_width", self.bucket_width),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.min_adopt_epoch > self.epochs {
            return bad("min_adopt_epoch exceeds epochs, no epoch could be selected");
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::parse(origin, lineno + 1, m);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let float = || value.parse::<f64>().map_err(|_| err(format!("{key}: bad number {value:?}")));
            let int = || value.parse::<usize>().map_err(|_| err(format!("{key}: bad integer {value:?}")));
            let flag = || value.parse::<bool>().map_err(|_| err(format!("{key}: expected true/false")));
            match key {
                "initial_lr" => self.initial_lr = float()?,
                "decay" => self.decay = float()?,
                "clip_norm" => self.clip_norm = float()?,
                "dropout" => self.dropout = float()?,
                "batch_size" => self.batch_size = int()?,
                "epochs" => self.epochs = int()?,
                "min_adopt_epoch" => self.min_adopt_epoch = int()?,
                "max_order" => self.max_order = int()?,
                "char_dim" => self.char_dim = int()?,
                "radical_dim" => self.radical_dim = int()?,
                "hidden_size" => self.hidden_size = int()?,
                "radicals" => self.radicals = flag()?,
                "glyphs" => self.glyphs = flag()?,
                "pretrained" => self.pretrained = flag()?,
                "bucket_width" => self.bucket_width = int()?,
                "adagrad_eps" => self.adagrad_eps = float()?,
                "adagrad_initial" => self.adagrad_initial = float()?,
                "seed" => self.seed = value.parse().map_err(|_| err(format!("seed: bad integer {value:?}")))?,
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_kv(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "initial_lr={}\ndecay={}\nclip_norm={}\ndropout={}\nbatch_size={}\nepochs={}\n\
             min_adopt_epoch={}\nmax_order={}\nchar_dim={}\nradical_dim={}\nhidden_size={}\n\
             radicals={}\nglyphs={}\npretrained={}\nbucket_width={}\nadagrad_eps={}\nadagrad_initial={}\nseed={}\n",
            self.initial_lr,
            self.decay,
            self.clip_norm,
            self.dropout,
            self.batch_size,
            self.epochs,
            self.min_adopt_epoch,
            self.max_order,
            self.char_dim,
            self.radical_dim,
            self.hidden_size,
            self.radicals,
            self.glyphs,
            self.pretrained,
            self.bucket_width,
            self.adagrad_eps,
            self.adagrad_initial,
            self.seed
        );
        s
    }
}

/// `η_t = η₀ / (ρ·(t − 1) + 1)` for 1-based epoch `t`.
pub fn lr_at_epoch(t: usize, cfg: &TrainConfig) -> Result<f64> {
    if t < 1 {
        return Err(Error::Config("epoch index starts at 1".into()));
    }
    Ok(cfg.initial_lr / (cfg.decay * (t - 1) as f64 + 1.0))
}

/// Rescales all gradients jointly so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [&mut [f64]], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0;
    for g in grads.iter() {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        sq += l2_norm_sq(g);
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(norm)
}

/// Accumulated squared gradients, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState {
    accum: Vec<Vec<f64>>,
    eps: f64,
}

impl AdagradState {
    pub fn new(sizes: impl IntoIterator<Item = usize>, eps: f64) -> Self {
        Self::with_initial(sizes, eps, 0.0)
    }

    /// Accumulators start at `initial` instead of zero.
    pub fn with_initial(sizes: impl IntoIterator<Item = usize>, eps: f64, initial: f64) -> Self {
        Self {
            accum: sizes.into_iter().map(|n| vec![initial; n]).collect(),
            eps,
        }
    }

    pub fn for_params(params: &ModelParams, eps: f64, initial: f64) -> Self {
        Self::with_initial(params.tensors().iter().map(|(_, m)| m.as_slice().len()), eps, initial)
    }

    pub fn accumulated(&self) -> &[Vec<f64>] {
        &self.accum
    }
}

/// `state += g²; p −= lr · g / √(state + ε)`.
pub fn adagrad_update(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdagradState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.accum.len() {
        return Err(Error::Shape("adagrad: parameter/gradient/state counts differ".into()));
    }
    for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut state.accum) {
        if p.len() != g.len() || p.len() != acc.len() {
            return Err(Error::Shape("adagrad: tensor sizes differ".into()));
        }
        for ((pi, &gi), ai) in p.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
            if gi == 0.0 {
                continue;
            }
            *ai += gi * gi;
            *pi -= lr * gi / (*ai + state.eps).sqrt();
        }
    }
    Ok(())
}

/// A `fan_in × fan_out` matrix drawn from the Glorot-uniform distribution.
pub fn glorot_init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Mat {
    let mut m = Mat::zeros(fan_in, fan_out);
    glorot_uniform(&mut m, fan_in, fan_out, rng);
    m
}

/// A batch of sentences sharing one padded length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bucket {
    pub max_len: usize,
    /// Indices into the input slice.
    pub members: Vec<usize>,
    /// Real lengths, aligned with `members`.
    pub lengths: Vec<usize>,
}

impl Bucket {
    /// `mask[b][t]` is true for real positions of member `b`.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        self.lengths
            .iter()
            .map(|&n| (0..self.max_len).map(|t| t < n).collect())
            .collect()
    }
}

/// Groups sentences by `ceil(len / width) · width` and splits each group
/// into batches of at most `batch_size`, keeping input order inside a group.
/// Zero-length sentences are left out.
pub fn make_buckets(lengths: &[usize], bucket_width: usize, batch_size: usize) -> Result<Vec<Bucket>> {
    if bucket_width == 0 || batch_size == 0 {
        return Err(Error::Config("bucket width and batch size must be at least 1".into()));
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &n) in lengths.iter().enumerate() {
        if n > 0 {
            groups.entry(n.div_ceil(bucket_width) * bucket_width).or_default().push(i);
        }
    }
    let mut out = Vec::new();
    for (max_len, members) in groups {
        for chunk in members.chunks(batch_size) {
            out.push(Bucket {
                max_len,
                members: chunk.to_vec(),
                lengths: chunk.iter().map(|&i| lengths[i]).collect(),
            });
        }
    }
    Ok(out)
}

/// Optional resources for building a model.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub radicals: Option<RadicalTable>,
    pub glyphs: Option<GlyphSet>,
    /// Text of a pre-trained character embedding file and its origin.
    pub embeddings: Option<(String, std::path::PathBuf)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub dev_f1_seg: f64,
    pub dev_f1_seg_tag: f64,
    pub product: f64,
}

impl EpochLog {
    pub fn line(&self) -> String {
        format!(
            "epoch={} lr={:.7} loss={:.6} f1_seg={:.6} f1_seg_tag={:.6} product={:.6}",
            self.epoch, self.lr, self.train_loss, self.dev_f1_seg, self.dev_f1_seg_tag, self.product
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub coverage: Option<crate::charrepr::Coverage>,
}

/// Trains for `cfg.epochs` epochs and keeps the parameters of the epoch with
/// the highest dev `F1_seg · F1_seg&tag` among epochs ≥ `min_adopt_epoch`
/// (earliest wins ties).
pub fn train(
    train_set: &[TaggedSentence],
    dev_set: &[TaggedSentence],
    cfg: &TrainConfig,
    resources: Resources,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || dev_set.is_empty() || train_set.iter().any(TaggedSentence::is_empty) {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::build(train_set, cfg, resources.radicals, resources.glyphs, &mut rng)?;
    let coverage = match &resources.embeddings {
        Some((text, origin)) => Some(model.apply_pretrained(text, origin)?),
        None => None,
    };

    let gold: Vec<Vec<usize>> = train_set
        .iter()
        .map(|s| model.labels.encode_indices(s))
        .collect::<Result<_>>()?;
    let chars: Vec<Vec<char>> = train_set.iter().map(TaggedSentence::chars).collect();
    let dev_chars: Vec<Vec<char>> = dev_set.iter().map(TaggedSentence::chars).collect();

    let mut state = AdagradState::for_params(&model.params, cfg.adagrad_eps, cfg.adagrad_initial);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = lr_at_epoch(epoch, cfg)?;
        order.shuffle(&mut rng);
        let lengths: Vec<usize> = order.iter().map(|&i| chars[i].len()).collect();
        let mut batches = make_buckets(&lengths, cfg.bucket_width, cfg.batch_size)?;
        batches.shuffle(&mut rng);

        let mut total_loss = 0.0;
        for bucket in &batches {
            let members: Vec<usize> = bucket.members.iter().map(|&m| order[m]).collect();
            let mut grads = model.params.zeros_like();
            for &i in &members {
                total_loss += model.sentence_gradient(&chars[i], &gold[i], bucket.max_len, &mut grads, &mut rng)?;
            }
            grads.scale(1.0 / members.len() as f64);
            {
                let mut g = grads.slices_mut();
                clip_gradients(&mut g, cfg.clip_norm)?;
            }
            let g = grads.slices();
            let mut p = model.params.slices_mut();
            adagrad_update(&mut p, &g, &mut state, lr)?;
        }

        let pred = model.tag_batch(&dev_chars, cfg.batch_size.max(1), cfg.bucket_width)?;
        let seg = word_f1(dev_set, &pred, false)?;
        let joint = word_f1(dev_set, &pred, true)?;
        let entry = EpochLog {
            epoch,
            lr,
            train_loss: total_loss / train_set.len() as f64,
            dev_f1_seg: seg.f,
            dev_f1_seg_tag: joint.f,
            product: seg.f * joint.f,
        };
        on_epoch(&entry);
        if epoch >= cfg.min_adopt_epoch && best.as_ref().is_none_or(|(p, _, _)| entry.product > *p) {
            best = Some((entry.product, epoch, model.params.clone()));
        }
        log.push(entry);
    }

    let (_, best_epoch, params) = best.expect("min_adopt_epoch <= epochs");
    model.params = params;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        coverage,
    })
}
