//! Word recognizer: convolutional blocks, a bidirectional recurrent block and
//! a per-timestep character classifier trained with CTC.
//!
//! With the top classifier removed the recognizer becomes the feature
//! extractor of the misspelling classifier.

pub mod metrics;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::checkpoint::{config_digest, Checkpoint, Params};
use crate::engine::ctc::{check_feasible, greedy_path};
use crate::engine::kernels::affine_forward;
use crate::engine::{geometric_lr, Activation, CellKind, Graph, NodeId, RecurrentNodes, RmsProp, Tensor};
use crate::error::{Error, Result};
use crate::render::WordImage;
use crate::textgen::{derive_seed, seeded_rng, DatasetManifest, Truth};

pub use metrics::{cer, levenshtein_counts, wer, EditCounts};

pub const CHECKPOINT_KIND: &str = "hwr";

/// One `conv3x3 + relu` block, optionally followed by a 2x2 max pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub pool: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HwrConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub recurrent_hidden: usize,
    pub cell: CellKind,
    pub alphabet: Alphabet,
}

impl HwrConfig {
    /// 32x128 images, two pooled blocks of 8 and 16 filters, GRU with 32
    /// hidden units: 32 time steps of 64 features.
    pub fn desk(alphabet: Alphabet) -> Self {
        Self {
            image_height: 32,
            image_width: 128,
            conv_blocks: vec![ConvBlock { filters: 8, pool: true }, ConvBlock { filters: 16, pool: true }],
            recurrent_hidden: 32,
            cell: CellKind::Gru,
            alphabet,
        }
    }

    fn pools(&self) -> usize {
        self.conv_blocks.iter().filter(|b| b.pool).count()
    }

    /// Height, width and channels after the convolutional blocks.
    pub fn conv_output(&self) -> (usize, usize, usize) {
        let f = 1 << self.pools();
        let c = self.conv_blocks.last().map_or(1, |b| b.filters);
        (self.image_height / f, self.image_width / f, c)
    }

    pub fn time_steps(&self) -> usize {
        self.conv_output().1
    }

    /// Per-step input width of the recurrent block.
    pub fn sequence_features(&self) -> usize {
        let (h, _, c) = self.conv_output();
        h * c
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.recurrent_hidden
    }

    /// Alphabet plus blank.
    pub fn classes(&self) -> usize {
        self.alphabet.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let f = 1usize << self.pools();
        if self.image_height == 0 || self.image_width == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if self.image_height % f != 0 || self.image_width % f != 0 {
            return Err(Error::Config(format!(
                "{}x{} images cannot be pooled {} times",
                self.image_height,
                self.image_width,
                self.pools()
            )));
        }
        if self.conv_blocks.iter().any(|b| b.filters == 0) || self.recurrent_hidden == 0 {
            return Err(Error::Config("filter and hidden sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn digest(&self) -> Result<String> {
        config_digest(self)
    }

    /// Freshly initialised parameters: Glorot weights, zero biases.
    pub fn init_params(&self, seed: u64) -> Result<Params> {
        self.validate()?;
        let mut rng = seeded_rng(seed);
        let mut p = Params::new();
        let mut cin = 1;
        for (i, b) in self.conv_blocks.iter().enumerate() {
            p.push(
                format!("conv{i}.kernels"),
                Tensor::glorot(&[3, 3, cin, b.filters], 9 * cin, 9 * b.filters, &mut rng),
            );
            p.push(format!("conv{i}.bias"), Tensor::zeros(&[b.filters]));
            cin = b.filters;
        }
        let (f, h, g) = (self.sequence_features(), self.recurrent_hidden, self.cell.gates());
        for dir in ["fw", "bw"] {
            p.push(format!("rnn.{dir}.w"), Tensor::glorot(&[f, g * h], f, g * h, &mut rng));
            p.push(format!("rnn.{dir}.u"), Tensor::glorot(&[h, g * h], h, g * h, &mut rng));
            p.push(format!("rnn.{dir}.b"), Tensor::zeros(&[g * h]));
        }
        let (d, k) = (self.feature_dim(), self.classes());
        p.push("top.weights", Tensor::glorot(&[d, k], d, k, &mut rng));
        p.push("top.bias", Tensor::zeros(&[k]));
        Ok(p)
    }
}

/// `T x D` output of the recurrent block.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub values: Tensor,
}

impl FeatureMatrix {
    pub fn time_steps(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Node ids of one recorded recognizer pass.
pub struct HwrNodes {
    pub params: Vec<NodeId>,
    pub features: NodeId,
    pub logits: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recognizer {
    config: HwrConfig,
    params: Params,
}

impl Recognizer {
    pub fn new(config: HwrConfig, seed: u64) -> Result<Self> {
        let params = config.init_params(seed)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: HwrConfig, params: Params) -> Result<Self> {
        config.init_params(0)?.check_layout(&params)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &HwrConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Records the full forward pass on `g`.
    pub fn build(&self, g: &mut Graph, image: &WordImage, trainable: bool) -> Result<HwrNodes> {
        let c = &self.config;
        if image.height() != c.image_height || image.width() != c.image_width {
            return Err(Error::dim(format!(
                "{}x{} image does not match the {}x{} recognizer",
                image.height(),
                image.width(),
                c.image_height,
                c.image_width
            )));
        }
        let params = self.params.attach(g, trainable);
        let mut x = g.constant("image", image.to_tensor());
        let mut k = 0;
        for (i, b) in c.conv_blocks.iter().enumerate() {
            x = g.conv3x3(&format!("conv{i}"), x, params[k], params[k + 1])?;
            x = g.activate(&format!("conv{i}.relu"), x, Activation::Relu)?;
            if b.pool {
                x = g.maxpool2x2(&format!("conv{i}.pool"), x)?;
            }
            k += 2;
        }
        let seq = g.map_to_sequence("to_sequence", x)?;
        let rnn = RecurrentNodes {
            fw_w: params[k],
            fw_u: params[k + 1],
            fw_b: params[k + 2],
            bw_w: params[k + 3],
            bw_u: params[k + 4],
            bw_b: params[k + 5],
        };
        let features = g.bidirectional_recurrent("rnn", seq, c.cell, rnn)?;
        let logits = g.time_distributed_dense("top", features, params[k + 6], params[k + 7])?;
        Ok(HwrNodes { params, features, logits })
    }

    /// `T x (A+1)` character logits.
    pub fn logits(&self, image: &WordImage) -> Result<Tensor> {
        let mut g = Graph::new();
        let nodes = self.build(&mut g, image, false)?;
        Ok(g.value(nodes.logits).clone())
    }

    /// Everything below the character classifier, in inference mode.
    pub fn extract_features(&self, image: &WordImage) -> Result<FeatureMatrix> {
        let mut g = Graph::new();
        let nodes = self.build(&mut g, image, false)?;
        Ok(FeatureMatrix {
            values: g.value(nodes.features).clone(),
        })
    }

    /// Applies the stored top layer to extracted features.
    pub fn logits_from_features(&self, features: &FeatureMatrix) -> Result<Tensor> {
        let (t, d, k) = (features.time_steps(), features.dim(), self.config.classes());
        if d != self.config.feature_dim() {
            return Err(Error::dim(format!("features of width {d}, recognizer expects {}", self.config.feature_dim())));
        }
        let w = self.params.get("top.weights")?;
        let b = self.params.get("top.bias")?;
        Tensor::new(&[t, k], affine_forward(features.values.data(), t, d, w.data(), b.data(), k))
    }

    pub fn recognize(&self, image: &WordImage) -> Result<String> {
        Ok(greedy_decode(&self.logits(image)?, &self.config.alphabet))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        Checkpoint::new(CHECKPOINT_KIND, &self.config, self.params.clone())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        Self::from_params(ck.config()?, ck.params.clone())
    }
}

/// Best-path decoding: per-step argmax, collapse repeats, drop blanks.
pub fn greedy_decode(logits: &Tensor, alphabet: &Alphabet) -> String {
    alphabet.decode(&greedy_path(logits.data(), alphabet.len() + 1, alphabet.blank_index()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HwrSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    /// Epochs without validation CER improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for HwrSchedule {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 8,
            learning_rate: 3e-3,
            final_learning_rate: 3e-4,
            patience: 3,
            seed: 0,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HwrEpoch {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_cer: f64,
    pub val_word_accuracy: f64,
    pub skipped: usize,
}

pub struct HwrTraining {
    /// Parameters from the epoch with the lowest validation CER.
    pub recognizer: Recognizer,
    pub best_epoch: usize,
    pub log: Vec<HwrEpoch>,
}

/// Corpus CER (total edits over total reference characters) and exact word
/// accuracy of greedy decoding.
pub fn recognition_scores(recognizer: &Recognizer, data: &DatasetManifest) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Argument("empty evaluation set".into()));
    }
    let (mut edits, mut chars, mut exact) = (0, 0, 0);
    for e in &data.examples {
        let pred = recognizer.recognize(&e.image)?;
        let p: Vec<char> = pred.chars().collect();
        let t: Vec<char> = e.rendered_text.chars().collect();
        let c = levenshtein_counts(&p, &t)?;
        edits += c.distance();
        chars += c.reference_length;
        exact += usize::from(c.distance() == 0);
    }
    Ok((edits as f64 / chars as f64, exact as f64 / data.len() as f64))
}

/// CTC training with RMSprop on minibatch-mean gradients. Labels that cannot
/// fit the time steps are skipped and counted.
pub fn train_hwr(
    train: &DatasetManifest,
    val: &DatasetManifest,
    config: HwrConfig,
    schedule: &HwrSchedule,
    on_epoch: &mut dyn FnMut(&HwrEpoch),
) -> Result<HwrTraining> {
    if train.examples.iter().chain(&val.examples).any(|e| e.truth != Truth::Correct) {
        return Err(Error::Argument("the recognizer trains on correctly written examples only".into()));
    }
    if schedule.epochs == 0 || schedule.batch_size == 0 {
        return Err(Error::Argument("epochs and batch size must be positive".into()));
    }
    let mut model = Recognizer::new(config, derive_seed(schedule.seed, 0))?;
    let alphabet = model.config.alphabet.clone();
    let t = model.config.time_steps();

    let mut targets = Vec::new();
    let mut skipped = 0;
    for (i, e) in train.examples.iter().enumerate() {
        let target = alphabet.encode(&e.rendered_text)?;
        if check_feasible(t, &target).is_ok() {
            targets.push((i, target));
        } else {
            skipped += 1;
        }
    }
    if targets.is_empty() {
        return Err(Error::Argument("no trainable examples".into()));
    }

    let mut optimizer = RmsProp::new(schedule.learning_rate, &model.params.sizes());
    let mut best: Option<(f64, usize, Params)> = None;
    let mut log = Vec::new();
    for epoch in 0..schedule.epochs {
        optimizer.learning_rate = geometric_lr(schedule.learning_rate, schedule.final_learning_rate, epoch, schedule.epochs);
        let mut order: Vec<usize> = (0..targets.len()).collect();
        order.shuffle(&mut seeded_rng(derive_seed(schedule.seed, 1 + epoch as u64)));

        let mut total = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            let mut grads: Vec<Vec<f64>> = model.params.sizes().into_iter().map(|n| vec![0.0; n]).collect();
            for &j in batch {
                let (i, target) = &targets[j];
                let mut g = Graph::new();
                let nodes = model.build(&mut g, &train.examples[*i].image, true)?;
                let loss = g.ctc_loss("ctc", nodes.logits, target, alphabet.blank_index())?;
                g.backward(loss).map_err(|e| diagnose(e, epoch, &train.examples[*i].text))?;
                total += g.value(loss).data()[0];
                for (acc, &p) in grads.iter_mut().zip(&nodes.params) {
                    let gp = g.grad(p).expect("parameter gradient");
                    acc.iter_mut().zip(gp).for_each(|(a, v)| *a += v);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|v| *v *= scale);
            model.params.apply(&mut optimizer, &grads)?;
        }

        let (val_cer, val_word_accuracy) = recognition_scores(&model, val)?;
        let record = HwrEpoch {
            epoch,
            learning_rate: optimizer.learning_rate,
            train_loss: total / targets.len() as f64,
            val_cer,
            val_word_accuracy,
            skipped,
        };
        on_epoch(&record);
        log.push(record);
        if best.as_ref().is_none_or(|b| val_cer < b.0) {
            best = Some((val_cer, epoch, model.params.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= schedule.patience {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    model.params = params;
    Ok(HwrTraining {
        recognizer: model,
        best_epoch,
        log,
    })
}

fn diagnose(e: Error, epoch: usize, word: &str) -> Error {
    match e {
        Error::NonFinite { layer } => Error::NonFinite {
            layer: format!("{layer} (epoch {epoch}, word {word:?})"),
        },
        other => other,
    }
}
