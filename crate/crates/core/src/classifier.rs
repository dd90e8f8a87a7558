//! Misspelling classifier: recognizer features and the one-hot expected text
//! aligned into a two-channel square image and scored by a small CNN.

use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::checkpoint::{Checkpoint, Params};
use crate::engine::kernels::affine_forward;
use crate::engine::{bce, geometric_lr, Activation, Graph, NodeId, RmsProp, Tensor};
use crate::error::{Error, Result};
use crate::hwr::{FeatureMatrix, Recognizer};
use crate::render::{one_hot_encode, WordImage};
use crate::textgen::{derive_seed, seeded_rng, DatasetManifest};

pub const CHECKPOINT_KIND: &str = "classifier";

/// Shape of the classification head. The aligned image is `T x T x 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub time_steps: usize,
    pub alphabet_size: usize,
    pub feature_dim: usize,
    pub conv_filters: [usize; 4],
    pub dropout_rate: f64,
}

impl HeadConfig {
    pub fn desk() -> Self {
        Self {
            time_steps: 32,
            alphabet_size: 26,
            feature_dim: 64,
            conv_filters: [8, 8, 16, 16],
            dropout_rate: 0.1,
        }
    }

    /// 128 time steps of 512 features and a 98-symbol alphabet.
    pub fn full() -> Self {
        Self {
            time_steps: 128,
            alphabet_size: 98,
            feature_dim: 512,
            conv_filters: [32, 32, 64, 64],
            dropout_rate: 0.1,
        }
    }

    /// Output width of the time-distributed compression.
    pub fn td_dense_out(&self) -> usize {
        self.time_steps
    }

    /// Zero columns on each side of the one-hot matrix.
    pub fn pad_width(&self) -> usize {
        (self.time_steps - self.alphabet_size) / 2
    }

    /// Side of the final feature map.
    pub fn pooled_side(&self) -> usize {
        self.time_steps / 16
    }

    pub fn flatten_len(&self) -> usize {
        self.pooled_side().pow(2) * self.conv_filters[3]
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.time_steps;
        if t == 0 || t % 16 != 0 {
            return Err(Error::Config(format!("T={t} must be a positive multiple of 16")));
        }
        if self.alphabet_size == 0 || self.alphabet_size > t || (t - self.alphabet_size) % 2 != 0 {
            return Err(Error::Config(format!(
                "alphabet of {} cannot be padded symmetrically to {t} columns",
                self.alphabet_size
            )));
        }
        if self.feature_dim == 0 || self.conv_filters.contains(&0) {
            return Err(Error::Config("feature and filter sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn init_params(&self, seed: u64) -> Result<Params> {
        self.validate()?;
        let mut rng = seeded_rng(seed);
        let (t, d) = (self.time_steps, self.feature_dim);
        let mut p = Params::new();
        p.push("td.weights", Tensor::glorot(&[d, t], d, t, &mut rng));
        p.push("td.bias", Tensor::zeros(&[t]));
        let mut cin = 2;
        for (i, &f) in self.conv_filters.iter().enumerate() {
            p.push(format!("conv{i}.kernels"), Tensor::glorot(&[3, 3, cin, f], 9 * cin, 9 * f, &mut rng));
            p.push(format!("conv{i}.bias"), Tensor::zeros(&[f]));
            cin = f;
        }
        let n = self.flatten_len();
        p.push("out.weights", Tensor::glorot(&[n, 1], n, 1, &mut rng));
        p.push("out.bias", Tensor::zeros(&[1]));
        Ok(p)
    }
}

/// Trainable parameters of a head: the time-distributed compression, four
/// convolutions and the output perceptron.
pub fn count_params(c: &HeadConfig) -> usize {
    let td = c.feature_dim * c.td_dense_out() + c.td_dense_out();
    let mut cin = 2;
    let mut conv = 0;
    for &f in &c.conv_filters {
        conv += 9 * cin * f + f;
        cin = f;
    }
    td + conv + c.flatten_len() + 1
}

/// `T x T x 2`: compressed features in channel 0, padded one-hot text in
/// channel 1.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    pub values: Tensor,
}

impl AlignedPair {
    pub fn channel(&self, ch: usize) -> Vec<f64> {
        self.values.data().iter().skip(ch).step_by(2).copied().collect()
    }
}

/// Direct evaluation of the alignment step.
pub fn align(config: &HeadConfig, features: &FeatureMatrix, text_onehot: &Tensor, td_weights: &Tensor, td_bias: &Tensor) -> Result<AlignedPair> {
    config.validate()?;
    let (t, a, d) = (config.time_steps, config.alphabet_size, config.feature_dim);
    if features.values.shape() != [t, d] {
        return Err(Error::Config(format!("features {:?} do not match {t}x{d}", features.values.shape())));
    }
    if text_onehot.shape() != [t, a] {
        return Err(Error::Config(format!("one-hot text {:?} does not match {t}x{a}", text_onehot.shape())));
    }
    if td_weights.shape() != [d, t] || td_bias.shape() != [t] {
        return Err(Error::Config("time-distributed weights do not match the head".into()));
    }
    let compressed = affine_forward(features.values.data(), t, d, td_weights.data(), td_bias.data(), t);
    let pad = config.pad_width();
    let mut out = vec![0.0; t * t * 2];
    for r in 0..t {
        for col in 0..t {
            out[(r * t + col) * 2] = compressed[r * t + col];
        }
        for k in 0..a {
            out[(r * t + pad + k) * 2 + 1] = text_onehot.data()[r * a + k];
        }
    }
    Ok(AlignedPair {
        values: Tensor::new(&[t, t, 2], out)?,
    })
}

pub struct HeadNodes {
    pub params: Vec<NodeId>,
    pub aligned: NodeId,
    pub probability: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    config: HeadConfig,
    params: Params,
}

impl Head {
    pub fn new(config: HeadConfig, seed: u64) -> Result<Self> {
        let params = config.init_params(seed)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: HeadConfig, params: Params) -> Result<Self> {
        config.init_params(0)?.check_layout(&params)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Records alignment and scoring on `g`. Randomness is consumed only by
    /// training-mode dropout.
    pub fn build(
        &self,
        g: &mut Graph,
        features: &FeatureMatrix,
        text_onehot: &Tensor,
        training: bool,
        rng: &mut dyn rand::RngCore,
    ) -> Result<HeadNodes> {
        let c = &self.config;
        let params = self.params.attach(g, true);
        let feats = g.constant("features", features.values.clone());
        let compressed = g.time_distributed_dense("td", feats, params[0], params[1])?;
        let text = g.constant("text", text_onehot.clone());
        let padded = g.pad_columns("text.pad", text, c.pad_width(), c.pad_width())?;
        let aligned = g.stack_channels("aligned", compressed, padded)?;
        let mut x = aligned;
        for i in 0..4 {
            x = g.conv3x3(&format!("conv{i}"), x, params[2 + 2 * i], params[3 + 2 * i])?;
            x = g.activate(&format!("conv{i}.relu"), x, Activation::Relu)?;
            x = g.maxpool2x2(&format!("conv{i}.pool"), x)?;
        }
        let x = g.flatten("flatten", x)?;
        let x = g.dropout("dropout", x, c.dropout_rate, training, rng)?;
        let x = g.dense("out", x, params[10], params[11])?;
        let probability = g.activate("sigmoid", x, Activation::Sigmoid)?;
        Ok(HeadNodes {
            params,
            aligned,
            probability,
        })
    }

    /// Inference-mode probability that the handwriting is misspelled.
    pub fn score(&self, features: &FeatureMatrix, text_onehot: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let nodes = self.build(&mut g, features, text_onehot, false, &mut seeded_rng(0))?;
        Ok(g.value(nodes.probability).data()[0])
    }
}

/// Head plus the frozen recognizer it reads features from.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub head: Head,
    pub extractor: Recognizer,
    /// Digest of the extractor checkpoint the head was trained against.
    pub extractor_digest: String,
}

impl Classifier {
    pub fn alphabet(&self) -> &Alphabet {
        &self.extractor.config().alphabet
    }

    /// Misspelling probability of `image` given the expected `text`.
    pub fn predict(&self, image: &WordImage, text: &str) -> Result<f64> {
        let features = self.extractor.extract_features(image)?;
        self.score_features(&features, text)
    }

    pub fn score_features(&self, features: &FeatureMatrix, text: &str) -> Result<f64> {
        let onehot = one_hot_encode(text, self.alphabet(), self.head.config.time_steps)?;
        self.head.score(features, &onehot)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(CHECKPOINT_KIND, &self.head.config, self.head.params.clone())?;
        ck.extractor_digest = Some(self.extractor_digest.clone());
        Ok(ck)
    }

    /// Rebuilds a classifier, refusing an extractor other than the one it was
    /// trained against.
    pub fn from_checkpoints(head: &Checkpoint, extractor: &Checkpoint) -> Result<Self> {
        head.expect_kind(CHECKPOINT_KIND)?;
        let digest = extractor.digest()?;
        match &head.extractor_digest {
            Some(d) if *d == digest => {}
            Some(d) => {
                return Err(Error::Checkpoint(format!(
                    "classifier was trained against extractor {}, got {}",
                    &d[..12.min(d.len())],
                    &digest[..12]
                )))
            }
            None => return Err(Error::Checkpoint("classifier checkpoint has no extractor digest".into())),
        }
        let extractor = Recognizer::from_checkpoint(extractor)?;
        let head = Head::from_params(head.config()?, head.params.clone())?;
        check_compatible(head.config(), &extractor)?;
        Ok(Self {
            head,
            extractor,
            extractor_digest: digest,
        })
    }
}

fn check_compatible(c: &HeadConfig, extractor: &Recognizer) -> Result<()> {
    let e = extractor.config();
    if c.time_steps != e.time_steps() || c.feature_dim != e.feature_dim() || c.alphabet_size != e.alphabet.len() {
        return Err(Error::Config(format!(
            "head expects {}x{} features over {} symbols, extractor gives {}x{} over {}",
            c.time_steps,
            c.feature_dim,
            c.alphabet_size,
            e.time_steps(),
            e.feature_dim(),
            e.alphabet.len()
        )));
    }
    Ok(())
}

/// Head input for one example, computed once from the frozen extractor.
#[derive(Clone, Debug)]
pub struct PreparedExample {
    pub features: FeatureMatrix,
    pub onehot: Tensor,
    /// 1 for misspelled.
    pub label: f64,
}

pub fn prepare(extractor: &Recognizer, data: &DatasetManifest, time_steps: usize) -> Result<Vec<PreparedExample>> {
    let alphabet = &extractor.config().alphabet;
    data.examples
        .iter()
        .map(|e| {
            Ok(PreparedExample {
                features: extractor.extract_features(&e.image)?,
                onehot: one_hot_encode(&e.text, alphabet, time_steps)?,
                label: e.truth.label(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Start the compression from the recognizer's character classifier so
    /// that channel 0 begins as letter evidence under the one-hot columns.
    pub init_from_recognizer: bool,
}

impl Default for ClassifierSchedule {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 16,
            learning_rate: 1e-3,
            final_learning_rate: 4e-5,
            patience: 8,
            seed: 0,
            init_from_recognizer: true,
        }
    }
}

/// Copies the recognizer's letter weights into compression columns
/// `pad..pad+A`. The blank column and the bias are left alone.
pub fn init_compression(head: &mut Head, recognizer: &Recognizer) -> Result<()> {
    check_compatible(&head.config, recognizer)?;
    let (d, t, a, pad) = (head.config.feature_dim, head.config.time_steps, head.config.alphabet_size, head.config.pad_width());
    let top = recognizer.params().get("top.weights")?.clone();
    let classes = a + 1;
    let mut p = Params::new();
    for (name, tensor) in head.params.names().zip(head.params.tensors()) {
        let mut tensor = tensor.clone();
        if name == "td.weights" {
            let w = tensor.data_mut();
            for i in 0..d {
                for k in 0..a {
                    w[i * t + pad + k] = top.data()[i * classes + k];
                }
            }
        }
        p.push(name, tensor);
    }
    head.params = p;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

pub struct ClassifierTraining {
    /// Head from the epoch with the lowest validation loss.
    pub classifier: Classifier,
    pub best_epoch: usize,
    pub log: Vec<ClassifierEpoch>,
    pub warnings: Vec<String>,
}

/// Mean BCE and accuracy at 0.5 of `head` on prepared examples.
pub fn evaluate_head(head: &Head, data: &[PreparedExample]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Argument("empty evaluation set".into()));
    }
    let (mut loss, mut correct) = (0.0, 0);
    for ex in data {
        let p = head.score(&ex.features, &ex.onehot)?;
        loss += bce(p, ex.label);
        correct += usize::from((p >= 0.5) == (ex.label == 1.0));
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

fn balance_warning(name: &str, data: &[PreparedExample]) -> Option<String> {
    let share = data.iter().filter(|e| e.label == 1.0).count() as f64 / data.len().max(1) as f64;
    (!(0.4..=0.6).contains(&share)).then(|| format!("{name} set is unbalanced: {:.1}% misspelled", 100.0 * share))
}

/// Trains a head on features from a frozen extractor with BCE and RMSprop,
/// decaying the learning rate geometrically over the epoch budget.
pub fn train_classifier(
    train: &DatasetManifest,
    val: &DatasetManifest,
    extractor: &Checkpoint,
    config: HeadConfig,
    schedule: &ClassifierSchedule,
    on_epoch: &mut dyn FnMut(&ClassifierEpoch),
) -> Result<ClassifierTraining> {
    let recognizer = Recognizer::from_checkpoint(extractor)?;
    check_compatible(&config, &recognizer)?;
    let t = config.time_steps;
    let train_x = prepare(&recognizer, train, t)?;
    let val_x = prepare(&recognizer, val, t)?;
    train_prepared(&train_x, &val_x, recognizer, extractor.digest()?, config, schedule, on_epoch)
}

/// [`train_classifier`] on features that were already extracted.
pub fn train_prepared(
    train: &[PreparedExample],
    val: &[PreparedExample],
    extractor: Recognizer,
    extractor_digest: String,
    config: HeadConfig,
    schedule: &ClassifierSchedule,
    on_epoch: &mut dyn FnMut(&ClassifierEpoch),
) -> Result<ClassifierTraining> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Argument("training and validation sets must be non-empty".into()));
    }
    if schedule.epochs == 0 || schedule.batch_size == 0 {
        return Err(Error::Argument("epochs and batch size must be positive".into()));
    }
    let warnings: Vec<String> = [balance_warning("training", train), balance_warning("validation", val)]
        .into_iter()
        .flatten()
        .collect();
    let mut head = Head::new(config, derive_seed(schedule.seed, 0))?;
    if schedule.init_from_recognizer {
        init_compression(&mut head, &extractor)?;
    }
    let mut optimizer = RmsProp::new(schedule.learning_rate, &head.params.sizes());
    let mut best: Option<(f64, usize, Params)> = None;
    let mut log = Vec::new();
    for epoch in 0..schedule.epochs {
        optimizer.learning_rate = geometric_lr(schedule.learning_rate, schedule.final_learning_rate, epoch, schedule.epochs);
        let epoch_seed = derive_seed(schedule.seed, 1 + epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut seeded_rng(epoch_seed));

        let mut total = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            let mut grads: Vec<Vec<f64>> = head.params.sizes().into_iter().map(|n| vec![0.0; n]).collect();
            for &i in batch {
                let ex = &train[i];
                let mut rng = seeded_rng(derive_seed(epoch_seed, i as u64));
                let mut g = Graph::new();
                let nodes = head.build(&mut g, &ex.features, &ex.onehot, true, &mut rng)?;
                let loss = g.bce_loss("bce", nodes.probability, ex.label)?;
                g.backward(loss)?;
                total += g.value(loss).data()[0];
                for (acc, &p) in grads.iter_mut().zip(&nodes.params) {
                    let gp = g.grad(p).expect("parameter gradient");
                    acc.iter_mut().zip(gp).for_each(|(a, v)| *a += v);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|v| *v *= scale);
            head.params.apply(&mut optimizer, &grads)?;
        }

        let (val_loss, val_accuracy) = evaluate_head(&head, val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite {
                layer: format!("validation loss (epoch {epoch})"),
            });
        }
        let record = ClassifierEpoch {
            epoch,
            learning_rate: optimizer.learning_rate,
            train_loss: total / train.len() as f64,
            val_loss,
            val_accuracy,
        };
        on_epoch(&record);
        log.push(record);
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, head.params.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= schedule.patience {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    head.params = params;
    Ok(ClassifierTraining {
        classifier: Classifier {
            head,
            extractor,
            extractor_digest,
        },
        best_epoch,
        log,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(count_params(&HeadConfig::full()), 135_041);
        assert_eq!(count_params(&HeadConfig::desk()), 6_369);
        let c = HeadConfig::desk();
        assert_eq!(c.init_params(1).unwrap().count(), count_params(&c));
    }

    #[test]
    fn pad_widths() {
        assert_eq!(HeadConfig::full().pad_width(), 15);
        assert_eq!(HeadConfig::desk().pad_width(), 3);
        let odd = HeadConfig {
            alphabet_size: 27,
            ..HeadConfig::desk()
        };
        assert!(matches!(odd.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_weights_score_one_half() {
        let c = HeadConfig::desk();
        let mut p = Params::new();
        for (n, t) in c.init_params(3).unwrap().names().zip(c.init_params(3).unwrap().tensors()) {
            p.push(n, Tensor::zeros(t.shape()));
        }
        let head = Head::from_params(c.clone(), p).unwrap();
        let f = FeatureMatrix {
            values: Tensor::full(&[32, 64], 0.3),
        };
        let s = head.score(&f, &Tensor::zeros(&[32, 26])).unwrap();
        assert_eq!(s, 0.5);
    }
}
