//! Mode encoder: an LSTM sequence autoencoder that maps a whole reference
//! clip to one latent vector.
//!
//! The encoder consumes the (normalised) clip one step at a time and projects
//! its final hidden state to the latent `z`. The decoder receives `z` repeated
//! `T` times and projects each hidden state back to the five reference
//! channels. Training minimises the mean squared reconstruction error.

mod lstm;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use lstm::{LstmProjection, Trace};

use crate::adam::Adam;
use crate::artifact::{self, Header};
use crate::error::{Error, Result};
use crate::refmotion::{ModeLibrary, ReferenceMotion, Sample, CHANNELS};
use crate::rng::{self, stream};

pub const DEFAULT_LATENT_DIM: usize = 4;
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentMode {
    pub z: Vec<f64>,
    pub source_name: String,
}

impl LatentMode {
    pub fn distance(&self, other: &LatentMode) -> f64 {
        self.z
            .iter()
            .zip(&other.z)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Clip encoder: LSTM over the reference channels, projected to the latent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub net: LstmProjection,
}

/// Clip decoder: LSTM over the repeated latent, projected to the channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub net: LstmProjection,
}

/// Per-channel affine normalisation `(v - mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ChannelStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            scale: vec![1.0; channels],
        }
    }

    /// Mean and population standard deviation over every sample in the
    /// library; constant channels get unit scale.
    pub fn from_library(library: &ModeLibrary) -> Self {
        let rows: Vec<&Sample> = library.entries.iter().flat_map(|e| &e.motion.samples).collect();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; CHANNELS];
        for r in &rows {
            for c in 0..CHANNELS {
                mean[c] += r[c] / n;
            }
        }
        let mut scale = vec![0.0; CHANNELS];
        for r in &rows {
            for c in 0..CHANNELS {
                scale[c] += (r[c] - mean[c]).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-18 { s.sqrt() } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != CHANNELS || self.scale.len() != CHANNELS {
            return Err(Error::invalid("normalisation stats must have one entry per channel"));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("normalisation scales must be positive"));
        }
        Ok(())
    }

    pub fn normalize(&self, motion: &ReferenceMotion) -> Vec<Vec<f64>> {
        motion
            .samples
            .iter()
            .map(|s| (0..CHANNELS).map(|c| (s[c] - self.mean[c]) / self.scale[c]).collect())
            .collect()
    }

    pub fn denormalize(&self, rows: &[Vec<f64>]) -> Vec<Sample> {
        rows.iter()
            .map(|r| {
                let mut s = [0.0; CHANNELS];
                for c in 0..CHANNELS {
                    s[c] = r[c] * self.scale[c] + self.mean[c];
                }
                s
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub hidden: usize,
    pub latent_dim: usize,
    /// Fixed normalisation; computed from the library when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<ChannelStats>,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 5000,
            seed: 0,
            hidden: DEFAULT_HIDDEN,
            latent_dim: DEFAULT_LATENT_DIM,
            normalization: None,
        }
    }
}

impl EncoderTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.learning_rate.is_nan() {
            return Err(Error::invalid("encoder learning rate must be positive"));
        }
        if self.hidden == 0 || self.latent_dim == 0 {
            return Err(Error::invalid("encoder hidden and latent sizes must be positive"));
        }
        if let Some(stats) = &self.normalization {
            stats.validate()?;
        }
        Ok(())
    }
}

/// Encode an already normalised clip.
pub fn encode_normalized(params: &EncoderParams, rows: &[Vec<f64>]) -> Vec<f64> {
    let trace = params.net.forward(rows);
    trace.outputs.last().cloned().unwrap_or_else(|| vec![0.0; params.net.output])
}

/// Decode `steps` rows (normalised units) from a latent vector.
pub fn decode_normalized(params: &DecoderParams, z: &[f64], steps: usize) -> Result<Vec<Vec<f64>>> {
    if steps == 0 {
        return Err(Error::invalid("decode length must be at least 1"));
    }
    if z.len() != params.net.input {
        return Err(Error::invalid(format!(
            "latent has {} entries, decoder expects {}",
            z.len(),
            params.net.input
        )));
    }
    let inputs = vec![z.to_vec(); steps];
    Ok(params.net.forward(&inputs).outputs)
}

/// Mean squared error over all entries of two equally shaped trajectories.
pub fn reconstruction_loss(x: &[Vec<f64>], x_hat: &[Vec<f64>]) -> Result<f64> {
    if x.len() != x_hat.len() || x.iter().zip(x_hat).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::invalid("reconstruction loss needs equally shaped trajectories"));
    }
    let count: usize = x.iter().map(Vec::len).sum();
    if count == 0 {
        return Ok(0.0);
    }
    let sum: f64 = x
        .iter()
        .zip(x_hat)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)))
        .sum();
    Ok(sum / count as f64)
}

/// Gradients with the same flat layout as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderGrad {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
}

/// Mean squared reconstruction loss over a batch of normalised clips and its
/// exact gradient by backpropagation through time.
pub fn encoder_gradient(
    encoder: &EncoderParams,
    decoder: &DecoderParams,
    batch: &[Vec<Vec<f64>>],
) -> (f64, AutoencoderGrad) {
    let mut grad = AutoencoderGrad {
        encoder: vec![0.0; encoder.net.weights.len()],
        decoder: vec![0.0; decoder.net.weights.len()],
    };
    let count: usize = batch.iter().map(|seq| seq.len() * decoder.net.output).sum();
    if count == 0 {
        return (0.0, grad);
    }
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    for seq in batch {
        let t_len = seq.len();
        let enc_trace = encoder.net.forward(seq);
        let z = enc_trace.outputs[t_len - 1].clone();
        let dec_trace = decoder.net.forward(&vec![z; t_len]);
        let mut d_out = Vec::with_capacity(t_len);
        for (y, x) in dec_trace.outputs.iter().zip(seq) {
            let mut d = Vec::with_capacity(y.len());
            for (a, b) in y.iter().zip(x) {
                let e = a - b;
                loss += e * e * inv;
                d.push(2.0 * e * inv);
            }
            d_out.push(d);
        }
        let d_inputs = decoder.net.backward(&dec_trace, &d_out, &mut grad.decoder);
        let mut dz = vec![0.0; encoder.net.output];
        for di in &d_inputs {
            for (a, b) in dz.iter_mut().zip(di) {
                *a += b;
            }
        }
        let mut d_enc = vec![Vec::new(); t_len];
        d_enc[t_len - 1] = dz;
        encoder.net.backward(&enc_trace, &d_enc, &mut grad.encoder);
    }
    (loss, grad)
}

/// Trained encoder/decoder pair together with its normalisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEncoder {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
    pub stats: ChannelStats,
}

pub const ENCODER_KIND: &str = "mode_encoder";

impl ModeEncoder {
    pub fn latent_dim(&self) -> usize {
        self.encoder.net.output
    }

    pub fn encode(&self, motion: &ReferenceMotion) -> Result<LatentMode> {
        if self.encoder.net.input != CHANNELS || self.stats.mean.len() != CHANNELS {
            return Err(Error::invalid(format!(
                "encoder expects {} channels, reference motions have {CHANNELS}",
                self.encoder.net.input
            )));
        }
        Ok(LatentMode {
            z: encode_normalized(&self.encoder, &self.stats.normalize(motion)),
            source_name: motion.name.clone(),
        })
    }

    pub fn decode(&self, latent: &LatentMode, steps: usize) -> Result<Vec<Sample>> {
        let rows = decode_normalized(&self.decoder, &latent.z, steps)?;
        Ok(self.stats.denormalize(&rows))
    }

    pub fn reconstruct(&self, motion: &ReferenceMotion) -> Result<Vec<Sample>> {
        self.decode(&self.encode(motion)?, motion.len())
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<()> {
        artifact::write_json(path, &Header::new(ENCODER_KIND, config_hash), self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (_, enc): (_, Self) = artifact::read_json(path, ENCODER_KIND)?;
        enc.stats.validate()?;
        Ok(enc)
    }
}

#[derive(Clone, Debug)]
pub struct TrainedEncoder {
    pub model: ModeEncoder,
    pub library: ModeLibrary,
    /// Loss after every epoch (normalised units); never increases.
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
}

/// Tolerance of the per-epoch descent check.
pub const DESCENT_TOLERANCE: f64 = 1e-9;

/// Full-batch Adam. The optimiser follows its own trajectory; the model kept
/// (and the loss recorded each epoch) is the best iterate so far, so the
/// recorded loss never increases.
pub fn train_autoencoder(library: &ModeLibrary, cfg: &EncoderTrainConfig) -> Result<TrainedEncoder> {
    cfg.validate()?;
    library.validate()?;
    let stats = cfg
        .normalization
        .clone()
        .unwrap_or_else(|| ChannelStats::from_library(library));
    let batch: Vec<Vec<Vec<f64>>> = library.entries.iter().map(|e| stats.normalize(&e.motion)).collect();

    let mut init_rng = rng::rng_from(cfg.seed, &[stream::ENCODER_INIT]);
    let mut encoder = EncoderParams {
        net: LstmProjection::random(CHANNELS, cfg.hidden, cfg.latent_dim, &mut init_rng),
    };
    let mut decoder = DecoderParams {
        net: LstmProjection::random(cfg.latent_dim, cfg.hidden, CHANNELS, &mut init_rng),
    };
    let mut opt_enc = Adam::new(encoder.net.weights.len(), cfg.learning_rate);
    let mut opt_dec = Adam::new(decoder.net.weights.len(), cfg.learning_rate);

    let (mut loss, mut grad) = encoder_gradient(&encoder, &decoder, &batch);
    if !loss.is_finite() {
        return Err(Error::TrainingFailure(format!("initial loss is {loss}")));
    }
    let mut best = (loss, encoder.clone(), decoder.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        opt_enc.apply(&mut encoder.net.weights, &grad.encoder);
        opt_dec.apply(&mut decoder.net.weights, &grad.decoder);
        let prev = loss;
        (loss, grad) = encoder_gradient(&encoder, &decoder, &batch);
        if !loss.is_finite() {
            return Err(Error::TrainingFailure(format!(
                "loss became {loss} at epoch {epoch} (learning rate {:e}, previous loss {prev:e})",
                cfg.learning_rate
            )));
        }
        if loss < best.0 {
            best = (loss, encoder.clone(), decoder.clone());
        }
        history.push(best.0);
    }
    let (loss, encoder, decoder) = best;

    let model = ModeEncoder {
        encoder,
        decoder,
        stats,
    };
    let mut library = library.clone();
    for e in &mut library.entries {
        e.latent = Some(model.encode(&e.motion)?);
    }
    Ok(TrainedEncoder {
        model,
        library,
        loss_history: history,
        final_loss: loss,
    })
}

/// Per-channel RMSE between a clip and its reconstruction, in original units.
pub fn channel_rmse(motion: &ReferenceMotion, recon: &[Sample]) -> [f64; CHANNELS] {
    let mut out = [0.0; CHANNELS];
    for (a, b) in motion.samples.iter().zip(recon) {
        for c in 0..CHANNELS {
            out[c] += (a[c] - b[c]).powi(2);
        }
    }
    let n = motion.len() as f64;
    out.map(|v| (v / n).sqrt())
}

/// Per-channel value range (max - min) over the whole library.
pub fn channel_range(library: &ModeLibrary) -> [f64; CHANNELS] {
    let mut lo = [f64::INFINITY; CHANNELS];
    let mut hi = [f64::NEG_INFINITY; CHANNELS];
    for s in library.entries.iter().flat_map(|e| &e.motion.samples) {
        for c in 0..CHANNELS {
            lo[c] = lo[c].min(s[c]);
            hi[c] = hi[c].max(s[c]);
        }
    }
    std::array::from_fn(|c| hi[c] - lo[c])
}
