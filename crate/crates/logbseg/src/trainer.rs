//! Training loop: Dice + weighted-KL objective, adaptive-moment optimizer
//! with decoupled weight decay, ablation switches, and versioned
//! checkpointing with bit-exact resume.

use crate::error::{Error, Result};
use crate::gate::{gate_bypass, gate_push, BalancedBatch, GateState, GateStats, DEFAULT_MU};
use crate::network::{Forward, Model, ModelConfig};
use crate::tensor::{Real, Tensor};
use crate::voxelio::{augment, crop_blocks, normalize, resample, LabeledCrop, LabeledVolume, VolumeKind};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoLog,
    NoBayes,
    NoGate,
    /// Keep only the first n LoG layers active (0..=5).
    LogLayers(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Dice loss as the negative log-likelihood surrogate (default).
    Dice,
    /// Literal voxelwise Bernoulli log-likelihood (cross entropy).
    Bernoulli,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub gate_capacity: usize,
    pub mu: f64,
    /// Weight on the KL term of the loss.
    pub kl_beta: f64,
    pub ablation: Ablation,
    pub likelihood: Likelihood,
    pub seed: u64,
    /// Cubic crop edge length.
    pub crop_size: usize,
    /// Resample to this spacing before training; None keeps native spacing.
    pub target_spacing: Option<[f64; 3]>,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.8,
            beta2: 0.999,
            weight_decay: 1e-5,
            epochs: 500,
            gate_capacity: 2,
            mu: DEFAULT_MU,
            kl_beta: 1e-3,
            ablation: Ablation::Full,
            likelihood: Likelihood::Dice,
            seed: 0,
            crop_size: 64,
            target_spacing: None,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("lr must be finite and >= 0".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1)")));
            }
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.gate_capacity < 1 {
            return Err(Error::Config("gate_capacity must be >= 1".into()));
        }
        if !(self.kl_beta >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("kl_beta and weight_decay must be >= 0".into()));
        }
        if let Ablation::LogLayers(n) = self.ablation {
            if n > 5 {
                return Err(Error::Config("log_layers ablation needs n in 0..=5".into()));
            }
        }
        self.effective_model().validate()?;
        self.effective_model().check_crop([self.crop_size; 3])
    }

    /// Model configuration after applying the ablation switches.
    pub fn effective_model(&self) -> ModelConfig {
        let mut m = self.model.clone();
        match self.ablation {
            Ablation::Full | Ablation::NoGate => {}
            Ablation::NoLog => m.active_log_layers = 0,
            Ablation::NoBayes => m.bayesian = false,
            Ablation::LogLayers(n) => m.active_log_layers = n,
        }
        m
    }

    /// KL weight after ablation: dropping the Bayesian treatment also drops
    /// the KL term.
    pub fn effective_kl_beta(&self) -> f64 {
        match self.ablation {
            Ablation::NoBayes => 0.0,
            _ if self.effective_model().active_log_layers == 0 => 0.0,
            _ => self.kl_beta,
        }
    }
}

/// 𝕃 = data term + kl_beta · KL.
pub fn total_loss(data_term: f64, kl: f64, kl_beta: f64) -> f64 {
    data_term + kl_beta * kl
}

/// First and second moment estimates per parameter, in canonical order.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<(String, Tensor<T>)>,
    pub v: Vec<(String, Tensor<T>)>,
}

impl<T: Real> AdamState<T> {
    fn new(model: &Model<T>) -> Self {
        let zeros = |model: &Model<T>| {
            model
                .named_parameters()
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(&t.shape)))
                .collect::<Vec<_>>()
        };
        AdamState {
            step: 0,
            m: zeros(model),
            v: zeros(model),
        }
    }
}

const ADAM_EPS: f64 = 1e-8;

/// One decoupled-weight-decay Adam step over the named gradients. Parameters
/// and moments are passed through f32 afterwards so checkpoints round-trip
/// exactly regardless of the working precision.
pub fn adam_step<T: Real>(
    model: &mut Model<T>,
    opt: &mut AdamState<T>,
    grads: &[(String, Tensor<T>)],
    cfg: &TrainConfig,
) -> Result<()> {
    opt.step += 1;
    let t = opt.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, g) in grads {
        for v in &g.data {
            if !v.tof().is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in {name}")));
            }
        }
        let mi = opt
            .m
            .iter_mut()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Numeric(format!("unknown parameter {name}")))?;
        let p = model
            .param_mut(name)
            .ok_or_else(|| Error::Numeric(format!("unknown parameter {name}")))?;
        let m = &mut opt.m[mi].1;
        for i in 0..p.data.len() {
            let gi = g.data[i].tof();
            let mv = cfg.beta1 * m.data[i].tof() + (1.0 - cfg.beta1) * gi;
            m.data[i] = T::fromf(mv);
        }
        let v = &mut opt.v[mi].1;
        for i in 0..p.data.len() {
            let gi = g.data[i].tof();
            let vv = cfg.beta2 * v.data[i].tof() + (1.0 - cfg.beta2) * gi * gi;
            v.data[i] = T::fromf(vv);
        }
        for i in 0..p.data.len() {
            let mhat = opt.m[mi].1.data[i].tof() / bc1;
            let vhat = opt.v[mi].1.data[i].tof() / bc2;
            let pv = p.data[i].tof();
            let upd = mhat / (vhat.sqrt() + ADAM_EPS) + cfg.weight_decay * pv;
            p.data[i] = T::fromf(pv - cfg.lr * upd);
        }
        p.quantize_f32();
        opt.m[mi].1.quantize_f32();
        opt.v[mi].1.quantize_f32();
    }
    Ok(())
}

/// Per-epoch record written to the JSON-lines training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean data term over the epoch's batches (Dice loss by default).
    pub dice_loss: f64,
    /// Mean KL over batches (zero when the KL term is ablated).
    pub kl: f64,
    /// Mean total loss 𝕃.
    pub total: f64,
    pub batches: u64,
    pub gate_stats: GateStats,
}

pub struct Trainer<T: Real> {
    pub cfg: TrainConfig,
    pub model: Model<T>,
    pub opt: AdamState<T>,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
}

impl<T: Real> Trainer<T> {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut model = Model::new(cfg.effective_model())?;
        // keep parameters on the f32 grid from the start so checkpoints
        // round-trip bitwise in any working precision
        let names: Vec<String> = model
            .named_parameters()
            .iter()
            .map(|(n, _)| n.clone())
            .collect();
        for n in &names {
            model.param_mut(n).expect("own name").quantize_f32();
        }
        let opt = AdamState::new(&model);
        // derived stream so model init and training draws are independent
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15));
        Ok(Trainer {
            cfg,
            model,
            opt,
            rng,
            epoch: 0,
        })
    }

    /// Resample (optionally), normalize, and crop every volume.
    pub fn prepare(&self, data: &[LabeledVolume]) -> Result<Vec<LabeledCrop>> {
        if data.is_empty() {
            return Err(Error::Data("training dataset is empty".into()));
        }
        let mut crops = Vec::new();
        for (i, lv) in data.iter().enumerate() {
            let (img, mask) = match self.cfg.target_spacing {
                Some(sp) => (
                    resample(&lv.image, sp, VolumeKind::Intensity)?,
                    resample(&lv.mask, sp, VolumeKind::Label)?,
                ),
                None => (lv.image.clone(), lv.mask.clone()),
            };
            let img = normalize(&img)?;
            crops.extend(crop_blocks(&img, Some(&mask), self.cfg.crop_size, &format!("vol{i}"))?);
        }
        Ok(crops)
    }

    /// Forward one balanced batch and return (loss node extras): the mean
    /// data term, the KL value, the total 𝕃, and the parameter gradients.
    fn batch_backward(
        &mut self,
        batch: &BalancedBatch,
    ) -> Result<(f64, f64, f64, Vec<(String, Tensor<T>)>)> {
        let kl_beta = self.cfg.effective_kl_beta();
        let stochastic = self.cfg.effective_model().bayesian;
        let mut fw = Forward::new(&self.model);
        let mut data_terms = Vec::new();
        let mut kl_node = None;
        for crop in &batch.crops {
            let mask = crop
                .mask
                .as_ref()
                .ok_or_else(|| Error::Data("training crop lacks a mask".into()))?;
            let n = self.cfg.crop_size;
            let x = Tensor::from_vec(
                &[1, n, n, n],
                crop.image.data.iter().map(|&v| T::fromf(v as f64)).collect(),
            );
            let m = Tensor::from_vec(
                &[1, n, n, n],
                mask.data.iter().map(|&v| T::fromf(v as f64)).collect(),
            );
            let xid = fw.input(x);
            let rng_opt = if stochastic { Some(&mut self.rng) } else { None };
            let (logits, probs, kl) = fw.predict(xid, rng_opt)?;
            if kl_node.is_none() {
                kl_node = kl;
            }
            let term = match self.cfg.likelihood {
                Likelihood::Dice => fw.tape.dice_loss(probs, m),
                Likelihood::Bernoulli => fw.tape.bce_with_logits(logits, m),
            };
            data_terms.push(term);
        }
        let sum = fw.tape.sum_n(&data_terms);
        let mean_data = fw.tape.scale(sum, 1.0 / data_terms.len() as f64);
        let (total, kl_value) = match (kl_node, kl_beta > 0.0) {
            (Some(kl), true) => {
                let klw = fw.tape.scale(kl, kl_beta);
                (fw.tape.add(mean_data, klw), fw.tape.value(kl).item().tof())
            }
            (Some(kl), false) => (mean_data, fw.tape.value(kl).item().tof()),
            (None, _) => (mean_data, 0.0),
        };
        let data_value = fw.tape.value(mean_data).item().tof();
        let total_value = fw.tape.value(total).item().tof();
        if !total_value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at epoch {}: data {data_value}, kl {kl_value}",
                self.epoch
            )));
        }
        let grads = fw.tape.backward(total);
        let named = fw
            .leaves
            .iter()
            .filter_map(|(name, id)| grads[*id].clone().map(|g| (name.clone(), g)))
            .collect();
        Ok((data_value, kl_value, total_value, named))
    }

    /// One epoch over pre-cut crops: shuffle, augment, gate (or bypass), and
    /// take one optimizer step per emitted batch.
    pub fn train_epoch(&mut self, crops: &[LabeledCrop]) -> Result<EpochRecord> {
        self.epoch += 1;
        let mut order: Vec<usize> = (0..crops.len()).collect();
        order.shuffle(&mut self.rng);
        let mut augmented = Vec::with_capacity(crops.len());
        for &i in &order {
            augmented.push(augment(&crops[i], &mut self.rng)?);
        }
        let batches: Vec<BalancedBatch>;
        let mut gstats = GateStats::default();
        if matches!(self.cfg.ablation, Ablation::NoGate) {
            batches = gate_bypass(augmented, self.cfg.gate_capacity);
        } else {
            let mut gate = GateState::new(self.cfg.gate_capacity, self.cfg.mu)?;
            let mut out = Vec::new();
            for c in augmented {
                if let Some(b) = gate_push(&mut gate, c) {
                    out.push(b);
                }
            }
            gstats = gate.stats;
            batches = out;
        }
        let mut sums = (0.0, 0.0, 0.0);
        for batch in &batches {
            let (d, k, t, grads) = self.batch_backward(batch)?;
            adam_step(&mut self.model, &mut self.opt, &grads, &self.cfg)?;
            sums.0 += d;
            sums.1 += k;
            sums.2 += t;
        }
        let n = batches.len().max(1) as f64;
        Ok(EpochRecord {
            epoch: self.epoch,
            dice_loss: sums.0 / n,
            kl: sums.1 / n,
            total: sums.2 / n,
            batches: batches.len() as u64,
            gate_stats: gstats,
        })
    }

    /// Full run; per-epoch records optionally streamed as JSON lines.
    pub fn run(
        &mut self,
        data: &[LabeledVolume],
        mut log: Option<&mut dyn Write>,
    ) -> Result<Vec<EpochRecord>> {
        let crops = self.prepare(data)?;
        let mut history = Vec::new();
        while self.epoch < self.cfg.epochs {
            let rec = self.train_epoch(&crops)?;
            if let Some(w) = log.as_deref_mut() {
                let line = serde_json::to_string(&rec)
                    .map_err(|e| Error::Format(format!("log serialization: {e}")))?;
                writeln!(w, "{line}").map_err(|e| Error::Format(format!("log write: {e}")))?;
            }
            history.push(rec);
        }
        Ok(history)
    }
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 8] = b"LOGBSEG\0";
const CKPT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CkptManifest {
    epoch: usize,
    opt_step: u64,
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    /// (name, shape) in serialization order; each appears as three f32
    /// blocks: parameter, first moment, second moment.
    tensors: Vec<(String, Vec<usize>)>,
}

pub fn save_checkpoint<T: Real>(path: &Path, tr: &Trainer<T>) -> Result<()> {
    let tensors: Vec<(String, Vec<usize>)> = tr
        .model
        .named_parameters()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape.clone()))
        .collect();
    let manifest = CkptManifest {
        epoch: tr.epoch,
        opt_step: tr.opt.step,
        cfg: tr.cfg.clone(),
        rng: tr.rng.clone(),
        tensors,
    };
    let manifest_json = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest encode: {e}")))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&manifest_json);
    let write_block = |buf: &mut Vec<u8>, t: &Tensor<T>| {
        for v in &t.data {
            buf.extend_from_slice(&(v.tof() as f32).to_le_bytes());
        }
    };
    for (_, t) in tr.model.named_parameters() {
        write_block(&mut buf, t);
    }
    for (_, t) in &tr.opt.m {
        write_block(&mut buf, t);
    }
    for (_, t) in &tr.opt.v {
        write_block(&mut buf, t);
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Trainer<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = std::io::Cursor::new(&bytes);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short for header".into()))?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let mut u32b = [0u8; 4];
    cur.read_exact(&mut u32b)
        .map_err(|_| Error::Checkpoint("truncated version field".into()))?;
    let version = u32::from_le_bytes(u32b);
    if version != CKPT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CKPT_VERSION})"
        )));
    }
    let mut u64b = [0u8; 8];
    cur.read_exact(&mut u64b)
        .map_err(|_| Error::Checkpoint("truncated manifest length".into()))?;
    let mlen = u64::from_le_bytes(u64b) as usize;
    let mut mjson = vec![0u8; mlen];
    cur.read_exact(&mut mjson)
        .map_err(|_| Error::Checkpoint("truncated manifest".into()))?;
    let manifest: CkptManifest = serde_json::from_slice(&mjson)
        .map_err(|e| Error::Checkpoint(format!("manifest decode: {e}")))?;

    let mut tr = Trainer::<T>::new(manifest.cfg)?;
    tr.epoch = manifest.epoch;
    tr.opt.step = manifest.opt_step;
    tr.rng = manifest.rng;

    let expected: Vec<(String, Vec<usize>)> = tr
        .model
        .named_parameters()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape.clone()))
        .collect();
    if expected != manifest.tensors {
        return Err(Error::Checkpoint(
            "checkpoint tensor layout does not match its config".into(),
        ));
    }
    let mut read_block = |numel: usize| -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(numel);
        let mut b = [0u8; 4];
        for _ in 0..numel {
            cur.read_exact(&mut b)
                .map_err(|_| Error::Checkpoint("truncated tensor data".into()))?;
            out.push(T::fromf(f32::from_le_bytes(b) as f64));
        }
        Ok(out)
    };
    let names: Vec<(String, usize)> = expected
        .iter()
        .map(|(n, s)| (n.clone(), s.iter().product()))
        .collect();
    for (name, numel) in &names {
        let data = read_block(*numel)?;
        tr.model.param_mut(name).expect("layout checked").data = data;
    }
    for (i, (_, numel)) in names.iter().enumerate() {
        tr.opt.m[i].1.data = read_block(*numel)?;
    }
    for (i, (_, numel)) in names.iter().enumerate() {
        tr.opt.v[i].1.data = read_block(*numel)?;
    }
    if cur.position() != bytes.len() as u64 {
        return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
    }
    Ok(tr)
}
