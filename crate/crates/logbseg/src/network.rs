//! The dual-stream segmentation model: an encoder-decoder regular stream, a
//! hierarchical Bayesian LoG stream, dilated-convolution fusion, and a 1x1x1
//! projection to a single logit channel.

use crate::bayeslayer::VariationalKernel;
use crate::error::{Error, Result};
use crate::logkernel::{discretize, BANK_SIGMAS, BANK_SIZES};
use crate::tape::{Act, NodeId, Tape};
use crate::tensor::{Real, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Dilation rates of the four fusion branches.
pub const ASPP_DILATIONS: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogParam {
    /// Free kernel weights anchored to the LoG shape through the prior.
    FreeWeights,
    /// Kernels re-synthesized from a trainable sigma per layer.
    SigmaOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Encoder levels including the bottom; pooling happens depth-1 times.
    pub depth: usize,
    pub base_channels: usize,
    /// Width of each fusion branch.
    pub branch_channels: usize,
    /// Input (and output) channel count; 1 except in channel-concat gating.
    pub input_channels: usize,
    pub activation: Act,
    /// Number of LoG layers in use (prefix of the bank); 0 disables the
    /// stream.
    pub active_log_layers: usize,
    /// Variational (true) or deterministic (false) LoG weights.
    pub bayesian: bool,
    pub prior_std: f64,
    pub init_std: f64,
    pub log_param: LogParam,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            depth: 3,
            base_channels: 8,
            branch_channels: 8,
            input_channels: 1,
            activation: Act::Relu,
            active_log_layers: 5,
            bayesian: true,
            prior_std: 0.1,
            init_std: 0.01,
            log_param: LogParam::FreeWeights,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Config("depth must be >= 1".into()));
        }
        if self.base_channels < 1 || self.branch_channels < 1 || self.input_channels < 1 {
            return Err(Error::Config("channel counts must be >= 1".into()));
        }
        if self.active_log_layers > 5 {
            return Err(Error::Config("active_log_layers must be in 0..=5".into()));
        }
        if !(self.prior_std > 0.0) || !(self.init_std > 0.0) {
            return Err(Error::Config("prior_std and init_std must be > 0".into()));
        }
        Ok(())
    }

    pub fn check_crop(&self, dims: [usize; 3]) -> Result<()> {
        let div = 1usize << self.depth;
        for &d in &dims {
            if d % div != 0 {
                return Err(Error::Shape(format!(
                    "crop dims {dims:?} must be divisible by 2^depth = {div}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ConvParam<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Real> ConvParam<T> {
    fn init(rng: &mut ChaCha8Rng, cout: usize, cin: usize, k: usize) -> Self {
        let fan_in = (cin * k * k * k) as f64;
        let std = (2.0 / fan_in).sqrt();
        let data = (0..cout * cin * k * k * k)
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                T::fromf(e * std)
            })
            .collect();
        ConvParam {
            w: Tensor::from_vec(&[cout, cin, k, k, k], data),
            b: Tensor::zeros(&[cout]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub cfg: ModelConfig,
    /// Encoder blocks, two convolutions each.
    pub enc: Vec<[ConvParam<T>; 2]>,
    /// Decoder blocks, two convolutions each.
    pub dec: Vec<[ConvParam<T>; 2]>,
    /// The five variational LoG layers (a prefix is active).
    pub log_layers: Vec<VariationalKernel<T>>,
    /// Trainable sigmas for the sigma-only parameterization.
    pub log_sigmas: Vec<Tensor<T>>,
    /// Fusion branches, one per dilation rate.
    pub branches: Vec<ConvParam<T>>,
    pub proj: ConvParam<T>,
}

impl<T: Real> Model<T> {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let base = cfg.base_channels;
        let mut enc = Vec::new();
        for l in 0..cfg.depth {
            let cin = if l == 0 {
                cfg.input_channels
            } else {
                base << (l - 1)
            };
            let cout = base << l;
            enc.push([
                ConvParam::init(&mut rng, cout, cin, 3),
                ConvParam::init(&mut rng, cout, cout, 3),
            ]);
        }
        let mut dec = Vec::new();
        for l in 0..cfg.depth.saturating_sub(1) {
            let cout = base << l;
            let cin = (base << l) + (base << (l + 1));
            dec.push([
                ConvParam::init(&mut rng, cout, cin, 3),
                ConvParam::init(&mut rng, cout, cout, 3),
            ]);
        }
        let mut log_layers = Vec::new();
        let mut log_sigmas = Vec::new();
        for (&k, &s) in BANK_SIZES.iter().zip(BANK_SIGMAS.iter()) {
            let kern = discretize(s, k)?;
            log_layers.push(VariationalKernel::from_prior(&kern, cfg.prior_std, cfg.init_std)?);
            log_sigmas.push(Tensor::scalar(T::fromf(s)));
        }
        let fusion_in = base + cfg.input_channels;
        let branches = ASPP_DILATIONS
            .iter()
            .map(|_| ConvParam::init(&mut rng, cfg.branch_channels, fusion_in, 3))
            .collect();
        let proj = ConvParam::init(&mut rng, cfg.input_channels, cfg.branch_channels, 1);
        Ok(Model {
            cfg,
            enc,
            dec,
            log_layers,
            log_sigmas,
            branches,
            proj,
        })
    }

    /// All parameter tensors in canonical order.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (l, block) in self.enc.iter().enumerate() {
            for (c, p) in block.iter().enumerate() {
                out.push((format!("enc{l}.conv{c}.w"), &p.w));
                out.push((format!("enc{l}.conv{c}.b"), &p.b));
            }
        }
        for (l, block) in self.dec.iter().enumerate() {
            for (c, p) in block.iter().enumerate() {
                out.push((format!("dec{l}.conv{c}.w"), &p.w));
                out.push((format!("dec{l}.conv{c}.b"), &p.b));
            }
        }
        for (l, vk) in self.log_layers.iter().enumerate() {
            out.push((format!("log{l}.mu"), &vk.mu));
            out.push((format!("log{l}.rho"), &vk.rho));
        }
        for (l, s) in self.log_sigmas.iter().enumerate() {
            out.push((format!("log{l}.sigma"), s));
        }
        for (i, p) in self.branches.iter().enumerate() {
            out.push((format!("aspp{i}.w"), &p.w));
            out.push((format!("aspp{i}.b"), &p.b));
        }
        out.push(("proj.w".into(), &self.proj.w));
        out.push(("proj.b".into(), &self.proj.b));
        out
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let parse_block = |s: &str, pre: &str| -> Option<(usize, usize, bool)> {
            let rest = s.strip_prefix(pre)?;
            let (l, rest) = rest.split_once(".conv")?;
            let (c, field) = rest.split_once('.')?;
            Some((l.parse().ok()?, c.parse().ok()?, field == "w"))
        };
        if let Some((l, c, is_w)) = parse_block(name, "enc") {
            let p = &mut self.enc.get_mut(l)?[c];
            return Some(if is_w { &mut p.w } else { &mut p.b });
        }
        if let Some((l, c, is_w)) = parse_block(name, "dec") {
            let p = &mut self.dec.get_mut(l)?[c];
            return Some(if is_w { &mut p.w } else { &mut p.b });
        }
        if let Some(rest) = name.strip_prefix("log") {
            let (l, field) = rest.split_once('.')?;
            let l: usize = l.parse().ok()?;
            return match field {
                "mu" => Some(&mut self.log_layers.get_mut(l)?.mu),
                "rho" => Some(&mut self.log_layers.get_mut(l)?.rho),
                "sigma" => Some(self.log_sigmas.get_mut(l)?),
                _ => None,
            };
        }
        if let Some(rest) = name.strip_prefix("aspp") {
            let (i, field) = rest.split_once('.')?;
            let p = self.branches.get_mut(i.parse::<usize>().ok()?)?;
            return Some(if field == "w" { &mut p.w } else { &mut p.b });
        }
        match name {
            "proj.w" => Some(&mut self.proj.w),
            "proj.b" => Some(&mut self.proj.b),
            _ => None,
        }
    }

    pub fn convert<U: Real>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            enc: self
                .enc
                .iter()
                .map(|b| [convert_cp(&b[0]), convert_cp(&b[1])])
                .collect(),
            dec: self
                .dec
                .iter()
                .map(|b| [convert_cp(&b[0]), convert_cp(&b[1])])
                .collect(),
            log_layers: self
                .log_layers
                .iter()
                .map(|vk| VariationalKernel {
                    mu: vk.mu.convert(),
                    rho: vk.rho.convert(),
                    prior_mean: vk.prior_mean.convert(),
                    prior_std: vk.prior_std,
                    size: vk.size,
                    sigma: vk.sigma,
                })
                .collect(),
            log_sigmas: self.log_sigmas.iter().map(|s| s.convert()).collect(),
            branches: self.branches.iter().map(convert_cp).collect(),
            proj: convert_cp(&self.proj),
        }
    }
}

fn convert_cp<T: Real, U: Real>(p: &ConvParam<T>) -> ConvParam<U> {
    ConvParam {
        w: p.w.convert(),
        b: p.b.convert(),
    }
}

/// One forward pass under construction: a tape plus the leaf ids of every
/// parameter registered on it.
pub struct Forward<'m, T: Real> {
    pub tape: Tape<T>,
    pub model: &'m Model<T>,
    pub leaves: Vec<(String, NodeId)>,
    /// Sampled LoG weight nodes, cached so every crop in a batch shares the
    /// same posterior draw.
    samples: Vec<(String, NodeId)>,
}

impl<'m, T: Real> Forward<'m, T> {
    pub fn new(model: &'m Model<T>) -> Self {
        Forward {
            tape: Tape::new(),
            model,
            leaves: Vec::new(),
            samples: Vec::new(),
        }
    }

    pub fn input(&mut self, x: Tensor<T>) -> NodeId {
        self.tape.leaf(x)
    }

    fn param(&mut self, name: &str, value: Tensor<T>) -> NodeId {
        if let Some((_, id)) = self.leaves.iter().find(|(n, _)| n == name) {
            return *id;
        }
        let id = self.tape.leaf(value);
        self.leaves.push((name.to_string(), id));
        id
    }

    fn conv_block(&mut self, x: NodeId, p: &ConvParam<T>, name: &str, dil: usize) -> NodeId {
        let w = self.param(&format!("{name}.w"), p.w.clone());
        let b = self.param(&format!("{name}.b"), p.b.clone());
        self.tape.conv3d(x, w, b, dil)
    }

    /// LoG stream: each active layer convolves the raw crop, the feature map
    /// is the arithmetic mean over active layers (per input channel).
    /// Returns the feature node and, in Bayesian mode, the summed KL node.
    pub fn log_stream(
        &mut self,
        x: NodeId,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(NodeId, Option<NodeId>)> {
        let cfg = &self.model.cfg;
        let active = cfg.active_log_layers;
        if active == 0 {
            return Err(Error::Config(
                "log_stream called with active_log_layers = 0".into(),
            ));
        }
        let cin = self.tape.value(x).shape[0];
        let stochastic = rng.is_some();
        let mut rng = rng;

        // weight node per active layer
        let mut weight_nodes = Vec::new();
        let mut kl_nodes = Vec::new();
        for l in 0..active {
            let vk = &self.model.log_layers[l];
            let sample_key = format!("log{l}.sample");
            if let Some((_, id)) = self.samples.iter().find(|(n, _)| *n == sample_key) {
                weight_nodes.push(*id);
                continue;
            }
            let w = match cfg.log_param {
                LogParam::SigmaOnly => {
                    let s = self.param(&format!("log{l}.sigma"), self.model.log_sigmas[l].clone());
                    self.tape.sigma_kernel(s, vk.size)
                }
                LogParam::FreeWeights => {
                    let mu = self.param(&format!("log{l}.mu"), vk.mu.clone());
                    let w = if cfg.bayesian && stochastic {
                        let rho = self.param(&format!("log{l}.rho"), vk.rho.clone());
                        let eps = vk.draw_noise(rng.as_deref_mut().expect("rng"));
                        self.tape.reparam(mu, rho, eps)
                    } else {
                        mu
                    };
                    if cfg.bayesian {
                        let rho = self.param(&format!("log{l}.rho"), vk.rho.clone());
                        let kl = self.tape.kl_to_prior(
                            mu,
                            rho,
                            vk.prior_mean.clone(),
                            vk.prior_std,
                        );
                        kl_nodes.push(kl);
                    }
                    w
                }
            };
            self.samples.push((sample_key, w));
            weight_nodes.push(w);
        }

        let zero_bias = self.tape.leaf(Tensor::zeros(&[1]));
        let mut channel_feats = Vec::new();
        for c in 0..cin {
            let xc = if cin == 1 {
                x
            } else {
                self.tape.slice_channel(x, c)
            };
            let mut feats = Vec::new();
            for &w in &weight_nodes {
                feats.push(self.tape.conv3d(xc, w, zero_bias, 1));
            }
            let sum = self.tape.sum_n(&feats);
            channel_feats.push(self.tape.scale(sum, 1.0 / active as f64));
        }
        let feat = if cin == 1 {
            channel_feats[0]
        } else {
            self.tape.concat_channels(&channel_feats)
        };
        let kl = if kl_nodes.is_empty() {
            None
        } else {
            Some(self.tape.sum_n(&kl_nodes))
        };
        Ok((feat, kl))
    }

    /// Encoder-decoder stream with skip connections; output spatial shape
    /// equals the input.
    pub fn regular_stream(&mut self, x: NodeId) -> NodeId {
        let cfg = &self.model.cfg;
        let act = cfg.activation;
        let depth = cfg.depth;
        let mut cur = x;
        let mut skips = Vec::new();
        for l in 0..depth {
            let block = &self.model.enc[l];
            cur = self.conv_block(cur, &block[0], &format!("enc{l}.conv0"), 1);
            cur = self.tape.activation(cur, act);
            cur = self.conv_block(cur, &block[1], &format!("enc{l}.conv1"), 1);
            cur = self.tape.activation(cur, act);
            if l < depth - 1 {
                skips.push(cur);
                cur = self.tape.avg_pool2(cur);
            }
        }
        for l in (0..depth.saturating_sub(1)).rev() {
            cur = self.tape.upsample2(cur);
            cur = self.tape.concat_channels(&[skips[l], cur]);
            let block = &self.model.dec[l];
            cur = self.conv_block(cur, &block[0], &format!("dec{l}.conv0"), 1);
            cur = self.tape.activation(cur, act);
            cur = self.conv_block(cur, &block[1], &format!("dec{l}.conv1"), 1);
            cur = self.tape.activation(cur, act);
        }
        cur
    }

    /// Concatenate the stream outputs, apply the four dilated branches, sum,
    /// activate, and project to logits.
    pub fn fuse(&mut self, reg: NodeId, logf: NodeId) -> (NodeId, NodeId) {
        let act = self.model.cfg.activation;
        let cat = self.tape.concat_channels(&[reg, logf]);
        let mut branch_outs = Vec::new();
        for (i, dil) in ASPP_DILATIONS.iter().enumerate() {
            let p = &self.model.branches[i];
            branch_outs.push(self.conv_block(cat, p, &format!("aspp{i}"), *dil));
        }
        let summed = self.tape.sum_n(&branch_outs);
        let a = self.tape.activation(summed, act);
        let proj = &self.model.proj;
        let logits = self.conv_block(a, proj, "proj", 1);
        let probs = self.tape.sigmoid_node(logits);
        (logits, probs)
    }

    /// Zero LoG feature map used when the stream is ablated away.
    pub fn zero_log_feature(&mut self, x: NodeId) -> NodeId {
        let shape = self.tape.value(x).shape.clone();
        self.tape.leaf(Tensor::zeros(&shape))
    }

    /// Full forward pass. `rng` enables stochastic LoG weight sampling.
    pub fn predict(
        &mut self,
        x: NodeId,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(NodeId, NodeId, Option<NodeId>)> {
        let (logf, kl) = if self.model.cfg.active_log_layers == 0 {
            (self.zero_log_feature(x), None)
        } else {
            self.log_stream(x, rng)?
        };
        let reg = self.regular_stream(x);
        let (logits, probs) = self.fuse(reg, logf);
        Ok((logits, probs, kl))
    }
}

/// Model output of one crop: logits and sigmoid probabilities.
#[derive(Debug, Clone)]
pub struct ModelOutput<T> {
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
}

/// Convenience single-crop inference without gradient bookkeeping reuse.
pub fn predict<T: Real>(
    model: &Model<T>,
    crop: &Tensor<T>,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<ModelOutput<T>> {
    model
        .cfg
        .check_crop([crop.shape[1], crop.shape[2], crop.shape[3]])?;
    let mut fw = Forward::new(model);
    let x = fw.input(crop.clone());
    let (logits, probs, _) = fw.predict(x, rng)?;
    Ok(ModelOutput {
        logits: fw.tape.value(logits).clone(),
        probs: fw.tape.value(probs).clone(),
    })
}
