//! Alternating minimax training: one discriminator update, then one generator update, per step.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use pdanet_core::data::{Dataset, DomainTag, ImageBatch, UnpairedLoader};
use pdanet_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{NnError, Result};
use crate::model::{ModelConfig, PdaNet};
use crate::networks::{Discriminator, GenPass, RESIDUAL_BLOCKS};
use crate::objectives::{
    adv_discriminator_grad, adv_generator_grad, cycle_grad, fa_generator_grad, total_losses, GenMode, LossReport,
    LossWeights,
};
use crate::optim::{Adam, AdamConfig};
use crate::params::{Grads, ParamStore};
use crate::tensor::Tensor;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch: usize,
    pub weights: LossWeights,
    pub mode: GenMode,
    pub seed: u64,
    pub channels_base: usize,
    pub residual_blocks: usize,
    /// Bind the experimental generator's decoder to the simulated one.
    pub share_up: bool,
    /// Only `cpu` is available.
    pub device: String,
    /// Save a checkpoint every this many epochs; 0 saves only at the end.
    pub checkpoint_every: usize,
    /// Stop after this many consecutive epochs whose mean `total_G` improved by less than
    /// `min_improvement` (relative); 0 disables early stopping.
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 200,
            batch: 4,
            weights: LossWeights::default(),
            mode: GenMode::default(),
            seed: 0,
            channels_base: 64,
            residual_blocks: RESIDUAL_BLOCKS,
            share_up: true,
            device: "cpu".into(),
            checkpoint_every: 10,
            patience: 10,
            min_improvement: 0.01,
        }
    }
}

impl TrainConfig {
    /// 64x64 images, 5 epochs, base width 32.
    pub fn desk() -> Self {
        TrainConfig { epochs: 5, batch: 1, channels_base: 32, seed: 2024, checkpoint_every: 1, ..TrainConfig::default() }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    /// Networks implied by the loss weights and the sharing switch.
    pub fn model(&self) -> ModelConfig {
        let w = &self.weights;
        ModelConfig {
            channels_base: self.channels_base,
            residual_blocks: self.residual_blocks,
            domain_adaptation: w.lambda_da > 0.0 || w.lambda_fa > 0.0,
            share_up: self.share_up,
            feature_alignment: w.lambda_fa > 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        self.weights.validate()?;
        self.model().validate()?;
        if self.batch == 0 {
            return Err(NnError::Config("train.batch must be >= 1".into()));
        }
        if self.device != "cpu" {
            return Err(NnError::Config(format!("train.device {:?} is not available, use \"cpu\"", self.device)));
        }
        if !(self.min_improvement.is_finite() && self.min_improvement >= 0.0) {
            return Err(NnError::Config("train.min_improvement must be >= 0".into()));
        }
        Ok(())
    }
}

/// One batch per domain: simulated blurry, simulated clean, experimental.
#[derive(Clone, Debug)]
pub struct StepBatch<T> {
    pub blurry: Tensor<T>,
    pub clean: Tensor<T>,
    pub exp: Tensor<T>,
}

impl<T: Scalar> StepBatch<T> {
    pub fn from_images(blurry: &ImageBatch<T>, clean: &ImageBatch<T>, exp: &ImageBatch<T>) -> Result<Self> {
        let n = blurry.batch.min(clean.batch).min(exp.batch);
        let t = |b: &ImageBatch<T>| {
            let len = n * b.height * b.width;
            Tensor::from_vec(n, 1, b.height, b.width, b.data[..len].to_vec())
        };
        let out = StepBatch { blurry: t(blurry)?, clean: t(clean)?, exp: t(exp)? };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blurry.same_shape(&self.clean) && self.blurry.same_shape(&self.exp)) {
            return Err(NnError::Validation(format!(
                "domain batches differ in shape: {:?}, {:?}, {:?}",
                self.blurry.shape(),
                self.clean.shape(),
                self.exp.shape()
            )));
        }
        crate::networks::check_image_shape(&self.blurry)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Discriminators,
    Generators,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    #[serde(flatten)]
    pub losses: LossReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    #[serde(flatten)]
    pub mean: LossReport,
}

/// Bookkeeping persisted next to the parameters in a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Progress {
    config: TrainConfig,
    epoch: usize,
    step: u64,
    stale_epochs: usize,
    converged: bool,
    history: Vec<StepRecord>,
    epochs: Vec<EpochSummary>,
}

pub struct TrainState<T> {
    pub config: TrainConfig,
    pub model: PdaNet<T>,
    pub opt_d: Adam<T>,
    pub opt_g: Adam<T>,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed steps.
    pub step: u64,
    pub history: Vec<StepRecord>,
    pub epochs: Vec<EpochSummary>,
    pub stale_epochs: usize,
    pub converged: bool,
    /// Seconds spent in [`TrainState::run`] by this process. Not persisted, so checkpoints and
    /// logs of identical runs are byte-identical.
    pub elapsed_s: f64,
}

/// The three unpaired training sets. The experimental set may be absent when the model has no
/// experimental branch.
pub struct TrainData<T> {
    pub blurry: Dataset<T>,
    pub clean: Dataset<T>,
    pub exp: Option<Dataset<T>>,
}

impl<T: Scalar> TrainData<T> {
    pub fn validate(&self) -> Result<()> {
        let sets = [(Some(&self.blurry), DomainTag::SimBlur), (Some(&self.clean), DomainTag::SimClear), (self.exp.as_ref(), DomainTag::Exp)];
        for (set, tag) in sets.into_iter().filter_map(|(s, t)| s.map(|s| (s, t))) {
            if set.is_empty() {
                return Err(NnError::Config(format!("{tag} training set is empty")));
            }
            if set.domain != tag {
                return Err(NnError::Config(format!("expected a {tag} set, got {}", set.domain)));
            }
        }
        let shape = self.blurry.shape();
        if self.clean.shape() != shape || self.exp.as_ref().is_some_and(|e| e.shape() != shape) {
            return Err(NnError::Config("the three training sets must share one image size".into()));
        }
        Ok(())
    }
}

fn mean_loss(records: &[StepRecord], mode: GenMode) -> LossReport {
    let n = records.len().max(1) as f64;
    let avg = |f: fn(&LossReport) -> f64| records.iter().map(|r| f(&r.losses)).sum::<f64>() / n;
    LossReport {
        d_d: avg(|r| r.d_d),
        d_b: avg(|r| r.d_b),
        d_da: avg(|r| r.d_da),
        d_fa: avg(|r| r.d_fa),
        g_d: avg(|r| r.g_d),
        g_b: avg(|r| r.g_b),
        g_da: avg(|r| r.g_da),
        g_fa: avg(|r| r.g_fa),
        cyc_f: avg(|r| r.cyc_f),
        cyc_b: avg(|r| r.cyc_b),
        total_d: avg(|r| r.total_d),
        total_g: avg(|r| r.total_g),
        mode,
    }
}

fn scaled<T: Scalar>(like: &Tensor<T>, g: Vec<T>, w: f64) -> Tensor<T> {
    let w = T::lit(w);
    Tensor { n: like.n, c: like.c, h: like.h, w: like.w, data: g.into_iter().map(|v| v * w).collect() }
}

fn ensure_finite<T: Scalar>(what: &str, v: T) -> Result<f64> {
    let f = v.as_f64();
    if f.is_finite() {
        Ok(f)
    } else {
        Err(NnError::Numeric(format!("{what} is not finite")))
    }
}

/// Scores a real and a fake batch and, for a positive weight, accumulates the gradient of
/// `-weight * loss` into `grads`.
fn discriminator_term<T: Scalar>(
    d: &Discriminator,
    store: &ParamStore<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    weight: f64,
    grads: &mut Grads<T>,
) -> Result<f64> {
    let pr = d.forward(store, real, weight > 0.0)?;
    let pf = d.forward(store, fake, weight > 0.0)?;
    let (loss, gr, gf) = adv_discriminator_grad(&pr.scores.data, &pf.scores.data)?;
    if weight > 0.0 {
        d.backward(store, &pr, scaled(&pr.scores, gr, -weight), Some(grads), false)?;
        d.backward(store, &pf, scaled(&pf.scores, gf, -weight), Some(grads), false)?;
    }
    ensure_finite(&d.name, loss)
}

/// Generator adversarial term through a frozen discriminator: loss and `weight * dL/dfake`.
fn generator_term<T: Scalar>(
    d: &Discriminator,
    store: &ParamStore<T>,
    fake: &Tensor<T>,
    mode: GenMode,
    weight: f64,
) -> Result<(f64, Tensor<T>)> {
    let pf = d.forward(store, fake, weight > 0.0)?;
    let (loss, g) = adv_generator_grad(&pf.scores.data, mode)?;
    let dx = if weight > 0.0 {
        d.backward(store, &pf, scaled(&pf.scores, g, weight), None, true)?.expect("input gradient requested")
    } else {
        Tensor::zeros(fake.n, fake.c, fake.h, fake.w)
    };
    Ok((ensure_finite(&d.name, loss)?, dx))
}

/// Generator outputs of one step: both cycles and the experimental branch.
pub struct Passes<T> {
    /// `G_D(I_BS)`.
    pub fake_d: GenPass<T>,
    /// `G_B(G_D(I_BS))`.
    pub rec_f: GenPass<T>,
    /// `G_B(I_S)`.
    pub fake_b: GenPass<T>,
    /// `G_D(G_B(I_S))`.
    pub rec_b: GenPass<T>,
    /// `G_DA(I_E)`.
    pub fake_da: Option<GenPass<T>>,
}

pub fn generator_passes<T: Scalar>(m: &PdaNet<T>, batch: &StepBatch<T>, record: bool) -> Result<Passes<T>> {
    let s = &m.store;
    let fake_d = m.g_d.forward(s, &batch.blurry, record)?;
    let rec_f = m.g_b.forward(s, &fake_d.output, record)?;
    let fake_b = m.g_b.forward(s, &batch.clean, record)?;
    let rec_b = m.g_d.forward(s, &fake_b.output, record)?;
    let fake_da = m.g_da.as_ref().map(|g| g.forward(s, &batch.exp, record)).transpose()?;
    Ok(Passes { fake_d, rec_f, fake_b, rec_b, fake_da })
}

/// Gradient of `-total_D` with respect to the discriminators, with the generator outputs held
/// fixed. Fills the `d_*` entries of `report`.
pub fn discriminator_gradients<T: Scalar>(
    m: &PdaNet<T>,
    batch: &StepBatch<T>,
    p: &Passes<T>,
    w: &LossWeights,
    report: &mut LossReport,
) -> Result<Grads<T>> {
    let s = &m.store;
    let mut grads = Grads::new(s);
    report.d_d = discriminator_term(&m.d_d, s, &batch.clean, &p.fake_d.output, w.lambda_d, &mut grads)?;
    report.d_b = discriminator_term(&m.d_b, s, &batch.blurry, &p.fake_b.output, w.lambda_b, &mut grads)?;
    if let (Some(d), Some(f)) = (&m.d_da, &p.fake_da) {
        report.d_da = discriminator_term(d, s, &batch.clean, &f.output, w.lambda_da, &mut grads)?;
    }
    if let (Some(d), Some(f)) = (&m.d_fa, &p.fake_da) {
        report.d_fa = discriminator_term(d, s, &f.features, &p.fake_d.features, w.lambda_fa, &mut grads)?;
    }
    if !grads.is_finite() {
        return Err(NnError::Numeric("non-finite discriminator gradient".into()));
    }
    Ok(grads)
}

/// Gradient of `total_G` with respect to the generators, with the discriminators held fixed.
/// `p` must come from a recorded pass. Fills the generator and cycle entries of `report`.
pub fn generator_gradients<T: Scalar>(
    m: &PdaNet<T>,
    batch: &StepBatch<T>,
    p: &Passes<T>,
    w: &LossWeights,
    mode: GenMode,
    report: &mut LossReport,
) -> Result<Grads<T>> {
    let s = &m.store;
    let mut grads = Grads::new(s);
    let (g_d, mut d_fake_d) = generator_term(&m.d_d, s, &p.fake_d.output, mode, w.lambda_d)?;
    let (g_b, mut d_fake_b) = generator_term(&m.d_b, s, &p.fake_b.output, mode, w.lambda_b)?;
    report.g_d = g_d;
    report.g_b = g_b;
    let mut d_fake_da = None;
    if let (Some(d), Some(f)) = (&m.d_da, &p.fake_da) {
        let (l, g) = generator_term(d, s, &f.output, mode, w.lambda_da)?;
        report.g_da = l;
        d_fake_da = Some(g);
    }
    let (mut d_feat_d, mut d_feat_da) = (None, None);
    if let (Some(d), Some(f)) = (&m.d_fa, &p.fake_da) {
        let record = w.lambda_fa > 0.0;
        let pe = d.forward(s, &f.features, record)?;
        let ps = d.forward(s, &p.fake_d.features, record)?;
        let (l, ge, gs) = fa_generator_grad(&pe.scores.data, &ps.scores.data, mode)?;
        report.g_fa = ensure_finite("feature alignment", l)?;
        if record {
            d_feat_da = d.backward(s, &pe, scaled(&pe.scores, ge, w.lambda_fa), None, true)?;
            d_feat_d = d.backward(s, &ps, scaled(&ps.scores, gs, w.lambda_fa), None, true)?;
        }
    }
    let (cf, gcf) = cycle_grad(&batch.blurry.data, &p.rec_f.output.data)?;
    let (cb, gcb) = cycle_grad(&batch.clean.data, &p.rec_b.output.data)?;
    report.cyc_f = ensure_finite("forward cycle", cf)?;
    report.cyc_b = ensure_finite("backward cycle", cb)?;
    if w.lambda_cyc > 0.0 {
        let back = m.g_b.backward(s, &p.rec_f, scaled(&p.rec_f.output, gcf, w.lambda_cyc), None, Some(&mut grads), true)?;
        d_fake_d.add_assign(&back.expect("input gradient requested"));
        let back = m.g_d.backward(s, &p.rec_b, scaled(&p.rec_b.output, gcb, w.lambda_cyc), None, Some(&mut grads), true)?;
        d_fake_b.add_assign(&back.expect("input gradient requested"));
    }
    m.g_d.backward(s, &p.fake_d, d_fake_d, d_feat_d.as_ref(), Some(&mut grads), false)?;
    m.g_b.backward(s, &p.fake_b, d_fake_b, None, Some(&mut grads), false)?;
    if let (Some(g), Some(f)) = (&m.g_da, &p.fake_da) {
        if d_fake_da.is_some() || d_feat_da.is_some() {
            let o = &f.output;
            let d_out = d_fake_da.unwrap_or_else(|| Tensor::zeros(o.n, o.c, o.h, o.w));
            g.backward(s, f, d_out, d_feat_da.as_ref(), Some(&mut grads), false)?;
        }
    }
    if !grads.is_finite() {
        return Err(NnError::Numeric("non-finite generator gradient".into()));
    }
    Ok(grads)
}

/// Every loss term at the current parameters, without updating anything.
pub fn evaluate<T: Scalar>(m: &PdaNet<T>, batch: &StepBatch<T>, w: &LossWeights, mode: GenMode) -> Result<LossReport> {
    batch.validate()?;
    let p = generator_passes(m, batch, false)?;
    let s = &m.store;
    let score = |d: &Discriminator, x: &Tensor<T>| d.forward(s, x, false).map(|p| p.scores);
    let mut r = LossReport { mode, ..LossReport::default() };
    let (sd_real, sd_fake) = (score(&m.d_d, &batch.clean)?, score(&m.d_d, &p.fake_d.output)?);
    r.d_d = adv_discriminator_grad(&sd_real.data, &sd_fake.data)?.0.as_f64();
    r.g_d = adv_generator_grad(&sd_fake.data, mode)?.0.as_f64();
    let (sb_real, sb_fake) = (score(&m.d_b, &batch.blurry)?, score(&m.d_b, &p.fake_b.output)?);
    r.d_b = adv_discriminator_grad(&sb_real.data, &sb_fake.data)?.0.as_f64();
    r.g_b = adv_generator_grad(&sb_fake.data, mode)?.0.as_f64();
    if let (Some(d), Some(f)) = (&m.d_da, &p.fake_da) {
        let (real, fake) = (score(d, &batch.clean)?, score(d, &f.output)?);
        r.d_da = adv_discriminator_grad(&real.data, &fake.data)?.0.as_f64();
        r.g_da = adv_generator_grad(&fake.data, mode)?.0.as_f64();
    }
    if let (Some(d), Some(f)) = (&m.d_fa, &p.fake_da) {
        let (e, sim) = (score(d, &f.features)?, score(d, &p.fake_d.features)?);
        r.d_fa = adv_discriminator_grad(&e.data, &sim.data)?.0.as_f64();
        r.g_fa = fa_generator_grad(&e.data, &sim.data, mode)?.0.as_f64();
    }
    r.cyc_f = cycle_grad(&batch.blurry.data, &p.rec_f.output.data)?.0.as_f64();
    r.cyc_b = cycle_grad(&batch.clean.data, &p.rec_b.output.data)?.0.as_f64();
    let (td, tg) = total_losses(&r, w);
    r.total_d = td;
    r.total_g = tg;
    Ok(r)
}

impl<T: Scalar> TrainState<T> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = PdaNet::build(&config.model(), config.seed)?;
        let adam = config.adam();
        Ok(TrainState {
            config,
            model,
            opt_d: Adam::new(adam),
            opt_g: Adam::new(adam),
            epoch: 0,
            step: 0,
            history: Vec::new(),
            epochs: Vec::new(),
            stale_epochs: 0,
            converged: false,
            elapsed_s: 0.0,
        })
    }

    pub fn train_step(&mut self, batch: &StepBatch<T>) -> Result<LossReport> {
        self.train_step_observed(batch, &mut |_, _| {})
    }

    /// [`TrainState::train_step`], calling `observe` with the parameters after each phase.
    pub fn train_step_observed(
        &mut self,
        batch: &StepBatch<T>,
        observe: &mut dyn FnMut(Phase, &ParamStore<T>),
    ) -> Result<LossReport> {
        batch.validate()?;
        let (w, mode) = (self.config.weights, self.config.mode);
        let mut report = LossReport { mode, ..LossReport::default() };
        let passes = generator_passes(&self.model, batch, true)?;

        let grads = discriminator_gradients(&self.model, batch, &passes, &w, &mut report)?;
        let d_params = self.model.discriminator_params();
        self.opt_d.step(&mut self.model.store, &grads, &d_params);
        observe(Phase::Discriminators, &self.model.store);

        let grads = generator_gradients(&self.model, batch, &passes, &w, mode, &mut report)?;
        let g_params = self.model.generator_params();
        self.opt_g.step(&mut self.model.store, &grads, &g_params);
        observe(Phase::Generators, &self.model.store);

        let (td, tg) = total_losses(&report, &w);
        report.total_d = td;
        report.total_g = tg;
        self.step += 1;
        Ok(report)
    }

    /// Trains until `config.epochs` epochs are complete or the convergence rule fires.
    ///
    /// With `out`, every step is appended to `train_log.jsonl` and checkpoints go to
    /// `checkpoint/` at the configured cadence and at the end.
    pub fn run(&mut self, data: &TrainData<T>, out: Option<&Path>) -> Result<()> {
        data.validate()?;
        if data.exp.is_none() && self.model.g_da.is_some() {
            return Err(NnError::Config("the experimental branch needs an EXP training set".into()));
        }
        // Without the experimental branch the exp slot of a step batch is never read.
        let exp = data.exp.as_ref().unwrap_or(&data.blurry);
        let seed = self.config.seed;
        let batch = self.config.batch;
        let lb = UnpairedLoader::new(&data.blurry, batch, seed)?;
        let ls = UnpairedLoader::new(&data.clean, batch, seed)?;
        let le = UnpairedLoader::new(exp, batch, seed)?;
        let mut log = match out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                Some(OpenOptions::new().create(true).append(true).open(dir.join(LOG_FILE))?)
            }
            None => None,
        };
        let start = Instant::now();
        let base_elapsed = self.elapsed_s;
        while self.epoch < self.config.epochs && !self.converged {
            let e = self.epoch as u64;
            let (pb, ps, pe) = (lb.permutation(e), ls.permutation(e), le.permutation(e));
            let first = self.history.len();
            for b in 0..lb.batches_per_epoch() {
                let pick = |set: &Dataset<T>, perm: &[usize], i: usize| -> Result<ImageBatch<T>> {
                    let nb = set.len().div_ceil(batch);
                    let start = (i % nb) * batch;
                    let members: Vec<_> = perm[start..(start + batch).min(perm.len())].iter().map(|&k| &set.items[k]).collect();
                    Ok(ImageBatch::from_images(set.domain, &members)?)
                };
                let step_batch = StepBatch::from_images(
                    &pick(&data.blurry, &pb, b)?,
                    &pick(&data.clean, &ps, b)?,
                    &pick(exp, &pe, b)?,
                )?;
                let losses = self.train_step(&step_batch)?;
                let record = StepRecord { epoch: self.epoch, step: self.step, losses };
                if let Some(f) = log.as_mut() {
                    writeln!(f, "{}", serde_json::to_string(&record)?)?;
                }
                self.history.push(record);
            }
            self.finish_epoch(first);
            self.elapsed_s = base_elapsed + start.elapsed().as_secs_f64();
            let last = self.epoch >= self.config.epochs || self.converged;
            let every = self.config.checkpoint_every;
            if let Some(dir) = out {
                if last || (every > 0 && self.epoch % every == 0) {
                    self.save(&dir.join(CHECKPOINT_DIR))?;
                }
            }
            log::info!(
                "epoch {} done: cycle {:.4}, total_G {:.4}",
                self.epoch,
                self.epochs.last().map_or(0.0, |s| s.mean.cyc_f + s.mean.cyc_b),
                self.epochs.last().map_or(0.0, |s| s.mean.total_g)
            );
        }
        Ok(())
    }

    fn finish_epoch(&mut self, first: usize) {
        let mean = mean_loss(&self.history[first..], self.config.mode);
        if let Some(prev) = self.epochs.last() {
            let p = prev.mean.total_g;
            let gain = (p - mean.total_g) / p.abs().max(f64::MIN_POSITIVE);
            if gain < self.config.min_improvement {
                self.stale_epochs += 1;
            } else {
                self.stale_epochs = 0;
            }
        }
        self.epochs.push(EpochSummary { epoch: self.epoch, steps: self.history.len() - first, mean });
        self.epoch += 1;
        if self.config.patience > 0 && self.stale_epochs >= self.config.patience {
            self.converged = true;
            log::info!("converged after epoch {}", self.epoch);
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let progress = Progress {
            config: self.config.clone(),
            epoch: self.epoch,
            step: self.step,
            stale_epochs: self.stale_epochs,
            converged: self.converged,
            history: self.history.clone(),
            epochs: self.epochs.clone(),
        };
        checkpoint::save(dir, &self.model, &[("D", &self.opt_d), ("G", &self.opt_g)], Some(serde_json::to_value(progress)?))
    }

    /// Restores a state written by [`TrainState::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let mut ck = checkpoint::load::<T>(dir)?;
        let progress: Progress = serde_json::from_value(
            ck.trainer.take().ok_or_else(|| NnError::Format("checkpoint carries no trainer state".into()))?,
        )?;
        if progress.config.model() != ck.model.config {
            return Err(NnError::Format("trainer configuration does not match the stored model".into()));
        }
        let mut take = |k: &str| {
            ck.optimizers.remove(k).ok_or_else(|| NnError::Format(format!("checkpoint lacks optimizer {k}")))
        };
        let (opt_d, opt_g) = (take("D")?, take("G")?);
        Ok(TrainState {
            config: progress.config,
            model: ck.model,
            opt_d,
            opt_g,
            epoch: progress.epoch,
            step: progress.step,
            history: progress.history,
            epochs: progress.epochs,
            stale_epochs: progress.stale_epochs,
            converged: progress.converged,
            elapsed_s: 0.0,
        })
    }
}

/// Builds a fresh state and trains it. With `epochs = 0` the initial networks are returned.
pub fn train<T: Scalar>(config: TrainConfig, data: &TrainData<T>, out: Option<&Path>) -> Result<TrainState<T>> {
    let mut state = TrainState::new(config)?;
    data.validate()?;
    state.run(data, out)?;
    Ok(state)
}
