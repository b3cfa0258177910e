//! The workflow steps behind each subcommand. Every step writes its outputs plus a configuration
//! echo and a provenance record into one directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pdanet_core::data::{augment_set, DomainTag, Split};
use pdanet_core::degradation::degrade_all;
use pdanet_core::metrics::{evaluate_suite, MetricReport, Summary};
use pdanet_core::physics::generate_clear_dataset;
use pdanet_core::rng::{derive_seed, rng_for, stream_id};
use pdanet_core::ScalarField2D;
use pdanet_nn::checkpoint;
use pdanet_nn::trainer::{CHECKPOINT_DIR, LOG_FILE};
use pdanet_nn::{TrainConfig, TrainData, TrainState, Which};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{read_dataset, select, tagged, training_set, write_dataset, Entry};
use crate::error::{usage, Result};
use crate::provenance::{record, TIMING};

pub const SCENES: &str = "scenes.jsonl";
pub const EPOCHS: &str = "epochs.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TXT: &str = "ablation.txt";

fn clean_entries(cfg: &RunConfig, train_seed: u64, test_seed: u64, prefix: &str) -> Result<(Vec<Entry>, Vec<String>)> {
    let scene = cfg.physics.scene();
    let mut entries = Vec::new();
    let mut scenes = Vec::new();
    for (split, count, seed) in [(Split::Train, cfg.data.count, train_seed), (Split::Test, cfg.data.test_count, test_seed)] {
        for (i, sim) in generate_clear_dataset(count, &scene, seed)?.into_iter().enumerate() {
            let id = format!("{prefix}_{split}_{i:05}");
            scenes.push(serde_json::to_string(&serde_json::json!({ "id": id, "scene": sim.meta }))?);
            entries.push(Entry::new(id, DomainTag::SimClear, split, sim.image.cast()));
        }
    }
    Ok((entries, scenes))
}

fn held_out_seed(cfg: &RunConfig, stream: &str) -> u64 {
    derive_seed(cfg.data.seed, stream_id(stream), 0)
}

/// Clean training scenes from `physics.seed` and held-out scenes from `data.seed`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let (entries, scenes) = clean_entries(cfg, cfg.physics.seed, held_out_seed(cfg, "test-scenes"), "clear")?;
    write_dataset(out, &entries, true)?;
    fs::write(out.join(SCENES), scenes.join("\n") + "\n")?;
    record(out, "simulate", cfg, &[])?;
    Ok(entries.len())
}

fn degrade_entries(cfg: &RunConfig, entries: &[Entry], target: DomainTag) -> Result<Vec<Entry>> {
    let dc = match target {
        DomainTag::SimBlur => cfg.degrade.sim(),
        DomainTag::Exp => cfg.degrade.exp,
        DomainTag::SimClear => return Err(usage("degrade produces SIM_BLUR or EXP images")),
    };
    if let Some(bad) = entries.iter().find(|e| e.record.domain != DomainTag::SimClear) {
        return Err(usage(format!("degrade expects SIM_CLEAR images, {} is {}", bad.record.id, bad.record.domain)));
    }
    let images: Vec<ScalarField2D<f32>> = entries.iter().map(|e| e.image.clone()).collect();
    let out = degrade_all(&images, &dc)?;
    Ok(entries.iter().zip(out).map(|(e, img)| Entry::new(e.record.id.clone(), target, e.record.split, img)).collect())
}

/// Degrades every image of a clean dataset, keeping ids and splits so outputs pair with their
/// sources.
pub fn degrade(cfg: &RunConfig, input: &Path, out: &Path, target: DomainTag) -> Result<usize> {
    let entries = degrade_entries(cfg, &read_dataset(input)?, target)?;
    write_dataset(out, &entries, true)?;
    record(out, "degrade", cfg, &[("input", input)])?;
    Ok(entries.len())
}

fn augment_entries(cfg: &RunConfig, entries: &[Entry]) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for split in [Split::Train, Split::Test] {
        let part = select(entries, None, Some(split));
        if split == Split::Test {
            out.extend(part);
            continue;
        }
        for domain in [DomainTag::SimClear, DomainTag::SimBlur, DomainTag::Exp] {
            let sources = select(&part, Some(domain), None);
            for t in augment_set(&tagged(&sources), &cfg.data.augment, cfg.data.seed)? {
                out.push(Entry::new(t.id, domain, split, t.image));
            }
        }
    }
    Ok(out)
}

/// Expands the training split with flips, rotations and crops; test images are copied.
pub fn augment(cfg: &RunConfig, input: &Path, out: &Path) -> Result<usize> {
    let entries = augment_entries(cfg, &read_dataset(input)?)?;
    write_dataset(out, &entries, false)?;
    record(out, "augment", cfg, &[("input", input)])?;
    Ok(entries.len())
}

/// Dataset directories produced by [`prepare`].
#[derive(Clone, Debug)]
pub struct Prepared {
    pub clean: PathBuf,
    pub blurry: PathBuf,
    pub exp: PathBuf,
}

fn experimental_entries(cfg: &RunConfig) -> Result<Vec<Entry>> {
    let Some(dir) = &cfg.data.exp_dir else {
        let (clean, _) =
            clean_entries(cfg, held_out_seed(cfg, "exp-scenes"), held_out_seed(cfg, "exp-test-scenes"), "exp")?;
        return degrade_entries(cfg, &clean, DomainTag::Exp);
    };
    let mut measured = read_dataset(dir)?;
    let n = cfg.physics.pixels;
    if let Some(bad) = measured.iter().find(|e| e.image.shape() != (n, n)) {
        return Err(usage(format!(
            "data.exp_dir: {} is {:?}, physics.pixels asks for {n}x{n}",
            bad.record.id,
            bad.image.shape()
        )));
    }
    if measured.len() <= cfg.data.exp_test {
        return Err(usage(format!("data.exp_test = {} leaves no measured training images", cfg.data.exp_test)));
    }
    measured.shuffle(&mut rng_for(cfg.data.seed, "exp-split", 0));
    let mut out = Vec::new();
    for (i, mut e) in measured.into_iter().enumerate() {
        e.record.domain = DomainTag::Exp;
        e.record.split = if i < cfg.data.exp_test { Split::Test } else { Split::Train };
        out.push(Entry::new(e.record.id, DomainTag::Exp, e.record.split, e.image));
    }
    augment_entries(cfg, &out)
}

/// Builds the three domains: clean scenes, their degraded versions, and an experimental set
/// (measured images from `data.exp_dir`, or separate scenes degraded with `degrade.exp`).
pub fn prepare(cfg: &RunConfig, out: &Path) -> Result<Prepared> {
    let p = Prepared { clean: out.join("clean"), blurry: out.join("blurry"), exp: out.join("exp") };
    simulate(cfg, &p.clean)?;
    degrade(cfg, &p.clean, &p.blurry, DomainTag::SimBlur)?;
    let exp = experimental_entries(cfg)?;
    write_dataset(&p.exp, &exp, true)?;
    let mut inputs: Vec<(&str, &Path)> = Vec::new();
    if let Some(d) = &cfg.data.exp_dir {
        inputs.push(("exp_dir", d));
    }
    record(&p.exp, "prepare", cfg, &inputs)?;
    record(out, "prepare", cfg, &inputs)?;
    Ok(p)
}

fn write_lines<S: Serialize>(path: &Path, items: &[S]) -> Result<()> {
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Trains on the training splits. With `resume`, continues from `out/checkpoint` up to
/// `train.epochs`; the stored configuration must otherwise match.
pub fn train(cfg: &RunConfig, clean: &Path, blurry: &Path, exp: Option<&Path>, out: &Path, resume: bool) -> Result<TrainState<f32>> {
    let clean_set = training_set(&read_dataset(clean)?, DomainTag::SimClear, "--clean")?;
    let blurry_set = training_set(&read_dataset(blurry)?, DomainTag::SimBlur, "--blurry")?;
    let exp_set = exp.map(|p| training_set(&read_dataset(p)?, DomainTag::Exp, "--exp")).transpose()?;
    if exp_set.is_none() && cfg.train.model().has_exp_generator() {
        return Err(usage("train: lambda_da or lambda_fa > 0 needs an experimental set (--exp)"));
    }
    let data = TrainData { blurry: blurry_set, clean: clean_set, exp: exp_set };
    data.validate()?;
    let ck = out.join(CHECKPOINT_DIR);
    let mut state = if resume && ck.exists() {
        let mut s = TrainState::<f32>::load(&ck)?;
        let stored = serde_json::to_value(TrainConfig { epochs: cfg.train.epochs, ..s.config.clone() })?;
        let asked = serde_json::to_value(&cfg.train)?;
        if stored != asked {
            let keys: Vec<&String> = asked.as_object().into_iter().flatten().filter(|(k, v)| stored.get(k.as_str()) != Some(v)).map(|(k, _)| k).collect();
            return Err(usage(format!("train --resume: train.{keys:?} differ from the checkpoint (only epochs may change)")));
        }
        s.config.epochs = cfg.train.epochs;
        // Drop log lines written after the checkpoint.
        write_lines(&out.join(LOG_FILE), &s.history)?;
        s
    } else {
        if out.join(LOG_FILE).exists() {
            return Err(usage(format!("{} already holds a training run; pass --resume or choose another directory", out.display())));
        }
        TrainState::new(cfg.train.clone())?
    };
    let mut inputs: Vec<(&str, &Path)> = vec![("clean", clean), ("blurry", blurry)];
    if let Some(e) = exp {
        inputs.push(("exp", e));
    }
    record(out, "train", cfg, &inputs)?;
    state.run(&data, Some(out))?;
    write_lines(&out.join(EPOCHS), &state.epochs)?;
    fs::write(
        out.join(TIMING),
        serde_json::to_string_pretty(&serde_json::json!({ "elapsed_s": state.elapsed_s, "steps": state.step }))?,
    )?;
    Ok(state)
}

/// Applies a trained generator to every image of `input` (optionally one split).
pub fn denoise(cfg: &RunConfig, ck: &Path, input: &Path, out: &Path, which: Which, split: Option<Split>) -> Result<usize> {
    if !ck.join(checkpoint::MANIFEST).exists() {
        return Err(usage(format!("{} is not a checkpoint directory", ck.display())));
    }
    let model = checkpoint::load::<f32>(ck)?.model;
    let entries = select(&read_dataset(input)?, None, split);
    if entries.is_empty() {
        return Err(usage(format!("{} holds no images to denoise", input.display())));
    }
    let images: Vec<ScalarField2D<f32>> = entries.iter().map(|e| e.image.clone()).collect();
    let outputs = model.denoise(which, &images)?;
    let written: Vec<Entry> =
        entries.iter().zip(outputs).map(|(e, image)| Entry { record: e.record.clone(), image }).collect();
    write_dataset(out, &written, true)?;
    record(out, &format!("denoise --which {which}"), cfg, &[("checkpoint", ck), ("input", input)])?;
    Ok(written.len())
}

/// Scores `input`: MSE/PSNR/SSIM against same-id references when given, BRISQUE/PIQE otherwise.
pub fn evaluate(cfg: &RunConfig, input: &Path, reference: Option<&Path>, out: &Path) -> Result<MetricReport> {
    let report = score(cfg, input, reference)?;
    fs::create_dir_all(out)?;
    fs::write(out.join(REPORT_JSON), report.to_json())?;
    fs::write(out.join(REPORT_TXT), report.to_string())?;
    let mut inputs: Vec<(&str, &Path)> = vec![("input", input)];
    if let Some(r) = reference {
        inputs.push(("reference", r));
    }
    record(out, "evaluate", cfg, &inputs)?;
    Ok(report)
}

fn score(cfg: &RunConfig, input: &Path, reference: Option<&Path>) -> Result<MetricReport> {
    let den = read_dataset(input)?;
    let refs = match reference {
        None => None,
        Some(r) => {
            let all = read_dataset(r)?;
            let paired = den
                .iter()
                .map(|d| {
                    all.iter()
                        .find(|a| a.record.id == d.record.id)
                        .cloned()
                        .ok_or_else(|| usage(format!("no reference image with id {} in {}", d.record.id, r.display())))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(tagged(&paired))
        }
    };
    Ok(evaluate_suite(&tagged(&den), refs.as_deref(), &cfg.metrics)?)
}

/// The four ablation variants, from plain CycleGAN to the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    #[serde(rename = "CycleGAN")]
    CycleGan,
    #[serde(rename = "CycleGAN+DA")]
    Da,
    #[serde(rename = "CycleGAN+DA+WS")]
    DaWs,
    #[serde(rename = "PDA-Net")]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::CycleGan, Variant::Da, Variant::DaWs, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::CycleGan => "CycleGAN",
            Variant::Da => "CycleGAN+DA",
            Variant::DaWs => "CycleGAN+DA+WS",
            Variant::Full => "PDA-Net",
        }
    }

    fn dir(self) -> &'static str {
        match self {
            Variant::CycleGan => "cyclegan",
            Variant::Da => "cyclegan_da",
            Variant::DaWs => "cyclegan_da_ws",
            Variant::Full => "pdanet",
        }
    }

    /// Loss-weight zeros plus the sharing switch on top of `train`.
    pub fn apply(self, train: &TrainConfig) -> TrainConfig {
        let mut t = train.clone();
        match self {
            Variant::CycleGan => {
                t.weights.lambda_da = 0.0;
                t.weights.lambda_fa = 0.0;
                t.share_up = false;
            }
            Variant::Da => {
                t.weights.lambda_fa = 0.0;
                t.share_up = false;
            }
            Variant::DaWs => {
                t.weights.lambda_fa = 0.0;
                t.share_up = true;
            }
            Variant::Full => t.share_up = true,
        }
        t
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// Generator applied to the experimental test set.
    pub exp_generator: String,
    /// Simulated blurry test set through G_D, against the clean references.
    pub simulated: Summary,
    /// Experimental test set, no-reference scores.
    pub experimental: Summary,
}

#[derive(Clone, Debug, Serialize)]
pub struct Ablation {
    /// Scores of the undenoised test inputs, for comparison.
    pub inputs_simulated: Summary,
    pub inputs_experimental: Summary,
    pub rows: Vec<AblationRow>,
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

impl Ablation {
    pub fn table(&self) -> String {
        let mut s = format!("{:<16}{:>12}{:>12}{:>12}{:>12}{:>12}\n", "variant", "MSE", "PSNR", "SSIM", "BRISQUE", "PIQE");
        let line = |s: &mut String, name: &str, a: &Summary, b: &Summary| {
            let cells = [a.mse, a.psnr, a.ssim, b.brisque, b.piqe].map(fmt_cell);
            let _ = writeln!(s, "{name:<16}{:>12}{:>12}{:>12}{:>12}{:>12}", cells[0], cells[1], cells[2], cells[3], cells[4]);
        };
        line(&mut s, "(inputs)", &self.inputs_simulated, &self.inputs_experimental);
        for r in &self.rows {
            line(&mut s, r.variant.name(), &r.simulated, &r.experimental);
        }
        s
    }
}

/// Prepares data once, then trains, denoises and scores each variant.
pub fn ablate(cfg: &RunConfig, out: &Path) -> Result<Ablation> {
    let data = prepare(cfg, &out.join("data"))?;
    let test_only = |src: &Path, dst: &Path| -> Result<()> {
        let entries = select(&read_dataset(src)?, None, Some(Split::Test));
        write_dataset(dst, &entries, false)
    };
    let inputs_dir = out.join("inputs");
    test_only(&data.blurry, &inputs_dir.join("sim"))?;
    test_only(&data.exp, &inputs_dir.join("exp"))?;
    let inputs_simulated = score(cfg, &inputs_dir.join("sim"), Some(&data.clean))?.summary;
    let inputs_experimental = score(cfg, &inputs_dir.join("exp"), None)?.summary;
    let mut rows = Vec::new();
    for v in Variant::ALL {
        log::info!("ablation variant {}", v.name());
        let vcfg = RunConfig { train: v.apply(&cfg.train), ..cfg.clone() };
        let dir = out.join(v.dir());
        let state = train(&vcfg, &data.clean, &data.blurry, Some(&data.exp), &dir.join("train"), false)?;
        let ck = dir.join("train").join(CHECKPOINT_DIR);
        denoise(&vcfg, &ck, &data.blurry, &dir.join("sim"), Which::Gd, Some(Split::Test))?;
        let which = if state.model.g_da.is_some() { Which::Gda } else { Which::Gd };
        denoise(&vcfg, &ck, &data.exp, &dir.join("exp"), which, Some(Split::Test))?;
        let simulated = evaluate(&vcfg, &dir.join("sim"), Some(&data.clean), &dir.join("eval_sim"))?.summary;
        let experimental = evaluate(&vcfg, &dir.join("exp"), None, &dir.join("eval_exp"))?.summary;
        rows.push(AblationRow { variant: v, exp_generator: which.to_string(), simulated, experimental });
    }
    let ablation = Ablation { inputs_simulated, inputs_experimental, rows };
    fs::write(out.join(ABLATION_JSON), serde_json::to_string_pretty(&ablation)?)?;
    fs::write(out.join(ABLATION_TXT), ablation.table())?;
    record(out, "ablate", cfg, &[])?;
    Ok(ablation)
}
