//! Corpus evaluation: full-reference columns when references are given, no-reference otherwise.

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use super::brisque::{brisque_features, BrisqueModel};
use super::piqe::{piqe, PiqeConfig};
use super::{mse, psnr, quantize, ssim, SsimConfig};
use crate::data::TaggedImage;
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub ssim: SsimConfig,
    pub piqe: PiqeConfig,
    /// BRISQUE model file; the bundled LIVE model when absent.
    pub brisque_model: Option<PathBuf>,
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        self.ssim.validate()?;
        self.piqe.validate()
    }
}

/// Non-finite values serialize as strings ("inf", "-inf", "nan"); JSON has no literal for them.
fn finite_or_tag<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) if x.is_nan() => s.serialize_str("nan"),
        Some(x) if *x > 0.0 => s.serialize_str("inf"),
        Some(_) => s.serialize_str("-inf"),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "finite_or_tag")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brisque: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub piqe: Option<f64>,
    /// Present only when no BRISQUE model could be loaded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brisque_features: Option<Vec<f64>>,
}

/// Arithmetic means over the set.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "finite_or_tag")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brisque: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub piqe: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    FullReference,
    NoReference,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricReport {
    pub kind: ReportKind,
    pub summary: Summary,
    pub images: Vec<ImageMetrics>,
    pub config: MetricsConfig,
    /// Why BRISQUE scores are missing, if they are.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brisque_error: Option<String>,
}

impl MetricReport {
    pub fn columns(&self) -> &'static [&'static str] {
        match self.kind {
            ReportKind::FullReference => &["MSE", "PSNR", "SSIM"],
            ReportKind::NoReference => &["BRISQUE", "PIQE"],
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    if v.is_empty() {
        return None;
    }
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_infinite() => "inf".into(),
        Some(x) => format!("{x:.4}"),
        None => "-".into(),
    }
}

impl Summary {
    fn row(&self, kind: ReportKind) -> Vec<String> {
        match kind {
            ReportKind::FullReference => vec![fmt_value(self.mse), fmt_value(self.psnr), fmt_value(self.ssim)],
            ReportKind::NoReference => vec![fmt_value(self.brisque), fmt_value(self.piqe)],
        }
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<24}", "image")?;
        for c in self.columns() {
            write!(f, "{c:>12}")?;
        }
        writeln!(f)?;
        for m in &self.images {
            let s = Summary { count: 1, mse: m.mse, psnr: m.psnr, ssim: m.ssim, brisque: m.brisque, piqe: m.piqe };
            write!(f, "{:<24}", m.id)?;
            for v in s.row(self.kind) {
                write!(f, "{v:>12}")?;
            }
            writeln!(f)?;
        }
        write!(f, "{:<24}", format!("mean (n={})", self.summary.count))?;
        for v in self.summary.row(self.kind) {
            write!(f, "{v:>12}")?;
        }
        writeln!(f)?;
        if let Some(e) = &self.brisque_error {
            writeln!(f, "BRISQUE unavailable: {e}")?;
        }
        Ok(())
    }
}

/// Score a denoised set. With references, images are paired by position and scored with
/// MSE/PSNR/SSIM; without, each image gets BRISQUE and PIQE.
pub fn evaluate_suite<T: Scalar>(
    denoised: &[TaggedImage<T>],
    references: Option<&[TaggedImage<T>]>,
    cfg: &MetricsConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    if denoised.is_empty() {
        return Err(CoreError::Validation("nothing to evaluate".into()));
    }
    let mut brisque_error = None;
    let (kind, images) = match references {
        Some(refs) => {
            if refs.len() != denoised.len() {
                return Err(CoreError::Validation(format!("{} denoised images but {} references", denoised.len(), refs.len())));
            }
            let images = denoised
                .par_iter()
                .zip(refs)
                .map(|(d, r)| {
                    let (a, b) = (quantize(&d.image), quantize(&r.image));
                    let e = mse(&a, &b)?;
                    Ok(ImageMetrics { id: d.id.clone(), mse: Some(e), psnr: Some(psnr(e)?), ssim: Some(ssim(&a, &b, &cfg.ssim)?), ..Default::default() })
                })
                .collect::<Result<Vec<_>>>()?;
            (ReportKind::FullReference, images)
        }
        None => {
            let model = match &cfg.brisque_model {
                None => Some(BrisqueModel::bundled()),
                Some(p) => match BrisqueModel::load(p) {
                    Ok(m) => Some(m),
                    Err(e) => {
                        log::warn!("{e}; reporting BRISQUE features only");
                        brisque_error = Some(e.to_string());
                        None
                    }
                },
            };
            let images = denoised
                .par_iter()
                .map(|d| {
                    let features = brisque_features(&d.image)?;
                    let (score, features) = match &model {
                        Some(m) => (Some(m.predict(&features)), None),
                        None => (None, Some(features)),
                    };
                    Ok(ImageMetrics {
                        id: d.id.clone(),
                        brisque: score,
                        piqe: Some(piqe(&d.image, &cfg.piqe)?),
                        brisque_features: features,
                        ..Default::default()
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (ReportKind::NoReference, images)
        }
    };
    let summary = Summary {
        count: images.len(),
        mse: mean(images.iter().map(|m| m.mse)),
        psnr: mean(images.iter().map(|m| m.psnr)),
        ssim: mean(images.iter().map(|m| m.ssim)),
        brisque: mean(images.iter().map(|m| m.brisque)),
        piqe: mean(images.iter().map(|m| m.piqe)),
    };
    Ok(MetricReport { kind, summary, images, config: cfg.clone(), brisque_error })
}
