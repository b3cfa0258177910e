//! Domain-tagged image sets, augmentation, normalisation and unpaired batch sampling.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::field::ScalarField2D;
use crate::rng::{derive_seed, rng_for, stream_id};
use crate::scalar::Scalar;

/// The three image domains of the unpaired problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DomainTag {
    #[serde(rename = "SIM_CLEAR")]
    SimClear,
    #[serde(rename = "SIM_BLUR")]
    SimBlur,
    #[serde(rename = "EXP")]
    Exp,
}

impl DomainTag {
    pub const ALL: [DomainTag; 3] = [DomainTag::SimClear, DomainTag::SimBlur, DomainTag::Exp];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::SimClear => "SIM_CLEAR",
            DomainTag::SimBlur => "SIM_BLUR",
            DomainTag::Exp => "EXP",
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainTag {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SIM_CLEAR" => Ok(DomainTag::SimClear),
            "SIM_BLUR" => Ok(DomainTag::SimBlur),
            "EXP" => Ok(DomainTag::Exp),
            _ => Err(CoreError::Validation(format!("unknown domain {s:?} (expected SIM_CLEAR, SIM_BLUR or EXP)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One image with a stable identifier.
#[derive(Clone, Debug)]
pub struct TaggedImage<T> {
    pub id: String,
    pub image: ScalarField2D<T>,
}

/// All images of one domain and split. Images share a shape.
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub domain: DomainTag,
    pub items: Vec<TaggedImage<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(domain: DomainTag, items: Vec<TaggedImage<T>>) -> Result<Self> {
        if let Some(first) = items.first() {
            let shape = first.image.shape();
            if let Some(bad) = items.iter().find(|t| t.image.shape() != shape) {
                return Err(CoreError::Validation(format!(
                    "{domain} image {} is {:?}, expected {shape:?}",
                    bad.id,
                    bad.image.shape()
                )));
            }
        }
        Ok(Dataset { domain, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.items.first().map(|t| t.image.shape())
    }
}

/// Augmentation recipe applied per source image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSpec {
    /// Include horizontal/vertical mirrors.
    pub flips: bool,
    /// Include 90/180/270 degree rotations.
    pub rotations: bool,
    /// Square crop side in pixels; `None` keeps the full image.
    pub crop: Option<usize>,
    /// Outputs per source image.
    pub per_image: usize,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec { flips: true, rotations: true, crop: None, per_image: 8 }
    }
}

impl AugmentSpec {
    pub fn identity() -> Self {
        AugmentSpec { flips: false, rotations: false, crop: None, per_image: 1 }
    }

    /// Dihedral elements enabled by the flags, as (quarter turns, mirror) pairs.
    fn transforms(&self) -> Vec<(u8, bool)> {
        let turns: &[u8] = if self.rotations { &[0, 1, 2, 3] } else { &[0] };
        let mirrors: &[bool] = if self.flips { &[false, true] } else { &[false] };
        mirrors.iter().flat_map(|&m| turns.iter().map(move |&t| (t, m))).collect()
    }
}

/// Expand one image into `spec.per_image` variants.
///
/// Output `k` uses dihedral element `k mod n` (identity first), followed by a crop whose
/// offset is drawn from `(seed, k)`. With every option off this returns the input once per
/// requested copy.
pub fn augment<T: Scalar>(img: &ScalarField2D<T>, spec: &AugmentSpec, seed: u64) -> Result<Vec<ScalarField2D<T>>> {
    if spec.per_image == 0 {
        return Err(CoreError::Validation("data.augment.per_image must be >= 1".into()));
    }
    if let Some(c) = spec.crop {
        if c < 2 || c > img.height() || c > img.width() {
            return Err(CoreError::Validation(format!(
                "crop size {c} does not fit a {}x{} image",
                img.height(),
                img.width()
            )));
        }
    }
    let transforms = spec.transforms();
    let mut out = Vec::with_capacity(spec.per_image);
    for k in 0..spec.per_image {
        let (turns, mirror) = transforms[k % transforms.len()];
        let mut v = if mirror { img.flip_horizontal() } else { img.clone() };
        for _ in 0..turns {
            v = v.rotate90();
        }
        if let Some(c) = spec.crop {
            let mut rng = rng_for(seed, "augment-crop", k as u64);
            let top = rng.random_range(0..=v.height() - c);
            let left = rng.random_range(0..=v.width() - c);
            v = v.crop(top, left, c, c)?;
        }
        out.push(v);
    }
    Ok(out)
}

/// Augment every source; ids become `{source}_a{k}`.
pub fn augment_set<T: Scalar>(sources: &[TaggedImage<T>], spec: &AugmentSpec, seed: u64) -> Result<Vec<TaggedImage<T>>> {
    let mut out = Vec::with_capacity(sources.len() * spec.per_image);
    for (i, src) in sources.iter().enumerate() {
        let s = derive_seed(seed, stream_id("augment"), i as u64);
        for (k, image) in augment(&src.image, spec, s)?.into_iter().enumerate() {
            out.push(TaggedImage { id: format!("{}_a{k:02}", src.id), image });
        }
    }
    Ok(out)
}

/// `[0, 1] -> [-1, 1]`.
pub fn normalize<T: Scalar>(img: &ScalarField2D<T>) -> Result<Vec<T>> {
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(img.values().len());
    for (i, &v) in img.values().iter().enumerate() {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(CoreError::Validation(format!("pixel {i} = {v} lies outside [0, 1]")));
        }
        out.push(v * two - T::one());
    }
    Ok(out)
}

/// Exact inverse of [`normalize`], clamped to [0, 1] for values a network pushed past the ends.
pub fn denormalize<T: Scalar>(values: &[T], like: &ScalarField2D<T>) -> Result<ScalarField2D<T>> {
    let half = T::lit(0.5);
    let v = values.iter().map(|&t| ((t + T::one()) * half).max(T::zero()).min(T::one())).collect();
    ScalarField2D::new(like.height(), like.width(), v, like.extent())
}

/// `B x 1 x H x W` tensor in [-1, 1] with its domain and source ids.
#[derive(Clone, Debug)]
pub struct ImageBatch<T> {
    pub data: Vec<T>,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub domain: DomainTag,
    pub ids: Vec<String>,
}

impl<T: Scalar> ImageBatch<T> {
    pub fn from_images(domain: DomainTag, items: &[&TaggedImage<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| CoreError::Validation("empty batch".into()))?;
        let (height, width) = first.image.shape();
        let mut data = Vec::with_capacity(items.len() * height * width);
        for t in items {
            if t.image.shape() != (height, width) {
                return Err(CoreError::Validation(format!("batch member {} has shape {:?}", t.id, t.image.shape())));
            }
            data.extend(normalize(&t.image)?);
        }
        Ok(ImageBatch { data, batch: items.len(), height, width, domain, ids: items.iter().map(|t| t.id.clone()).collect() })
    }

    /// Sample `i` as a [0, 1] raster with the geometry of `like`.
    pub fn image(&self, i: usize, like: &ScalarField2D<T>) -> Result<ScalarField2D<T>> {
        let n = self.height * self.width;
        denormalize(&self.data[i * n..(i + 1) * n], like)
    }
}

/// Independent per-domain shuffles, one permutation per epoch.
///
/// The permutation for epoch `e` is drawn from `(seed, domain, e)`, so co-indexed batches of two
/// domains never share an ordering and resuming at any epoch reproduces the same stream.
pub struct UnpairedLoader<'a, T> {
    data: &'a Dataset<T>,
    batch: usize,
    seed: u64,
}

impl<'a, T: Scalar> UnpairedLoader<'a, T> {
    pub fn new(data: &'a Dataset<T>, batch: usize, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(CoreError::Config(format!("{} dataset is empty", data.domain)));
        }
        if batch == 0 {
            return Err(CoreError::Config("train.batch must be >= 1".into()));
        }
        Ok(UnpairedLoader { data, batch, seed })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.batch)
    }

    pub fn permutation(&self, epoch: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.data.len()).collect();
        let stream = stream_id(self.data.domain.as_str());
        let mut rng = rng_for(derive_seed(self.seed, stream, epoch), "loader", 0);
        idx.shuffle(&mut rng);
        idx
    }

    /// Batch `b` of epoch `epoch`. The last batch is short when the batch size does not divide N.
    pub fn batch(&self, epoch: u64, b: usize) -> Result<ImageBatch<T>> {
        let perm = self.permutation(epoch);
        self.batch_from(&perm, b)
    }

    fn batch_from(&self, perm: &[usize], b: usize) -> Result<ImageBatch<T>> {
        let start = b * self.batch;
        if start >= perm.len() {
            return Err(CoreError::Validation(format!("batch {b} out of range")));
        }
        let members: Vec<&TaggedImage<T>> = perm[start..(start + self.batch).min(perm.len())].iter().map(|&i| &self.data.items[i]).collect();
        ImageBatch::from_images(self.data.domain, &members)
    }

    pub fn epoch(&self, epoch: u64) -> impl Iterator<Item = Result<ImageBatch<T>>> + '_ {
        let perm = self.permutation(epoch);
        (0..self.batches_per_epoch()).map(move |b| self.batch_from(&perm, b))
    }
}
