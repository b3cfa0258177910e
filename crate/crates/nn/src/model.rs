//! The full set of networks trained together, over one parameter store.

use std::fmt;
use std::str::FromStr;

use pdanet_core::data::{denormalize, normalize};
use pdanet_core::{Scalar, ScalarField2D};
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::networks::{
    build_feature_classifier, build_generator_with, build_patchgan, feature_channels, Discriminator, Generator,
    RESIDUAL_BLOCKS,
};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub channels_base: usize,
    pub residual_blocks: usize,
    /// Build the experimental-domain generator and its image discriminator.
    pub domain_adaptation: bool,
    /// Bind the experimental generator's decoder to the simulated one.
    pub share_up: bool,
    /// Build the feature-domain classifier.
    pub feature_alignment: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels_base: 64,
            residual_blocks: RESIDUAL_BLOCKS,
            domain_adaptation: true,
            share_up: true,
            feature_alignment: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels_base < 8 {
            return Err(NnError::Config(format!("train.channels_base must be >= 8, got {}", self.channels_base)));
        }
        if self.feature_alignment && !self.domain_adaptation {
            return Err(NnError::Config("feature alignment needs the domain-adaptation generator".into()));
        }
        Ok(())
    }

    /// Whether the experimental-domain generator exists at all.
    pub fn has_exp_generator(&self) -> bool {
        self.domain_adaptation || self.feature_alignment
    }
}

/// Which trained denoiser to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    #[serde(rename = "GD")]
    Gd,
    #[serde(rename = "GDA")]
    Gda,
}

impl fmt::Display for Which {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Which::Gd => "GD",
            Which::Gda => "GDA",
        })
    }
}

impl FromStr for Which {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GD" | "G_D" => Ok(Which::Gd),
            "GDA" | "G_DA" => Ok(Which::Gda),
            _ => Err(NnError::Validation(format!("unknown generator {s:?}, expected GD or GDA"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PdaNet<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    /// Simulated blurry -> clean.
    pub g_d: Generator,
    /// Simulated clean -> blurry.
    pub g_b: Generator,
    /// Experimental -> clean.
    pub g_da: Option<Generator>,
    pub d_d: Discriminator,
    pub d_b: Discriminator,
    pub d_da: Option<Discriminator>,
    pub d_fa: Option<Discriminator>,
}

impl<T: Scalar> PdaNet<T> {
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(seed);
        let (c, blocks) = (config.channels_base, config.residual_blocks);
        let g_d = build_generator_with(&mut store, "G_D", c, blocks, None)?;
        let g_b = build_generator_with(&mut store, "G_B", c, blocks, None)?;
        let g_da = if config.has_exp_generator() {
            let shared = config.share_up.then(|| g_d.shared_up());
            Some(build_generator_with(&mut store, "G_DA", c, blocks, shared.as_ref())?)
        } else {
            None
        };
        let d_d = build_patchgan(&mut store, "D_D", c)?;
        let d_b = build_patchgan(&mut store, "D_B", c)?;
        let d_da = if config.domain_adaptation { Some(build_patchgan(&mut store, "D_DA", c)?) } else { None };
        let d_fa = if config.feature_alignment {
            Some(build_feature_classifier(&mut store, "D_FA", feature_channels(c), 2 * c)?)
        } else {
            None
        };
        Ok(PdaNet { config: config.clone(), store, g_d, g_b, g_da, d_d, d_b, d_da, d_fa })
    }

    pub fn generators(&self) -> Vec<&Generator> {
        [Some(&self.g_d), Some(&self.g_b), self.g_da.as_ref()].into_iter().flatten().collect()
    }

    pub fn discriminators(&self) -> Vec<&Discriminator> {
        [Some(&self.d_d), Some(&self.d_b), self.d_da.as_ref(), self.d_fa.as_ref()].into_iter().flatten().collect()
    }

    /// Every generator parameter, each shared tensor listed once.
    pub fn generator_params(&self) -> Vec<ParamId> {
        dedup(self.generators().iter().flat_map(|g| g.params()).collect())
    }

    pub fn discriminator_params(&self) -> Vec<ParamId> {
        dedup(self.discriminators().iter().flat_map(|d| d.params()).collect())
    }

    /// `(alias, target)` prefixes of decoders bound to another generator's decoder.
    pub fn aliases(&self) -> Vec<(String, String)> {
        self.generators()
            .into_iter()
            .filter(|g| g.up_owner != g.name)
            .map(|g| (format!("{}/up", g.name), format!("{}/up", g.up_owner)))
            .collect()
    }

    /// Largest absolute difference between the two simulated/experimental decoders, if both exist.
    pub fn up_difference(&self) -> Option<f64> {
        let g_da = self.g_da.as_ref()?;
        let mut worst = 0.0f64;
        for (a, b) in self.g_d.up_params().into_iter().zip(g_da.up_params()) {
            for (x, y) in self.store.value(a).iter().zip(self.store.value(b)) {
                worst = worst.max((*x - *y).abs().as_f64());
            }
        }
        Some(worst)
    }

    pub fn denoiser(&self, which: Which) -> Result<&Generator> {
        match which {
            Which::Gd => Ok(&self.g_d),
            Which::Gda => self
                .g_da
                .as_ref()
                .ok_or_else(|| NnError::Validation("this model was trained without the experimental generator".into())),
        }
    }

    /// Runs a trained generator over [0, 1] images and maps the output back to [0, 1].
    pub fn denoise(&self, which: Which, images: &[ScalarField2D<T>]) -> Result<Vec<ScalarField2D<T>>> {
        let g = self.denoiser(which)?;
        images
            .iter()
            .map(|img| {
                let (h, w) = img.shape();
                let x = Tensor::from_vec(1, 1, h, w, normalize(img)?)?;
                let out = g.forward(&self.store, &x, false)?.output;
                Ok(denormalize(&out.data, img)?)
            })
            .collect()
    }
}

fn dedup(mut ids: Vec<ParamId>) -> Vec<ParamId> {
    ids.sort();
    ids.dedup();
    ids
}
