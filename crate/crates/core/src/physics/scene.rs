//! Random impurity scenes and the clean simulated image set.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::greens::SurfaceModel;
use super::ldos::{ldos_map, LdosMap, RasterSpec};
use super::tmatrix::ImpuritySet;
use crate::error::{CoreError, Result};
use crate::field::ScalarField2D;
use crate::rng::{derive_seed, rng_for, stream_id};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub grid: RasterSpec,
    /// Inclusive range of impurities per scene.
    pub impurity_count: (usize, usize),
    /// Inclusive range of |v| in eV nm^2; the sign is drawn uniformly.
    pub strength_range: (f64, f64),
    /// Short-distance cutoff of the on-site propagator, nm.
    pub cutoff_nm: f64,
    pub model: SurfaceModel,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            grid: RasterSpec::square(256, 20.0),
            impurity_count: (3, 12),
            strength_range: (1.0, 4.0),
            cutoff_nm: 0.25,
            model: SurfaceModel::default(),
        }
    }
}

impl SceneConfig {
    /// 64 x 64 pixels over 10 nm (0.156 nm per pixel) with 2-6 impurities.
    pub fn desk() -> Self {
        SceneConfig { grid: RasterSpec::square(64, 10.0), impurity_count: (2, 6), ..SceneConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.model.validate()?;
        let (lo, hi) = self.impurity_count;
        if lo > hi {
            return Err(CoreError::Config(format!("physics.impurity_count: min {lo} exceeds max {hi}")));
        }
        let (a, b) = self.strength_range;
        if !(a > 0.0 && b >= a && b.is_finite()) {
            return Err(CoreError::Config(format!("physics.strength_range must satisfy 0 < min <= max, got ({a}, {b})")));
        }
        if !(self.cutoff_nm > 0.0) {
            return Err(CoreError::Config(format!("physics.cutoff_nm must be > 0, got {}", self.cutoff_nm)));
        }
        Ok(())
    }
}

/// Draw one scene. Positions are uniform over the field of view.
pub fn sample_scene<R: Rng>(config: &SceneConfig, rng: &mut R) -> ImpuritySet {
    let (lo, hi) = config.impurity_count;
    let n = rng.random_range(lo..=hi);
    let e = config.grid.extent;
    let (smin, smax) = config.strength_range;
    let mut positions = Vec::with_capacity(n);
    let mut strengths = Vec::with_capacity(n);
    for _ in 0..n {
        positions.push((e.x0 + rng.random::<f64>() * e.width_nm, e.y0 + rng.random::<f64>() * e.height_nm));
        let mag = if smax > smin { rng.random_range(smin..=smax) } else { smin };
        strengths.push(if rng.random::<bool>() { mag } else { -mag });
    }
    ImpuritySet { positions, strengths }
}

/// Everything needed to regenerate one image bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub master_seed: u64,
    /// Attempt index the scene was drawn from (differs from the image index after a skipped solve).
    pub attempt: u64,
    pub scene_seed: u64,
    pub impurities: ImpuritySet,
    pub model: SurfaceModel,
    pub cutoff_nm: f64,
    pub grid: RasterSpec,
    /// LDOS range before clipping/normalisation, eV^-1 nm^-2.
    pub ldos_min: f64,
    pub ldos_max: f64,
}

#[derive(Clone, Debug)]
pub struct SimulatedImage {
    /// Normalised to [0, 1].
    pub image: ScalarField2D<f64>,
    pub meta: SceneMetadata,
}

/// Clip at zero, then min-max normalise to [0, 1]. A flat map becomes 0.5 everywhere.
pub fn ldos_to_image(ldos: &LdosMap) -> ScalarField2D<f64> {
    let floor = ldos.min.max(0.0);
    let top = ldos.max.max(0.0);
    let span = top - floor;
    if span <= f64::EPSILON * top.abs().max(1.0) {
        return ldos.field.map(|_| 0.5);
    }
    ldos.field.map(|v| (v.max(0.0) - floor) / span)
}

fn simulate_attempt(config: &SceneConfig, seed: u64, attempt: u64) -> Result<SimulatedImage> {
    let scene_seed = derive_seed(seed, stream_id("scene"), attempt);
    let mut rng = rng_for(seed, "scene", attempt);
    let imps = sample_scene(config, &mut rng);
    let ldos = ldos_map(&config.grid, &imps, &config.model, config.cutoff_nm)?;
    let image = ldos_to_image(&ldos);
    Ok(SimulatedImage {
        image,
        meta: SceneMetadata {
            master_seed: seed,
            attempt,
            scene_seed,
            impurities: imps,
            model: config.model,
            cutoff_nm: config.cutoff_nm,
            grid: config.grid,
            ldos_min: ldos.min,
            ldos_max: ldos.max,
        },
    })
}

/// `count` clean images, deterministic in `seed` regardless of thread scheduling.
///
/// Scenes whose scattering problem is singular are skipped and logged; later attempts top the
/// set back up to `count`.
pub fn generate_clear_dataset(count: usize, config: &SceneConfig, seed: u64) -> Result<Vec<SimulatedImage>> {
    if count == 0 {
        return Err(CoreError::Validation("count must be >= 1".into()));
    }
    config.validate()?;
    let mut out: Vec<SimulatedImage> = Vec::with_capacity(count);
    let mut next_attempt = 0u64;
    while out.len() < count {
        let need = (count - out.len()) as u64;
        let batch: Vec<(u64, Result<SimulatedImage>)> = (next_attempt..next_attempt + need)
            .into_par_iter()
            .map(|a| (a, simulate_attempt(config, seed, a)))
            .collect();
        next_attempt += need;
        for (attempt, res) in batch {
            match res {
                Ok(img) => out.push(img),
                Err(e @ CoreError::SingularMatrix { .. }) => log::warn!("skipping scene attempt {attempt}: {e}"),
                Err(e) => return Err(e),
            }
        }
        if next_attempt > 100 * count as u64 + 100 {
            return Err(CoreError::Numeric("too many singular scenes; check physics.strength_range".into()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SceneConfig {
        SceneConfig { grid: RasterSpec::square(16, 10.0), ..SceneConfig::default() }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_clear_dataset(2, &tiny(), 7).unwrap();
        let b = generate_clear_dataset(2, &tiny(), 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image.values(), y.image.values());
            assert_eq!(x.meta, y.meta);
        }
        let c = generate_clear_dataset(2, &tiny(), 8).unwrap();
        assert_ne!(a[0].image.values(), c[0].image.values());
    }

    #[test]
    fn images_are_normalised_and_scenes_in_range() {
        let cfg = tiny();
        for img in generate_clear_dataset(12, &cfg, 3).unwrap() {
            assert!(img.image.values().iter().all(|v| (0.0..=1.0).contains(v)));
            let n = img.meta.impurities.len();
            assert!((3..=12).contains(&n));
            for &v in &img.meta.impurities.strengths {
                assert!((1.0..=4.0).contains(&v.abs()));
            }
            img.meta.impurities.validate_within(&cfg.grid.extent).unwrap();
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = tiny();
        cfg.impurity_count = (5, 2);
        assert!(generate_clear_dataset(1, &cfg, 0).is_err());
        assert!(generate_clear_dataset(0, &tiny(), 0).is_err());
    }
}
