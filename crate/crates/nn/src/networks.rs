//! Encoder/ResNet/decoder generators, PatchGAN discriminators and the feature-domain classifier.

use pdanet_core::Scalar;

use crate::error::{NnError, Result};
use crate::layers::{conv, conv_t, Op, Seq, Tape};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub const RESIDUAL_BLOCKS: usize = 9;
pub const LEAKY_SLOPE: f64 = 0.2;
/// Spatial reduction of the feature map relative to the input.
pub const FEATURE_STRIDE: usize = 4;

/// Feature channels produced by a generator encoder with this base width.
pub fn feature_channels(channels_base: usize) -> usize {
    4 * channels_base
}

/// The decoder parameter set, bound into every generator built with it.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedUpHandle {
    pub owner: String,
    pub channels_base: usize,
    up: Seq,
}

impl SharedUpHandle {
    pub fn params(&self) -> Vec<ParamId> {
        self.up.params()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub name: String,
    pub channels_base: usize,
    pub down: Seq,
    pub res: Seq,
    pub up: Seq,
    /// Name of the generator whose decoder this one reuses.
    pub up_owner: String,
}

/// Result of a generator forward pass: the encoder features and the output image.
#[derive(Clone, Debug)]
pub struct GenPass<T> {
    pub features: Tensor<T>,
    pub output: Tensor<T>,
    tapes: [Tape<T>; 3],
}

pub fn build_generator<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    channels_base: usize,
    shared_up: Option<&SharedUpHandle>,
) -> Result<Generator> {
    build_generator_with(store, name, channels_base, RESIDUAL_BLOCKS, shared_up)
}

/// [`build_generator`] with a configurable number of residual blocks.
pub fn build_generator_with<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    channels_base: usize,
    blocks: usize,
    shared_up: Option<&SharedUpHandle>,
) -> Result<Generator> {
    if channels_base < 8 {
        return Err(NnError::Config(format!("channels_base must be >= 8, got {channels_base}")));
    }
    if let Some(h) = shared_up {
        if h.channels_base != channels_base {
            return Err(NnError::Config(format!(
                "{name}: shared decoder of {} expects channels_base {}, got {channels_base}",
                h.owner, h.channels_base
            )));
        }
    }
    let c = channels_base;
    let down = Seq::new(vec![
        Op::ReflectPad(3),
        conv(store, &format!("{name}/down/1"), 1, c, 7, 1, 0)?,
        Op::InstanceNorm,
        Op::Relu,
        conv(store, &format!("{name}/down/4"), c, 2 * c, 3, 2, 1)?,
        Op::InstanceNorm,
        Op::Relu,
        conv(store, &format!("{name}/down/7"), 2 * c, 4 * c, 3, 2, 1)?,
        Op::InstanceNorm,
        Op::Relu,
    ]);
    let f = feature_channels(c);
    let res = Seq::new(
        (0..blocks)
            .map(|b| {
                Ok(Op::Residual(Seq::new(vec![
                    Op::ReflectPad(1),
                    conv(store, &format!("{name}/res/{b}/1"), f, f, 3, 1, 0)?,
                    Op::InstanceNorm,
                    Op::Relu,
                    Op::ReflectPad(1),
                    conv(store, &format!("{name}/res/{b}/5"), f, f, 3, 1, 0)?,
                    Op::InstanceNorm,
                ])))
            })
            .collect::<Result<_>>()?,
    );
    let (up, up_owner) = match shared_up {
        Some(h) => (h.up.clone(), h.owner.clone()),
        None => {
            let up = Seq::new(vec![
                conv_t(store, &format!("{name}/up/0"), f, 2 * c, 3, 2, 1, 1)?,
                Op::InstanceNorm,
                Op::Relu,
                conv_t(store, &format!("{name}/up/3"), 2 * c, c, 3, 2, 1, 1)?,
                Op::InstanceNorm,
                Op::Relu,
                Op::ReflectPad(3),
                conv(store, &format!("{name}/up/7"), c, 1, 7, 1, 0)?,
                Op::Tanh,
            ]);
            (up, name.to_string())
        }
    };
    Ok(Generator { name: name.to_string(), channels_base, down, res, up, up_owner })
}

/// Rejects inputs the encoder/decoder pair cannot map back to the same size.
pub fn check_image_shape<T: Scalar>(x: &Tensor<T>) -> Result<()> {
    if x.c != 1 || x.n == 0 {
        return Err(NnError::Validation(format!("expected a nonempty single-channel batch, got {:?}", x.shape())));
    }
    if x.h % FEATURE_STRIDE != 0 || x.w % FEATURE_STRIDE != 0 || x.h < 8 || x.w < 8 {
        return Err(NnError::Validation(format!(
            "image size {}x{} must be at least 8x8 and divisible by {FEATURE_STRIDE}",
            x.h, x.w
        )));
    }
    Ok(())
}

impl Generator {
    /// Handle to this generator's decoder for binding into another generator.
    pub fn shared_up(&self) -> SharedUpHandle {
        SharedUpHandle { owner: self.up_owner.clone(), channels_base: self.channels_base, up: self.up.clone() }
    }

    pub fn phi_params(&self) -> Vec<ParamId> {
        let mut p = self.down.params();
        p.extend(self.res.params());
        p
    }

    pub fn up_params(&self) -> Vec<ParamId> {
        self.up.params()
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.phi_params();
        p.extend(self.up_params());
        p
    }

    /// `phi(x)` only.
    pub fn encode<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        check_image_shape(x)?;
        let (d, _) = self.down.forward(store, x, false)?;
        Ok(self.res.forward(store, &d, false)?.0)
    }

    /// `(phi(x), up(phi(x)))`. Tapes are kept when `record` is set.
    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>, record: bool) -> Result<GenPass<T>> {
        check_image_shape(x)?;
        let (d, t0) = self.down.forward(store, x, record)?;
        let (features, t1) = self.res.forward(store, &d, record)?;
        let (output, t2) = self.up.forward(store, &features, record)?;
        Ok(GenPass { features, output, tapes: [t0, t1, t2] })
    }

    /// Back-propagates an output gradient, plus an optional feature gradient, through a
    /// recorded pass. Returns the input gradient when `need_input`.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        pass: &GenPass<T>,
        d_output: Tensor<T>,
        d_features: Option<&Tensor<T>>,
        grads: Option<&mut crate::params::Grads<T>>,
        need_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        let mut grads = grads;
        let mut df = self.up.backward(store, &pass.tapes[2], d_output, grads.as_deref_mut(), true)?.expect("requested");
        if let Some(extra) = d_features {
            if !extra.same_shape(&df) {
                return Err(NnError::Shape("feature gradient does not match the feature map".into()));
            }
            df.add_assign(extra);
        }
        let dd = self.res.backward(store, &pass.tapes[1], df, grads.as_deref_mut(), true)?.expect("requested");
        self.down.backward(store, &pass.tapes[0], dd, grads, need_input)
    }
}

/// Convolutional classifier emitting a logit map.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub name: String,
    pub in_channels: usize,
    pub net: Seq,
}

/// Recorded discriminator pass.
#[derive(Clone, Debug)]
pub struct DiscPass<T> {
    pub scores: Tensor<T>,
    tape: Tape<T>,
}

/// 70x70 PatchGAN: three stride-2 and two stride-1 4x4 convolutions.
pub fn build_patchgan<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels_base: usize) -> Result<Discriminator> {
    if channels_base == 0 {
        return Err(NnError::Config("discriminator width must be positive".into()));
    }
    let c = channels_base;
    let lr = Op::LeakyRelu(LEAKY_SLOPE);
    let net = Seq::new(vec![
        conv(store, &format!("{name}/0"), 1, c, 4, 2, 1)?,
        lr.clone(),
        conv(store, &format!("{name}/2"), c, 2 * c, 4, 2, 1)?,
        Op::InstanceNorm,
        lr.clone(),
        conv(store, &format!("{name}/5"), 2 * c, 4 * c, 4, 2, 1)?,
        Op::InstanceNorm,
        lr.clone(),
        conv(store, &format!("{name}/8"), 4 * c, 8 * c, 4, 1, 1)?,
        Op::InstanceNorm,
        lr,
        conv(store, &format!("{name}/11"), 8 * c, 1, 4, 1, 1)?,
    ]);
    Ok(Discriminator { name: name.to_string(), in_channels: 1, net })
}

/// Feature-domain classifier: three 3x3 stride-1 convolutions and a 1-channel score map.
pub fn build_feature_classifier<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    feature_channels: usize,
    width: usize,
) -> Result<Discriminator> {
    if feature_channels == 0 || width == 0 {
        return Err(NnError::Config("feature classifier channels must be positive".into()));
    }
    let lr = Op::LeakyRelu(LEAKY_SLOPE);
    let net = Seq::new(vec![
        conv(store, &format!("{name}/0"), feature_channels, width, 3, 1, 1)?,
        lr.clone(),
        conv(store, &format!("{name}/2"), width, width, 3, 1, 1)?,
        Op::InstanceNorm,
        lr.clone(),
        conv(store, &format!("{name}/5"), width, width, 3, 1, 1)?,
        Op::InstanceNorm,
        lr,
        conv(store, &format!("{name}/8"), width, 1, 3, 1, 1)?,
    ]);
    Ok(Discriminator { name: name.to_string(), in_channels: feature_channels, net })
}

impl Discriminator {
    pub fn params(&self) -> Vec<ParamId> {
        self.net.params()
    }

    pub fn forward<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>, record: bool) -> Result<DiscPass<T>> {
        if x.c != self.in_channels {
            return Err(NnError::Validation(format!("{} expects {} channels, got {}", self.name, self.in_channels, x.c)));
        }
        let (scores, tape) = self.net.forward(store, x, record)?;
        Ok(DiscPass { scores, tape })
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        pass: &DiscPass<T>,
        d_scores: Tensor<T>,
        grads: Option<&mut crate::params::Grads<T>>,
        need_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        self.net.backward(store, &pass.tape, d_scores, grads, need_input)
    }
}
