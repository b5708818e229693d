use serde::{Deserialize, Serialize};

use crate::env::{GridGeometry, Proprioception};
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// One dense layer over the flattened view.
    Dense,
    /// Two 5x5 conv + pool stages followed by a dense layer.
    Conv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderKind {
    /// One dense layer emitting every view at once.
    Dense,
    /// Dense seed map followed by two stride-2 transposed convolutions; the
    /// last one emits `N*M*C` feature maps, one per view channel.
    Deconv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticKind {
    /// Value from the belief and proprioception.
    Partial,
    /// Additionally sees the absolute pose and an encoding of the whole
    /// viewgrid (training-time only information).
    Full,
}

/// Layer sizes of the completion agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub view_code: usize,
    pub prop_code: usize,
    pub fuse: usize,
    pub hidden: usize,
    pub act_hidden: usize,
    pub critic_hidden: usize,
    pub conv_channels: [usize; 2],
    pub deconv_channels: [usize; 2],
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            encoder: EncoderKind::Dense,
            decoder: DecoderKind::Dense,
            view_code: 256,
            prop_code: 16,
            fuse: 256,
            hidden: 256,
            act_hidden: 128,
            critic_hidden: 128,
            conv_channels: [8, 16],
            deconv_channels: [32, 16],
        }
    }
}

impl ArchConfig {
    /// Conv encoder and deconv decoder.
    pub fn convolutional() -> Self {
        ArchConfig {
            encoder: EncoderKind::Conv,
            decoder: DecoderKind::Deconv,
            ..ArchConfig::default()
        }
    }

    /// Halved widths for the desk-scale profile on a single CPU core.
    pub fn desk() -> Self {
        ArchConfig {
            view_code: 128,
            fuse: 128,
            hidden: 128,
            act_hidden: 64,
            critic_hidden: 64,
            ..ArchConfig::default()
        }
    }

    /// A very small configuration for gradient checks and unit tests.
    pub fn tiny() -> Self {
        ArchConfig {
            encoder: EncoderKind::Dense,
            decoder: DecoderKind::Dense,
            view_code: 6,
            prop_code: 3,
            fuse: 5,
            hidden: 4,
            act_hidden: 5,
            critic_hidden: 4,
            conv_channels: [2, 2],
            deconv_channels: [2, 2],
        }
    }

    pub(crate) fn view_encoder(&self, g: &GridGeometry) -> Result<(Shape, Vec<LayerSpec>)> {
        let relu = LayerSpec::act(Activation::Relu);
        Ok(match self.encoder {
            EncoderKind::Dense => (
                Shape::Flat(g.view_len()),
                vec![LayerSpec::dense(self.view_code), relu],
            ),
            EncoderKind::Conv => {
                if g.view_h % 4 != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "conv encoder needs views divisible by 4, got {}",
                        g.view_h
                    )));
                }
                (
                    Shape::Spatial {
                        c: g.channels,
                        h: g.view_h,
                        w: g.view_w,
                    },
                    vec![
                        LayerSpec::conv(self.conv_channels[0]),
                        relu.clone(),
                        LayerSpec::Pool,
                        LayerSpec::conv(self.conv_channels[1]),
                        relu.clone(),
                        LayerSpec::Pool,
                        LayerSpec::dense(self.view_code),
                        relu,
                    ],
                )
            }
        })
    }

    pub(crate) fn prop_encoder(&self) -> (Shape, Vec<LayerSpec>) {
        (
            Shape::Flat(Proprioception::N_FEATURES),
            vec![LayerSpec::dense(self.prop_code), LayerSpec::act(Activation::Relu)],
        )
    }

    pub(crate) fn fuser(&self) -> (Shape, Vec<LayerSpec>) {
        (
            Shape::Flat(self.view_code + self.prop_code),
            vec![LayerSpec::dense(self.fuse), LayerSpec::act(Activation::Relu)],
        )
    }

    pub(crate) fn decoder(&self, g: &GridGeometry) -> Result<(Shape, Vec<LayerSpec>)> {
        let input = Shape::Flat(self.hidden);
        Ok(match self.decoder {
            DecoderKind::Dense => (
                input,
                vec![LayerSpec::dense(g.grid_len()), LayerSpec::act(Activation::Sigmoid)],
            ),
            DecoderKind::Deconv => {
                if g.view_h % 4 != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "deconv decoder needs views divisible by 4, got {}",
                        g.view_h
                    )));
                }
                let (h, w) = (g.view_h / 4, g.view_w / 4);
                let c0 = self.deconv_channels[0];
                (
                    input,
                    vec![
                        LayerSpec::dense(c0 * h * w),
                        LayerSpec::act(Activation::Relu),
                        LayerSpec::Reshape { c: c0, h, w },
                        LayerSpec::deconv(self.deconv_channels[1]),
                        LayerSpec::act(Activation::Relu),
                        LayerSpec::deconv(g.n_views() * g.channels),
                        LayerSpec::act(Activation::Sigmoid),
                    ],
                )
            }
        })
    }

    pub(crate) fn actor(&self, n_actions: usize) -> (Shape, Vec<LayerSpec>) {
        (
            Shape::Flat(self.hidden + Proprioception::N_FEATURES),
            vec![
                LayerSpec::dense(self.act_hidden),
                LayerSpec::act(Activation::Relu),
                LayerSpec::dense(n_actions),
            ],
        )
    }

    /// Number of extra critic features in full-observability mode: absolute
    /// azimuth plus the fused viewgrid code.
    pub(crate) fn full_critic_extra(&self) -> usize {
        1 + self.critic_hidden
    }

    pub(crate) fn critic_head(&self, kind: CriticKind) -> (Shape, Vec<LayerSpec>) {
        let extra = match kind {
            CriticKind::Partial => 0,
            CriticKind::Full => self.full_critic_extra(),
        };
        (
            Shape::Flat(self.hidden + Proprioception::N_FEATURES + extra),
            vec![
                LayerSpec::dense(self.critic_hidden),
                LayerSpec::act(Activation::Relu),
                LayerSpec::dense(1),
            ],
        )
    }

    /// Two dense layers fusing the per-view codes of the whole grid.
    pub(crate) fn critic_grid(&self, g: &GridGeometry) -> (Shape, Vec<LayerSpec>) {
        (
            Shape::Flat(g.n_views() * self.view_code),
            vec![
                LayerSpec::dense(self.critic_hidden),
                LayerSpec::act(Activation::Relu),
                LayerSpec::dense(self.critic_hidden),
                LayerSpec::act(Activation::Relu),
            ],
        )
    }
}
