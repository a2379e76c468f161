//! Parameters for the learned path: flow completion graph, image
//! encoder/decoder, feature alignment and transformer blocks, stored
//! together in one weights container.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::flow::{FlowCompletionWeights, FlowGraphPlan};
use crate::kernels::{conv2d, conv2d_strided, leaky_relu, ConvWeights, FeatureMap, Frame};
use crate::msvt::{MsvtConfig, MsvtWeights};
use crate::propagation::FeaturePropagationWeights;
use crate::tensorfile::{Tensor, TensorFile};

/// Image → features at 1/8 resolution: three stride-2 3×3 convs
/// (`3 → C → C → C`), leaky ReLU between them.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageEncoder {
    pub convs: [ConvWeights; 3],
}

impl ImageEncoder {
    pub fn channels(&self) -> usize {
        self.convs[2].out_channels()
    }

    pub fn encode(&self, frame: &Frame) -> Result<FeatureMap> {
        let mut x = conv2d_strided(frame, &self.convs[0], 2)?;
        x.map_inplace(leaky_relu);
        x = conv2d_strided(&x, &self.convs[1], 2)?;
        x.map_inplace(leaky_relu);
        conv2d_strided(&x, &self.convs[2], 2)
    }
}

/// Features → image: three (2× nearest upsample, 3×3 conv) stages ending in
/// three channels, clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageDecoder {
    pub convs: [ConvWeights; 3],
}

impl ImageDecoder {
    pub fn decode(&self, features: &FeatureMap) -> Result<Frame> {
        let mut x = conv2d(&features.upsample_nearest(2), &self.convs[0])?;
        x.map_inplace(leaky_relu);
        x = conv2d(&x.upsample_nearest(2), &self.convs[1])?;
        x.map_inplace(leaky_relu);
        let mut out = conv2d(&x.upsample_nearest(2), &self.convs[2])?;
        out.map_inplace(|v| v.clamp(0.0, 1.0));
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralWeights {
    pub flow: FlowCompletionWeights,
    pub encoder: ImageEncoder,
    pub features: FeaturePropagationWeights,
    pub msvt: Vec<MsvtWeights>,
    pub msvt_config: MsvtConfig,
    pub decoder: ImageDecoder,
}

/// Width of the image features.
pub const IMAGE_FEATURES: usize = 8;

impl NeuralWeights {
    /// Random weights with the default channel plan (flow graph 2→32→64,
    /// image features 8) and one transformer block.
    pub fn seeded(seed: u64) -> Self {
        Self::seeded_with(seed, FlowGraphPlan::default(), IMAGE_FEATURES, MsvtConfig::default(), 1)
    }

    pub fn seeded_with(seed: u64, plan: FlowGraphPlan, channels: usize, cfg: MsvtConfig, depth: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = channels;
        let mut conv = |o, i| ConvWeights::random(&mut rng, o, i, 3, 3);
        let encoder = ImageEncoder {
            convs: [conv(c, 3), conv(c, c), conv(c, c)],
        };
        let decoder = ImageDecoder {
            convs: [conv(c, c), conv(c, c), conv(3, c)],
        };
        Self {
            flow: FlowCompletionWeights::seeded(seed.wrapping_add(1), plan),
            encoder,
            features: FeaturePropagationWeights::seeded(seed.wrapping_add(2), c, 3),
            msvt: (0..depth as u64)
                .map(|i| MsvtWeights::seeded(seed.wrapping_add(3 + i), c, &cfg))
                .collect(),
            msvt_config: cfg,
            decoder,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.features.validate()?;
        self.msvt_config.validate()?;
        let c = self.encoder.channels();
        let enc = &self.encoder.convs;
        let dec = &self.decoder.convs;
        let checks = [
            ("image encoder input", 3, enc[0].in_channels()),
            ("image encoder 1", enc[0].out_channels(), enc[1].in_channels()),
            ("image encoder 2", enc[1].out_channels(), enc[2].in_channels()),
            ("feature propagation width", c, self.features.channels()),
            ("image decoder input", c, dec[0].in_channels()),
            ("image decoder 1", dec[0].out_channels(), dec[1].in_channels()),
            ("image decoder 2", dec[1].out_channels(), dec[2].in_channels()),
            ("image decoder output", 3, dec[2].out_channels()),
        ];
        for (ctx, expected, actual) in checks {
            if expected != actual {
                return Err(shape_err(ctx, expected, actual));
            }
        }
        for b in &self.msvt {
            b.validate()?;
            if b.channels() != c || b.heads != self.msvt_config.heads {
                return Err(shape_err(
                    "msvt block",
                    format!("{c} ch / {} heads", self.msvt_config.heads),
                    format!("{} ch / {} heads", b.channels(), b.heads),
                ));
            }
        }
        Ok(())
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let mut f = TensorFile::new();
        self.flow.write_tensors(&mut f, "flow");
        for (i, c) in self.encoder.convs.iter().enumerate() {
            f.insert_conv(&format!("image.encoder.{i}"), c);
        }
        for (i, c) in self.decoder.convs.iter().enumerate() {
            f.insert_conv(&format!("image.decoder.{i}"), c);
        }
        self.features.write_tensors(&mut f, "features");
        let cfg = &self.msvt_config;
        f.insert(
            "msvt.config",
            Tensor::new(
                vec![4],
                vec![
                    cfg.window_size as f32,
                    cfg.heads as f32,
                    cfg.ffn_expansion as f32,
                    self.msvt.len() as f32,
                ],
            )
            .expect("consistent"),
        );
        for (i, b) in self.msvt.iter().enumerate() {
            b.write_tensors(&mut f, &format!("msvt.{i}"));
        }
        f
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self> {
        let cfg = f.vector("msvt.config", 4)?;
        if cfg.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return Err(Error::Weights(format!(
                "`msvt.config` must hold non-negative integers, got {cfg:?}"
            )));
        }
        let msvt_config = MsvtConfig {
            window_size: cfg[0] as usize,
            heads: cfg[1] as usize,
            ffn_expansion: cfg[2] as usize,
        };
        let conv3 = |p: &str| -> Result<[ConvWeights; 3]> {
            Ok([
                f.conv(&format!("{p}.0"))?,
                f.conv(&format!("{p}.1"))?,
                f.conv(&format!("{p}.2"))?,
            ])
        };
        let w = Self {
            flow: FlowCompletionWeights::read_tensors(f, "flow")?,
            encoder: ImageEncoder {
                convs: conv3("image.encoder")?,
            },
            features: FeaturePropagationWeights::read_tensors(f, "features")?,
            msvt: (0..cfg[3] as usize)
                .map(|i| MsvtWeights::read_tensors(f, &format!("msvt.{i}")))
                .collect::<Result<_>>()?,
            msvt_config,
            decoder: ImageDecoder {
                convs: conv3("image.decoder")?,
            },
        };
        w.validate().map_err(|e| Error::Weights(e.to_string()))?;
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_tensor_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::load(path)?)
    }
}
