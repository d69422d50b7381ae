use serde::{Deserialize, Serialize};

use super::TdnnError;
use crate::dataset::WINDOW_LEN;
use crate::types::{ModalityDims, NUM_CLASSES};

/// One dilated 1-D convolution, stride 1, no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl ConvSpec {
    pub const fn new(in_channels: usize, out_channels: usize, kernel: usize, dilation: usize) -> Self {
        Self { in_channels, out_channels, kernel, dilation }
    }

    /// Frames lost to a valid convolution: `(k - 1) · d`.
    pub fn shrink(&self) -> usize {
        (self.kernel - 1) * self.dilation
    }
}

pub const DEFAULT_KERNELS: [usize; 7] = [9, 9, 5, 5, 7, 7, 5];
pub const DEFAULT_DILATIONS: [usize; 7] = [1, 2, 1, 2, 1, 2, 1];
pub const DEFAULT_CHANNELS: [(usize, usize); 7] =
    [(256, 128), (128, 128), (128, 64), (64, 64), (64, 32), (32, 16), (16, 4)];

/// Output length of a valid, stride-1 dilated convolution.
pub fn conv_out_len(len_in: usize, kernel: usize, dilation: usize) -> Result<usize, TdnnError> {
    let shrink = kernel.saturating_sub(1) * dilation;
    if kernel == 0 || dilation == 0 || len_in <= shrink {
        return Err(TdnnError::NonPositiveOutput { len_in, kernel, dilation });
    }
    Ok(len_in - shrink)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TdnnConfig {
    /// Width of the concatenated frame vectors fed to the fusion layer.
    pub input_dim: usize,
    pub d_fused: usize,
    pub convs: Vec<ConvSpec>,
    pub head_hidden: usize,
    pub window_len: usize,
    pub batchnorm_eps: f64,
    pub batchnorm_momentum: f64,
}

impl Default for TdnnConfig {
    fn default() -> Self {
        Self::with_channels(ModalityDims::STANDARD.fused(), &DEFAULT_CHANNELS, 32)
    }
}

impl TdnnConfig {
    /// The default kernel/dilation schedule with a custom channel plan.
    /// `channels[0].0` becomes `d_fused`.
    pub fn with_channels(input_dim: usize, channels: &[(usize, usize); 7], head_hidden: usize) -> Self {
        let convs = channels
            .iter()
            .zip(DEFAULT_KERNELS.iter().zip(DEFAULT_DILATIONS))
            .map(|(&(i, o), (&k, d))| ConvSpec::new(i, o, k, d))
            .collect();
        Self {
            input_dim,
            d_fused: channels[0].0,
            convs,
            head_hidden,
            window_len: WINDOW_LEN,
            batchnorm_eps: 1e-5,
            batchnorm_momentum: 0.1,
        }
    }

    /// Small network on the default kernel schedule, sized for the mini
    /// embedding profile.
    pub fn mini() -> Self {
        Self::with_channels(
            ModalityDims::MINI.fused(),
            &[(8, 8), (8, 8), (8, 8), (8, 8), (8, 4), (4, 4), (4, 4)],
            8,
        )
    }

    pub fn num_layers(&self) -> usize {
        self.convs.len()
    }

    /// Per-layer output lengths, starting from `window_len`.
    pub fn layer_lengths(&self) -> Result<Vec<usize>, TdnnError> {
        let mut lens = Vec::with_capacity(self.convs.len() + 1);
        lens.push(self.window_len);
        for c in &self.convs {
            let next = conv_out_len(*lens.last().unwrap(), c.kernel, c.dilation)?;
            lens.push(next);
        }
        Ok(lens)
    }

    /// Length of each channel after the conv stack; the head's input width.
    pub fn output_len(&self) -> Result<usize, TdnnError> {
        Ok(*self.layer_lengths()?.last().unwrap())
    }

    pub fn validate(&self) -> Result<(), TdnnError> {
        let bad = |msg: String| Err(TdnnError::Config(msg));
        if self.input_dim == 0 || self.d_fused == 0 || self.head_hidden == 0 {
            return bad("input_dim, d_fused and head_hidden must be positive".into());
        }
        let Some(last) = self.convs.last() else {
            return bad("at least one convolution layer is required".into());
        };
        if self.convs[0].in_channels != self.d_fused {
            return bad(format!(
                "first convolution takes {} channels but d_fused is {}",
                self.convs[0].in_channels, self.d_fused
            ));
        }
        for (l, pair) in self.convs.windows(2).enumerate() {
            if pair[1].in_channels != pair[0].out_channels {
                return bad(format!("layer {} outputs {} channels but layer {} takes {}", l, pair[0].out_channels, l + 1, pair[1].in_channels));
            }
            if pair[1].out_channels > pair[0].out_channels {
                return bad(format!("channel count increases at layer {}", l + 1));
            }
        }
        if last.out_channels != NUM_CLASSES {
            return bad(format!("last layer must have {NUM_CLASSES} output channels, has {}", last.out_channels));
        }
        if self.convs.iter().any(|c| c.kernel == 0 || c.dilation == 0 || c.in_channels == 0) {
            return bad("kernel, dilation and channel counts must be positive".into());
        }
        if self.window_len % 2 == 0 {
            return bad(format!("window_len must be odd, got {}", self.window_len));
        }
        if !(self.batchnorm_eps > 0.0) || !(0.0..=1.0).contains(&self.batchnorm_momentum) {
            return bad("batchnorm_eps must be positive and batchnorm_momentum in [0, 1]".into());
        }
        self.output_len()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_length_formula() {
        assert_eq!(conv_out_len(301, 9, 1).unwrap(), 293);
        assert_eq!(conv_out_len(37, 1, 1).unwrap(), 37);
        assert_eq!(conv_out_len(17, 3, 2).unwrap(), 13);
        assert!(matches!(conv_out_len(8, 9, 1), Err(TdnnError::NonPositiveOutput { .. })));
        assert!(conv_out_len(8, 5, 2).is_err());
        assert_eq!(conv_out_len(9, 5, 2).unwrap(), 1);
        assert!(conv_out_len(5, 0, 1).is_err());
    }

    #[test]
    fn default_stack_maps_301_to_243() {
        let cfg = TdnnConfig::default();
        cfg.validate().unwrap();
        let lens = cfg.layer_lengths().unwrap();
        assert_eq!(lens, vec![301, 293, 277, 273, 265, 259, 247, 243]);
        let shrinks: Vec<usize> = cfg.convs.iter().map(ConvSpec::shrink).collect();
        assert_eq!(shrinks, vec![8, 16, 4, 8, 6, 12, 4]);
        assert_eq!(cfg.output_len().unwrap(), 243);
    }

    #[test]
    fn mini_is_valid() {
        TdnnConfig::mini().validate().unwrap();
        assert_eq!(TdnnConfig::mini().input_dim, 24);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = TdnnConfig::default();
        cfg.convs[6].out_channels = 5;
        assert!(cfg.validate().is_err());

        let mut cfg = TdnnConfig::default();
        cfg.convs[2].in_channels = 100;
        assert!(cfg.validate().is_err());

        let mut cfg = TdnnConfig::default();
        cfg.d_fused = 300;
        assert!(cfg.validate().is_err());

        let mut cfg = TdnnConfig::default();
        cfg.window_len = 40;
        assert!(cfg.validate().is_err());

        let mut cfg = TdnnConfig::default();
        cfg.window_len = 57;
        assert!(matches!(cfg.validate(), Err(TdnnError::NonPositiveOutput { .. })));

        let cfg = TdnnConfig::with_channels(24, &[(8, 8), (8, 16), (16, 8), (8, 8), (8, 4), (4, 4), (4, 4)], 4);
        assert!(cfg.validate().is_err());
    }
}
