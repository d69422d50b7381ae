//! Versioned binary checkpoint. Every integer is a little-endian `u32`,
//! every float a little-endian `f64`:
//!
//! ```text
//! magic            8 bytes  "EPTDNNCK"
//! version          u32      = 1
//! input_dim        u32
//! d_fused          u32
//! head_hidden      u32
//! window_len       u32
//! num_layers       u32
//! per layer        4 × u32  in_channels, out_channels, kernel, dilation
//! batchnorm_eps    f64
//! batchnorm_mom    f64
//! parameters       per tensor in canonical order: u32 length, then values
//! running stats    per layer: mean tensor, var tensor (same encoding)
//! learning_rate    f64
//! momentum         f64
//! velocities       per tensor in canonical order (same encoding)
//! ```
//!
//! Canonical tensor order is `fusion.weight`, `fusion.bias`, then for each
//! layer `conv.weight`, `conv.bias`, `bn.gamma`, `bn.beta`, then
//! `head.linear1.weight`, `head.linear1.bias`, `head.linear2.weight`,
//! `head.linear2.bias`. Matrices are row-major; conv weights are
//! `out × in × kernel`. The file must end exactly after the last velocity.

use std::fs;
use std::path::Path;

use ndarray::Array1;

use super::model::{Params, RunningStats, TdnnModel};
use super::{ConvSpec, OptimizerState, TdnnConfig, TdnnError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EPTDNNCK";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn tensor(&mut self, values: &[f64]) {
        self.u32(values.len());
        for &v in values {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], TdnnError> {
        if self.bytes.len() - self.pos < n {
            return Err(TdnnError::CorruptCheckpoint(format!("truncated at byte {}", self.bytes.len())));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize, TdnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64, TdnnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor_into(&mut self, dst: &mut [f64]) -> Result<(), TdnnError> {
        let at = self.pos;
        let len = self.u32()?;
        if len != dst.len() {
            return Err(TdnnError::CorruptCheckpoint(format!(
                "tensor at byte {at} has length {len}, expected {}",
                dst.len()
            )));
        }
        for v in dst {
            *v = self.f64()?;
        }
        Ok(())
    }
}

pub fn encode_checkpoint(model: &TdnnModel, opt: &OptimizerState) -> Vec<u8> {
    let cfg = model.config();
    let mut w = Writer(CHECKPOINT_MAGIC.to_vec());
    w.u32(CHECKPOINT_VERSION as usize);
    w.u32(cfg.input_dim);
    w.u32(cfg.d_fused);
    w.u32(cfg.head_hidden);
    w.u32(cfg.window_len);
    w.u32(cfg.convs.len());
    for c in &cfg.convs {
        w.u32(c.in_channels);
        w.u32(c.out_channels);
        w.u32(c.kernel);
        w.u32(c.dilation);
    }
    w.f64(cfg.batchnorm_eps);
    w.f64(cfg.batchnorm_momentum);
    for t in model.params().tensors() {
        w.tensor(t);
    }
    for r in model.running_stats() {
        w.tensor(r.mean.as_slice().unwrap());
        w.tensor(r.var.as_slice().unwrap());
    }
    w.f64(opt.learning_rate);
    w.f64(opt.momentum);
    for t in opt.velocity.tensors() {
        w.tensor(t);
    }
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(TdnnModel, OptimizerState), TdnnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(TdnnError::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(TdnnError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let input_dim = r.u32()?;
    let d_fused = r.u32()?;
    let head_hidden = r.u32()?;
    let window_len = r.u32()?;
    let num_layers = r.u32()?;
    if num_layers > 1024 {
        return Err(TdnnError::CorruptCheckpoint(format!("implausible layer count {num_layers}")));
    }
    let mut convs = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        convs.push(ConvSpec::new(r.u32()?, r.u32()?, r.u32()?, r.u32()?));
    }
    let config = TdnnConfig {
        input_dim,
        d_fused,
        convs,
        head_hidden,
        window_len,
        batchnorm_eps: r.f64()?,
        batchnorm_momentum: r.f64()?,
    };
    config.validate().map_err(|e| TdnnError::CorruptCheckpoint(format!("invalid stored config: {e}")))?;

    let mut params = Params::zeros(&config)?;
    for t in params.tensors_mut() {
        r.tensor_into(t)?;
    }
    let mut running = Vec::with_capacity(config.convs.len());
    for c in &config.convs {
        let mut mean = Array1::zeros(c.out_channels);
        let mut var = Array1::zeros(c.out_channels);
        r.tensor_into(mean.as_slice_mut().unwrap())?;
        r.tensor_into(var.as_slice_mut().unwrap())?;
        running.push(RunningStats { mean, var });
    }
    let learning_rate = r.f64()?;
    let momentum = r.f64()?;
    let mut velocity = Params::zeros(&config)?;
    for t in velocity.tensors_mut() {
        r.tensor_into(t)?;
    }
    if r.pos != bytes.len() {
        return Err(TdnnError::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let model = TdnnModel::from_parts(config, params, running)
        .map_err(|e| TdnnError::CorruptCheckpoint(e.to_string()))?;
    Ok((model, OptimizerState { learning_rate, momentum, velocity }))
}

pub fn save_checkpoint(model: &TdnnModel, opt: &OptimizerState, path: impl AsRef<Path>) -> Result<(), TdnnError> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model, opt)).map_err(|source| TdnnError::Io { path: path.to_path_buf(), source })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(TdnnModel, OptimizerState), TdnnError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TdnnError::Io { path: path.to_path_buf(), source })?;
    decode_checkpoint(&bytes)
}
