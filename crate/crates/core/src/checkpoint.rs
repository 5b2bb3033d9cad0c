//! Engine checkpoint files.
//!
//! Little-endian layout:
//!
//! ```text
//! "DARACK01"
//! u32 layer_count
//! per layer: weight, bias           each as (u32 rows, u32 cols, rows*cols f64)
//! tagged sections until end of file:
//!   b"BASE" u32 class  matrix       source prototype
//!   b"LGAM" u32 0      matrix 1x2   [ln gamma, R]
//!   b"GATE" u32 0      matrix 1x(C+3) [w.., b, mode, alpha], mode 0 fixed / 1 learnable
//!   b"ZCLS" u32 class  matrix       reprojection matrix
//!   b"DGST" u32 len    len bytes    config digest (ASCII hex)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::backbone::{BackboneParams, Layer};
use crate::error::{DaraError, Result};
use crate::nda::{GateMode, GateParams};
use crate::numerics::Matrix;
use crate::pfa::{ClassReprojection, MeasurementParams};
use crate::pipeline::Model;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DARACK01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// Present after target finetuning.
    pub z: Option<ClassReprojection>,
    pub config_digest: String,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    put_u32(out, m.rows());
    put_u32(out, m.cols());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_section(out: &mut Vec<u8>, tag: &[u8; 4], index: usize, m: &Matrix) {
    out.extend_from_slice(tag);
    put_u32(out, index);
    put_matrix(out, m);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(DaraError::HeaderMismatch(format!(
                "checkpoint truncated at byte {} (needs {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| DaraError::HeaderMismatch(format!("matrix {rows}x{cols} too large")))?;
        let data = self
            .take(len)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn gate_row(g: &GateParams) -> Matrix {
    let mut v = g.w.data().to_vec();
    v.push(g.b);
    match g.mode {
        GateMode::Fixed(alpha) => v.extend([0.0, alpha]),
        GateMode::Learnable => v.extend([1.0, 0.0]),
    }
    Matrix::row_vector(&v)
}

fn gate_from_row(m: &Matrix) -> Result<GateParams> {
    let d = m.data();
    if m.rows() != 1 || d.len() < 3 {
        return Err(DaraError::HeaderMismatch(format!("gate section has shape {:?}", m.shape())));
    }
    let c = d.len() - 3;
    let mode = match d[c + 1] {
        0.0 => GateMode::Fixed(d[c + 2]),
        1.0 => GateMode::Learnable,
        other => return Err(DaraError::HeaderMismatch(format!("unknown gate mode {other}"))),
    };
    Ok(GateParams {
        w: Matrix::row_vector(&d[..c]),
        b: d[c],
        mode,
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        let layers = &self.model.backbone.layers;
        put_u32(&mut out, layers.len());
        for l in layers {
            put_matrix(&mut out, &l.weight);
            put_matrix(&mut out, &l.bias);
        }
        for (i, p) in self.model.base.iter().enumerate() {
            put_section(&mut out, b"BASE", i, p);
        }
        let m = &self.model.measure;
        put_section(&mut out, b"LGAM", 0, &Matrix::row_vector(&[m.log_gamma, m.spatial as f64]));
        put_section(&mut out, b"GATE", 0, &gate_row(&self.model.gate));
        if let Some(z) = &self.z {
            for (i, m) in z.z.iter().enumerate() {
                put_section(&mut out, b"ZCLS", i, m);
            }
        }
        out.extend_from_slice(b"DGST");
        put_u32(&mut out, self.config_digest.len());
        out.extend_from_slice(self.config_digest.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(DaraError::BadMagic {
                expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
                found: String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned(),
            });
        }
        let mut r = Reader { bytes, pos: 8 };
        let n = r.u32()?;
        let mut layers = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let weight = r.matrix()?;
            let bias = r.matrix()?;
            layers.push(Layer { weight, bias });
        }
        let backbone = BackboneParams::from_layers(layers)?;
        let mut base = Vec::new();
        let mut z = Vec::new();
        let mut measure = None;
        let mut gate = None;
        let mut digest = String::new();
        while !r.done() {
            let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
            let index = r.u32()?;
            if &tag == b"DGST" {
                digest = String::from_utf8(r.take(index)?.to_vec())
                    .map_err(|_| DaraError::HeaderMismatch("digest is not UTF-8".into()))?;
                continue;
            }
            let m = r.matrix()?;
            match &tag {
                b"BASE" | b"ZCLS" => {
                    let list = if &tag == b"BASE" { &mut base } else { &mut z };
                    if index != list.len() {
                        return Err(DaraError::HeaderMismatch(format!(
                            "{} section {index} out of order",
                            String::from_utf8_lossy(&tag)
                        )));
                    }
                    list.push(m);
                }
                b"LGAM" => {
                    if m.shape() != (1, 2) {
                        return Err(DaraError::HeaderMismatch("temperature section must be 1x2".into()));
                    }
                    measure = Some(MeasurementParams {
                        log_gamma: m.data()[0],
                        spatial: m.data()[1] as usize,
                    });
                }
                b"GATE" => gate = Some(gate_from_row(&m)?),
                _ => {
                    return Err(DaraError::HeaderMismatch(format!(
                        "unknown section tag {:?}",
                        String::from_utf8_lossy(&tag)
                    )))
                }
            }
        }
        let measure = measure.ok_or_else(|| DaraError::HeaderMismatch("missing temperature section".into()))?;
        let gate = gate.ok_or_else(|| DaraError::HeaderMismatch("missing gate section".into()))?;
        if gate.w.cols() != backbone.out_channels() {
            return Err(DaraError::ChannelMismatch {
                expected: backbone.out_channels(),
                found: gate.w.cols(),
            });
        }
        Ok(Checkpoint {
            model: Model {
                backbone,
                measure,
                gate,
                base,
            },
            z: (!z.is_empty()).then_some(ClassReprojection { z }),
            config_digest: digest,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Human-readable summary.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let _ = writeln!(s, "magic: DARACK01");
        let _ = writeln!(s, "layers: {}", m.backbone.layers.len());
        for (i, l) in m.backbone.layers.iter().enumerate() {
            let _ = writeln!(s, "  layer {i}: weight {}x{}, bias {}x{}", l.weight.rows(), l.weight.cols(), l.bias.rows(), l.bias.cols());
        }
        let _ = writeln!(s, "in_channels: {}", m.backbone.in_channels());
        let _ = writeln!(s, "feature_channels: {}", m.backbone.out_channels());
        let _ = writeln!(s, "base_prototypes: {}", m.base.len());
        let _ = writeln!(s, "spatial: {}", m.measure.spatial);
        let _ = writeln!(s, "gamma: {}", m.measure.gamma());
        let mode = match m.gate.mode {
            GateMode::Fixed(a) => format!("fixed {a}"),
            GateMode::Learnable => "learnable".into(),
        };
        let _ = writeln!(s, "gate: {mode}, b = {}", m.gate.b);
        match &self.z {
            Some(z) => {
                let _ = writeln!(s, "reprojection: {} classes of {}x{}", z.ways(), z.z[0].rows(), z.z[0].cols());
            }
            None => {
                let _ = writeln!(s, "reprojection: none");
            }
        }
        let _ = writeln!(s, "config_digest: {}", self.config_digest);
        s
    }
}
