//! Feature-bank files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        8 bytes   "DARAFB01"
//! num_items    u32
//! width        u32
//! height       u32
//! channels     u32
//! class_count  u32
//! labels       num_items x u32
//! values       num_items x (W*H*C) x f32, ordered (item, h, w, c)
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{DaraError, Result};
use crate::numerics::Matrix;

pub const BANK_MAGIC: &[u8; 8] = b"DARAFB01";
const HEADER_LEN: usize = 8 + 5 * 4;

/// A labelled collection of `(W*H) x C` maps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    width: usize,
    height: usize,
    channels: usize,
    class_count: usize,
    items: Vec<Matrix>,
    labels: Vec<u32>,
}

/// Header fields of a bank file, readable without the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankHeader {
    pub num_items: u32,
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub class_count: u32,
}

impl FeatureBank {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        class_count: usize,
        items: Vec<Matrix>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        let bank = FeatureBank {
            width,
            height,
            channels,
            class_count,
            items,
            labels,
        };
        bank.validate()?;
        Ok(bank)
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.channels == 0 {
            return Err(DaraError::HeaderMismatch(format!(
                "dimensions must be positive, got W={} H={} C={}",
                self.width, self.height, self.channels
            )));
        }
        if self.items.len() != self.labels.len() {
            return Err(DaraError::HeaderMismatch(format!(
                "{} items but {} labels",
                self.items.len(),
                self.labels.len()
            )));
        }
        let shape = (self.width * self.height, self.channels);
        for item in &self.items {
            if item.shape() != shape {
                return Err(DaraError::shape("feature_bank", shape, item.shape()));
            }
            if !item.is_finite() {
                return Err(DaraError::NonFinite("feature bank item"));
            }
        }
        for &label in &self.labels {
            if label as usize >= self.class_count {
                return Err(DaraError::LabelOutOfRange {
                    label,
                    class_count: self.class_count as u32,
                });
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Spatial cell count `R = W*H`.
    pub fn spatial(&self) -> usize {
        self.width * self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Matrix] {
        &self.items
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn item(&self, index: usize) -> (&Matrix, u32) {
        (&self.items[index], self.labels[index])
    }

    /// Item indices grouped by class label.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    pub fn header(&self) -> BankHeader {
        BankHeader {
            num_items: self.items.len() as u32,
            width: self.width as u32,
            height: self.height as u32,
            channels: self.channels as u32,
            class_count: self.class_count as u32,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let per_item = self.spatial() * self.channels;
        let mut out = Vec::with_capacity(HEADER_LEN + self.len() * (4 + 4 * per_item));
        out.extend_from_slice(BANK_MAGIC);
        let h = self.header();
        for v in [h.num_items, h.width, h.height, h.channels, h.class_count] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        for item in &self.items {
            for &v in item.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = parse_header(bytes)?;
        let n = header.num_items as usize;
        let (w, h, c) = (
            header.width as usize,
            header.height as usize,
            header.channels as usize,
        );
        let per_item = w * h * c;
        let expected = HEADER_LEN + n * 4 + n * per_item * 4;
        if bytes.len() != expected {
            return Err(DaraError::HeaderMismatch(format!(
                "header declares {n} items of {w}x{h}x{c} ({expected} bytes), file has {} bytes",
                bytes.len()
            )));
        }
        let mut pos = HEADER_LEN;
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let label = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
            if label >= header.class_count {
                return Err(DaraError::LabelOutOfRange {
                    label,
                    class_count: header.class_count,
                });
            }
            labels.push(label);
            pos += 4;
        }
        let mut items = Vec::with_capacity(n);
        for _ in 0..n {
            let data: Vec<f64> = bytes[pos..pos + per_item * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            pos += per_item * 4;
            items.push(Matrix::from_vec(w * h, c, data)?);
        }
        FeatureBank::new(w, h, c, header.class_count as usize, items, labels)
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<BankHeader> {
    if bytes.len() < 8 || &bytes[..8] != BANK_MAGIC {
        return Err(DaraError::BadMagic {
            expected: String::from_utf8_lossy(BANK_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(DaraError::HeaderMismatch(format!(
            "file too short for header: {} bytes",
            bytes.len()
        )));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    Ok(BankHeader {
        num_items: field(0),
        width: field(1),
        height: field(2),
        channels: field(3),
        class_count: field(4),
    })
}

pub fn save_bank(bank: &FeatureBank, path: impl AsRef<Path>) -> Result<()> {
    let bytes = bank.to_bytes()?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<FeatureBank> {
    FeatureBank::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FeatureBank {
        let item = Matrix::from_rows(&[&[0.5, -1.0]]);
        FeatureBank::new(1, 1, 2, 1, vec![item], vec![0]).unwrap()
    }

    #[test]
    fn single_item_file_size() {
        let bytes = tiny().to_bytes().unwrap();
        assert_eq!(bytes.len(), 8 + 5 * 4 + 4 + 8);
        assert_eq!(&bytes[..8], b"DARAFB01");
        assert_eq!(&bytes[bytes.len() - 8..bytes.len() - 4], &0.5f32.to_le_bytes());
    }

    #[test]
    fn round_trip_is_identity() {
        let bank = tiny();
        assert_eq!(FeatureBank::from_bytes(&bank.to_bytes().unwrap()).unwrap(), bank);
    }

    #[test]
    fn label_out_of_range_rejected_at_construction() {
        let item = Matrix::zeros(1, 2);
        let err = FeatureBank::new(1, 1, 2, 1, vec![item], vec![1]).unwrap_err();
        assert!(matches!(err, DaraError::LabelOutOfRange { label: 1, class_count: 1 }));
    }

    #[test]
    fn label_out_of_range_rejected_at_save() {
        let mut bank = tiny();
        bank.labels[0] = 3;
        assert!(matches!(bank.to_bytes(), Err(DaraError::LabelOutOfRange { .. })));
    }

    #[test]
    fn truncated_payload_is_header_mismatch() {
        let bytes = tiny().to_bytes().unwrap();
        let err = FeatureBank::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, DaraError::HeaderMismatch(_)));
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = tiny().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            FeatureBank::from_bytes(&bytes),
            Err(DaraError::BadMagic { .. })
        ));
    }

    #[test]
    fn label_out_of_range_rejected_at_load() {
        let mut bytes = tiny().to_bytes().unwrap();
        bytes[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            FeatureBank::from_bytes(&bytes),
            Err(DaraError::LabelOutOfRange { label: 7, .. })
        ));
    }
}
