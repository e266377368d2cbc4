//! Bit-exact activation compression: mask sparsification, dynamic-range
//! quantization, entropy estimation, canonical Huffman coding, and a fixed
//! serialized blob layout with exact decode.
//!
//! Wire format (`OPC1`, little-endian header):
//!
//! ```text
//! magic "OPC1"                       4 bytes
//! n, s, d                            3 x u32
//! bit_width b                        u8
//! x_min, x_max, delta                3 x f64
//! active_count |S|                   u64
//! raw_bits_estimate L_raw            u64
//! entropy_bits_estimate |S|·H        f64
//! mask bitmap (s·d bits, MSB-first)  ceil(s·d/8) bytes
//! sign bitmap (|S| bits, MSB-first)  ceil(|S|/8) bytes
//! symbol_count                       u16
//! per symbol: value u32, length u8   5 bytes each
//! payload_bit_len                    u64
//! payload (MSB-first)                ceil(payload_bit_len/8) bytes
//! ```

pub mod bitio;
pub mod huffman;

use std::collections::BTreeMap;

use bitio::{pack_bits, unpack_bits};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OPC1";

/// A dense activation tensor of shape (n, s, d).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBlock {
    pub n: usize,
    pub s: usize,
    pub d: usize,
    /// Row-major n·s·d values.
    pub values: Vec<f32>,
}

impl ActivationBlock {
    pub fn new(n: usize, s: usize, d: usize, values: Vec<f32>) -> Result<ActivationBlock> {
        if values.len() != n * s * d {
            return Err(Error::Domain(format!(
                "value count {} does not match shape {n}x{s}x{d}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("activation values must be finite".into()));
        }
        Ok(ActivationBlock { n, s, d, values })
    }

    pub fn zeros(n: usize, s: usize, d: usize) -> ActivationBlock {
        ActivationBlock {
            n,
            s,
            d,
            values: vec![0.0; n * s * d],
        }
    }
}

/// A binary (s, d) mask broadcast over the batch dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub s: usize,
    pub d: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(s: usize, d: usize, bits: Vec<bool>) -> Result<BinaryMask> {
        if bits.len() != s * d {
            return Err(Error::Domain(format!(
                "mask bit count {} does not match shape {s}x{d}",
                bits.len()
            )));
        }
        Ok(BinaryMask { s, d, bits })
    }

    pub fn keep_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len() as f64
    }
}

/// Zeroes the masked-off elements of `x` (forward semantics of the mask).
pub fn apply_mask(x: &ActivationBlock, m: &BinaryMask) -> Result<ActivationBlock> {
    if m.s != x.s || m.d != x.d {
        return Err(Error::Domain(format!(
            "mask shape {}x{} does not match activation {}x{}",
            m.s, m.d, x.s, x.d
        )));
    }
    let plane = x.s * x.d;
    let values = x
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| if m.bits[i % plane] { v } else { 0.0 })
        .collect();
    Ok(ActivationBlock {
        n: x.n,
        s: x.s,
        d: x.d,
        values,
    })
}

/// Quantized representation of the active elements: magnitude codes plus a
/// separate sign per element.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    /// |q| per active element; fits in b-1 bits.
    pub magnitudes: Vec<u32>,
    /// true = negative.
    pub signs: Vec<bool>,
    pub delta: f64,
    pub x_min: f64,
    pub x_max: f64,
}

/// Dynamic-range quantization of the active (kept) elements.
///
/// delta = (x_max - x_min)/(2^(b-1) - 1) over the absolute values;
/// |q| = floor((|x| - x_min)/delta + 0.5). A degenerate range (all equal
/// magnitudes) encodes every element as code 0.
pub fn quantize(x_active: &[f32], b: u32) -> Result<Quantized> {
    if b < 2 {
        return Err(Error::Domain(format!("bit width {b} must be >= 2")));
    }
    if x_active.is_empty() {
        return Err(Error::Domain(
            "empty active set: quantization is skipped upstream".into(),
        ));
    }
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for &v in x_active {
        let a = (v as f64).abs();
        x_min = x_min.min(a);
        x_max = x_max.max(a);
    }
    let levels = ((1u64 << (b - 1)) - 1) as f64;
    let delta = (x_max - x_min) / levels;
    let mut magnitudes = Vec::with_capacity(x_active.len());
    let mut signs = Vec::with_capacity(x_active.len());
    for &v in x_active {
        signs.push(v.is_sign_negative());
        let mag = if delta == 0.0 {
            0
        } else {
            (((v as f64).abs() - x_min) / delta + 0.5).floor() as u32
        };
        magnitudes.push(mag);
    }
    Ok(Quantized {
        magnitudes,
        signs,
        delta,
        x_min,
        x_max,
    })
}

/// Maps magnitude codes back to the real domain: sign·(x_min + |q|·delta).
pub fn dequantize(magnitudes: &[u32], signs: &[bool], delta: f64, x_min: f64) -> Vec<f32> {
    magnitudes
        .iter()
        .zip(signs)
        .map(|(&mag, &neg)| {
            let v = x_min + mag as f64 * delta;
            (if neg { -v } else { v }) as f32
        })
        .collect()
}

/// Entropy of the magnitude-code distribution plus the raw and estimated
/// Huffman bit lengths: H, L_raw = |S|·b, L_huff ~= |S|·H.
pub fn entropy_bits(magnitudes: &[u32], b: u32) -> Result<(f64, u64, f64)> {
    if magnitudes.is_empty() {
        return Err(Error::Domain(
            "entropy of an empty code set is undefined".into(),
        ));
    }
    let mut freq: BTreeMap<u32, u64> = BTreeMap::new();
    for &m in magnitudes {
        *freq.entry(m).or_insert(0) += 1;
    }
    let total = magnitudes.len() as f64;
    let h: f64 = freq
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    let l_raw = magnitudes.len() as u64 * b as u64;
    Ok((h, l_raw, total * h))
}

/// A fully serialized compressed activation block.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBlob {
    pub n: u32,
    pub s: u32,
    pub d: u32,
    pub bit_width: u8,
    pub x_min: f64,
    pub x_max: f64,
    pub delta: f64,
    pub active_count: u64,
    pub raw_bits_estimate: u64,
    pub entropy_bits_estimate: f64,
    pub mask_bytes: Vec<u8>,
    pub sign_bytes: Vec<u8>,
    pub code_lengths: huffman::CodeLengths,
    pub payload_bit_len: u64,
    pub payload: Vec<u8>,
}

/// Compresses an activation block under `mask` with `b`-bit quantization.
pub fn encode(x: &ActivationBlock, mask: &BinaryMask, b: u32) -> Result<CompressedBlob> {
    if b < 2 {
        return Err(Error::Domain(format!("bit width {b} must be >= 2")));
    }
    if mask.s != x.s || mask.d != x.d {
        return Err(Error::Domain(format!(
            "mask shape {}x{} does not match activation {}x{}",
            mask.s, mask.d, x.s, x.d
        )));
    }
    let plane = x.s * x.d;
    let mut active: Vec<f32> = Vec::new();
    for (i, &v) in x.values.iter().enumerate() {
        if mask.bits[i % plane] {
            active.push(v);
        }
    }

    let (quant, h_stats) = if active.is_empty() {
        (
            Quantized {
                magnitudes: vec![],
                signs: vec![],
                delta: 0.0,
                x_min: 0.0,
                x_max: 0.0,
            },
            (0.0, 0, 0.0),
        )
    } else {
        let q = quantize(&active, b)?;
        let stats = entropy_bits(&q.magnitudes, b)?;
        (q, stats)
    };

    let mut freq: BTreeMap<u32, u64> = BTreeMap::new();
    for &m in &quant.magnitudes {
        *freq.entry(m).or_insert(0) += 1;
    }
    let code_lengths = huffman::code_lengths(&freq);
    let (payload, payload_bit_len) = huffman::encode(&quant.magnitudes, &code_lengths);

    Ok(CompressedBlob {
        n: x.n as u32,
        s: x.s as u32,
        d: x.d as u32,
        bit_width: b as u8,
        x_min: quant.x_min,
        x_max: quant.x_max,
        delta: quant.delta,
        active_count: active.len() as u64,
        raw_bits_estimate: h_stats.1,
        entropy_bits_estimate: h_stats.2,
        mask_bytes: pack_bits(mask.bits.iter().cloned()),
        sign_bytes: pack_bits(quant.signs.iter().cloned()),
        code_lengths,
        payload_bit_len,
        payload,
    })
}

/// Reconstructs the masked, dequantized activation block.
pub fn decode(blob: &CompressedBlob) -> Result<ActivationBlock> {
    let (n, s, d) = (blob.n as usize, blob.s as usize, blob.d as usize);
    let plane = s * d;
    let mask_bits = unpack_bits(&blob.mask_bytes, plane).ok_or(Error::Decode {
        offset: 0,
        message: "mask bitmap shorter than declared shape".into(),
    })?;
    let kept_per_plane = mask_bits.iter().filter(|&&b| b).count();
    if kept_per_plane as u64 * n as u64 != blob.active_count {
        return Err(Error::Decode {
            offset: 0,
            message: format!(
                "active_count {} inconsistent with mask popcount {} x batch {}",
                blob.active_count, kept_per_plane, n
            ),
        });
    }
    let signs = unpack_bits(&blob.sign_bytes, blob.active_count as usize).ok_or(Error::Decode {
        offset: 0,
        message: "sign bitmap shorter than active count".into(),
    })?;
    let magnitudes = huffman::decode(
        &blob.payload,
        blob.payload_bit_len,
        &blob.code_lengths,
        blob.active_count,
    )?;
    let restored = dequantize(&magnitudes, &signs, blob.delta, blob.x_min);

    let mut out = ActivationBlock::zeros(n, s, d);
    let mut cursor = 0;
    for batch in 0..n {
        for (i, &keep) in mask_bits.iter().enumerate() {
            if keep {
                out.values[batch * plane + i] = restored[cursor];
                cursor += 1;
            }
        }
    }
    Ok(out)
}

impl CompressedBlob {
    /// Total serialized size in bits (header, bitmaps, tables, payload).
    pub fn total_bits(&self) -> u64 {
        self.to_bytes().len() as u64 * 8
    }

    /// Raw-vs-compressed size multiplier, counting every serialized bit.
    pub fn achieved_ratio(&self, raw_bits_per_element: u32) -> f64 {
        let raw = self.n as u64 * self.s as u64 * self.d as u64 * raw_bits_per_element as u64;
        raw as f64 / self.total_bits() as f64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.s.to_le_bytes());
        out.extend_from_slice(&self.d.to_le_bytes());
        out.push(self.bit_width);
        out.extend_from_slice(&self.x_min.to_le_bytes());
        out.extend_from_slice(&self.x_max.to_le_bytes());
        out.extend_from_slice(&self.delta.to_le_bytes());
        out.extend_from_slice(&self.active_count.to_le_bytes());
        out.extend_from_slice(&self.raw_bits_estimate.to_le_bytes());
        out.extend_from_slice(&self.entropy_bits_estimate.to_le_bytes());
        out.extend_from_slice(&self.mask_bytes);
        out.extend_from_slice(&self.sign_bytes);
        out.extend_from_slice(&(self.code_lengths.len() as u16).to_le_bytes());
        for &(sym, len) in &self.code_lengths {
            out.extend_from_slice(&sym.to_le_bytes());
            out.push(len);
        }
        out.extend_from_slice(&self.payload_bit_len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CompressedBlob> {
        let mut r = Cursor { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Decode {
                offset: 0,
                message: "bad magic, expected OPC1".into(),
            });
        }
        let n = r.u32()?;
        let s = r.u32()?;
        let d = r.u32()?;
        let bit_width = r.u8()?;
        let x_min = r.f64()?;
        let x_max = r.f64()?;
        let delta = r.f64()?;
        let active_count = r.u64()?;
        let raw_bits_estimate = r.u64()?;
        let entropy_bits_estimate = r.f64()?;
        let plane = s as u64 * d as u64;
        let mask_bytes = r.take((plane as usize).div_ceil(8))?.to_vec();
        let sign_bytes = r.take((active_count as usize).div_ceil(8))?.to_vec();
        let sym_count = r.u16()?;
        let mut code_lengths = Vec::with_capacity(sym_count as usize);
        for _ in 0..sym_count {
            let sym = r.u32()?;
            let len = r.u8()?;
            code_lengths.push((sym, len));
        }
        let payload_bit_len = r.u64()?;
        let payload = r.take((payload_bit_len as usize).div_ceil(8))?.to_vec();
        if r.pos != bytes.len() {
            return Err(Error::Decode {
                offset: r.pos,
                message: format!("{} trailing bytes after payload", bytes.len() - r.pos),
            });
        }
        Ok(CompressedBlob {
            n,
            s,
            d,
            bit_width,
            x_min,
            x_max,
            delta,
            active_count,
            raw_bits_estimate,
            entropy_bits_estimate,
            mask_bytes,
            sign_bytes,
            code_lengths,
            payload_bit_len,
            payload,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::Decode {
                offset: self.pos,
                message: format!(
                    "need {len} bytes, only {} remain",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_1x2x2() -> ActivationBlock {
        ActivationBlock::new(1, 2, 2, vec![1.0, -2.0, 3.0, -4.0]).unwrap()
    }

    #[test]
    fn mask_identity_and_zero() {
        let x = block_1x2x2();
        let ones = BinaryMask::new(2, 2, vec![true; 4]).unwrap();
        assert_eq!(apply_mask(&x, &ones).unwrap(), x);
        let zeros = BinaryMask::new(2, 2, vec![false; 4]).unwrap();
        assert_eq!(apply_mask(&x, &zeros).unwrap().values, vec![0.0; 4]);
    }

    #[test]
    fn mask_diagonal() {
        let x = block_1x2x2();
        let diag = BinaryMask::new(2, 2, vec![true, false, false, true]).unwrap();
        assert_eq!(
            apply_mask(&x, &diag).unwrap().values,
            vec![1.0, 0.0, 0.0, -4.0]
        );
    }

    #[test]
    fn mask_shape_mismatch() {
        let x = block_1x2x2();
        let m = BinaryMask::new(2, 3, vec![true; 6]).unwrap();
        assert!(apply_mask(&x, &m).is_err());
    }

    #[test]
    fn quantize_worked_example() {
        // x = [0.5, -1.0, 2.0], b = 3: delta = 0.5, codes [0, -1, +3].
        let q = quantize(&[0.5, -1.0, 2.0], 3).unwrap();
        assert_eq!(q.x_min, 0.5);
        assert_eq!(q.x_max, 2.0);
        assert_eq!(q.delta, 0.5);
        assert_eq!(q.magnitudes, vec![0, 1, 3]);
        assert_eq!(q.signs, vec![false, true, false]);
        let back = dequantize(&q.magnitudes, &q.signs, q.delta, q.x_min);
        assert_eq!(back, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn quantize_degenerate_range() {
        let q = quantize(&[0.75, -0.75, 0.75], 4).unwrap();
        assert_eq!(q.delta, 0.0);
        assert_eq!(q.magnitudes, vec![0, 0, 0]);
        let back = dequantize(&q.magnitudes, &q.signs, q.delta, q.x_min);
        assert_eq!(back, vec![0.75, -0.75, 0.75]);
    }

    #[test]
    fn quantize_rejects_narrow_width_and_empty() {
        assert!(quantize(&[1.0], 1).is_err());
        assert!(quantize(&[], 4).is_err());
    }

    #[test]
    fn quantization_error_within_half_step() {
        // Exhaustive small grid.
        for b in 2..=6u32 {
            let xs: Vec<f32> = (0..64).map(|i| (i as f32 - 31.5) / 7.3).collect();
            let q = quantize(&xs, b).unwrap();
            let back = dequantize(&q.magnitudes, &q.signs, q.delta, q.x_min);
            for (orig, rec) in xs.iter().zip(&back) {
                let err = (orig.abs() as f64 - rec.abs() as f64).abs();
                assert!(
                    err <= q.delta / 2.0 + 1e-9,
                    "b={b}: |{orig}| -> {rec} err {err} > delta/2 {}",
                    q.delta / 2.0
                );
            }
        }
    }

    #[test]
    fn entropy_examples() {
        let (h, _, l_huff) = entropy_bits(&[1, 1, 2, 2], 8).unwrap();
        assert_eq!(h, 1.0);
        assert_eq!(l_huff, 4.0);
        let (h, l_raw, _) = entropy_bits(&[7, 7, 7], 8).unwrap();
        assert_eq!(h, 0.0);
        assert_eq!(l_raw, 24);
        // Uniform over 2^m symbols has entropy m.
        let m = 4;
        let codes: Vec<u32> = (0..(1 << m)).collect();
        let (h, _, _) = entropy_bits(&codes, 8).unwrap();
        assert!((h - m as f64).abs() < 1e-12);
        assert!(entropy_bits(&[], 8).is_err());
    }

    #[test]
    fn roundtrip_is_masked_quantized_input() {
        let x = ActivationBlock::new(
            2,
            2,
            3,
            vec![
                0.5, -1.0, 2.0, 0.1, 0.0, -0.3, 1.5, 0.7, -2.0, 0.9, 0.2, 0.4,
            ],
        )
        .unwrap();
        let mask = BinaryMask::new(2, 3, vec![true, false, true, true, true, false]).unwrap();
        let blob = encode(&x, &mask, 5).unwrap();
        let decoded = decode(&blob).unwrap();

        // Independent route: apply_mask -> quantize -> dequantize.
        let masked = apply_mask(&x, &mask).unwrap();
        let plane = 6;
        let mut active = Vec::new();
        for (i, &v) in x.values.iter().enumerate() {
            if mask.bits[i % plane] {
                active.push(v);
            }
        }
        let q = quantize(&active, 5).unwrap();
        let restored = dequantize(&q.magnitudes, &q.signs, q.delta, q.x_min);
        let mut expect = ActivationBlock::zeros(2, 2, 3);
        let mut cursor = 0;
        for (i, slot) in expect.values.iter_mut().enumerate() {
            if mask.bits[i % plane] {
                *slot = restored[cursor];
                cursor += 1;
            }
        }
        assert_eq!(decoded.values, expect.values);
        let _ = masked;
    }

    #[test]
    fn serialized_roundtrip_and_determinism() {
        let x = block_1x2x2();
        let mask = BinaryMask::new(2, 2, vec![true, true, true, false]).unwrap();
        let blob = encode(&x, &mask, 4).unwrap();
        let bytes = blob.to_bytes();
        let back = CompressedBlob::from_bytes(&bytes).unwrap();
        assert_eq!(back, blob);
        // Re-encoding the decoded tensor reproduces the payload bits.
        let decoded = decode(&blob).unwrap();
        let blob2 = encode(&decoded, &mask, 4).unwrap();
        assert_eq!(blob2.payload, blob.payload);
        assert_eq!(
            blob2.to_bytes(),
            encode(&decoded, &mask, 4).unwrap().to_bytes()
        );
    }

    #[test]
    fn truncated_blob_reports_offset() {
        let x = block_1x2x2();
        let mask = BinaryMask::new(2, 2, vec![true; 4]).unwrap();
        let bytes = encode(&x, &mask, 4).unwrap().to_bytes();
        let err = CompressedBlob::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        match err {
            Error::Decode { offset, .. } => assert!(offset > 0),
            other => panic!("expected decode error, got {other}"),
        }
    }

    #[test]
    fn empty_active_set_decodes_to_zeros() {
        let x = block_1x2x2();
        let mask = BinaryMask::new(2, 2, vec![false; 4]).unwrap();
        let blob = encode(&x, &mask, 8).unwrap();
        assert_eq!(blob.active_count, 0);
        let decoded = decode(&blob).unwrap();
        assert_eq!(decoded.values, vec![0.0; 4]);
    }

    #[test]
    fn incompressible_limit_ratio_near_one() {
        // All-ones mask, b equal to the raw width, uniformly spread codes:
        // ratio ~ 1x within header overhead. Magnitudes cycle over all 128
        // levels of an 8-bit code so the payload entropy is ~7 bits/symbol,
        // plus one sign bit per element.
        let n = 16;
        let (s, d) = (16, 16);
        let values: Vec<f32> = (0..n * s * d)
            .map(|i| {
                let mag = (i % 128) as f32 + 1.0;
                if i % 2 == 0 {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let x = ActivationBlock::new(n, s, d, values).unwrap();
        let mask = BinaryMask::new(s, d, vec![true; s * d]).unwrap();
        let blob = encode(&x, &mask, 8).unwrap();
        let ratio = blob.achieved_ratio(8);
        assert!(ratio > 0.7 && ratio < 1.2, "ratio {ratio}");
    }
}
