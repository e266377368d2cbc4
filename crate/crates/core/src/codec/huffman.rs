//! Canonical Huffman coding over magnitude symbols.
//!
//! Code lengths come from a deterministic two-queue Huffman construction
//! (ties broken by symbol value); codes are then assigned canonically in
//! (length, symbol) order, so identical inputs always produce identical
//! payload bytes.

use std::collections::BTreeMap;

use super::bitio::{BitReader, BitWriter};
use crate::error::{Error, Result};

/// Per-symbol code length table, sorted by symbol.
pub type CodeLengths = Vec<(u32, u8)>;

/// Computes Huffman code lengths for the given symbol frequencies.
///
/// A single distinct symbol gets length 0: its occurrences cost no payload
/// bits since the count lives in the header.
pub fn code_lengths(freqs: &BTreeMap<u32, u64>) -> CodeLengths {
    if freqs.is_empty() {
        return Vec::new();
    }
    if freqs.len() == 1 {
        let (&sym, _) = freqs.iter().next().unwrap();
        return vec![(sym, 0)];
    }

    // Leaves sorted ascending by (count, symbol); BTreeMap iteration already
    // orders equal counts by symbol.
    let mut leaves: Vec<(u64, usize)> = Vec::new(); // (count, node id)
    let mut parents: Vec<Option<usize>> = Vec::new();
    let symbols: Vec<u32> = freqs.keys().cloned().collect();
    for (i, (_, &count)) in freqs.iter().enumerate() {
        leaves.push((count, i));
        parents.push(None);
    }
    leaves.sort_by_key(|&(count, id)| (count, id));

    let mut internal: Vec<(u64, usize)> = Vec::new();
    let mut li = 0;
    let mut ii = 0;
    // Prefer the leaf queue on ties so construction is deterministic.
    let take = |leaves: &[(u64, usize)],
                internal: &[(u64, usize)],
                li: &mut usize,
                ii: &mut usize|
     -> (u64, usize) {
        let leaf = leaves.get(*li);
        let node = internal.get(*ii);
        match (leaf, node) {
            (Some(&l), Some(&n)) => {
                if l.0 <= n.0 {
                    *li += 1;
                    l
                } else {
                    *ii += 1;
                    n
                }
            }
            (Some(&l), None) => {
                *li += 1;
                l
            }
            (None, Some(&n)) => {
                *ii += 1;
                n
            }
            (None, None) => unreachable!(),
        }
    };

    while leaves.len() - li + internal.len() - ii > 1 {
        let a = take(&leaves, &internal, &mut li, &mut ii);
        let b = take(&leaves, &internal, &mut li, &mut ii);
        let id = parents.len();
        parents.push(None);
        parents[a.1] = Some(id);
        parents[b.1] = Some(id);
        internal.push((a.0 + b.0, id));
    }

    let mut lengths: CodeLengths = Vec::with_capacity(symbols.len());
    for (i, &sym) in symbols.iter().enumerate() {
        let mut depth = 0u8;
        let mut node = i;
        while let Some(p) = parents[node] {
            depth += 1;
            node = p;
        }
        lengths.push((sym, depth));
    }
    lengths
}

/// Canonical code assignment: symbols ordered by (length, symbol) receive
/// consecutive codes.
fn assign_codes(lengths: &CodeLengths) -> BTreeMap<u32, (u64, u8)> {
    let mut order: Vec<(u8, u32)> = lengths.iter().map(|&(s, l)| (l, s)).collect();
    order.sort();
    let mut codes = BTreeMap::new();
    let mut code = 0u64;
    let mut prev_len = 0u8;
    for &(len, sym) in &order {
        if len == 0 {
            codes.insert(sym, (0, 0));
            continue;
        }
        code <<= len - prev_len;
        codes.insert(sym, (code, len));
        code += 1;
        prev_len = len;
    }
    codes
}

/// Encodes `symbols` with the canonical codes for `lengths`.
/// Returns (payload bytes, payload bit length).
pub fn encode(symbols: &[u32], lengths: &CodeLengths) -> (Vec<u8>, u64) {
    let codes = assign_codes(lengths);
    let mut w = BitWriter::new();
    for sym in symbols {
        let &(code, len) = codes.get(sym).expect("symbol missing from code table");
        w.write_bits(code, len);
    }
    let bits = w.bit_len();
    (w.into_bytes(), bits)
}

/// Decodes `count` symbols from a canonical-Huffman payload.
pub fn decode(payload: &[u8], bit_len: u64, lengths: &CodeLengths, count: u64) -> Result<Vec<u32>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if lengths.is_empty() {
        return Err(Error::Decode {
            offset: 0,
            message: "nonzero symbol count with empty code table".into(),
        });
    }
    if lengths.len() == 1 {
        return Ok(vec![lengths[0].0; count as usize]);
    }
    // Reverse map (code, len) -> symbol.
    let codes = assign_codes(lengths);
    let mut rev: BTreeMap<(u8, u64), u32> = BTreeMap::new();
    let mut max_len = 0u8;
    for (&sym, &(code, len)) in &codes {
        rev.insert((len, code), sym);
        max_len = max_len.max(len);
    }

    let mut r = BitReader::new(payload, bit_len);
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut code = 0u64;
        let mut len = 0u8;
        loop {
            let bit = r.read_bit().ok_or(Error::Decode {
                offset: payload.len(),
                message: "payload truncated mid-symbol".into(),
            })?;
            code = (code << 1) | bit as u64;
            len += 1;
            if let Some(&sym) = rev.get(&(len, code)) {
                out.push(sym);
                break;
            }
            if len > max_len {
                return Err(Error::Decode {
                    offset: payload.len(),
                    message: "invalid code in payload".into(),
                });
            }
        }
    }
    Ok(out)
}
