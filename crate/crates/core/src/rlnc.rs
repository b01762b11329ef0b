//! Random linear network coding over a single coding group.
//!
//! A [`CodingGroup`] holds `n` equal-length original packets. The source turns
//! them into coded packets with [`source_encode`], relays mix whatever fresh
//! packets they buffered with [`recode`], and a [`DecoderState`] at any node
//! tracks the span of what has arrived so far. Once that span reaches full
//! rank, [`DecoderState::decode`] returns the original payloads.
//!
//! Wire format of a coded packet (see [`CodedPacket::serialize`]): the `n`
//! encoding-vector symbols, then the `L` payload symbols, each symbol
//! big-endian in ⌈m/8⌉ bytes. No header, no length prefix; the receiver knows
//! `n`, `m` and `L` from the group configuration.

use std::fmt;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::gf::{Field, FieldElement, GfError};

/// Attempts per row when drawing a coefficient vector that must be
/// independent of the rows drawn before it.
pub const MAX_DRAWS_PER_ROW: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RlncError {
    #[error("no independent coefficient vector found after {MAX_DRAWS_PER_ROW} draws")]
    DegenerateRandomness,
    #[error("recoding buffer is empty")]
    EmptyBuffer,
    #[error("packet does not match its group: expected {expected}, got {got}")]
    GroupMismatch { expected: String, got: String },
    #[error("decoder has rank {rank}, need {n}")]
    InsufficientRank { rank: usize, n: usize },
    #[error("malformed packet: expected {expected} bytes, got {got}")]
    MalformedPacket { expected: usize, got: usize },
    #[error("invalid coding group: {0}")]
    InvalidGroup(String),
    #[error("code rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error(transparent)]
    Field(#[from] GfError),
}

/// Ratio of emitted to incoming packets. Stored as an exact fraction so that
/// ⌈r·n⌉ is never off by one from floating-point noise (1.2 × 10 = 12, not 13).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeRate(Ratio<u64>);

impl CodeRate {
    pub const ONE: CodeRate = CodeRate(Ratio::new_raw(1, 1));

    pub fn new(numer: u64, denom: u64) -> Result<CodeRate, RlncError> {
        if numer == 0 || denom == 0 {
            return Err(RlncError::InvalidRate(if denom == 0 {
                f64::INFINITY
            } else {
                0.0
            }));
        }
        Ok(CodeRate(Ratio::new(numer, denom)))
    }

    /// Nearest fraction with denominator 10^9, which is exact for any rate
    /// written with up to nine decimals.
    pub fn from_f64(r: f64) -> Result<CodeRate, RlncError> {
        const SCALE: u64 = 1_000_000_000;
        if !r.is_finite() || r <= 0.0 || r > 1e9 {
            return Err(RlncError::InvalidRate(r));
        }
        let numer = (r * SCALE as f64).round() as u64;
        CodeRate::new(numer, SCALE).map_err(|_| RlncError::InvalidRate(r))
    }

    pub fn ratio(&self) -> Ratio<u64> {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// ⌈r·count⌉.
    pub fn emit_count(&self, count: usize) -> usize {
        let num = *self.0.numer() as u128 * count as u128;
        num.div_ceil(*self.0.denom() as u128) as usize
    }

    pub fn clamp(self, lo: CodeRate, hi: CodeRate) -> CodeRate {
        self.max(lo).min(hi)
    }
}

impl fmt::Debug for CodeRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Display for CodeRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for CodeRate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for CodeRate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = f64::deserialize(d)?;
        CodeRate::from_f64(r).map_err(serde::de::Error::custom)
    }
}

/// Encoding vector Δ followed by coded payload g.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CodedPacket {
    pub encoding_vector: Vec<FieldElement>,
    pub payload: Vec<FieldElement>,
}

impl CodedPacket {
    pub fn new(encoding_vector: Vec<FieldElement>, payload: Vec<FieldElement>) -> Self {
        CodedPacket {
            encoding_vector,
            payload,
        }
    }

    /// Uncoded packet `i` of a group: unit vector e_i with the original payload.
    pub fn uncoded(n: usize, i: usize, payload: Vec<FieldElement>) -> Self {
        let mut v = vec![FieldElement::ZERO; n];
        v[i] = FieldElement::ONE;
        CodedPacket::new(v, payload)
    }

    pub fn serialize(&self, field: Field) -> Vec<u8> {
        let sb = field.symbol_bytes();
        let mut out =
            Vec::with_capacity((self.encoding_vector.len() + self.payload.len()) * sb);
        for sym in self.encoding_vector.iter().chain(&self.payload) {
            let be = sym.value().to_be_bytes();
            out.extend_from_slice(&be[2 - sb..]);
        }
        out
    }

    pub fn deserialize(
        bytes: &[u8],
        n: usize,
        field: Field,
        payload_len: usize,
    ) -> Result<CodedPacket, RlncError> {
        let sb = field.symbol_bytes();
        let expected = (n + payload_len) * sb;
        if bytes.len() != expected {
            return Err(RlncError::MalformedPacket {
                expected,
                got: bytes.len(),
            });
        }
        let mut symbols = bytes.chunks_exact(sb).map(|c| {
            let v = c.iter().fold(0u16, |acc, &b| (acc << 8) | b as u16);
            FieldElement::new(v)
        });
        let encoding_vector = symbols.by_ref().take(n).collect();
        let payload = symbols.collect();
        Ok(CodedPacket::new(encoding_vector, payload))
    }
}

/// The `n` original packets h_1..h_n of one transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingGroup {
    field: Field,
    originals: Vec<Vec<FieldElement>>,
}

impl CodingGroup {
    pub fn new(field: Field, originals: Vec<Vec<FieldElement>>) -> Result<Self, RlncError> {
        let Some(first) = originals.first() else {
            return Err(RlncError::InvalidGroup("group size must be at least 1".into()));
        };
        let len = first.len();
        if originals.iter().any(|h| h.len() != len) {
            return Err(RlncError::InvalidGroup(
                "original packets differ in length".into(),
            ));
        }
        if originals
            .iter()
            .flatten()
            .any(|s| field.element(s.value()).is_none())
        {
            return Err(RlncError::InvalidGroup(format!(
                "symbol outside GF(2^{})",
                field.m()
            )));
        }
        Ok(CodingGroup { field, originals })
    }

    /// Group of `n` packets with `payload_len` uniformly random symbols each.
    pub fn random<R: Rng + ?Sized>(
        field: Field,
        n: usize,
        payload_len: usize,
        rng: &mut R,
    ) -> Result<Self, RlncError> {
        let originals = (0..n)
            .map(|_| (0..payload_len).map(|_| field.random_element(rng)).collect())
            .collect();
        CodingGroup::new(field, originals)
    }

    /// Fragments `data` into `n` packets of equal length, zero-padding the
    /// tail. The caller keeps `data.len()` to undo the padding with
    /// [`CodingGroup::reassemble`].
    pub fn from_bytes(field: Field, data: &[u8], n: usize) -> Result<Self, RlncError> {
        if n == 0 {
            return Err(RlncError::InvalidGroup("group size must be at least 1".into()));
        }
        let sb = field.symbol_bytes();
        let symbols_total = data.len().div_ceil(sb);
        let payload_len = symbols_total.div_ceil(n).max(1);
        let mut padded = data.to_vec();
        padded.resize(payload_len * n * sb, 0);
        let originals = padded
            .chunks_exact(payload_len * sb)
            .map(|chunk| {
                chunk
                    .chunks_exact(sb)
                    .map(|c| FieldElement::new(c.iter().fold(0u16, |a, &b| (a << 8) | b as u16)))
                    .collect()
            })
            .collect();
        CodingGroup::new(field, originals)
    }

    /// Concatenates decoded payloads back into bytes and drops the padding.
    pub fn reassemble(field: Field, payloads: &[Vec<FieldElement>], data_len: usize) -> Vec<u8> {
        let sb = field.symbol_bytes();
        let mut out: Vec<u8> = payloads
            .iter()
            .flatten()
            .flat_map(|s| s.value().to_be_bytes()[2 - sb..].to_vec())
            .collect();
        out.truncate(data_len);
        out
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn n(&self) -> usize {
        self.originals.len()
    }

    pub fn payload_len(&self) -> usize {
        self.originals[0].len()
    }

    pub fn originals(&self) -> &[Vec<FieldElement>] {
        &self.originals
    }

    /// Payload Σ_j coeffs[j]·h_j.
    pub fn combine(&self, coeffs: &[FieldElement]) -> Vec<FieldElement> {
        let mut g = vec![FieldElement::ZERO; self.payload_len()];
        for (c, h) in coeffs.iter().zip(&self.originals) {
            self.field.mul_add_assign(&mut g, *c, h);
        }
        g
    }
}

/// Draws `count` coefficient vectors of dimension `dim`, the first
/// min(count, dim) of them mutually independent.
fn draw_coefficients<R: Rng + ?Sized>(
    field: Field,
    dim: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<FieldElement>>, RlncError> {
    let mut span = DecoderState::new(field, dim, 0);
    let mut rows = Vec::with_capacity(count);
    for i in 0..count {
        let row = if i < dim {
            let mut found = None;
            for _ in 0..MAX_DRAWS_PER_ROW {
                let candidate: Vec<_> = (0..dim).map(|_| field.random_element(rng)).collect();
                if span.insert_row(candidate.clone()) {
                    found = Some(candidate);
                    break;
                }
            }
            found.ok_or(RlncError::DegenerateRandomness)?
        } else {
            (0..dim).map(|_| field.random_element(rng)).collect()
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Stateful source encoder: every call continues the same packet stream, and
/// the first `n` packets it ever emits have independent encoding vectors.
#[derive(Debug, Clone)]
pub struct SourceEncoder {
    group: CodingGroup,
    span: DecoderState,
    emitted: usize,
}

impl SourceEncoder {
    pub fn new(group: CodingGroup) -> Self {
        let span = DecoderState::new(group.field(), group.n(), 0);
        SourceEncoder {
            group,
            span,
            emitted: 0,
        }
    }

    pub fn group(&self) -> &CodingGroup {
        &self.group
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    pub fn next_packets<R: Rng + ?Sized>(
        &mut self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<CodedPacket>, RlncError> {
        let field = self.group.field();
        let n = self.group.n();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let delta = if self.span.rank() < n {
                let mut found = None;
                for _ in 0..MAX_DRAWS_PER_ROW {
                    let candidate: Vec<_> = (0..n).map(|_| field.random_element(rng)).collect();
                    if self.span.insert_row(candidate.clone()) {
                        found = Some(candidate);
                        break;
                    }
                }
                found.ok_or(RlncError::DegenerateRandomness)?
            } else {
                (0..n).map(|_| field.random_element(rng)).collect()
            };
            let g = self.group.combine(&delta);
            out.push(CodedPacket::new(delta, g));
            self.emitted += 1;
        }
        Ok(out)
    }
}

/// Source-side encoding: ⌈r·n⌉ packets whose payloads are random linear
/// combinations of the group, the first min(n, ⌈r·n⌉) with independent
/// encoding vectors.
pub fn source_encode<R: Rng + ?Sized>(
    group: &CodingGroup,
    rate: CodeRate,
    rng: &mut R,
) -> Result<Vec<CodedPacket>, RlncError> {
    source_encode_count(group, rate.emit_count(group.n()), rng)
}

/// Like [`source_encode`] with an explicit packet count.
pub fn source_encode_count<R: Rng + ?Sized>(
    group: &CodingGroup,
    count: usize,
    rng: &mut R,
) -> Result<Vec<CodedPacket>, RlncError> {
    SourceEncoder::new(group.clone()).next_packets(count, rng)
}

/// Relay-side recoding of the buffered fresh packets into ⌈r·n_τ⌉ new ones.
/// The same coefficients mix encoding vectors and payloads, so every output
/// stays consistent with the original group.
pub fn recode<R: Rng + ?Sized>(
    field: Field,
    fresh: &[CodedPacket],
    rate: CodeRate,
    rng: &mut R,
) -> Result<Vec<CodedPacket>, RlncError> {
    recode_count(field, fresh, rate.emit_count(fresh.len()), rng)
}

/// Like [`recode`] with an explicit packet count.
pub fn recode_count<R: Rng + ?Sized>(
    field: Field,
    fresh: &[CodedPacket],
    count: usize,
    rng: &mut R,
) -> Result<Vec<CodedPacket>, RlncError> {
    let Some(first) = fresh.first() else {
        return Err(RlncError::EmptyBuffer);
    };
    let (n, l) = (first.encoding_vector.len(), first.payload.len());
    if let Some(bad) = fresh
        .iter()
        .find(|p| p.encoding_vector.len() != n || p.payload.len() != l)
    {
        return Err(RlncError::GroupMismatch {
            expected: format!("n={n}, L={l}"),
            got: format!("n={}, L={}", bad.encoding_vector.len(), bad.payload.len()),
        });
    }
    let rows = draw_coefficients(field, fresh.len(), count, rng)?;
    Ok(rows
        .into_iter()
        .map(|coeffs| {
            let mut delta = vec![FieldElement::ZERO; n];
            let mut g = vec![FieldElement::ZERO; l];
            for (c, p) in coeffs.iter().zip(fresh) {
                field.mul_add_assign(&mut delta, *c, &p.encoding_vector);
                field.mul_add_assign(&mut g, *c, &p.payload);
            }
            CodedPacket::new(delta, g)
        })
        .collect())
}

/// Incrementally row-reduced span of the packets a node has accepted.
///
/// Rows are kept in reduced row-echelon form over the first `n` columns
/// (pivot 1, pivot column zero everywhere else) with the payload carried
/// alongside, so full rank means the payload columns already hold h_1..h_n.
#[derive(Debug, Clone)]
pub struct DecoderState {
    field: Field,
    n: usize,
    payload_len: usize,
    rows: Vec<Vec<FieldElement>>,
    pivot_row: Vec<Option<usize>>,
}

impl DecoderState {
    pub fn new(field: Field, n: usize, payload_len: usize) -> Self {
        DecoderState {
            field,
            n,
            payload_len,
            rows: Vec::with_capacity(n),
            pivot_row: vec![None; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn is_complete(&self) -> bool {
        self.rank() == self.n
    }

    /// Adds `p` to the span. Returns whether it was fresh, i.e. whether its
    /// encoding vector raised the rank. Non-fresh packets leave the state
    /// untouched.
    pub fn accept(&mut self, p: &CodedPacket) -> Result<bool, RlncError> {
        if p.encoding_vector.len() != self.n || p.payload.len() != self.payload_len {
            return Err(RlncError::GroupMismatch {
                expected: format!("n={}, L={}", self.n, self.payload_len),
                got: format!("n={}, L={}", p.encoding_vector.len(), p.payload.len()),
            });
        }
        let mut row = Vec::with_capacity(self.n + self.payload_len);
        row.extend_from_slice(&p.encoding_vector);
        row.extend_from_slice(&p.payload);
        Ok(self.insert_row(row))
    }

    /// Whether `vector` lies outside the current span. Does not modify state.
    pub fn is_innovative(&self, vector: &[FieldElement]) -> bool {
        let mut row = vector.to_vec();
        self.reduce(&mut row, self.n);
        row.iter().any(|x| !x.is_zero())
    }

    /// dim(span(self) + span(other)) - rank(self): how many of `other`'s
    /// degrees of freedom `self` is still missing.
    pub fn missing_from(&self, other: &DecoderState) -> usize {
        let mut probe = DecoderState::new(self.field, self.n, 0);
        probe.rows = self.rows.iter().map(|r| r[..self.n].to_vec()).collect();
        probe.pivot_row = self.pivot_row.clone();
        other
            .rows
            .iter()
            .filter(|r| probe.insert_row(r[..other.n].to_vec()))
            .count()
    }

    /// The reduced basis as packets. Spans the same space as everything
    /// accepted.
    pub fn basis(&self) -> Vec<CodedPacket> {
        self.rows
            .iter()
            .map(|r| CodedPacket::new(r[..self.n].to_vec(), r[self.n..].to_vec()))
            .collect()
    }

    /// Solves Δ·H = G for the original payloads H.
    pub fn decode(&self) -> Result<Vec<Vec<FieldElement>>, RlncError> {
        if !self.is_complete() {
            return Err(RlncError::InsufficientRank {
                rank: self.rank(),
                n: self.n,
            });
        }
        Ok(self
            .pivot_row
            .iter()
            .map(|r| self.rows[r.expect("full rank")][self.n..].to_vec())
            .collect())
    }

    /// Eliminates the pivot columns of `row` below `width`. `row` may be
    /// shorter than the stored rows (vector part only).
    fn reduce(&self, row: &mut [FieldElement], width: usize) {
        let len = row.len();
        for col in 0..width {
            let c = row[col];
            if c.is_zero() {
                continue;
            }
            if let Some(r) = self.pivot_row[col] {
                // char 2: subtraction is addition
                self.field.mul_add_assign(row, c, &self.rows[r][..len]);
            }
        }
    }

    fn insert_row(&mut self, mut row: Vec<FieldElement>) -> bool {
        self.reduce(&mut row, self.n);
        let Some(pivot) = row[..self.n].iter().position(|x| !x.is_zero()) else {
            return false;
        };
        let inv = self.field.inv(row[pivot]).expect("pivot is nonzero");
        self.field.scale_assign(&mut row, inv);
        for other in self.rows.iter_mut() {
            let c = other[pivot];
            if !c.is_zero() {
                self.field.mul_add_assign(other, c, &row);
            }
        }
        self.pivot_row[pivot] = Some(self.rows.len());
        self.rows.push(row);
        true
    }
}
