//! Arithmetic in GF(2^m) for m = 8 and m = 16.
//!
//! Elements are polynomials over GF(2) packed into the low `m` bits of a
//! `u16`. Addition is XOR. Multiplication goes through log/antilog tables that
//! are built once per field from [`shift_and_reduce_mul`], which stays around
//! as the reference implementation the tables are tested against.
//!
//! The reduction polynomials are a convention, not something the coding
//! scheme prescribes:
//!
//! | m  | polynomial                  | hex       |
//! |----|-----------------------------|-----------|
//! | 8  | x^8 + x^4 + x^3 + x + 1     | `0x11B`   |
//! | 16 | x^16 + x^12 + x^3 + x + 1   | `0x1100B` |
//!
//! Two implementations only interoperate at the packet level if they agree on
//! the polynomial.

use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use thiserror::Error;

/// Reduction polynomial for GF(2^8), including the x^8 term.
pub const POLY_GF256: u32 = 0x11B;
/// Reduction polynomial for GF(2^16), including the x^16 term.
pub const POLY_GF65536: u32 = 0x1100B;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("inversion of zero")]
    InversionOfZero,
    #[error("unsupported field exponent m = {0} (supported: 8, 16)")]
    UnsupportedExponent(u32),
}

/// An element of GF(2^m). Only meaningful together with the [`Field`] that
/// produced it.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldElement(u16);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub const fn new(value: u16) -> Self {
        FieldElement(value)
    }

    #[inline]
    pub const fn value(self) -> u16 {
        self.0
    }

    #[inline]
    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for FieldElement {
    fn from(v: u8) -> Self {
        FieldElement(v as u16)
    }
}

/// Carry-less multiply of `a` and `b` reduced modulo `poly`, one bit at a
/// time. Slow; used to build the tables and as a test oracle.
pub fn shift_and_reduce_mul(a: u16, b: u16, m: u32, poly: u32) -> u16 {
    let high = 1u32 << m;
    let mut a = a as u32;
    let mut b = b as u32;
    let mut acc = 0u32;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & high != 0 {
            a ^= poly;
        }
    }
    acc as u16
}

struct Tables {
    m: u32,
    poly: u32,
    order: usize,
    // log[0] is unused.
    log: Vec<u32>,
    // Doubled so that exp[log a + log b] needs no reduction.
    exp: Vec<u16>,
}

impl Tables {
    fn build(m: u32, poly: u32) -> Tables {
        let size = 1usize << m;
        let order = size - 1;
        let generator = (2..size as u32)
            .map(|g| g as u16)
            .find(|&g| multiplicative_order(g, m, poly) == order)
            .expect("reduction polynomial must be irreducible");

        let mut exp = vec![0u16; 2 * order];
        let mut log = vec![0u32; size];
        let mut x: u16 = 1;
        for i in 0..order {
            exp[i] = x;
            log[x as usize] = i as u32;
            x = shift_and_reduce_mul(x, generator, m, poly);
        }
        for i in order..2 * order {
            exp[i] = exp[i - order];
        }
        Tables {
            m,
            poly,
            order,
            log,
            exp,
        }
    }
}

fn multiplicative_order(g: u16, m: u32, poly: u32) -> usize {
    let mut x = g;
    let mut k = 1;
    while x != 1 {
        x = shift_and_reduce_mul(x, g, m, poly);
        k += 1;
        if k > (1usize << m) {
            return 0;
        }
    }
    k
}

static GF256: OnceLock<Tables> = OnceLock::new();
static GF65536: OnceLock<Tables> = OnceLock::new();

/// Handle to a (lazily built, immutable, shared) field.
#[derive(Clone, Copy)]
pub struct Field {
    tables: &'static Tables,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("m", &self.tables.m)
            .field("poly", &format_args!("{:#x}", self.tables.poly))
            .finish()
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.tables.m == other.tables.m && self.tables.poly == other.tables.poly
    }
}

impl Eq for Field {}

impl Field {
    pub fn new(m: u32) -> Result<Field, GfError> {
        match m {
            8 => Ok(Field::gf256()),
            16 => Ok(Field::gf65536()),
            other => Err(GfError::UnsupportedExponent(other)),
        }
    }

    pub fn gf256() -> Field {
        Field {
            tables: GF256.get_or_init(|| Tables::build(8, POLY_GF256)),
        }
    }

    pub fn gf65536() -> Field {
        Field {
            tables: GF65536.get_or_init(|| Tables::build(16, POLY_GF65536)),
        }
    }

    /// Field exponent m.
    pub fn m(&self) -> u32 {
        self.tables.m
    }

    pub fn poly(&self) -> u32 {
        self.tables.poly
    }

    /// Number of elements, 2^m.
    pub fn size(&self) -> usize {
        1usize << self.tables.m
    }

    /// Bytes per serialized symbol, ⌈m/8⌉.
    pub fn symbol_bytes(&self) -> usize {
        (self.tables.m as usize).div_ceil(8)
    }

    /// Wraps a raw value, rejecting anything outside [0, 2^m).
    pub fn element(&self, value: u16) -> Option<FieldElement> {
        ((value as usize) < self.size()).then_some(FieldElement(value))
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 ^ b.0)
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.0 == 0 || b.0 == 0 {
            return FieldElement::ZERO;
        }
        let t = self.tables;
        let idx = t.log[a.0 as usize] + t.log[b.0 as usize];
        FieldElement(t.exp[idx as usize])
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, GfError> {
        if a.is_zero() {
            return Err(GfError::InversionOfZero);
        }
        let t = self.tables;
        let l = t.log[a.0 as usize] as usize;
        Ok(FieldElement(t.exp[(t.order - l) % t.order]))
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement, GfError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// Reference product via [`shift_and_reduce_mul`].
    pub fn mul_slow(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(shift_and_reduce_mul(a.0, b.0, self.tables.m, self.tables.poly))
    }

    /// Uniform draw from [0, 2^m).
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        let raw: u16 = rng.random();
        FieldElement(raw & (self.size() - 1) as u16)
    }

    /// `dst[i] += c * src[i]` for every symbol.
    pub fn mul_add_assign(&self, dst: &mut [FieldElement], c: FieldElement, src: &[FieldElement]) {
        debug_assert_eq!(dst.len(), src.len());
        if c.is_zero() {
            return;
        }
        if c == FieldElement::ONE {
            for (d, s) in dst.iter_mut().zip(src) {
                d.0 ^= s.0;
            }
            return;
        }
        let t = self.tables;
        let lc = t.log[c.0 as usize];
        for (d, s) in dst.iter_mut().zip(src) {
            if s.0 != 0 {
                d.0 ^= t.exp[(lc + t.log[s.0 as usize]) as usize];
            }
        }
    }

    /// `row[i] *= c` for every symbol.
    pub fn scale_assign(&self, row: &mut [FieldElement], c: FieldElement) {
        for x in row.iter_mut() {
            *x = self.mul(*x, c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(v: u16) -> FieldElement {
        FieldElement::new(v)
    }

    #[test]
    fn add_examples() {
        let f = Field::gf256();
        assert_eq!(f.add(e(0x57), e(0x57)), FieldElement::ZERO);
        assert_eq!(f.add(e(0x57), e(0x83)), e(0x57 ^ 0x83));
        for a in 0..256u16 {
            assert_eq!(f.add(e(a), FieldElement::ZERO), e(a));
        }
    }

    #[test]
    fn mul_and_inverse_examples() {
        let f = Field::gf256();
        // Brute-force search over the slow multiplier.
        let inv2 = (1..256u16)
            .find(|&b| shift_and_reduce_mul(2, b, 8, POLY_GF256) == 1)
            .unwrap();
        assert_eq!(inv2, 0x8D);
        assert_eq!(f.mul(e(0x02), e(0x8D)), FieldElement::ONE);
        assert_eq!(f.inv(e(0x02)).unwrap(), e(0x8D));
        assert_eq!(f.inv(FieldElement::ONE).unwrap(), FieldElement::ONE);
        assert_eq!(f.inv(FieldElement::ZERO), Err(GfError::InversionOfZero));
        // AES test vector {57}·{83} = {c1}
        assert_eq!(f.mul(e(0x57), e(0x83)), e(0xC1));
    }

    #[test]
    fn inverse_is_involution() {
        for f in [Field::gf256(), Field::gf65536()] {
            let step = if f.m() == 8 { 1 } else { 97 };
            for a in (1..f.size() as u32).step_by(step) {
                let a = e(a as u16);
                let ia = f.inv(a).unwrap();
                assert_eq!(f.mul(a, ia), FieldElement::ONE);
                assert_eq!(f.inv(ia).unwrap(), a);
            }
        }
    }

    #[test]
    fn gf65536_tables_match_slow_path() {
        let f = Field::gf65536();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100_000 {
            let a = f.random_element(&mut rng);
            let b = f.random_element(&mut rng);
            assert_eq!(f.mul(a, b), f.mul_slow(a, b));
        }
    }

    #[test]
    fn unsupported_exponent() {
        assert_eq!(Field::new(12).unwrap_err(), GfError::UnsupportedExponent(12));
        assert_eq!(Field::new(16).unwrap().m(), 16);
        assert_eq!(Field::gf256().symbol_bytes(), 1);
        assert_eq!(Field::gf65536().symbol_bytes(), 2);
        assert!(Field::gf256().element(256).is_none());
    }

    #[test]
    fn random_element_is_deterministic() {
        let f = Field::gf256();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..16).map(|_| f.random_element(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(1), draw(1));
        assert_ne!(draw(1), draw(2));
    }

    #[test]
    fn random_element_is_uniform() {
        // Each of the 256 bins should sit within 5σ of 10^6/256.
        let f = Field::gf256();
        let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
        let draws = 1_000_000usize;
        let mut bins = [0usize; 256];
        for _ in 0..draws {
            bins[f.random_element(&mut rng).value() as usize] += 1;
        }
        let p = 1.0 / 256.0;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (v, &c) in bins.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() < 5.0 * sigma,
                "bin {v}: {c} vs {mean}"
            );
        }
        let chi2: f64 = bins
            .iter()
            .map(|&c| (c as f64 - mean).powi(2) / mean)
            .sum();
        // 255 dof; 99.9th percentile is about 330.
        assert!(chi2 < 330.0, "chi2 = {chi2}");
    }
}
