//! Arithmetic in GF(2^8).
//!
//! The field is built from the primitive polynomial x^8 + x^4 + x^3 + x^2 + 1
//! (`0x11D`) with generator `2`. Multiplication and division go through
//! exp/log tables built at compile time.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduction polynomial, including the x^8 term.
pub const PRIMITIVE_POLY: u16 = 0x11D;

/// Generator of the multiplicative group.
pub const GENERATOR: u8 = 2;

/// Exp/log tables for the field.
///
/// `exp` has 512 entries so that `exp[log[x] + log[y]]` never needs a modulo.
pub struct FieldTables {
    exp: [u8; 512],
    log: [u8; 256],
}

impl FieldTables {
    const fn build() -> Self {
        let mut exp = [0u8; 512];
        let mut log = [0u8; 256];
        let mut x: u16 = 1;
        let mut i = 0;
        while i < 255 {
            exp[i] = x as u8;
            exp[i + 255] = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= PRIMITIVE_POLY;
            }
            i += 1;
        }
        // exp[510], exp[511] are only reachable through log[0], which is never used.
        exp[510] = exp[0];
        exp[511] = exp[1];
        FieldTables { exp, log }
    }

    /// `GENERATOR^i` for `i < 512`.
    #[inline]
    pub fn exp(&self, i: usize) -> u8 {
        self.exp[i]
    }

    /// Discrete log of a nonzero element. `None` for zero.
    #[inline]
    pub fn log(&self, x: u8) -> Option<u8> {
        if x == 0 {
            None
        } else {
            Some(self.log[x as usize])
        }
    }
}

static TABLES: FieldTables = FieldTables::build();

/// The process-wide field tables.
pub fn tables() -> &'static FieldTables {
    &TABLES
}

/// An element of GF(2^8).
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gf(pub u8);

impl Gf {
    pub const ZERO: Gf = Gf(0);
    pub const ONE: Gf = Gf(1);

    #[inline]
    pub const fn new(value: u8) -> Self {
        Gf(value)
    }

    #[inline]
    pub const fn value(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Multiplicative inverse.
    pub fn inv(self) -> Result<Gf> {
        match TABLES.log(self.0) {
            None => Err(Error::InversionOfZero),
            Some(l) => Ok(Gf(TABLES.exp(255 - l as usize))),
        }
    }

    /// `self^n`, with `0^0 = 1`.
    pub fn pow(self, n: usize) -> Gf {
        if n == 0 {
            return Gf::ONE;
        }
        match TABLES.log(self.0) {
            None => Gf::ZERO,
            Some(l) => Gf(TABLES.exp((l as usize * (n % 255)) % 255)),
        }
    }

    /// `GENERATOR^n`.
    #[inline]
    pub fn alpha_pow(n: usize) -> Gf {
        Gf(TABLES.exp(n % 255))
    }
}

impl fmt::Debug for Gf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf({:#04x})", self.0)
    }
}

impl fmt::Display for Gf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02x}", self.0)
    }
}

impl From<u8> for Gf {
    fn from(v: u8) -> Self {
        Gf(v)
    }
}

impl From<Gf> for u8 {
    fn from(v: Gf) -> Self {
        v.0
    }
}

/// Field addition, which is XOR.
#[inline]
pub fn gf_add(x: Gf, y: Gf) -> Gf {
    Gf(x.0 ^ y.0)
}

/// Table-driven field multiplication.
#[inline]
pub fn gf_mul(x: Gf, y: Gf) -> Gf {
    if x.0 == 0 || y.0 == 0 {
        return Gf::ZERO;
    }
    let lx = TABLES.log[x.0 as usize] as usize;
    let ly = TABLES.log[y.0 as usize] as usize;
    Gf(TABLES.exp[lx + ly])
}

/// Multiplicative inverse; fails on zero.
#[inline]
pub fn gf_inv(x: Gf) -> Result<Gf> {
    x.inv()
}

impl Add for Gf {
    type Output = Gf;
    #[inline]
    fn add(self, rhs: Gf) -> Gf {
        gf_add(self, rhs)
    }
}

impl Sub for Gf {
    type Output = Gf;
    #[inline]
    fn sub(self, rhs: Gf) -> Gf {
        gf_add(self, rhs)
    }
}

impl AddAssign for Gf {
    #[inline]
    fn add_assign(&mut self, rhs: Gf) {
        *self = gf_add(*self, rhs);
    }
}

impl SubAssign for Gf {
    #[inline]
    fn sub_assign(&mut self, rhs: Gf) {
        *self = gf_add(*self, rhs);
    }
}

impl Mul for Gf {
    type Output = Gf;
    #[inline]
    fn mul(self, rhs: Gf) -> Gf {
        gf_mul(self, rhs)
    }
}

impl MulAssign for Gf {
    #[inline]
    fn mul_assign(&mut self, rhs: Gf) {
        *self = gf_mul(*self, rhs);
    }
}

/// Division by zero panics; use [`Gf::inv`] when the divisor may be zero.
impl Div for Gf {
    type Output = Gf;
    #[inline]
    fn div(self, rhs: Gf) -> Gf {
        let inv = rhs.inv().expect("division by zero in GF(2^8)");
        gf_mul(self, inv)
    }
}

impl Sum for Gf {
    fn sum<I: Iterator<Item = Gf>>(iter: I) -> Gf {
        iter.fold(Gf::ZERO, gf_add)
    }
}

/// Multiplication row for a fixed coefficient: `row[x] = c * x`.
pub fn mul_row(c: Gf) -> [u8; 256] {
    let mut row = [0u8; 256];
    if let Some(lc) = TABLES.log(c.0) {
        for (x, out) in row.iter_mut().enumerate().skip(1) {
            *out = TABLES.exp[lc as usize + TABLES.log[x] as usize];
        }
    }
    row
}

/// `dst[i] ^= c * src[i]` over two equal-length byte slices.
pub fn mul_acc(dst: &mut [u8], src: &[u8], c: Gf) {
    assert_eq!(dst.len(), src.len(), "mul_acc length mismatch");
    match c.0 {
        0 => {}
        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
        _ => {
            let row = mul_row(c);
            dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= row[*s as usize]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_examples() {
        assert_eq!(gf_add(Gf(0x00), Gf(0x5A)), Gf(0x5A));
        assert_eq!(gf_add(Gf(0x5A), Gf(0x5A)), Gf(0x00));
        assert_eq!(gf_add(Gf(0x0F), Gf(0xF0)), Gf(0xFF));
    }

    #[test]
    fn mul_examples() {
        for x in 0..=255u8 {
            assert_eq!(gf_mul(Gf(x), Gf::ONE), Gf(x));
            assert_eq!(gf_mul(Gf(x), Gf::ZERO), Gf::ZERO);
        }
        assert_eq!(gf_mul(Gf(0x80), Gf(0x02)), Gf(0x1D));
    }

    #[test]
    fn inv_examples() {
        assert_eq!(gf_inv(Gf(0x01)).unwrap(), Gf(0x01));
        assert_eq!(gf_inv(Gf(0x02)).unwrap(), Gf(0x8E));
        assert!(matches!(gf_inv(Gf(0x00)), Err(Error::InversionOfZero)));
    }

    #[test]
    fn every_nonzero_element_has_an_inverse() {
        for x in 1..=255u8 {
            let inv = Gf(x).inv().unwrap();
            assert_eq!(Gf(x) * inv, Gf::ONE, "x = {x:#04x}");
        }
    }

    #[test]
    fn table_invariants() {
        let t = tables();
        for x in 1..=255u8 {
            assert_eq!(t.exp(t.log(x).unwrap() as usize), x);
        }
        for i in 0..255 {
            assert_eq!(t.exp(i), t.exp(i + 255));
        }
        assert_eq!(t.log(0), None);
    }

    #[test]
    fn pow_matches_repeated_mul() {
        for x in [0u8, 1, 2, 3, 0x53, 0xFF] {
            let mut acc = Gf::ONE;
            for n in 0..600 {
                assert_eq!(Gf(x).pow(n), acc, "x={x} n={n}");
                acc *= Gf(x);
            }
        }
    }

    #[test]
    fn mul_acc_matches_scalar() {
        let src: Vec<u8> = (0..=255).collect();
        for c in [0u8, 1, 2, 0x8E, 0xFF] {
            let mut dst = vec![0x33u8; 256];
            mul_acc(&mut dst, &src, Gf(c));
            for (i, d) in dst.iter().enumerate() {
                assert_eq!(*d, 0x33 ^ gf_mul(Gf(c), Gf(i as u8)).0);
            }
        }
    }
}
