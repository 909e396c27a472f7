//! Fixed-point embedding of signed reals into the Paillier plaintext ring `Z_n`.
//!
//! A real `x` maps to `round(x · 2^f) mod n`; residues in the upper half of the ring
//! stand for negative values. Homomorphic scaling by an integer `s` multiplies the
//! embedded value by `s`, which [`FixedPointCodec::decode`] can divide back out.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{FromPrimitive, ToPrimitive, Zero};
use thiserror::Error;

use crate::linalg::RealVector;

pub const DEFAULT_FRACTION_BITS: u32 = 32;
pub const MIN_FRACTION_BITS: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("value {value} exceeds codec bound {bound}{}", index.map(|i| format!(" at index {i}")).unwrap_or_default())]
    Overflow { value: f64, bound: f64, index: Option<usize> },
    #[error("invalid codec parameters: {0}")]
    Parameters(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointCodec {
    fraction_bits: u32,
    modulus: BigUint,
    half: BigUint,
    max_magnitude: f64,
    max_scalar: BigUint,
}

impl FixedPointCodec {
    /// Builds a codec with an explicit magnitude bound `T`.
    ///
    /// Requires `2^f · T · max_scalar · 2 < n`, so any encoded value scaled by at most
    /// `max_scalar` still decodes with the right sign.
    pub fn new(
        modulus: BigUint,
        fraction_bits: u32,
        max_magnitude: f64,
        max_scalar: u64,
    ) -> Result<Self, EncodingError> {
        if fraction_bits < MIN_FRACTION_BITS {
            return Err(EncodingError::Parameters(format!(
                "fraction bits {fraction_bits} below minimum {MIN_FRACTION_BITS}"
            )));
        }
        if !(max_magnitude.is_finite() && max_magnitude > 0.0) || max_scalar == 0 {
            return Err(EncodingError::Parameters("bounds must be positive".into()));
        }
        let capacity = Self::capacity(&modulus, fraction_bits, max_scalar);
        if max_magnitude >= capacity {
            return Err(EncodingError::Parameters(format!(
                "magnitude bound {max_magnitude:e} needs a larger modulus (capacity {capacity:e})"
            )));
        }
        let half = &modulus >> 1u32;
        Ok(FixedPointCodec {
            fraction_bits,
            modulus,
            half,
            max_magnitude,
            max_scalar: BigUint::from(max_scalar),
        })
    }

    /// Largest magnitude bound `T` the modulus can support for the given scalar range.
    pub fn capacity(modulus: &BigUint, fraction_bits: u32, max_scalar: u64) -> f64 {
        let denom = BigUint::from(max_scalar) << (fraction_bits + 1);
        let cap = modulus / denom;
        // f64 range ends near 2^1024
        cap.to_f64().unwrap_or(f64::MAX).min(2f64.powi(900))
    }

    pub fn fraction_bits(&self) -> u32 {
        self.fraction_bits
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn max_magnitude(&self) -> f64 {
        self.max_magnitude
    }

    pub fn max_scalar(&self) -> &BigUint {
        &self.max_scalar
    }

    /// Quantization step `2^-f`.
    pub fn resolution(&self) -> f64 {
        2f64.powi(-(self.fraction_bits as i32))
    }

    pub fn encode(&self, x: f64) -> Result<BigUint, EncodingError> {
        self.encode_at(x, None)
    }

    fn encode_at(&self, x: f64, index: Option<usize>) -> Result<BigUint, EncodingError> {
        if !x.is_finite() || x.abs() > self.max_magnitude {
            return Err(EncodingError::Overflow { value: x, bound: self.max_magnitude, index });
        }
        let scaled = (x * 2f64.powi(self.fraction_bits as i32)).round();
        let signed = BigInt::from_f64(scaled).expect("finite value");
        Ok(match signed.sign() {
            Sign::Minus => &self.modulus - signed.magnitude(),
            _ => signed.magnitude().clone(),
        })
    }

    /// Decodes `m`, dividing out an integer scale that was applied homomorphically.
    /// Pass `1` when the scale is unknown to get the scaled real.
    pub fn decode(&self, m: &BigUint, applied_scale: &BigUint) -> f64 {
        let magnitude = if m > &self.half {
            -(&self.modulus - m).to_f64().unwrap_or(f64::INFINITY)
        } else {
            m.to_f64().unwrap_or(f64::INFINITY)
        };
        let scale = if applied_scale.is_zero() { 1.0 } else { applied_scale.to_f64().unwrap_or(1.0) };
        magnitude / 2f64.powi(self.fraction_bits as i32) / scale
    }

    pub fn decode_unscaled(&self, m: &BigUint) -> f64 {
        self.decode(m, &BigUint::from(1u32))
    }

    pub fn encode_vector(&self, v: &[f64]) -> Result<Vec<BigUint>, EncodingError> {
        v.iter().enumerate().map(|(i, &x)| self.encode_at(x, Some(i))).collect()
    }

    pub fn decode_vector(&self, v: &[BigUint], applied_scale: &BigUint) -> RealVector {
        RealVector::new(v.iter().map(|m| self.decode(m, applied_scale)).collect())
    }
}
