//! Paillier additively homomorphic encryption over `num-bigint`.
//!
//! The generator is fixed to `g = n + 1`, so `g^m mod n² = 1 + m·n` and encryption
//! costs a single modular exponentiation (`r^n`). Ciphertexts carry the id of the key
//! that produced them; mixing keys is rejected instead of silently producing garbage.
//!
//! This is a semi-honest research implementation: no constant-time arithmetic and no
//! CCA hardening.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default modulus size used by the CLI.
pub const DEFAULT_KEY_BITS: u64 = 1024;

/// Miller-Rabin rounds per candidate prime.
const MILLER_RABIN_ROUNDS: usize = 64;

/// Candidates tried per prime before giving up.
const MAX_PRIME_CANDIDATES: usize = 200_000;

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PaillierError {
    #[error("invalid key size {0}: must be even and at least 256 bits")]
    InvalidKeySize(u64),
    #[error("prime generation failed after {0} candidates")]
    Generation(usize),
    #[error("{0}")]
    Domain(String),
    #[error("key mismatch: ciphertext under key {found}, expected {expected}")]
    KeyMismatch { expected: KeyId, found: KeyId },
    #[error("ciphertext value outside [0, n^2)")]
    Corrupt,
    #[error("malformed key encoding: {0}")]
    Malformed(String),
}

/// Opaque key identifier derived from the modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyId(pub u64);

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl KeyId {
    fn from_modulus(n: &BigUint) -> Self {
        let digest = Sha256::digest(n.to_bytes_be());
        let mut id = [0u8; 8];
        id.copy_from_slice(&digest[..8]);
        KeyId(u64::from_be_bytes(id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    g: BigUint,
    key_id: KeyId,
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    lambda: BigUint,
    mu: BigUint,
    key_id: KeyId,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKey").field("key_id", &self.key_id).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    key_id: KeyId,
}

/// A public/private key pair as provisioned to the data parties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
}

impl PublicKey {
    /// Rebuilds a public key from its modulus.
    pub fn from_modulus(n: BigUint) -> Result<Self, PaillierError> {
        if n < BigUint::from(3u32) || n.is_even() {
            return Err(PaillierError::Malformed("modulus must be odd and > 2".into()));
        }
        let n_squared = &n * &n;
        let g = &n + 1u32;
        let key_id = KeyId::from_modulus(&n);
        Ok(PublicKey { n, n_squared, g, key_id })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    fn check(&self, c: &Ciphertext) -> Result<(), PaillierError> {
        if c.key_id != self.key_id {
            return Err(PaillierError::KeyMismatch { expected: self.key_id, found: c.key_id });
        }
        Ok(())
    }

    /// Serialized as a single length-prefixed big-endian integer (`n`).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_int(&mut out, &self.n);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PaillierError> {
        let mut cursor = 0;
        let n = take_int(bytes, &mut cursor)?;
        if cursor != bytes.len() {
            return Err(PaillierError::Malformed("trailing bytes".into()));
        }
        PublicKey::from_modulus(n)
    }
}

impl PrivateKey {
    pub fn key_id(&self) -> KeyId {
        self.key_id
    }
}

impl Ciphertext {
    /// Wraps a raw value, e.g. one read off the wire. No range check happens here;
    /// [`decrypt`] rejects out-of-range values.
    pub fn from_raw(value: BigUint, key_id: KeyId) -> Self {
        Ciphertext { value, key_id }
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }
}

impl KeyPair {
    /// Key file layout: `n`, `lambda`, `mu`, each as `[u32 length][big-endian magnitude]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_int(&mut out, &self.public.n);
        put_int(&mut out, &self.private.lambda);
        put_int(&mut out, &self.private.mu);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PaillierError> {
        let mut cursor = 0;
        let n = take_int(bytes, &mut cursor)?;
        let lambda = take_int(bytes, &mut cursor)?;
        let mu = take_int(bytes, &mut cursor)?;
        if cursor != bytes.len() {
            return Err(PaillierError::Malformed("trailing bytes".into()));
        }
        let public = PublicKey::from_modulus(n)?;
        let private = PrivateKey { lambda, mu, key_id: public.key_id };
        Ok(KeyPair { public, private })
    }
}

fn put_int(out: &mut Vec<u8>, v: &BigUint) {
    let bytes = if v.is_zero() { Vec::new() } else { v.to_bytes_be() };
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
}

fn take_int(bytes: &[u8], cursor: &mut usize) -> Result<BigUint, PaillierError> {
    let len_end = *cursor + 4;
    let len_bytes = bytes
        .get(*cursor..len_end)
        .ok_or_else(|| PaillierError::Malformed(format!("truncated length at byte {}", *cursor)))?;
    let len = u32::from_be_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
    let body = bytes
        .get(len_end..len_end + len)
        .ok_or_else(|| PaillierError::Malformed(format!("truncated integer at byte {len_end}")))?;
    *cursor = len_end + len;
    Ok(BigUint::from_bytes_be(body))
}

/// Uniform integer in `[0, bound)` by rejection sampling.
pub fn random_below<R: RngCore + ?Sized>(rng: &mut R, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero(), "empty range");
    let bits = bound.bits();
    let byte_len = bits.div_ceil(8) as usize;
    let excess = (byte_len as u64 * 8 - bits) as u32;
    let mut buf = vec![0u8; byte_len];
    loop {
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> excess;
        let candidate = BigUint::from_bytes_be(&buf);
        if &candidate < bound {
            return candidate;
        }
    }
}

fn random_odd_with_top_bits<R: RngCore + ?Sized>(rng: &mut R, bits: u64) -> BigUint {
    let byte_len = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; byte_len];
    rng.fill_bytes(&mut buf);
    let excess = (byte_len as u64 * 8 - bits) as u32;
    buf[0] &= 0xffu8 >> excess;
    let mut candidate = BigUint::from_bytes_be(&buf);
    // top two bits set so that p·q has exactly 2·bits bits
    candidate.set_bit(bits - 1, true);
    candidate.set_bit(bits - 2, true);
    candidate.set_bit(0, true);
    candidate
}

/// Miller-Rabin probable-prime test with `rounds` random bases.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().expect("n > 2");
    let d = &n_minus_one >> s;
    let base_range = n - 3u32;
    'witness: for _ in 0..rounds {
        let a = random_below(rng, &base_range) + 2u32;
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn generate_prime<R: RngCore + ?Sized>(rng: &mut R, bits: u64) -> Result<BigUint, PaillierError> {
    for _ in 0..MAX_PRIME_CANDIDATES {
        let candidate = random_odd_with_top_bits(rng, bits);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return Ok(candidate);
        }
    }
    Err(PaillierError::Generation(MAX_PRIME_CANDIDATES))
}

/// `a⁻¹ mod m`, if it exists.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    let (a, m) = (BigInt::from(a.clone()), BigInt::from(m.clone()));
    let ext = a.extended_gcd(&m);
    if !ext.gcd.is_one() {
        return None;
    }
    let inv = ((ext.x % &m) + &m) % &m;
    inv.to_biguint()
}

/// Generates a key pair whose modulus has exactly `bits` bits.
pub fn keygen<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> Result<KeyPair, PaillierError> {
    if bits < 256 || !bits.is_multiple_of(2) {
        return Err(PaillierError::InvalidKeySize(bits));
    }
    let half = bits / 2;
    for _ in 0..16 {
        let p = generate_prime(rng, half)?;
        let q = generate_prime(rng, half)?;
        if p == q {
            continue;
        }
        let n = &p * &q;
        let p1 = &p - 1u32;
        let q1 = &q - 1u32;
        if !n.gcd(&(&p1 * &q1)).is_one() {
            continue;
        }
        let lambda = p1.lcm(&q1);
        let public = PublicKey::from_modulus(n)?;
        let u = public.g.modpow(&lambda, &public.n_squared);
        let l = l_function(&u, &public.n);
        let Some(mu) = mod_inverse(&l, &public.n) else { continue };
        let private = PrivateKey { lambda, mu, key_id: public.key_id };
        return Ok(KeyPair { public, private });
    }
    Err(PaillierError::Generation(16))
}

fn l_function(x: &BigUint, n: &BigUint) -> BigUint {
    (x - 1u32) / n
}

/// Fresh `r` in `[1, n)` coprime to `n`.
fn random_unit<R: RngCore + ?Sized>(rng: &mut R, n: &BigUint) -> BigUint {
    loop {
        let r = random_below(rng, n);
        if !r.is_zero() && r.gcd(n).is_one() {
            return r;
        }
    }
}

/// `E[m] = (1 + m·n) · r^n mod n²`.
pub fn encrypt<R: RngCore + ?Sized>(
    pk: &PublicKey,
    m: &BigUint,
    rng: &mut R,
) -> Result<Ciphertext, PaillierError> {
    if m >= &pk.n {
        return Err(PaillierError::Domain("plaintext must lie in [0, n)".into()));
    }
    let r = random_unit(rng, &pk.n);
    let gm = (m * &pk.n + 1u32) % &pk.n_squared;
    let rn = r.modpow(&pk.n, &pk.n_squared);
    Ok(Ciphertext { value: (gm * rn) % &pk.n_squared, key_id: pk.key_id })
}

pub fn decrypt(sk: &PrivateKey, pk: &PublicKey, c: &Ciphertext) -> Result<BigUint, PaillierError> {
    if sk.key_id != pk.key_id {
        return Err(PaillierError::KeyMismatch { expected: pk.key_id, found: sk.key_id });
    }
    pk.check(c)?;
    if c.value >= pk.n_squared {
        return Err(PaillierError::Corrupt);
    }
    let u = c.value.modpow(&sk.lambda, &pk.n_squared);
    Ok((l_function(&u, &pk.n) * &sk.mu) % &pk.n)
}

/// `E[a]·E[b] = E[a + b mod n]`.
pub fn add_encrypted(
    pk: &PublicKey,
    c1: &Ciphertext,
    c2: &Ciphertext,
) -> Result<Ciphertext, PaillierError> {
    pk.check(c1)?;
    pk.check(c2)?;
    Ok(Ciphertext { value: (&c1.value * &c2.value) % &pk.n_squared, key_id: pk.key_id })
}

/// `E[m]^s = E[s·m mod n]`.
pub fn scalar_mul(pk: &PublicKey, c: &Ciphertext, s: &BigUint) -> Result<Ciphertext, PaillierError> {
    pk.check(c)?;
    if s >= &pk.n {
        return Err(PaillierError::Domain("scalar must lie in [0, n)".into()));
    }
    Ok(Ciphertext { value: c.value.modpow(s, &pk.n_squared), key_id: pk.key_id })
}
