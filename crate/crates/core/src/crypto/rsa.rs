//! Textbook RSA over `num-bigint`.
//!
//! Key generation picks two primes of half the requested width with the top
//! two bits set, so the modulus has exactly `bits` bits. The private exponent
//! is the inverse of `e` modulo phi(n); it also inverts `e` modulo lambda(n).
//! Private operations use the CRT form when the primes are known.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::rngs::OsRng;

use super::random::fill_random;
use super::CryptoError;

pub const DEFAULT_RSA_BITS: u64 = 2048;
pub const MIN_RSA_BITS: u64 = 16;

const PUBLIC_EXPONENT: u32 = 65537;
const MAX_PRIME_ATTEMPTS: usize = 100_000;

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub n: BigUint,
    pub e: BigUint,
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    pub n: BigUint,
    pub d: BigUint,
    crt: Option<Crt>,
}

#[derive(Clone, PartialEq, Eq)]
struct Crt {
    p: BigUint,
    q: BigUint,
    dp: BigUint,
    dq: BigUint,
    qinv: BigUint,
}

#[derive(Clone, PartialEq, Eq)]
pub struct RsaKeyPair {
    public: PublicKey,
    private: PrivateKey,
}

impl PublicKey {
    pub fn new(n: BigUint, e: BigUint) -> Self {
        Self { n, e }
    }

    /// Modulus width in bytes; the length of every wrapped block.
    pub fn size_bytes(&self) -> usize {
        self.n.bits().div_ceil(8) as usize
    }

    /// Two-line text form: `n=<hex>` and `e=<hex>`.
    pub fn to_text(&self) -> String {
        format!(
            "n={}\ne={}\n",
            self.n.to_str_radix(16),
            self.e.to_str_radix(16)
        )
    }

    pub fn from_text(text: &str) -> Result<Self, CryptoError> {
        let fields = parse_fields(text)?;
        Ok(Self {
            n: field(&fields, "n")?,
            e: field(&fields, "e")?,
        })
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({} bits, e={})", self.n.bits(), self.e)
    }
}

impl PrivateKey {
    pub fn size_bytes(&self) -> usize {
        self.n.bits().div_ceil(8) as usize
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PrivateKey({} bits, ..)", self.n.bits())
    }
}

impl fmt::Debug for RsaKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RsaKeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl RsaKeyPair {
    /// Builds a pair from known primes and public exponent.
    pub fn from_primes(p: BigUint, q: BigUint, e: BigUint) -> Result<Self, CryptoError> {
        if p == q || p <= BigUint::one() || q <= BigUint::one() {
            return Err(CryptoError::InvalidKey(
                "primes must be distinct and > 1".into(),
            ));
        }
        let one = BigUint::one();
        let phi = (&p - &one) * (&q - &one);
        let d = mod_inverse(&e, &phi)
            .ok_or_else(|| CryptoError::InvalidKey("e not invertible mod phi(n)".into()))?;
        let n = &p * &q;
        let crt = Crt::new(&p, &q, &d);
        Ok(Self {
            public: PublicKey { n: n.clone(), e },
            private: PrivateKey { n, d, crt },
        })
    }

    /// Pair with no CRT parameters; private operations fall back to `c^d mod n`.
    pub fn from_components(n: BigUint, e: BigUint, d: BigUint) -> Self {
        Self {
            public: PublicKey { n: n.clone(), e },
            private: PrivateKey { n, d, crt: None },
        }
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn private(&self) -> &PrivateKey {
        &self.private
    }

    pub fn modulus(&self) -> &BigUint {
        &self.public.n
    }

    pub fn public_exponent(&self) -> &BigUint {
        &self.public.e
    }

    pub fn private_exponent(&self) -> &BigUint {
        &self.private.d
    }

    /// Line-oriented text form holding every component in lowercase hex.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "n={}\ne={}\nd={}\n",
            self.public.n.to_str_radix(16),
            self.public.e.to_str_radix(16),
            self.private.d.to_str_radix(16)
        );
        if let Some(crt) = &self.private.crt {
            s.push_str(&format!(
                "p={}\nq={}\n",
                crt.p.to_str_radix(16),
                crt.q.to_str_radix(16)
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CryptoError> {
        let fields = parse_fields(text)?;
        let n = field(&fields, "n")?;
        let e = field(&fields, "e")?;
        let d = field(&fields, "d")?;
        let has_primes = fields.iter().any(|(k, _)| k == "p");
        let pair = if has_primes {
            let pair = Self::from_primes(field(&fields, "p")?, field(&fields, "q")?, e)?;
            if pair.public.n != n || pair.private.d != d {
                return Err(CryptoError::InvalidKey(
                    "inconsistent key components".into(),
                ));
            }
            pair
        } else {
            Self::from_components(n, e, d)
        };
        Ok(pair)
    }

    /// Encrypts and decrypts `rounds` random blocks below the modulus.
    pub fn self_test(&self, rounds: usize) -> Result<(), CryptoError> {
        let mut rng = OsRng;
        for _ in 0..rounds {
            let m = rng.gen_biguint_below(&self.public.n);
            let c = rsa_encrypt_block(&m, &self.public)?;
            if rsa_decrypt_block(&c, &self.private)? != m {
                return Err(CryptoError::InvalidKey(
                    "round-trip self-test failed".into(),
                ));
            }
        }
        Ok(())
    }
}

impl Crt {
    fn new(p: &BigUint, q: &BigUint, d: &BigUint) -> Option<Self> {
        let one = BigUint::one();
        let qinv = mod_inverse(q, p)?;
        Some(Self {
            p: p.clone(),
            q: q.clone(),
            dp: d % (p - &one),
            dq: d % (q - &one),
            qinv,
        })
    }

    fn apply(&self, c: &BigUint) -> BigUint {
        let m1 = c.modpow(&self.dp, &self.p);
        let m2 = c.modpow(&self.dq, &self.q);
        let m2p = &m2 % &self.p;
        let diff = if m1 >= m2p {
            &m1 - &m2p
        } else {
            &self.p - (&m2p - &m1)
        };
        let h = (&self.qinv * diff) % &self.p;
        m2 + h * &self.q
    }
}

fn parse_fields(text: &str) -> Result<Vec<(String, String)>, CryptoError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| CryptoError::InvalidKey(format!("bad key line {l:?}")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn field(fields: &[(String, String)], name: &str) -> Result<BigUint, CryptoError> {
    let (_, v) = fields
        .iter()
        .find(|(k, _)| k == name)
        .ok_or_else(|| CryptoError::InvalidKey(format!("missing field {name}")))?;
    BigUint::parse_bytes(v.as_bytes(), 16)
        .ok_or_else(|| CryptoError::InvalidKey(format!("field {name} is not hex")))
}

/// Inverse of `a` modulo `m` via the extended Euclidean algorithm.
pub(crate) fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    use num_bigint::BigInt;
    let m_int = BigInt::from(m.clone());
    let e = BigInt::from(a.clone()).extended_gcd(&m_int);
    if !e.gcd.is_one() {
        return None;
    }
    e.x.mod_floor(&m_int).to_biguint()
}

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

pub(crate) fn is_probable_prime(n: &BigUint, rounds: usize) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_one = n - &one;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    let mut rng = OsRng;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_one {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn random_prime(bits: u64) -> Option<BigUint> {
    let mut rng = OsRng;
    let rounds = if bits > 512 { 24 } else { 40 };
    for _ in 0..MAX_PRIME_ATTEMPTS {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, rounds) {
            return Some(candidate);
        }
    }
    None
}

/// Generates a keypair whose modulus has exactly `bits` bits.
pub fn rsa_generate(bits: u64) -> Result<RsaKeyPair, CryptoError> {
    if bits < MIN_RSA_BITS {
        return Err(CryptoError::PrimeGenerationFailure { bits });
    }
    let p_bits = bits.div_ceil(2);
    let q_bits = bits / 2;
    let one = BigUint::one();
    for _ in 0..64 {
        let p = random_prime(p_bits).ok_or(CryptoError::PrimeGenerationFailure { bits })?;
        let q = random_prime(q_bits).ok_or(CryptoError::PrimeGenerationFailure { bits })?;
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != bits {
            continue;
        }
        let phi = (&p - &one) * (&q - &one);
        let Some(e) = pick_public_exponent(&phi) else {
            continue;
        };
        return RsaKeyPair::from_primes(p, q, e);
    }
    Err(CryptoError::PrimeGenerationFailure { bits })
}

// 65537 unless the modulus is too small to admit it; toy keys take the
// smallest odd exponent coprime to phi.
fn pick_public_exponent(phi: &BigUint) -> Option<BigUint> {
    let f4 = BigUint::from(PUBLIC_EXPONENT);
    if f4 < *phi && phi.gcd(&f4).is_one() {
        return Some(f4);
    }
    let mut e = BigUint::from(3u32);
    while e < *phi {
        if phi.gcd(&e).is_one() {
            return Some(e);
        }
        e += 2u32;
    }
    None
}

/// Raw `m^e mod n`.
pub fn rsa_encrypt_block(m: &BigUint, key: &PublicKey) -> Result<BigUint, CryptoError> {
    if *m >= key.n {
        return Err(CryptoError::MessageOutOfRange);
    }
    Ok(m.modpow(&key.e, &key.n))
}

/// Raw `c^d mod n`.
pub fn rsa_decrypt_block(c: &BigUint, key: &PrivateKey) -> Result<BigUint, CryptoError> {
    if *c >= key.n {
        return Err(CryptoError::MessageOutOfRange);
    }
    Ok(match &key.crt {
        Some(crt) => crt.apply(c),
        None => c.modpow(&key.d, &key.n),
    })
}

/// PKCS#1 v1.5 type-2 encryption of a short message (the session key).
pub(crate) fn wrap(msg: &[u8], key: &PublicKey) -> Result<Vec<u8>, CryptoError> {
    let k = key.size_bytes();
    if k < msg.len() + 11 {
        return Err(CryptoError::KeyTooSmall {
            bytes: k,
            needed: msg.len() + 11,
        });
    }
    let mut em = vec![0u8; k];
    em[1] = 2;
    let pad_len = k - 3 - msg.len();
    fill_nonzero(&mut em[2..2 + pad_len])?;
    em[2 + pad_len] = 0;
    em[3 + pad_len..].copy_from_slice(msg);
    let c = rsa_encrypt_block(&BigUint::from_bytes_be(&em), key)?;
    Ok(left_pad(&c.to_bytes_be(), k))
}

pub(crate) fn unwrap(block: &[u8], key: &PrivateKey) -> Result<Vec<u8>, CryptoError> {
    let k = key.size_bytes();
    if block.len() != k {
        return Err(CryptoError::DecryptionFailure);
    }
    let c = BigUint::from_bytes_be(block);
    let m = rsa_decrypt_block(&c, key).map_err(|_| CryptoError::DecryptionFailure)?;
    let em = left_pad(&m.to_bytes_be(), k);
    if em[0] != 0 || em[1] != 2 {
        return Err(CryptoError::DecryptionFailure);
    }
    let sep = em[2..]
        .iter()
        .position(|&b| b == 0)
        .ok_or(CryptoError::DecryptionFailure)?;
    if sep < 8 {
        return Err(CryptoError::DecryptionFailure);
    }
    Ok(em[2 + sep + 1..].to_vec())
}

fn fill_nonzero(buf: &mut [u8]) -> Result<(), CryptoError> {
    fill_random(buf)?;
    for b in buf.iter_mut() {
        while *b == 0 {
            let mut one = [0u8; 1];
            fill_random(&mut one)?;
            *b = one[0];
        }
    }
    Ok(())
}

fn left_pad(bytes: &[u8], len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len.saturating_sub(bytes.len())];
    out.extend_from_slice(bytes);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    // Independent oracle: signed extended Euclid on machine integers.
    fn egcd_inverse(a: i64, m: i64) -> i64 {
        let (mut old_r, mut r) = (a, m);
        let (mut old_s, mut s) = (1i64, 0i64);
        while r != 0 {
            let q = old_r / r;
            (old_r, r) = (r, old_r - q * r);
            (old_s, s) = (s, old_s - q * s);
        }
        assert_eq!(old_r, 1);
        old_s.rem_euclid(m)
    }

    fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
        let mut acc = 1u64;
        b %= m;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * b % m;
            }
            b = b * b % m;
            e >>= 1;
        }
        acc
    }

    fn toy() -> RsaKeyPair {
        RsaKeyPair::from_primes(big(61), big(53), big(17)).unwrap()
    }

    #[test]
    fn toy_construction() {
        let kp = toy();
        assert_eq!(*kp.modulus(), big(3233));
        let d = egcd_inverse(17, 60 * 52);
        assert_eq!(d, 2753);
        assert_eq!(*kp.private_exponent(), big(d as u64));
        // Also inverts e modulo lambda(n) = lcm(60, 52) = 780.
        assert_eq!(17 * 2753 % 780, 1);
    }

    #[test]
    fn toy_blocks() {
        let kp = toy();
        assert_eq!(pow_mod(65, 17, 3233), 2790);
        assert_eq!(pow_mod(2790, 2753, 3233), 65);
        let c = rsa_encrypt_block(&big(65), kp.public()).unwrap();
        assert_eq!(c, big(2790));
        assert_eq!(rsa_decrypt_block(&c, kp.private()).unwrap(), big(65));
        let no_crt = RsaKeyPair::from_components(big(3233), big(17), big(2753));
        assert_eq!(rsa_decrypt_block(&c, no_crt.private()).unwrap(), big(65));
        for m in [0u64, 1] {
            assert_eq!(rsa_encrypt_block(&big(m), kp.public()).unwrap(), big(m));
        }
        assert_eq!(
            rsa_encrypt_block(&big(3233), kp.public()),
            Err(CryptoError::MessageOutOfRange)
        );
    }

    #[test]
    fn toy_round_trip_all_messages() {
        let kp = toy();
        for m in 0..3233u64 {
            let c = rsa_encrypt_block(&big(m), kp.public()).unwrap();
            assert_eq!(c, big(pow_mod(m, 17, 3233)));
            assert_eq!(rsa_decrypt_block(&c, kp.private()).unwrap(), big(m));
        }
    }

    #[test]
    fn generated_pairs_round_trip() {
        for bits in [16u64, 17, 64, 256, 512] {
            let kp = rsa_generate(bits).unwrap();
            assert_eq!(kp.modulus().bits(), bits);
            let lambda = {
                let text = kp.to_text();
                let back = RsaKeyPair::from_text(&text).unwrap();
                assert_eq!(back, kp);
                let crt = kp.private().crt.as_ref().unwrap();
                (&crt.p - 1u32).lcm(&(&crt.q - 1u32))
            };
            assert!((kp.public_exponent() * kp.private_exponent() % &lambda).is_one());
            kp.self_test(100).unwrap();
        }
    }

    #[test]
    fn generate_2048() {
        let kp = rsa_generate(2048).unwrap();
        assert_eq!(kp.modulus().bits(), 2048);
        assert_eq!(*kp.public_exponent(), big(65537));
        kp.self_test(5).unwrap();
    }

    #[test]
    fn too_few_bits() {
        assert!(matches!(
            rsa_generate(8),
            Err(CryptoError::PrimeGenerationFailure { .. })
        ));
    }

    #[test]
    fn primality_against_sieve() {
        let limit = 5000usize;
        let mut sieve = vec![true; limit];
        sieve[0] = false;
        sieve[1] = false;
        for i in 2..limit {
            if sieve[i] {
                for j in (i * i..limit).step_by(i) {
                    sieve[j] = false;
                }
            }
        }
        for (n, &prime) in sieve.iter().enumerate() {
            assert_eq!(is_probable_prime(&big(n as u64), 20), prime, "{n}");
        }
        // Carmichael numbers.
        for n in [561u64, 1105, 1729, 2465, 2821, 6601, 8911] {
            assert!(!is_probable_prime(&big(n), 20));
        }
    }

    #[test]
    fn wrap_unwrap() {
        let kp = rsa_generate(512).unwrap();
        let a = wrap(b"0123456789abcdef", kp.public()).unwrap();
        let b = wrap(b"0123456789abcdef", kp.public()).unwrap();
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
        assert_eq!(unwrap(&a, kp.private()).unwrap(), b"0123456789abcdef");
        let toy = toy();
        assert!(matches!(
            wrap(b"0123456789abcdef", toy.public()),
            Err(CryptoError::KeyTooSmall { .. })
        ));
    }
}
