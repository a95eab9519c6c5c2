use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{check_range, hash_parts, CryptoError, CryptoProvider, KeyMaterial, SchemeId};

/// 2^61 - 1.
const P: u64 = (1 << 61) - 1;
/// Order of the multiplicative group.
const N: u64 = P - 1;
/// Primitive root mod P.
const G: u64 = 37;

const ELEMENT_LEN: usize = 8;
const TAG_LEN: usize = 16;

fn mul(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % P as u128) as u64
}

fn pow(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    base %= P;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        exp >>= 1;
    }
    acc
}

fn scalar_from(parts: &[&[u8]]) -> u64 {
    let d = hash_parts(parts);
    let mut head = [0u8; 8];
    head.copy_from_slice(&d.as_bytes()[..8]);
    u64::from_be_bytes(head) % N
}

fn read_u64(bytes: &[u8]) -> Option<u64> {
    Some(u64::from_be_bytes(bytes.get(..8)?.try_into().ok()?))
}

/// Deterministic filler that brings the public key up to its nominal length.
fn padding(element: u64, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut counter = 0u32;
    while out.len() < len {
        let block = hash_parts(&[b"authcoin/toy/pad", &element.to_be_bytes(), &counter.to_be_bytes()]);
        out.extend_from_slice(block.as_bytes());
        counter += 1;
    }
    out.truncate(len);
    out
}

fn keystream_xor(shared: u64, c1: u64, data: &mut [u8]) {
    for (i, chunk) in data.chunks_mut(32).enumerate() {
        let block =
            hash_parts(&[b"authcoin/toy/stream", &shared.to_be_bytes(), &c1.to_be_bytes(), &(i as u64).to_be_bytes()]);
        for (b, k) in chunk.iter_mut().zip(block.as_bytes()) {
            *b ^= k;
        }
    }
}

fn tag(shared: u64, c1: u64, body: &[u8]) -> [u8; TAG_LEN] {
    let d = hash_parts(&[b"authcoin/toy/mac", &shared.to_be_bytes(), &c1.to_be_bytes(), body]);
    let mut out = [0u8; TAG_LEN];
    out.copy_from_slice(&d.as_bytes()[..TAG_LEN]);
    out
}

/// Seed-reproducible discrete-log scheme for tests and simulation.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyProvider;

impl ToyProvider {
    fn public_element(&self, key: &KeyMaterial) -> Result<u64, CryptoError> {
        if key.scheme != SchemeId::ToyDeterministic {
            return Err(CryptoError::MalformedKey("not a toy key".into()));
        }
        let y = read_u64(&key.public_bytes).ok_or_else(|| CryptoError::MalformedKey("public key too short".into()))?;
        if y == 0 || y >= P {
            return Err(CryptoError::MalformedKey("public element out of range".into()));
        }
        Ok(y)
    }

    fn private_scalar(&self, key: &KeyMaterial) -> Result<u64, CryptoError> {
        if key.scheme != SchemeId::ToyDeterministic {
            return Err(CryptoError::MalformedKey("not a toy key".into()));
        }
        if key.private_bytes.len() != 8 {
            return Err(CryptoError::MalformedKey("missing private key".into()));
        }
        let x = read_u64(&key.private_bytes).expect("length checked");
        if x == 0 || x >= N {
            return Err(CryptoError::MalformedKey("private scalar out of range".into()));
        }
        Ok(x)
    }
}

impl CryptoProvider for ToyProvider {
    fn scheme(&self) -> SchemeId {
        SchemeId::ToyDeterministic
    }

    fn min_key_bits(&self) -> u32 {
        512
    }

    fn max_key_bits(&self) -> u32 {
        16_384
    }

    fn generate_keypair(&self, seed: u64, min_bits: u32) -> Result<KeyMaterial, CryptoError> {
        check_range(self, min_bits)?;
        let bytes = min_bits.div_ceil(8) as usize;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = rng.gen_range(2..N);
        let y = pow(G, x);
        let mut public_bytes = y.to_be_bytes().to_vec();
        public_bytes.extend(padding(y, bytes - ELEMENT_LEN));
        Ok(KeyMaterial {
            scheme: SchemeId::ToyDeterministic,
            key_length_bits: (bytes * 8) as u32,
            public_bytes,
            private_bytes: x.to_be_bytes().to_vec(),
        })
    }

    fn sign(&self, key: &KeyMaterial, message: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let x = self.private_scalar(key)?;
        let y = pow(G, x);
        let k = scalar_from(&[b"authcoin/toy/k", &x.to_be_bytes(), message]).max(1);
        let r = pow(G, k);
        let e = scalar_from(&[b"authcoin/toy/e", &r.to_be_bytes(), &y.to_be_bytes(), message]);
        let s = ((k as u128 + e as u128 * x as u128) % N as u128) as u64;
        let mut sig = r.to_be_bytes().to_vec();
        sig.extend_from_slice(&s.to_be_bytes());
        Ok(sig)
    }

    fn verify(&self, key: &KeyMaterial, message: &[u8], signature: &[u8]) -> Result<bool, CryptoError> {
        let y = self.public_element(key)?;
        if signature.len() != 16 {
            return Ok(false);
        }
        let r = read_u64(&signature[..8]).expect("length checked");
        let s = read_u64(&signature[8..]).expect("length checked");
        if r == 0 || r >= P || s >= N {
            return Ok(false);
        }
        let e = scalar_from(&[b"authcoin/toy/e", &r.to_be_bytes(), &y.to_be_bytes(), message]);
        Ok(pow(G, s) == mul(r, pow(y, e)))
    }

    fn encrypt(&self, key: &KeyMaterial, plaintext: &[u8], rng: &mut dyn RngCore) -> Result<Vec<u8>, CryptoError> {
        let y = self.public_element(key)?;
        let k = rng.gen_range(1..N);
        let c1 = pow(G, k);
        let shared = pow(y, k);
        let mut body = plaintext.to_vec();
        keystream_xor(shared, c1, &mut body);
        let mut out = c1.to_be_bytes().to_vec();
        out.extend_from_slice(&tag(shared, c1, &body));
        out.extend_from_slice(&body);
        Ok(out)
    }

    fn decrypt(&self, key: &KeyMaterial, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let x = self.private_scalar(key)?;
        if ciphertext.len() < ELEMENT_LEN + TAG_LEN {
            return Err(CryptoError::DecryptionFailure);
        }
        let c1 = read_u64(ciphertext).expect("length checked");
        if c1 == 0 || c1 >= P {
            return Err(CryptoError::DecryptionFailure);
        }
        let shared = pow(c1, x);
        let expected = &ciphertext[ELEMENT_LEN..ELEMENT_LEN + TAG_LEN];
        let mut body = ciphertext[ELEMENT_LEN + TAG_LEN..].to_vec();
        if tag(shared, c1, &body) != expected {
            return Err(CryptoError::DecryptionFailure);
        }
        keystream_xor(shared, c1, &mut body);
        Ok(body)
    }

    fn check_public(&self, key: &KeyMaterial) -> Result<(), CryptoError> {
        let y = self.public_element(key)?;
        if key.public_bytes.len() * 8 != key.key_length_bits as usize {
            return Err(CryptoError::MalformedKey("declared length does not match key".into()));
        }
        if key.public_bytes[ELEMENT_LEN..] != padding(y, key.public_bytes.len() - ELEMENT_LEN)[..] {
            return Err(CryptoError::MalformedKey("bad key padding".into()));
        }
        Ok(())
    }
}
