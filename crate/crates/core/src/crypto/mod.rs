//! Cryptographic primitives behind a provider interface.
//!
//! Two providers are available:
//!
//! * [`ToyProvider`]: Schnorr signatures and hashed ElGamal over the
//!   multiplicative group of the Mersenne prime 2^61 - 1. Keys are padded to
//!   their nominal length so the key-length checks behave as for real keys.
//!   It is fully reproducible from a seed and fast enough for large
//!   simulations. It is NOT secure.
//! * [`StandardProvider`]: RSA (PKCS#1 v1.5 signatures with SHA-256, OAEP
//!   key wrapping) combined with ChaCha20-Poly1305 for payloads.
//!
//! Key material carries its [`SchemeId`], and the free functions in this
//! module dispatch on it, so callers rarely touch a provider directly.

mod digest;
mod keystore;
mod standard;
mod toy;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;

pub use digest::{hash, hash_parts, Digest, ParseDigestError, DIGEST_LEN};
pub use keystore::{read_keystore, write_keystore, KeystoreError};
pub use standard::StandardProvider;
pub use toy::ToyProvider;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("key size of {requested} bits is outside the provider range {min}..={max}")]
    UnsupportedKeySize { requested: u32, min: u32, max: u32 },
    #[error("malformed key material: {0}")]
    MalformedKey(String),
    #[error("decryption failed")]
    DecryptionFailure,
}

/// Identifies the scheme a key belongs to. Stored as one byte on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchemeId {
    ToyDeterministic = 0,
    Standard = 1,
}

impl SchemeId {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::ToyDeterministic),
            1 => Some(Self::Standard),
            _ => None,
        }
    }

    pub fn as_byte(self) -> u8 {
        self as u8
    }

    pub fn provider(self) -> &'static dyn CryptoProvider {
        match self {
            Self::ToyDeterministic => &ToyProvider,
            Self::Standard => &StandardProvider,
        }
    }
}

/// A key pair, or just its public half when `private_bytes` is empty.
///
/// Private bytes never leave the owning actor; chain records only ever copy
/// `public_bytes` and `key_length_bits`.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub scheme: SchemeId,
    pub key_length_bits: u32,
    pub public_bytes: Vec<u8>,
    pub private_bytes: Vec<u8>,
}

impl std::fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyMaterial")
            .field("scheme", &self.scheme)
            .field("key_length_bits", &self.key_length_bits)
            .field("public", &hex::encode(&self.public_bytes[..self.public_bytes.len().min(8)]))
            .field("has_private", &!self.private_bytes.is_empty())
            .finish()
    }
}

impl KeyMaterial {
    pub fn public_only(scheme: SchemeId, key_length_bits: u32, public_bytes: Vec<u8>) -> Self {
        Self { scheme, key_length_bits, public_bytes, private_bytes: Vec::new() }
    }

    pub fn has_private(&self) -> bool {
        !self.private_bytes.is_empty()
    }

    pub fn to_public(&self) -> Self {
        Self::public_only(self.scheme, self.key_length_bits, self.public_bytes.clone())
    }
}

/// Operations every scheme provides. Implementations are stateless.
pub trait CryptoProvider: Send + Sync {
    fn scheme(&self) -> SchemeId;

    fn min_key_bits(&self) -> u32;

    fn max_key_bits(&self) -> u32;

    /// Generates a key pair of at least `min_bits`. The same seed and size
    /// always give the same pair.
    fn generate_keypair(&self, seed: u64, min_bits: u32) -> Result<KeyMaterial, CryptoError>;

    fn sign(&self, key: &KeyMaterial, message: &[u8]) -> Result<Vec<u8>, CryptoError>;

    fn verify(&self, key: &KeyMaterial, message: &[u8], signature: &[u8]) -> Result<bool, CryptoError>;

    fn encrypt(&self, key: &KeyMaterial, plaintext: &[u8], rng: &mut dyn RngCore) -> Result<Vec<u8>, CryptoError>;

    fn decrypt(&self, key: &KeyMaterial, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError>;

    /// Checks that the public half parses and matches its declared length.
    fn check_public(&self, key: &KeyMaterial) -> Result<(), CryptoError>;
}

fn check_range(provider: &dyn CryptoProvider, min_bits: u32) -> Result<(), CryptoError> {
    if min_bits < provider.min_key_bits() || min_bits > provider.max_key_bits() {
        return Err(CryptoError::UnsupportedKeySize {
            requested: min_bits,
            min: provider.min_key_bits(),
            max: provider.max_key_bits(),
        });
    }
    Ok(())
}

pub fn generate_keypair(scheme: SchemeId, seed: u64, min_bits: u32) -> Result<KeyMaterial, CryptoError> {
    scheme.provider().generate_keypair(seed, min_bits)
}

pub fn sign(key: &KeyMaterial, message: &[u8]) -> Result<Vec<u8>, CryptoError> {
    key.scheme.provider().sign(key, message)
}

/// Verifies a signature. Malformed keys and garbage signatures verify false.
pub fn verify(key: &KeyMaterial, message: &[u8], signature: &[u8]) -> bool {
    key.scheme.provider().verify(key, message, signature).unwrap_or(false)
}

pub fn encrypt(key: &KeyMaterial, plaintext: &[u8], rng: &mut dyn RngCore) -> Result<Vec<u8>, CryptoError> {
    key.scheme.provider().encrypt(key, plaintext, rng)
}

pub fn decrypt(key: &KeyMaterial, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    key.scheme.provider().decrypt(key, ciphertext)
}

/// Encrypts under a shared 32-byte secret. Output is `nonce ‖ ciphertext`.
pub fn seal_symmetric(secret: &[u8; 32], plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(secret));
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let body = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    let mut out = nonce.to_vec();
    out.extend_from_slice(&body);
    out
}

pub fn open_symmetric(secret: &[u8; 32], sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if sealed.len() < 12 {
        return Err(CryptoError::DecryptionFailure);
    }
    let (nonce, body) = sealed.split_at(12);
    ChaCha20Poly1305::new(Key::from_slice(secret))
        .decrypt(Nonce::from_slice(nonce), body)
        .map_err(|_| CryptoError::DecryptionFailure)
}
