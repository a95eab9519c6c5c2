use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rsa::pkcs1::{DecodeRsaPrivateKey, DecodeRsaPublicKey, EncodeRsaPrivateKey, EncodeRsaPublicKey};
use rsa::pkcs1v15::{Signature, SigningKey, VerifyingKey};
use rsa::signature::{SignatureEncoding, Signer, Verifier};
use rsa::traits::PublicKeyParts;
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use sha2::Sha256;

use super::{check_range, CryptoError, CryptoProvider, KeyMaterial, SchemeId};

/// RSA with hybrid ChaCha20-Poly1305 encryption.
///
/// Ciphertext layout: `wrapped_len (2 bytes BE) ‖ RSA-OAEP(session key) ‖
/// nonce (12) ‖ AEAD body`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardProvider;

fn malformed(e: impl std::fmt::Display) -> CryptoError {
    CryptoError::MalformedKey(e.to_string())
}

impl StandardProvider {
    fn public(&self, key: &KeyMaterial) -> Result<RsaPublicKey, CryptoError> {
        if key.scheme != SchemeId::Standard {
            return Err(malformed("not an RSA key"));
        }
        RsaPublicKey::from_pkcs1_der(&key.public_bytes).map_err(malformed)
    }

    fn private(&self, key: &KeyMaterial) -> Result<RsaPrivateKey, CryptoError> {
        if key.scheme != SchemeId::Standard {
            return Err(malformed("not an RSA key"));
        }
        if key.private_bytes.is_empty() {
            return Err(malformed("missing private key"));
        }
        RsaPrivateKey::from_pkcs1_der(&key.private_bytes).map_err(malformed)
    }
}

impl CryptoProvider for StandardProvider {
    fn scheme(&self) -> SchemeId {
        SchemeId::Standard
    }

    fn min_key_bits(&self) -> u32 {
        1024
    }

    fn max_key_bits(&self) -> u32 {
        4096
    }

    fn generate_keypair(&self, seed: u64, min_bits: u32) -> Result<KeyMaterial, CryptoError> {
        check_range(self, min_bits)?;
        let bits = min_bits.div_ceil(8) * 8;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let private = RsaPrivateKey::new(&mut rng, bits as usize).map_err(malformed)?;
        let public = private.to_public_key();
        Ok(KeyMaterial {
            scheme: SchemeId::Standard,
            key_length_bits: (public.size() * 8) as u32,
            public_bytes: public.to_pkcs1_der().map_err(malformed)?.into_vec(),
            private_bytes: private.to_pkcs1_der().map_err(malformed)?.as_bytes().to_vec(),
        })
    }

    fn sign(&self, key: &KeyMaterial, message: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let signer = SigningKey::<Sha256>::new(self.private(key)?);
        Ok(signer.sign(message).to_vec())
    }

    fn verify(&self, key: &KeyMaterial, message: &[u8], signature: &[u8]) -> Result<bool, CryptoError> {
        let verifier = VerifyingKey::<Sha256>::new(self.public(key)?);
        let Ok(signature) = Signature::try_from(signature) else {
            return Ok(false);
        };
        Ok(verifier.verify(message, &signature).is_ok())
    }

    fn encrypt(&self, key: &KeyMaterial, plaintext: &[u8], rng: &mut dyn RngCore) -> Result<Vec<u8>, CryptoError> {
        let public = self.public(key)?;
        let mut rng = ChaCha20Rng::from_rng(rng).map_err(malformed)?;
        let mut session_key = [0u8; 32];
        let mut nonce = [0u8; 12];
        rng.fill_bytes(&mut session_key);
        rng.fill_bytes(&mut nonce);
        let wrapped = public.encrypt(&mut rng, Oaep::new::<Sha256>(), &session_key).map_err(malformed)?;
        let body = ChaCha20Poly1305::new(Key::from_slice(&session_key))
            .encrypt(Nonce::from_slice(&nonce), plaintext)
            .expect("in-memory AEAD encryption cannot fail");
        let mut out = Vec::with_capacity(2 + wrapped.len() + 12 + body.len());
        out.extend_from_slice(&(wrapped.len() as u16).to_be_bytes());
        out.extend_from_slice(&wrapped);
        out.extend_from_slice(&nonce);
        out.extend_from_slice(&body);
        Ok(out)
    }

    fn decrypt(&self, key: &KeyMaterial, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        let private = self.private(key)?;
        if ciphertext.len() < 2 {
            return Err(CryptoError::DecryptionFailure);
        }
        let wrapped_len = u16::from_be_bytes([ciphertext[0], ciphertext[1]]) as usize;
        let rest = &ciphertext[2..];
        if rest.len() < wrapped_len + 12 {
            return Err(CryptoError::DecryptionFailure);
        }
        let (wrapped, rest) = rest.split_at(wrapped_len);
        let (nonce, body) = rest.split_at(12);
        let session_key =
            private.decrypt(Oaep::new::<Sha256>(), wrapped).map_err(|_| CryptoError::DecryptionFailure)?;
        if session_key.len() != 32 {
            return Err(CryptoError::DecryptionFailure);
        }
        ChaCha20Poly1305::new(Key::from_slice(&session_key))
            .decrypt(Nonce::from_slice(nonce), body)
            .map_err(|_| CryptoError::DecryptionFailure)
    }

    fn check_public(&self, key: &KeyMaterial) -> Result<(), CryptoError> {
        let public = self.public(key)?;
        if (public.size() * 8) as u32 != key.key_length_bits {
            return Err(malformed("declared length does not match modulus"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn pair() -> &'static (KeyMaterial, KeyMaterial) {
        static KEYS: OnceLock<(KeyMaterial, KeyMaterial)> = OnceLock::new();
        KEYS.get_or_init(|| {
            (StandardProvider.generate_keypair(1, 1024).unwrap(), StandardProvider.generate_keypair(2, 1024).unwrap())
        })
    }

    #[test]
    fn rsa_round_trips() {
        let (a, b) = pair();
        assert!(a.key_length_bits >= 1024);
        StandardProvider.check_public(a).unwrap();

        let sig = StandardProvider.sign(a, b"response").unwrap();
        assert!(StandardProvider.verify(&a.to_public(), b"response", &sig).unwrap());
        assert!(!StandardProvider.verify(a, b"responsf", &sig).unwrap());
        assert!(!StandardProvider.verify(b, b"response", &sig).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ct = StandardProvider.encrypt(&a.to_public(), b"this is a challenge", &mut rng).unwrap();
        let ct2 = StandardProvider.encrypt(&a.to_public(), b"this is a challenge", &mut rng).unwrap();
        assert_ne!(ct, ct2);
        assert_eq!(StandardProvider.decrypt(a, &ct).unwrap(), b"this is a challenge");
        assert_eq!(StandardProvider.decrypt(a, &ct2).unwrap(), b"this is a challenge");
        assert_eq!(StandardProvider.decrypt(b, &ct), Err(CryptoError::DecryptionFailure));
    }

    #[test]
    fn rsa_size_limits() {
        assert!(matches!(StandardProvider.generate_keypair(1, 8192), Err(CryptoError::UnsupportedKeySize { .. })));
    }
}
