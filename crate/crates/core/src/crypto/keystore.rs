use std::fs;
use std::io;
use std::path::Path;

use super::{KeyMaterial, SchemeId};

#[derive(Debug, thiserror::Error)]
pub enum KeystoreError {
    #[error("keystore i/o: {0}")]
    Io(#[from] io::Error),
    #[error("keystore file is malformed: {0}")]
    Malformed(&'static str),
}

/// Encodes one key pair:
/// `scheme (1) ‖ key_length_bits (4 BE) ‖ len (4 BE) ‖ public ‖ len (4 BE) ‖ private`.
pub fn encode_keystore(key: &KeyMaterial) -> Vec<u8> {
    let mut out = vec![key.scheme.as_byte()];
    out.extend_from_slice(&key.key_length_bits.to_be_bytes());
    for part in [&key.public_bytes, &key.private_bytes] {
        out.extend_from_slice(&(part.len() as u32).to_be_bytes());
        out.extend_from_slice(part);
    }
    out
}

pub fn decode_keystore(bytes: &[u8]) -> Result<KeyMaterial, KeystoreError> {
    fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], KeystoreError> {
        if bytes.len() < n {
            return Err(KeystoreError::Malformed("truncated"));
        }
        let (head, tail) = bytes.split_at(n);
        *bytes = tail;
        Ok(head)
    }
    fn take_u32(bytes: &mut &[u8]) -> Result<u32, KeystoreError> {
        Ok(u32::from_be_bytes(take(bytes, 4)?.try_into().expect("4 bytes")))
    }

    let mut rest = bytes;
    let scheme = SchemeId::from_byte(take(&mut rest, 1)?[0]).ok_or(KeystoreError::Malformed("unknown scheme"))?;
    let key_length_bits = take_u32(&mut rest)?;
    let n = take_u32(&mut rest)? as usize;
    let public_bytes = take(&mut rest, n)?.to_vec();
    let n = take_u32(&mut rest)? as usize;
    let private_bytes = take(&mut rest, n)?.to_vec();
    if !rest.is_empty() {
        return Err(KeystoreError::Malformed("trailing bytes"));
    }
    if public_bytes.is_empty() || key_length_bits == 0 {
        return Err(KeystoreError::Malformed("empty key"));
    }
    Ok(KeyMaterial { scheme, key_length_bits, public_bytes, private_bytes })
}

pub fn write_keystore(path: &Path, key: &KeyMaterial) -> Result<(), KeystoreError> {
    fs::write(path, encode_keystore(key))?;
    Ok(())
}

pub fn read_keystore(path: &Path) -> Result<KeyMaterial, KeystoreError> {
    decode_keystore(&fs::read(path)?)
}
