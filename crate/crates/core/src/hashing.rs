use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of a value's JSON encoding. Struct fields serialize in
/// declaration order, so this is stable for a given build.
pub fn digest_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable state");
    digest_bytes(&bytes)
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// First eight bytes of the SHA-256 of `bytes`, as an integer.
pub fn stable_u64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_be_bytes(d[..8].try_into().unwrap())
}

/// Derives an independent RNG seed from a base seed and a stream label.
pub fn derive_seed(base: u64, stream: &str, index: u64) -> u64 {
    let mut bytes = base.to_be_bytes().to_vec();
    bytes.extend_from_slice(stream.as_bytes());
    bytes.extend_from_slice(&index.to_be_bytes());
    stable_u64(&bytes)
}
