//! Content digests binding datasets and outputs to the configuration that
//! produced them.

use sha2::{Digest, Sha256};

/// Incremental SHA-256 over typed fields. Floats are hashed by bit pattern so
/// equal digests imply bit-identical inputs.
#[derive(Clone)]
pub struct DigestBuilder {
    hasher: Sha256,
}

impl DigestBuilder {
    pub fn new(domain_tag: &str) -> Self {
        let mut builder = DigestBuilder {
            hasher: Sha256::new(),
        };
        builder.str(domain_tag);
        builder
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.u64(s.len() as u64);
        self.hasher.update(s.as_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.hasher.update(v.to_bits().to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.hasher.update(v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u64(b.len() as u64);
        self.hasher.update(b);
        self
    }

    pub fn finish(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}

/// Hex SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_boundaries_matter() {
        let a = DigestBuilder::new("t").str("ab").str("c").finish();
        let b = DigestBuilder::new("t").str("a").str("bc").finish();
        assert_ne!(a, b);
    }

    #[test]
    fn signed_zero_is_distinguished() {
        let a = DigestBuilder::new("t").f64(0.0).finish();
        let b = DigestBuilder::new("t").f64(-0.0).finish();
        assert_ne!(a, b);
        assert_eq!(a, DigestBuilder::new("t").f64(0.0).finish());
    }
}
