//! Public-key envelope used for hop payloads.
//!
//! Only the destination's private key opens a ciphertext, and any change to
//! the bytes makes [`Scheme::decrypt`] fail. Intermediaries only ever see
//! [`Ciphertext`] values.
//!
//! Two schemes sit behind the same interface:
//! * [`Scheme::Sealed`]: ephemeral X25519, HKDF-SHA256, ChaCha20-Poly1305.
//! * [`Scheme::Marker`]: transparent plaintext with a SHA-256 tag, for debugging
//!   traces by eye. It is *not* confidential.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey as DhPublic, StaticSecret};

const SEALED_INFO: &[u8] = b"uaanet/sealed/v1";
const MARKER_MAGIC: &[u8; 4] = b"MRK1";
const KEY_LEN: usize = 32;
const TAG_LEN: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicKey(pub [u8; KEY_LEN]);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey([u8; KEY_LEN]);

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub public_key: PublicKey,
    pub private_key: PrivateKey,
}

/// Opaque envelope bytes, integrity tag included.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext(#[serde(with = "hex_bytes")] pub Vec<u8>);

impl Ciphertext {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Short hex digest used in traces and logs.
    pub fn digest_hex(&self) -> String {
        hex::encode(&Sha256::digest(&self.0)[..8])
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes, {})", self.0.len(), self.digest_hex())
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("decryption failed")]
pub struct DecryptFailure;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Sealed,
    Marker,
}

impl Scheme {
    /// Deterministic key pair for a 32-byte seed.
    pub fn keygen(self, seed: [u8; KEY_LEN]) -> KeyPair {
        match self {
            Scheme::Sealed => {
                let secret = StaticSecret::from(seed);
                let public = DhPublic::from(&secret);
                KeyPair {
                    public_key: PublicKey(public.to_bytes()),
                    private_key: PrivateKey(secret.to_bytes()),
                }
            }
            Scheme::Marker => KeyPair {
                public_key: marker_public(&seed),
                private_key: PrivateKey(seed),
            },
        }
    }

    /// Key pair from OS entropy.
    pub fn keygen_random(self) -> KeyPair {
        let mut seed = [0u8; KEY_LEN];
        rand::rngs::OsRng.fill_bytes(&mut seed);
        self.keygen(seed)
    }

    /// Encrypts with fresh OS entropy for the ephemeral key.
    pub fn encrypt(self, recipient: &PublicKey, plaintext: &[u8]) -> Ciphertext {
        let mut ephemeral = [0u8; KEY_LEN];
        rand::rngs::OsRng.fill_bytes(&mut ephemeral);
        self.encrypt_with_seed(recipient, plaintext, ephemeral)
    }

    /// Encrypts deterministically; `ephemeral_seed` must not be reused across messages.
    pub fn encrypt_with_seed(self, recipient: &PublicKey, plaintext: &[u8], ephemeral_seed: [u8; KEY_LEN]) -> Ciphertext {
        match self {
            Scheme::Sealed => {
                let ephemeral = StaticSecret::from(ephemeral_seed);
                let ephemeral_pub = DhPublic::from(&ephemeral).to_bytes();
                let shared = ephemeral.diffie_hellman(&DhPublic::from(recipient.0));
                let cipher = sealed_cipher(shared.as_bytes(), &ephemeral_pub, &recipient.0);
                let body = cipher
                    .encrypt(
                        Nonce::from_slice(&[0u8; 12]),
                        Payload {
                            msg: plaintext,
                            aad: &ephemeral_pub,
                        },
                    )
                    .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
                let mut out = Vec::with_capacity(KEY_LEN + body.len());
                out.extend_from_slice(&ephemeral_pub);
                out.extend_from_slice(&body);
                Ciphertext(out)
            }
            Scheme::Marker => {
                let mut out = Vec::with_capacity(4 + KEY_LEN + plaintext.len() + KEY_LEN);
                out.extend_from_slice(MARKER_MAGIC);
                out.extend_from_slice(&recipient.0);
                out.extend_from_slice(plaintext);
                out.extend_from_slice(&marker_tag(&recipient.0, plaintext));
                Ciphertext(out)
            }
        }
    }

    pub fn decrypt(self, private_key: &PrivateKey, ciphertext: &Ciphertext) -> Result<Vec<u8>, DecryptFailure> {
        let bytes = ciphertext.as_bytes();
        match self {
            Scheme::Sealed => {
                if bytes.len() < KEY_LEN + TAG_LEN {
                    return Err(DecryptFailure);
                }
                let (ephemeral_pub, body) = bytes.split_at(KEY_LEN);
                let ephemeral_pub: [u8; KEY_LEN] = ephemeral_pub.try_into().map_err(|_| DecryptFailure)?;
                let secret = StaticSecret::from(private_key.0);
                let own_pub = DhPublic::from(&secret).to_bytes();
                let shared = secret.diffie_hellman(&DhPublic::from(ephemeral_pub));
                if !shared.was_contributory() {
                    return Err(DecryptFailure);
                }
                let cipher = sealed_cipher(shared.as_bytes(), &ephemeral_pub, &own_pub);
                cipher
                    .decrypt(
                        Nonce::from_slice(&[0u8; 12]),
                        Payload {
                            msg: body,
                            aad: &ephemeral_pub,
                        },
                    )
                    .map_err(|_| DecryptFailure)
            }
            Scheme::Marker => {
                let public = marker_public(&private_key.0);
                let header = 4 + KEY_LEN;
                if bytes.len() < header + KEY_LEN || &bytes[..4] != MARKER_MAGIC || bytes[4..header] != public.0 {
                    return Err(DecryptFailure);
                }
                let (body, tag) = bytes[header..].split_at(bytes.len() - header - KEY_LEN);
                if tag != marker_tag(&public.0, body) {
                    return Err(DecryptFailure);
                }
                Ok(body.to_vec())
            }
        }
    }
}

pub fn keygen(seed: [u8; KEY_LEN]) -> KeyPair {
    Scheme::Sealed.keygen(seed)
}

pub fn encrypt(recipient: &PublicKey, plaintext: &[u8]) -> Ciphertext {
    Scheme::Sealed.encrypt(recipient, plaintext)
}

pub fn decrypt(private_key: &PrivateKey, ciphertext: &Ciphertext) -> Result<Vec<u8>, DecryptFailure> {
    Scheme::Sealed.decrypt(private_key, ciphertext)
}

/// Expands a small integer seed into 32 bytes of key seed material.
pub fn seed_from_u64(seed: u64) -> [u8; KEY_LEN] {
    let mut hasher = Sha256::new();
    hasher.update(b"uaanet/key-seed");
    hasher.update(seed.to_be_bytes());
    hasher.finalize().into()
}

fn sealed_cipher(shared: &[u8; 32], ephemeral_pub: &[u8; 32], recipient_pub: &[u8; 32]) -> ChaCha20Poly1305 {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral_pub);
    salt[32..].copy_from_slice(recipient_pub);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; 32];
    hk.expand(SEALED_INFO, &mut okm).expect("32 bytes is a valid HKDF-SHA256 output length");
    ChaCha20Poly1305::new(Key::from_slice(&okm))
}

fn marker_public(seed: &[u8; KEY_LEN]) -> PublicKey {
    let mut hasher = Sha256::new();
    hasher.update(b"uaanet/marker-pk");
    hasher.update(seed);
    PublicKey(hasher.finalize().into())
}

fn marker_tag(public: &[u8; KEY_LEN], body: &[u8]) -> [u8; KEY_LEN] {
    let mut hasher = Sha256::new();
    hasher.update(public);
    hasher.update(body);
    hasher.finalize().into()
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SCHEMES: [Scheme; 2] = [Scheme::Sealed, Scheme::Marker];

    #[test]
    fn keygen_is_deterministic() {
        for scheme in SCHEMES {
            assert_eq!(scheme.keygen([3; 32]), scheme.keygen([3; 32]));
            assert_ne!(scheme.keygen([3; 32]).public_key, scheme.keygen([4; 32]).public_key);
        }
    }

    #[test]
    fn empty_plaintext_round_trips() {
        for scheme in SCHEMES {
            let kp = scheme.keygen([9; 32]);
            let ct = scheme.encrypt(&kp.public_key, b"");
            assert_eq!(scheme.decrypt(&kp.private_key, &ct).unwrap(), b"");
        }
    }

    #[test]
    fn large_payload_round_trips() {
        let kp = keygen([1; 32]);
        let payload: Vec<u8> = (0..64 * 1024).map(|i| (i % 251) as u8).collect();
        let ct = encrypt(&kp.public_key, &payload);
        assert_eq!(decrypt(&kp.private_key, &ct).unwrap(), payload);
    }

    #[test]
    fn cross_key_matrix() {
        for scheme in SCHEMES {
            let pairs: Vec<_> = (0u8..4).map(|i| scheme.keygen([i + 10; 32])).collect();
            for (i, to) in pairs.iter().enumerate() {
                let ct = scheme.encrypt_with_seed(&to.public_key, b"telemetry", [i as u8; 32]);
                for (j, with) in pairs.iter().enumerate() {
                    let res = scheme.decrypt(&with.private_key, &ct);
                    if i == j {
                        assert_eq!(res.unwrap(), b"telemetry");
                    } else {
                        assert_eq!(res, Err(DecryptFailure), "{scheme:?} {i}->{j}");
                    }
                }
            }
        }
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        for scheme in SCHEMES {
            let kp = scheme.keygen([5; 32]);
            let ct = scheme.encrypt_with_seed(&kp.public_key, b"waypoint 42", [6; 32]);
            for pos in 0..ct.len() {
                for mask in [0x01u8, 0x80, 0xff] {
                    let mut bad = ct.clone();
                    bad.0[pos] ^= mask;
                    assert_eq!(scheme.decrypt(&kp.private_key, &bad), Err(DecryptFailure), "{scheme:?} pos {pos}");
                }
            }
            let mut short = ct.clone();
            short.0.pop();
            assert!(scheme.decrypt(&kp.private_key, &short).is_err());
        }
    }

    #[test]
    fn seeded_encryption_is_reproducible_and_random_is_not() {
        let kp = keygen([2; 32]);
        let a = Scheme::Sealed.encrypt_with_seed(&kp.public_key, b"m", [8; 32]);
        let b = Scheme::Sealed.encrypt_with_seed(&kp.public_key, b"m", [8; 32]);
        assert_eq!(a, b);
        assert_ne!(encrypt(&kp.public_key, b"m"), encrypt(&kp.public_key, b"m"));
    }

    #[test]
    fn ciphertext_serde_is_hex() {
        let ct = Ciphertext(vec![0xde, 0xad]);
        assert_eq!(serde_json::to_string(&ct).unwrap(), "\"dead\"");
        let back: Ciphertext = serde_json::from_str("\"dead\"").unwrap();
        assert_eq!(back, ct);
    }

    proptest! {
        #[test]
        fn round_trip(seed in any::<[u8; 32]>(), eph in any::<[u8; 32]>(), msg in proptest::collection::vec(any::<u8>(), 0..512)) {
            for scheme in SCHEMES {
                let kp = scheme.keygen(seed);
                let ct = scheme.encrypt_with_seed(&kp.public_key, &msg, eph);
                prop_assert_eq!(scheme.decrypt(&kp.private_key, &ct).unwrap(), msg.clone());
            }
        }
    }
}
