use std::collections::BTreeMap;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use x25519_dalek::StaticSecret;

use super::{hash, hash_parts, CryptoError, SymKey, KEY_LEN};
use crate::{Asn, CLOCK_TOLERANCE_SECS, PROTEST_MARGIN_SECS};

pub const SIGNATURE_LEN: usize = 64;

/// Detached Ed25519 signature over the SHA3-256 hash of a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

/// An entity's public half: a signature verification key and a static
/// Diffie-Hellman share.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublicKey {
    verifying: VerifyingKey,
    exchange: x25519_dalek::PublicKey,
}

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(self.verifying.as_bytes());
        out[32..].copy_from_slice(self.exchange.as_bytes());
        out
    }
}

/// Private and public key material for one AS.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    exchange: StaticSecret,
    public: PublicKey,
}

impl KeyPair {
    /// Deterministic key pair from a 32-byte seed.
    pub fn from_seed(seed: [u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(&seed);
        let exchange = StaticSecret::from(hash_parts([&b"fair/x25519"[..], &seed]));
        let public = PublicKey {
            verifying: signing.verifying_key(),
            exchange: x25519_dalek::PublicKey::from(&exchange),
        };
        KeyPair {
            signing,
            exchange,
            public,
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// Signs `hash(message)`.
pub fn sign(keys: &KeyPair, message: &[u8]) -> Signature {
    Signature(keys.signing.sign(&hash(message)).to_bytes())
}

/// Verifies a signature produced by [`sign`]. Malformed signatures verify false.
pub fn verify(public: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    public.verifying.verify(&hash(message), &sig).is_ok()
}

/// Non-interactive Diffie-Hellman between two static shares, hashed down to a
/// 128-bit symmetric key. `derive(a, B) == derive(b, A)`.
pub fn derive_shared_key(own: &KeyPair, peer: &PublicKey) -> SymKey {
    let shared = own.exchange.diffie_hellman(&peer.exchange);
    let digest = hash_parts([&b"fair/k_sd"[..], shared.as_bytes()]);
    let mut key = [0u8; KEY_LEN];
    key.copy_from_slice(&digest[..KEY_LEN]);
    SymKey::from_bytes(key)
}

/// Public-key directory standing in for RPKI. Simulated entities also keep
/// their private halves here.
#[derive(Clone, Debug, Default)]
pub struct KeyRegistry {
    public: BTreeMap<Asn, PublicKey>,
    private: BTreeMap<Asn, KeyPair>,
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry whose key pairs are derived from `seed` and the ASN.
    pub fn deterministic(seed: u64, asns: impl IntoIterator<Item = Asn>) -> Self {
        let mut registry = Self::new();
        for asn in asns {
            let mut material = Vec::with_capacity(20);
            material.extend_from_slice(b"fair/as-key");
            material.extend_from_slice(&seed.to_be_bytes());
            material.extend_from_slice(&asn.0.to_be_bytes());
            registry.register(asn, KeyPair::from_seed(hash(&material)));
        }
        registry
    }

    pub fn register(&mut self, asn: Asn, keys: KeyPair) {
        self.public.insert(asn, *keys.public());
        self.private.insert(asn, keys);
    }

    pub fn register_public(&mut self, asn: Asn, public: PublicKey) {
        self.public.insert(asn, public);
    }

    pub fn public_key(&self, asn: Asn) -> Result<&PublicKey, CryptoError> {
        self.public.get(&asn).ok_or(CryptoError::UnknownAsn(asn))
    }

    pub fn keypair(&self, asn: Asn) -> Result<&KeyPair, CryptoError> {
        if !self.public.contains_key(&asn) {
            return Err(CryptoError::UnknownAsn(asn));
        }
        self.private.get(&asn).ok_or(CryptoError::NoPrivateKey(asn))
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.public.contains_key(&asn)
    }
}

/// The two local secrets of a transit AS (data-plane `K_i` and control-plane
/// `K̂_i`), rotated every `rotation_secs` and retained for the protest margin.
///
/// Epoch keys are derived from a master secret, so retention costs nothing
/// here; [`LocalKeys::retained_bytes`] reports what an implementation storing
/// them explicitly would hold.
#[derive(Clone)]
pub struct LocalKeys {
    master: [u8; 32],
    rotation_secs: u64,
}

impl LocalKeys {
    pub fn new(master: [u8; 32], rotation_secs: u64) -> Self {
        assert!(rotation_secs > 0, "rotation period must be positive");
        LocalKeys { master, rotation_secs }
    }

    pub fn rotation_secs(&self) -> u64 {
        self.rotation_secs
    }

    pub fn epoch_of(&self, secs: u64) -> u64 {
        secs / self.rotation_secs
    }

    fn derive(&self, label: &[u8], epoch: u64) -> SymKey {
        let digest = hash_parts([label, &self.master, &epoch.to_be_bytes()]);
        SymKey::from_slice(&digest[..KEY_LEN]).expect("digest longer than key")
    }

    pub fn data_key(&self, epoch: u64) -> SymKey {
        self.derive(b"fair/data", epoch)
    }

    pub fn control_key(&self, epoch: u64) -> SymKey {
        self.derive(b"fair/control", epoch)
    }

    /// Epochs whose keys may have produced a mark stamped at `secs`: the
    /// covering epoch first, then a neighbour if `secs` lies within the
    /// clock tolerance of a boundary.
    pub fn candidate_epochs(&self, secs: u64) -> Vec<u64> {
        let tol = CLOCK_TOLERANCE_SECS as u64;
        let epoch = self.epoch_of(secs);
        let mut epochs = vec![epoch];
        if epoch > 0 && secs - epoch * self.rotation_secs < tol {
            epochs.push(epoch - 1);
        }
        if (epoch + 1) * self.rotation_secs - secs <= tol {
            epochs.push(epoch + 1);
        }
        epochs
    }

    /// Bytes needed to keep both keys of every epoch inside the protest margin.
    pub fn retained_bytes(&self) -> u64 {
        PROTEST_MARGIN_SECS.div_ceil(self.rotation_secs) * 2 * KEY_LEN as u64
    }
}

impl std::fmt::Debug for LocalKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalKeys")
            .field("rotation_secs", &self.rotation_secs)
            .finish_non_exhaustive()
    }
}
