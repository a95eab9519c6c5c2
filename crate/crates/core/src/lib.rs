//! Decentralized validation and authentication of public keys.
//!
//! Keys, challenges, responses, verification results, signatures,
//! revocations and automatically generated verification requests (VARs) are
//! stored as records in an append-only proof-of-work chain. Every key is
//! verified through bidirectional challenge-response sessions whose evidence
//! is posted by both parties, which makes sybil identities, unreliable
//! verifiers and unjustified claims detectable from the chain alone.
//!
//! Module map:
//!
//! * [`crypto`]: hash, signatures, encryption and key generation providers.
//! * [`records`]: chain record types and their canonical encoding.
//! * [`chain`]: blocks, mining, validation, auditing and the chain file.
//! * [`keylife`]: formal key validation, status, revocation, lookup, history.
//! * [`protocol`]: the challenge-response session engine.
//! * [`var`]: VAR generation, eligibility and statistics.
//! * [`sim`]: the deterministic multi-actor scenario engine.

pub mod chain;
pub mod codec;
pub mod crypto;
pub mod keylife;
pub mod protocol;
pub mod records;
pub mod sim;
pub mod var;

#[cfg(test)]
mod testutil;
