//! Deterministic multi-actor scenarios.
//!
//! A [`World`] holds a population of honest users, sybil collectives and
//! unreliable verifiers, some of whose email accounts may be dead. Each
//! [`World::step`] is one day: pending records are mined together with the
//! VARs owed for the previous block, and every VAR in the new block is
//! claimed by one eligible, willing actor who then runs the session against
//! the target. All randomness comes from a single generator seeded from
//! the scenario, so a configuration fully determines the chain.

mod config;
mod metrics;
mod monitor;
mod reach;
mod suspicion;

use std::collections::{BTreeMap, BTreeSet};
use std::mem;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::ScenarioConfig;
pub use metrics::{collect_metrics, Metrics};
pub use monitor::{monitor_certificates, CertObservation, CertReport, WindowMismatch};
pub use reach::{reachability_report, Reachability, DEAD_THRESHOLD};
pub use suspicion::suspicion_closure;

use crate::chain::{Chain, ChainError};
use crate::crypto::{generate_keypair, hash_parts, CryptoError, Digest, KeyMaterial, SchemeId};
use crate::protocol::{
    assert_outcome, evaluate, fulfil_challenge, issue_challenge, post_session_records, start_session, ChallengeSpec,
    Direction, FulfilOutcome, Party, ProtocolError, SessionState, VaSession, Verdict,
};
use crate::records::{Day, EntityDescriptor, PublicKeyRecord, Record, RecordError, VaKind, VaRecord};
use crate::var::{eligible, fulfil_var, mine_next, SelectionParams, VarError};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("unknown key {0}")]
    UnknownKey(Digest),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Var(#[from] VarError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Record(#[from] RecordError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Honest,
    Sybil,
    UnreliableVerifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccountState {
    Reachable,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorProfile {
    pub actor_id: usize,
    pub role: Role,
    pub collective_id: Option<usize>,
    pub account_state: AccountState,
    pub can_authenticate_as_claimed: bool,
    pub verification_diligence: f64,
    pub name: String,
    pub email: String,
}

#[derive(Debug, Clone)]
pub struct Actor {
    pub profile: ActorProfile,
    /// Key pairs in registration order; the last one is current.
    pub keys: Vec<(KeyMaterial, PublicKeyRecord)>,
}

impl Actor {
    pub fn is_alive(&self) -> bool {
        self.profile.account_state == AccountState::Reachable
    }

    fn same_collective(&self, other: &Actor) -> bool {
        self.profile.collective_id.is_some() && self.profile.collective_id == other.profile.collective_id
    }

    /// Whether this actor takes on a VAR about `target`. Sybils only spend
    /// effort on their own collective.
    fn willing_to_verify(&self, target: &Actor) -> bool {
        self.is_alive() && (self.profile.role != Role::Sybil || self.same_collective(target))
    }
}

/// A session waiting for a response that may never come.
#[derive(Debug, Clone)]
struct Parked {
    session: VaSession,
    posted: BTreeSet<Digest>,
}

pub struct World {
    pub config: ScenarioConfig,
    pub chain: Chain,
    pub actors: Vec<Actor>,
    pub day: Day,
    pub observations: Vec<CertObservation>,
    rng: ChaCha8Rng,
    pending: Vec<Record>,
    parked: Vec<Parked>,
    key_owner: BTreeMap<Digest, (usize, usize)>,
}

impl World {
    /// Builds the genesis population and queues the bootstrap sessions.
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let dead_count = (config.dead_fraction * config.honest_count as f64).round() as usize;
        let dead: BTreeSet<usize> = sample(&mut rng, config.honest_count, dead_count).into_iter().collect();

        let mut profiles = Vec::new();
        for i in 0..config.honest_count {
            let state = if dead.contains(&i) { AccountState::Dead } else { AccountState::Reachable };
            profiles.push((Role::Honest, None, state, format!("honest{i}")));
        }
        for i in 0..config.unreliable_count {
            profiles.push((Role::UnreliableVerifier, None, AccountState::Reachable, format!("unreliable{i}")));
        }
        for i in 0..config.sybil_count {
            let collective = i % config.sybil_collectives;
            profiles.push((Role::Sybil, Some(collective), AccountState::Reachable, format!("sybil{i}")));
        }

        let mut actors = Vec::new();
        let mut key_owner = BTreeMap::new();
        for (actor_id, (role, collective_id, account_state, name)) in profiles.into_iter().enumerate() {
            let profile = ActorProfile {
                actor_id,
                role,
                collective_id,
                account_state,
                can_authenticate_as_claimed: role != Role::Sybil,
                verification_diligence: if role == Role::UnreliableVerifier { config.diligence } else { 1.0 },
                email: format!("{name}@example.org"),
                name,
            };
            let key = generate_keypair(SchemeId::ToyDeterministic, rng.next_u64(), config.key_bits)?;
            let owner = EntityDescriptor::email(&profile.name, &profile.email);
            let rec = PublicKeyRecord::new(owner, &key, 0, config.key_lifespan_days)?;
            key_owner.insert(rec.key_id, (actor_id, 0));
            actors.push(Actor { profile, keys: vec![(key, rec)] });
        }

        let founders = actors.iter().map(|a| Record::PublicKey(a.keys[0].1.clone())).collect();
        let chain = Chain::new(config.difficulty, 0, founders)?;
        let mut world = World {
            config,
            chain,
            actors,
            day: 0,
            observations: Vec::new(),
            rng,
            pending: Vec::new(),
            parked: Vec::new(),
            key_owner,
        };
        world.bootstrap()?;
        Ok(world)
    }

    pub fn params(&self) -> &SelectionParams {
        &self.config.selection
    }

    /// Owner of a key registered by the simulation.
    pub fn owner_of(&self, key_id: &Digest) -> Option<&Actor> {
        self.key_owner.get(key_id).map(|&(a, _)| &self.actors[a])
    }

    fn bootstrap(&mut self) -> Result<(), SimError> {
        let founders: Vec<usize> = self
            .actors
            .iter()
            .filter(|a| a.is_alive() && a.profile.role != Role::Sybil)
            .map(|a| a.profile.actor_id)
            .collect();
        if founders.len() >= 2 {
            for _ in 0..self.config.bootstrap_sessions {
                let pair = sample(&mut self.rng, founders.len(), 2);
                let (a, b) = (founders[pair.index(0)], founders[pair.index(1)]);
                self.open_session(a, b, ChallengeSpec::validation())?;
            }
        }
        let sybils: Vec<usize> =
            self.actors.iter().filter(|a| a.profile.role == Role::Sybil).map(|a| a.profile.actor_id).collect();
        for &s in &sybils {
            let mates: Vec<usize> =
                sybils.iter().copied().filter(|&m| m != s && self.actors[m].same_collective(&self.actors[s])).collect();
            let n = self.config.sybil_endorsements.min(mates.len());
            for i in sample(&mut self.rng, mates.len(), n) {
                self.open_session(mates[i], s, ChallengeSpec::authentication())?;
            }
        }
        Ok(())
    }

    fn open_session(&mut self, initiator: usize, responder: usize, mut spec: ChallengeSpec) -> Result<(), SimError> {
        spec.deadline_days = self.config.deadline_days;
        let a = self.current_key(initiator).key_id;
        let b = self.current_key(responder).key_id;
        let session = start_session(&self.chain, &a, &b, spec, self.day, self.config.min_bits, &mut self.rng)?;
        self.drive(session, BTreeSet::new())
    }

    fn current_key(&self, actor: usize) -> &PublicKeyRecord {
        &self.actors[actor].keys.last().expect("actors own a key").1
    }

    fn private_key(&self, key_id: &Digest) -> Result<KeyMaterial, SimError> {
        let &(a, k) = self.key_owner.get(key_id).ok_or(SimError::UnknownKey(*key_id))?;
        Ok(self.actors[a].keys[k].0.clone())
    }

    fn actor_of(&self, key_id: &Digest) -> Result<usize, SimError> {
        self.key_owner.get(key_id).map(|&(a, _)| a).ok_or(SimError::UnknownKey(*key_id))
    }

    /// How the target of a direction answers.
    fn target_answer(&self, session: &VaSession, verifier: usize, target: usize) -> FulfilOutcome {
        let (v, t) = (&self.actors[verifier], &self.actors[target]);
        if !t.is_alive() {
            FulfilOutcome::None
        } else if session.spec.kind == VaKind::Authentication
            && !t.profile.can_authenticate_as_claimed
            && !t.same_collective(v)
        {
            FulfilOutcome::Wrong
        } else {
            FulfilOutcome::Correct
        }
    }

    /// The verifier documents the open direction.
    fn judge(&mut self, session: &mut VaSession, verifier: usize, target: usize) -> Result<(), SimError> {
        let (v, t) = (&self.actors[verifier], &self.actors[target]);
        let key = self.private_key(&session.roles(session.open_direction().expect("open")).0.key_id)?;
        let rubber_stamp = match v.profile.role {
            Role::Sybil => v.same_collective(t),
            Role::UnreliableVerifier => !self.rng.gen_bool(v.profile.verification_diligence),
            Role::Honest => false,
        };
        if rubber_stamp {
            assert_outcome(session, &key, None, self.day)?;
        } else {
            evaluate(session, &key, Verdict::Accept, self.day)?;
        }
        Ok(())
    }

    /// Runs a session as far as it can go today, then posts what each live
    /// party holds. Sessions waiting on a silent target are parked.
    fn drive(&mut self, mut session: VaSession, mut posted: BTreeSet<Digest>) -> Result<(), SimError> {
        let now = self.day;
        loop {
            let direction = match session.state {
                SessionState::Created => Direction::Forward,
                SessionState::ForwardDone => Direction::Backward,
                _ => break,
            };
            let challenge = issue_challenge(&mut session, direction, now, &mut self.rng)?;
            let (verifier_rec, target_rec) = session.roles(direction);
            let verifier = self.actor_of(&verifier_rec.key_id)?;
            let target = self.actor_of(&target_rec.key_id)?;
            let answer = self.target_answer(&session, verifier, target);
            if answer == FulfilOutcome::None {
                self.post(&session, &mut posted);
                self.parked.push(Parked { session, posted });
                return Ok(());
            }
            let key = self.private_key(&target_rec.key_id.clone())?;
            fulfil_challenge(&mut session, &key, &challenge, answer, now, &mut self.rng)?;
            self.judge(&mut session, verifier, target)?;
        }
        self.post(&session, &mut posted);
        Ok(())
    }

    fn post(&mut self, session: &VaSession, posted: &mut BTreeSet<Digest>) {
        for party in [Party::Initiator, Party::Responder] {
            let Some(&(a, _)) = self.key_owner.get(&session.party_key(party).key_id) else { continue };
            if !self.actors[a].is_alive() {
                continue;
            }
            for r in post_session_records(session, party) {
                if posted.insert(r.record_id()) {
                    self.pending.push(r);
                }
            }
        }
    }

    /// Closes parked sessions whose response deadline has passed.
    fn resolve_parked(&mut self) -> Result<(), SimError> {
        let now = self.day;
        let (due, waiting): (Vec<_>, Vec<_>) =
            mem::take(&mut self.parked).into_iter().partition(|p| p.session.deadline().is_some_and(|d| now > d));
        self.parked = waiting;
        for Parked { mut session, posted } in due {
            let verifier = session.roles(session.open_direction().expect("parked sessions are open")).0.key_id;
            let key = self.private_key(&verifier)?;
            evaluate(&mut session, &key, Verdict::Accept, now)?;
            self.drive(session, posted)?;
        }
        Ok(())
    }

    /// Live actors register a fresh key shortly before their current one expires.
    fn renew_keys(&mut self) -> Result<(), SimError> {
        let now = self.day;
        let lifespan = self.config.key_lifespan_days;
        let margin = (lifespan / 2).min(30);
        for a in 0..self.actors.len() {
            let actor = &self.actors[a];
            let current = &actor.keys.last().expect("actors own a key").1;
            if !actor.is_alive() || current.expires_at > now + margin {
                continue;
            }
            let key = generate_keypair(SchemeId::ToyDeterministic, self.rng.next_u64(), self.config.key_bits)?;
            let rec = PublicKeyRecord::new(current.owner.clone(), &key, now, now + lifespan)?;
            self.key_owner.insert(rec.key_id, (a, self.actors[a].keys.len()));
            self.pending.push(rec.clone().into());
            self.actors[a].keys.push((key, rec));
        }
        Ok(())
    }

    /// Hands a fresh VAR to one eligible, willing actor chosen at random.
    fn claim(&mut self, var: &VaRecord) -> Result<(), SimError> {
        let target = self.actor_of(&var.target_key_id)?;
        let mut candidates = Vec::new();
        for actor in &self.actors {
            if actor.profile.actor_id == target || !actor.willing_to_verify(&self.actors[target]) {
                continue;
            }
            if let Some((_, k)) =
                actor.keys.iter().rev().find(|(_, k)| eligible(var, k, &self.chain, &self.config.selection))
            {
                candidates.push(k.key_id);
            }
        }
        if candidates.is_empty() {
            return Ok(());
        }
        let verifier = candidates[self.rng.gen_range(0..candidates.len())];
        let session = match fulfil_var(
            &self.chain,
            &var.var_id,
            &verifier,
            &self.config.selection,
            self.day,
            self.config.deadline_days,
            self.config.min_bits,
            &mut self.rng,
        ) {
            Ok(s) => s,
            // The target key lapsed between selection and claim.
            Err(VarError::Protocol(ProtocolError::FormalValidationFailed { .. })) => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        self.drive(session, BTreeSet::new())
    }

    fn observe(&mut self) {
        for v in 0..self.config.vantage_points {
            let intercepted = self.config.intercepted_vantages.contains(&v);
            for d in 0..self.config.monitored_domains {
                let identifier = format!("site{d}.example");
                let observed_key_id = if intercepted {
                    hash_parts(&[b"authcoin/forged", identifier.as_bytes()])
                } else {
                    self.current_key(d).key_id
                };
                self.observations.push(CertObservation {
                    vantage_id: format!("vp{v}"),
                    identifier,
                    observed_key_id,
                    observed_at: self.day,
                });
            }
        }
    }

    /// Advances one day. Returns the height of the block mined, if any.
    pub fn step(&mut self) -> Result<Option<u64>, SimError> {
        self.day += 1;
        self.resolve_parked()?;
        self.renew_keys()?;
        let pending = mem::take(&mut self.pending);
        let mined = mine_next(&mut self.chain, pending, &self.config.selection, self.day)?;
        if let Some(h) = mined {
            let vars: Vec<VaRecord> = self.chain.blocks()[h as usize]
                .records
                .iter()
                .filter_map(|r| match r {
                    Record::Var(v) => Some(v.clone()),
                    _ => None,
                })
                .collect();
            for var in &vars {
                self.claim(var)?;
            }
        }
        self.observe();
        Ok(mined)
    }

    pub fn metrics(&self) -> Result<Metrics, SimError> {
        collect_metrics(self)
    }
}

/// Runs `config.blocks_to_run` days and reports on the resulting chain.
pub fn run_scenario(config: &ScenarioConfig) -> Result<(Metrics, Chain), SimError> {
    let mut world = World::new(config.clone())?;
    for _ in 0..config.blocks_to_run {
        world.step()?;
    }
    let metrics = world.metrics()?;
    Ok((metrics, world.chain))
}
