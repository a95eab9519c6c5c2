use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use authcoin::chain::Chain;
use authcoin::crypto::{generate_keypair, read_keystore, write_keystore, Digest, KeyMaterial, SchemeId};
use authcoin::keylife::{
    find_key_by_public, formal_validate, history, key_status, lookup_key, revoke_key, revoke_signature, LookupQuery,
};
use authcoin::protocol::{
    evaluate, fulfil_challenge, issue_challenge, post_session_records, start_session, ChallengeSpec, Direction,
    FulfilOutcome, Party, SessionState, VaSession, Verdict,
};
use authcoin::records::{Day, EntityDescriptor, PublicKeyRecord, Record, VaKind, VarStatus, Visibility};
use authcoin::sim::{monitor_certificates, reachability_report, run_scenario, CertObservation, ScenarioConfig};
use authcoin::var::{find_var, fulfil_var, mine_next, var_status, SelectionParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{
    ChainCommand, Cli, Command, Owner, Scheme, SessionArgs, SimCommand, UsageError, VarCommand, VarStatusArg,
    VerdictArg,
};

pub fn dispatch(cli: &Cli, out: &mut String) -> Result<ExitCode> {
    let ctx = Ctx { cli, out };
    ctx.run()
}

struct Ctx<'a> {
    cli: &'a Cli,
    out: &'a mut String,
}

macro_rules! say {
    ($ctx:expr, $($arg:tt)*) => {
        let _ = writeln!($ctx.out, $($arg)*);
    };
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl Ctx<'_> {
    fn run(mut self) -> Result<ExitCode> {
        match &self.cli.command {
            Command::Keygen { bits, scheme, owner } => self.keygen(*bits, *scheme, owner)?,
            Command::Register { owner } => self.register(owner)?,
            Command::Validate { session } => self.session(VaKind::Validation, session, VerdictArg::Accept)?,
            Command::Authenticate { session, verdict } => self.session(VaKind::Authentication, session, *verdict)?,
            Command::RevokeKey { key_id } => self.revoke_key(key_id.as_ref())?,
            Command::RevokeSig { sig_id } => self.revoke_sig(sig_id)?,
            Command::Lookup { email, name, key_id } => {
                let query = LookupQuery { email: email.clone(), name: name.clone(), key_id: *key_id };
                self.lookup(&query)?
            }
            Command::History { key_id } => self.history(key_id)?,
            Command::Status { key_id } => self.status(key_id)?,
            Command::Mine => self.mine()?,
            Command::Chain(ChainCommand::Init) => self.chain_init()?,
            Command::Chain(ChainCommand::Verify) => return self.chain_verify(),
            Command::Var(VarCommand::List { status }) => self.var_list(*status)?,
            Command::Var(VarCommand::Fulfil { var_id, peer_keystore, verdict }) => {
                self.var_fulfil(var_id, peer_keystore, *verdict)?
            }
            Command::Sim(SimCommand::Run { metrics }) => self.sim_run(metrics.as_deref())?,
            Command::ReachReport => self.reach_report()?,
            Command::CertMonitor { observations } => self.cert_monitor(observations)?,
        }
        Ok(ExitCode::SUCCESS)
    }

    fn chain_path(&self) -> Result<&Path> {
        self.cli.global.chain.as_deref().ok_or_else(|| usage("--chain FILE is required"))
    }

    fn load_chain(&self) -> Result<Chain> {
        let path = self.chain_path()?;
        Chain::load(path).with_context(|| format!("loading {}", path.display()))
    }

    fn save_chain(&self, chain: &Chain) -> Result<()> {
        let path = self.chain_path()?;
        chain.persist(path).with_context(|| format!("writing {}", path.display()))
    }

    fn keystore(&self) -> Result<KeyMaterial> {
        let path = self.cli.global.keystore.as_deref().ok_or_else(|| usage("--keystore FILE is required"))?;
        read_keystore(path).with_context(|| format!("reading {}", path.display()))
    }

    fn now(&self, chain: &Chain) -> Day {
        self.cli.global.now.unwrap_or(chain.tip().timestamp)
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cli.global.seed.unwrap_or(0))
    }

    fn params(&self) -> Result<SelectionParams> {
        let mut p = SelectionParams::default();
        if let Some(bits) = self.cli.global.prefix_bits {
            p.prefix_bits = bits;
        }
        if let Some(rate) = self.cli.global.var_rate {
            p.var_rate = rate;
        }
        p.validate().map_err(|e| usage(e.to_string()))?;
        Ok(p)
    }

    fn registered(&self, chain: &Chain, key: &KeyMaterial) -> Result<PublicKeyRecord> {
        find_key_by_public(chain, key).cloned().ok_or_else(|| anyhow!("key is not registered on this chain"))
    }

    /// Mines `pending` together with any owed VARs and saves the chain.
    fn commit(&mut self, chain: &mut Chain, pending: Vec<Record>, now: Day) -> Result<()> {
        let params = self.params()?;
        match mine_next(chain, pending, &params, now)? {
            Some(h) => {
                say!(self, "mined block {h} ({})", chain.tip().block_hash);
            }
            None => {
                say!(self, "nothing to mine");
            }
        }
        self.save_chain(chain)
    }

    fn owner_record(&self, key: &KeyMaterial, owner: &Owner, now: Day) -> Result<PublicKeyRecord> {
        let descriptor = EntityDescriptor::email(&owner.name, &owner.email);
        Ok(PublicKeyRecord::new(descriptor, key, now, now + owner.lifespan_days)?)
    }

    fn keygen(&mut self, bits: u32, scheme: Scheme, owner: &Owner) -> Result<()> {
        let path = self.cli.global.keystore.as_deref().ok_or_else(|| usage("--keystore FILE is required"))?;
        let scheme = match scheme {
            Scheme::Toy => SchemeId::ToyDeterministic,
            Scheme::Standard => SchemeId::Standard,
        };
        let key = generate_keypair(scheme, self.cli.global.seed.unwrap_or(0), bits)?;
        let day = self.cli.global.now.unwrap_or(0);
        let rec = self.owner_record(&key, owner, day)?;
        write_keystore(path, &key)?;
        // The id covers the registration dates, so it is quoted for a given day.
        say!(self, "key_id {} (when registered on day {day})", rec.key_id);
        say!(self, "bits {}", key.key_length_bits);
        Ok(())
    }

    fn register(&mut self, owner: &Owner) -> Result<()> {
        let mut chain = self.load_chain()?;
        let key = self.keystore()?;
        let now = self.now(&chain);
        let rec = self.owner_record(&key, owner, now)?;
        say!(self, "key_id {}", rec.key_id);
        self.commit(&mut chain, vec![rec.into()], now)
    }

    fn session(&mut self, kind: VaKind, args: &SessionArgs, verdict: VerdictArg) -> Result<()> {
        let mut chain = self.load_chain()?;
        let me = self.keystore()?;
        let peer =
            read_keystore(&args.peer_keystore).with_context(|| format!("reading {}", args.peer_keystore.display()))?;
        let (my_rec, peer_rec) = (self.registered(&chain, &me)?, self.registered(&chain, &peer)?);
        let now = self.now(&chain);
        let mut rng = self.rng();
        let visibility = if args.opaque { Visibility::Opaque } else { Visibility::Open };
        let session = start_session(
            &chain,
            &my_rec.key_id,
            &peer_rec.key_id,
            ChallengeSpec::new(kind, visibility),
            now,
            self.cli.global.min_bits,
            &mut rng,
        )?;
        let session = run_both_directions(session, &me, &peer, verdict, now, &mut rng)?;
        let records = self.report_session(&session);
        self.commit(&mut chain, records, now)
    }

    fn report_session(&mut self, s: &VaSession) -> Vec<Record> {
        say!(self, "session {}", s.session_id);
        for d in [Direction::Forward, Direction::Backward] {
            let label = match d {
                Direction::Forward => "forward",
                Direction::Backward => "backward",
            };
            let records = s.direction(d);
            match &records.result {
                Some(r) => match r.failure_reason {
                    None => {
                        say!(self, "{label} success");
                    }
                    Some(reason) => {
                        say!(self, "{label} failure {reason:?}");
                    }
                },
                None => {
                    say!(self, "{label} not run");
                }
            }
            if let Some(sig) = &records.signature {
                say!(self, "{label} signature {}", sig.signature_id);
            }
        }
        let mut records = post_session_records(s, Party::Initiator);
        records.extend(post_session_records(s, Party::Responder));
        records
    }

    fn revoke_key(&mut self, key_id: Option<&Digest>) -> Result<()> {
        let mut chain = self.load_chain()?;
        let issuer = self.keystore()?;
        let target = match key_id {
            Some(id) => *id,
            None => self.registered(&chain, &issuer)?.key_id,
        };
        let now = self.now(&chain);
        let rev = revoke_key(&chain, &target, &issuer, now)?;
        say!(self, "revocation {}", rev.revocation_id);
        self.commit(&mut chain, vec![rev.into()], now)
    }

    fn revoke_sig(&mut self, sig_id: &Digest) -> Result<()> {
        let mut chain = self.load_chain()?;
        let issuer = self.keystore()?;
        let now = self.now(&chain);
        let rev = revoke_signature(&chain, sig_id, &issuer, now)?;
        say!(self, "revocation {}", rev.revocation_id);
        self.commit(&mut chain, vec![rev.into()], now)
    }

    fn lookup(&mut self, query: &LookupQuery) -> Result<()> {
        if query.is_empty() {
            return Err(usage("lookup needs --email, --name or --key-id"));
        }
        let chain = self.load_chain()?;
        let now = self.now(&chain);
        let found = lookup_key(&chain, query, now)?;
        say!(self, "{} match(es)", found.len());
        for (k, status) in found {
            say!(
                self,
                "{} {} {:?} <{}> {}",
                k.key_id,
                status,
                k.owner.display_name,
                k.owner.identifier,
                k.key_length_bits
            );
        }
        Ok(())
    }

    fn history(&mut self, key_id: &Digest) -> Result<()> {
        let chain = self.load_chain()?;
        if chain.key_record(key_id).is_none() {
            bail!("unknown key {key_id}");
        }
        for (loc, r) in history(&chain, key_id) {
            let detail = match r {
                Record::VaResult(v) => match v.failure_reason {
                    None => "success".to_string(),
                    Some(reason) => format!("failure {reason:?}"),
                },
                Record::Signature(s) => {
                    format!("{:?} by {} until day {}", s.kind, s.signer_key_id.short(), s.expires_at)
                }
                Record::Challenge(c) => format!("{:?} {:?} from {}", c.kind, c.visibility, c.challenger_key_id.short()),
                Record::Revocation(r) => format!("{:?} by {}", r.kind, r.issuer_key_id.short()),
                _ => String::new(),
            };
            let line =
                format!("{}.{} day {} {} {}", loc.height, loc.pos, r.created_at().unwrap_or(0), r.type_name(), r.id());
            if detail.is_empty() {
                say!(self, "{line}");
            } else {
                say!(self, "{line} {detail}");
            }
        }
        Ok(())
    }

    fn status(&mut self, key_id: &Digest) -> Result<()> {
        let chain = self.load_chain()?;
        let now = self.now(&chain);
        let status = key_status(&chain, key_id, now);
        say!(self, "key {key_id}");
        say!(self, "status {status}");
        if chain.key_record(key_id).is_some() {
            let fv = formal_validate(&chain, key_id, now, self.cli.global.min_bits);
            let c = fv.checks;
            for (name, ok) in [
                ("well_formed", c.well_formed),
                ("length_sufficient", c.length_sufficient),
                ("not_expired", c.not_expired),
                ("not_revoked", c.not_revoked),
            ] {
                say!(self, "{name} {}", if ok { "pass" } else { "fail" });
            }
        }
        Ok(())
    }

    fn mine(&mut self) -> Result<()> {
        let mut chain = self.load_chain()?;
        let now = self.now(&chain);
        self.commit(&mut chain, Vec::new(), now)
    }

    fn chain_init(&mut self) -> Result<()> {
        let path = self.chain_path()?;
        if path.exists() {
            bail!("{} already exists", path.display());
        }
        let difficulty = self.cli.global.difficulty.unwrap_or(authcoin::chain::DEFAULT_DIFFICULTY);
        let chain = Chain::new(difficulty, self.cli.global.now.unwrap_or(0), Vec::new())?;
        self.save_chain(&chain)?;
        say!(self, "genesis {}", chain.tip().block_hash);
        Ok(())
    }

    fn chain_verify(&mut self) -> Result<ExitCode> {
        let path = self.chain_path()?;
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let report = Chain::audit_bytes(&bytes);
        if report.valid {
            let chain = Chain::from_bytes(&bytes)?;
            say!(self, "valid {} blocks, tip {}", chain.len(), chain.tip().block_hash);
            return Ok(ExitCode::SUCCESS);
        }
        say!(self, "invalid first_bad_height {}", report.first_bad_height.unwrap_or(0));
        for r in &report.reasons {
            say!(self, "  {r}");
        }
        Ok(ExitCode::from(1))
    }

    fn var_list(&mut self, filter: Option<VarStatusArg>) -> Result<()> {
        let chain = self.load_chain()?;
        let params = self.params()?;
        for (_, r) in chain.vars() {
            let Record::Var(v) = r else { continue };
            let status = var_status(&chain, v, &params);
            let keep = match filter {
                None => true,
                Some(VarStatusArg::Open) => status == VarStatus::Open,
                Some(VarStatusArg::Fulfilled) => status == VarStatus::Fulfilled,
                Some(VarStatusArg::Failed) => status == VarStatus::Failed,
                Some(VarStatusArg::Expired) => status == VarStatus::Expired,
            };
            if keep {
                say!(
                    self,
                    "{} target {} {:?} block {} {:?}",
                    v.var_id,
                    v.target_key_id,
                    v.kind,
                    v.created_at_block,
                    status
                );
            }
        }
        Ok(())
    }

    fn var_fulfil(&mut self, var_id: &Digest, peer_keystore: &Path, verdict: VerdictArg) -> Result<()> {
        let mut chain = self.load_chain()?;
        let me = self.keystore()?;
        let peer = read_keystore(peer_keystore).with_context(|| format!("reading {}", peer_keystore.display()))?;
        let my_rec = self.registered(&chain, &me)?;
        let (_, var) = find_var(&chain, var_id).ok_or_else(|| anyhow!("unknown VAR {var_id}"))?;
        if peer.public_bytes
            != chain.key_record(&var.target_key_id).map(|(_, k)| k.public_bytes.clone()).unwrap_or_default()
        {
            bail!("--peer-keystore does not hold the VAR's target key");
        }
        let params = self.params()?;
        let now = self.now(&chain);
        let mut rng = self.rng();
        let session = fulfil_var(
            &chain,
            var_id,
            &my_rec.key_id,
            &params,
            now,
            authcoin::protocol::DEFAULT_DEADLINE_DAYS,
            self.cli.global.min_bits,
            &mut rng,
        )?;
        let session = run_both_directions(session, &me, &peer, verdict, now, &mut rng)?;
        let records = self.report_session(&session);
        self.commit(&mut chain, records, now)
    }

    fn sim_run(&mut self, metrics_path: Option<&Path>) -> Result<()> {
        let mut config = match &self.cli.global.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                ScenarioConfig::parse(&text).map_err(|e| usage(e.to_string()))?
            }
            None => ScenarioConfig::default(),
        };
        let g = &self.cli.global;
        if let Some(seed) = g.seed {
            config.seed = seed;
        }
        if let Some(d) = g.difficulty {
            config.difficulty = d;
        }
        if let Some(b) = g.prefix_bits {
            config.selection.prefix_bits = b;
        }
        if let Some(r) = g.var_rate {
            config.selection.var_rate = r;
        }
        config.validate().map_err(|e| usage(e.to_string()))?;
        let (metrics, chain) = run_scenario(&config)?;
        if self.cli.global.chain.is_some() {
            self.save_chain(&chain)?;
        }
        if let Some(p) = metrics_path {
            fs::write(p, metrics.to_kv()).with_context(|| format!("writing {}", p.display()))?;
        }
        self.out.push_str(&metrics.report());
        Ok(())
    }

    fn reach_report(&mut self) -> Result<()> {
        let chain = self.load_chain()?;
        let now = self.now(&chain);
        for (email, class) in reachability_report(&chain, now) {
            say!(self, "{email} {}", class.as_str());
        }
        Ok(())
    }

    fn cert_monitor(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let observations = parse_observations(&text).map_err(usage)?;
        for report in monitor_certificates(&observations) {
            if !report.flagged() {
                say!(self, "{} consistent over {} day(s)", report.identifier, report.windows_checked);
                continue;
            }
            for m in &report.mismatches {
                let majority = m.majority_key.map_or("none".to_string(), |k| k.to_hex());
                say!(
                    self,
                    "{} day {} MISMATCH majority {} divergent {}",
                    report.identifier,
                    m.day,
                    majority,
                    m.divergent_vantages.join(",")
                );
            }
        }
        Ok(())
    }
}

/// Both sides answer their challenges correctly. The initiator judges the
/// forward direction with `verdict`; the responder accepts a correct answer.
fn run_both_directions(
    mut s: VaSession,
    initiator: &KeyMaterial,
    responder: &KeyMaterial,
    verdict: VerdictArg,
    now: Day,
    rng: &mut ChaCha8Rng,
) -> Result<VaSession> {
    let verdict = match verdict {
        VerdictArg::Accept => Verdict::Accept,
        VerdictArg::Reject => Verdict::Reject,
    };
    for (d, verifier, target, v) in [
        (Direction::Forward, initiator, responder, verdict),
        (Direction::Backward, responder, initiator, Verdict::Accept),
    ] {
        if d == Direction::Backward && s.state != SessionState::ForwardDone {
            break;
        }
        let c = issue_challenge(&mut s, d, now, rng)?;
        fulfil_challenge(&mut s, target, &c, FulfilOutcome::Correct, now, rng)?;
        evaluate(&mut s, verifier, v, now)?;
    }
    Ok(s)
}

fn parse_observations(text: &str) -> Result<Vec<CertObservation>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [vantage, identifier, key, day] = fields[..] else {
            return Err(format!("line {}: expected `vantage identifier key_id day`", n + 1));
        };
        out.push(CertObservation {
            vantage_id: vantage.to_string(),
            identifier: identifier.to_string(),
            observed_key_id: key.parse().map_err(|e| format!("line {}: {e}", n + 1))?,
            observed_at: day.parse().map_err(|_| format!("line {}: bad day {day:?}", n + 1))?,
        });
    }
    Ok(out)
}
