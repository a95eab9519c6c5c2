use std::fmt::Write as _;
use std::str::FromStr;

use crate::keylife::DEFAULT_MIN_BITS;
use crate::protocol::DEFAULT_DEADLINE_DAYS;
use crate::records::Day;
use crate::var::SelectionParams;

use super::SimError;

/// Scenario parameters. Read from and written to a flat `key=value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub honest_count: usize,
    pub sybil_count: usize,
    pub sybil_collectives: usize,
    pub unreliable_count: usize,
    pub dead_fraction: f64,
    pub blocks_to_run: u64,
    pub difficulty: u8,
    pub selection: SelectionParams,
    pub deadline_days: Day,
    /// Probability that an unreliable verifier actually checks evidence.
    pub diligence: f64,
    /// Collective members each sybil is endorsed by during bootstrap.
    pub sybil_endorsements: usize,
    /// Random validation sessions among honest founders during bootstrap.
    pub bootstrap_sessions: usize,
    pub key_bits: u32,
    pub min_bits: u32,
    pub key_lifespan_days: Day,
    pub vantage_points: usize,
    pub monitored_domains: usize,
    /// Indices of vantage points whose view of every monitored domain is
    /// intercepted.
    pub intercepted_vantages: Vec<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            honest_count: 100,
            sybil_count: 0,
            sybil_collectives: 1,
            unreliable_count: 0,
            dead_fraction: 0.0,
            blocks_to_run: 100,
            difficulty: 8,
            selection: SelectionParams::default(),
            deadline_days: DEFAULT_DEADLINE_DAYS,
            diligence: 0.5,
            sybil_endorsements: 3,
            bootstrap_sessions: 10,
            key_bits: DEFAULT_MIN_BITS,
            min_bits: DEFAULT_MIN_BITS,
            key_lifespan_days: 365,
            vantage_points: 0,
            monitored_domains: 0,
            intercepted_vantages: Vec::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, SimError> {
    value.parse().map_err(|_| SimError::InvalidConfig(format!("bad value for {key}: {value:?}")))
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.dead_fraction) {
            return bad("dead_fraction must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.diligence) {
            return bad("diligence must be in [0, 1]");
        }
        if self.sybil_count > 0 && self.sybil_collectives == 0 {
            return bad("sybils need at least one collective");
        }
        if self.sybil_collectives > self.sybil_count.max(1) {
            return bad("more collectives than sybils");
        }
        if self.key_bits < self.min_bits {
            return bad("key_bits is below min_bits");
        }
        if self.key_lifespan_days == 0 || self.key_lifespan_days > crate::records::MAX_LIFESPAN_DAYS {
            return bad("key_lifespan_days must be in 1..=365");
        }
        if self.deadline_days == 0 {
            return bad("deadline_days must be positive");
        }
        if self.intercepted_vantages.iter().any(|&v| v >= self.vantage_points) {
            return bad("intercepted vantage index out of range");
        }
        if self.monitored_domains > self.honest_count {
            return bad("monitored_domains exceeds honest_count");
        }
        self.selection.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are ignored;
    /// unknown keys are errors. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut c = ScenarioConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SimError::InvalidConfig(format!("line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "seed" => c.seed = parse(key, value)?,
                "honest_count" => c.honest_count = parse(key, value)?,
                "sybil_count" => c.sybil_count = parse(key, value)?,
                "sybil_collectives" => c.sybil_collectives = parse(key, value)?,
                "unreliable_count" => c.unreliable_count = parse(key, value)?,
                "dead_fraction" => c.dead_fraction = parse(key, value)?,
                "blocks_to_run" => c.blocks_to_run = parse(key, value)?,
                "difficulty" => c.difficulty = parse(key, value)?,
                "prefix_bits" => c.selection.prefix_bits = parse(key, value)?,
                "prefix_pattern" => c.selection.prefix_pattern = parse(key, value)?,
                "var_rate" => c.selection.var_rate = parse(key, value)?,
                "var_expiry_blocks" => c.selection.expiry_blocks = parse(key, value)?,
                "deadline_days" => c.deadline_days = parse(key, value)?,
                "diligence" => c.diligence = parse(key, value)?,
                "sybil_endorsements" => c.sybil_endorsements = parse(key, value)?,
                "bootstrap_sessions" => c.bootstrap_sessions = parse(key, value)?,
                "key_bits" => c.key_bits = parse(key, value)?,
                "min_bits" => c.min_bits = parse(key, value)?,
                "key_lifespan_days" => c.key_lifespan_days = parse(key, value)?,
                "vantage_points" => c.vantage_points = parse(key, value)?,
                "monitored_domains" => c.monitored_domains = parse(key, value)?,
                "intercepted_vantages" => {
                    c.intercepted_vantages = value
                        .split(',')
                        .map(str::trim)
                        .filter(|v| !v.is_empty())
                        .map(|v| parse(key, v))
                        .collect::<Result<_, _>>()?
                }
                other => return Err(SimError::InvalidConfig(format!("unknown key {other:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let s_ = &mut s;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s_, "{k}={v}");
        };
        kv("seed", self.seed.to_string());
        kv("honest_count", self.honest_count.to_string());
        kv("sybil_count", self.sybil_count.to_string());
        kv("sybil_collectives", self.sybil_collectives.to_string());
        kv("unreliable_count", self.unreliable_count.to_string());
        kv("dead_fraction", self.dead_fraction.to_string());
        kv("blocks_to_run", self.blocks_to_run.to_string());
        kv("difficulty", self.difficulty.to_string());
        kv("prefix_bits", self.selection.prefix_bits.to_string());
        kv("prefix_pattern", self.selection.prefix_pattern.to_string());
        kv("var_rate", self.selection.var_rate.to_string());
        kv("var_expiry_blocks", self.selection.expiry_blocks.to_string());
        kv("deadline_days", self.deadline_days.to_string());
        kv("diligence", self.diligence.to_string());
        kv("sybil_endorsements", self.sybil_endorsements.to_string());
        kv("bootstrap_sessions", self.bootstrap_sessions.to_string());
        kv("key_bits", self.key_bits.to_string());
        kv("min_bits", self.min_bits.to_string());
        kv("key_lifespan_days", self.key_lifespan_days.to_string());
        kv("vantage_points", self.vantage_points.to_string());
        kv("monitored_domains", self.monitored_domains.to_string());
        kv(
            "intercepted_vantages",
            self.intercepted_vantages.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        );
        s
    }
}
