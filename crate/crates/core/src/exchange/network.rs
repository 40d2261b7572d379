use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulated broadcast medium. Lossless and instantaneous by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Network {
    pub drop_probability: f64,
    /// Delivery delay in seconds.
    pub latency: f64,
    /// Messages slower than this many seconds miss the round.
    pub round_deadline: f64,
    pub seed: u64,
}

impl Default for Network {
    fn default() -> Self {
        Self {
            drop_probability: 0.0,
            latency: 0.0,
            round_deadline: f64::INFINITY,
            seed: 0,
        }
    }
}

impl Network {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Error::Config(format!(
                "drop probability must be in [0, 1], got {}",
                self.drop_probability
            )));
        }
        if !(self.latency >= 0.0) {
            return Err(Error::Config("latency must be non-negative".into()));
        }
        Ok(())
    }

    /// Whether a message on this link makes it within the round. The draw depends only on
    /// the link identity, so evaluation order cannot change the outcome.
    pub fn delivers(&self, round: u64, from: u32, to: u32, kind: MessageKind) -> bool {
        if self.latency > self.round_deadline {
            return false;
        }
        if self.drop_probability <= 0.0 {
            return true;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((round << 33) ^ ((from as u64) << 17) ^ ((to as u64) << 1) ^ kind as u64);
        rng.gen::<f64>() >= self.drop_probability
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Query = 0,
    Response = 1,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkRecord {
    pub round: u64,
    pub from: u32,
    pub to: u32,
    pub kind: MessageKind,
    pub bytes: usize,
    pub delivered: bool,
}

/// Encoded bytes per link per round. Self-addressed messages never touch the medium and
/// are not recorded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BandwidthLedger {
    pub links: Vec<LinkRecord>,
}

impl BandwidthLedger {
    pub fn record(&mut self, link: LinkRecord) {
        self.links.push(link);
    }

    pub fn extend(&mut self, other: BandwidthLedger) {
        self.links.extend(other.links);
    }

    pub fn total_bytes(&self) -> usize {
        self.links.iter().map(|l| l.bytes).sum()
    }

    /// Bytes sent to `agent`, counting dropped messages as well.
    pub fn inbound_bytes(&self, agent: u32) -> usize {
        self.links
            .iter()
            .filter(|l| l.to == agent)
            .map(|l| l.bytes)
            .sum()
    }

    pub fn outbound_bytes(&self, agent: u32) -> usize {
        self.links
            .iter()
            .filter(|l| l.from == agent)
            .map(|l| l.bytes)
            .sum()
    }

    /// Sorted copy, so ledgers built by concurrent rounds compare equal.
    pub fn canonical(&self) -> BandwidthLedger {
        let mut links = self.links.clone();
        links.sort();
        BandwidthLedger { links }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.canonical()).map_err(|e| Error::Serde(e.to_string()))
    }
}
