use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    Queue,
    List,
    Bst,
    BstDirect,
    #[serde(rename = "bst-plain-cas-baseline")]
    BstPlain,
}

impl Structure {
    pub const ALL: [Structure; 5] = [
        Structure::Queue,
        Structure::List,
        Structure::Bst,
        Structure::BstDirect,
        Structure::BstPlain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Structure::Queue => "queue",
            Structure::List => "list",
            Structure::Bst => "bst",
            Structure::BstDirect => "bst-direct",
            Structure::BstPlain => "bst-plain-cas-baseline",
        }
    }

    pub fn is_set(self) -> bool {
        self != Structure::Queue
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bst-plain" => Ok(Structure::BstPlain),
            _ => Structure::ALL
                .into_iter()
                .find(|x| x.name() == s)
                .ok_or_else(|| ConfigError::UnknownStructure(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown structure `{0}` (expected queue, list, bst, bst-direct or bst-plain-cas-baseline)")]
    UnknownStructure(String),
    #[error("operation percentages sum to {0}, not 100")]
    MixSum(u32),
    #[error("range queries are enabled but the range size is 0")]
    ZeroRangeSize,
    #[error("at least one thread is required")]
    NoThreads,
    #[error("at most {max} threads are supported, got {got}")]
    TooManyThreads { got: usize, max: usize },
    #[error("duration must be positive")]
    NoDuration,
    #[error("prefill {prefill} does not fit in key range {range}")]
    PrefillTooLarge { prefill: u64, range: u64 },
}

/// Operation mix in percent. For the queue, insert and delete are enqueue
/// and dequeue, find peeks at both ends and a range query reads the
/// `rq_size`-th element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mix {
    pub ins: u32,
    pub del: u32,
    pub find: u32,
    pub rq: u32,
}

impl Default for Mix {
    fn default() -> Self {
        Mix {
            ins: 30,
            del: 20,
            find: 50,
            rq: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub structure: Structure,
    pub prefill: u64,
    /// Overrides the derived key range.
    pub key_range: Option<u64>,
    pub mix: Mix,
    pub rq_size: u64,
    pub threads: usize,
    pub seconds: f64,
    pub warmup_seconds: f64,
    pub seed: u64,
    pub sorted: bool,
}

pub const MAX_THREADS: usize = 128;

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            structure: Structure::Bst,
            prefill: 10_000,
            key_range: None,
            mix: Mix::default(),
            rq_size: 64,
            threads: 4,
            seconds: 1.0,
            warmup_seconds: 0.0,
            seed: 1,
            sorted: false,
        }
    }
}

impl WorkloadConfig {
    /// Keys are drawn from `[1, key_range]`. With inserts and deletes at
    /// rates `ins` and `del` the set settles at `key_range * ins / (ins +
    /// del)` keys, so the range is chosen to keep it at the prefill size.
    /// Without inserts the range is twice the prefill.
    pub fn key_range(&self) -> u64 {
        if let Some(r) = self.key_range {
            return r.max(1);
        }
        let Mix { ins, del, .. } = self.mix;
        let r = if ins == 0 {
            2 * self.prefill
        } else {
            self.prefill * u64::from(ins + del) / u64::from(ins)
        };
        r.max(1)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let Mix { ins, del, find, rq } = self.mix;
        let sum = ins + del + find + rq;
        if sum != 100 {
            return Err(ConfigError::MixSum(sum));
        }
        if rq > 0 && self.rq_size == 0 {
            return Err(ConfigError::ZeroRangeSize);
        }
        if self.threads == 0 {
            return Err(ConfigError::NoThreads);
        }
        if self.threads > MAX_THREADS {
            return Err(ConfigError::TooManyThreads {
                got: self.threads,
                max: MAX_THREADS,
            });
        }
        if !(self.seconds > 0.0) || self.warmup_seconds < 0.0 {
            return Err(ConfigError::NoDuration);
        }
        if self.structure.is_set() && self.prefill > self.key_range() {
            return Err(ConfigError::PrefillTooLarge {
                prefill: self.prefill,
                range: self.key_range(),
            });
        }
        Ok(())
    }
}
