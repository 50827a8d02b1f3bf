//! Signature matching plus per-container behavior baselines.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::event::SyscallEvent;
use crate::policy::{CompiledPolicySet, Decision};

pub const DEFAULT_LEARNING_WINDOW: u64 = 1000;
pub const DEFAULT_RARITY_THRESHOLD: f64 = 0.001;

/// What a behavior profile is keyed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Container,
    Process,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Container => "container",
            Granularity::Process => "process",
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "container" => Ok(Granularity::Container),
            "process" => Ok(Granularity::Process),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub learning_window: u64,
    pub rarity_threshold: f64,
    pub granularity: Granularity,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            learning_window: DEFAULT_LEARNING_WINDOW,
            rarity_threshold: DEFAULT_RARITY_THRESHOLD,
            granularity: Granularity::Container,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub container_id: String,
    pub syscall_counts: BTreeMap<String, u64>,
    pub window_events: u64,
    pub learned: bool,
}

impl BehaviorProfile {
    pub fn new(container_id: impl Into<String>) -> Self {
        BehaviorProfile {
            container_id: container_id.into(),
            syscall_counts: BTreeMap::new(),
            window_events: 0,
            learned: false,
        }
    }

    pub fn count(&self, syscall: &str) -> u64 {
        self.syscall_counts.get(syscall).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    NovelSyscall,
    FrequencyAnomaly,
}

impl FlagKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::NovelSyscall => "novel_syscall",
            FlagKind::FrequencyAnomaly => "frequency_anomaly",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationFlag {
    pub kind: FlagKind,
    pub syscall: String,
    /// Prior count of the syscall in the profile.
    pub count: u64,
    /// Prior empirical frequency, `count / window_events`.
    pub frequency: f64,
}

impl fmt::Display for DeviationFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} (count {}, freq {:.6})",
            self.kind.as_str(),
            self.syscall,
            self.count,
            self.frequency
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutcome {
    pub decision: Decision,
    pub behavior_flags: Vec<DeviationFlag>,
    pub policy_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileStore {
    config: AnalyzerConfig,
    profiles: BTreeMap<String, BehaviorProfile>,
}

impl Default for ProfileStore {
    fn default() -> Self {
        ProfileStore::new(AnalyzerConfig::default())
    }
}

impl ProfileStore {
    pub fn new(config: AnalyzerConfig) -> Self {
        ProfileStore {
            config,
            profiles: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.config
    }

    /// Profile key for an event: container id, `<host>`, or `pid:N`.
    pub fn key_for(&self, event: &SyscallEvent) -> String {
        match self.config.granularity {
            Granularity::Container => event.container.to_string(),
            Granularity::Process => format!("pid:{}", event.raw.pid),
        }
    }

    pub fn get(&self, key: &str) -> Option<&BehaviorProfile> {
        self.profiles.get(key)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &BehaviorProfile> {
        self.profiles.values()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Flags the event against its profile's current baseline without
    /// updating it.
    pub fn deviations(&self, event: &SyscallEvent) -> Vec<DeviationFlag> {
        let Some(profile) = self.profiles.get(&self.key_for(event)) else {
            return Vec::new();
        };
        if !profile.learned {
            return Vec::new();
        }
        let syscall = event.syscall();
        let count = profile.count(syscall);
        let frequency = count as f64 / profile.window_events as f64;
        let kind = if count == 0 {
            FlagKind::NovelSyscall
        } else if frequency < self.config.rarity_threshold {
            FlagKind::FrequencyAnomaly
        } else {
            return Vec::new();
        };
        vec![DeviationFlag {
            kind,
            syscall: syscall.to_string(),
            count,
            frequency,
        }]
    }
}

pub fn update_profile(store: &mut ProfileStore, event: &SyscallEvent) {
    let key = store.key_for(event);
    let window = store.config.learning_window;
    let profile = store
        .profiles
        .entry(key.clone())
        .or_insert_with(|| BehaviorProfile::new(key));
    *profile.syscall_counts.entry(event.syscall().to_string()).or_insert(0) += 1;
    profile.window_events += 1;
    if profile.window_events >= window {
        profile.learned = true;
    }
}

/// Matches the event, flags deviations against the pre-event baseline, then
/// folds the event into the profile.
pub fn process_event(event: &SyscallEvent, compiled: &CompiledPolicySet, store: &mut ProfileStore) -> AnalysisOutcome {
    let decision = compiled.match_event(event);
    let behavior_flags = store.deviations(event);
    update_profile(store, event);
    AnalysisOutcome {
        decision,
        behavior_flags,
        policy_version: compiled.version(),
    }
}
