//! Experiment files.
//!
//! A spec is a TOML document with `[network]`, `[process]`, `[profile]`,
//! `[[policy]]`, `[run]`, `[output]` and optional `[bounds]` sections. The
//! full schema lives in `docs/spec-format.md`.

use std::fmt;
use std::path::Path;

use ehsched::harvest::{
    make_profile, DensityProfile, MarkovHarvestParams, MarkovScaling, TwoLevelProfile,
};
use ehsched::{BatteryCap, HarvestTiming, NetworkConfig, PolicySpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read spec {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("spec parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl fmt::Display) -> SpecError {
    SpecError::Invalid {
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Label used in summaries; defaults to the spec file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub network: NetworkSection,
    #[serde(default)]
    pub process: Process,
    pub profile: ProfileSpec,
    #[serde(default, rename = "policy")]
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub bounds: Option<BoundsSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub m: usize,
    pub k: usize,
    pub horizon: usize,
    #[serde(default)]
    pub battery_cap: BatteryCap,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Process {
    Deterministic,
    #[default]
    Poisson,
    Markov {
        #[serde(default)]
        levels: Option<Vec<f64>>,
        #[serde(default)]
        transition: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        scaling: MarkovScaling,
    },
}

impl Process {
    pub fn name(&self) -> &'static str {
        match self {
            Process::Deterministic => "deterministic",
            Process::Poisson => "poisson",
            Process::Markov { .. } => "markov",
        }
    }

    /// Markov parameters with defaults filled in.
    pub fn markov_params(&self) -> Option<MarkovHarvestParams> {
        match self {
            Process::Markov {
                levels,
                transition,
                scaling,
            } => {
                let d = MarkovHarvestParams::default();
                Some(MarkovHarvestParams {
                    levels: levels.clone().unwrap_or(d.levels),
                    transition: transition.clone().unwrap_or(d.transition),
                    scaling: *scaling,
                })
            }
            _ => None,
        }
    }
}

/// Per-node densities: an explicit list, a uniform value, or a two-level
/// profile.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub densities: Option<Vec<f64>>,
    #[serde(default)]
    pub density: Option<f64>,
    #[serde(default)]
    pub count_high: Option<usize>,
    #[serde(default)]
    pub d_high: Option<f64>,
    #[serde(default)]
    pub d_low: Option<f64>,
}

impl ProfileSpec {
    pub fn uniform(density: f64) -> Self {
        ProfileSpec {
            density: Some(density),
            ..Default::default()
        }
    }

    pub fn resolve(&self, field: &str, nodes: usize) -> Result<DensityProfile, SpecError> {
        let two_level = self.count_high.is_some() || self.d_high.is_some() || self.d_low.is_some();
        let forms = [self.densities.is_some(), self.density.is_some(), two_level];
        if forms.iter().filter(|f| **f).count() != 1 {
            return Err(invalid(
                field,
                "give exactly one of `densities`, `density` or `count_high`/`d_high`/`d_low`",
            ));
        }
        let profile = if let Some(d) = &self.densities {
            if d.len() != nodes {
                return Err(invalid(
                    &format!("{field}.densities"),
                    format!("{} entries for {nodes} nodes", d.len()),
                ));
            }
            DensityProfile::new(d.clone())
        } else if let Some(d) = self.density {
            DensityProfile::uniform(nodes, d)
        } else {
            let d_low = self
                .d_low
                .ok_or_else(|| invalid(&format!("{field}.d_low"), "missing"))?;
            let count_high = self.count_high.unwrap_or(0);
            if count_high > 0 && self.d_high.is_none() {
                return Err(invalid(&format!("{field}.d_high"), "missing"));
            }
            make_profile(
                TwoLevelProfile {
                    count_high,
                    d_high: self.d_high.unwrap_or(0.0),
                    d_low,
                },
                nodes,
            )
        };
        profile.map_err(|e| invalid(field, e))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    /// Seeds `0..n`.
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn list(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }

    /// `"30"` for a count, `"1,5,9"` for an explicit list.
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.contains(',') {
            s.split(',')
                .map(|p| p.trim().parse::<u64>().map_err(|e| format!("{p:?}: {e}")))
                .collect::<Result<Vec<_>, _>>()
                .map(Seeds::List)
        } else {
            s.parse::<u64>()
                .map(Seeds::Count)
                .map_err(|e| format!("{s:?}: {e}"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_seeds")]
    pub seeds: Seeds,
    /// Normalise by the max-flow optimum instead of `min(kN, sum floors)`.
    #[serde(default = "yes")]
    pub use_oracle_norm: bool,
    /// Energy harvested in slot `t` is spendable in slot `t`.
    #[serde(default = "yes")]
    pub within_slot_harvest: bool,
    /// Explicit checkpoint slots for cumulative efficiency.
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
    /// Checkpoints every `n` slots up to the horizon.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

fn default_seeds() -> Seeds {
    Seeds::Count(30)
}

fn yes() -> bool {
    true
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seeds: default_seeds(),
            use_oracle_norm: true,
            within_slot_harvest: true,
            checkpoints: None,
            checkpoint_every: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_json")]
    pub json: String,
    #[serde(default = "default_checkpoint_csv")]
    pub checkpoints: String,
    #[serde(default = "default_bounds_csv")]
    pub bounds: String,
    /// Directory for per-run slot logs; none are written when absent.
    #[serde(default)]
    pub slot_logs: Option<String>,
}

fn default_csv() -> String {
    "results.csv".into()
}
fn default_json() -> String {
    "summary.json".into()
}
fn default_checkpoint_csv() -> String {
    "checkpoints.csv".into()
}
fn default_bounds_csv() -> String {
    "bounds.csv".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            csv: default_csv(),
            json: default_json(),
            checkpoints: default_checkpoint_csv(),
            bounds: default_bounds_csv(),
            slot_logs: None,
        }
    }
}

/// Grid for the analytic bounds table: every profile at every horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub horizons: Vec<usize>,
    /// Uniform profiles, one per density.
    #[serde(default)]
    pub densities: Vec<f64>,
    #[serde(default, rename = "profile")]
    pub profiles: Vec<ProfileSpec>,
}

impl BoundsSection {
    /// All grid profiles: the explicit ones first, then the uniform ones.
    pub fn all_profiles(&self) -> Vec<ProfileSpec> {
        self.profiles
            .iter()
            .cloned()
            .chain(self.densities.iter().map(|d| ProfileSpec::uniform(*d)))
            .collect()
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut spec = Self::from_toml(&text)?;
        if spec.name.is_none() {
            spec.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }

    pub fn network_config(&self) -> Result<NetworkConfig, SpecError> {
        let n = &self.network;
        NetworkConfig::new(n.m, n.k, n.horizon)
            .and_then(|c| c.with_battery_cap(n.battery_cap))
            .map(|c| {
                c.with_harvest_timing(if self.run.within_slot_harvest {
                    HarvestTiming::SameSlot
                } else {
                    HarvestTiming::NextSlot
                })
            })
            .map_err(|e| invalid("network", e))
    }

    pub fn density_profile(&self) -> Result<DensityProfile, SpecError> {
        self.profile.resolve("profile", self.network.m)
    }

    pub fn checkpoints(&self) -> Vec<usize> {
        let n = self.network.horizon;
        match (&self.run.checkpoints, self.run.checkpoint_every) {
            (Some(c), _) => c.clone(),
            (None, Some(step)) => (1..=n / step).map(|j| j * step).collect(),
            (None, None) => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let n = &self.network;
        if n.m == 0 {
            return Err(invalid("network.m", "must be positive"));
        }
        if n.k == 0 || n.k > n.m {
            return Err(invalid("network.k", format!("must lie in 1..={}", n.m)));
        }
        if n.horizon == 0 {
            return Err(invalid("network.horizon", "must be positive"));
        }
        if let BatteryCap::Finite(c) = n.battery_cap {
            if !c.is_finite() || c <= 0.0 {
                return Err(invalid("network.battery_cap", "must be positive"));
            }
        }
        if let Some(params) = self.process.markov_params() {
            params.validate().map_err(|e| invalid("process", e))?;
        }
        self.density_profile()?;
        for (i, p) in self.policies.iter().enumerate() {
            p.validate()
                .map_err(|r| invalid(&format!("policy[{i}]"), r))?;
        }
        if self.run.seeds.list().is_empty() {
            return Err(invalid("run.seeds", "at least one seed is required"));
        }
        if self.run.checkpoint_every == Some(0) {
            return Err(invalid("run.checkpoint_every", "must be positive"));
        }
        if let Some(c) = &self.run.checkpoints {
            if let Some(t) = c.iter().find(|t| **t == 0 || **t > n.horizon) {
                return Err(invalid(
                    "run.checkpoints",
                    format!("slot {t} outside 1..={}", n.horizon),
                ));
            }
        }
        for (field, v) in [
            ("output.csv", &self.output.csv),
            ("output.json", &self.output.json),
            ("output.checkpoints", &self.output.checkpoints),
            ("output.bounds", &self.output.bounds),
        ] {
            if v.trim().is_empty() {
                return Err(invalid(field, "empty path"));
            }
        }
        if let Some(b) = &self.bounds {
            if b.horizons.is_empty() || b.horizons.contains(&0) {
                return Err(invalid(
                    "bounds.horizons",
                    "need at least one positive horizon",
                ));
            }
            for (i, p) in b.all_profiles().iter().enumerate() {
                p.resolve(&format!("bounds.profile[{i}]"), n.m)?;
            }
        }
        Ok(())
    }

    /// Checks that apply only when simulating.
    pub fn validate_for_simulation(&self) -> Result<(), SpecError> {
        if self.policies.is_empty() {
            return Err(invalid("policy", "at least one [[policy]] is required"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [network]
        m = 10
        k = 2
        horizon = 50

        [profile]
        density = 0.5

        [[policy]]
        kind = "urop"
    "#;

    #[test]
    fn defaults_fill_in() {
        let spec = ExperimentSpec::from_toml(MINIMAL).unwrap();
        assert_eq!(spec.process, Process::Poisson);
        assert_eq!(spec.run.seeds.list().len(), 30);
        assert!(spec.run.use_oracle_norm);
        assert_eq!(spec.network.battery_cap, BatteryCap::Unbounded);
        assert_eq!(spec.output.csv, "results.csv");
        assert!(spec.checkpoints().is_empty());
    }

    #[test]
    fn errors_name_the_field() {
        let bad_k = MINIMAL.replace("k = 2", "k = 11");
        let err = ExperimentSpec::from_toml(&bad_k).unwrap_err().to_string();
        assert!(err.contains("network.k"), "{err}");

        let unknown = MINIMAL.replace("horizon = 50", "horizon = 50\nslots = 3");
        let err = ExperimentSpec::from_toml(&unknown).unwrap_err().to_string();
        assert!(err.contains("slots"), "{err}");

        let bad_q = format!("{MINIMAL}\n[[policy]]\nkind = \"rr\"\nquantum = 0\n");
        let err = ExperimentSpec::from_toml(&bad_q).unwrap_err().to_string();
        assert!(err.contains("policy[1]"), "{err}");

        let both = MINIMAL.replace("density = 0.5", "density = 0.5\nd_low = 0.1");
        let err = ExperimentSpec::from_toml(&both).unwrap_err().to_string();
        assert!(err.contains("`profile`"), "{err}");
    }

    #[test]
    fn seeds_parse_as_count_or_list() {
        assert_eq!(Seeds::parse("3").unwrap().list(), vec![0, 1, 2]);
        assert_eq!(Seeds::parse("4, 9").unwrap().list(), vec![4, 9]);
        assert!(Seeds::parse("x").is_err());
        let spec =
            ExperimentSpec::from_toml(&format!("{MINIMAL}\n[run]\nseeds = [5, 6]\n")).unwrap();
        assert_eq!(spec.run.seeds, Seeds::List(vec![5, 6]));
    }

    #[test]
    fn markov_defaults_and_checkpoints() {
        let text = MINIMAL.replace(
            "[profile]",
            "[process]\nkind = \"markov\"\n\n[run]\ncheckpoint_every = 20\n\n[profile]",
        );
        let spec = ExperimentSpec::from_toml(&text).unwrap();
        assert_eq!(
            spec.process.markov_params(),
            Some(MarkovHarvestParams::default())
        );
        assert_eq!(spec.checkpoints(), vec![20, 40]);
    }
}
