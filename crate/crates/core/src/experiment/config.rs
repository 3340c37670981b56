use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::oracle::OracleConfig;
use crate::retrieval::{Bm25Params, Heuristic};
use crate::tagger::DEFAULT_TIMEOUT;

/// One row family of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Setting {
    /// No retrieval.
    None,
    Heuristic(Heuristic),
    /// Candidates drawn by the heuristic, re-ranked by the oracle.
    Oracle(Heuristic),
}

impl Setting {
    pub fn name(self) -> String {
        match self {
            Setting::None => "none".to_string(),
            Setting::Heuristic(h) => h.as_str().to_string(),
            Setting::Oracle(h) => format!("oracle-{}", h.as_str()),
        }
    }

    /// The default grid: baseline, the six heuristics and the bm25 oracle.
    pub fn defaults() -> Vec<Setting> {
        let mut settings = vec![Setting::None];
        settings.extend(Heuristic::ALL.iter().map(|&h| Setting::Heuristic(h)));
        settings.push(Setting::Oracle(Heuristic::Bm25));
        settings
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Setting {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExperimentError::Config(format!("unknown setting `{s}`"));
        if s == "none" {
            return Ok(Setting::None);
        }
        match s.strip_prefix("oracle-") {
            Some(h) => h.parse().map(Setting::Oracle).map_err(|_| bad()),
            None => s.parse().map(Setting::Heuristic).map_err(|_| bad()),
        }
    }
}

impl From<Setting> for String {
    fn from(s: Setting) -> String {
        s.name()
    }
}

impl TryFrom<String> for Setting {
    type Error = ExperimentError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaggerSpec {
    /// The memorizing tagger, trained on each fold's training documents.
    Builtin,
    /// An external command speaking the JSON Lines protocol.
    Command(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub settings: Vec<Setting>,
    pub k_values: Vec<usize>,
    pub n_folds: usize,
    pub n_runs: usize,
    pub seed: u64,
    pub tagger: TaggerSpec,
    /// Passed as `--model`; `{fold}` and `{run}` are substituted.
    pub tagger_model: Option<String>,
    /// Candidate pool and filtering for oracle settings. `retain` is ignored:
    /// an oracle cell keeps up to `k` sentences.
    pub oracle: OracleConfig,
    /// Parallel jobs; 0 uses all cores.
    pub workers: usize,
    pub bm25: Bm25Params,
    pub timeout: Duration,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            settings: Setting::defaults(),
            k_values: vec![1, 2, 4, 6, 8],
            n_folds: 5,
            n_runs: 3,
            seed: 0,
            tagger: TaggerSpec::Builtin,
            tagger_model: None,
            oracle: OracleConfig::default(),
            workers: 0,
            bm25: Bm25Params::default(),
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ExperimentError> {
    value
        .parse()
        .map_err(|_| ExperimentError::Config(format!("bad value for `{key}`: `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ExperimentError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_value(key, v))
        .collect()
}

impl ExperimentConfig {
    /// Parses the `key = value` format; unset keys keep their defaults.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut config = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ExperimentError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "heuristics" => {
                    config.settings = value
                        .split(',')
                        .map(str::trim)
                        .filter(|v| !v.is_empty())
                        .map(str::parse)
                        .collect::<Result<_, _>>()?
                }
                "k_values" => config.k_values = parse_list(key, value)?,
                "n_folds" => config.n_folds = parse_value(key, value)?,
                "n_runs" => config.n_runs = parse_value(key, value)?,
                "seed" => config.seed = parse_value(key, value)?,
                "tagger" => {
                    config.tagger = match value {
                        "builtin" => TaggerSpec::Builtin,
                        "" => return Err(ExperimentError::Config("empty tagger command".into())),
                        cmd => TaggerSpec::Command(cmd.to_string()),
                    }
                }
                "tagger_model" => config.tagger_model = (!value.is_empty()).then(|| value.to_string()),
                "oracle_candidates" => config.oracle.candidate_count = parse_value(key, value)?,
                "oracle_positive_only" => config.oracle.positive_only = parse_value(key, value)?,
                "oracle_exclusion_radius" => config.oracle.exclusion_radius = parse_value(key, value)?,
                "workers" => config.workers = parse_value(key, value)?,
                "bm25_k1" => config.bm25.k1 = parse_value(key, value)?,
                "bm25_b" => config.bm25.b = parse_value(key, value)?,
                "timeout_secs" => config.timeout = Duration::from_secs_f64(parse_value(key, value)?),
                _ => return Err(ExperimentError::Config(format!("line {}: unknown key `{key}`", n + 1))),
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::Config(m));
        if self.settings.is_empty() {
            return fail("no heuristics configured".into());
        }
        for (i, s) in self.settings.iter().enumerate() {
            if self.settings[..i].contains(s) {
                return fail(format!("heuristic `{s}` listed twice"));
            }
        }
        if self.k_values.is_empty() || self.k_values[0] == 0 {
            return fail("k_values must be non-empty and positive".into());
        }
        if self.k_values.windows(2).any(|w| w[0] >= w[1]) {
            return fail("k_values must be strictly increasing".into());
        }
        if self.n_folds < 2 || self.n_runs == 0 {
            return fail("need at least 2 folds and 1 run".into());
        }
        if self.settings.iter().any(|s| matches!(s, Setting::Oracle(_))) {
            let max_k = *self.k_values.last().unwrap();
            let oracle = OracleConfig { retain: max_k, ..self.oracle };
            oracle.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        if !(self.bm25.k1 >= 0.0 && (0.0..=1.0).contains(&self.bm25.b)) {
            return fail("bm25_k1 must be >= 0 and bm25_b within [0, 1]".into());
        }
        if self.timeout.is_zero() {
            return fail("timeout must be positive".into());
        }
        Ok(())
    }

    /// The `--model` argument for one job.
    pub fn model_for(&self, fold: usize, run: usize) -> Option<String> {
        self.tagger_model
            .as_ref()
            .map(|m| m.replace("{fold}", &fold.to_string()).replace("{run}", &run.to_string()))
    }

    /// Seed driving random choices in run `run`.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    /// Serializes back to the `key = value` format.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(", ");
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("heuristics", join(self.settings.iter().map(|s| s.name()).collect()));
        put("k_values", join(self.k_values.iter().map(|k| k.to_string()).collect()));
        put("n_folds", self.n_folds.to_string());
        put("n_runs", self.n_runs.to_string());
        put("seed", self.seed.to_string());
        put(
            "tagger",
            match &self.tagger {
                TaggerSpec::Builtin => "builtin".to_string(),
                TaggerSpec::Command(c) => c.clone(),
            },
        );
        if let Some(m) = &self.tagger_model {
            put("tagger_model", m.clone());
        }
        put("oracle_candidates", self.oracle.candidate_count.to_string());
        put("oracle_positive_only", self.oracle.positive_only.to_string());
        put("oracle_exclusion_radius", self.oracle.exclusion_radius.to_string());
        put("workers", self.workers.to_string());
        put("bm25_k1", self.bm25.k1.to_string());
        put("bm25_b", self.bm25.b.to_string());
        put("timeout_secs", self.timeout.as_secs_f64().to_string());
        out
    }
}
