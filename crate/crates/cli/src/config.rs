//! Run configuration: a TOML file whose values the command-line flags override.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tfqkd::bell::{OptimizeOptions, SearchSpace, ThresholdOptions};
use tfqkd::finite_key::{FiniteKeyParams, RoundCounting, TestFraction};
use tfqkd::keyrate::{RateOptions, DEFAULT_REP_RATE};
use tfqkd::measurement::{Protocol, ProtocolParams, VisibilityModel};
use tfqkd::optim::{MultiStartOptions, NelderMeadOptions};
use tfqkd::sources::{ChannelModel, DEFAULT_ATTENUATION, DEFAULT_BOB_GAIN};

use crate::error::{config, CliError};

/// Environment variable naming a config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "TFQKD_CONFIG";

/// A list of sweep values.
///
/// In TOML it is a number, an array, or a `{ start, stop, steps }` table. On
/// the command line it is `x`, `x,y,z`, or `start:stop:steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Value(f64),
    List(Vec<f64>),
    Range { start: f64, stop: f64, steps: usize },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let v = match self {
            Grid::Value(x) => vec![*x],
            Grid::List(xs) => xs.clone(),
            Grid::Range { start, stop, steps } => match steps {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
            },
        };
        if v.is_empty() {
            return Err(config(format!("grid {self} is empty")));
        }
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(config(format!("grid {self} contains non-finite value {bad}")));
        }
        Ok(v)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grid::Value(x) => write!(f, "{x}"),
            Grid::List(xs) => {
                let parts: Vec<String> = xs.iter().map(f64::to_string).collect();
                write!(f, "{}", parts.join(","))
            }
            Grid::Range { start, stop, steps } => write!(f, "{start}:{stop}:{steps}"),
        }
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [one] if one.contains(',') => Ok(Grid::List(one.split(',').map(num).collect::<Result<_, _>>()?)),
            [one] => Ok(Grid::Value(num(one)?)),
            [a, b, n] => Ok(Grid::Range {
                start: num(a)?,
                stop: num(b)?,
                steps: n.trim().parse().map_err(|e| format!("`{n}`: {e}"))?,
            }),
            _ => Err(format!("`{s}` is not a value, a comma list or start:stop:steps")),
        }
    }
}

/// Parses `one_photon`/`1ph` and `two_photon`/`2ph`.
pub fn parse_protocol(s: &str) -> Result<Protocol, String> {
    match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "one_photon" | "1ph" | "1" => Ok(Protocol::OnePhoton),
        "two_photon" | "2ph" | "2" => Ok(Protocol::TwoPhoton),
        other => Err(format!("unknown protocol `{other}` (use one_photon or two_photon)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Figure of merit located by the `threshold` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    /// Detector efficiency where |S| first exceeds 2.
    #[default]
    Bell,
    /// Detector efficiency where the key rate without noisy preprocessing vanishes.
    KeyRate,
    /// Same with noisy preprocessing.
    KeyRateNp,
    /// Visibility needed for a violation at each detector efficiency.
    Visibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub eta_d: Grid,
    pub visibility: Grid,
    pub distance_km: Grid,
    pub attenuation_db_per_km: f64,
    /// Pulse repetition rate ν in Hz.
    pub rep_rate: f64,
    pub eta_c: f64,
    /// Herald efficiency of Bob's single-photon source (2-photon protocol).
    pub eta_s: f64,
    /// Gain of Bob's pair source (2-photon protocol).
    pub g_b: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            eta_d: Grid::Value(1.0),
            visibility: Grid::Value(1.0),
            distance_km: Grid::Value(0.0),
            attenuation_db_per_km: DEFAULT_ATTENUATION,
            rep_rate: DEFAULT_REP_RATE,
            eta_c: 1.0,
            eta_s: 1.0,
            g_b: DEFAULT_BOB_GAIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    pub starts: usize,
    pub seed: u64,
    /// Function evaluations per local search.
    pub budget: usize,
    /// When false the source parameters are held at their defaults.
    pub optimize_source: bool,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let m = MultiStartOptions::default();
        Self { starts: m.starts, seed: m.seed, budget: m.local.max_evals, optimize_source: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSpec {
    pub noisy_preprocessing: bool,
}

impl Default for RateSpec {
    fn default() -> Self {
        Self { noisy_preprocessing: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteSpec {
    /// Block sizes N. Empty means asymptotic only for `sweep`.
    pub rounds: Vec<f64>,
    pub eps_sound: f64,
    pub eps_ec: f64,
    pub counting: RoundCounting,
    /// Fixed test fraction; absent means optimized.
    pub test_fraction: Option<f64>,
}

impl Default for FiniteSpec {
    fn default() -> Self {
        let d = FiniteKeyParams::default();
        Self { rounds: Vec::new(), eps_sound: d.eps_sound, eps_ec: d.eps_ec, counting: d.counting, test_fraction: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSpec {
    pub quantity: ThresholdKind,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        let d = ThresholdOptions::default();
        Self { quantity: ThresholdKind::default(), lo: d.lo, hi: d.hi, tol: d.tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSpec {
    pub draws: usize,
    pub seed: u64,
}

impl Default for ValidateSpec {
    fn default() -> Self {
        let d = tfqkd::validation::ValidationOptions::default();
        Self { draws: d.draws, seed: d.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Standard output when absent.
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Everything a subcommand needs, after flags have been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(with = "protocol_serde")]
    pub protocol: Protocol,
    pub physics: Physics,
    pub optimizer: OptimizerSpec,
    pub rate: RateSpec,
    pub finite: FiniteSpec,
    pub threshold: ThresholdSpec,
    pub validate: ValidateSpec,
    pub output: OutputSpec,
    /// Worker threads; absent means all available cores.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::OnePhoton,
            physics: Physics::default(),
            optimizer: OptimizerSpec::default(),
            rate: RateSpec::default(),
            finite: FiniteSpec::default(),
            threshold: ThresholdSpec::default(),
            validate: ValidateSpec::default(),
            output: OutputSpec::default(),
            jobs: None,
        }
    }
}

mod protocol_serde {
    use serde::{Deserialize, Deserializer, Serializer};
    use tfqkd::measurement::Protocol;

    pub fn serialize<S: Serializer>(p: &Protocol, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&p.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Protocol, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_protocol(&s).map_err(serde::de::Error::custom)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
        Self::from_toml(&text)
    }

    /// Range checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.physics;
        let in_unit = |name: &str, g: &Grid, open_low: bool| -> Result<(), CliError> {
            for x in g.values()? {
                let ok = if open_low { x > 0.0 && x <= 1.0 } else { (0.0..=1.0).contains(&x) };
                if !ok {
                    return Err(config(format!("{name} value {x} outside its physical range")));
                }
            }
            Ok(())
        };
        in_unit("eta_d", &p.eta_d, true)?;
        in_unit("visibility", &p.visibility, false)?;
        if p.distance_km.values()?.iter().any(|&l| l < 0.0) {
            return Err(config("distances must be nonnegative"));
        }
        if !(p.rep_rate > 0.0 && p.rep_rate.is_finite()) {
            return Err(config("rep_rate must be positive"));
        }
        if !(p.attenuation_db_per_km >= 0.0 && p.attenuation_db_per_km.is_finite()) {
            return Err(config("attenuation_db_per_km must be nonnegative"));
        }
        for (name, x) in [("eta_c", p.eta_c), ("eta_s", p.eta_s)] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(config(format!("{name} must lie in (0, 1], got {x}")));
            }
        }
        if !(p.g_b > 0.0 && p.g_b.is_finite()) {
            return Err(config("g_b must be positive"));
        }
        if self.optimizer.starts == 0 || self.optimizer.budget == 0 {
            return Err(config("optimizer needs at least one start and a positive budget"));
        }
        if self.jobs == Some(0) {
            return Err(config("--jobs must be at least 1"));
        }
        let t = &self.threshold;
        if !(0.0 < t.lo && t.lo < t.hi && t.hi <= 1.0 && t.tol > 0.0) {
            return Err(config("threshold bracket must satisfy 0 < lo < hi ≤ 1 with tol > 0"));
        }
        if self.validate.draws == 0 {
            return Err(config("validation needs at least one draw"));
        }
        self.finite_params(1.0).map_err(|e| config(e.to_string()))?;
        Ok(())
    }

    pub fn channel(&self, distance_km: f64) -> ChannelModel {
        ChannelModel { distance_km, attenuation_db_per_km: self.physics.attenuation_db_per_km }
    }

    pub fn base_params(&self, distance_km: f64) -> ProtocolParams {
        let mut p = ProtocolParams::default_for(self.protocol, self.channel(distance_km));
        match &mut p {
            ProtocolParams::OnePhoton(o) => o.eta_c = self.physics.eta_c,
            ProtocolParams::TwoPhoton(t) => {
                t.eta_c = self.physics.eta_c;
                t.eta_s = self.physics.eta_s;
                t.g_b = self.physics.g_b;
            }
        }
        p
    }

    pub fn optimize_options(&self) -> OptimizeOptions {
        OptimizeOptions {
            multistart: MultiStartOptions {
                starts: self.optimizer.starts,
                seed: self.optimizer.seed,
                local: NelderMeadOptions { max_evals: self.optimizer.budget, ..Default::default() },
            },
            space: SearchSpace { optimize_source: self.optimizer.optimize_source, ..Default::default() },
        }
    }

    pub fn rate_options(&self, maximize_throughput: bool) -> RateOptions {
        RateOptions {
            optimize: self.optimize_options(),
            noisy_preprocessing: self.rate.noisy_preprocessing,
            rep_rate: self.physics.rep_rate,
            maximize_throughput,
        }
    }

    pub fn threshold_options(&self) -> ThresholdOptions {
        ThresholdOptions { lo: self.threshold.lo, hi: self.threshold.hi, tol: self.threshold.tol }
    }

    pub fn finite_params(&self, rounds: f64) -> tfqkd::Result<FiniteKeyParams> {
        let f = &self.finite;
        let fk = FiniteKeyParams {
            rounds,
            eps_sound: f.eps_sound,
            eps_ec: f.eps_ec,
            test_fraction: f.test_fraction.map_or(TestFraction::Optimized, TestFraction::Fixed),
            counting: f.counting,
            ..Default::default()
        };
        fk.validate()?;
        Ok(fk)
    }

    pub fn visibilities(&self) -> Result<Vec<VisibilityModel>, CliError> {
        self.physics
            .visibility
            .values()?
            .into_iter()
            .map(|v| VisibilityModel::new(v).map_err(|e| config(e.to_string())))
            .collect()
    }
}
