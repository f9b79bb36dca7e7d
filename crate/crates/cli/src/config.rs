//! Run configuration: defaults, overridden by a `key=value` file, overridden
//! by command-line flags.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use kkm_core::distributed::Algorithm;
use kkm_core::fabric::Schedule;
use kkm_core::linalg::KernelSpec;
use kkm_core::oracle::FitConfig;

use crate::error::CliError;
use crate::synth::SynthKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgoChoice {
    Seq,
    Window,
    Dist(Algorithm),
}

impl fmt::Display for AlgoChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgoChoice::Seq => f.write_str("seq"),
            AlgoChoice::Window => f.write_str("window"),
            AlgoChoice::Dist(a) => write!(f, "{a}"),
        }
    }
}

impl FromStr for AlgoChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "seq" => Ok(AlgoChoice::Seq),
            "window" => Ok(AlgoChoice::Window),
            other => other
                .parse()
                .map(AlgoChoice::Dist)
                .map_err(|_| CliError::Usage(format!("unknown algorithm '{s}' (seq, window, 1d, h1d, 1.5d, 2d)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KernelChoice {
    Linear,
    #[default]
    Polynomial,
}

impl FromStr for KernelChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelChoice::Linear),
            "polynomial" | "poly" => Ok(KernelChoice::Polynomial),
            _ => Err(CliError::Usage(format!("unknown kernel '{s}' (linear, polynomial)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl FromStr for Precision {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(CliError::Usage(format!("unknown precision '{s}' (f32, f64)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleChoice(pub Schedule);

impl FromStr for ScheduleChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "concurrent" => Ok(ScheduleChoice(Schedule::Concurrent)),
            "serialized" => Ok(ScheduleChoice(Schedule::Serialized)),
            _ => Err(CliError::Usage(format!("unknown schedule '{s}' (concurrent, serialized)"))),
        }
    }
}

/// Every configurable knob, each optional so that sources can be layered.
#[derive(Args, Clone, Debug, Default, PartialEq)]
pub struct ConfigArgs {
    /// `key=value` file; keys are the long flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// libSVM dataset (otherwise a synthetic one is generated).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic generator: blobs or rings.
    #[arg(long)]
    pub gen: Option<SynthKind>,
    /// Synthetic point count, or a sampling cap for --data.
    #[arg(long)]
    pub n: Option<usize>,
    /// Synthetic dimension, or a feature sampling cap for --data.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// linear or polynomial.
    #[arg(long)]
    pub kernel: Option<KernelChoice>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub degree: Option<u32>,
    /// seq, window, 1d, h1d, 1.5d or 2d.
    #[arg(long)]
    pub algo: Option<AlgoChoice>,
    #[arg(long)]
    pub ranks: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sliding-window block width.
    #[arg(long)]
    pub block: Option<usize>,
    /// f32 or f64.
    #[arg(long)]
    pub precision: Option<Precision>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stop early once an iteration changes no assignment.
    #[arg(long)]
    pub converge: Option<bool>,
    /// Rank scheduler: concurrent or serialized.
    #[arg(long)]
    pub schedule: Option<ScheduleChoice>,
}

fn field<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Option<T>, CliError>
where
    T::Err: fmt::Display,
{
    value.parse().map(Some).map_err(|e| CliError::Parse {
        line,
        msg: format!("bad value for '{key}': {e}"),
    })
}

impl ConfigArgs {
    /// Parses `key=value` lines; blank lines and `#` comments are ignored.
    pub fn from_kv(text: &str) -> Result<Self, CliError> {
        let mut cfg = ConfigArgs::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| CliError::Parse {
                line,
                msg: format!("expected key=value, got '{content}'"),
            })?;
            let (key, value) = (key.trim().replace('-', "_"), value.trim());
            match key.as_str() {
                "data" => cfg.data = Some(PathBuf::from(value)),
                "gen" => cfg.gen = field(line, &key, value)?,
                "n" => cfg.n = field(line, &key, value)?,
                "d" => cfg.d = field(line, &key, value)?,
                "k" => cfg.k = field(line, &key, value)?,
                "kernel" => cfg.kernel = field(line, &key, value)?,
                "gamma" => cfg.gamma = field(line, &key, value)?,
                "c" => cfg.c = field(line, &key, value)?,
                "degree" => cfg.degree = field(line, &key, value)?,
                "algo" => cfg.algo = field(line, &key, value)?,
                "ranks" => cfg.ranks = field(line, &key, value)?,
                "iters" => cfg.iters = field(line, &key, value)?,
                "seed" => cfg.seed = field(line, &key, value)?,
                "block" => cfg.block = field(line, &key, value)?,
                "precision" => cfg.precision = field(line, &key, value)?,
                "out" => cfg.out = Some(PathBuf::from(value)),
                "converge" => cfg.converge = field(line, &key, value)?,
                "schedule" => cfg.schedule = field(line, &key, value)?,
                _ => {
                    return Err(CliError::Parse {
                        line,
                        msg: format!("unknown key '{key}'"),
                    })
                }
            }
        }
        Ok(cfg)
    }

    /// `self` wins wherever it has a value.
    pub fn over(self, base: ConfigArgs) -> ConfigArgs {
        ConfigArgs {
            config: self.config.or(base.config),
            data: self.data.or(base.data),
            gen: self.gen.or(base.gen),
            n: self.n.or(base.n),
            d: self.d.or(base.d),
            k: self.k.or(base.k),
            kernel: self.kernel.or(base.kernel),
            gamma: self.gamma.or(base.gamma),
            c: self.c.or(base.c),
            degree: self.degree.or(base.degree),
            algo: self.algo.or(base.algo),
            ranks: self.ranks.or(base.ranks),
            iters: self.iters.or(base.iters),
            seed: self.seed.or(base.seed),
            block: self.block.or(base.block),
            precision: self.precision.or(base.precision),
            out: self.out.or(base.out),
            converge: self.converge.or(base.converge),
            schedule: self.schedule.or(base.schedule),
        }
    }
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub gen: SynthKind,
    /// Point count (synthetic) or point cap (file).
    pub n: Option<usize>,
    /// Dimension (synthetic) or feature cap (file).
    pub d: Option<usize>,
    pub k: usize,
    pub kernel: KernelSpec,
    pub algo: AlgoChoice,
    pub ranks: usize,
    pub iters: usize,
    pub seed: u64,
    pub block: Option<usize>,
    pub precision: Precision,
    pub out: PathBuf,
    pub converge: bool,
    pub schedule: Schedule,
}

pub const DEFAULT_N: usize = 256;
pub const DEFAULT_D: usize = 8;
pub const DEFAULT_K: usize = 4;
pub const DEFAULT_ITERS: usize = 20;
pub const DEFAULT_OUT: &str = "kkm-out";

impl RunConfig {
    /// Layers defaults, the `--config` file (if any) and the flags.
    pub fn resolve(cli: &ConfigArgs) -> Result<Self, CliError> {
        let file = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                ConfigArgs::from_kv(&text)?
            }
            None => ConfigArgs::default(),
        };
        Self::from_args(cli.clone().over(file))
    }

    pub fn from_args(a: ConfigArgs) -> Result<Self, CliError> {
        let kernel = match a.kernel.unwrap_or_default() {
            KernelChoice::Linear => KernelSpec::Linear,
            KernelChoice::Polynomial => {
                KernelSpec::polynomial(a.gamma.unwrap_or(1.0), a.c.unwrap_or(1.0), a.degree.unwrap_or(2))
            }
        };
        let cfg = RunConfig {
            data: a.data,
            gen: a.gen.unwrap_or_default(),
            n: a.n,
            d: a.d,
            k: a.k.unwrap_or(DEFAULT_K),
            kernel,
            algo: a.algo.unwrap_or(AlgoChoice::Seq),
            ranks: a.ranks.unwrap_or(1),
            iters: a.iters.unwrap_or(DEFAULT_ITERS),
            seed: a.seed.unwrap_or(0),
            block: a.block,
            precision: a.precision.unwrap_or_default(),
            out: a.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            converge: a.converge.unwrap_or(false),
            schedule: a.schedule.map_or(Schedule::Concurrent, |s| s.0),
        };
        if cfg.k == 0 || cfg.iters == 0 || cfg.ranks == 0 || cfg.block == Some(0) {
            return Err(CliError::Usage("k, iters, ranks and block must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            k: self.k,
            max_iterations: self.iters,
            kernel: self.kernel,
            stop_on_no_change: self.converge,
            window_block: self.block,
        }
    }
}
