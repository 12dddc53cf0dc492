//! Run settings resolved from built-in profiles, a TOML file and flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use qafd::diffusion::{DiffusionConfig, Selection, SinkMode};
use qafd::embeddings::SimilarityKind;
use qafd::retrieval::{RetrievalConfig, ScoreAggregation};
use qafd::weighting::{Combine, ProductBandwidths, SchemeKind, WeightScheme};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const OUTPUT_DIR_ENV: &str = "QAFD_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "qafd-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Qa,
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Mean,
    Product,
    Hybrid,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SimName {
    Cosine,
    Dot,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SinkName {
    Degree,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SelectionName {
    Random,
    Fifo,
}

/// Keys accepted in a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub profile: Option<Profile>,
    pub output_dir: Option<PathBuf>,
    pub nodes_path: Option<PathBuf>,
    pub edges_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
    pub scheme: Option<SchemeName>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub combine: Option<Combine>,
    pub sim: Option<SimName>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub gamma3: Option<f64>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iterations: Option<u64>,
    pub check_cadence: Option<u64>,
    pub sink: Option<SinkName>,
    pub sink_capacity: Option<f64>,
    pub selection: Option<SelectionName>,
    pub support_threshold: Option<f64>,
    pub num_seeds: Option<usize>,
    pub seed_sim: Option<SimName>,
    pub seed_gamma: Option<f64>,
    pub aggregation: Option<ScoreAggregation>,
    pub top_k: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<FileConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// PRNG seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeName>,
    #[arg(long, value_enum)]
    pub sim: Option<SimName>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<u64>,
    #[arg(long, value_enum)]
    pub selection: Option<SelectionName>,
    #[arg(long)]
    pub num_seeds: Option<usize>,
}

/// Fully resolved settings; written into every run report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    /// Whether `seed` came from a flag or the config file.
    #[serde(skip)]
    pub seed_is_explicit: bool,
    pub profile: Profile,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub nodes_path: Option<PathBuf>,
    pub edges_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
    pub scheme: SchemeName,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub combine: Combine,
    pub sim: SimName,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub max_iterations: u64,
    pub check_cadence: u64,
    pub sink: SinkName,
    pub sink_capacity: f64,
    pub selection: SelectionName,
    pub support_threshold: f64,
    pub num_seeds: usize,
    pub seed_sim: SimName,
    pub seed_gamma: f64,
    pub aggregation: ScoreAggregation,
    pub top_k: Option<usize>,
}

impl Settings {
    pub fn profile_defaults(profile: Profile) -> Settings {
        let d = match profile {
            Profile::Qa => DiffusionConfig::qa(),
            Profile::Path => DiffusionConfig::path(),
        };
        Settings {
            seed: 0,
            seed_is_explicit: false,
            profile,
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            nodes_path: None,
            edges_path: None,
            embeddings_path: None,
            scheme: SchemeName::Hybrid,
            a: 1.0,
            b: 0.25,
            c: 1.0,
            combine: Combine::Add,
            sim: SimName::Cosine,
            gamma1: 0.5,
            gamma2: 0.5,
            gamma3: 0.5,
            alpha: d.alpha,
            epsilon: d.epsilon,
            max_iterations: d.max_iterations,
            check_cadence: d.check_cadence,
            sink: SinkName::Degree,
            sink_capacity: 1.0,
            selection: SelectionName::Random,
            support_threshold: d.support_threshold,
            num_seeds: 40,
            seed_sim: SimName::Cosine,
            seed_gamma: 0.5,
            aggregation: ScoreAggregation::Max,
            top_k: None,
        }
    }

    /// Flag > config file > profile > built-in default. The output directory
    /// is taken from the flag, then `QAFD_OUTPUT_DIR`, then the file.
    pub fn resolve(flags: &CommonArgs, file: &FileConfig, env_output_dir: Option<PathBuf>) -> Settings {
        let profile = flags.profile.or(file.profile).unwrap_or(Profile::Qa);
        let mut s = Settings::profile_defaults(profile);
        macro_rules! layer {
            ($($field:ident),*) => {$(
                if let Some(v) = file.$field.clone() { s.$field = v; }
            )*};
        }
        layer!(
            seed, output_dir, scheme, a, b, c, combine, sim, gamma1, gamma2, gamma3, alpha, epsilon,
            max_iterations, check_cadence, sink, sink_capacity, selection, support_threshold,
            num_seeds, seed_sim, seed_gamma, aggregation
        );
        s.nodes_path = file.nodes_path.clone();
        s.edges_path = file.edges_path.clone();
        s.embeddings_path = file.embeddings_path.clone();
        s.top_k = file.top_k;
        macro_rules! flag {
            ($($field:ident),*) => {$(
                if let Some(v) = flags.$field.clone() { s.$field = v; }
            )*};
        }
        s.seed_is_explicit = flags.seed.is_some() || file.seed.is_some();
        flag!(seed, scheme, sim, alpha, epsilon, max_iterations, selection, num_seeds);
        if let Some(dir) = flags.output_dir.clone().or(env_output_dir) {
            s.output_dir = dir;
        }
        s
    }

    /// Reads `--config` (if any) and the environment, then resolves.
    pub fn from_args(flags: &CommonArgs) -> CliResult<Settings> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let env = std::env::var_os(OUTPUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from);
        let s = Settings::resolve(flags, &file, env);
        s.weight_scheme().validate()?;
        s.diffusion().validate()?;
        s.seed_similarity().validate()?;
        if s.num_seeds == 0 {
            return Err(CliError::Config("num_seeds must be at least 1".into()));
        }
        Ok(s)
    }

    fn kind(name: SimName, gamma: f64) -> SimilarityKind {
        match name {
            SimName::Cosine => SimilarityKind::Cosine,
            SimName::Dot => SimilarityKind::Dot,
            SimName::Rbf => SimilarityKind::Rbf { gamma },
        }
    }

    pub fn weight_scheme(&self) -> WeightScheme {
        let kind = match self.scheme {
            SchemeName::Mean => SchemeKind::Mean,
            SchemeName::Product => SchemeKind::Product,
            SchemeName::Hybrid => SchemeKind::Hybrid { a: self.a, b: self.b },
            SchemeName::Generic => SchemeKind::Generic {
                a: self.a,
                b: self.b,
                c: self.c,
                combine: self.combine,
            },
        };
        if self.scheme == SchemeName::Product && self.sim == SimName::Rbf {
            return WeightScheme::rbf_product(ProductBandwidths {
                node_node: self.gamma1,
                first_query: self.gamma2,
                second_query: self.gamma3,
            });
        }
        WeightScheme {
            node_node: Self::kind(self.sim, self.gamma1),
            node_query: Self::kind(self.sim, self.gamma2),
            ..WeightScheme::new(kind, SimilarityKind::Cosine)
        }
    }

    pub fn diffusion(&self) -> DiffusionConfig {
        DiffusionConfig {
            alpha: self.alpha,
            sink: match self.sink {
                SinkName::Degree => SinkMode::Degree,
                SinkName::Uniform => SinkMode::Uniform(self.sink_capacity),
            },
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            check_cadence: self.check_cadence,
            selection: match self.selection {
                SelectionName::Random => Selection::UniformRandom { seed: self.seed },
                SelectionName::Fifo => Selection::Fifo,
            },
            support_threshold: self.support_threshold,
            ..DiffusionConfig::qa()
        }
    }

    pub fn seed_similarity(&self) -> SimilarityKind {
        Self::kind(self.seed_sim, self.seed_gamma)
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            num_seeds: self.num_seeds,
            seed_similarity: self.seed_similarity(),
            diffusion: self.diffusion(),
            aggregation: self.aggregation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_layers() {
        let file: FileConfig = toml::from_str(
            "profile = \"path\"\nalpha = 7.0\nnum_seeds = 5\nscheme = \"mean\"\noutput_dir = \"from-file\"",
        )
        .unwrap();
        let flags = CommonArgs {
            alpha: Some(3.0),
            ..CommonArgs::default()
        };
        let s = Settings::resolve(&flags, &file, None);
        assert_eq!(s.alpha, 3.0);
        assert_eq!(s.num_seeds, 5);
        assert_eq!(s.scheme, SchemeName::Mean);
        assert_eq!(s.epsilon, 0.05);
        assert_eq!(s.profile, Profile::Path);
        assert_eq!(s.output_dir, PathBuf::from("from-file"));

        let s = Settings::resolve(&flags, &file, Some("from-env".into()));
        assert_eq!(s.output_dir, PathBuf::from("from-env"));
        let flags = CommonArgs {
            output_dir: Some("from-flag".into()),
            ..flags
        };
        let s = Settings::resolve(&flags, &file, Some("from-env".into()));
        assert_eq!(s.output_dir, PathBuf::from("from-flag"));
    }

    #[test]
    fn profiles() {
        let qa = Settings::profile_defaults(Profile::Qa);
        let path = Settings::profile_defaults(Profile::Path);
        assert_eq!((qa.alpha, qa.num_seeds), (50.0, 40));
        assert_eq!((path.alpha, path.epsilon), (10.0, 0.05));
        assert_eq!(qa.weight_scheme(), WeightScheme::hybrid_default());
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(toml::from_str::<FileConfig>("alhpa = 1.0").is_err());
    }

    #[test]
    fn rbf_product_keys() {
        let s = Settings {
            scheme: SchemeName::Product,
            sim: SimName::Rbf,
            gamma1: 0.1,
            gamma2: 0.2,
            gamma3: 0.3,
            ..Settings::profile_defaults(Profile::Qa)
        };
        assert_eq!(
            s.weight_scheme().product_bandwidths,
            Some(ProductBandwidths {
                node_node: 0.1,
                first_query: 0.2,
                second_query: 0.3
            })
        );
    }
}
