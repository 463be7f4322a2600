use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    MassScan,
    Propagator,
    Correlate,
    FermionCheck,
    MollifierCheck,
    ToyStrong,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::MassScan,
        Experiment::Propagator,
        Experiment::Correlate,
        Experiment::FermionCheck,
        Experiment::MollifierCheck,
        Experiment::ToyStrong,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::MassScan => "mass-scan",
            Experiment::Propagator => "propagator",
            Experiment::Correlate => "correlate",
            Experiment::FermionCheck => "fermion-check",
            Experiment::MollifierCheck => "mollifier-check",
            Experiment::ToyStrong => "toy-strong",
        }
    }
}

/// One rung of a correlator refinement ladder: cube half-side and cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderStep {
    pub lambda: f64,
    pub kappa: f64,
}

/// Run configuration. Unset optional fields take per-experiment defaults
/// (see FORMATS.md).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// n in su(n)
    #[serde(default = "default_group")]
    pub group_n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Points per axis of the periodic mollifier grid on [−π, π); h = 2π/grid_points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    /// ε ladder as multiples m of 4h (ε = 4h·m).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_cells: Option<Vec<usize>>,
    /// Fit window in absolute separations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    /// Number of model points for the toy model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default)]
    pub dump: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<LadderStep>>,
}

fn default_group() -> usize {
    2
}

fn field(name: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{name}`: {msg}"))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        RunConfig {
            experiment,
            group_n: default_group(),
            seed: 0,
            mu: 0.0,
            lambda: None,
            kappa: None,
            samples: None,
            grid_points: None,
            epsilon_cells: None,
            fit_window: None,
            points: None,
            coupling: None,
            dump: false,
            out: None,
            ladder: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=6).contains(&self.group_n) {
            return Err(field("group_n", format!("must lie in 2..=6, got {}", self.group_n)));
        }
        if !self.mu.is_finite() {
            return Err(field("mu", "must be finite"));
        }
        if let Some(l) = self.lambda {
            for v in l {
                positive("lambda", v)?;
            }
        }
        if let Some(k) = self.kappa {
            positive("kappa", k)?;
        }
        if self.samples == Some(0) {
            return Err(field("samples", "must be ≥ 1"));
        }
        if let Some(n) = self.grid_points {
            if n < 16 {
                return Err(field("grid_points", format!("must be ≥ 16, got {n}")));
            }
        }
        if let Some(cells) = &self.epsilon_cells {
            if cells.is_empty() || cells.contains(&0) {
                return Err(field("epsilon_cells", "must be a nonempty list of positive integers"));
            }
        }
        if let Some([a, b]) = self.fit_window {
            positive("fit_window", a)?;
            if !(b > a) {
                return Err(field("fit_window", format!("needs lo < hi, got [{a}, {b}]")));
            }
        }
        if let Some(p) = self.points {
            if !(1..=2).contains(&p) {
                return Err(field("points", format!("must be 1 or 2, got {p}")));
            }
        }
        if let Some(c) = self.coupling {
            positive("coupling", c)?;
        }
        if let Some(ladder) = &self.ladder {
            if ladder.is_empty() {
                return Err(field("ladder", "must not be empty"));
            }
            for s in ladder {
                positive("ladder.lambda", s.lambda)?;
                positive("ladder.kappa", s.kappa)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_unknown_keys_with_message() {
        let err = RunConfig::from_toml("experiment = \"mass-scan\"\nkapa = 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("kapa")), "{err}");
        let err = RunConfig::from_toml("experiment = \"mass-scan\"\nkappa = -1.0\n").unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("`kappa`")), "{err}");
        assert!(RunConfig::from_toml("experiment = \"nope\"\n").is_err());
    }

    #[test]
    fn ladder_tables_parse() {
        let cfg = RunConfig::from_toml(
            "experiment = \"correlate\"\nmu = 1.0\n[[ladder]]\nlambda = 6.28\nkappa = 2.3\n[[ladder]]\nlambda = 9.42\nkappa = 1.8\n",
        )
        .unwrap();
        assert_eq!(cfg.ladder.as_ref().unwrap().len(), 2);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            0usize..6,
            2usize..5,
            any::<u64>(),
            -10.0f64..10.0,
            proptest::option::of(proptest::array::uniform4(0.1f64..50.0)),
            proptest::option::of(0.1f64..5.0),
            proptest::option::of(1usize..1000),
            proptest::option::of(proptest::collection::vec(1usize..64, 1..5)),
            proptest::option::of(proptest::collection::vec((0.1f64..50.0, 0.1f64..5.0), 1..4)),
            any::<bool>(),
        )
            .prop_map(|(e, n, seed, mu, lambda, kappa, samples, cells, ladder, dump)| RunConfig {
                experiment: Experiment::ALL[e],
                group_n: n,
                seed,
                mu,
                lambda,
                kappa,
                samples,
                grid_points: samples.map(|s| s + 16),
                epsilon_cells: cells,
                fit_window: kappa.map(|k| [k, 2.0 * k]),
                points: dump.then_some(1),
                coupling: kappa,
                dump,
                out: dump.then(|| PathBuf::from("runs/x")),
                ladder: ladder.map(|v| v.into_iter().map(|(lambda, kappa)| LadderStep { lambda, kappa }).collect()),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn toml_round_trip(cfg in arb_config()) {
            let text = cfg.to_toml().unwrap();
            let back = RunConfig::from_toml(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
