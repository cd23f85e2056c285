//! JSON game configuration files.
//!
//! ```json
//! {
//!   "states": [{"value": 0, "prior": 0.5}, {"value": 1, "prior": 0.5}],
//!   "outcomes": [[0.2, 0.2, 0.4, 0.2], [0.1, 0.1, 0.5, 0.3]],
//!   "mass": "triangular"
//! }
//! ```
//!
//! `mass` is one of `{"finite": {"N": .., "pmf": [..]}}`,
//! `{"density": {"support": [a, 1], "pieces": [{"interval": [lo, hi], "coeffs": [..]}]}}`,
//! `{"triangle": {"center": .., "width": ..}}`, or the named shapes
//! `"triangular"` and `"double_peaked"`.

use std::path::{Path, PathBuf};

use disclosure_core::{
    validate_game, FiniteMassDist, Game, MassModel, OutcomeModel, Piece, PiecewiseDensity, RawGame, StateSpace,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: disclosure_core::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateEntry {
    pub value: f64,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceEntry {
    pub interval: [f64; 2],
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassEntry {
    Finite {
        #[serde(rename = "N")]
        n_max: usize,
        pmf: Vec<f64>,
    },
    Density {
        support: [f64; 2],
        pieces: Vec<PieceEntry>,
    },
    Triangle {
        center: f64,
        width: f64,
    },
    Triangular,
    DoublePeaked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub states: Vec<StateEntry>,
    pub outcomes: Vec<Vec<f64>>,
    pub mass: MassEntry,
}

fn density_error(message: &str) -> disclosure_core::Error {
    disclosure_core::Error::Invalid { field: "mass.density.support".into(), message: message.into() }
}

impl GameConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text, path)
    }

    fn mass_model(&self) -> disclosure_core::Result<MassModel> {
        Ok(match &self.mass {
            MassEntry::Finite { n_max, pmf } => MassModel::Finite(FiniteMassDist { n_max: *n_max, pmf: pmf.clone() }),
            MassEntry::Density { support, pieces } => {
                let pieces: Vec<Piece> = pieces.iter().map(|p| Piece::new(p.interval[0], p.interval[1], p.coeffs.clone())).collect();
                if support[1] != 1.0 {
                    return Err(density_error("support must end at 1"));
                }
                match (pieces.first(), pieces.last()) {
                    (Some(first), Some(last)) if first.lo == support[0] && last.hi == support[1] => {}
                    (Some(_), Some(_)) => return Err(density_error("pieces must span the declared support")),
                    _ => {}
                }
                MassModel::Density(PiecewiseDensity::new(pieces)?)
            }
            MassEntry::Triangle { center, width } => MassModel::Density(PiecewiseDensity::centered_triangle(*center, *width)?),
            MassEntry::Triangular => MassModel::Density(PiecewiseDensity::triangular()),
            MassEntry::DoublePeaked => MassModel::Density(PiecewiseDensity::double_peaked()),
        })
    }

    /// Validated game; `path` only labels errors.
    pub fn to_game(&self, path: &Path) -> Result<Game, ConfigError> {
        let wrap = |source| ConfigError::Invalid { path: path.into(), source };
        let raw = RawGame {
            states: StateSpace {
                values: self.states.iter().map(|s| s.value).collect(),
                prior: self.states.iter().map(|s| s.prior).collect(),
            },
            outcomes: OutcomeModel { dist: self.outcomes.clone() },
            mass: self.mass_model().map_err(wrap)?,
        };
        validate_game(raw).map_err(wrap)
    }
}

/// Reads and validates a config file.
pub fn load_game(path: &Path) -> Result<Game, ConfigError> {
    GameConfig::load(path)?.to_game(path)
}
