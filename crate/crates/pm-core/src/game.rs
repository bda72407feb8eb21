//! Partial monitoring game instances: validation, a catalog of standard
//! small games, and the on-disk JSON format.
//!
//! A game is a pair of `k x d` matrices: losses in `[0, 1]` and feedback
//! symbols. Symbols are stored as dense integer ids `0..n_symbols`, which
//! keeps downstream estimator tables flat; arbitrary ids in input files are
//! remapped (preserving numeric order) when the game is validated.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Validation or lookup failure for a game definition.
#[derive(Debug, Clone, PartialEq)]
pub enum GameError {
    /// Matrix sizes disagree with the declared `k x d` shape.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A loss entry is outside `[0, 1]` (or not finite).
    LossOutOfRange {
        action: usize,
        outcome: usize,
        value: f64,
    },
    /// Fewer than two actions or outcomes.
    EmptyGame { k: usize, d: usize },
    UnknownCatalogName(String),
    /// File could not be read or parsed.
    File(String),
}

impl fmt::Display for GameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected {expected} entries, got {got}"),
            Self::LossOutOfRange {
                action,
                outcome,
                value,
            } => write!(
                f,
                "loss[{action}][{outcome}] = {value} is outside [0, 1]"
            ),
            Self::EmptyGame { k, d } => {
                write!(f, "degenerate shape {k}x{d}: need k >= 2 and d >= 2")
            }
            Self::UnknownCatalogName(name) => write!(f, "unknown catalog game `{name}`"),
            Self::File(msg) => write!(f, "game file error: {msg}"),
        }
    }
}

impl std::error::Error for GameError {}

/// An immutable partial monitoring game instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    name: String,
    k: usize,
    d: usize,
    loss: Vec<f64>,    // row-major k x d
    feedback: Vec<u32>, // row-major k x d, dense symbol ids
    n_symbols: usize,
}

impl Game {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of actions.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of outcomes.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Size of the (dense) symbol alphabet.
    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    #[inline]
    pub fn loss(&self, a: usize, x: usize) -> f64 {
        self.loss[a * self.d + x]
    }

    #[inline]
    pub fn symbol(&self, a: usize, x: usize) -> u32 {
        self.feedback[a * self.d + x]
    }

    pub fn loss_row(&self, a: usize) -> &[f64] {
        &self.loss[a * self.d..(a + 1) * self.d]
    }

    pub fn feedback_row(&self, a: usize) -> &[u32] {
        &self.feedback[a * self.d..(a + 1) * self.d]
    }

    /// Loss column `L e_x` as a vector over actions.
    pub fn loss_column(&self, x: usize) -> Vec<f64> {
        (0..self.k).map(|a| self.loss(a, x)).collect()
    }

    /// `max_a |L_{a,x} - L_{a,y}|`, the corruption charge for replacing
    /// outcome `y` with `x`.
    pub fn outcome_distance(&self, x: usize, y: usize) -> f64 {
        (0..self.k)
            .map(|a| (self.loss(a, x) - self.loss(a, y)).abs())
            .fold(0.0, f64::max)
    }
}

/// Validate raw matrices and construct a [`Game`].
///
/// Both matrices are row-major `k x d`. Loss entries outside `[0, 1]` are a
/// hard error. Feedback ids are remapped onto `0..n` preserving their
/// numeric order, so files with sparse ids always load.
pub fn validate_game(
    name: &str,
    k: usize,
    d: usize,
    loss: &[f64],
    feedback: &[u32],
) -> Result<Game, GameError> {
    if k < 2 || d < 2 {
        return Err(GameError::EmptyGame { k, d });
    }
    if loss.len() != k * d {
        return Err(GameError::DimensionMismatch {
            what: "loss matrix",
            expected: k * d,
            got: loss.len(),
        });
    }
    if feedback.len() != k * d {
        return Err(GameError::DimensionMismatch {
            what: "feedback matrix",
            expected: k * d,
            got: feedback.len(),
        });
    }
    for a in 0..k {
        for x in 0..d {
            let v = loss[a * d + x];
            if !(v >= 0.0 && v <= 1.0) {
                return Err(GameError::LossOutOfRange {
                    action: a,
                    outcome: x,
                    value: v,
                });
            }
        }
    }

    let mut ids: Vec<u32> = feedback.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let dense: Vec<u32> = feedback
        .iter()
        .map(|s| ids.binary_search(s).unwrap() as u32)
        .collect();

    Ok(Game {
        name: name.to_string(),
        k,
        d,
        loss: loss.to_vec(),
        feedback: dense,
        n_symbols: ids.len(),
    })
}

/// Distinct-symbol counts per action row and their maximum `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolStats {
    pub per_row: Vec<usize>,
    pub m: usize,
}

pub fn symbol_stats(game: &Game) -> SymbolStats {
    let per_row: Vec<usize> = (0..game.k())
        .map(|a| {
            let mut row: Vec<u32> = game.feedback_row(a).to_vec();
            row.sort_unstable();
            row.dedup();
            row.len()
        })
        .collect();
    let m = per_row.iter().copied().max().unwrap_or(0);
    SymbolStats { per_row, m }
}

/// Names accepted by [`catalog_game`].
pub const CATALOG: [&str; 6] = [
    "bandit2",
    "bandit3",
    "apple_tasting",
    "dynamic_pricing_small",
    "full_info_small",
    "hopeless_small",
];

/// Construct one of the standard small instances by name.
///
/// The bandit games encode the suffered loss as the feedback symbol, so they
/// are locally observable by construction. `dynamic_pricing_small` only
/// reveals a sale/no-sale bit and `hopeless_small` reveals nothing.
pub fn catalog_game(name: &str) -> Result<Game, GameError> {
    match name {
        "bandit2" => validate_game("bandit2", 2, 2, &[0.0, 1.0, 1.0, 0.0], &[0, 1, 1, 0]),
        "bandit3" => validate_game(
            "bandit3",
            3,
            3,
            &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0],
            &[0, 1, 1, 1, 0, 1, 1, 1, 0],
        ),
        // Action 0 sells blind (constant symbol); action 1 inspects and sees
        // the outcome.
        "apple_tasting" => validate_game("apple_tasting", 2, 2, &[0.0, 1.0, 1.0, 0.0], &[0, 0, 0, 1]),
        // Three prices, three buyer values. Loss is forgone revenue on a
        // sale and a unit penalty on a no-sale; feedback is the sale bit.
        "dynamic_pricing_small" => validate_game(
            "dynamic_pricing_small",
            3,
            3,
            &[0.0, 0.5, 1.0, 1.0, 0.0, 0.5, 1.0, 1.0, 0.0],
            &[1, 1, 1, 0, 1, 1, 0, 0, 1],
        ),
        "full_info_small" => validate_game(
            "full_info_small",
            3,
            3,
            &[0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0],
            &[0, 1, 2, 0, 1, 2, 0, 1, 2],
        ),
        "hopeless_small" => validate_game("hopeless_small", 2, 2, &[0.0, 1.0, 1.0, 0.0], &[0, 0, 0, 0]),
        other => Err(GameError::UnknownCatalogName(other.to_string())),
    }
}

/// On-disk JSON schema for a game.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub k: usize,
    pub d: usize,
    /// Row-major `k x d` losses.
    pub loss: Vec<f64>,
    /// Row-major `k x d` symbol ids.
    pub feedback: Vec<u32>,
    pub name: String,
}

impl GameFile {
    pub fn from_game(game: &Game) -> Self {
        GameFile {
            k: game.k,
            d: game.d,
            loss: game.loss.clone(),
            feedback: game.feedback.clone(),
            name: game.name.clone(),
        }
    }

    pub fn into_game(&self) -> Result<Game, GameError> {
        validate_game(&self.name, self.k, self.d, &self.loss, &self.feedback)
    }
}

pub fn load_game_file(path: &Path) -> Result<Game, GameError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GameError::File(format!("{}: {e}", path.display())))?;
    let file: GameFile = serde_json::from_str(&text)
        .map_err(|e| GameError::File(format!("{}: {e}", path.display())))?;
    file.into_game()
}

pub fn save_game_file(game: &Game, path: &Path) -> Result<(), GameError> {
    let text = serde_json::to_string_pretty(&GameFile::from_game(game))
        .map_err(|e| GameError::File(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| GameError::File(format!("{}: {e}", path.display())))
}
