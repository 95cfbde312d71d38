//! Vietoris-Rips persistence in dimensions 0 and 1 and the bottleneck
//! distance between persistence diagrams.
//!
//! Filtration values follow the diameter convention: an edge enters at the
//! distance between its endpoints, a triangle at its longest edge.
//! Coefficients are in Z/2 and zero-persistence pairs are dropped.

mod bottleneck;
mod matching;
mod rips;
mod union_find;

pub use bottleneck::{bottleneck_distance, normalized_bottleneck};
pub use matching::{hopcroft_karp, Matching};
pub use rips::{rips_persistence, rips_persistence_from_distances, simplex_count};
pub use union_find::UnionFind;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of simplices in the filtered complex.
pub const DEFAULT_SIMPLEX_BUDGET: u64 = 5_000_000;

/// Largest cloud for which an unset `max_radius` means the full filtration.
pub const FULL_FILTRATION_MAX_POINTS: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum TdaError {
    #[error("complex has {count} simplices, budget is {budget}")]
    BudgetExceeded { count: u64, budget: u64 },
    #[error("max_radius must be set explicitly for clouds above {limit} points (got {n})")]
    RadiusRequired { n: usize, limit: usize },
    #[error("invalid filtration parameters: {0}")]
    InvalidParams(String),
    #[error("diagram dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("diagrams have {0} and {1} infinite bars")]
    EssentialMismatch(usize, usize),
    #[error("normalising noise must be positive, got {0}")]
    NonPositiveNoise(f64),
}

/// A (birth, death) pair; `death` is `f64::INFINITY` for essential classes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PersistencePair {
    pub birth: f64,
    pub death: f64,
}

impl PersistencePair {
    pub fn new(birth: f64, death: f64) -> Self {
        debug_assert!(birth <= death);
        Self { birth, death }
    }

    pub fn is_essential(&self) -> bool {
        self.death.is_infinite()
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PersistenceDiagram {
    pub dimension: usize,
    pub pairs: Vec<PersistencePair>,
}

impl PersistenceDiagram {
    pub fn new(dimension: usize, mut pairs: Vec<PersistencePair>) -> Self {
        pairs.sort_by(|a, b| a.birth.total_cmp(&b.birth).then(a.death.total_cmp(&b.death)));
        Self { dimension, pairs }
    }

    pub fn empty(dimension: usize) -> Self {
        Self {
            dimension,
            pairs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn essential_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_essential()).count()
    }

    pub fn finite(&self) -> impl Iterator<Item = &PersistencePair> {
        self.pairs.iter().filter(|p| !p.is_essential())
    }
}

/// Serialises a list of diagrams as a flat JSON array of
/// `{"dim": .., "birth": .., "death": ..}` with `"inf"` for infinite deaths.
pub fn diagrams_to_json(diagrams: &[PersistenceDiagram]) -> serde_json::Value {
    let rows: Vec<FlatPair> = diagrams
        .iter()
        .flat_map(|d| {
            d.pairs.iter().map(move |p| FlatPair {
                dim: d.dimension,
                birth: p.birth,
                death: p.death,
            })
        })
        .collect();
    serde_json::to_value(rows).expect("diagram rows always serialise")
}

/// Inverse of [`diagrams_to_json`]; returns one diagram per dimension in
/// `0..=max_dim` where `max_dim` is the largest dimension present.
pub fn diagrams_from_json(value: &serde_json::Value) -> Result<Vec<PersistenceDiagram>, serde_json::Error> {
    let rows: Vec<FlatPair> = serde_json::from_value(value.clone())?;
    let max_dim = rows.iter().map(|r| r.dim).max().unwrap_or(0);
    let mut grouped = vec![Vec::new(); max_dim + 1];
    for r in rows {
        grouped[r.dim].push(PersistencePair::new(r.birth, r.death));
    }
    Ok(grouped
        .into_iter()
        .enumerate()
        .map(|(dim, pairs)| PersistenceDiagram::new(dim, pairs))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct FlatPair {
    dim: usize,
    birth: f64,
    #[serde(serialize_with = "ser_death", deserialize_with = "de_death")]
    death: f64,
}

fn ser_death<S: Serializer>(d: &f64, s: S) -> Result<S::Ok, S::Error> {
    if d.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*d)
    }
}

fn de_death<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Death {
        Num(f64),
        Str(String),
    }
    match Death::deserialize(d)? {
        Death::Num(v) => Ok(v),
        Death::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Death::Str(s) => Err(de::Error::custom(format!("invalid death `{s}`"))),
    }
}

/// Parameters of the Rips filtration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationParams {
    /// Highest homology dimension computed (0 or 1).
    pub max_dimension: usize,
    /// Filtration cutoff. `None` means the full filtration, which is only
    /// accepted for clouds of at most [`FULL_FILTRATION_MAX_POINTS`] points.
    #[serde(default)]
    pub max_radius: Option<f64>,
    #[serde(default = "default_budget")]
    pub simplex_budget: u64,
}

fn default_budget() -> u64 {
    DEFAULT_SIMPLEX_BUDGET
}

impl Default for FiltrationParams {
    fn default() -> Self {
        Self {
            max_dimension: 1,
            max_radius: None,
            simplex_budget: DEFAULT_SIMPLEX_BUDGET,
        }
    }
}

impl FiltrationParams {
    pub fn with_max_dimension(mut self, dim: usize) -> Self {
        self.max_dimension = dim;
        self
    }

    pub fn with_max_radius(mut self, radius: f64) -> Self {
        self.max_radius = Some(radius);
        self
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.simplex_budget = budget;
        self
    }

    /// Resolves the effective threshold for an `n`-point cloud.
    pub fn threshold(&self, n: usize) -> Result<f64, TdaError> {
        if self.max_dimension > 1 {
            return Err(TdaError::InvalidParams(format!(
                "max_dimension must be 0 or 1, got {}",
                self.max_dimension
            )));
        }
        match self.max_radius {
            Some(r) if r > 0.0 => Ok(r),
            Some(r) => Err(TdaError::InvalidParams(format!("max_radius must be positive, got {r}"))),
            None if n <= FULL_FILTRATION_MAX_POINTS => Ok(f64::INFINITY),
            None => Err(TdaError::RadiusRequired {
                n,
                limit: FULL_FILTRATION_MAX_POINTS,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_uses_inf_marker() {
        let d0 = PersistenceDiagram::new(
            0,
            vec![PersistencePair::new(0.0, f64::INFINITY), PersistencePair::new(0.0, 2.0)],
        );
        let d1 = PersistenceDiagram::new(1, vec![PersistencePair::new(1.5, 2.0)]);
        let v = diagrams_to_json(&[d0.clone(), d1.clone()]);
        let text = v.to_string();
        assert_eq!(
            text,
            r#"[{"birth":0.0,"death":2.0,"dim":0},{"birth":0.0,"death":"inf","dim":0},{"birth":1.5,"death":2.0,"dim":1}]"#
        );
        assert_eq!(diagrams_from_json(&v).unwrap(), vec![d0, d1]);
    }

    #[test]
    fn threshold_resolution() {
        let p = FiltrationParams::default();
        assert_eq!(p.threshold(500).unwrap(), f64::INFINITY);
        assert!(matches!(p.threshold(501), Err(TdaError::RadiusRequired { n: 501, .. })));
        assert_eq!(p.with_max_radius(f64::INFINITY).threshold(5000).unwrap(), f64::INFINITY);
        assert!(p.with_max_radius(0.0).threshold(5).is_err());
        assert!(p.with_max_dimension(2).threshold(5).is_err());
    }
}
