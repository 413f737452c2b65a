//! Scalar codebooks over `[-1, 1]`.
//!
//! A [`Quantizer`] is immutable once built. The LM kinds map a value to the
//! level of its cell using half-open cells `t_{i-1} < z <= t_i` (the first cell
//! also contains `-1`). A StocQ grid stores its grid points as both borders and
//! levels. The identity kind stands in for full precision so that moment code
//! can treat every estimator uniformly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Tolerance used when checking codebook symmetry on load.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuantizerKind {
    #[serde(rename = "LM_RFF")]
    LmRff,
    #[serde(rename = "LM2_RFF")]
    Lm2Rff,
    StocqGrid,
    Identity,
}

impl QuantizerKind {
    pub fn is_lm(self) -> bool {
        matches!(self, QuantizerKind::LmRff | QuantizerKind::Lm2Rff)
    }
}

impl std::fmt::Display for QuantizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QuantizerKind::LmRff => "LM_RFF",
            QuantizerKind::Lm2Rff => "LM2_RFF",
            QuantizerKind::StocqGrid => "STOCQ_GRID",
            QuantizerKind::Identity => "IDENTITY",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawQuantizer {
    kind: QuantizerKind,
    bits: u32,
    borders: Vec<f64>,
    levels: Vec<f64>,
}

/// A deterministic reconstruction cell `(lo, hi]` with its output level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantizer", into = "RawQuantizer")]
pub struct Quantizer {
    kind: QuantizerKind,
    bits: u32,
    borders: Vec<f64>,
    levels: Vec<f64>,
}

impl TryFrom<RawQuantizer> for Quantizer {
    type Error = Error;

    fn try_from(raw: RawQuantizer) -> Result<Self> {
        Quantizer::from_parts(raw.kind, raw.bits, raw.borders, raw.levels)
    }
}

impl From<Quantizer> for RawQuantizer {
    fn from(q: Quantizer) -> Self {
        RawQuantizer { kind: q.kind, bits: q.bits, borders: q.borders, levels: q.levels }
    }
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite()) && xs.windows(2).all(|w| w[0] < w[1])
}

fn closed_under_negation(xs: &[f64]) -> bool {
    xs.iter().zip(xs.iter().rev()).all(|(a, b)| (a + b).abs() <= SYMMETRY_TOL)
}

impl Quantizer {
    /// Validate and assemble a codebook.
    pub fn from_parts(kind: QuantizerKind, bits: u32, borders: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        match kind {
            QuantizerKind::Identity => {
                if !borders.is_empty() || !levels.is_empty() {
                    return Err(Error::Input("identity quantizer carries no codebook".into()));
                }
                return Ok(Quantizer { kind, bits: 64, borders, levels });
            }
            _ if !(1..=8).contains(&bits) => {
                return Err(Error::Input(format!("bits must lie in 1..=8, got {bits}")));
            }
            _ => {}
        }
        let count = 1usize << bits;
        if !strictly_increasing(&borders) || !strictly_increasing(&levels) {
            return Err(Error::Input("borders and levels must be finite and strictly increasing".into()));
        }
        if borders.first() != Some(&-1.0) || borders.last() != Some(&1.0) {
            return Err(Error::Input("borders must start at -1 and end at 1".into()));
        }
        match kind {
            QuantizerKind::StocqGrid => {
                if borders.len() != count || levels != borders {
                    return Err(Error::Input(format!(
                        "a {bits}-bit grid needs {count} points shared by borders and levels"
                    )));
                }
            }
            _ => {
                if borders.len() != count + 1 || levels.len() != count {
                    return Err(Error::Input(format!(
                        "a {bits}-bit LM codebook needs {} borders and {count} levels",
                        count + 1
                    )));
                }
                let interleaved = levels.iter().enumerate().all(|(i, &mu)| borders[i] < mu && mu < borders[i + 1]);
                if !interleaved {
                    return Err(Error::Input("levels must interleave borders".into()));
                }
                if !closed_under_negation(&borders) || !closed_under_negation(&levels) {
                    return Err(Error::Input("LM codebooks must be symmetric about 0".into()));
                }
            }
        }
        Ok(Quantizer { kind, bits, borders, levels })
    }

    /// Full precision: `Q(z) = z`.
    pub fn identity() -> Self {
        Quantizer { kind: QuantizerKind::Identity, bits: 64, borders: Vec::new(), levels: Vec::new() }
    }

    /// Uniform StocQ grid `t_i = -1 + 2i/(2^b - 1)`.
    pub fn stocq_uniform(bits: u32) -> Result<Self> {
        if !(1..=8).contains(&bits) {
            return Err(Error::Input(format!("bits must lie in 1..=8, got {bits}")));
        }
        let top = ((1u32 << bits) - 1) as f64;
        let grid: Vec<f64> = (0..1u32 << bits).map(|i| (2.0 * i as f64 - top) / top).collect();
        Self::stocq_grid(grid)
    }

    /// StocQ over an arbitrary sorted grid spanning `[-1, 1]` with a power-of-two size.
    pub fn stocq_grid(grid: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Input(format!("grid size must be a power of two >= 2, got {n}")));
        }
        let bits = n.trailing_zeros();
        Self::from_parts(QuantizerKind::StocqGrid, bits, grid.clone(), grid)
    }

    pub fn kind(&self) -> QuantizerKind {
        self.kind
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn borders(&self) -> &[f64] {
        &self.borders
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Number of distinct codes (0 for the identity).
    pub fn num_codes(&self) -> usize {
        self.levels.len()
    }

    /// Output value for a code.
    pub fn level(&self, code: u32) -> Result<f64> {
        self.levels
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::CorruptSketch(format!("code {code} out of range for {} levels", self.levels.len())))
    }

    /// Index of the LM cell containing `z`, lower cell on ties. `z` must be in `[-1, 1]`.
    pub fn lm_cell(&self, z: f64) -> usize {
        let interior = &self.borders[1..self.borders.len() - 1];
        interior.partition_point(|&t| t < z)
    }

    /// Left grid index `i` with `t_i <= z <= t_{i+1}` for a StocQ grid.
    pub fn grid_cell(&self, z: f64) -> usize {
        let n = self.borders.len();
        self.borders[1..n - 1].partition_point(|&t| t <= z).min(n - 2)
    }

    /// Deterministic reconstruction `Q(z)`; a grid rounds to the nearest point.
    pub fn apply(&self, z: f64) -> f64 {
        match self.kind {
            QuantizerKind::Identity => z,
            QuantizerKind::StocqGrid => {
                let i = self.grid_cell(z);
                let (a, b) = (self.borders[i], self.borders[i + 1]);
                if z - a <= b - z { a } else { b }
            }
            _ => self.levels[self.lm_cell(z)],
        }
    }

    /// Cells of the deterministic map `z -> Q(z)`. Grid quantizers use midpoint
    /// cells (nearest-point rounding). Empty for the identity.
    pub fn cells(&self) -> Vec<Cell> {
        match self.kind {
            QuantizerKind::Identity => Vec::new(),
            QuantizerKind::StocqGrid => {
                let g = &self.borders;
                (0..g.len())
                    .map(|i| Cell {
                        lo: if i == 0 { -1.0 } else { 0.5 * (g[i - 1] + g[i]) },
                        hi: if i + 1 == g.len() { 1.0 } else { 0.5 * (g[i] + g[i + 1]) },
                        level: g[i],
                    })
                    .collect()
            }
            _ => self
                .levels
                .iter()
                .enumerate()
                .map(|(i, &level)| Cell { lo: self.borders[i], hi: self.borders[i + 1], level })
                .collect(),
        }
    }

    /// Canonical JSON rendering. Floats use the shortest representation that
    /// round-trips, so `from_json(to_json(q)) == q` bit for bit.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("quantizer serialization is infallible")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("quantizer serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// First 8 bytes of the SHA-256 of the canonical JSON.
    pub fn id(&self) -> [u8; 8] {
        let digest = Sha256::digest(self.to_json().as_bytes());
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        out
    }

    pub fn id_hex(&self) -> String {
        self.id().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Positive halves of borders and levels for a symmetric LM codebook.
    pub fn positive_half(&self) -> (&[f64], &[f64]) {
        let nb = self.borders.len();
        let nl = self.levels.len();
        (&self.borders[nb / 2..], &self.levels[nl / 2..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_bit() -> Quantizer {
        Quantizer::from_parts(QuantizerKind::LmRff, 1, vec![-1.0, 0.0, 1.0], vec![-0.6, 0.6]).unwrap()
    }

    #[test]
    fn ties_go_to_the_lower_cell() {
        let q = one_bit();
        assert_eq!(q.lm_cell(0.0), 0);
        assert_eq!(q.lm_cell(1e-300), 1);
        assert_eq!(q.lm_cell(-1.0), 0);
        assert_eq!(q.lm_cell(1.0), 1);
    }

    #[test]
    fn uniform_grid_layout() {
        let q = Quantizer::stocq_uniform(2).unwrap();
        let expect = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
        for (a, b) in q.levels().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(q.grid_cell(-1.0), 0);
        assert_eq!(q.grid_cell(1.0), 2);
        assert_eq!(q.grid_cell(q.levels()[1]), 1);
        assert_eq!(q.apply(0.1), 1.0 / 3.0);
    }

    #[test]
    fn rejects_bad_codebooks() {
        let bad = [
            (QuantizerKind::LmRff, 1, vec![-1.0, 0.0, 1.0], vec![0.6, -0.6]),
            (QuantizerKind::LmRff, 1, vec![-1.0, 0.1, 1.0], vec![-0.6, 0.6]),
            (QuantizerKind::LmRff, 1, vec![-1.0, 0.0, 1.0], vec![-0.6, 0.5]),
            (QuantizerKind::LmRff, 2, vec![-1.0, 0.0, 1.0], vec![-0.6, 0.6]),
            (QuantizerKind::LmRff, 0, vec![-1.0, 1.0], vec![0.0]),
            (QuantizerKind::StocqGrid, 1, vec![-1.0, 1.0], vec![-1.0, 0.9]),
        ];
        for (kind, bits, b, l) in bad {
            assert!(Quantizer::from_parts(kind, bits, b, l).is_err());
        }
    }

    #[test]
    fn json_round_trip_and_id() {
        let q = one_bit();
        let text = q.to_json();
        assert!(text.contains("\"kind\":\"LM_RFF\""));
        let back = Quantizer::from_json(&text).unwrap();
        assert_eq!(back, q);
        assert_eq!(back.id(), q.id());
        assert_ne!(Quantizer::stocq_uniform(1).unwrap().id(), q.id());
        let g = Quantizer::stocq_uniform(3).unwrap();
        assert!(g.to_json().contains("STOCQ_GRID"));
        assert_eq!(Quantizer::from_json(&g.to_json()).unwrap(), g);
        assert_eq!(Quantizer::from_json(&Quantizer::identity().to_json()).unwrap(), Quantizer::identity());
    }

    #[test]
    fn midpoint_cells_for_grids() {
        let cells = Quantizer::stocq_uniform(1).unwrap().cells();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0], Cell { lo: -1.0, hi: 0.0, level: -1.0 });
        assert_eq!(cells[1], Cell { lo: 0.0, hi: 1.0, level: 1.0 });
    }
}
