//! Encoding feature values into codebook indices and the packed sketch format.
//!
//! Layout of a packed sketch (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "RFQS"
//!      4     1  version (1)
//!      5     1  bits per code
//!      6     1  flags, bit 0 = row norms present
//!      7     1  reserved (0)
//!      8     4  m, u32
//!     12     8  n, u64
//!     20     8  gamma, binary64
//!     28     8  seed, u64
//!     36     8  quantizer id
//!     44        n rows of ceil(m * bits / 8) bytes, codes packed LSB-first
//!               optional n binary64 row norms
//!               CRC-32 (IEEE) of every preceding byte, u32
//! ```

use rand::Rng;

use crate::quantizer::{Quantizer, QuantizerKind};
use crate::rng::{self, Purpose, Stream};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RFQS";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 44;
const FLAG_NORMS: u8 = 1;

/// Values this far outside `[-1, 1]` are clamped rather than rejected.
pub const CLAMP_SLACK: f64 = 1e-12;

fn clamp_unit(z: f64) -> Result<f64> {
    if !(z.abs() <= 1.0 + CLAMP_SLACK) {
        return Err(Error::Input(format!("feature value {z} outside [-1, 1]")));
    }
    Ok(z.clamp(-1.0, 1.0))
}

/// Deterministic LM encoding: index of the cell `t_{i-1} < z <= t_i`.
pub fn encode_lm(q: &Quantizer, values: &[f64]) -> Result<Vec<u8>> {
    if !q.kind().is_lm() {
        return Err(Error::Input(format!("encode_lm needs an LM codebook, got {}", q.kind())));
    }
    values.iter().map(|&z| Ok(q.lm_cell(clamp_unit(z)?) as u8)).collect()
}

/// Stochastic rounding to the enclosing grid points, unbiased given `z`.
/// Consumes exactly one uniform variate per value, in order.
pub fn encode_stocq(q: &Quantizer, values: &[f64], stream: &mut Stream) -> Result<Vec<u8>> {
    if q.kind() != QuantizerKind::StocqGrid {
        return Err(Error::Input(format!("encode_stocq needs a StocQ grid, got {}", q.kind())));
    }
    let grid = q.levels();
    values
        .iter()
        .map(|&z| {
            let z = clamp_unit(z)?;
            let u: f64 = stream.random();
            let i = q.grid_cell(z);
            let (lo, hi) = (grid[i], grid[i + 1]);
            let p_up = (z - lo) / (hi - lo);
            Ok(if u < p_up { i + 1 } else { i } as u8)
        })
        .collect()
}

/// Encode one feature row with whichever rule the codebook calls for. StocQ
/// rows draw from the `(seed, Stocq, row)` substream.
pub fn encode_row(q: &Quantizer, values: &[f64], seed: u64, row: u64) -> Result<Vec<u8>> {
    match q.kind() {
        QuantizerKind::StocqGrid => encode_stocq(q, values, &mut rng::substream(seed, Purpose::Stocq, row, 0)),
        QuantizerKind::Identity => Err(Error::Input("the identity has no codes".into())),
        _ => encode_lm(q, values),
    }
}

pub fn decode(q: &Quantizer, codes: &[u8]) -> Result<Vec<f64>> {
    codes.iter().map(|&c| q.level(c as u32)).collect()
}

/// Bytes per packed row.
pub fn row_bytes(m: usize, bits: u32) -> usize {
    (m * bits as usize).div_ceil(8)
}

/// Total packed size in bytes.
pub fn packed_len(n: usize, m: usize, bits: u32, with_norms: bool) -> usize {
    HEADER_LEN + n * row_bytes(m, bits) + if with_norms { 8 * n } else { 0 } + 4
}

fn pack_row(codes: &[u8], bits: u32, out: &mut [u8]) {
    out.fill(0);
    let mut bit = 0usize;
    for &c in codes {
        let wide = (c as u16) << (bit % 8);
        out[bit / 8] |= wide as u8;
        if bit % 8 + bits as usize > 8 {
            out[bit / 8 + 1] |= (wide >> 8) as u8;
        }
        bit += bits as usize;
    }
}

fn unpack_code(row: &[u8], bits: u32, j: usize) -> u8 {
    let bit = j * bits as usize;
    let lo = row[bit / 8] as u16;
    let hi = if bit % 8 + bits as usize > 8 { row[bit / 8 + 1] as u16 } else { 0 };
    let word = (lo | hi << 8) >> (bit % 8);
    (word & ((1u16 << bits) - 1)) as u8
}

/// An `n x m` matrix of `bits`-bit codes stored packed, plus the identity of
/// the feature stream and codebook that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    n: usize,
    m: usize,
    bits: u32,
    gamma: f64,
    seed: u64,
    quantizer_id: [u8; 8],
    packed: Vec<u8>,
    row_norms: Option<Vec<f64>>,
}

impl Sketch {
    /// Empty sketch with room for `n` rows; fill it with [`Sketch::set_row`].
    pub fn new(n: usize, m: usize, bits: u32, gamma: f64, seed: u64, quantizer_id: [u8; 8]) -> Result<Self> {
        if !(1..=8).contains(&bits) {
            return Err(Error::Input(format!("bits must lie in 1..=8, got {bits}")));
        }
        if m == 0 || m > u32::MAX as usize {
            return Err(Error::Input(format!("feature count {m} out of range")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Input(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Sketch { n, m, bits, gamma, seed, quantizer_id, packed: vec![0; n * row_bytes(m, bits)], row_norms: None })
    }

    /// Sketch whose metadata is taken from a codebook.
    pub fn for_quantizer(n: usize, m: usize, q: &Quantizer, gamma: f64, seed: u64) -> Result<Self> {
        if q.kind() == QuantizerKind::Identity {
            return Err(Error::Input("cannot sketch with the identity quantizer".into()));
        }
        Self::new(n, m, q.bits(), gamma, seed, q.id())
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn bits(&self) -> u32 {
        self.bits
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn quantizer_id(&self) -> [u8; 8] {
        self.quantizer_id
    }
    pub fn row_norms(&self) -> Option<&[f64]> {
        self.row_norms.as_deref()
    }

    pub fn set_row(&mut self, i: usize, codes: &[u8]) -> Result<()> {
        if codes.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, got: codes.len() });
        }
        if i >= self.n {
            return Err(Error::Input(format!("row {i} out of range for {} rows", self.n)));
        }
        if let Some(&c) = codes.iter().find(|&&c| (c as u32) >> self.bits != 0) {
            return Err(Error::Input(format!("code {c} does not fit in {} bits", self.bits)));
        }
        let stride = row_bytes(self.m, self.bits);
        pack_row(codes, self.bits, &mut self.packed[i * stride..(i + 1) * stride]);
        Ok(())
    }

    /// Attach per-row norms `sqrt(sum_j Q(z_ij)^2)`.
    pub fn set_row_norms(&mut self, norms: Vec<f64>) -> Result<()> {
        if norms.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: norms.len() });
        }
        if norms.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Input("row norms must be finite and nonnegative".into()));
        }
        self.row_norms = Some(norms);
        Ok(())
    }

    /// Recompute and attach row norms from a codebook.
    pub fn compute_row_norms(&mut self, q: &Quantizer) -> Result<()> {
        self.check_codebook(q)?;
        let norms = (0..self.n)
            .map(|i| Ok(decode(q, &self.row(i))?.iter().map(|v| v * v).sum::<f64>().sqrt()))
            .collect::<Result<Vec<_>>>()?;
        if q.kind().is_lm() && norms.iter().any(|&x| x <= 0.0) {
            return Err(Error::Input("LM row norms must be positive".into()));
        }
        self.row_norms = Some(norms);
        Ok(())
    }

    pub fn code(&self, i: usize, j: usize) -> u8 {
        let stride = row_bytes(self.m, self.bits);
        unpack_code(&self.packed[i * stride..(i + 1) * stride], self.bits, j)
    }

    pub fn row(&self, i: usize) -> Vec<u8> {
        let stride = row_bytes(self.m, self.bits);
        let packed = &self.packed[i * stride..(i + 1) * stride];
        (0..self.m).map(|j| unpack_code(packed, self.bits, j)).collect()
    }

    /// Decoded levels of row `i`.
    pub fn decode_row(&self, q: &Quantizer, i: usize) -> Result<Vec<f64>> {
        self.check_codebook(q)?;
        decode(q, &self.row(i))
    }

    pub fn check_codebook(&self, q: &Quantizer) -> Result<()> {
        if q.id() != self.quantizer_id || q.bits() != self.bits {
            return Err(Error::StreamMismatch("sketch was encoded with a different codebook".into()));
        }
        Ok(())
    }

    /// True when two sketches come from the same feature stream and codebook.
    pub fn compatible(&self, other: &Sketch) -> Result<()> {
        if self.m != other.m {
            return Err(Error::StreamMismatch(format!("feature counts differ: {} vs {}", self.m, other.m)));
        }
        if self.seed != other.seed || self.gamma.to_bits() != other.gamma.to_bits() {
            return Err(Error::StreamMismatch("sketches use different (seed, gamma) feature streams".into()));
        }
        if self.quantizer_id != other.quantizer_id || self.bits != other.bits {
            return Err(Error::StreamMismatch("sketches use different codebooks".into()));
        }
        Ok(())
    }

    pub fn pack(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(packed_len(self.n, self.m, self.bits, self.row_norms.is_some()));
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.bits as u8);
        out.push(if self.row_norms.is_some() { FLAG_NORMS } else { 0 });
        out.push(0);
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&self.gamma.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.quantizer_id);
        out.extend_from_slice(&self.packed);
        if let Some(norms) = &self.row_norms {
            for x in norms {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn unpack(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::CorruptSketch(msg.to_string());
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        if bytes.len() < HEADER_LEN + 4 {
            return Err(corrupt("truncated header"));
        }
        if bytes[4] != VERSION {
            return Err(corrupt(&format!("unsupported version {}", bytes[4])));
        }
        let bits = bytes[5] as u32;
        let flags = bytes[6];
        if flags & !FLAG_NORMS != 0 || bytes[7] != 0 {
            return Err(corrupt("unknown flags"));
        }
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n = usize::try_from(u64_at(12)).map_err(|_| corrupt("row count overflows"))?;
        let gamma = f64::from_bits(u64_at(20));
        let seed = u64_at(28);
        let mut quantizer_id = [0u8; 8];
        quantizer_id.copy_from_slice(&bytes[36..44]);
        let with_norms = flags & FLAG_NORMS != 0;
        if !(1..=8).contains(&bits) || m == 0 {
            return Err(corrupt("invalid bits or feature count"));
        }
        let expected = n
            .checked_mul(row_bytes(m, bits))
            .and_then(|p| p.checked_add(HEADER_LEN + 4 + if with_norms { n.checked_mul(8)? } else { 0 }))
            .ok_or_else(|| corrupt("size overflows"))?;
        if bytes.len() < expected {
            return Err(corrupt(&format!("truncated: {} bytes, expected {expected}", bytes.len())));
        }
        if bytes.len() > expected {
            return Err(corrupt(&format!("{} trailing bytes", bytes.len() - expected)));
        }
        let body = &bytes[..expected - 4];
        let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let mut sketch = Sketch::new(n, m, bits, gamma, seed, quantizer_id).map_err(|e| corrupt(&e.to_string()))?;
        let codes_end = HEADER_LEN + n * row_bytes(m, bits);
        sketch.packed.copy_from_slice(&bytes[HEADER_LEN..codes_end]);
        if with_norms {
            let norms = body[codes_end..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            sketch.set_row_norms(norms).map_err(|e| corrupt(&e.to_string()))?;
        }
        Ok(sketch)
    }
}
