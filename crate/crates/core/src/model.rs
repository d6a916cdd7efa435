//! Latent factor state and the binary model file.
//!
//! The optimisation variables `X` (|U|×f) and `Y` (|I|×f) are unconstrained;
//! the non-negative factors `P = g(X)` and `Q = g(Y)` are always derived
//! through the bridge and never stored.

use std::io::{ErrorKind, Read, Write};

use rand::Rng;

use crate::data::ScalingMeta;
use crate::divergence::dot;
use crate::seed;
use crate::{BridgeConfig, Error, Result};

pub const DEFAULT_RANK: usize = 20;

/// Half-width of the uniform initialisation interval.
pub const INIT_HALF_WIDTH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    n_rows: usize,
    n_cols: usize,
    rank: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl FactorState {
    /// Fills `X` and `Y` i.i.d. from U[-0.5, 0.5] using `seed`.
    pub fn init(n_rows: usize, n_cols: usize, rank: usize, seed: u64) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 || rank == 0 {
            return Err(Error::InvalidArgument(format!(
                "factor dimensions must be positive, got {n_rows}×{n_cols} rank {rank}"
            )));
        }
        let mut rng = seed::rng(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| rng.random_range(-INIT_HALF_WIDTH..=INIT_HALF_WIDTH))
                .collect()
        };
        let x = draw(n_rows * rank);
        let y = draw(n_cols * rank);
        Ok(Self {
            n_rows,
            n_cols,
            rank,
            x,
            y,
        })
    }

    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        rank: usize,
        x: Vec<f64>,
        y: Vec<f64>,
    ) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 || rank == 0 {
            return Err(Error::InvalidArgument("factor dimensions must be positive".into()));
        }
        if x.len() != n_rows * rank || y.len() != n_cols * rank {
            return Err(Error::InvalidArgument(format!(
                "factor buffers have {} and {} values, expected {} and {}",
                x.len(),
                y.len(),
                n_rows * rank,
                n_cols * rank
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Domain("factor values must be finite".into()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            rank,
            x,
            y,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x_row(&self, u: usize) -> &[f64] {
        &self.x[u * self.rank..(u + 1) * self.rank]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.rank..(i + 1) * self.rank]
    }

    /// Mutable views of row `u` of `X` and row `i` of `Y` at once.
    pub(crate) fn rows_mut(&mut self, u: usize, i: usize) -> (&mut [f64], &mut [f64]) {
        let f = self.rank;
        (
            &mut self.x[u * f..(u + 1) * f],
            &mut self.y[i * f..(i + 1) * f],
        )
    }

    fn check_row(&self, u: usize) -> Result<()> {
        if u >= self.n_rows {
            return Err(Error::OutOfBounds {
                what: "row",
                index: u,
                len: self.n_rows,
            });
        }
        Ok(())
    }

    fn check_col(&self, i: usize) -> Result<()> {
        if i >= self.n_cols {
            return Err(Error::OutOfBounds {
                what: "col",
                index: i,
                len: self.n_cols,
            });
        }
        Ok(())
    }

    /// Writes `p_u = g(x_u)` into `out`.
    pub fn bridged_row(&self, u: usize, cfg: &BridgeConfig, out: &mut [f64]) -> Result<()> {
        self.check_row(u)?;
        for (o, &z) in out.iter_mut().zip(self.x_row(u)) {
            *o = cfg.value(z);
        }
        Ok(())
    }

    /// Writes `q_i = g(y_i)` into `out`.
    pub fn bridged_col(&self, i: usize, cfg: &BridgeConfig, out: &mut [f64]) -> Result<()> {
        self.check_col(i)?;
        for (o, &z) in out.iter_mut().zip(self.y_row(i)) {
            *o = cfg.value(z);
        }
        Ok(())
    }

    /// `r̂ = p_u · q_i`, unclamped. Lies in `[0, f]`.
    pub fn predict(&self, u: usize, i: usize, cfg: &BridgeConfig) -> Result<f64> {
        self.check_row(u)?;
        self.check_col(i)?;
        Ok(self.predict_unchecked(u, i, cfg))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, u: usize, i: usize, cfg: &BridgeConfig) -> f64 {
        self.x_row(u)
            .iter()
            .zip(self.y_row(i))
            .map(|(&a, &b)| cfg.value(a) * cfg.value(b))
            .sum()
    }

    /// Dense `P = g(X)`, row-major.
    pub fn p_matrix(&self, cfg: &BridgeConfig) -> Vec<f64> {
        self.x.iter().map(|&z| cfg.value(z)).collect()
    }

    /// Dense `Q = g(Y)`, row-major.
    pub fn q_matrix(&self, cfg: &BridgeConfig) -> Vec<f64> {
        self.y.iter().map(|&z| cfg.value(z)).collect()
    }

    /// Number of derived factors outside `{0} ∪ [ι, 1)` plus non-finite
    /// variables. Zero for every state reachable through the bridge.
    pub fn audit(&self, cfg: &BridgeConfig) -> usize {
        self.x
            .iter()
            .chain(&self.y)
            .filter(|&&z| !z.is_finite() || !cfg.is_admissible(cfg.value(z)))
            .count()
    }

    /// Fraction of derived factors sitting in the dead zone.
    pub fn dead_fraction(&self, cfg: &BridgeConfig) -> f64 {
        let total = self.x.len() + self.y.len();
        let dead = self
            .x
            .iter()
            .chain(&self.y)
            .filter(|&&z| cfg.value(z) == 0.0)
            .count();
        dead as f64 / total as f64
    }

    /// Squared norms `‖p_u‖² + ‖q_i‖²`.
    pub fn factor_norms(&self, u: usize, i: usize, cfg: &BridgeConfig) -> Result<f64> {
        let mut p = vec![0.0; self.rank];
        let mut q = vec![0.0; self.rank];
        self.bridged_row(u, cfg, &mut p)?;
        self.bridged_col(i, cfg, &mut q)?;
        Ok(dot(&p, &p) + dot(&q, &q))
    }
}

const MAGIC: &[u8; 8] = b"ADNLFMDL";
pub const FORMAT_VERSION: u32 = 1;

/// Contents of a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub state: FactorState,
    pub bridge: BridgeConfig,
    pub scaling: ScalingMeta,
}

/// Writes the versioned little-endian model format:
///
/// ```text
/// magic "ADNLFMDL" | version u32 | |U| u64 | |I| u64 | f u64
/// | ι f64 | offset f64 | scale f64 | X row-major f64… | Y row-major f64…
/// ```
pub fn export_model<W: Write>(
    state: &FactorState,
    bridge: &BridgeConfig,
    scaling: &ScalingMeta,
    mut sink: W,
) -> Result<()> {
    sink.write_all(MAGIC)?;
    sink.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for n in [state.n_rows, state.n_cols, state.rank] {
        sink.write_all(&(n as u64).to_le_bytes())?;
    }
    for v in [bridge.iota(), scaling.offset, scaling.scale] {
        sink.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * (state.x.len() + state.y.len()));
    for v in state.x.iter().chain(&state.y) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == ErrorKind::UnexpectedEof {
        Error::Format("truncated payload".into())
    } else {
        Error::Io(e)
    }
}

fn read_array<const N: usize, R: Read>(src: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    src.read_exact(&mut b).map_err(truncated)?;
    Ok(b)
}

fn read_u64<R: Read>(src: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(src)?))
}

fn read_f64<R: Read>(src: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(src)?))
}

fn read_block<R: Read>(src: &mut R, n: usize) -> Result<Vec<f64>> {
    let bytes = n
        .checked_mul(8)
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    let mut buf = Vec::new();
    src.take(bytes as u64).read_to_end(&mut buf)?;
    if buf.len() != bytes {
        return Err(Error::Format("truncated payload".into()));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn import_model<R: Read>(mut source: R) -> Result<ModelFile> {
    let magic: [u8; 8] = read_array(&mut source)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a model file".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut source)?);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let to_usize = |v: u64| {
        usize::try_from(v).map_err(|_| Error::Format(format!("dimension {v} too large")))
    };
    let n_rows = to_usize(read_u64(&mut source)?)?;
    let n_cols = to_usize(read_u64(&mut source)?)?;
    let rank = to_usize(read_u64(&mut source)?)?;
    let iota = read_f64(&mut source)?;
    let offset = read_f64(&mut source)?;
    let scale = read_f64(&mut source)?;

    let bridge = BridgeConfig::new(iota).map_err(|e| Error::Format(e.to_string()))?;
    let scaling = ScalingMeta::new(offset, scale).map_err(|e| Error::Format(e.to_string()))?;
    let cells = |n: usize| {
        n.checked_mul(rank)
            .ok_or_else(|| Error::Format("matrix size overflows".into()))
    };
    let x = read_block(&mut source, cells(n_rows)?)?;
    let y = read_block(&mut source, cells(n_cols)?)?;
    let mut extra = [0u8; 1];
    if source.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let state = FactorState::from_parts(n_rows, n_cols, rank, x, y)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(ModelFile {
        state,
        bridge,
        scaling,
    })
}
