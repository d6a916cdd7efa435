//! Rating triples, positive rescaling, and seeded train/validation/test splits.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;

use crate::seed;
use crate::{Error, Result};

/// One observed entry of the incomplete matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl RatingTriple {
    pub fn new(row: usize, col: usize, value: f64) -> Self {
        Self { row, col, value }
    }
}

/// Mapping between external node ids and 0-based matrix indices. Ids are
/// interned in order of first appearance unless they are already nearly dense
/// integers, in which case id `n` is index `n`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// When every id is a canonical non-negative integer and the ids are
    /// nearly dense (`max + 1 <= 2 · distinct + 16`), returns an identity map
    /// `id n -> index n` and the old-to-new index table.
    fn numeric_identity(&self) -> Option<(IdMap, Vec<usize>)> {
        let mut parsed = Vec::with_capacity(self.ids.len());
        for id in &self.ids {
            let n: usize = id.parse().ok()?;
            if n.to_string() != *id {
                return None;
            }
            parsed.push(n);
        }
        let max = *parsed.iter().max()?;
        if max + 1 > 2 * parsed.len() + 16 {
            return None;
        }
        let map = IdMap::from_ids((0..=max).map(|n| n.to_string()));
        Some((map, parsed))
    }

    pub fn from_ids<I: IntoIterator<Item = String>>(ids: I) -> Self {
        let mut map = Self::default();
        for id in ids {
            map.intern(&id);
        }
        map
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTriples {
    pub triples: Vec<RatingTriple>,
    pub rows: IdMap,
    pub cols: IdMap,
    /// Records that repeated an earlier (row, col) pair and overwrote its value.
    pub duplicates: usize,
}

impl LoadedTriples {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }
}

/// A space delimiter splits on any run of whitespace; any other character
/// splits exactly.
fn split_fields(line: &str, delimiter: char) -> Vec<&str> {
    if delimiter == ' ' {
        line.split_whitespace().collect()
    } else {
        line.split(delimiter).map(str::trim).collect()
    }
}

/// Reads `row_id <delim> col_id <delim> value` records. Extra trailing fields
/// (timestamps and the like) are ignored; blank lines and `#` comments are
/// skipped. A repeated (row, col) pair keeps the value of its last record.
pub fn load_triples<R: BufRead>(
    source: R,
    delimiter: char,
    has_header: bool,
) -> Result<LoadedTriples> {
    let mut rows = IdMap::default();
    let mut cols = IdMap::default();
    let mut triples = Vec::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut duplicates = 0;
    let mut header_pending = has_header;

    for (n, line) in source.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields = split_fields(trimmed, delimiter);
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least 3 fields, found {}", fields.len()),
            });
        }
        let value: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("malformed value {:?}", fields[2]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("non-finite value {:?}", fields[2]),
            });
        }
        let row = rows.intern(fields[0]);
        let col = cols.intern(fields[1]);
        match seen.get(&(row, col)) {
            Some(&at) => {
                triples[at] = RatingTriple::new(row, col, value);
                duplicates += 1;
            }
            None => {
                seen.insert((row, col), triples.len());
                triples.push(RatingTriple::new(row, col, value));
            }
        }
    }

    if triples.is_empty() {
        return Err(Error::EmptyInput("no rating records"));
    }
    if let Some((map, remap)) = rows.numeric_identity() {
        rows = map;
        triples.iter_mut().for_each(|t| t.row = remap[t.row]);
    }
    if let Some((map, remap)) = cols.numeric_identity() {
        cols = map;
        triples.iter_mut().for_each(|t| t.col = remap[t.col]);
    }
    if duplicates > 0 {
        log::warn!("{duplicates} duplicate (row, col) records replaced by their last occurrence");
    }
    Ok(LoadedTriples {
        triples,
        rows,
        cols,
        duplicates,
    })
}

/// Affine map between raw ratings and the strictly positive training scale:
/// `scaled = (raw − offset) · scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingMeta {
    pub offset: f64,
    pub scale: f64,
}

impl ScalingMeta {
    pub const IDENTITY: ScalingMeta = ScalingMeta {
        offset: 0.0,
        scale: 1.0,
    };

    pub fn new(offset: f64, scale: f64) -> Result<Self> {
        if !(offset.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scaling needs finite offset and positive scale, got {offset}, {scale}"
            )));
        }
        Ok(Self { offset, scale })
    }

    #[inline]
    pub fn to_scaled(&self, raw: f64) -> f64 {
        (raw - self.offset) * self.scale
    }

    #[inline]
    pub fn to_raw(&self, scaled: f64) -> f64 {
        scaled / self.scale + self.offset
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

impl Default for ScalingMeta {
    fn default() -> Self {
        Self::IDENTITY
    }
}

pub const DEFAULT_MIN_TARGET: f64 = 0.5;

/// Shifts values so the minimum is at least `min_target`. Values already at
/// or above `min_target` are left untouched (identity scaling).
pub fn rescale_positive(
    triples: &[RatingTriple],
    min_target: f64,
) -> Result<(Vec<RatingTriple>, ScalingMeta)> {
    if !(min_target > 0.0 && min_target.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "min_target must be positive, got {min_target}"
        )));
    }
    let min = triples
        .iter()
        .map(|t| t.value)
        .min_by(f64::total_cmp)
        .ok_or(Error::EmptyInput("no triples to rescale"))?;
    if min >= min_target {
        return Ok((triples.to_vec(), ScalingMeta::IDENTITY));
    }
    // the rounded shift can land an ulp short of min_target; lower the offset
    // until the minimum clears it (monotone rounding carries the rest)
    let mut offset = min - min_target;
    while min - offset < min_target {
        offset = offset.next_down();
    }
    let meta = ScalingMeta::new(offset, 1.0)?;
    let out = triples
        .iter()
        .map(|t| RatingTriple::new(t.row, t.col, meta.to_scaled(t.value)))
        .collect();
    Ok((out, meta))
}

pub const N_SUBSETS: usize = 10;
const TRAIN_SUBSETS: usize = 7;
const VALIDATION_SUBSETS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Validation,
    Test,
}

impl Role {
    pub fn of_subset(subset: u8) -> Role {
        let s = subset as usize;
        if s < TRAIN_SUBSETS {
            Role::Train
        } else if s < TRAIN_SUBSETS + VALIDATION_SUBSETS {
            Role::Validation
        } else {
            Role::Test
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
            Role::Test => "test",
        }
    }
}

/// Train (Λ), validation (Ω) and test (Φ) triple sets of one HDI matrix.
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct HdiDataset {
    n_rows: usize,
    n_cols: usize,
    train: Vec<RatingTriple>,
    validation: Vec<RatingTriple>,
    test: Vec<RatingTriple>,
    scaling: ScalingMeta,
    /// Subset (0..10) of every input triple, indexed by input position.
    assignment: Vec<u8>,
}

impl HdiDataset {
    /// Shuffles `triples` with `seed` and deals them round-robin into ten
    /// subsets: 0..7 train, 7 validation, 8..10 test.
    pub fn split(
        triples: &[RatingTriple],
        n_rows: usize,
        n_cols: usize,
        scaling: ScalingMeta,
        seed: u64,
    ) -> Result<Self> {
        if triples.len() < N_SUBSETS {
            return Err(Error::InvalidArgument(format!(
                "need at least {N_SUBSETS} triples to split, got {}",
                triples.len()
            )));
        }
        for t in triples {
            if t.row >= n_rows {
                return Err(Error::OutOfBounds {
                    what: "row",
                    index: t.row,
                    len: n_rows,
                });
            }
            if t.col >= n_cols {
                return Err(Error::OutOfBounds {
                    what: "col",
                    index: t.col,
                    len: n_cols,
                });
            }
        }
        let mut order: Vec<usize> = (0..triples.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(seed, &[seed::tag::SHUFFLE])));

        let mut assignment = vec![0u8; triples.len()];
        let mut train = Vec::new();
        let mut validation = Vec::new();
        let mut test = Vec::new();
        for (pos, &idx) in order.iter().enumerate() {
            let subset = (pos % N_SUBSETS) as u8;
            assignment[idx] = subset;
            let t = triples[idx];
            match Role::of_subset(subset) {
                Role::Train => train.push(t),
                Role::Validation => validation.push(t),
                Role::Test => test.push(t),
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            train,
            validation,
            test,
            scaling,
            assignment,
        })
    }

    /// Assembles a dataset from already separated sets. The assignment
    /// manifest is left empty.
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        train: Vec<RatingTriple>,
        validation: Vec<RatingTriple>,
        test: Vec<RatingTriple>,
        scaling: ScalingMeta,
    ) -> Result<Self> {
        for t in train.iter().chain(&validation).chain(&test) {
            if t.row >= n_rows || t.col >= n_cols {
                return Err(Error::OutOfBounds {
                    what: "entry",
                    index: t.row.max(t.col),
                    len: n_rows.min(n_cols),
                });
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            train,
            validation,
            test,
            scaling,
            assignment: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn train(&self) -> &[RatingTriple] {
        &self.train
    }

    pub fn validation(&self) -> &[RatingTriple] {
        &self.validation
    }

    pub fn test(&self) -> &[RatingTriple] {
        &self.test
    }

    pub fn scaling(&self) -> ScalingMeta {
        self.scaling
    }

    pub fn assignment(&self) -> &[u8] {
        &self.assignment
    }

    pub fn known(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    /// Mean of the training values on the raw scale.
    pub fn train_mean_raw(&self) -> f64 {
        if self.train.is_empty() {
            return 0.0;
        }
        let mean = self.train.iter().map(|t| t.value).sum::<f64>() / self.train.len() as f64;
        self.scaling.to_raw(mean)
    }

    pub fn stats(&self) -> DatasetStats {
        let (min, max) = self
            .train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                (lo.min(t.value), hi.max(t.value))
            });
        DatasetStats {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            known: self.known(),
            train: self.train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
            density: density(self.known(), self.n_rows, self.n_cols),
            min_value: min,
            max_value: max,
        }
    }

    /// Writes `entry,subset,role` for every input triple.
    pub fn write_manifest<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "entry,subset,role")?;
        for (i, &s) in self.assignment.iter().enumerate() {
            writeln!(sink, "{i},{s},{}", Role::of_subset(s).name())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub n_rows: usize,
    pub n_cols: usize,
    pub known: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Fraction of known entries, `known / (rows · cols)`.
    pub density: f64,
    pub min_value: f64,
    pub max_value: f64,
}

pub fn density(known: usize, n_rows: usize, n_cols: usize) -> f64 {
    known as f64 / (n_rows as f64 * n_cols as f64)
}
