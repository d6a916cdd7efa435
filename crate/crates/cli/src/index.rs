//! Text sidecar mapping external ids to model indices.
//!
//! ```text
//! # adnlf model index v1
//! train_mean<TAB>3.5
//! row<TAB>0<TAB>alice
//! col<TAB>4<TAB>item-17
//! ```

use std::collections::HashMap;
use std::io::{BufRead, Write};

use adnlf::data::LoadedTriples;

const HEADER: &str = "# adnlf model index v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelIndex {
    pub rows: HashMap<String, usize>,
    pub cols: HashMap<String, usize>,
    /// Mean raw training value, the `mean` fallback prediction.
    pub train_mean: f64,
}

impl ModelIndex {
    /// Ids that occur in `loaded`. Indices reserved by an identity id map but
    /// never observed are left out, so they count as unknown.
    pub fn from_loaded(loaded: &LoadedTriples, train_mean: f64) -> Self {
        let mut rows = HashMap::new();
        let mut cols = HashMap::new();
        for t in &loaded.triples {
            if let Some(id) = loaded.rows.id(t.row) {
                rows.entry(id.to_owned()).or_insert(t.row);
            }
            if let Some(id) = loaded.cols.id(t.col) {
                cols.entry(id.to_owned()).or_insert(t.col);
            }
        }
        Self {
            rows,
            cols,
            train_mean,
        }
    }

    pub fn write<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        writeln!(sink, "{HEADER}")?;
        writeln!(sink, "train_mean\t{}", self.train_mean)?;
        for (kind, map) in [("row", &self.rows), ("col", &self.cols)] {
            let mut entries: Vec<(&String, &usize)> = map.iter().collect();
            entries.sort_by_key(|(_, &i)| i);
            for (id, i) in entries {
                writeln!(sink, "{kind}\t{i}\t{id}")?;
            }
        }
        sink.flush()
    }

    pub fn read<R: BufRead>(source: R) -> adnlf::Result<Self> {
        let parse_err = |line: usize, message: String| adnlf::Error::Parse { line, message };
        let mut lines = source.lines().enumerate();
        match lines.next() {
            Some((_, Ok(l))) if l.trim_end() == HEADER => {}
            Some((_, Err(e))) => return Err(e.into()),
            _ => return Err(parse_err(1, "not an adnlf model index".into())),
        }
        let mut train_mean = None;
        let mut rows = HashMap::new();
        let mut cols = HashMap::new();
        for (n, line) in lines {
            let line = line?;
            let line_no = n + 1;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some("train_mean"), Some(v), None) => {
                    let v: f64 = v
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad train mean {v:?}")))?;
                    train_mean = Some(v);
                }
                (Some(kind @ ("row" | "col")), Some(i), Some(id)) => {
                    let i: usize = i
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad index {i:?}")))?;
                    let map = if kind == "row" { &mut rows } else { &mut cols };
                    map.insert(id.to_owned(), i);
                }
                _ => return Err(parse_err(line_no, format!("unrecognised record {line:?}"))),
            }
        }
        let train_mean = train_mean.ok_or_else(|| parse_err(1, "missing train_mean".into()))?;
        Ok(Self {
            rows,
            cols,
            train_mean,
        })
    }
}
