//! Labelled comparison datasets in CSV form.
//!
//! Each row is `item_a,item_b,count_a_wins`; rows for the same ordered pair
//! accumulate. Labels get indices in order of first appearance. An optional
//! header row with exactly those three names is skipped. Export writes the
//! header followed by every ordered pair of distinct items (zeros included),
//! so exporting and re-importing reproduces the item order and the matrix.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::bt::ComparisonMatrix;
use crate::error::{Error, Result};

pub const HEADER: [&str; 3] = ["item_a", "item_b", "count_a_wins"];

/// Item labels and their observed win counts (no pseudo-counts).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub items: Vec<String>,
    pub matrix: ComparisonMatrix,
}

impl Dataset {
    pub fn new(items: Vec<String>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (idx, item) in items.iter().enumerate() {
            if let Some(prev) = seen.insert(item.as_str(), idx) {
                return Err(Error::invalid(format!(
                    "duplicate item label {item:?} at {prev} and {idx}"
                )));
            }
        }
        Ok(Self {
            matrix: ComparisonMatrix::new(items.len()),
            items,
        })
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.items.iter().position(|l| l == label)
    }
}

/// Parses a dataset from CSV text.
pub fn import_dataset(mut reader: impl Read) -> Result<Dataset> {
    // The csv reader skips blank lines without counting them, so line
    // numbers are recovered from byte offsets into the buffered input.
    let mut text = Vec::new();
    reader.read_to_end(&mut text)?;
    let newlines: Vec<u64> = text
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == b'\n')
        .map(|(k, _)| k as u64)
        .collect();
    // Record positions can point at blank lines skipped before the record.
    let line_at = |byte: u64| {
        let mut b = byte as usize;
        while b < text.len() && matches!(text[b], b'\n' | b'\r') {
            b += 1;
        }
        newlines.partition_point(|&nl| nl < b as u64) as u64 + 1
    };

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_slice());

    let mut items: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cells: Vec<(usize, usize, u64)> = Vec::new();

    let mut intern = |label: &str, items: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(label) {
            return i;
        }
        items.push(label.to_owned());
        index.insert(label.to_owned(), items.len() - 1);
        items.len() - 1
    };

    for (row, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| line_at(p.byte())),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(row as u64 + 1, |p| line_at(p.byte()));
        if record.iter().all(str::is_empty) {
            continue;
        }
        if row == 0 && record.iter().eq(HEADER.iter().copied()) {
            continue;
        }
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields (item_a,item_b,count_a_wins), found {}", record.len()),
            });
        }
        let (a, b, raw) = (&record[0], &record[1], &record[2]);
        if a.is_empty() || b.is_empty() {
            return Err(Error::Parse {
                line,
                message: "item labels must be non-empty".into(),
            });
        }
        if a == b {
            return Err(Error::Parse {
                line,
                message: format!("item {a:?} is compared with itself"),
            });
        }
        let count: i64 = raw.parse().map_err(|_| Error::Parse {
            line,
            message: format!("count {raw:?} is not an integer"),
        })?;
        if count < 0 {
            return Err(Error::InvalidArgument(format!("line {line}: negative count {count}")));
        }
        let ia = intern(a, &mut items);
        let ib = intern(b, &mut items);
        cells.push((ia, ib, count as u64));
    }

    let mut matrix = ComparisonMatrix::new(items.len());
    for (a, b, c) in cells {
        matrix.add(a, b, c)?;
    }
    Ok(Dataset { items, matrix })
}

pub fn read_dataset_file(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    import_dataset(std::io::BufReader::new(file))
}

/// Writes observed counts (pseudo-counts excluded) for every ordered pair.
pub fn export_dataset(writer: impl Write, items: &[String], matrix: &ComparisonMatrix) -> Result<()> {
    if items.len() != matrix.n() {
        return Err(Error::invalid(format!(
            "{} labels for a matrix of {} items",
            items.len(),
            matrix.n()
        )));
    }
    let mut csv = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.into());
    csv.write_record(HEADER).map_err(io)?;
    for i in 0..matrix.n() {
        for j in 0..matrix.n() {
            if i != j {
                csv.write_record([items[i].as_str(), items[j].as_str(), &matrix.observed(i, j).to_string()])
                    .map_err(io)?;
            }
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn export_to_string(items: &[String], matrix: &ComparisonMatrix) -> Result<String> {
    let mut buf = Vec::new();
    export_dataset(&mut buf, items, matrix)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
