use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, SparseMatrix, SparseVec, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LibsvmOptions {
    pub task: Task,
    /// Minimum number of features; files whose largest index is smaller are
    /// padded with empty columns (useful for validation splits).
    pub min_features: usize,
}

impl LibsvmOptions {
    pub fn new(task: Task) -> Self {
        LibsvmOptions {
            task,
            min_features: 0,
        }
    }
}

pub fn load_libsvm(path: impl AsRef<Path>, opts: LibsvmOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_libsvm(&text, opts)
}

/// Parses `label idx:val ...` lines. Indices on disk are 1-based and must
/// be strictly increasing within a line; they are stored 0-based.
/// Blank lines and `#` comments are skipped.
pub fn parse_libsvm(text: &str, opts: LibsvmOptions) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut d = opts.min_features;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad label {label_tok:?}"),
        })?;
        if opts.task == Task::Classification && label != 1.0 && label != -1.0 {
            return Err(Error::Validation(format!(
                "line {line_no}: label {label_tok} is not -1 or +1"
            )));
        }
        let mut row = SparseVec::default();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected idx:val, got {tok:?}"),
            })?;
            if idx_s == "qid" {
                continue;
            }
            let idx: usize = idx_s.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad index {idx_s:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "indices are 1-based".into(),
                });
            }
            if idx <= prev {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("index {idx} is not strictly increasing"),
                });
            }
            prev = idx;
            let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad value {val_s:?}"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite value {val_s:?}"),
                });
            }
            d = d.max(idx);
            if val != 0.0 {
                row.indices.push(idx - 1);
                row.values.push(val);
            }
        }
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Validation("dataset has no instances".into()));
    }
    Dataset::new(SparseMatrix::from_rows(&rows, d)?, labels, opts.task)
}

/// Serializes in LIBSVM format. Values use the shortest round-trip
/// representation, so write then parse reproduces the dataset exactly.
pub fn write_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..ds.n() {
        let y = ds.y()[i];
        if ds.task() == Task::Classification {
            out.push_str(if y > 0.0 { "+1" } else { "-1" });
        } else {
            let _ = write!(out, "{y:?}");
        }
        for (j, v) in ds.row(i).iter() {
            let _ = write!(out, " {}:{v:?}", j + 1);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cls() -> LibsvmOptions {
        LibsvmOptions::new(Task::Classification)
    }

    #[test]
    fn parses_format_example() {
        let ds = parse_libsvm("+1 1:0.5 3:2.0\n-1 2:1.0\n", cls()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.d(), 3);
        assert_eq!(
            ds.x().to_dense(),
            vec![vec![0.5, 0.0, 2.0], vec![0.0, 1.0, 0.0]]
        );
        assert_eq!(ds.y(), &[1.0, -1.0]);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(matches!(parse_libsvm("", cls()), Err(Error::Validation(_))));
        assert!(matches!(
            parse_libsvm("# only a comment\n\n", cls()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn malformed_token_reports_line() {
        match parse_libsvm("1 2:abc\n", cls()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_libsvm("1 1:1\n-1 3:1 2:1\n", cls()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_libsvm("1 0:1\n", cls()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn classification_label_validation() {
        assert!(matches!(
            parse_libsvm("2 1:1\n", cls()),
            Err(Error::Validation(_))
        ));
        let reg = parse_libsvm("2.5 1:1\n", LibsvmOptions::new(Task::Regression)).unwrap();
        assert_eq!(reg.y(), &[2.5]);
    }

    #[test]
    fn zero_entries_are_not_stored() {
        let ds = parse_libsvm("+1 1:0 2:3\n", cls()).unwrap();
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.x().nnz(), 1);
    }

    #[test]
    fn min_features_pads() {
        let mut o = cls();
        o.min_features = 5;
        let ds = parse_libsvm("+1 1:1\n", o).unwrap();
        assert_eq!(ds.d(), 5);
    }

    #[test]
    fn round_trip() {
        let text = "+1 1:0.1 4:-3.25e-7\n-1 2:1e300\n+1\n";
        let a = parse_libsvm(text, cls()).unwrap();
        let b = parse_libsvm(&write_libsvm(&a), cls()).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
    }
}
