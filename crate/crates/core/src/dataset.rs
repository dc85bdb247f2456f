//! CSV dataset input.
//!
//! The header must name `y` and `s`, optionally `w`. Without a `w` column
//! every record has unit weight.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sums::Record;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    /// Whether the input carried a weight column.
    pub has_weights: bool,
}

pub fn read_path(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();

    let mut columns = [None::<usize>; 3];
    for (i, name) in headers.iter().enumerate() {
        let slot = match name {
            "y" => 0,
            "s" => 1,
            "w" => 2,
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unexpected column {other:?}; expected y, s and optional w"),
                })
            }
        };
        if columns[slot].replace(i).is_some() {
            return Err(Error::Parse {
                line: 1,
                message: format!("duplicate column {name:?}"),
            });
        }
    }
    let (Some(y_col), Some(s_col)) = (columns[0], columns[1]) else {
        return Err(Error::Parse {
            line: 1,
            message: "header must contain columns y and s".into(),
        });
    };
    let w_col = columns[2];

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(e, line)
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize, name: &str| -> Result<f64> {
            let raw = row.get(col).unwrap_or("");
            let value: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {name}: cannot parse {raw:?} as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {name}: non-finite value {raw:?}"),
                });
            }
            Ok(value)
        };
        let y = field(y_col, "y")?;
        let s = field(s_col, "s")?;
        let w = match w_col {
            Some(col) => field(col, "w")?,
            None => 1.0,
        };
        records.push(Record::new(y, s, w));
    }
    Ok(Dataset {
        records,
        has_weights: w_col.is_some(),
    })
}

fn csv_error(err: csv::Error, line: u64) -> Error {
    Error::Parse {
        line,
        message: err.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_weighted_and_unweighted() {
        let d = read_csv("y,s,w\n1,0.7,2\n0,0.2,0.5\n".as_bytes()).unwrap();
        assert!(d.has_weights);
        assert_eq!(
            d.records,
            vec![Record::new(1.0, 0.7, 2.0), Record::new(0.0, 0.2, 0.5)]
        );

        let d = read_csv("s, y\n0.4, 1\n".as_bytes()).unwrap();
        assert!(!d.has_weights);
        assert_eq!(d.records, vec![Record::new(1.0, 0.4, 1.0)]);
    }

    #[test]
    fn malformed_row_names_line() {
        let err = read_csv("y,s\n1,0.5\n0,abc\n".as_bytes()).unwrap_err();
        assert_eq!(err.kind(), "parse");
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");

        let err = read_csv("y,s\n1,0.5\n1,0.2\n0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn rejects_non_finite_and_bad_headers() {
        assert!(matches!(
            read_csv("y,s\nNaN,0.5\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_csv("y,s\n1,inf\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(read_csv("y,score\n1,0.5\n".as_bytes()).is_err());
        assert!(read_csv("y,y,s\n1,1,0.5\n".as_bytes()).is_err());
        assert!(read_csv("y\n1\n".as_bytes()).is_err());
    }
}
