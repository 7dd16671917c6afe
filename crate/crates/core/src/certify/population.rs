//! Labelled evaluation inputs, stored as CSV.
//!
//! Columns: `id,label,x0,x1,…,x{d−1}`. The header row is required; `label`
//! is the zero-based true class.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInput {
    pub id: String,
    pub label: usize,
    pub x: Vec<f64>,
}

pub fn read_population<R: Read>(reader: R) -> Result<Vec<LabeledInput>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(Error::Format(
            "population header must start with `id,label,` followed by coordinates".into(),
        ));
    }
    let dim = headers.len() - 2;
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let label = record[1].parse().map_err(|e| {
            Error::Format(format!("row {}: bad label `{}`: {e}", row + 1, &record[1]))
        })?;
        let x = (0..dim)
            .map(|j| {
                record[j + 2].parse::<f64>().map_err(|e| {
                    Error::Format(format!(
                        "row {}: bad coordinate `{}`: {e}",
                        row + 1,
                        &record[j + 2]
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(LabeledInput {
            id: record[0].to_string(),
            label,
            x,
        });
    }
    if out.is_empty() {
        return Err(Error::Format("population file has no rows".into()));
    }
    Ok(out)
}

pub fn write_population<W: Write>(writer: W, inputs: &[LabeledInput]) -> Result<()> {
    let dim = inputs.first().map_or(0, |i| i.x.len());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for input in inputs {
        let mut row = vec![input.id.clone(), input.label.to_string()];
        row.extend(input.x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let inputs = vec![
            LabeledInput {
                id: "a".into(),
                label: 1,
                x: vec![0.5, -1.25],
            },
            LabeledInput {
                id: "b".into(),
                label: 0,
                x: vec![1e-9, 3.0],
            },
        ];
        let mut buf = Vec::new();
        write_population(&mut buf, &inputs).unwrap();
        assert_eq!(read_population(buf.as_slice()).unwrap(), inputs);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_population("id,label\n".as_bytes()).is_err());
        assert!(read_population("id,label,x0\n".as_bytes()).is_err());
        assert!(read_population("id,label,x0\na,one,0.5\n".as_bytes()).is_err());
        assert!(read_population("name,label,x0\na,1,0.5\n".as_bytes()).is_err());
    }
}
