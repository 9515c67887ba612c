use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, Dims, FeatureRecord};
use crate::error::{Error, Result};

/// Writes the header line followed by one JSON record per line.
pub fn write_features<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    let io = |e| Error::io("<writer>", e);
    serde_json::to_writer(&mut out, &dataset.dims())?;
    out.write_all(b"\n").map_err(io)?;
    for r in dataset.records() {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_features<R: Read>(input: R) -> Result<Dataset> {
    let mut dims: Option<Dims> = None;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            line: lineno,
            message: e.to_string(),
        };
        match dims {
            None => dims = Some(serde_json::from_str(&line).map_err(parse_err)?),
            Some(_) => {
                let r: FeatureRecord = serde_json::from_str(&line).map_err(parse_err)?;
                records.push(r);
            }
        }
    }
    let dims = dims.ok_or(Error::EmptyDataset)?;
    Dataset::new(dims, records)
}

pub fn save_features(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_features(dataset, BufWriter::new(file))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn sample() -> Dataset {
        generate_synthetic(&SyntheticSpec {
            n_per_split: [6, 2, 3],
            dims: Dims::new(3, 2, 2),
            signal_weights: [0.6, 0.3, 0.1],
            feature_noise_sigma: 0.7,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let ds = sample();
        let mut buf = Vec::new();
        write_features(&ds, &mut buf).unwrap();
        let back = read_features(buf.as_slice()).unwrap();
        assert_eq!(ds, back);
        for (a, b) in ds.records().iter().zip(back.records()) {
            for (x, y) in a.language.iter().zip(&b.language) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn header_is_first_line() {
        let mut buf = Vec::new();
        write_features(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"d_l":3,"d_a":2,"d_v":2}"#);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        assert!(matches!(read_features(&b""[..]), Err(Error::EmptyDataset)));
        assert!(matches!(
            read_features(&b"{\"d_l\":1,\"d_a\":1,\"d_v\":1}\n"[..]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"d_l\":1,\"d_a\":1,\"d_v\":1}\n\
                    {\"id\":\"a\",\"split\":\"train\",\"label\":0.5,\"language\":[1],\"audio\":[1],\"visual\":[1]}\n\
                    {\"id\":\"b\",\"split\":\"train\",\"label\":oops}\n";
        match read_features(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_length_is_schema_error_with_id() {
        let text = "{\"d_l\":2,\"d_a\":1,\"d_v\":1}\n\
                    {\"id\":\"rec-7\",\"split\":\"test\",\"label\":0.5,\"language\":[1],\"audio\":[1],\"visual\":[1]}\n";
        match read_features(text.as_bytes()) {
            Err(Error::Schema(m)) => assert!(m.contains("rec-7")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }
}
