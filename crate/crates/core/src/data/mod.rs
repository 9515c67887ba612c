//! Multimodal feature records, synthetic generation, file IO and batching.

mod batch;
mod io;
mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::batches;
pub use io::{load_features, read_features, save_features, write_features};
pub use synthetic::{generate_synthetic, SyntheticSpec};

pub const LABEL_MIN: f64 = -3.0;
pub const LABEL_MAX: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::contract(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Language,
    Audio,
    Visual,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Language, Modality::Audio, Modality::Visual];

    pub fn index(self) -> usize {
        match self {
            Modality::Language => 0,
            Modality::Audio => 1,
            Modality::Visual => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Language => "language",
            Modality::Audio => "audio",
            Modality::Visual => "visual",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "language" => Ok(Modality::Language),
            "audio" => Ok(Modality::Audio),
            "visual" => Ok(Modality::Visual),
            other => Err(Error::contract(format!("unknown modality `{other}`"))),
        }
    }
}

/// Feature lengths per modality. Also the feature-file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub d_l: usize,
    pub d_a: usize,
    pub d_v: usize,
}

impl Dims {
    pub fn new(d_l: usize, d_a: usize, d_v: usize) -> Self {
        Self { d_l, d_a, d_v }
    }

    pub fn of(&self, m: Modality) -> usize {
        match m {
            Modality::Language => self.d_l,
            Modality::Audio => self.d_a,
            Modality::Visual => self.d_v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_l == 0 || self.d_a == 0 || self.d_v == 0 {
            return Err(Error::contract(format!(
                "modality dimensions must be positive, got ({}, {}, {})",
                self.d_l, self.d_a, self.d_v
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRecord {
    pub id: String,
    pub split: Split,
    pub label: f64,
    pub language: Vec<f64>,
    pub audio: Vec<f64>,
    pub visual: Vec<f64>,
}

impl FeatureRecord {
    pub fn features(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Language => &self.language,
            Modality::Audio => &self.audio,
            Modality::Visual => &self.visual,
        }
    }

    fn check(&self, dims: &Dims) -> Result<()> {
        for m in Modality::ALL {
            let got = self.features(m).len();
            if got != dims.of(m) {
                return Err(Error::Schema(format!(
                    "record `{}`: {m} has length {got}, expected {}",
                    self.id,
                    dims.of(m)
                )));
            }
            if self.features(m).iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "record `{}`: {m} has non-finite values",
                    self.id
                )));
            }
        }
        if !(LABEL_MIN..=LABEL_MAX).contains(&self.label) {
            return Err(Error::Schema(format!(
                "record `{}`: label {} outside [{LABEL_MIN}, {LABEL_MAX}]",
                self.id, self.label
            )));
        }
        Ok(())
    }
}

/// Immutable collection of records sharing one set of dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: Dims,
    records: Vec<FeatureRecord>,
}

impl Dataset {
    pub fn new(dims: Dims, records: Vec<FeatureRecord>) -> Result<Self> {
        dims.validate()?;
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.check(&dims)?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Schema(format!("duplicate id `{}`", r.id)));
            }
        }
        Ok(Self { dims, records })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one split, in file order.
    pub fn split(&self, split: Split) -> Vec<&FeatureRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, split: Split, label: f64, l: usize) -> FeatureRecord {
        FeatureRecord {
            id: id.into(),
            split,
            label,
            language: vec![0.5; l],
            audio: vec![0.0; 1],
            visual: vec![0.0; 1],
        }
    }

    #[test]
    fn schema_error_names_the_record() {
        let err = Dataset::new(
            Dims::new(2, 1, 1),
            vec![rec("a", Split::Train, 0.0, 2), rec("bad-one", Split::Test, 0.0, 3)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("bad-one")), "{err}");
    }

    #[test]
    fn rejects_duplicates_and_out_of_range_labels() {
        let dims = Dims::new(1, 1, 1);
        assert!(Dataset::new(dims, vec![rec("a", Split::Train, 0.0, 1), rec("a", Split::Test, 0.0, 1)]).is_err());
        assert!(Dataset::new(dims, vec![rec("a", Split::Train, 3.5, 1)]).is_err());
        assert!(matches!(Dataset::new(dims, vec![]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn split_preserves_order() {
        let dims = Dims::new(1, 1, 1);
        let ds = Dataset::new(
            dims,
            vec![
                rec("t0", Split::Test, 0.0, 1),
                rec("x0", Split::Train, 0.0, 1),
                rec("t1", Split::Test, 1.0, 1),
            ],
        )
        .unwrap();
        let ids: Vec<_> = ds.split(Split::Test).iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["t0", "t1"]);
        assert!("dev".parse::<Split>().is_err());
    }
}
