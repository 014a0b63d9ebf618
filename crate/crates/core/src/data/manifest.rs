use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{load_pair, DocumentPair};
use crate::error::{Error, Result};

/// One manifest line: `year<TAB>degraded<TAB>gt`, paths relative to the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub year: String,
    pub degraded: PathBuf,
    pub gt: PathBuf,
}

impl ManifestEntry {
    pub fn load(&self) -> Result<DocumentPair> {
        load_pair(&self.degraded, &self.gt)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Parses manifest text; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let err = |message: String| Error::Manifest {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let [year, degraded, gt] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            if year.trim().is_empty() || degraded.trim().is_empty() || gt.trim().is_empty() {
                return Err(err("empty field".into()));
            }
            entries.push(ManifestEntry {
                year: year.trim().to_string(),
                degraded: base.join(degraded.trim()),
                gt: base.join(gt.trim()),
            });
        }
        Ok(Manifest { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base, path)
    }

    pub fn by_year(&self) -> BTreeMap<String, Vec<ManifestEntry>> {
        let mut map: BTreeMap<String, Vec<ManifestEntry>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.year.clone()).or_default().push(e.clone());
        }
        map
    }

    /// Entries of one year; an unknown year is an error, a known year with
    /// no entries cannot occur.
    pub fn year(&self, year: &str) -> Result<Vec<ManifestEntry>> {
        let all = self.by_year();
        all.get(year).cloned().ok_or_else(|| Error::UnknownYear {
            year: year.to_string(),
            available: all.keys().cloned().collect::<Vec<_>>().join(", "),
        })
    }
}

/// Identity used to keep train and test disjoint.
pub trait SourceId {
    fn source_id(&self) -> &str;
}

impl SourceId for DocumentPair {
    fn source_id(&self) -> &str {
        &self.source_id
    }
}

impl SourceId for ManifestEntry {
    fn source_id(&self) -> &str {
        self.degraded.to_str().unwrap_or_default()
    }
}

/// Role of the selected year in a year-wise split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Train on the selected year, test on all others.
    TrainOnOne,
    /// Test on the selected year, train on all others.
    TestOnOne,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train-on-one" => Ok(Direction::TrainOnOne),
            "test-on-one" => Ok(Direction::TestOnOne),
            other => Err(Error::Config(format!(
                "unknown direction `{other}` (expected train-on-one or test-on-one)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
}

/// Year-wise split around `year`. Fails on an unknown year or when a source
/// would land on both sides.
pub fn leave_one_out<T: Clone + SourceId>(
    datasets: &BTreeMap<String, Vec<T>>,
    year: &str,
    direction: Direction,
) -> Result<Split<T>> {
    if !datasets.contains_key(year) {
        return Err(Error::UnknownYear {
            year: year.to_string(),
            available: datasets.keys().cloned().collect::<Vec<_>>().join(", "),
        });
    }
    let selected: Vec<T> = datasets[year].clone();
    let rest: Vec<T> = datasets
        .iter()
        .filter(|(y, _)| y.as_str() != year)
        .flat_map(|(_, items)| items.iter().cloned())
        .collect();
    let ids: BTreeSet<&str> = selected.iter().map(SourceId::source_id).collect();
    if let Some(dup) = rest.iter().find(|x| ids.contains(x.source_id())) {
        return Err(Error::OverlappingSplit(dup.source_id().to_string()));
    }
    Ok(match direction {
        Direction::TestOnOne => Split { train: rest, test: selected },
        Direction::TrainOnOne => Split { train: selected, test: rest },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Manifest {
        let years = ["2009", "2010", "2011", "2012", "2013", "2014", "2016", "2018"];
        let text: String = years
            .iter()
            .flat_map(|y| (0..2).map(move |i| format!("{y}\t{y}/d{i}.png\t{y}/g{i}.png\n")))
            .collect();
        Manifest::parse(&format!("# comment\n\n{text}"), Path::new("/data"), Path::new("m.tsv")).unwrap()
    }

    #[test]
    fn parse_resolves_relative_paths() {
        let m = manifest();
        assert_eq!(m.entries.len(), 16);
        assert_eq!(m.entries[0].degraded, PathBuf::from("/data/2009/d0.png"));
        let bad = Manifest::parse("2009\tonly-two\n", Path::new("."), Path::new("m.tsv"));
        assert!(matches!(bad, Err(Error::Manifest { line: 1, .. })));
    }

    #[test]
    fn hold_out_one_of_eight_years() {
        let split = leave_one_out(&manifest().by_year(), "2018", Direction::TestOnOne).unwrap();
        assert_eq!(split.test.len(), 2);
        assert!(split.test.iter().all(|e| e.year == "2018"));
        let train_years: BTreeSet<&str> = split.train.iter().map(|e| e.year.as_str()).collect();
        assert_eq!(train_years.len(), 7);
        assert!(!train_years.contains("2018"));
        let train_ids: BTreeSet<&str> = split.train.iter().map(SourceId::source_id).collect();
        assert!(split.test.iter().all(|e| !train_ids.contains(e.source_id())));

        let flipped = leave_one_out(&manifest().by_year(), "2018", Direction::TrainOnOne).unwrap();
        assert_eq!((flipped.train, flipped.test), (split.test, split.train));
    }

    #[test]
    fn unknown_year_and_overlap_fail() {
        let by_year = manifest().by_year();
        assert!(matches!(
            leave_one_out(&by_year, "1999", Direction::TestOnOne),
            Err(Error::UnknownYear { .. })
        ));
        let mut dup = by_year.clone();
        let stolen = dup["2009"][0].clone();
        dup.get_mut("2010").unwrap().push(stolen);
        assert!(matches!(
            leave_one_out(&dup, "2009", Direction::TestOnOne),
            Err(Error::OverlappingSplit(_))
        ));
    }

    #[test]
    fn direction_parsing() {
        assert_eq!("train-on-one".parse::<Direction>().unwrap(), Direction::TrainOnOne);
        assert!("sideways".parse::<Direction>().is_err());
    }
}
