//! File formats: query streams (JSON lines), group maps (CSV), run files and
//! metric reports (JSON).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{Dataset, Ledger, QueryEvent, Ranking, RELEVANCE_SUM_TOL};
use crate::rerank::{RerankConfig, RunResult};

/// Relevance sums further than this from 1 are rejected unless raw loading
/// is requested.
pub const LOAD_SUM_TOL: f64 = 1e-6;

/// Significant digits of numbers in report files.
pub const REPORT_DIGITS: usize = 12;

/// One line of a stream file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamRecord {
    pub query_id: String,
    pub t: u64,
    pub polarity: Vec<f64>,
    pub relevance: BTreeMap<String, f64>,
}

impl StreamRecord {
    pub fn from_query(dataset: &Dataset, query: &QueryEvent) -> Self {
        StreamRecord {
            query_id: query.query_id.clone(),
            t: query.t,
            polarity: query.polarity.clone(),
            relevance: dataset
                .ids()
                .iter()
                .cloned()
                .zip(query.relevance.iter().copied())
                .collect(),
        }
    }
}

/// A parsed stream: individuals in ascending identifier order (the order of
/// each query's relevance vector) and the validated queries.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedStream {
    pub individuals: Vec<String>,
    pub queries: Vec<QueryEvent>,
}

impl LoadedStream {
    /// Dataset with every individual in one group.
    pub fn single_group(&self) -> Result<Dataset> {
        Dataset::single_group(self.individuals.iter().cloned())
    }

    /// Dataset from a group map, which must cover exactly the stream's
    /// individuals.
    pub fn with_groups(&self, groups: &Dataset) -> Result<Dataset> {
        if groups.ids() != self.individuals.as_slice() {
            let missing: Vec<&String> = self
                .individuals
                .iter()
                .filter(|id| groups.index_of(id).is_none())
                .take(3)
                .collect();
            return Err(Error::Coverage(format!(
                "group map has {} individuals, stream has {}; first missing: {missing:?}",
                groups.len(),
                self.individuals.len()
            )));
        }
        Ok(groups.clone())
    }
}

pub fn write_stream(mut w: impl Write, dataset: &Dataset, stream: &[QueryEvent]) -> Result<()> {
    for q in stream {
        let line = serde_json::to_string(&StreamRecord::from_query(dataset, q)).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_stream(path: &Path, dataset: &Dataset, stream: &[QueryEvent]) -> Result<()> {
    write_stream(BufWriter::new(File::create(path)?), dataset, stream)
}

/// Parses and validates a stream. Relevance sums within `1e-9` of 1 are
/// kept verbatim and sums within `1e-6` are renormalized; anything further
/// off is an error unless `raw` is set, in which case it is renormalized
/// with a warning.
pub fn read_stream(r: impl Read, raw: bool) -> Result<LoadedStream> {
    let mut individuals: Option<Vec<String>> = None;
    let mut queries: Vec<QueryEvent> = Vec::new();
    for (k, line) in BufReader::new(r).lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StreamRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let ids: Vec<String> = rec.relevance.keys().cloned().collect();
        match &individuals {
            None => individuals = Some(ids),
            Some(first) if *first != ids => {
                return Err(Error::Coverage(format!(
                    "line {line_no}: query `{}` ranks a different individual set than the first query",
                    rec.query_id
                )))
            }
            Some(_) => {}
        }
        if let Some(prev) = queries.last() {
            if rec.t <= prev.t {
                return Err(Error::Validation(format!(
                    "line {line_no}: {}",
                    Error::StreamOrder { prev: prev.t, next: rec.t }
                )));
            }
        }
        let mut values: Vec<f64> = rec.relevance.values().copied().collect();
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Validation(format!("line {line_no}: invalid relevance {v}")));
        }
        let sum: f64 = values.iter().sum();
        let off = (sum - 1.0).abs();
        if off > RELEVANCE_SUM_TOL {
            if off > LOAD_SUM_TOL && !raw {
                return Err(Error::Validation(format!(
                    "line {line_no}: relevance of query `{}` sums to {sum}",
                    rec.query_id
                )));
            }
            if sum <= 0.0 {
                return Err(Error::Validation(format!("line {line_no}: {}", Error::AllZero)));
            }
            if off > LOAD_SUM_TOL {
                log::warn!("line {line_no}: renormalizing relevance of `{}` (sum {sum})", rec.query_id);
            }
            values.iter_mut().for_each(|v| *v /= sum);
        }
        let q = QueryEvent::new(rec.query_id, rec.t, rec.polarity, values)
            .map_err(|e| Error::Validation(format!("line {line_no}: {e}")))?;
        if let Some(first) = queries.first() {
            if q.components() != first.components() {
                return Err(Error::Validation(format!(
                    "line {line_no}: polarity has {} components, expected {}",
                    q.components(),
                    first.components()
                )));
            }
        }
        queries.push(q);
    }
    let individuals = individuals.ok_or_else(|| Error::Validation("stream is empty".into()))?;
    Ok(LoadedStream { individuals, queries })
}

pub fn load_stream(path: &Path, raw: bool) -> Result<LoadedStream> {
    read_stream(File::open(path)?, raw)
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupRow {
    individual_id: String,
    group_id: String,
}

/// CSV with header `individual_id,group_id`.
pub fn read_groups(r: impl Read) -> Result<Dataset> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    if headers.iter().collect::<Vec<_>>() != ["individual_id", "group_id"] {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header `individual_id,group_id`".into(),
        });
    }
    let mut pairs = Vec::new();
    for (k, row) in reader.deserialize::<GroupRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: k + 2,
            msg: e.to_string(),
        })?;
        pairs.push((row.individual_id, row.group_id));
    }
    Dataset::new(pairs)
}

pub fn load_groups(path: &Path) -> Result<Dataset> {
    read_groups(File::open(path)?)
}

pub fn write_groups(w: impl Write, dataset: &Dataset) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for (id, group) in dataset.pairs() {
        writer
            .serialize(GroupRow {
                individual_id: id.to_string(),
                group_id: group.to_string(),
            })
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_groups(path: &Path, dataset: &Dataset) -> Result<()> {
    write_groups(File::create(path)?, dataset)
}

/// Serialized [`RunResult`]; orderings are stored as identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub config: RerankConfig,
    pub offline: bool,
    pub individuals: Vec<String>,
    pub query_ids: Vec<String>,
    pub orderings: Vec<Vec<String>>,
    pub ndcg: Vec<f64>,
    pub fallback: Vec<bool>,
    pub trace: Vec<Option<f64>>,
    pub ledger: Ledger,
}

impl RunFile {
    pub fn new(result: &RunResult, individuals: &[String], stream: &[QueryEvent], offline: bool) -> Self {
        RunFile {
            config: result.config.clone(),
            offline,
            individuals: individuals.to_vec(),
            query_ids: stream.iter().map(|q| q.query_id.clone()).collect(),
            orderings: result
                .orderings
                .iter()
                .map(|r| r.order().iter().map(|&i| individuals[i].clone()).collect())
                .collect(),
            ndcg: result.ndcg.clone(),
            fallback: result.fallback.clone(),
            trace: result.trace.clone(),
            ledger: result.ledger.clone(),
        }
    }

    pub fn into_result(self) -> Result<RunResult> {
        let index: BTreeMap<&str, usize> = self.individuals.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let orderings = self
            .orderings
            .iter()
            .map(|ids| {
                let order = ids
                    .iter()
                    .map(|id| {
                        index
                            .get(id.as_str())
                            .copied()
                            .ok_or_else(|| Error::Validation(format!("unknown individual `{id}` in run file")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ranking::new(order)
            })
            .collect::<Result<Vec<_>>>()?;
        if self.ledger.len() != self.individuals.len() {
            return Err(Error::LengthMismatch {
                expected: self.individuals.len(),
                got: self.ledger.len(),
            });
        }
        Ok(RunResult {
            config: self.config,
            orderings,
            ndcg: self.ndcg,
            fallback: self.fallback,
            ledger: self.ledger,
            trace: self.trace,
        })
    }
}

pub fn save_run(path: &Path, run: &RunFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, run).map_err(|e| Error::Io(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn load_run(path: &Path) -> Result<RunFile> {
    serde_json::from_reader(BufReader::new(File::open(path)?)).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })
}

/// Rounds a finite number to [`REPORT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", REPORT_DIGITS - 1, x).parse().expect("formatted float parses")
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    *v = serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Report document: config echo, both metric panels, fairwashing deltas,
/// improvements over a baseline, per-query nDCG, fallbacks and trace.
/// Keys are sorted; numbers carry 12 significant digits.
pub fn report_json(report: &MetricsReport, run: &RunFile) -> Result<Value> {
    let mut doc = serde_json::Map::new();
    doc.insert("config".into(), to_value(&run.config)?);
    doc.insert("offline".into(), Value::Bool(run.offline));
    doc.insert("metrics".into(), to_value(report)?);
    doc.insert("ndcg".into(), to_value(&run.ndcg)?);
    doc.insert("query_ids".into(), to_value(&run.query_ids)?);
    doc.insert("fallback".into(), to_value(&run.fallback)?);
    doc.insert("trace".into(), to_value(&run.trace)?);
    let mut doc = Value::Object(doc);
    round_value(&mut doc);
    Ok(doc)
}

fn to_value<T: Serialize + ?Sized>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_report(mut w: impl Write, doc: &Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, doc).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Tune,
    Test,
}

/// Deterministic half split keyed on a salted SHA-256 of the query id.
pub fn split_of(query_id: &str, salt: &str) -> Split {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0u8]);
    h.update(query_id.as_bytes());
    if h.finalize()[0] & 1 == 0 {
        Split::Tune
    } else {
        Split::Test
    }
}

/// Splits a stream by query id, preserving order within each half.
pub fn split_stream(stream: &[QueryEvent], salt: &str) -> (Vec<QueryEvent>, Vec<QueryEvent>) {
    stream
        .iter()
        .cloned()
        .partition(|q| split_of(&q.query_id, salt) == Split::Tune)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = concat!(
        r#"{"query_id":"q1","t":1,"polarity":[1.0],"relevance":{"a":0.25,"b":0.75}}"#,
        "\n",
        r#"{"query_id":"q2","t":2,"polarity":[-1.0],"relevance":{"a":0.5,"b":0.5}}"#,
        "\n"
    );

    #[test]
    fn loads_two_queries() {
        let s = read_stream(TWO.as_bytes(), false).unwrap();
        assert_eq!(s.individuals, ["a", "b"]);
        assert_eq!(s.queries.len(), 2);
        assert_eq!(s.queries[0].relevance, vec![0.25, 0.75]);
        assert_eq!(s.queries[1].polarity, vec![-1.0]);
    }

    #[test]
    fn rejects_bad_streams() {
        let bad_order = TWO.replace(r#""t":2"#, r#""t":1"#);
        assert!(matches!(read_stream(bad_order.as_bytes(), false), Err(Error::Validation(_))));
        let missing = TWO.replace(r#""a":0.5,"b":0.5"#, r#""b":1.0"#);
        assert!(matches!(read_stream(missing.as_bytes(), false), Err(Error::Coverage(_))));
        let garbage = format!("{TWO}not json\n");
        assert!(matches!(read_stream(garbage.as_bytes(), false), Err(Error::Parse { line: 3, .. })));
        let unnormalized = TWO.replace("0.75", "0.80");
        assert!(matches!(read_stream(unnormalized.as_bytes(), false), Err(Error::Validation(_))));
        let s = read_stream(unnormalized.as_bytes(), true).unwrap();
        assert!((s.queries[0].relevance[0] - 0.25 / 1.05).abs() < 1e-15);
    }

    #[test]
    fn small_drift_is_renormalized() {
        let drift = TWO.replace("0.75", "0.7500005");
        let s = read_stream(drift.as_bytes(), false).unwrap();
        assert!((s.queries[0].relevance.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stream_round_trip() {
        let s = read_stream(TWO.as_bytes(), false).unwrap();
        let ds = s.single_group().unwrap();
        let mut out = Vec::new();
        write_stream(&mut out, &ds, &s.queries).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), TWO);
    }

    #[test]
    fn groups_round_trip_and_coverage() {
        let ds = Dataset::new([("a", "x"), ("b", "y")]).unwrap();
        let mut out = Vec::new();
        write_groups(&mut out, &ds).unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap(), "individual_id,group_id\na,x\nb,y\n");
        assert_eq!(read_groups(out.as_slice()).unwrap(), ds);
        assert!(matches!(read_groups("id,group\na,x\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            read_groups("individual_id,group_id\na,x\na,y\n".as_bytes()),
            Err(Error::Validation(_))
        ));
        let s = read_stream(TWO.as_bytes(), false).unwrap();
        let other = Dataset::new([("a", "x"), ("c", "y")]).unwrap();
        assert!(matches!(s.with_groups(&other), Err(Error::Coverage(_))));
    }

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(-2.0e-20 / 3.0), -6.66666666667e-21);
        assert_eq!(round_sig(0.0), 0.0);
    }

    #[test]
    fn split_is_stable() {
        let ids: Vec<String> = (0..200).map(|k| format!("q{k}")).collect();
        let tune = ids.iter().filter(|id| split_of(id, "s") == Split::Tune).count();
        assert!((60..140).contains(&tune));
        assert!(ids.iter().all(|id| split_of(id, "s") == split_of(id, "s")));
    }
}
