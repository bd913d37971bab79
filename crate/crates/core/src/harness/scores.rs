//! Metric-agnostic score files: `#scores v1 metric=<name>[ refs=<label>]`
//! followed by `id<TAB>value` rows sorted by id.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::HarnessError;

const HEADER: &str = "#scores v1 metric=";

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFile {
    pub metric: String,
    /// How many references the metric used (`0`, `1`, `3-5`, ...), when known.
    pub refs: Option<String>,
    pub values: BTreeMap<String, f64>,
}

impl ScoreFile {
    pub fn new(metric: impl Into<String>, values: BTreeMap<String, f64>) -> Self {
        Self { metric: metric.into(), refs: None, values }
    }

    pub fn with_refs(mut self, refs: impl Into<String>) -> Self {
        self.refs = Some(refs.into());
        self
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        match &self.refs {
            Some(r) => writeln!(w, "{HEADER}{} refs={r}", self.metric)?,
            None => writeln!(w, "{HEADER}{}", self.metric)?,
        }
        for (id, v) in &self.values {
            writeln!(w, "{id}\t{v}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, HarnessError> {
        let err = |line: usize, message: String| HarnessError::Parse { line, message };
        let mut lines = r.lines();
        let header = lines.next().transpose()?.ok_or_else(|| err(1, "empty score file".into()))?;
        let rest = header.strip_prefix(HEADER).ok_or_else(|| err(1, format!("expected header `{HEADER}<name>`")))?;
        let mut parts = rest.split(' ');
        let metric = parts.next().filter(|m| !m.is_empty()).ok_or_else(|| err(1, "missing metric name".into()))?;
        let mut refs = None;
        for p in parts {
            match p.strip_prefix("refs=") {
                Some(r) if !r.is_empty() => refs = Some(r.to_string()),
                _ => return Err(err(1, format!("unexpected header field {p:?}"))),
            }
        }
        let mut values = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let (id, v) = line.split_once('\t').ok_or_else(|| err(lineno, "expected `id<TAB>value`".into()))?;
            let v: f64 = v.trim().parse().map_err(|_| err(lineno, format!("bad value {v:?}")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite value for {id:?}")));
            }
            if values.insert(id.to_string(), v).is_some() {
                return Err(err(lineno, format!("duplicate id {id:?}")));
            }
        }
        Ok(Self { metric: metric.to_string(), refs, values })
    }
}
