use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// One row of a run: a single numerical claim and whether it held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRecord {
    pub check_id: String,
    /// Name of the property the check exercises.
    pub anchor: String,
    pub n: Option<u32>,
    #[serde(with = "lossless")]
    pub value: f64,
    #[serde(with = "lossless")]
    pub bound: f64,
    #[serde(with = "lossless")]
    pub margin: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// `value ≤ bound`.
    pub fn at_most(check_id: impl Into<String>, anchor: &str, n: Option<u32>, value: f64, bound: f64) -> Self {
        Self {
            check_id: check_id.into(),
            anchor: anchor.into(),
            n,
            value,
            bound,
            margin: bound - value,
            pass: value <= bound,
        }
    }

    /// `value ≥ bound`.
    pub fn at_least(check_id: impl Into<String>, anchor: &str, n: Option<u32>, value: f64, bound: f64) -> Self {
        Self {
            check_id: check_id.into(),
            anchor: anchor.into(),
            n,
            value,
            bound,
            margin: value - bound,
            pass: value >= bound,
        }
    }

    /// A boolean outcome, recorded as `1` against a bound of `1`.
    pub fn holds(check_id: impl Into<String>, anchor: &str, n: Option<u32>, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Self::at_least(check_id, anchor, n, v, 1.0)
    }
}

/// Non-finite floats become the strings `"inf"`, `"-inf"` and `"NaN"`, so
/// every `f64` survives a JSON round trip.
mod lossless {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }
}

/// Grid sizes, seeds and volatility levels a run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub seed: u64,
    pub threads: usize,
    pub ladder: Vec<u32>,
    pub n_time: usize,
    pub n_space: usize,
    pub sigma_levels: Vec<f64>,
    pub tree_steps: usize,
    pub pde_space: usize,
    /// Declared growth constant of the modulus and the `max(L, 1)` used.
    pub declared_growth: f64,
    pub normalized_growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub command: String,
    pub problem: String,
    pub environment: Environment,
    pub checks: Vec<CheckRecord>,
    /// The full study output behind the checks.
    pub details: serde_json::Value,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String, ExperimentError> {
        serde_json::to_string_pretty(self).map_err(|e| ExperimentError::Report(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(s).map_err(|e| ExperimentError::Report(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        write_checks_csv(&self.checks)
    }
}

pub const CSV_HEADER: [&str; 7] = ["check_id", "anchor", "n", "value", "bound", "margin", "pass"];

fn fmt_float(v: f64) -> String {
    // 17 significant digits round-trip every f64
    format!("{v:.16e}")
}

pub fn write_checks_csv(checks: &[CheckRecord]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| ExperimentError::Report(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for c in checks {
        w.write_record([
            c.check_id.clone(),
            c.anchor.clone(),
            c.n.map(|n| n.to_string()).unwrap_or_default(),
            fmt_float(c.value),
            fmt_float(c.bound),
            fmt_float(c.margin),
            c.pass.to_string(),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ExperimentError::Report(e.to_string()))
}

pub fn read_checks_csv(s: &str) -> Result<Vec<CheckRecord>, ExperimentError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(s.as_bytes());
    let headers = r.headers().map_err(|e| ExperimentError::Report(e.to_string()))?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(ExperimentError::Report(format!("unexpected header {headers:?}")));
    }
    let float = |s: &str| s.parse::<f64>().map_err(|e| ExperimentError::Report(format!("bad float {s:?}: {e}")));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| ExperimentError::Report(e.to_string()))?;
        if rec.len() != CSV_HEADER.len() {
            return Err(ExperimentError::Report(format!("expected 7 fields, got {}", rec.len())));
        }
        let n = match &rec[2] {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|e| ExperimentError::Report(format!("bad n {s:?}: {e}")))?),
        };
        let pass = match &rec[6] {
            "true" => true,
            "false" => false,
            s => return Err(ExperimentError::Report(format!("bad pass flag {s:?}"))),
        };
        out.push(CheckRecord {
            check_id: rec[0].to_string(),
            anchor: rec[1].to_string(),
            n,
            value: float(&rec[3])?,
            bound: float(&rec[4])?,
            margin: float(&rec[5])?,
            pass,
        });
    }
    Ok(out)
}
