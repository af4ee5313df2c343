//! Simulation traces and their CSV serialization.
//!
//! A run emits two flat files: an epochs CSV
//! (`t,x_0..x_{n-1},u_0..u_{m-1}`) with one row per control epoch, and a
//! requests CSV
//! (`id,parent_id,qos_class,size,created_at,dispatched_at,completed_at,route,status`)
//! with one row per terminal (completed or dropped) request. Both are
//! byte-stable for a fixed (scenario, seed).

use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ident::{IdentEpoch, IdentError, IdentTrace};

#[derive(Debug, Error)]
pub enum TraceCsvError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Trace(#[from] IdentError),
}

/// One control epoch: sampled state and the control chosen for the next
/// period.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EpochSample {
    pub t: u64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Local,
    Cloud,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Route::Local => write!(f, "local"),
            Route::Cloud => write!(f, "cloud"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestStatus {
    Completed,
    Dropped,
}

impl fmt::Display for RequestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestStatus::Completed => write!(f, "completed"),
            RequestStatus::Dropped => write!(f, "dropped"),
        }
    }
}

/// Terminal record of one simulated request.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RequestRecord {
    pub id: u64,
    /// Set on timeout-spawned duplicates; refers to the original request.
    pub parent_id: Option<u64>,
    pub qos_class: String,
    pub size: f64,
    pub created_at: f64,
    /// When the request reached its node queue (after link traversal).
    pub dispatched_at: Option<f64>,
    pub completed_at: Option<f64>,
    pub route: Option<Route>,
    pub status: RequestStatus,
}

/// Request accounting at the end of a run; `generated` always equals
/// `completed + dropped + in_flight`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Conservation {
    pub generated: u64,
    pub completed: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

/// Everything a simulation run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub epoch_samples: Vec<EpochSample>,
    pub request_log: Vec<RequestRecord>,
    pub event_count: u64,
    pub conservation: Conservation,
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Write epoch samples with the `t,x_0..,u_0..` header.
pub fn write_epochs_csv<W: Write>(w: &mut W, samples: &[EpochSample]) -> io::Result<()> {
    assert!(!samples.is_empty(), "epoch samples must not be empty");
    let n = samples[0].x.len();
    let m = samples[0].u.len();
    let mut header = String::from("t");
    for i in 0..n {
        header.push_str(&format!(",x_{i}"));
    }
    for i in 0..m {
        header.push_str(&format!(",u_{i}"));
    }
    writeln!(w, "{header}")?;
    for s in samples {
        let mut line = s.t.to_string();
        for v in s.x.iter().chain(&s.u) {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Read an epochs CSV back into an identification trace; dimensions are
/// recovered from the header.
pub fn read_epochs_csv<R: BufRead>(r: R) -> Result<IdentTrace, TraceCsvError> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(TraceCsvError::Malformed {
        line: 1,
        message: "missing header".into(),
    })?;
    let header = header?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.first() != Some(&"t") {
        return Err(TraceCsvError::Malformed {
            line: 1,
            message: format!("expected first column `t`, got `{}`", cols.first().unwrap_or(&"")),
        });
    }
    let n = cols.iter().filter(|c| c.starts_with("x_")).count();
    let m = cols.iter().filter(|c| c.starts_with("u_")).count();
    if n == 0 || m == 0 || cols.len() != 1 + n + m {
        return Err(TraceCsvError::Malformed {
            line: 1,
            message: format!("header must be t,x_0..x_{{n-1}},u_0..u_{{m-1}}, got `{header}`"),
        });
    }
    let mut epochs = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 1 + n + m {
            return Err(TraceCsvError::Malformed {
                line: line_no,
                message: format!("expected {} fields, got {}", 1 + n + m, fields.len()),
            });
        }
        let t: i64 = fields[0].parse().map_err(|e| TraceCsvError::Malformed {
            line: line_no,
            message: format!("bad epoch index `{}`: {e}", fields[0]),
        })?;
        let parse_f64 = |s: &str| -> Result<f64, TraceCsvError> {
            s.parse().map_err(|e| TraceCsvError::Malformed {
                line: line_no,
                message: format!("bad number `{s}`: {e}"),
            })
        };
        let x = fields[1..1 + n].iter().map(|s| parse_f64(s)).collect::<Result<_, _>>()?;
        let u = fields[1 + n..].iter().map(|s| parse_f64(s)).collect::<Result<_, _>>()?;
        epochs.push(IdentEpoch { t, x, u });
    }
    Ok(IdentTrace::new(epochs)?)
}

pub const REQUESTS_CSV_HEADER: &str =
    "id,parent_id,qos_class,size,created_at,dispatched_at,completed_at,route,status";

/// Write terminal request records.
pub fn write_requests_csv<W: Write>(w: &mut W, records: &[RequestRecord]) -> io::Result<()> {
    writeln!(w, "{REQUESTS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.id,
            r.parent_id.map(|p| p.to_string()).unwrap_or_default(),
            r.qos_class,
            fmt_f64(r.size),
            fmt_f64(r.created_at),
            fmt_opt_f64(r.dispatched_at),
            fmt_opt_f64(r.completed_at),
            r.route.map(|x| x.to_string()).unwrap_or_default(),
            r.status,
        )?;
    }
    Ok(())
}

/// Read a requests CSV back into records (used by report recomputation).
pub fn read_requests_csv<R: BufRead>(r: R) -> Result<Vec<RequestRecord>, TraceCsvError> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(TraceCsvError::Malformed {
        line: 1,
        message: "missing header".into(),
    })?;
    let header = header?;
    if header.trim_end() != REQUESTS_CSV_HEADER {
        return Err(TraceCsvError::Malformed {
            line: 1,
            message: format!("unexpected header `{header}`"),
        });
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 9 {
            return Err(TraceCsvError::Malformed {
                line: line_no,
                message: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        let bad = |what: &str, detail: String| TraceCsvError::Malformed {
            line: line_no,
            message: format!("bad {what}: {detail}"),
        };
        let parse_opt_f64 = |s: &str, what: &str| -> Result<Option<f64>, TraceCsvError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| bad(what, format!("`{s}`: {e}")))
            }
        };
        records.push(RequestRecord {
            id: fields[0].parse().map_err(|e| bad("id", format!("`{}`: {e}", fields[0])))?,
            parent_id: if fields[1].is_empty() {
                None
            } else {
                Some(
                    fields[1]
                        .parse()
                        .map_err(|e| bad("parent_id", format!("`{}`: {e}", fields[1])))?,
                )
            },
            qos_class: fields[2].to_string(),
            size: fields[3].parse().map_err(|e| bad("size", format!("`{}`: {e}", fields[3])))?,
            created_at: fields[4]
                .parse()
                .map_err(|e| bad("created_at", format!("`{}`: {e}", fields[4])))?,
            dispatched_at: parse_opt_f64(fields[5], "dispatched_at")?,
            completed_at: parse_opt_f64(fields[6], "completed_at")?,
            route: match fields[7] {
                "" => None,
                "local" => Some(Route::Local),
                "cloud" => Some(Route::Cloud),
                other => return Err(bad("route", format!("`{other}`"))),
            },
            status: match fields[8] {
                "completed" => RequestStatus::Completed,
                "dropped" => RequestStatus::Dropped,
                other => return Err(bad("status", format!("`{other}`"))),
            },
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_epochs() -> Vec<EpochSample> {
        vec![
            EpochSample { t: 0, x: vec![0.0, 0.0], u: vec![0.5] },
            EpochSample { t: 1, x: vec![1.5, -0.25], u: vec![0.75] },
        ]
    }

    #[test]
    fn epochs_csv_roundtrip() {
        let mut buf = Vec::new();
        write_epochs_csv(&mut buf, &sample_epochs()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x_0,x_1,u_0\n"));
        let trace = read_epochs_csv(buf.as_slice()).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.epochs()[1].x, vec![1.5, -0.25]);
        assert_eq!(trace.epochs()[1].u, vec![0.75]);
    }

    #[test]
    fn epochs_csv_rejects_bad_header() {
        let err = read_epochs_csv("time,x_0,u_0\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("t"));
    }

    #[test]
    fn requests_csv_roundtrip() {
        let records = vec![
            RequestRecord {
                id: 0,
                parent_id: None,
                qos_class: "data".into(),
                size: 1.25,
                created_at: 0.5,
                dispatched_at: Some(0.6),
                completed_at: Some(1.1),
                route: Some(Route::Local),
                status: RequestStatus::Completed,
            },
            RequestRecord {
                id: 1,
                parent_id: Some(0),
                qos_class: "data".into(),
                size: 1.25,
                created_at: 2.5,
                dispatched_at: Some(2.6),
                completed_at: None,
                route: Some(Route::Cloud),
                status: RequestStatus::Dropped,
            },
        ];
        let mut buf = Vec::new();
        write_requests_csv(&mut buf, &records).unwrap();
        let back = read_requests_csv(buf.as_slice()).unwrap();
        assert_eq!(back, records);
    }
}
