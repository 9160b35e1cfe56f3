//! Line-delimited request traces.
//!
//! ```text
//! # feather-trace v1 seed=7
//! request_id,arrival_time,prefix,suffix_tokens,decode_tokens
//! 0,0.0125,s3x5000,100,200
//! 1,0.02,s0x1000+s4x1000,0,50
//! 2,0.5,=17 18 19,20,10
//! 3,0.75,-,2000,10
//! ```
//!
//! The prefix is `-` (none), `+`-joined segments `s<id>x<len>`, or `=`
//! followed by explicit space-separated token ids. Segment and suffix tokens
//! are derived from the seed in the header.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Prefix, RequestSpec, Segment, Workload, WorkloadError};
use crate::cht::RequestId;

pub const TRACE_HEADER: &str = "# feather-trace v1";
const COLUMNS: &str = "request_id,arrival_time,prefix,suffix_tokens,decode_tokens";

pub fn write_trace(w: &Workload, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER} seed={}", w.seed)?;
    writeln!(out, "{COLUMNS}")?;
    for r in &w.requests {
        let prefix = match &r.prefix {
            Prefix::Segments(s) if s.is_empty() => "-".to_string(),
            Prefix::Segments(s) => s.iter().map(|s| format!("s{}x{}", s.id, s.len)).collect::<Vec<_>>().join("+"),
            Prefix::Tokens(t) => format!("={}", t.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" ")),
        };
        writeln!(out, "{},{},{},{},{}", r.id, r.arrival, prefix, r.suffix_len, r.decode_len)?;
    }
    Ok(())
}

fn bad(line: usize, msg: impl Into<String>) -> WorkloadError {
    WorkloadError::Trace { line, msg: msg.into() }
}

fn parse_prefix(line: usize, field: &str) -> Result<Prefix, WorkloadError> {
    if field == "-" {
        return Ok(Prefix::Segments(vec![]));
    }
    if let Some(rest) = field.strip_prefix('=') {
        let tokens = rest
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(line, format!("bad token {t:?}"))))
            .collect::<Result<_, _>>()?;
        return Ok(Prefix::Tokens(tokens));
    }
    field
        .split('+')
        .map(|seg| {
            let (id, len) = seg
                .strip_prefix('s')
                .and_then(|s| s.split_once('x'))
                .ok_or_else(|| bad(line, format!("bad segment {seg:?}")))?;
            Ok(Segment {
                id: id.parse().map_err(|_| bad(line, format!("bad segment id {id:?}")))?,
                len: len.parse().map_err(|_| bad(line, format!("bad segment length {len:?}")))?,
            })
        })
        .collect::<Result<_, _>>()
        .map(Prefix::Segments)
}

pub fn read_trace(input: impl BufRead) -> Result<Workload, WorkloadError> {
    let mut seed = None;
    let mut requests: Vec<RequestSpec> = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let n = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if seed.is_none() {
            let rest = line.strip_prefix(TRACE_HEADER).ok_or_else(|| bad(n, format!("expected {TRACE_HEADER:?} header")))?;
            let rest = rest.trim();
            seed = Some(match rest.strip_prefix("seed=") {
                Some(s) => s.parse().map_err(|_| bad(n, "bad seed"))?,
                None if rest.is_empty() => 0,
                None => return Err(bad(n, format!("unsupported header {line:?}"))),
            });
            continue;
        }
        if line == COLUMNS || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(n, format!("expected 5 fields, got {}", f.len())));
        }
        let id: u64 = f[0].trim().parse().map_err(|_| bad(n, "bad request_id"))?;
        let arrival: f64 = f[1].trim().parse().map_err(|_| bad(n, "bad arrival_time"))?;
        if !(arrival.is_finite() && arrival >= 0.0) {
            return Err(bad(n, "arrival_time must be finite and >= 0"));
        }
        let decode_len: usize = f[4].trim().parse().map_err(|_| bad(n, "bad decode_tokens"))?;
        if decode_len == 0 {
            return Err(bad(n, "decode_tokens must be >= 1"));
        }
        if !ids.insert(id) {
            return Err(bad(n, format!("duplicate request_id {id}")));
        }
        requests.push(RequestSpec {
            id: RequestId(id),
            arrival,
            prefix: parse_prefix(n, f[2].trim())?,
            suffix_len: f[3].trim().parse().map_err(|_| bad(n, "bad suffix_tokens"))?,
            decode_len,
        });
    }
    let mut w = Workload { seed: seed.unwrap_or(0), requests };
    w.sort();
    Ok(w)
}

pub fn ingest_trace(path: &Path) -> Result<Workload, WorkloadError> {
    let f = File::open(path)
        .map_err(|e| WorkloadError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_trace(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        assert!(read_trace("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn parses_all_prefix_forms_and_sorts() {
        let text = "# feather-trace v1 seed=3\nrequest_id,arrival_time,prefix,suffix_tokens,decode_tokens\n\
                    1,0.5,=4 5 6,2,3\n0,0.25,s1x10+s2x5,0,1\n2,0.25,-,7,2\n";
        let w = read_trace(text.as_bytes()).unwrap();
        assert_eq!(w.seed, 3);
        let ids: Vec<u64> = w.requests.iter().map(|r| r.id.0).collect();
        assert_eq!(ids, vec![0, 2, 1]);
        assert_eq!(w.requests[0].group(), Some(2));
        assert_eq!(w.requests[2].prefix, Prefix::Tokens(vec![4, 5, 6]));
        assert_eq!(w.tokens(&w.requests[2]).len(), 5);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "# feather-trace v1\n0,0.1,s1x10,0,1\n1,abc,s1x10,0,1\n";
        match read_trace(text.as_bytes()) {
            Err(WorkloadError::Trace { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(read_trace("# feather-trace v2\n".as_bytes()).is_err());
        assert!(read_trace("# feather-trace v1\n0,0.1,q1,0,1\n".as_bytes()).is_err());
    }
}
