//! Line-oriented text format for warm-starting policy tables.
//!
//! ```text
//! # feather-policy v1
//! kind bandit
//! exploration 2
//! arm 3 0 2 add 1534.5 12
//! ```

use std::fmt::Write as _;

use super::{Action, ArmStats, BanditConfig, BanditPolicy, DiscretizedState, PolicyError, QConfig, QPolicy};
use crate::scalar::Scalar;

const HEADER: &str = "# feather-policy v1";

fn err(line: usize, msg: impl Into<String>) -> PolicyError {
    PolicyError::Parse { line, msg: msg.into() }
}

fn parse<T: std::str::FromStr>(line: usize, s: Option<&str>, what: &str) -> Result<T, PolicyError> {
    s.ok_or_else(|| err(line, format!("missing {what}")))?.parse().map_err(|_| err(line, format!("bad {what}")))
}

fn parse_state<'a>(line: usize, it: &mut impl Iterator<Item = &'a str>) -> Result<(DiscretizedState, Action), PolicyError> {
    let b = parse(line, it.next(), "b bin")?;
    let delta = parse(line, it.next(), "delta bin")?;
    let w = parse(line, it.next(), "w bin")?;
    let action = match it.next() {
        Some("add") => Action::Add,
        Some("stop") => Action::Stop,
        _ => return Err(err(line, "bad action")),
    };
    Ok((DiscretizedState { b, delta, w }, action))
}

/// Meaningful lines with 1-based numbers, after checking the header and kind.
fn body<'a>(text: &'a str, kind: &str) -> Result<Vec<(usize, &'a str)>, PolicyError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((n, other)) => return Err(err(n, format!("unsupported header {other:?}"))),
        None => return Err(err(1, "empty table")),
    }
    match lines.next() {
        Some((_, l)) if l == format!("kind {kind}") => {}
        Some((n, l)) => return Err(err(n, format!("expected kind {kind}, got {l:?}"))),
        None => return Err(err(2, "missing kind")),
    }
    Ok(lines.filter(|(_, l)| !l.starts_with('#')).collect())
}

impl<F: Scalar> BanditPolicy<F> {
    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\nkind bandit\nexploration {}\n", self.exploration);
        for (s, a, st) in self.arms() {
            let _ = writeln!(out, "arm {s} {a} {} {}", st.total_reward, st.visits);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PolicyError> {
        let mut p = Self::new(BanditConfig::default())?;
        for (n, line) in body(text, "bandit")? {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("exploration") => p.exploration = parse(n, it.next(), "exploration")?,
                Some("arm") => {
                    let (s, a) = parse_state(n, &mut it)?;
                    let total_reward = parse(n, it.next(), "reward")?;
                    let visits = parse(n, it.next(), "visits")?;
                    p.set_arm(s, a, ArmStats { total_reward, visits });
                }
                _ => return Err(err(n, format!("unknown entry {line:?}"))),
            }
        }
        Ok(p)
    }
}

impl<F: Scalar> QPolicy<F> {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "{HEADER}\nkind q\nalpha {}\ngamma {}\nepsilon {}\nepsilon_decay {}\nepsilon_min {}\nseed {}\n",
            c.alpha, c.gamma, self.epsilon, c.epsilon_decay, c.epsilon_min, c.seed
        );
        for (s, a, v) in self.values() {
            let _ = writeln!(out, "q {s} {a} {v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PolicyError> {
        let mut config = QConfig::default();
        let mut values = Vec::new();
        for (n, line) in body(text, "q")? {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("alpha") => config.alpha = parse(n, it.next(), "alpha")?,
                Some("gamma") => config.gamma = parse(n, it.next(), "gamma")?,
                Some("epsilon") => config.epsilon = parse(n, it.next(), "epsilon")?,
                Some("epsilon_decay") => config.epsilon_decay = parse(n, it.next(), "epsilon_decay")?,
                Some("epsilon_min") => config.epsilon_min = parse(n, it.next(), "epsilon_min")?,
                Some("seed") => config.seed = parse(n, it.next(), "seed")?,
                Some("q") => {
                    let (s, a) = parse_state(n, &mut it)?;
                    let v: F = parse(n, it.next(), "value")?;
                    values.push((s, a, v));
                }
                _ => return Err(err(n, format!("unknown entry {line:?}"))),
            }
        }
        let mut p = Self::new(config)?;
        for (s, a, v) in values {
            p.set_value(s, a, v);
        }
        Ok(p)
    }
}
