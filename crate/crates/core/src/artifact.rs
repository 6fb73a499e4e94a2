//! Flat `key=value` text artifacts for saving policies, reward models and
//! ensembles. One entry per line, keys sorted, `#` starts a comment line.
//! Real numbers are written with 17 significant digits so loads are exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nncore::{Head, Network, NetworkSpec};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifact {
    entries: BTreeMap<String, String>,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Artifact {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let value = value.to_string();
        debug_assert!(!value.contains('\n'));
        self.entries.insert(key.into(), value);
    }

    pub fn set_f64(&mut self, key: impl Into<String>, value: f64) {
        self.set(key, fmt_f64(value));
    }

    pub fn set_f64s(&mut self, key: impl Into<String>, values: &[f64]) {
        let s: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
        self.set(key, s.join(","));
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Artifact(format!("missing key `{key}`")))
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::Artifact(format!("cannot parse `{key}` value `{raw}`")))
    }

    pub fn get_f64s(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.get(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::Artifact(format!("bad number `{t}` under `{key}`")))
            })
            .collect()
    }

    pub fn get_usizes(&self, key: &str) -> Result<Vec<usize>> {
        let raw = self.get(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| Error::Artifact(format!("bad integer `{t}` under `{key}`")))
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Artifact(format!("line {}: expected key=value", lineno + 1)))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Artifact { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Store a network's architecture and parameters under `prefix`.
    pub fn put_network(&mut self, prefix: &str, net: &Network) {
        let spec = net.spec();
        self.set(format!("{prefix}input_dim"), spec.input_dim);
        let hidden: Vec<String> = spec.hidden_layers.iter().map(|w| w.to_string()).collect();
        self.set(format!("{prefix}hidden"), hidden.join(","));
        let head = match spec.head {
            Head::Linear { outputs } => format!("linear:{outputs}"),
            Head::Logit { outputs } => format!("logit:{outputs}"),
            Head::Mdn { components } => format!("mdn:{components}"),
        };
        self.set(format!("{prefix}head"), head);
        self.set(format!("{prefix}init_seed"), spec.seed);
        self.set(format!("{prefix}trained"), net.is_trained());
        self.set_f64s(format!("{prefix}params"), net.parameters());
    }

    pub fn take_network(&self, prefix: &str) -> Result<Network> {
        let head_raw = self.get(&format!("{prefix}head"))?;
        let (kind, n) = head_raw
            .split_once(':')
            .ok_or_else(|| Error::Artifact(format!("bad head `{head_raw}`")))?;
        let n: usize = n
            .parse()
            .map_err(|_| Error::Artifact(format!("bad head `{head_raw}`")))?;
        let head = match kind {
            "linear" => Head::Linear { outputs: n },
            "logit" => Head::Logit { outputs: n },
            "mdn" => Head::Mdn { components: n },
            _ => return Err(Error::Artifact(format!("unknown head `{kind}`"))),
        };
        let spec = NetworkSpec::new(
            self.get_parsed(&format!("{prefix}input_dim"))?,
            self.get_usizes(&format!("{prefix}hidden"))?,
            head,
            self.get_parsed(&format!("{prefix}init_seed"))?,
        )?;
        let mut net = Network::from_parameters(spec, self.get_f64s(&format!("{prefix}params"))?)?;
        net.mark_trained(self.get_parsed(&format!("{prefix}trained"))?);
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn reals_survive_text_round_trip(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..20)) {
            let mut a = Artifact::new();
            a.set_f64s("v", &vals);
            let back = Artifact::parse(&a.to_text()).unwrap();
            prop_assert_eq!(back.get_f64s("v").unwrap(), vals);
        }
    }

    #[test]
    fn network_round_trip_is_exact() {
        let spec = NetworkSpec::new(3, vec![4], Head::Mdn { components: 2 }, 17).unwrap();
        let net = Network::init(spec).unwrap();
        let mut a = Artifact::new();
        a.put_network("m.", &net);
        let back = Artifact::parse(&a.to_text()).unwrap().take_network("m.").unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(Artifact::parse("novalue").is_err());
        assert!(Artifact::parse("# comment\nk=v").is_ok());
    }
}
