//! Plain-text parameter container.
//!
//! ```text
//! checkpoint v1
//! kind <kind>
//! meta <key> <value...>
//! param <name> <rows> <cols> <v_0> <v_1> ...
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle is bit-exact. Names and meta keys contain no whitespace.

use std::fmt::Write as _;
use std::path::Path;

use super::linalg::Mat;
use super::{ParamModel, StructuredDynamicsModel, StructuredRewardModel};
use crate::error::{Error, Result};

const HEADER: &str = "checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub params: Vec<(String, Mat)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            meta: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn with_param(mut self, name: &str, m: Mat) -> Self {
        self.params.push((name.to_string(), m));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn param(&self, name: &str) -> Result<&Mat> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| bad(format!("missing param {name}")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        writeln!(out, "kind {}", self.kind).unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}").unwrap();
        }
        for (name, m) in &self.params {
            write!(out, "param {name} {} {}", m.rows(), m.cols()).unwrap();
            for v in m.data() {
                write!(out, " {v:?}").unwrap();
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("missing `checkpoint v1` header"));
        }
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .ok_or_else(|| bad("missing kind line"))?;
        let mut ck = Checkpoint::new(kind);
        for line in lines {
            if line == "end" {
                return Ok(ck);
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("meta") => {
                    let key = parts.next().ok_or_else(|| bad("meta without key"))?;
                    let value = line.splitn(3, ' ').nth(2).unwrap_or("");
                    ck.meta.push((key.to_string(), value.to_string()));
                }
                Some("param") => {
                    let name = parts.next().ok_or_else(|| bad("param without name"))?;
                    let mut dim = || -> Result<usize> {
                        parts
                            .next()
                            .and_then(|d| d.parse().ok())
                            .ok_or_else(|| bad(format!("bad shape for {name}")))
                    };
                    let (rows, cols) = (dim()?, dim()?);
                    let values: Vec<f64> = parts
                        .map(|v| {
                            v.parse::<f64>()
                                .map_err(|_| bad(format!("bad value {v:?} in {name}")))
                        })
                        .collect::<Result<_>>()?;
                    let m = Mat::from_vec(rows, cols, values)
                        .map_err(|_| bad(format!("wrong value count for {name}")))?;
                    ck.params.push((name.to_string(), m));
                }
                _ => return Err(bad(format!("unrecognized line {line:?}"))),
            }
        }
        Err(bad("missing `end`"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(bad(format!("expected kind {kind}, found {}", self.kind)));
        }
        Ok(())
    }
}

fn load_named<M: ParamModel>(model: &mut M, ck: &Checkpoint) -> Result<()> {
    for (name, slot) in model.named_mut() {
        let m = ck.param(name)?;
        if (m.rows(), m.cols()) != (slot.rows(), slot.cols()) {
            return Err(bad(format!("shape mismatch for {name}")));
        }
        *slot = m.clone();
    }
    Ok(())
}

fn meta_parse<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T> {
    ck.meta(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(format!("missing or bad meta {key}")))
}

impl StructuredRewardModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mask: Vec<String> = self.mask.iter().map(|m| format!("{m:?}")).collect();
        let mut ck = Checkpoint::new("reward_model")
            .with_meta("state_dim", self.state_dim())
            .with_meta("latent_dim", self.latent_dim())
            .with_meta("reward_head", self.reward_head)
            .with_meta("kl_weight", format!("{:?}", self.kl_weight))
            .with_meta("mask", mask.join(","));
        for (name, m) in self.named() {
            ck = ck.with_param(name, m.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("reward_model")?;
        let mut m = Self::new(meta_parse(ck, "state_dim")?, meta_parse(ck, "latent_dim")?);
        m.reward_head = meta_parse(ck, "reward_head")?;
        m.kl_weight = meta_parse(ck, "kl_weight")?;
        let mask = ck
            .meta("mask")
            .unwrap_or("")
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| bad("bad mask")))
            .collect::<Result<Vec<f64>>>()?;
        m = m.with_mask(mask)?;
        load_named(&mut m, ck)?;
        Ok(m)
    }
}

impl StructuredDynamicsModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("dynamics_model")
            .with_meta("state_dim", self.state_dim())
            .with_meta("action_dim", self.action_dim())
            .with_meta("latent_dim", self.latent_dim())
            .with_meta("kl_weight", format!("{:?}", self.kl_weight));
        for (name, m) in self.named() {
            ck = ck.with_param(name, m.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("dynamics_model")?;
        let mut m = Self::new(
            meta_parse(ck, "state_dim")?,
            meta_parse(ck, "action_dim")?,
            meta_parse(ck, "latent_dim")?,
        );
        m.kl_weight = meta_parse(ck, "kl_weight")?;
        load_named(&mut m, ck)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn reward_model_round_trip_is_exact() {
        let mut rng = stream_rng(1, 1);
        let m = StructuredRewardModel::random(3, 2, &mut rng)
            .with_mask(vec![1.0, 1.0, 0.0])
            .unwrap();
        let text = m.to_checkpoint().to_text();
        let back =
            StructuredRewardModel::from_checkpoint(&Checkpoint::from_text(&text).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_checkpoint().to_text(), text);
    }

    #[test]
    fn dynamics_model_round_trip_is_exact() {
        let mut rng = stream_rng(1, 2);
        let m = StructuredDynamicsModel::random(2, 2, 4, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dyn.ckpt");
        m.to_checkpoint().save(&path).unwrap();
        let back =
            StructuredDynamicsModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Checkpoint::from_text("checkpoint v2\nkind x\nend\n").is_err());
        assert!(Checkpoint::from_text("checkpoint v1\nkind x\n").is_err());
        assert!(Checkpoint::from_text("checkpoint v1\nkind x\nparam a 2 2 1 2 3\nend\n").is_err());
        let ck = Checkpoint::from_text("checkpoint v1\nkind x\nend\n").unwrap();
        assert!(StructuredRewardModel::from_checkpoint(&ck).is_err());
    }
}
