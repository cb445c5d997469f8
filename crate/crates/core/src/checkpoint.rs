//! Model and trainer snapshots.
//!
//! ```text
//! TSN1
//! header_bytes=<n>
//! <n bytes of text: [config] lines, [params] manifest, [state] lines>
//! parameter tensors, then (if training state is present) first and second
//! Adam moments, all in the tensor file format
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Trainer};
use crate::tensor::{read_tensor_from, write_tensor_to, DType, ParamId, Tensor};

const MAGIC: &str = "TSN1";

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        detail: detail.into(),
    }
}

/// Optimiser and schedule state needed to resume training exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingState {
    pub epoch: usize,
    pub adam_step: u64,
    pub lr: f64,
    pub best_metric: Option<f64>,
    pub epochs_since_improvement: usize,
    pub adam_m: Vec<Tensor>,
    pub adam_v: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<(String, Tensor)>,
    pub training: Option<TrainingState>,
}

fn values(store_params: &[(String, Tensor)]) -> Vec<(String, Tensor)> {
    store_params
        .iter()
        .map(|(n, t)| {
            (
                n.clone(),
                Tensor::new(t.shape(), t.data().to_vec()).expect("valid tensor"),
            )
        })
        .collect()
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        let params: Vec<(String, Tensor)> = model
            .params()
            .iter()
            .map(|(_, n, t)| (n.to_string(), t.clone()))
            .collect();
        Self {
            config: model.config().clone(),
            params: values(&params),
            training: None,
        }
    }

    pub fn from_trainer(trainer: &Trainer) -> Self {
        let mut ck = Self::from_model(&trainer.model);
        let (m, v, t) = trainer.adam.state();
        let shaped = |moments: &[Vec<f64>]| -> Vec<Tensor> {
            moments
                .iter()
                .zip(&ck.params)
                .map(|(m, (_, p))| {
                    Tensor::new(p.shape(), m.clone()).expect("moment matches parameter")
                })
                .collect()
        };
        ck.training = Some(TrainingState {
            epoch: trainer.epoch,
            adam_step: t,
            lr: trainer.adam.lr(),
            best_metric: trainer.scheduler.best(),
            epochs_since_improvement: trainer.scheduler.epochs_since_improvement(),
            adam_m: shaped(m),
            adam_v: shaped(v),
        });
        ck
    }

    /// Rebuilds the model; parameter names and shapes must match the config.
    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::new(self.config.clone())?;
        let store = model.params_mut();
        if store.len() != self.params.len() {
            return Err(bad(format!(
                "{} parameters stored, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for (i, (name, t)) in self.params.iter().enumerate() {
            let id = ParamId(i);
            if store.name(id) != name {
                return Err(bad(format!(
                    "parameter {i} is {name}, model expects {}",
                    store.name(id)
                )));
            }
            store.set(id, t.clone())?;
        }
        Ok(model)
    }

    /// Rebuilds the trainer; without stored training state it starts fresh.
    pub fn to_trainer(&self) -> Result<Trainer> {
        let mut trainer = Trainer::new(self.to_model()?);
        if let Some(s) = &self.training {
            let raw = |ts: &[Tensor]| ts.iter().map(|t| t.data().to_vec()).collect::<Vec<_>>();
            trainer
                .adam
                .restore(raw(&s.adam_m), raw(&s.adam_v), s.adam_step)?;
            trainer.adam.set_lr(s.lr);
            trainer
                .scheduler
                .restore(s.best_metric, s.epochs_since_improvement);
            trainer.epoch = s.epoch;
        }
        Ok(trainer)
    }

    fn header(&self) -> String {
        let mut h = String::from("[config]\n");
        h.push_str(&self.config.to_text());
        h.push_str("[params]\n");
        for (name, t) in &self.params {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            h.push_str(&format!("{name} {}\n", dims.join("x")));
        }
        if let Some(s) = &self.training {
            let mut kv = KeyValues::new();
            kv.set("epoch", s.epoch);
            kv.set("adam_step", s.adam_step);
            kv.set("lr", s.lr);
            kv.set(
                "best_metric",
                s.best_metric
                    .map_or_else(|| "none".to_string(), |b| b.to_string()),
            );
            kv.set("epochs_since_improvement", s.epochs_since_improvement);
            h.push_str("[state]\n");
            h.push_str(&kv.to_text());
        }
        h
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = self.header();
        write!(w, "{MAGIC}\nheader_bytes={}\n{header}", header.len())?;
        for (_, t) in &self.params {
            write_tensor_to(w, t, DType::F64)?;
        }
        if let Some(s) = &self.training {
            for t in s.adam_m.iter().chain(&s.adam_v) {
                write_tensor_to(w, t, DType::F64)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut line = Vec::new();
        let mut read_line = |r: &mut R| -> Result<String> {
            line.clear();
            let mut b = [0u8; 1];
            loop {
                r.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
                if b[0] == b'\n' {
                    break;
                }
                line.push(b[0]);
                if line.len() > 64 {
                    return Err(bad("header line too long"));
                }
            }
            String::from_utf8(line.clone()).map_err(|_| bad("header is not UTF-8"))
        };
        if read_line(r)? != MAGIC {
            return Err(bad("missing TSN1 magic"));
        }
        let n: usize = read_line(r)?
            .strip_prefix("header_bytes=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing header length"))?;
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf)
            .map_err(|_| bad("truncated header"))?;
        let text = String::from_utf8(buf).map_err(|_| bad("header is not UTF-8"))?;

        let mut sections: Vec<(&str, String)> = Vec::new();
        for l in text.lines() {
            if l.starts_with('[') && l.ends_with(']') {
                sections.push((&l[1..l.len() - 1], String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push_str(l);
                body.push('\n');
            } else {
                return Err(bad("text before first section"));
            }
        }
        let section = |name: &str| {
            sections
                .iter()
                .find(|(s, _)| *s == name)
                .map(|(_, b)| b.as_str())
        };
        let config = ModelConfig::from_text(section("config").ok_or_else(|| bad("no [config]"))?)?;
        let manifest: Vec<(String, Vec<usize>)> = section("params")
            .ok_or_else(|| bad("no [params]"))?
            .lines()
            .map(|l| {
                let (name, dims) = l.rsplit_once(' ').ok_or_else(|| bad(l))?;
                let dims = dims
                    .split('x')
                    .map(|d| d.parse().map_err(|_| bad(l)))
                    .collect::<Result<Vec<usize>>>()?;
                Ok((name.to_string(), dims))
            })
            .collect::<Result<_>>()?;
        let read_all = |r: &mut R| -> Result<Vec<Tensor>> {
            manifest
                .iter()
                .map(|(name, dims)| {
                    let t = read_tensor_from(r)?;
                    if t.shape() != dims.as_slice() {
                        return Err(bad(format!(
                            "{name}: manifest {dims:?}, data {:?}",
                            t.shape()
                        )));
                    }
                    Ok(t)
                })
                .collect()
        };
        let tensors = read_all(r)?;
        let params = manifest
            .iter()
            .map(|(n, _)| n.clone())
            .zip(tensors)
            .collect();
        let training = match section("state") {
            None => None,
            Some(body) => {
                let kv = KeyValues::parse(body)?;
                let mut s = TrainingState {
                    epoch: 0,
                    adam_step: 0,
                    lr: 0.0,
                    best_metric: None,
                    epochs_since_improvement: 0,
                    adam_m: Vec::new(),
                    adam_v: Vec::new(),
                };
                kv.read("epoch", &mut s.epoch)?;
                kv.read("adam_step", &mut s.adam_step)?;
                kv.read("lr", &mut s.lr)?;
                kv.read("epochs_since_improvement", &mut s.epochs_since_improvement)?;
                s.best_metric = match kv.get("best_metric") {
                    None | Some("none") => None,
                    Some(v) => Some(v.parse().map_err(|_| bad(format!("best_metric={v}")))?),
                };
                s.adam_m = read_all(r)?;
                s.adam_v = read_all(r)?;
                Some(s)
            }
        };
        Ok(Self {
            config,
            params,
            training,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
