//! Model checkpoints: parameters, optimizer moments, identifiers and the
//! configuration that produced them.

use std::path::Path;

use crate::data::IdIndex;
use crate::error::{Error, Result};
use crate::model::ModelOptions;
use crate::params::{ModelShape, ParameterSet, Tensor, Variant};
use crate::store::Container;
use crate::train::adam::{AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub variant: Variant,
    pub params: ParameterSet,
    pub optimizer: AdamState,
    pub tau: f64,
    pub history_cap: Option<usize>,
    pub users: IdIndex,
    pub catalog: IdIndex,
    /// Echo of the run configuration, `key = value` pairs.
    pub config: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn options(&self) -> ModelOptions {
        ModelOptions::new(self.variant, self.tau, self.history_cap)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        c.put_meta("kind", "model");
        c.put_meta("variant", self.variant);
        let s = self.params.shape();
        c.put_meta("num_topics", s.num_topics);
        c.put_meta("embed_dim", s.embed_dim);
        c.put_meta("hidden", s.hidden);
        c.put_meta("num_items", s.num_items);
        c.put_meta("num_users", s.num_users);
        c.put_meta("input_dim", s.input_dim);
        c.put_meta("tau", self.tau);
        c.put_meta(
            "history_cap",
            self.history_cap.map_or("none".to_string(), |n| n.to_string()),
        );
        let a = &self.optimizer.config;
        c.put_meta("adam_lr", a.lr);
        c.put_meta("adam_beta1", a.beta1);
        c.put_meta("adam_beta2", a.beta2);
        c.put_meta("adam_eps", a.eps);
        c.put_meta("adam_step", self.optimizer.step);
        for (k, v) in &self.config {
            c.put_meta(&format!("config.{k}"), v);
        }
        c.put_list("users", self.users.ids().to_vec());
        c.put_list("catalog", self.catalog.ids().to_vec());
        for spec in self.params.specs() {
            let r = spec.range();
            let name = spec.tensor.name();
            c.put_tensor(&name, spec.rows, spec.cols, self.params.flatten()[r.clone()].to_vec());
            c.put_tensor(
                &format!("adam_m.{name}"),
                spec.rows,
                spec.cols,
                self.optimizer.m[r.clone()].to_vec(),
            );
            c.put_tensor(
                &format!("adam_v.{name}"),
                spec.rows,
                spec.cols,
                self.optimizer.v[r].to_vec(),
            );
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if !matches!(c.meta("kind")?, "model" | "snapshot") {
            return Err(Error::Checkpoint("not a model checkpoint".into()));
        }
        let variant = Variant::parse(c.meta("variant")?)?;
        let shape = ModelShape {
            num_topics: c.meta_parse("num_topics")?,
            embed_dim: c.meta_parse("embed_dim")?,
            hidden: c.meta_parse("hidden")?,
            num_items: c.meta_parse("num_items")?,
            num_users: c.meta_parse("num_users")?,
            input_dim: c.meta_parse("input_dim")?,
        };
        shape.validate()?;
        let mut params = ParameterSet::zeros(shape);
        let mut optimizer = AdamState::new(
            AdamConfig {
                lr: c.meta_parse("adam_lr")?,
                beta1: c.meta_parse("adam_beta1")?,
                beta2: c.meta_parse("adam_beta2")?,
                eps: c.meta_parse("adam_eps")?,
            },
            params.len(),
        );
        optimizer.step = c.meta_parse("adam_step")?;
        let specs = params.specs().to_vec();
        for spec in &specs {
            let name = spec.tensor.name();
            let r = spec.range();
            let fetch = |n: &str| -> Result<&[f64]> {
                let t = c.tensor(n)?;
                if (t.rows, t.cols) != (spec.rows, spec.cols) {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{n}` is {}x{}, expected {}x{}",
                        t.rows, t.cols, spec.rows, spec.cols
                    )));
                }
                Ok(&t.data)
            };
            params.flatten_mut()[r.clone()].copy_from_slice(fetch(&name)?);
            optimizer.m[r.clone()].copy_from_slice(fetch(&format!("adam_m.{name}"))?);
            optimizer.v[r].copy_from_slice(fetch(&format!("adam_v.{name}"))?);
        }
        let history_cap = match c.meta("history_cap")? {
            "none" => None,
            n => Some(
                n.parse()
                    .map_err(|_| Error::Checkpoint("malformed history_cap".into()))?,
            ),
        };
        let users = IdIndex::from_ordered(c.list("users")?.to_vec())?;
        let catalog = IdIndex::from_ordered(c.list("catalog")?.to_vec())?;
        if users.len() != shape.num_users || catalog.len() != shape.num_items {
            return Err(Error::Checkpoint("id lists disagree with tensor shapes".into()));
        }
        let config = c
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok(Checkpoint {
            variant,
            params,
            optimizer,
            tau: c.meta_parse("tau")?,
            history_cap,
            users,
            catalog,
            config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}

/// Every tensor name a checkpoint stores for the parameters.
pub fn tensor_names() -> Vec<String> {
    Tensor::all().map(Tensor::name).collect()
}
