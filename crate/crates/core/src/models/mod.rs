//! Scaler and classifiers with continuous genuine-oriented scores.

pub mod b64;
mod iforest;
mod kernel;
mod osvm;
mod scaler;
mod smo;
mod svm;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use iforest::{average_path_length, IforestParams, IsolationForestModel, IsolationTree};
pub use kernel::{gram, rbf, scale_gamma};
pub use osvm::{OneClassSvmModel, OsvmParams};
pub use scaler::Scaler;
pub use svm::{Machine, SvmModel, SvmParams};

use crate::{Error, Result};

pub const MODEL_FILE_VERSION: u32 = 1;

pub(crate) fn check_rows(rows: &[Vec<f64>]) -> Result<()> {
    let d = rows.first().map(Vec::len).ok_or_else(|| Error::invalid("no training rows"))?;
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("rows must share a non-zero width"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature values"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Svm,
    OneClassSvm,
    IsolationForest,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::OneClassSvm => "one_class_svm",
            ModelKind::IsolationForest => "isolation_forest",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        match s {
            "svm" => Ok(ModelKind::Svm),
            "one_class_svm" | "osvm" => Ok(ModelKind::OneClassSvm),
            "isolation_forest" | "iforest" => Ok(ModelKind::IsolationForest),
            other => Err(Error::invalid(format!("unknown model type {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub svm: SvmParams,
    pub osvm: OsvmParams,
    pub iforest: IforestParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    Svm(SvmModel),
    OneClassSvm(BTreeMap<String, OneClassSvmModel>),
    IsolationForest(BTreeMap<String, IsolationForestModel>),
}

/// A scaler and classifier trained on selected feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub seed: u64,
    pub params: ModelParams,
    pub features: Vec<String>,
    pub scaler: Scaler,
    pub classifier: Classifier,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    #[serde(rename = "type")]
    kind: ModelKind,
    version: u32,
    seed: u64,
    hyperparameters: serde_json::Value,
    payload: Payload,
}

#[derive(Serialize, Deserialize)]
struct Payload {
    features: Vec<String>,
    scaler: Scaler,
    model: Classifier,
}

impl TrainedModel {
    /// Fits the scaler on `rows`, then the classifier. One-class families
    /// get one model per user, trained on that user's rows only.
    pub fn fit<S: AsRef<str> + Sync>(
        kind: ModelKind,
        rows: &[Vec<f64>],
        users: &[S],
        features: Vec<String>,
        params: &ModelParams,
        seed: u64,
    ) -> Result<TrainedModel> {
        check_rows(rows)?;
        if users.len() != rows.len() {
            return Err(Error::invalid("user count does not match row count"));
        }
        let scaler = Scaler::fit(rows)?;
        let scaled = scaler.transform_rows(rows);
        let per_user = || {
            let mut m: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
            for (r, u) in scaled.iter().zip(users) {
                m.entry(u.as_ref().to_string()).or_default().push(r.clone());
            }
            m
        };
        let classifier = match kind {
            ModelKind::Svm => Classifier::Svm(SvmModel::fit(&scaled, users, &params.svm)?),
            ModelKind::OneClassSvm => Classifier::OneClassSvm(
                per_user()
                    .into_iter()
                    .map(|(u, r)| Ok((u, OneClassSvmModel::fit(&r, &params.osvm)?)))
                    .collect::<Result<_>>()?,
            ),
            ModelKind::IsolationForest => Classifier::IsolationForest(
                per_user()
                    .into_iter()
                    .map(|(u, r)| {
                        let s = crate::rng::derive_seed(seed, &[crate::rng::str_stream(&u)]);
                        Ok((u, IsolationForestModel::fit(&r, &params.iforest, s)?))
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(TrainedModel {
            seed,
            params: params.clone(),
            features,
            scaler,
            classifier,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.classifier {
            Classifier::Svm(_) => ModelKind::Svm,
            Classifier::OneClassSvm(_) => ModelKind::OneClassSvm,
            Classifier::IsolationForest(_) => ModelKind::IsolationForest,
        }
    }

    pub fn users(&self) -> Vec<String> {
        match &self.classifier {
            Classifier::Svm(m) => m.classes.clone(),
            Classifier::OneClassSvm(m) => m.keys().cloned().collect(),
            Classifier::IsolationForest(m) => m.keys().cloned().collect(),
        }
    }

    /// Genuine-oriented score of an unscaled row claiming to be `user`.
    pub fn score(&self, row: &[f64], user: &str) -> Result<f64> {
        if row.len() != self.features.len() {
            return Err(Error::invalid("row width does not match the model's features"));
        }
        let x = self.scaler.transform(row);
        let missing = || Error::invalid(format!("no model for user {user}"));
        match &self.classifier {
            Classifier::Svm(m) => m.score(&x, user),
            Classifier::OneClassSvm(m) => Ok(m.get(user).ok_or_else(missing)?.score(&x)),
            Classifier::IsolationForest(m) => Ok(m.get(user).ok_or_else(missing)?.score(&x)),
        }
    }

    /// Scores of an unscaled row against every enrolled user, in
    /// [`TrainedModel::users`] order.
    pub fn score_all(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.features.len() {
            return Err(Error::invalid("row width does not match the model's features"));
        }
        let x = self.scaler.transform(row);
        Ok(match &self.classifier {
            Classifier::Svm(m) => m.decision_values(&x),
            Classifier::OneClassSvm(m) => m.values().map(|o| o.score(&x)).collect(),
            Classifier::IsolationForest(m) => m.values().map(|f| f.score(&x)).collect(),
        })
    }

    fn hyperparameters(&self) -> serde_json::Value {
        match self.kind() {
            ModelKind::Svm => serde_json::to_value(&self.params.svm),
            ModelKind::OneClassSvm => serde_json::to_value(&self.params.osvm),
            ModelKind::IsolationForest => serde_json::to_value(&self.params.iforest),
        }
        .expect("parameters serialise")
    }

    pub fn to_json(&self) -> Result<String> {
        let env = Envelope {
            kind: self.kind(),
            version: MODEL_FILE_VERSION,
            seed: self.seed,
            hyperparameters: self.hyperparameters(),
            payload: Payload {
                features: self.features.clone(),
                scaler: self.scaler.clone(),
                model: self.classifier.clone(),
            },
        };
        Ok(serde_json::to_string_pretty(&env)?)
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let env: Envelope = serde_json::from_str(text)?;
        if env.version != MODEL_FILE_VERSION {
            return Err(Error::Model(format!("unsupported version {}", env.version)));
        }
        let mut params = ModelParams::default();
        let hp = env.hyperparameters;
        match env.kind {
            ModelKind::Svm => params.svm = serde_json::from_value(hp)?,
            ModelKind::OneClassSvm => params.osvm = serde_json::from_value(hp)?,
            ModelKind::IsolationForest => params.iforest = serde_json::from_value(hp)?,
        }
        let model = TrainedModel {
            seed: env.seed,
            params,
            features: env.payload.features,
            scaler: env.payload.scaler,
            classifier: env.payload.model,
        };
        if model.kind() != env.kind {
            return Err(Error::Model("type does not match payload".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        TrainedModel::from_json(&std::fs::read_to_string(path)?)
    }
}
