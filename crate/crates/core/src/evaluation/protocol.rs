//! Wire format between the engine and an external trainer: one JSON
//! document per line, UTF-8. See `PROTOCOL.md` for the normative description.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::complexity::InputShape;
use crate::metrics::MetricReport;
use crate::space::Genotype;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireBudget {
    pub max_epochs: u32,
    pub early_stopping_patience: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    #[serde(rename = "type")]
    pub kind: String,
    pub trial_id: u64,
    pub genotype: Genotype,
    pub input_shape: InputShape,
    pub budget: WireBudget,
    pub dataset: String,
    pub fold: u32,
    pub seed: u64,
}

impl EvaluateRequest {
    pub fn new(
        trial_id: u64,
        genotype: Genotype,
        input_shape: InputShape,
        budget: &super::EvaluationBudget,
        dataset: impl Into<String>,
    ) -> Self {
        Self {
            kind: "evaluate".into(),
            trial_id,
            genotype,
            input_shape,
            budget: WireBudget {
                max_epochs: budget.max_epochs,
                early_stopping_patience: budget.early_stopping_patience,
            },
            dataset: dataset.into(),
            fold: budget.fold,
            seed: budget.seed,
        }
    }

    /// The request as one line, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

pub fn hello_line() -> String {
    format!(r#"{{"type":"hello","protocol":{PROTOCOL_VERSION},"mode":"session"}}"#)
}

pub fn shutdown_line() -> &'static str {
    r#"{"type":"shutdown"}"#
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Ok {
        trial_id: u64,
        metrics: MetricReport,
        flops: Option<u64>,
        epochs_ran: u32,
    },
    Error {
        trial_id: u64,
        message: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct ProtocolError(pub String);

fn violation<T>(m: impl Into<String>) -> Result<T, ProtocolError> {
    Err(ProtocolError(m.into()))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, ProtocolError> {
    obj.get(key)
        .ok_or_else(|| ProtocolError(format!("missing field {key:?}")))
}

fn uint(obj: &Map<String, Value>, key: &str) -> Result<u64, ProtocolError> {
    field(obj, key)?
        .as_u64()
        .ok_or_else(|| ProtocolError(format!("{key:?} must be a non-negative integer")))
}

fn metric(obj: &Map<String, Value>, key: &str, percent: bool) -> Result<f64, ProtocolError> {
    let v = field(obj, key)?
        .as_f64()
        .ok_or_else(|| ProtocolError(format!("metric {key:?} must be a number")))?;
    let ok = if percent {
        (0.0..=100.0).contains(&v)
    } else {
        v.is_finite() && v >= 0.0
    };
    if !ok {
        return violation(format!("metric {key:?} = {v} out of range"));
    }
    Ok(v)
}

/// Parses a result line for `trial_id`. Unknown fields are ignored; anything
/// else that deviates from the protocol is an error.
pub fn parse_response(
    line: &str,
    trial_id: u64,
    max_epochs: u32,
) -> Result<Response, ProtocolError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| ProtocolError(format!("not JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return violation("response is not a JSON object");
    };
    if field(&obj, "type")?.as_str() != Some("result") {
        return violation("\"type\" must be \"result\"");
    }
    let id = uint(&obj, "trial_id")?;
    if id != trial_id {
        return violation(format!("response for trial {id}, expected {trial_id}"));
    }
    match field(&obj, "status")?.as_str() {
        Some("ok") => {
            let Value::Object(m) = field(&obj, "metrics")? else {
                return violation("\"metrics\" must be an object");
            };
            let metrics = MetricReport {
                cross_entropy: metric(m, "ce", false)?,
                accuracy: metric(m, "accuracy", true)?,
                precision_macro: metric(m, "precision_macro", true)?,
                recall_macro: metric(m, "recall_macro", true)?,
                f1_macro: metric(m, "f1_macro", true)?,
            };
            let flops =
                match obj.get("flops") {
                    None | Some(Value::Null) => None,
                    Some(v) => Some(v.as_u64().ok_or_else(|| {
                        ProtocolError("\"flops\" must be an integer or null".into())
                    })?),
                };
            let epochs = uint(&obj, "epochs_ran")?;
            if epochs > u64::from(max_epochs) {
                return violation(format!(
                    "epochs_ran {epochs} exceeds max_epochs {max_epochs}"
                ));
            }
            Ok(Response::Ok {
                trial_id,
                metrics,
                flops,
                epochs_ran: epochs as u32,
            })
        }
        Some("error") => {
            let message = field(&obj, "message")?
                .as_str()
                .ok_or_else(|| ProtocolError("\"message\" must be a string".into()))?;
            Ok(Response::Error {
                trial_id,
                message: message.to_owned(),
            })
        }
        _ => violation("\"status\" must be \"ok\" or \"error\""),
    }
}

/// `Some(true)` if the trainer accepted a session, `Some(false)` if it
/// answered the handshake but declined, `None` for anything else.
pub fn parse_hello(line: &str) -> Option<bool> {
    let v: Value = serde_json::from_str(line).ok()?;
    if v.get("type")?.as_str()? != "hello"
        || v.get("protocol")?.as_u64()? != u64::from(PROTOCOL_VERSION)
    {
        return None;
    }
    Some(v.get("mode")?.as_str()? == "session")
}
