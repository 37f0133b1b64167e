//! WebSocket JSON messages exchanged with the console.

use std::collections::BTreeSet;

use livesense_core::pipeline::{BatchDiagnostics, Timings};
use livesense_core::simulator::Scene;
use livesense_core::vitals::{Presence, VitalsEstimate};
use livesense_core::{axes, BatchResult, Detection, SensingConfig, Track};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Rdm,
    Targets,
    Tracks,
    Vitals,
    Stats,
    CsiStats,
}

impl Channel {
    /// Channels a new connection receives before any `subscribe`.
    pub fn defaults() -> BTreeSet<Channel> {
        [Channel::Rdm, Channel::Targets, Channel::Tracks, Channel::Vitals, Channel::Stats]
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub range_m: Vec<f64>,
    pub velocity_mps: Vec<f64>,
}

impl Axes {
    pub fn of(config: &SensingConfig) -> Self {
        Self {
            range_m: axes::range_axis(config),
            velocity_mps: axes::velocity_axis(config),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Hello {
        config: SensingConfig,
        config_id: u64,
        axes: Axes,
        /// `sim`, `trace` or `udp`.
        source: String,
        channels: BTreeSet<Channel>,
    },
    Rdm {
        batch_seq: u64,
        config_id: u64,
        batch_timestamp: f64,
        range_axis: Vec<f64>,
        velocity_axis: Vec<f64>,
        mag_db: Vec<Vec<f64>>,
    },
    Targets {
        batch_seq: u64,
        config_id: u64,
        detections: Vec<Detection>,
    },
    Tracks {
        batch_seq: u64,
        config_id: u64,
        tracks: Vec<Track>,
    },
    Vitals {
        batch_seq: u64,
        config_id: u64,
        vitals: Option<VitalsEstimate>,
        presence: Presence,
    },
    Stats {
        batch_seq: u64,
        config_id: u64,
        timings: Timings,
        drop_count: u64,
        sampling_hz: f64,
        diagnostics: BatchDiagnostics,
    },
    CsiStats {
        batch_seq: u64,
        config_id: u64,
        seq: u32,
        magnitude_db: Vec<f64>,
        phase_rad: Vec<f64>,
    },
    Ack {
        request_id: Value,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        config_id: Option<u64>,
    },
    Error {
        request_id: Value,
        message: String,
    },
}

impl ServerMsg {
    pub fn rdm(r: &BatchResult) -> Self {
        ServerMsg::Rdm {
            batch_seq: r.batch_seq,
            config_id: r.config_id,
            batch_timestamp: r.map.batch_timestamp,
            range_axis: r.map.range_axis.clone(),
            velocity_axis: r.map.velocity_axis.clone(),
            mag_db: r.map.mag_db.clone(),
        }
    }

    pub fn targets(r: &BatchResult) -> Self {
        ServerMsg::Targets {
            batch_seq: r.batch_seq,
            config_id: r.config_id,
            detections: r.detections.clone(),
        }
    }

    pub fn tracks(r: &BatchResult) -> Self {
        ServerMsg::Tracks {
            batch_seq: r.batch_seq,
            config_id: r.config_id,
            tracks: r.tracks.clone(),
        }
    }

    pub fn vitals(r: &BatchResult) -> Self {
        ServerMsg::Vitals {
            batch_seq: r.batch_seq,
            config_id: r.config_id,
            vitals: r.vitals,
            presence: r.presence,
        }
    }

    pub fn stats(r: &BatchResult, drop_count: u64, sampling_hz: f64) -> Self {
        ServerMsg::Stats {
            batch_seq: r.batch_seq,
            config_id: r.config_id,
            timings: r.timings,
            drop_count,
            sampling_hz,
            diagnostics: r.diagnostics,
        }
    }

    pub fn csi_stats(r: &BatchResult) -> Self {
        ServerMsg::CsiStats {
            batch_seq: r.batch_seq,
            config_id: r.config_id,
            seq: r.csi.seq,
            magnitude_db: r.csi.magnitude_db.clone(),
            phase_rad: r.csi.phase_rad.clone(),
        }
    }

    pub fn error(request_id: Value, message: impl Into<String>) -> Self {
        ServerMsg::Error {
            request_id,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialise")
    }
}

/// A scene given either as a key/value document or as a JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSpec {
    Text(String),
    Json(Scene),
}

impl SceneSpec {
    pub fn into_scene(self) -> Result<Scene, String> {
        let scene = match self {
            SceneSpec::Text(s) => Scene::from_kv_str(&s).map_err(|e| e.to_string())?,
            SceneSpec::Json(s) => s,
        };
        scene.validate().map_err(|e| e.to_string())?;
        Ok(scene)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    SetConfig {
        request_id: Value,
        patch: Map<String, Value>,
    },
    SetMode {
        request_id: Value,
        mode: String,
    },
    SetScene {
        request_id: Value,
        scene: SceneSpec,
    },
    Subscribe {
        #[serde(default)]
        request_id: Value,
        channels: BTreeSet<Channel>,
    },
}

impl ClientMsg {
    pub fn request_id(&self) -> &Value {
        match self {
            ClientMsg::SetConfig { request_id, .. }
            | ClientMsg::SetMode { request_id, .. }
            | ClientMsg::SetScene { request_id, .. }
            | ClientMsg::Subscribe { request_id, .. } => request_id,
        }
    }
}

/// Best-effort `request_id` of a message that failed to parse.
pub fn salvage_request_id(text: &str) -> Value {
    serde_json::from_str::<Value>(text)
        .ok()
        .and_then(|v| v.get("request_id").cloned())
        .unwrap_or(Value::Null)
}

/// JSON patch object to `key = value` pairs. Arrays become comma lists.
pub fn patch_entries(patch: &Map<String, Value>) -> Result<Vec<(String, String)>, String> {
    patch
        .iter()
        .map(|(k, v)| Ok((k.clone(), scalar(k, v)?)))
        .collect()
}

fn scalar(key: &str, v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Array(items) => {
            let parts: Result<Vec<String>, String> = items.iter().map(|x| scalar(key, x)).collect();
            Ok(parts?.join(", "))
        }
        Value::Null | Value::Object(_) => Err(format!("{key}: expected a number, string, bool or list")),
    }
}
