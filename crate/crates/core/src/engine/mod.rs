//! Engine hub: uniform access to TTS, ASR and estimator engines.
//!
//! Engines are either built-in deterministic simulators or external adapter
//! processes (see [`adapter`]). All audio and transcriptions go through the
//! [`Store`] cache.

pub mod adapter;
pub mod sim;
pub mod wav;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use adapter::{AdapterProcess, AdapterRequest, AdapterResponse, LabeledText, RequestBody};
pub use sim::{sim_corrupt, AudioMeta, SimModel};

use crate::corpus::{normalize_text, CorpusEntry};
use crate::error::{Error, Result};
use crate::store::{sidecar_path, Artifact, CacheKey, Store};

/// Name of the noiseless simulated TTS available without declaration.
pub const BUILTIN_SIM_TTS: &str = "sim-tts";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Tts,
    Asr,
    Estimator,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Simulated(SimModel),
    External { exec: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineDescriptor {
    pub name: String,
    pub kind: EngineKind,
    pub backend: Backend,
    /// Time units charged per call under the virtual clock.
    pub virtual_cost: f64,
}

impl EngineDescriptor {
    pub fn simulated(name: &str, kind: EngineKind, model: SimModel, virtual_cost: f64) -> Self {
        EngineDescriptor {
            name: name.to_string(),
            kind,
            backend: Backend::Simulated(model),
            virtual_cost,
        }
    }

    pub fn external(name: &str, kind: EngineKind, exec: Vec<String>, virtual_cost: f64) -> Self {
        EngineDescriptor {
            name: name.to_string(),
            kind,
            backend: Backend::External { exec },
            virtual_cost,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::config("engines", "engine names must be non-empty"));
        }
        if !(self.virtual_cost >= 0.0 && self.virtual_cost.is_finite()) {
            return Err(Error::config(
                format!("engines.{}.virtual_cost", self.name),
                "must be a finite non-negative number",
            ));
        }
        match &self.backend {
            Backend::Simulated(m) => m.validate(&self.name),
            Backend::External { exec } if exec.is_empty() => Err(Error::config(
                format!("engines.{}.exec", self.name),
                "external engines need a command",
            )),
            Backend::External { .. } => Ok(()),
        }
    }
}

/// Declaration of an engine as written in `config.json` or an adapter manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    pub kind: EngineKind,
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimModel>,
    #[serde(default = "default_cost")]
    pub virtual_cost: f64,
}

fn default_cost() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Simulated,
    External,
}

impl EngineSpec {
    pub fn into_descriptor(self, name: &str) -> Result<EngineDescriptor> {
        let key = |f: &str| format!("engines.{name}.{f}");
        let backend = match (self.backend, self.exec, self.sim) {
            (BackendKind::Simulated, None, sim) => Backend::Simulated(sim.unwrap_or_default()),
            (BackendKind::External, Some(exec), None) => Backend::External { exec },
            (BackendKind::Simulated, Some(_), _) => {
                return Err(Error::config(key("exec"), "simulated engines take `sim`, not `exec`"))
            }
            (BackendKind::External, _, Some(_)) => {
                return Err(Error::config(key("sim"), "external engines take `exec`, not `sim`"))
            }
            (BackendKind::External, None, None) => {
                return Err(Error::config(key("exec"), "external engines need a command"))
            }
        };
        let d = EngineDescriptor {
            name: name.to_string(),
            kind: self.kind,
            backend,
            virtual_cost: self.virtual_cost,
        };
        d.validate()?;
        Ok(d)
    }
}

/// Adapter manifest file: `{"kind":…,"name":…,"command":[…],"notes":…}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterManifest {
    pub kind: EngineKind,
    pub name: String,
    pub command: Vec<String>,
    #[serde(default)]
    pub notes: String,
    #[serde(default = "default_cost")]
    pub virtual_cost: f64,
}

/// Loads every `*.json` manifest in `dir` as an external engine descriptor.
pub fn load_manifests(dir: &Path) -> Result<Vec<EngineDescriptor>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let m: AdapterManifest = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
                location: p.display().to_string(),
                message: e.to_string(),
            })?;
            let d = EngineDescriptor::external(&m.name, m.kind, m.command, m.virtual_cost);
            d.validate()?;
            Ok(d)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioRef {
    pub engine_name: String,
    pub text_index: usize,
    pub path: PathBuf,
    pub duration_s: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcription {
    pub asr_name: String,
    pub text_index: usize,
    pub raw: String,
    pub norm: String,
}

impl Transcription {
    pub fn new(asr_name: &str, text_index: usize, raw: &str) -> Self {
        Transcription {
            asr_name: asr_name.to_string(),
            text_index,
            raw: raw.to_string(),
            norm: normalize_text(raw),
        }
    }
}

/// Registry of engines for one run, owning any adapter processes.
pub struct EngineHub {
    engines: BTreeMap<String, EngineDescriptor>,
    adapters: BTreeMap<String, Mutex<Option<AdapterProcess>>>,
    timeout: Duration,
}

impl EngineHub {
    /// Builds a hub; names must be unique. `sim-tts` is added as a noiseless
    /// simulated TTS unless declared explicitly.
    pub fn new(descriptors: impl IntoIterator<Item = EngineDescriptor>, timeout: Duration) -> Result<Self> {
        let mut engines = BTreeMap::new();
        for d in descriptors {
            d.validate()?;
            if engines.contains_key(&d.name) {
                return Err(Error::config(
                    "engines",
                    format!("engine name `{}` is declared more than once", d.name),
                ));
            }
            engines.insert(d.name.clone(), d);
        }
        engines.entry(BUILTIN_SIM_TTS.to_string()).or_insert_with(|| {
            EngineDescriptor::simulated(BUILTIN_SIM_TTS, EngineKind::Tts, SimModel::default(), 1.0)
        });
        let adapters = engines
            .values()
            .filter(|d| matches!(d.backend, Backend::External { .. }))
            .map(|d| (d.name.clone(), Mutex::new(None)))
            .collect();
        Ok(EngineHub {
            engines,
            adapters,
            timeout,
        })
    }

    pub fn get(&self, name: &str) -> Result<&EngineDescriptor> {
        self.engines.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.engines.keys().map(String::as_str).collect();
            Error::config(
                "engines",
                format!("unknown engine `{name}` (known: {})", known.join(", ")),
            )
        })
    }

    /// Looks up `name` and checks that it is an engine of `kind`.
    pub fn expect(&self, name: &str, kind: EngineKind, key: &str) -> Result<&EngineDescriptor> {
        let d = self.get(name).map_err(|e| match e {
            Error::Config { message, .. } => Error::config(key, message),
            other => other,
        })?;
        if d.kind != kind {
            return Err(Error::config(
                key,
                format!("engine `{name}` is a {:?} engine, expected {kind:?}", d.kind),
            ));
        }
        Ok(d)
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &EngineDescriptor> {
        self.engines.values()
    }

    /// One request to an external engine, starting its process on first use.
    /// Transport failures drop the process so the next call starts afresh.
    pub fn adapter_call(&self, engine: &str, body: RequestBody) -> Result<AdapterResponse> {
        let d = self.get(engine)?;
        let Backend::External { exec } = &d.backend else {
            return Err(Error::Internal(format!("`{engine}` is not an external engine")));
        };
        let slot = self.adapters.get(engine).expect("every external engine has a slot");
        let mut guard = slot.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(AdapterProcess::spawn(engine, exec, d.kind, self.timeout)?);
        }
        let process = guard.as_mut().expect("spawned above");
        let result = process.call(body);
        if process.is_broken() {
            *guard = None;
        }
        result
    }

    /// Synthesizes audio for `entry`, writing it under the store's cache.
    pub fn tts_generate(&self, tts: &str, entry: &CorpusEntry, store: &Store, recompute: bool) -> Result<(AudioRef, bool)> {
        let d = self.expect(tts, EngineKind::Tts, "tts")?;
        let key = CacheKey::audio(tts, entry.index);
        let accept = |a: &Artifact| {
            a.sidecar
                .as_deref()
                .and_then(|s| serde_json::from_slice::<AudioMeta>(s).ok())
                .is_some_and(|m| m.text == entry.norm_text && m.valid == wav::inspect(&a.bytes).is_some())
        };
        let fetched = store.get_or_compute(&key, recompute, accept, |dest| match &d.backend {
            Backend::Simulated(model) => {
                let (bytes, meta) = sim::synthesize(model, tts, entry.index, &entry.norm_text);
                Ok(Artifact {
                    bytes,
                    sidecar: Some(serde_json::to_vec(&meta).expect("meta serializes")),
                })
            }
            Backend::External { .. } => self.external_tts(tts, entry, dest, store),
        })?;
        let duration = wav::inspect(&fetched.artifact.bytes);
        let audio = AudioRef {
            engine_name: tts.to_string(),
            text_index: entry.index,
            path: fetched.path,
            duration_s: duration.unwrap_or(0.0),
            valid: duration.is_some_and(|d| d > 0.0),
        };
        Ok((audio, !fetched.hit))
    }

    fn external_tts(&self, tts: &str, entry: &CorpusEntry, dest: &Path, store: &Store) -> Result<Artifact> {
        if store.root().is_none() {
            return Err(Error::config("output_dir", "external engines need an on-disk output directory"));
        }
        let mut scratch = dest.as_os_str().to_owned();
        scratch.push(".adapter.wav");
        let scratch = PathBuf::from(scratch);
        if let Some(dir) = scratch.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let reply = self.adapter_call(
            tts,
            RequestBody::Tts {
                text: entry.norm_text.clone(),
                out: scratch.display().to_string(),
            },
        )?;
        let produced = PathBuf::from(reply.audio.unwrap_or_else(|| scratch.display().to_string()));
        let bytes = std::fs::read(&produced).unwrap_or_default();
        let _ = std::fs::remove_file(&produced);
        let meta = AudioMeta {
            text: entry.norm_text.clone(),
            valid: wav::inspect(&bytes).is_some(),
        };
        Ok(Artifact {
            bytes,
            sidecar: Some(serde_json::to_vec(&meta).expect("meta serializes")),
        })
    }

    /// Transcribes `audio`. Invalid audio always yields an empty transcript.
    /// `cache` enables the transcription cache; `recompute` forces a miss.
    pub fn asr_recognize(&self, asr: &str, audio: &AudioRef, store: &Store, cache: bool, recompute: bool) -> Result<Transcription> {
        let d = self.expect(asr, EngineKind::Asr, "asrs")?;
        if !audio.valid {
            return Ok(Transcription::new(asr, audio.text_index, ""));
        }
        let produce = |_: &Path| -> Result<Artifact> {
            let raw = match &d.backend {
                Backend::Simulated(model) => {
                    let meta: AudioMeta = serde_json::from_slice(&store.read(&sidecar_path(&audio.path))?)
                        .map_err(|e| Error::Parse {
                            location: sidecar_path(&audio.path).display().to_string(),
                            message: e.to_string(),
                        })?;
                    sim::recognize(model, asr, audio.text_index, &meta.text)
                }
                Backend::External { .. } => {
                    let reply = self.adapter_call(
                        asr,
                        RequestBody::Asr {
                            audio: audio.path.display().to_string(),
                        },
                    )?;
                    reply.text.ok_or_else(|| {
                        Error::engine(asr, "?", "asr reply carried no `text` field")
                    })?
                }
            };
            Ok(Artifact {
                bytes: raw.into_bytes(),
                sidecar: None,
            })
        };
        let raw = if cache {
            let key = CacheKey::transcription(asr, &audio.engine_name, audio.text_index);
            let fetched = store.get_or_compute(&key, recompute, |a| std::str::from_utf8(&a.bytes).is_ok(), produce)?;
            String::from_utf8(fetched.artifact.bytes).expect("accepted as UTF-8")
        } else {
            String::from_utf8(produce(Path::new(""))?.bytes).expect("built from a String")
        };
        Ok(Transcription::new(asr, audio.text_index, &raw))
    }
}
