//! Persistence: the per-engine artifact cache and the `cases.jsonl` log.
//!
//! Cache layout under the output directory:
//!
//! ```text
//! cache/<tts>/audio/<index>.wav              (+ <index>.wav.meta.json)
//! cache/<asr>/transcription/<tts>/<index>.txt
//! runs/run-<unix ms>/{cases.jsonl, report.json, report.csv}
//! ```
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, CorpusEntry};
use crate::engine::{AudioRef, Transcription};
use crate::error::{Error, Result};
use crate::oracle::{CaseRecord, Outcome};

pub const CASES_FILE: &str = "cases.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Audio,
    Transcription,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    /// Engine name owning the artifact.
    pub namespace: String,
    pub text_index: usize,
    pub stage: Stage,
    /// For transcriptions: the TTS whose audio was transcribed.
    pub source: Option<String>,
}

impl CacheKey {
    pub fn audio(tts: &str, text_index: usize) -> Self {
        CacheKey {
            namespace: tts.to_string(),
            text_index,
            stage: Stage::Audio,
            source: None,
        }
    }

    pub fn transcription(asr: &str, tts: &str, text_index: usize) -> Self {
        CacheKey {
            namespace: asr.to_string(),
            text_index,
            stage: Stage::Transcription,
            source: Some(tts.to_string()),
        }
    }

    /// Path relative to the output directory.
    pub fn relative_path(&self) -> PathBuf {
        let mut p = PathBuf::from("cache");
        p.push(&self.namespace);
        match self.stage {
            Stage::Audio => p.push("audio"),
            Stage::Transcription => p.push("transcription"),
        }
        if let Some(src) = &self.source {
            p.push(src);
        }
        let ext = match self.stage {
            Stage::Audio => "wav",
            Stage::Transcription => "txt",
        };
        p.push(format!("{}.{ext}", self.text_index));
        p
    }
}

/// Cached bytes plus an optional `<path>.meta.json` sidecar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub bytes: Vec<u8>,
    pub sidecar: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct Fetched {
    pub artifact: Artifact,
    pub path: PathBuf,
    pub hit: bool,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

enum Backend {
    Disk(PathBuf),
    Memory(Mutex<HashMap<PathBuf, Vec<u8>>>),
}

/// Artifact store, either rooted at an output directory or held in memory.
pub struct Store {
    backend: Backend,
}

impl Store {
    pub fn disk(output_dir: impl Into<PathBuf>) -> Self {
        Store {
            backend: Backend::Disk(output_dir.into()),
        }
    }

    pub fn memory() -> Self {
        Store {
            backend: Backend::Memory(Mutex::new(HashMap::new())),
        }
    }

    pub fn root(&self) -> Option<&Path> {
        match &self.backend {
            Backend::Disk(root) => Some(root),
            Backend::Memory(_) => None,
        }
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        match &self.backend {
            Backend::Disk(root) => root.join(key.relative_path()),
            Backend::Memory(_) => key.relative_path(),
        }
    }

    pub fn read(&self, path: &Path) -> Result<Vec<u8>> {
        match &self.backend {
            Backend::Disk(_) => fs::read(path).map_err(|e| Error::io(path, e)),
            Backend::Memory(map) => map
                .lock()
                .expect("store lock")
                .get(path)
                .cloned()
                .ok_or_else(|| {
                    Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "not in memory store"))
                }),
        }
    }

    pub fn write(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        match &self.backend {
            Backend::Disk(_) => write_atomic(path, bytes),
            Backend::Memory(map) => {
                map.lock().expect("store lock").insert(path.to_path_buf(), bytes.to_vec());
                Ok(())
            }
        }
    }

    fn load(&self, path: &Path, with_sidecar: bool) -> Option<Artifact> {
        let bytes = self.read(path).ok()?;
        let sidecar = if with_sidecar {
            Some(self.read(&sidecar_path(path)).ok()?)
        } else {
            None
        };
        Some(Artifact { bytes, sidecar })
    }

    /// Returns the cached artifact for `key` when `recompute` is false and a
    /// stored copy exists that `accept` approves; otherwise runs `producer`,
    /// persists its output and returns it. Rejected or unreadable entries are
    /// logged and treated as misses.
    pub fn get_or_compute<A, P>(&self, key: &CacheKey, recompute: bool, accept: A, producer: P) -> Result<Fetched>
    where
        A: Fn(&Artifact) -> bool,
        P: FnOnce(&Path) -> Result<Artifact>,
    {
        let path = self.path_for(key);
        let with_sidecar = key.stage == Stage::Audio;
        if !recompute {
            match self.load(&path, with_sidecar) {
                Some(artifact) if accept(&artifact) => {
                    return Ok(Fetched {
                        artifact,
                        path,
                        hit: true,
                    })
                }
                Some(_) => log::warn!("cache entry {} is stale or corrupt; recomputing", path.display()),
                None => {}
            }
        }
        let artifact = producer(&path)?;
        if let Some(side) = &artifact.sidecar {
            self.write(&sidecar_path(&path), side)?;
        }
        self.write(&path, &artifact.bytes)?;
        Ok(Fetched {
            artifact,
            path,
            hit: false,
        })
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp_name = path.file_name().unwrap_or_default().to_owned();
    tmp_name.push(format!(
        ".tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Creates `<output_dir>/runs/run-<unix ms>` (suffixed if it already exists).
pub fn create_run_dir(output_dir: &Path) -> Result<PathBuf> {
    let runs = output_dir.join("runs");
    fs::create_dir_all(&runs).map_err(|e| Error::io(&runs, e))?;
    let millis = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    for n in 0.. {
        let name = if n == 0 {
            format!("run-{millis}")
        } else {
            format!("run-{millis}-{n}")
        };
        let dir = runs.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseLine {
    index: usize,
    text: String,
    audio: AudioLine,
    transcriptions: BTreeMap<String, String>,
    outcomes: BTreeMap<String, Outcome>,
    iteration: u32,
    clock: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AudioLine {
    engine: String,
    path: PathBuf,
    valid: bool,
    duration_s: f64,
}

impl From<&CaseRecord> for CaseLine {
    fn from(r: &CaseRecord) -> Self {
        CaseLine {
            index: r.entry.index,
            text: r.entry.raw_text.clone(),
            audio: AudioLine {
                engine: r.audio.engine_name.clone(),
                path: r.audio.path.clone(),
                valid: r.audio.valid,
                duration_s: r.audio.duration_s,
            },
            transcriptions: r
                .transcriptions
                .iter()
                .map(|(k, t)| (k.clone(), t.raw.clone()))
                .collect(),
            outcomes: r.outcomes.clone(),
            iteration: r.iteration,
            clock: r.clock_time,
        }
    }
}

impl From<CaseLine> for CaseRecord {
    fn from(l: CaseLine) -> Self {
        let index = l.index;
        CaseRecord {
            entry: CorpusEntry {
                index,
                norm_text: normalize_text(&l.text),
                raw_text: l.text,
            },
            audio: AudioRef {
                engine_name: l.audio.engine,
                text_index: index,
                path: l.audio.path,
                duration_s: l.audio.duration_s,
                valid: l.audio.valid,
            },
            transcriptions: l
                .transcriptions
                .into_iter()
                .map(|(name, raw)| {
                    let t = Transcription::new(&name, index, &raw);
                    (name, t)
                })
                .collect(),
            outcomes: l.outcomes,
            iteration: l.iteration,
            clock_time: l.clock,
        }
    }
}

pub fn case_to_json(record: &CaseRecord) -> String {
    serde_json::to_string(&CaseLine::from(record)).expect("case records serialize")
}

pub fn case_from_json(line: &str) -> std::result::Result<CaseRecord, String> {
    let parsed: CaseLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    Ok(parsed.into())
}

/// Append-only writer for `cases.jsonl`.
pub struct CaseWriter {
    path: PathBuf,
    file: File,
}

impl CaseWriter {
    pub fn open(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(CASES_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(CaseWriter { path, file })
    }

    pub fn append_case(&mut self, record: &CaseRecord) -> Result<()> {
        let mut line = case_to_json(record);
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Parses and validates every record in `<run_dir>/cases.jsonl`.
pub fn load_cases(run_dir: &Path) -> Result<Vec<CaseRecord>> {
    let path = run_dir.join(CASES_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let location = format!("{}:{}", path.display(), n + 1);
        let record = case_from_json(&line).map_err(|message| Error::Parse {
            location: location.clone(),
            message,
        })?;
        record
            .validate()
            .map_err(|e| Error::Validation(format!("{location}: {e}")))?;
        out.push(record);
    }
    Ok(out)
}
