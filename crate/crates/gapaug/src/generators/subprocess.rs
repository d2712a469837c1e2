//! Subprocess generator adapter: the bridge for external (e.g. neural)
//! generators. Spawns a configured command per request, writes a JSON
//! request to its stdin and reads JSON windows from its stdout.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dataset::TimeWindow;
use crate::error::{Error, Result};
use crate::generators::{check_pool, generated_window, Generator};
use crate::stats::PairingMode;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

pub struct SubprocessGenerator {
    pub id: String,
    /// Command and arguments to spawn per request.
    pub command: Vec<String>,
    pub pairing: PairingMode,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct GenRequest<'a> {
    class_id: usize,
    count: usize,
    #[serde(rename = "T")]
    steps: usize,
    #[serde(rename = "F")]
    features: usize,
    seed: u64,
    real_windows: Vec<RequestWindow<'a>>,
}

#[derive(Serialize)]
struct RequestWindow<'a> {
    values: Vec<&'a [f64]>,
    label: usize,
}

#[derive(Deserialize)]
struct GenResponse {
    windows: Vec<ResponseWindow>,
}

#[derive(Deserialize)]
struct ResponseWindow {
    /// T rows of F values.
    values: Vec<Vec<f64>>,
    #[serde(default)]
    source_index: Option<usize>,
}

/// Run a child process to completion with a wall-clock timeout, feeding it
/// stdin and capturing stdout.
pub(crate) fn run_with_timeout(
    command: &[String],
    input: &[u8],
    timeout: Duration,
) -> Result<Vec<u8>> {
    if command.is_empty() {
        return Err(Error::Subprocess("empty command".into()));
    }
    let mut child = Command::new(&command[0])
        .args(&command[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Subprocess(format!("spawn '{}': {e}", command[0])))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = input.to_vec();
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(&input);
        // dropping stdin closes the pipe
    });

    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });

    let deadline = std::time::Instant::now() + timeout;
    let status = loop {
        match child.try_wait().map_err(|e| Error::Subprocess(e.to_string()))? {
            Some(status) => break status,
            None => {
                if std::time::Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::Subprocess(format!(
                        "'{}' timed out after {:?}",
                        command[0], timeout
                    )));
                }
                std::thread::sleep(Duration::from_millis(10));
            }
        }
    };
    writer.join().ok();
    let output = reader.join().unwrap_or_default();
    if !status.success() {
        let mut err = String::new();
        if let Some(mut stderr) = child.stderr.take() {
            let _ = stderr.read_to_string(&mut err);
        }
        return Err(Error::Subprocess(format!(
            "'{}' exited with {status}: {}",
            command[0],
            err.trim()
        )));
    }
    Ok(output)
}

impl Generator for SubprocessGenerator {
    fn id(&self) -> &str {
        &self.id
    }

    fn pairing_mode(&self) -> PairingMode {
        self.pairing
    }

    fn generate(
        &self,
        class_id: usize,
        count: usize,
        real: &[&TimeWindow],
        round: u32,
        seed: u64,
    ) -> Result<Vec<TimeWindow>> {
        check_pool(&self.id, real, 1)?;
        if count == 0 {
            return Ok(Vec::new());
        }
        let (steps, features) = (real[0].steps, real[0].features);
        let request = GenRequest {
            class_id,
            count,
            steps,
            features,
            seed,
            real_windows: real
                .iter()
                .map(|w| RequestWindow {
                    values: (0..w.steps).map(|t| w.frame(t)).collect(),
                    label: w.label,
                })
                .collect(),
        };
        let payload = serde_json::to_vec(&request)?;
        let output = run_with_timeout(&self.command, &payload, self.timeout)?;
        let response: GenResponse = serde_json::from_slice(&output)
            .map_err(|e| Error::Subprocess(format!("bad response from '{}': {e}", self.id)))?;
        if response.windows.len() != count {
            return Err(Error::Subprocess(format!(
                "'{}' returned {} windows, requested {count}",
                self.id,
                response.windows.len()
            )));
        }
        response
            .windows
            .into_iter()
            .map(|w| {
                if w.values.len() != steps || w.values.iter().any(|r| r.len() != features) {
                    return Err(Error::Subprocess(format!(
                        "'{}' returned a window with the wrong shape",
                        self.id
                    )));
                }
                if let (PairingMode::Aligned, None) = (self.pairing, w.source_index) {
                    return Err(Error::Subprocess(format!(
                        "'{}' is aligned but returned no source_index",
                        self.id
                    )));
                }
                let flat: Vec<f64> = w.values.into_iter().flatten().collect();
                let source = match self.pairing {
                    PairingMode::Aligned => w.source_index,
                    PairingMode::Independent => None,
                };
                generated_window(real[0], flat, class_id, &self.id, round, source)
            })
            .collect()
    }
}
