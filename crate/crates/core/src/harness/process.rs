//! Child-interpreter backend.

use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::{parse_results, ExecBackend, HarnessError, RawException, RawOutcome};
use crate::generator::API_KEY_VARS;
use crate::instrument::Program;

/// Exit status the shim uses when it cannot write the results file.
pub const SINK_FAILURE_STATUS: i32 = 97;

const OUTPUT_LIMIT: u64 = 64 * 1024;

/// A Python interpreter, optionally inside a shared virtual environment.
#[derive(Debug, Clone)]
pub struct PythonEnv {
    pub dir: Option<PathBuf>,
    pub interpreter: PathBuf,
}

impl PythonEnv {
    /// Interpreter found on `PATH`, no environment of its own.
    pub fn system(python: impl Into<PathBuf>) -> Self {
        PythonEnv {
            dir: None,
            interpreter: python.into(),
        }
    }

    /// Opens the environment at `dir`, creating it from `base_python` if
    /// needed. System site-packages stay visible.
    pub fn open_or_create(dir: &Path, base_python: &Path) -> Result<Self, HarnessError> {
        let interpreter = venv_python(dir);
        if !interpreter.exists() {
            let status = Command::new(base_python)
                .args(["-m", "venv", "--system-site-packages"])
                .arg(dir)
                .stdout(Stdio::null())
                .stderr(Stdio::piped())
                .output()?;
            if !status.status.success() {
                return Err(HarnessError::Backend(format!(
                    "creating environment at {} failed: {}",
                    dir.display(),
                    String::from_utf8_lossy(&status.stderr)
                )));
            }
        }
        Ok(PythonEnv {
            dir: Some(dir.to_path_buf()),
            interpreter,
        })
    }
}

fn venv_python(dir: &Path) -> PathBuf {
    if cfg!(windows) {
        dir.join("Scripts").join("python.exe")
    } else {
        dir.join("bin").join("python")
    }
}

/// Runs each program in a fresh working directory as
/// `<interpreter> <shim> <program> <results>`.
#[derive(Debug, Clone)]
pub struct ProcessBackend {
    pub interpreter: PathBuf,
    pub shim: PathBuf,
}

impl ProcessBackend {
    pub fn new(env: &PythonEnv, shim: impl Into<PathBuf>) -> Result<Self, HarnessError> {
        let shim = shim.into();
        if !shim.is_file() {
            return Err(HarnessError::Backend(format!("runtime shim not found at {}", shim.display())));
        }
        Ok(ProcessBackend {
            interpreter: env.interpreter.clone(),
            shim: fs::canonicalize(shim)?,
        })
    }
}

fn read_limited(path: &Path) -> String {
    let mut buf = Vec::new();
    if let Ok(file) = File::open(path) {
        let _ = file.take(OUTPUT_LIMIT).read_to_end(&mut buf);
    }
    String::from_utf8_lossy(&buf).into_owned()
}

impl ExecBackend for ProcessBackend {
    fn execute(&self, program: &Program, timeout: Duration) -> Result<RawOutcome, HarnessError> {
        let dir = tempfile::tempdir()?;
        let program_path = dir.path().join("program.py");
        let results_path = dir.path().join("results.txt");
        let stdout_path = dir.path().join("stdout.txt");
        let stderr_path = dir.path().join("stderr.txt");
        fs::write(&program_path, &program.text)?;

        let mut command = Command::new(&self.interpreter);
        command
            .arg(&self.shim)
            .arg(&program_path)
            .arg(&results_path)
            .current_dir(dir.path())
            .stdin(Stdio::null())
            .stdout(File::create(&stdout_path)?)
            .stderr(File::create(&stderr_path)?)
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONIOENCODING", "utf-8");
        for var in API_KEY_VARS {
            command.env_remove(var);
        }

        let started = Instant::now();
        let mut child = command.spawn()?;
        let status = match child.wait_timeout(timeout)? {
            Some(status) => Some(status),
            None => {
                let _ = child.kill();
                let _ = child.wait();
                None
            }
        };
        let wall_time = started.elapsed().as_secs_f64();

        let results = fs::read_to_string(&results_path).unwrap_or_default();
        let (probes, mut exception) = parse_results(&results)?;
        let exit_status = status.and_then(|s| s.code());
        if exit_status == Some(SINK_FAILURE_STATUS) {
            return Err(HarnessError::Backend("runtime shim could not write results".into()));
        }
        let timed_out = status.is_none();
        if timed_out {
            exception = None;
        } else if exception.is_none() && exit_status != Some(0) {
            // Died without reporting (signal, interpreter abort).
            exception = Some(RawException {
                type_name: "ProcessExit".into(),
                line: 0,
                message: format!("child exited with {status:?}"),
            });
        }
        Ok(RawOutcome {
            probes,
            exception,
            exit_status,
            timed_out,
            wall_time,
            stdout: read_limited(&stdout_path),
            stderr: read_limited(&stderr_path),
        })
    }
}
