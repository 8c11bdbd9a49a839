//! Delegates solves to an external program.
//!
//! The program is invoked as `<solver> <model.json> <solution.json> <seconds|none>`.
//! It reads the model in the serde JSON layout of [`MilpModel`] and writes
//!
//! ```json
//! {"status": "optimal", "values": [0.0, 1.0, 4.0]}
//! ```
//!
//! where `status` is one of `optimal`, `feasible`, `infeasible`, `timed_out`
//! or `error`, and `values` lists one value per variable in id order.

use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::model::MilpModel;
use crate::solve::{Backend, SolveLimits, SolveOutcome, SolveStatus};

/// Environment variable naming the external solver program.
pub const SOLVER_ENV: &str = "BLACKSTART_SOLVER";

const KILL_GRACE: Duration = Duration::from_secs(5);

#[derive(Clone, Debug)]
pub struct ExternalCommand {
    program: Option<PathBuf>,
}

#[derive(Deserialize)]
struct SolutionFile {
    status: SolveStatus,
    #[serde(default)]
    values: Option<Vec<f64>>,
    #[serde(default)]
    message: Option<String>,
}

impl ExternalCommand {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        ExternalCommand {
            program: Some(program.into()),
        }
    }

    /// Reads the program location from [`SOLVER_ENV`].
    pub fn from_env() -> Self {
        ExternalCommand {
            program: std::env::var_os(SOLVER_ENV).map(PathBuf::from),
        }
    }

    fn run(&self, model: &MilpModel, limits: &SolveLimits) -> Result<SolveOutcome, String> {
        let program = self
            .program
            .as_ref()
            .ok_or_else(|| format!("external backend unavailable: {SOLVER_ENV} is not set"))?;
        if !program.exists() {
            return Err(format!(
                "external backend unavailable: {} does not exist",
                program.display()
            ));
        }
        let dir = tempfile::tempdir().map_err(|e| format!("cannot create scratch dir: {e}"))?;
        let model_path = dir.path().join("model.json");
        let solution_path = dir.path().join("solution.json");
        let text = serde_json::to_string(model).map_err(|e| e.to_string())?;
        std::fs::write(&model_path, text).map_err(|e| format!("cannot write model: {e}"))?;

        let limit_arg = limits
            .time_limit
            .map(|d| format!("{:.3}", d.as_secs_f64()))
            .unwrap_or_else(|| "none".into());
        let mut child = Command::new(program)
            .arg(&model_path)
            .arg(&solution_path)
            .arg(&limit_arg)
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot launch {}: {e}", program.display()))?;

        let start = Instant::now();
        let kill_at = limits.time_limit.map(|d| d + KILL_GRACE);
        let status = loop {
            match child.try_wait().map_err(|e| e.to_string())? {
                Some(status) => break status,
                None if kill_at.is_some_and(|k| start.elapsed() > k) => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Ok(SolveOutcome::without_solution(SolveStatus::TimedOut));
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };
        if !status.success() {
            let mut err = String::new();
            if let Some(mut s) = child.stderr.take() {
                use std::io::Read;
                let _ = s.read_to_string(&mut err);
            }
            return Err(format!("external solver exited with {status}: {}", err.trim()));
        }
        let text = std::fs::read_to_string(&solution_path)
            .map_err(|e| format!("external solver wrote no solution file: {e}"))?;
        let sol: SolutionFile =
            serde_json::from_str(&text).map_err(|e| format!("malformed solution file: {e}"))?;
        Ok(match (sol.status, sol.values) {
            (SolveStatus::Error, _) => {
                SolveOutcome::error(sol.message.unwrap_or_else(|| "external solver error".into()))
            }
            (s, Some(values)) if s.has_solution() => {
                let obj = model.objective_value(&values);
                SolveOutcome::solved(s, obj, values)
            }
            (s, None) if s.has_solution() => {
                return Err(format!("external solver reported {s} without values"))
            }
            (s, _) => SolveOutcome::without_solution(s),
        })
    }
}

impl Backend for ExternalCommand {
    fn name(&self) -> &str {
        "external"
    }

    fn solve_model(&self, model: &MilpModel, limits: &SolveLimits) -> SolveOutcome {
        self.run(model, limits).unwrap_or_else(SolveOutcome::error)
    }
}
