use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, ModelBackend, ModelRequest, ModelResponse, Role};

/// Completions keyed by role and per-run call index.
///
/// ```json
/// {
///   "synth": ["print(1)"],
///   "explain": ["check the loop bound"],
///   "debug": ["print(2)", "print(3)"],
///   "fallback": { "debug": "print(0)" },
///   "rotate_by_seed": false
/// }
/// ```
///
/// Call `k` of a role returns entry `k`; past the end of the list the
/// role's fallback is used, or the last entry when no fallback is set. With
/// `rotate_by_seed` the entry index is shifted by the run seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fixture {
    pub synth: Vec<String>,
    pub explain: Vec<String>,
    pub debug: Vec<String>,
    pub fallback: BTreeMap<Role, String>,
    pub rotate_by_seed: bool,
}

impl Fixture {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))
    }

    fn entries(&self, role: Role) -> &[String] {
        match role {
            Role::Synth => &self.synth,
            Role::Explain => &self.explain,
            Role::Debug => &self.debug,
        }
    }

    /// Completion for the `call`-th request of `role` in a run seeded `seed`.
    pub fn completion(&self, role: Role, call: usize, seed: u64) -> Result<&str, BackendError> {
        let entries = self.entries(role);
        if self.rotate_by_seed && !entries.is_empty() {
            let offset = (seed % entries.len() as u64) as usize;
            return Ok(&entries[(call + offset) % entries.len()]);
        }
        if let Some(text) = entries.get(call) {
            return Ok(text);
        }
        if let Some(text) = self.fallback.get(&role) {
            return Ok(text);
        }
        entries
            .last()
            .map(String::as_str)
            .ok_or_else(|| BackendError::Fixture(format!("no completions for role `{}`", role.as_str())))
    }
}

#[derive(Debug, Default)]
struct CallState {
    seed: u64,
    calls: BTreeMap<Role, usize>,
    issued: Vec<ModelRequest>,
}

/// Deterministic backend replaying a [`Fixture`]. Answers depend on call
/// order, so batches are always issued sequentially.
#[derive(Debug)]
pub struct ScriptedBackend {
    fixture: Fixture,
    state: Mutex<CallState>,
}

impl ScriptedBackend {
    pub fn new(fixture: Fixture) -> Self {
        Self {
            fixture,
            state: Mutex::new(CallState::default()),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(Fixture::load(path)?))
    }

    /// Every request received since the last [`ModelBackend::begin_run`].
    pub fn issued(&self) -> Vec<ModelRequest> {
        self.state.lock().unwrap().issued.clone()
    }
}

impl ModelBackend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        request.validate()?;
        let mut state = self.state.lock().unwrap();
        let call = {
            let counter = state.calls.entry(request.role).or_insert(0);
            let call = *counter;
            *counter += 1;
            call
        };
        let text = self.fixture.completion(request.role, call, state.seed)?.to_owned();
        state.issued.push(request.clone());
        Ok(ModelResponse {
            text,
            backend_id: self.id().to_owned(),
            latency: Duration::ZERO,
        })
    }

    fn begin_run(&self, seed: u64) {
        let mut state = self.state.lock().unwrap();
        *state = CallState {
            seed,
            ..CallState::default()
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::generate_batch;

    fn fixture() -> Fixture {
        Fixture {
            synth: vec!["a".into(), "b".into(), "c".into()],
            explain: vec![],
            debug: vec!["x".into()],
            fallback: [(Role::Explain, "hint".to_string())].into_iter().collect(),
            rotate_by_seed: false,
        }
    }

    #[test]
    fn replays_in_order() {
        let backend = ScriptedBackend::new(fixture());
        let req = ModelRequest::new(Role::Synth, "s", "u");
        let texts: Vec<String> = generate_batch(&req, 3, &backend)
            .unwrap()
            .into_iter()
            .map(|r| r.text)
            .collect();
        assert_eq!(texts, ["a", "b", "c"]);
        let temps: Vec<f64> = backend.issued().iter().map(|r| r.temperature).collect();
        assert_eq!(temps, [0.0, 1.0 / 3.0, 2.0 / 3.0]);
    }

    #[test]
    fn fallback_and_repeat_last() {
        let backend = ScriptedBackend::new(fixture());
        let explain = ModelRequest::new(Role::Explain, "s", "u");
        assert_eq!(backend.complete(&explain).unwrap().text, "hint");
        let debug = ModelRequest::new(Role::Debug, "s", "u");
        assert_eq!(backend.complete(&debug).unwrap().text, "x");
        assert_eq!(backend.complete(&debug).unwrap().text, "x");
    }

    #[test]
    fn empty_role_is_an_error() {
        let backend = ScriptedBackend::new(Fixture::default());
        let req = ModelRequest::new(Role::Synth, "s", "u");
        assert!(matches!(backend.complete(&req), Err(BackendError::Fixture(_))));
    }

    #[test]
    fn begin_run_resets_and_rotates() {
        let mut f = fixture();
        f.rotate_by_seed = true;
        let backend = ScriptedBackend::new(f);
        let req = ModelRequest::new(Role::Synth, "s", "u");
        backend.begin_run(1);
        assert_eq!(backend.complete(&req).unwrap().text, "b");
        backend.begin_run(1);
        assert_eq!(backend.complete(&req).unwrap().text, "b");
        backend.begin_run(0);
        assert_eq!(backend.complete(&req).unwrap().text, "a");
    }

    #[test]
    fn fixture_json_shape() {
        let f: Fixture = serde_json::from_str(
            r#"{"synth": ["p"], "fallback": {"debug": "q"}}"#,
        )
        .unwrap();
        assert_eq!(f.completion(Role::Debug, 5, 0).unwrap(), "q");
        assert_eq!(f.completion(Role::Synth, 5, 0).unwrap(), "p");
    }
}
