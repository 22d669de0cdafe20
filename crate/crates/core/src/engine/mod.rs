//! The copilot hub: sessions, the decide → execute → observe loop, and the
//! clarification and credential protocols.
//!
//! Each instruction builds a fresh graph from the registry and a fresh
//! store. Tool arguments are only ever read from the store; the controller
//! chooses which tool runs, never what it receives.

mod history;
mod replay;
mod session;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};

pub use history::{ExecutionHistory, StepEvent, StepKind, StepStatus, TurnRecord};
pub use replay::{replay, ReplayError, ReplayOutcome};
pub use session::{
    EngineConfig, EngineError, Phase, DEFAULT_CONTROLLER_ATTEMPTS, DEFAULT_MAX_STEPS,
    DEFAULT_RETRIEVAL_K,
};

use history::now_us;

use crate::agents::{
    controller_decide, format_input, format_output, AgentContext, CompletionBackend,
    ControllerDecision, ControllerError, DecisionMenu, Verdict,
};
use crate::graph::{GraphFile, MetaProgramGraph, Provenance, Value, VariableStore};
use crate::registry::{Registry, SessionRecord};
use crate::tools::{CredentialSlot, Credentials, ToolError, ToolRuntime};

/// What listeners and event streams receive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    Step {
        event: StepEvent,
    },
    /// `seq` is the last step seq at the time of the change.
    Phase {
        seq: u64,
        phase: Phase,
    },
}

pub type Listener = Arc<dyn Fn(&str, &SessionEvent) + Send + Sync>;

/// Mutable state touched only by the session's single writer.
struct Work {
    graph: MetaProgramGraph,
    store: VariableStore,
    credentials: Credentials,
    turn: u32,
    task: String,
    tool_steps: u32,
    consecutive_failures: u32,
    record: SessionRecord,
}

struct SessionHandle {
    id: String,
    config: EngineConfig,
    busy: AtomicBool,
    phase: RwLock<Phase>,
    history: RwLock<ExecutionHistory>,
    work: Mutex<Work>,
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

impl SessionHandle {
    fn acquire(&self) -> Result<BusyGuard<'_>, EngineError> {
        self.busy
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .map(|_| BusyGuard(&self.busy))
            .map_err(|_| EngineError::WrongPhase {
                found: "running".into(),
            })
    }

    fn phase(&self) -> Phase {
        self.phase.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn work(&self) -> MutexGuard<'_, Work> {
        self.work.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn history(&self) -> std::sync::RwLockReadGuard<'_, ExecutionHistory> {
        self.history.read().unwrap_or_else(|p| p.into_inner())
    }
}

fn wrong_phase(phase: &Phase) -> EngineError {
    EngineError::WrongPhase {
        found: phase.name().to_string(),
    }
}

/// Snapshot of one session for status queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub phase: Phase,
    pub turn: u32,
    pub steps: usize,
    pub services: Vec<String>,
}

pub struct Copilot {
    registry: Arc<Registry>,
    runtime: Arc<ToolRuntime>,
    backend: Arc<dyn CompletionBackend>,
    defaults: EngineConfig,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
    listeners: RwLock<Vec<Listener>>,
}

impl std::fmt::Debug for Copilot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Copilot")
            .field("registry", &self.registry)
            .field("defaults", &self.defaults)
            .finish_non_exhaustive()
    }
}

impl Copilot {
    pub fn new(
        registry: Arc<Registry>,
        runtime: Arc<ToolRuntime>,
        backend: Arc<dyn CompletionBackend>,
    ) -> Self {
        Copilot {
            registry,
            runtime,
            backend,
            defaults: EngineConfig::default(),
            sessions: Mutex::new(HashMap::new()),
            listeners: RwLock::new(Vec::new()),
        }
    }

    pub fn with_defaults(mut self, config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        self.defaults = config;
        Ok(self)
    }

    pub fn defaults(&self) -> &EngineConfig {
        &self.defaults
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn runtime(&self) -> &Arc<ToolRuntime> {
        &self.runtime
    }

    pub fn backend(&self) -> &Arc<dyn CompletionBackend> {
        &self.backend
    }

    /// Every step and phase change of every session is passed to `listener`,
    /// in seq order per session.
    pub fn add_listener(&self, listener: Listener) {
        self.listeners
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .push(listener);
    }

    fn notify(&self, session: &str, event: &SessionEvent) {
        let listeners = self.listeners.read().unwrap_or_else(|p| p.into_inner());
        for l in listeners.iter() {
            l(session, event);
        }
    }

    fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, EngineError> {
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownSession { id: id.to_string() })
    }

    pub fn create_session(&self, config: Option<EngineConfig>) -> Result<String, EngineError> {
        self.create_session_with_credentials(config, &BTreeMap::new())
    }

    /// Creates a session with credential slots filled up front, for
    /// non-interactive runs.
    pub fn create_session_with_credentials(
        &self,
        config: Option<EngineConfig>,
        credentials: &BTreeMap<String, String>,
    ) -> Result<String, EngineError> {
        let config = config.unwrap_or_else(|| self.defaults.clone());
        config.validate()?;
        let mut slots = Credentials::new();
        for (service, token) in credentials {
            if token.trim().is_empty() {
                return Err(EngineError::EmptyToken);
            }
            slots.insert(CredentialSlot::new(service, token));
        }
        let id = uuid::Uuid::new_v4().to_string();
        let graph = MetaProgramGraph::default();
        let handle = SessionHandle {
            id: id.clone(),
            config,
            busy: AtomicBool::new(false),
            phase: RwLock::new(Phase::Idle),
            history: RwLock::new(ExecutionHistory::default()),
            work: Mutex::new(Work {
                store: VariableStore::new(&graph),
                graph,
                credentials: slots,
                turn: 0,
                task: String::new(),
                tool_steps: 0,
                consecutive_failures: 0,
                record: SessionRecord {
                    id: id.clone(),
                    instructions: Vec::new(),
                    outcomes: Vec::new(),
                },
            }),
        };
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), Arc::new(handle));
        Ok(id)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub fn phase(&self, id: &str) -> Result<Phase, EngineError> {
        Ok(self.handle(id)?.phase())
    }

    pub fn info(&self, id: &str) -> Result<SessionInfo, EngineError> {
        let h = self.handle(id)?;
        let snapshot = h.work.try_lock().ok().map(|w| {
            (
                w.turn,
                w.credentials.services().into_iter().collect::<Vec<_>>(),
            )
        });
        let (turn, services) = snapshot
            .unwrap_or_else(|| (h.history().turns.last().map_or(0, |t| t.turn), Vec::new()));
        let steps = h.history().len();
        Ok(SessionInfo {
            id: h.id.clone(),
            phase: h.phase(),
            turn,
            steps,
            services,
        })
    }

    pub fn get_trace(&self, id: &str) -> Result<ExecutionHistory, EngineError> {
        Ok(self.handle(id)?.history().clone())
    }

    /// The store of the current turn.
    pub fn store(&self, id: &str) -> Result<VariableStore, EngineError> {
        let h = self.handle(id)?;
        let _busy = h.acquire()?;
        let store = h.work().store.clone();
        Ok(store)
    }

    /// Starts a new turn. Returns the phase the turn stopped in.
    pub fn submit_instruction(&self, id: &str, text: &str) -> Result<Phase, EngineError> {
        let h = self.handle(id)?;
        let _busy = h.acquire()?;
        match h.phase() {
            Phase::Idle | Phase::Done { .. } | Phase::Failed { .. } => {}
            other => return Err(wrong_phase(&other)),
        }
        let mut w = h.work();
        w.turn += 1;
        w.task = text.to_string();
        w.tool_steps = 0;
        w.consecutive_failures = 0;
        let redacted = w.credentials.redact(text);
        w.record.instructions.push(redacted.clone());
        self.set_phase(&h, Phase::Running);

        let graph = match self
            .registry
            .build_graph_for_task(text, h.config.retrieval_k)
        {
            Ok(g) => g,
            Err(e) => {
                return Ok(self.stop(
                    &h,
                    &mut w,
                    EngineError::GraphBuild {
                        detail: e.to_string(),
                    },
                ));
            }
        };
        w.store = VariableStore::new(&graph);
        w.graph = graph;
        {
            let mut hist = h.history.write().unwrap_or_else(|p| p.into_inner());
            hist.turns.push(TurnRecord {
                turn: w.turn,
                instruction: redacted.clone(),
                graph: GraphFile::from(&w.graph),
            });
        }

        let started = now_us();
        let proposal = match format_input(text, &w.graph, self.backend.as_ref()) {
            Ok(p) => p,
            Err(e) => {
                let detail = e.to_string();
                let ev = StepEvent::new(StepKind::FormatInput, StepStatus::Failed)
                    .detail(detail.clone());
                self.record(&h, &w, ev, started);
                return Ok(self.stop(&h, &mut w, EngineError::BackendUnreachable { detail }));
            }
        };
        let mut ev = StepEvent::new(StepKind::FormatInput, StepStatus::Ok).detail(redacted);
        // Bound in id order, the same order replay reads them back in.
        let bindings: BTreeMap<String, String> = proposal.bindings.into_iter().collect();
        for (var, raw) in bindings {
            let Some(spec) = w.graph.variable(&var) else {
                continue;
            };
            match Value::coerce(spec.semantic_type, &raw) {
                Ok(value) => {
                    match w
                        .store
                        .bind(&w.graph, &var, value.clone(), Provenance::InputFormatter)
                    {
                        Ok(store) => {
                            w.store = store;
                            ev.outputs.insert(var, value);
                        }
                        Err(e) => tracing::debug!(%var, error = %e, "binding dropped"),
                    }
                }
                Err(e) => tracing::debug!(%var, error = %e, "value dropped"),
            }
        }
        self.record(&h, &w, ev, started);
        Ok(self.run_loop(&h, &mut w))
    }

    /// Answers a pending question and resumes the turn.
    pub fn provide_clarification(
        &self,
        id: &str,
        variable: &str,
        value: &str,
    ) -> Result<Phase, EngineError> {
        let h = self.handle(id)?;
        let _busy = h.acquire()?;
        match h.phase() {
            Phase::AwaitingClarification { variable: v, .. } if v == variable => {}
            Phase::AwaitingClarification { .. } => {
                return Err(EngineError::UnknownVariable {
                    variable: variable.to_string(),
                })
            }
            other => return Err(wrong_phase(&other)),
        }
        let mut w = h.work();
        let spec =
            w.graph
                .variable(variable)
                .cloned()
                .ok_or_else(|| EngineError::UnknownVariable {
                    variable: variable.to_string(),
                })?;
        let invalid = |reason: String| EngineError::InvalidValue {
            variable: variable.to_string(),
            reason,
        };
        let parsed =
            Value::coerce(spec.semantic_type, value).map_err(|e| invalid(e.to_string()))?;
        let store = w
            .store
            .bind(
                &w.graph,
                variable,
                parsed.clone(),
                Provenance::UserClarification,
            )
            .map_err(|e| invalid(e.to_string()))?;
        w.store = store;
        self.set_phase(&h, Phase::Running);
        let mut ev = StepEvent::new(StepKind::Clarification, StepStatus::Ok);
        ev.variable = Some(variable.to_string());
        ev.outputs.insert(variable.to_string(), parsed);
        self.record(&h, &w, ev, now_us());
        Ok(self.run_loop(&h, &mut w))
    }

    /// Fills the awaited credential slot and resumes the turn.
    pub fn provide_credentials(
        &self,
        id: &str,
        service: &str,
        token: &str,
    ) -> Result<Phase, EngineError> {
        let h = self.handle(id)?;
        let _busy = h.acquire()?;
        match h.phase() {
            Phase::AwaitingCredentials { service: s } if s == service => {}
            other => return Err(wrong_phase(&other)),
        }
        if token.trim().is_empty() {
            return Err(EngineError::EmptyToken);
        }
        let mut w = h.work();
        w.credentials.insert(CredentialSlot::new(service, token));
        self.set_phase(&h, Phase::Running);
        let ev = StepEvent::new(StepKind::Credentials, StepStatus::Ok).detail(service);
        self.record(&h, &w, ev, now_us());
        Ok(self.run_loop(&h, &mut w))
    }

    fn set_phase(&self, h: &SessionHandle, next: Phase) {
        let seq = {
            let mut phase = h.phase.write().unwrap_or_else(|p| p.into_inner());
            debug_assert!(
                phase.can_transition_to(&next),
                "illegal transition {} -> {}",
                phase.name(),
                next.name()
            );
            *phase = next.clone();
            h.history().last_seq()
        };
        self.notify(&h.id, &SessionEvent::Phase { seq, phase: next });
    }

    /// Appends a step, stamping seq, turn and timing.
    fn record(
        &self,
        h: &SessionHandle,
        w: &Work,
        mut event: StepEvent,
        started_us: u64,
    ) -> StepEvent {
        event.turn = w.turn;
        event.started_us = started_us;
        event.ended_us = now_us().max(started_us);
        if let Some(d) = &event.detail {
            event.detail = Some(w.credentials.redact(d));
        }
        let event = h
            .history
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .push(event);
        self.notify(
            &h.id,
            &SessionEvent::Step {
                event: event.clone(),
            },
        );
        event
    }

    /// Ends the turn in `failed`.
    fn stop(&self, h: &SessionHandle, w: &mut Work, error: EngineError) -> Phase {
        self.finish(h, w, Phase::Failed { error })
    }

    fn finish(&self, h: &SessionHandle, w: &mut Work, phase: Phase) -> Phase {
        self.set_phase(h, phase.clone());
        let outcome = match &phase {
            Phase::Done { output } => format!("done: {}", output.kind().as_str()),
            Phase::Failed { error } => format!("failed: {error}"),
            Phase::AwaitingClarification { variable, .. } => {
                format!("awaiting_clarification: {variable}")
            }
            Phase::AwaitingCredentials { service } => format!("awaiting_credentials: {service}"),
            other => other.name().to_string(),
        };
        w.record.outcomes.push(w.credentials.redact(&outcome));
        if let Err(e) = self.registry.save_session(w.record.clone()) {
            tracing::warn!(session = %h.id, error = %e, "cannot persist session record");
        }
        phase
    }

    fn run_loop(&self, h: &SessionHandle, w: &mut Work) -> Phase {
        let config = &h.config;
        loop {
            let auth = w.credentials.services();
            let menu = DecisionMenu::new(&w.graph, &w.store, &auth);
            let history_text = h.history().render_turn(w.turn);
            let ctx = AgentContext::new(&w.task, &w.graph, &w.store, &history_text);
            let started = now_us();
            let verdict = controller_decide(
                &ctx,
                &menu,
                self.backend.as_ref(),
                config.controller_retries,
            );
            let decision = match verdict {
                Ok(Verdict::Decide(d)) => d,
                Ok(Verdict::NeedsCredentials { tool, service }) => {
                    let ev = StepEvent::new(StepKind::AuthRequest, StepStatus::Awaiting)
                        .tool(&tool)
                        .detail(service.clone());
                    self.record(h, w, ev, started);
                    return self.finish(h, w, Phase::AwaitingCredentials { service });
                }
                Err(ControllerError::Unparseable { attempts, last }) => {
                    let detail = last.to_string();
                    self.record(
                        h,
                        w,
                        StepEvent::new(StepKind::Error, StepStatus::Failed).detail(detail.clone()),
                        started,
                    );
                    return self.stop(h, w, EngineError::DecisionUnparseable { attempts, detail });
                }
                Err(ControllerError::Backend(e)) => {
                    let detail = e.to_string();
                    self.record(
                        h,
                        w,
                        StepEvent::new(StepKind::Error, StepStatus::Failed).detail(detail.clone()),
                        started,
                    );
                    return self.stop(h, w, EngineError::BackendUnreachable { detail });
                }
            };
            match decision {
                ControllerDecision::AskUser { variable, prompt } => {
                    let prompt = if prompt.trim().is_empty() {
                        let name = w
                            .graph
                            .variable(&variable)
                            .map_or(variable.as_str(), |v| v.name.as_str());
                        format!("Please provide {name}")
                    } else {
                        prompt
                    };
                    let mut ev = StepEvent::new(StepKind::AskUser, StepStatus::Awaiting)
                        .detail(prompt.clone());
                    ev.variable = Some(variable.clone());
                    self.record(h, w, ev, started);
                    return self.finish(h, w, Phase::AwaitingClarification { variable, prompt });
                }
                ControllerDecision::Finish { tool } => {
                    let Some(sink) = w.graph.tool(&tool).cloned() else {
                        return self.stop(
                            h,
                            w,
                            EngineError::OutputFailed {
                                detail: format!("no tool {tool}"),
                            },
                        );
                    };
                    let arguments = w.store.arguments_for(&sink).unwrap_or_default();
                    match format_output(&ctx, &sink, &w.store, self.backend.as_ref()) {
                        Ok(output) => {
                            let mut ev =
                                StepEvent::new(StepKind::Output, StepStatus::Ok).tool(&tool);
                            ev.arguments = arguments;
                            ev.rendered = Some(output.clone());
                            self.record(h, w, ev, started);
                            return self.finish(h, w, Phase::Done { output });
                        }
                        Err(e) => {
                            let detail = e.to_string();
                            let mut ev = StepEvent::new(StepKind::Output, StepStatus::Failed)
                                .tool(&tool)
                                .detail(detail.clone());
                            ev.arguments = arguments;
                            self.record(h, w, ev, started);
                            return self.stop(h, w, EngineError::OutputFailed { detail });
                        }
                    }
                }
                ControllerDecision::CallTool { tool } => {
                    if w.tool_steps >= config.max_steps {
                        let ev = StepEvent::new(StepKind::Error, StepStatus::Failed)
                            .tool(&tool)
                            .detail(format!(
                                "budget of {} tool executions used up",
                                config.max_steps
                            ));
                        self.record(h, w, ev, started);
                        return self.stop(
                            h,
                            w,
                            EngineError::BudgetExceeded {
                                max_steps: config.max_steps,
                            },
                        );
                    }
                    let Some(spec) = w.graph.tool(&tool).cloned() else {
                        return self.stop(
                            h,
                            w,
                            EngineError::ToolFailure {
                                tool,
                                detail: "not in graph".into(),
                            },
                        );
                    };
                    w.tool_steps += 1;
                    let result = self
                        .runtime
                        .execute_tool_within(&spec, &w.store, &w.credentials, config.tool_timeout)
                        .and_then(|exec| {
                            let mut store = w.store.clone();
                            for (var, value) in &exec.outputs {
                                store = store
                                    .bind(
                                        &w.graph,
                                        var,
                                        value.clone(),
                                        Provenance::ToolOutput { tool: tool.clone() },
                                    )
                                    .map_err(ToolError::failure)?;
                            }
                            Ok((exec, store))
                        });
                    match result {
                        Ok((exec, store)) => {
                            w.store = store;
                            w.consecutive_failures = 0;
                            let mut ev = StepEvent::new(StepKind::Tool, StepStatus::Ok).tool(&tool);
                            ev.arguments = exec.arguments;
                            ev.outputs = exec.outputs;
                            ev.tool_us = Some(exec.elapsed.as_micros() as u64);
                            self.record(h, w, ev, started);
                        }
                        Err(ToolError::AuthMissing(service)) => {
                            let ev = StepEvent::new(StepKind::AuthRequest, StepStatus::Awaiting)
                                .tool(&tool)
                                .detail(service.clone());
                            self.record(h, w, ev, started);
                            return self.finish(h, w, Phase::AwaitingCredentials { service });
                        }
                        Err(e) => {
                            let detail = e.to_string();
                            let mut ev = StepEvent::new(StepKind::Tool, StepStatus::Failed)
                                .tool(&tool)
                                .detail(detail.clone());
                            ev.arguments = w.store.arguments_for(&spec).unwrap_or_default();
                            self.record(h, w, ev, started);
                            w.consecutive_failures += 1;
                            if w.consecutive_failures >= 2 {
                                return self.stop(h, w, EngineError::ToolFailure { tool, detail });
                            }
                        }
                    }
                }
            }
        }
    }
}
