//! The `copilot` command line.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use copilot_core::agents::{CompletionBackend, RemoteBackend, ScriptedBackend};
use copilot_core::bench::run_bench;
use copilot_core::engine::{Copilot, EngineConfig, Phase, DEFAULT_MAX_STEPS};
use copilot_core::fixtures::{self, CREDENTIALS_FILE, REGISTRY_DIR, SCRIPT_FILE, TASKS_FILE};
use copilot_core::registry::Registry;
use copilot_core::tools::{MockServices, ToolRuntime};

pub const EXIT_DONE: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
/// Exit code 2 belongs to usage errors.
pub const EXIT_NEEDS_CLARIFICATION: i32 = 3;
pub const EXIT_NEEDS_CREDENTIALS: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "copilot",
    version,
    about = "Run data-management instructions through the copilot engine"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one instruction and print the rendered output as JSON.
    Run(RunArgs),
    /// Time each task of a tasks file and print a CSV report.
    Bench(BenchArgs),
    /// Serve the HTTP API and the mock services.
    Serve(ServeArgs),
    /// Manage fixture directories.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Write the demo fixture bundle, registry, script, tasks and credentials.
    Init {
        #[arg(default_value = "fixtures")]
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Fixture directory (see `copilot fixtures init`).
    #[arg(long, env = "COPILOT_FIXTURES", default_value = "fixtures")]
    pub fixtures: PathBuf,
    /// Registry directory; defaults to `<fixtures>/registry`.
    #[arg(long, env = "COPILOT_REGISTRY")]
    pub registry: Option<PathBuf>,
    #[arg(long, env = "COPILOT_BACKEND", value_enum, default_value = "scripted")]
    pub backend: BackendKind,
    /// Agent script for the scripted backend; defaults to `<fixtures>/script.json`.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Completion endpoint for the remote backend.
    #[arg(long, env = "COPILOT_LLM_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, env = "COPILOT_MAX_STEPS", default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: u32,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Print the execution trace as JSON on stderr.
    #[arg(long)]
    pub trace: bool,
    /// Exit instead of prompting when the copilot needs input.
    #[arg(long)]
    pub no_interactive: bool,
    /// Pre-authorize a service, as SERVICE=TOKEN. Repeatable.
    #[arg(long = "credential", value_name = "SERVICE=TOKEN", value_parser = parse_credential)]
    pub credentials: Vec<(String, String)>,
    /// Pre-authorize with `<fixtures>/credentials.json`.
    #[arg(long)]
    pub demo_credentials: bool,
    /// The instruction.
    #[arg(required = true, num_args = 1..)]
    pub instruction: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Tasks file (`label<TAB>instruction`); defaults to `<fixtures>/tasks.tsv`.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, env = "COPILOT_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: String,
}

fn parse_credential(raw: &str) -> Result<(String, String), String> {
    match raw.split_once('=') {
        Some((s, t)) if !s.trim().is_empty() && !t.is_empty() => {
            Ok((s.trim().to_string(), t.to_string()))
        }
        _ => Err("expected SERVICE=TOKEN with a non-empty token".into()),
    }
}

/// Everything a command needs to drive the engine.
pub struct Setup {
    pub copilot: Arc<Copilot>,
    pub services: Arc<MockServices>,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        EngineConfig {
            max_steps: self.max_steps,
            ..EngineConfig::default()
        }
    }

    fn backend(&self) -> Result<Arc<dyn CompletionBackend>, String> {
        match self.backend {
            BackendKind::Scripted => {
                let path = self
                    .script
                    .clone()
                    .unwrap_or_else(|| self.fixtures.join(SCRIPT_FILE));
                let b =
                    ScriptedBackend::load(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                Ok(Arc::new(b))
            }
            BackendKind::Remote => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or("--endpoint is required with --backend remote")?;
                let b = RemoteBackend::new(endpoint, Duration::from_secs(60))
                    .map_err(|e| e.to_string())?;
                Ok(Arc::new(b))
            }
        }
    }

    /// Loads fixtures, registry and backend. `base_url` overrides the mock
    /// platform's link prefix.
    pub fn setup(&self, base_url: Option<&str>) -> Result<Setup, String> {
        if !self.fixtures.is_dir() {
            return Err(format!(
                "fixture directory {} does not exist (try `copilot fixtures init`)",
                self.fixtures.display()
            ));
        }
        let mut services = MockServices::load(&self.fixtures).map_err(|e| e.to_string())?;
        if let Some(url) = base_url {
            services = services.with_base_url(url);
        }
        let services = Arc::new(services);
        let registry_dir = self
            .registry
            .clone()
            .unwrap_or_else(|| self.fixtures.join(REGISTRY_DIR));
        let registry = Registry::open(&registry_dir).map_err(|e| e.to_string())?;
        let runtime = ToolRuntime::with_mock_services(services.clone());
        let copilot = Copilot::new(Arc::new(registry), Arc::new(runtime), self.backend()?)
            .with_defaults(self.config())
            .map_err(|e| e.to_string())?;
        Ok(Setup {
            copilot: Arc::new(copilot),
            services,
        })
    }
}

fn read_credentials(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    fixtures::parse_credentials(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn prompt_line(input: &mut dyn BufRead, err: &mut dyn Write, prompt: &str) -> Option<String> {
    let _ = write!(err, "{prompt} ");
    let _ = err.flush();
    let mut line = String::new();
    match input.read_line(&mut line) {
        Ok(0) | Err(_) => None,
        Ok(_) => Some(line.trim_end_matches(['\r', '\n']).to_string()),
    }
}

/// `copilot run`. Questions go to `err` and answers are read from `input`.
pub fn run(
    args: &RunArgs,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let setup = match args.engine.setup(None) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FAILED;
        }
    };
    let mut creds = BTreeMap::new();
    if args.demo_credentials {
        match read_credentials(&args.engine.fixtures.join(CREDENTIALS_FILE)) {
            Ok(c) => creds.extend(c),
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_FAILED;
            }
        }
    }
    creds.extend(args.credentials.iter().cloned());

    let copilot = &setup.copilot;
    let id = match copilot.create_session_with_credentials(None, &creds) {
        Ok(id) => id,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FAILED;
        }
    };
    let instruction = args.instruction.join(" ");
    let mut result = copilot.submit_instruction(&id, &instruction);
    let code = loop {
        let phase = match result {
            Ok(p) => p,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                break EXIT_FAILED;
            }
        };
        match phase {
            Phase::Done { output } => {
                let _ = writeln!(out, "{}", output.to_canonical_json());
                break EXIT_DONE;
            }
            Phase::Failed { error } => {
                let _ = writeln!(err, "failed: {error}");
                break EXIT_FAILED;
            }
            Phase::AwaitingClarification { variable, prompt } => {
                if args.no_interactive {
                    let _ = writeln!(err, "needs clarification of {variable}: {prompt}");
                    break EXIT_NEEDS_CLARIFICATION;
                }
                match prompt_line(input, err, &prompt) {
                    Some(answer) => result = copilot.provide_clarification(&id, &variable, &answer),
                    None => break EXIT_NEEDS_CLARIFICATION,
                }
            }
            Phase::AwaitingCredentials { service } => {
                if args.no_interactive {
                    let _ = writeln!(err, "needs credentials for {service}");
                    break EXIT_NEEDS_CREDENTIALS;
                }
                match prompt_line(input, err, &format!("Token for {service}:")) {
                    Some(token) => result = copilot.provide_credentials(&id, &service, &token),
                    None => break EXIT_NEEDS_CREDENTIALS,
                }
            }
            Phase::Idle | Phase::Running => {
                let _ = writeln!(err, "error: engine returned a non-terminal phase");
                break EXIT_FAILED;
            }
        }
    };
    if args.trace {
        if let Ok(trace) = copilot.get_trace(&id) {
            let _ = writeln!(
                err,
                "{}",
                serde_json::to_string_pretty(&trace).unwrap_or_default()
            );
        }
    }
    code
}

/// `copilot bench`. A task that does not finish stops the run; the rows so
/// far are still printed and the exit code is nonzero.
pub fn bench(args: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| {
        let setup = args.engine.setup(None)?;
        let tasks_path = args
            .tasks
            .clone()
            .unwrap_or_else(|| args.engine.fixtures.join(TASKS_FILE));
        let text = std::fs::read_to_string(&tasks_path)
            .map_err(|e| format!("{}: {e}", tasks_path.display()))?;
        let tasks = fixtures::parse_tasks(&text)?;
        let creds_path = args.engine.fixtures.join(CREDENTIALS_FILE);
        let creds = if creds_path.exists() {
            read_credentials(&creds_path)?
        } else {
            BTreeMap::new()
        };
        Ok::<_, String>(run_bench(
            &setup.copilot,
            &setup.services,
            &tasks,
            args.repetitions,
            &creds,
        ))
    })();
    match result {
        Ok(report) => {
            let _ = write!(out, "{}", report.to_csv());
            match report.aborted {
                None => EXIT_DONE,
                Some(a) => {
                    let _ = writeln!(
                        err,
                        "incomplete report: task {} did not finish: {}",
                        a.task, a.reason
                    );
                    EXIT_FAILED
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILED
        }
    }
}

/// `copilot serve`. Blocks until interrupted.
pub fn serve(args: &ServeArgs, err: &mut dyn Write) -> i32 {
    let result = (|| {
        let addr: std::net::SocketAddr = args
            .addr
            .parse()
            .map_err(|e| format!("--addr {}: {e}", args.addr))?;
        let std_listener = std::net::TcpListener::bind(addr).map_err(|e| format!("{addr}: {e}"))?;
        std_listener
            .set_nonblocking(true)
            .map_err(|e| e.to_string())?;
        let local = std_listener.local_addr().map_err(|e| e.to_string())?;
        let base_url = format!("http://{local}{}", copilot_server::ADMA_PAGES);
        // The blocking HTTP client of the remote backend must be built
        // outside the async runtime.
        let setup = args.engine.setup(Some(&base_url))?;
        let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
        runtime.block_on(async move {
            let listener =
                tokio::net::TcpListener::from_std(std_listener).map_err(|e| e.to_string())?;
            eprintln!("listening on http://{local}");
            let state = copilot_server::AppState::new(setup.copilot, setup.services);
            tokio::select! {
                r = copilot_server::serve(listener, state) => r.map_err(|e| e.to_string()),
                _ = tokio::signal::ctrl_c() => Ok(()),
            }
        })
    })();
    match result {
        Ok(()) => EXIT_DONE,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILED
        }
    }
}

pub fn fixtures_init(dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match fixtures::init(dir) {
        Ok(()) => {
            let _ = writeln!(out, "fixtures written to {}", dir.display());
            EXIT_DONE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILED
        }
    }
}

pub fn execute(cli: Cli) -> i32 {
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let (mut out, mut err) = (std::io::stdout(), std::io::stderr());
    match cli.command {
        Command::Run(args) => run(&args, &mut input, &mut out, &mut err),
        Command::Bench(args) => bench(&args, &mut out, &mut err),
        Command::Serve(args) => serve(&args, &mut err),
        Command::Fixtures(FixturesCommand::Init { dir }) => fixtures_init(&dir, &mut out, &mut err),
    }
}
