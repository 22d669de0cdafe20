//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. Runs on the scripted backend and mock services.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{demo_credentials, step_label, task, Env, PLANS};
use copilot_core::agents::{BackendError, CompletionBackend, RenderedOutput};
use copilot_core::bench::run_bench;
use copilot_core::engine::{replay, Copilot, EngineError, Phase};
use copilot_core::fixtures;
use copilot_core::graph::{deserialize_graph, serialize_graph, RenderKind};
use copilot_core::tools::extensions::install_map_ui;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

const SCENARIO_WALL_LIMIT: Duration = Duration::from_secs(1);
const FUZZ_RUNS: usize = 200;
const AUTH_RUNS: usize = 150;
const CONTROLLER_ATTEMPTS: usize = 3;
const REPLAY_RUNS: usize = 10;
const ROUND_TRIPS: u32 = 500;
const BENCH_REPETITIONS: usize = 20;
const MAX_OVERHEAD_RATIO: f64 = 2.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sample<S: Strategy>(runner: &mut TestRunner, s: &S) -> S::Value {
    s.new_tree(runner)
        .expect("strategy yields a value")
        .current()
}

fn scenario_suite() -> Outcome {
    let kinds = [
        RenderKind::PageView,
        RenderKind::Table,
        RenderKind::PageView,
        RenderKind::DownloadButton,
        RenderKind::PageView,
    ];
    let env = Env::new();
    let copilot = env.copilot();
    let mut slowest = Duration::ZERO;
    for ((label, plan), kind) in PLANS.iter().zip(kinds) {
        let id = copilot
            .create_session_with_credentials(None, &demo_credentials())
            .unwrap();
        let started = Instant::now();
        let phase = copilot.submit_instruction(&id, &task(label)).unwrap();
        let took = started.elapsed();
        slowest = slowest.max(took);
        let Phase::Done { output } = phase else {
            return Err(format!("task {label} ended {}", phase.name()));
        };
        check(
            output.kind() == kind,
            format!("task {label} rendered {:?}", output.kind()),
        )?;
        let steps: Vec<String> = copilot
            .get_trace(&id)
            .unwrap()
            .events
            .iter()
            .map(step_label)
            .collect();
        check(steps == *plan, format!("task {label} ran {steps:?}"))?;
        check(
            took < SCENARIO_WALL_LIMIT,
            format!("task {label} took {took:?}"),
        )?;
    }
    Ok(format!("5 tasks match their plans, slowest {slowest:?}"))
}

/// Demo instructions with at least one required value left out, plus
/// whether the session starts with credentials. Values that stay in are
/// randomized.
fn fuzzed_instruction() -> impl Strategy<Value = (String, bool)> {
    let metrics =
        proptest::sample::subsequence(vec!["temperature", "humidity", "wind speed"], 1..=3)
            .prop_map(|ms| ms.join(", "));
    let drive = proptest::sample::select(vec!["adma_test/test.txt", "reports/yield_2023.csv"]);
    let transfer = (drive, any::<bool>(), any::<bool>())
        .prop_filter("something omitted", |(_, keep_path, keep_dest)| {
            !(*keep_path && *keep_dest)
        })
        .prop_map(|(path, keep_path, keep_dest)| {
            let path = if keep_path { path } else { "file" };
            let dest = if keep_dest {
                " to my ADMA root folder"
            } else {
                ""
            };
            format!("Transfer the {path} on my google drive{dest}, and open the uploaded file")
        });
    let fixed = proptest::sample::select(vec![
        "Download the file for Realm5 data",
        "go to the file for Realm5 data",
        "Download the Realm5 data on ADMA",
        "Go to directory under root folder of ADMA",
        "Check the meta data on ADMA",
        "Open the page on ADAM, the name of which contains the keyword",
        "I want to see the map for the field",
    ])
    .prop_map(String::from);
    let instruction = prop_oneof![fixed, metrics.prop_map(|m| format!("plot {m}")), transfer];
    (instruction, any::<bool>())
}

fn no_fabricated_values() -> Outcome {
    let env = Env::new();
    install_map_ui(&env.registry, &env.runtime, env.services.clone()).unwrap();
    let copilot = env.copilot();
    let mut runner = TestRunner::deterministic();
    let strategy = fuzzed_instruction();
    let (mut asked, mut locked, mut tool_calls) = (0, 0, 0);
    for _ in 0..FUZZ_RUNS {
        let (text, with_creds) = sample(&mut runner, &strategy);
        let creds = if with_creds {
            demo_credentials()
        } else {
            BTreeMap::new()
        };
        let id = copilot
            .create_session_with_credentials(None, &creds)
            .unwrap();
        let phase = copilot.submit_instruction(&id, &text).unwrap();
        match phase {
            Phase::AwaitingClarification { .. } => asked += 1,
            Phase::AwaitingCredentials { .. } => locked += 1,
            other => return Err(format!("{text:?} ended {}", other.name())),
        }
        for call in env.spy.take() {
            tool_calls += 1;
            check(
                call.required_params_present,
                format!("{text:?}: {} ran with unbound input", call.tool),
            )?;
        }
    }
    Ok(format!(
        "{FUZZ_RUNS} runs, {asked} clarification and {locked} credential stops, {tool_calls} tool calls all fully bound"
    ))
}

fn clarification_round_trip() -> Outcome {
    let env = Env::new();
    let copilot = env.copilot();
    let id = copilot.create_session(None).unwrap();
    let phase = copilot
        .submit_instruction(&id, "plot temperature, humidity and wind speed")
        .unwrap();
    let Phase::AwaitingClarification { variable, .. } = phase else {
        return Err(format!("first stop was {}", phase.name()));
    };
    check(variable == "date", format!("asked for {variable}"))?;
    let phase = copilot
        .provide_clarification(&id, "date", "2024/5/1")
        .unwrap();
    let Phase::Done {
        output: RenderedOutput::PlotSpec(plot),
    } = phase
    else {
        return Err(format!("resumed into {phase:?}"));
    };

    let mut lines = fixtures::REALM5_2024_05_01.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').collect())
        .collect();
    let column = |name: &str| {
        let i = header.iter().position(|h| *h == name).unwrap();
        rows.iter().map(|r| r[i].to_string()).collect::<Vec<_>>()
    };
    check(
        plot.x == column("timestamp"),
        "x axis differs from the fixture",
    )?;
    let names: Vec<&str> = plot.series.iter().map(|s| s.name.as_str()).collect();
    check(
        names == ["temperature", "humidity", "wind_speed"],
        format!("series {names:?}"),
    )?;
    for s in &plot.series {
        check(
            s.values == column(&s.name),
            format!("series {} differs from the fixture", s.name),
        )?;
    }
    Ok(format!(
        "asked for date, plotted {} points x 3 series matching the fixture",
        plot.x.len()
    ))
}

/// Names tools that do not exist, for every controller prompt.
struct Adversary {
    inner: Arc<dyn CompletionBackend>,
    controller_calls: AtomicUsize,
}

impl CompletionBackend for Adversary {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        if prompt.contains("ROLE: controller") {
            self.controller_calls.fetch_add(1, Ordering::SeqCst);
            return Ok("CALL rm_rf_everything".into());
        }
        self.inner.complete(prompt)
    }
}

fn constrained_decoding() -> Outcome {
    let env = Env::new();
    let adversary = Arc::new(Adversary {
        inner: env.backend.clone(),
        controller_calls: AtomicUsize::new(0),
    });
    let copilot = env.copilot_with(adversary.clone());
    let id = copilot
        .create_session_with_credentials(None, &demo_credentials())
        .unwrap();
    let phase = copilot.submit_instruction(&id, &task("A")).unwrap();
    let calls = adversary.controller_calls.load(Ordering::SeqCst);
    let tools = env.spy.take().len() + copilot.get_trace(&id).unwrap().tool_executions();
    check(
        calls == CONTROLLER_ATTEMPTS,
        format!("{calls} controller calls"),
    )?;
    check(tools == 0, format!("{tools} tool executions"))?;
    match phase {
        Phase::Failed {
            error: EngineError::DecisionUnparseable { attempts, .. },
        } if attempts as usize == CONTROLLER_ATTEMPTS => {
            Ok(format!("{calls} controller calls, failed, 0 tools"))
        }
        other => Err(format!("ended {other:?}")),
    }
}

fn auth_gating() -> Outcome {
    let env = Env::new();
    let copilot = env.copilot();
    for (text, service) in [
        ("list my google drive root folder", "google"),
        ("download the Realm5 data on 2024/5/1 on ADMA", "adma"),
    ] {
        let id = copilot.create_session(None).unwrap();
        let phase = copilot.submit_instruction(&id, text).unwrap();
        check(
            phase
                == Phase::AwaitingCredentials {
                    service: service.into(),
                },
            format!("{text:?} ended {}", phase.name()),
        )?;
    }
    check(
        env.spy.take().iter().all(|c| c.protected_service.is_none()),
        "privacy demo reached a protected tool",
    )?;

    let instructions: Vec<String> = vec![
        "list my google drive root folder".into(),
        "download the Realm5 data on 2024/5/1 on ADMA".into(),
        "Download the adma_test/test.txt on google drive".into(),
        "Transfer the adma_test/test.txt on my google drive to my ADMA root folder, then download it from ADMA".into(),
        task("D"),
        task("E"),
    ];
    let strategy = (
        proptest::sample::select(instructions),
        proptest::sample::subsequence(vec!["google", "adma"], 0..=2),
        proptest::collection::vec(any::<bool>(), 3),
    );
    let mut runner = TestRunner::deterministic();
    let (mut protected_calls, mut done) = (0, 0);
    for _ in 0..AUTH_RUNS {
        let (text, upfront, answers) = sample(&mut runner, &strategy);
        let mut granted: BTreeSet<String> = upfront.iter().map(|s| s.to_string()).collect();
        let creds = granted
            .iter()
            .map(|s| (s.clone(), format!("tok-{s}")))
            .collect();
        let id = copilot
            .create_session_with_credentials(None, &creds)
            .unwrap();
        let mut phase = copilot.submit_instruction(&id, &text).unwrap();
        for answer in &answers {
            let Phase::AwaitingCredentials { service } = &phase else {
                break;
            };
            if !answer {
                break;
            }
            granted.insert(service.clone());
            phase = copilot.provide_credentials(&id, service, "tok").unwrap();
        }
        if phase.name() == "done" {
            done += 1;
        }
        for call in env.spy.take() {
            if let Some(service) = &call.protected_service {
                protected_calls += 1;
                check(
                    call.had_credential && granted.contains(service),
                    format!("{text:?}: {} ran without a {service} credential", call.tool),
                )?;
            }
        }
    }
    Ok(format!(
        "both demos stop for credentials; {AUTH_RUNS} random sessions, {done} done, {protected_calls} protected calls all credentialed"
    ))
}

fn replay_determinism() -> Outcome {
    for (label, _) in PLANS {
        let mut seen: Option<(String, String)> = None;
        for run in 0..REPLAY_RUNS {
            let env = Env::new();
            let copilot = env.copilot();
            let id = copilot
                .create_session_with_credentials(None, &demo_credentials())
                .unwrap();
            let Phase::Done { output } = copilot.submit_instruction(&id, &task(label)).unwrap()
            else {
                return Err(format!("task {label} run {run} did not finish"));
            };
            let live = (
                serde_json::to_string(&copilot.store(&id).unwrap()).unwrap(),
                serde_json::to_string(&output).unwrap(),
            );
            let trace = copilot.get_trace(&id).unwrap();
            let replayed = replay(&trace, env.runtime.as_ref(), env.backend.as_ref())
                .map_err(|e| format!("task {label} run {run}: {e}"))?;
            let again = (
                serde_json::to_string(&replayed.store).unwrap(),
                replayed
                    .output
                    .map(|o| serde_json::to_string(&o).unwrap())
                    .unwrap_or_default(),
            );
            check(
                again.0 == live.0,
                format!("task {label} run {run}: replayed store differs"),
            )?;
            check(
                again.1 == live.1,
                format!("task {label} run {run}: replayed output differs"),
            )?;
            match &seen {
                None => seen = Some(live),
                Some(first) => check(
                    *first == live,
                    format!("task {label} run {run} differs from run 0"),
                )?,
            }
        }
    }
    Ok(format!(
        "5 tasks x {REPLAY_RUNS} runs replay byte-identically"
    ))
}

fn graph_round_trips() -> Outcome {
    let config = ProptestConfig {
        cases: ROUND_TRIPS,
        failure_persistence: None,
        ..ProptestConfig::default()
    };
    let mut runner = TestRunner::new(config);
    let count = AtomicUsize::new(0);
    runner
        .run(&common::arb_graph(), |g| {
            count.fetch_add(1, Ordering::Relaxed);
            let text = serialize_graph(&g);
            let back = deserialize_graph(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(serialize_graph(&back), text);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{} random graphs round-trip, canonical text stable",
        count.into_inner()
    ))
}

fn map_extension() -> Outcome {
    let env = Env::new();
    let copilot: Copilot = env.copilot();
    install_map_ui(&env.registry, &env.runtime, env.services.clone()).map_err(|e| e.to_string())?;
    let id = copilot.create_session(None).unwrap();
    let phase = copilot
        .submit_instruction(&id, "I want to see the map for the field named 1863N")
        .unwrap();
    match phase {
        Phase::Done {
            output: RenderedOutput::MapView(field),
        } if field.name == "1863N" => Ok("map_view for 1863N".into()),
        other => Err(format!("ended {other:?}")),
    }
}

fn efficiency_shape() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    fixtures::init(dir.path()).unwrap();
    let (copilot, services) = fixtures::demo_copilot(dir.path()).map_err(|e| e.to_string())?;
    let report = run_bench(
        &copilot,
        &services,
        &fixtures::demo_tasks(),
        BENCH_REPETITIONS,
        &demo_credentials(),
    );
    if let Some(abort) = &report.aborted {
        return Err(format!("task {} aborted: {}", abort.task, abort.reason));
    }
    let ratio = report.overhead_ratio().ok_or("no overhead measured")?;
    let per_task: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{}={:.3}ms", r.task, r.mean_engine_overhead_ms))
        .collect();
    check(
        ratio <= MAX_OVERHEAD_RATIO,
        format!(
            "overhead ratio {ratio:.2} > {MAX_OVERHEAD_RATIO} ({})",
            per_task.join(" ")
        ),
    )?;
    Ok(format!(
        "overhead ratio {ratio:.2} <= {MAX_OVERHEAD_RATIO} ({})",
        per_task.join(" ")
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("scenario_suite", scenario_suite),
        ("no_fabricated_values", no_fabricated_values),
        ("clarification_round_trip", clarification_round_trip),
        ("constrained_decoding", constrained_decoding),
        ("auth_gating", auth_gating),
        ("replay_determinism", replay_determinism),
        ("graph_round_trip", graph_round_trips),
        ("map_extension", map_extension),
        ("efficiency_shape", efficiency_shape),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match std::panic::catch_unwind(run) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    println!("{} of {} criteria passed", 9 - failed, 9);
    if failed > 0 {
        std::process::exit(1);
    }
}
