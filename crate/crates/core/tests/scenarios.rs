mod common;

use std::sync::Arc;

use common::{demo_credentials, step_label, task, Env, PLANS};
use copilot_core::agents::RenderedOutput;
use copilot_core::engine::{replay, Copilot, Phase, ReplayError};
use copilot_core::graph::RenderKind;
use copilot_core::tools::extensions::install_map_ui;
use copilot_core::tools::{MockServices, ToolRuntime};

fn labels(copilot: &Copilot, id: &str) -> Vec<String> {
    copilot
        .get_trace(id)
        .unwrap()
        .events
        .iter()
        .map(step_label)
        .collect()
}

fn output(phase: Phase) -> RenderedOutput {
    match phase {
        Phase::Done { output } => output,
        other => panic!("not done: {other:?}"),
    }
}

#[test]
fn demo_tasks_follow_their_plans() {
    let env = Env::new();
    let copilot = env.copilot();
    for (label, plan) in PLANS {
        let id = copilot
            .create_session_with_credentials(None, &demo_credentials())
            .unwrap();
        copilot.submit_instruction(&id, &task(label)).unwrap();
        assert_eq!(labels(&copilot, &id), plan, "task {label}");
    }
}

#[test]
fn realm5_page_is_reached_autonomously() {
    let env = Env::new();
    let copilot = env.copilot();
    let id = copilot.create_session(None).unwrap();
    let out = output(
        copilot
            .submit_instruction(&id, "go to the file for Realm5 data on 2024/5/1")
            .unwrap(),
    );
    assert_eq!(
        labels(&copilot, &id),
        ["format_input", "path_gen", "url_gen", "open_page"]
    );
    assert_eq!(
        out,
        RenderedOutput::PageView {
            url: "http://adma.local/files/Realm5/2024-05-01.csv".into()
        }
    );
}

#[test]
fn docs_and_home_pages_open() {
    let env = Env::new();
    let copilot = env.copilot();
    let id = copilot.create_session(None).unwrap();
    let docs = output(copilot.submit_instruction(&id, "how to use ADMA").unwrap());
    assert_eq!(
        docs,
        RenderedOutput::PageView {
            url: env.services.adma_docs_url()
        }
    );
    let home = output(
        copilot
            .submit_instruction(&id, "open the ADMA home page")
            .unwrap(),
    );
    assert_eq!(
        home,
        RenderedOutput::PageView {
            url: env.services.adma_home_url()
        }
    );
}

#[test]
fn privacy_demos_stop_for_credentials() {
    let env = Env::new();
    let copilot = env.copilot();
    for (text, service) in [
        ("list my google drive root folder", "google"),
        ("download the Realm5 data on 2024/5/1 on ADMA", "adma"),
    ] {
        let id = copilot.create_session(None).unwrap();
        let phase = copilot.submit_instruction(&id, text).unwrap();
        assert_eq!(
            phase,
            Phase::AwaitingCredentials {
                service: service.into()
            },
            "{text}"
        );
        assert!(env.spy.take().iter().all(|c| c.protected_service.is_none()));
    }
}

#[test]
fn drive_listing_completes_once_token_arrives() {
    let env = Env::new();
    let copilot = env.copilot();
    let id = copilot.create_session(None).unwrap();
    copilot
        .submit_instruction(&id, "list my google drive root folder")
        .unwrap();
    let out = output(copilot.provide_credentials(&id, "google", "tok").unwrap());
    let RenderedOutput::Table(table) = out else {
        panic!("{out:?}")
    };
    assert!(table.rows.iter().any(|r| r[0] == "adma_test"));
    assert!(env
        .spy
        .take()
        .iter()
        .all(|c| c.protected_service.is_none() || c.had_credential));
}

#[test]
fn transfer_then_download_returns_the_original_bytes() {
    let env = Env::new();
    let copilot = env.copilot();
    let id = copilot
        .create_session_with_credentials(None, &demo_credentials())
        .unwrap();
    let out = output(
        copilot
            .submit_instruction(
                &id,
                "Transfer the adma_test/test.txt on my google drive to my ADMA root folder, then download it from ADMA",
            )
            .unwrap(),
    );
    let RenderedOutput::DownloadButton(file) = out else {
        panic!("{out:?}")
    };
    assert_eq!(file.service, "adma");
    assert_eq!(
        env.services.file_content(&file).unwrap(),
        copilot_core::fixtures::DRIVE_TEST_TXT.as_bytes()
    );
}

#[test]
fn map_extension_needs_no_engine_change() {
    let env = Env::new();
    let copilot = env.copilot();
    let text = "I want to see the map for the field named 1863N";
    let id = copilot.create_session(None).unwrap();
    assert_ne!(
        copilot.submit_instruction(&id, text).unwrap().name(),
        "done"
    );

    install_map_ui(&env.registry, &env.runtime, env.services.clone()).unwrap();
    let out = output(copilot.submit_instruction(&id, text).unwrap());
    assert_eq!(out.kind(), RenderKind::MapView);
    let RenderedOutput::MapView(field) = out else {
        unreachable!()
    };
    assert_eq!(field.name, "1863N");
    assert!(field.boundary.is_some_and(|b| b.len() >= 3));
}

#[test]
fn altered_fixture_breaks_replay() {
    let env = Env::new();
    let copilot = env.copilot();
    let id = copilot
        .create_session_with_credentials(None, &demo_credentials())
        .unwrap();
    copilot.submit_instruction(&id, &task("D")).unwrap();
    let trace = copilot.get_trace(&id).unwrap();
    replay(&trace, env.runtime.as_ref(), env.backend.as_ref()).unwrap();

    let csv = env.dir.path().join("adma/Realm5/2024-05-01.csv");
    let mut text = std::fs::read_to_string(&csv).unwrap();
    text.push_str("2024-05-01T23:59:59,0,0,0\n");
    std::fs::write(&csv, text).unwrap();
    let altered = Arc::new(MockServices::load(env.dir.path()).unwrap());
    let runtime = ToolRuntime::with_mock_services(altered);
    let err = replay(&trace, &runtime, env.backend.as_ref()).unwrap_err();
    let ReplayError::FixtureMismatch { seq, .. } = err;
    let step = trace.events.iter().find(|e| e.seq == seq).unwrap();
    assert_eq!(step.tool.as_deref(), Some("adma_download"));
}

#[test]
fn trace_and_record_survive_a_multi_turn_session() {
    let env = Env::new();
    let copilot = env.copilot();
    let id = copilot
        .create_session_with_credentials(None, &demo_credentials())
        .unwrap();
    for label in ["A", "B", "C", "D", "E"] {
        assert_eq!(
            copilot
                .submit_instruction(&id, &task(label))
                .unwrap()
                .name(),
            "done"
        );
    }
    let trace = copilot.get_trace(&id).unwrap();
    assert_eq!(trace.turns.len(), 5);
    assert_eq!(trace.len(), 3 + 4 + 4 + 5 + 5);
    let record = env.registry.session(&id).unwrap();
    assert_eq!(record.instructions.len(), 5);
    assert!(record.outcomes.iter().all(|o| o.starts_with("done: ")));
}
