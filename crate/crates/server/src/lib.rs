//! HTTP front door of the copilot: session routes, a server-sent event
//! stream per session, and HTTP views of the mock services so a browser can
//! follow page links and download buttons.

mod api;
mod error;
mod events;
mod mock;

use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::broadcast;

use copilot_core::engine::{Copilot, SessionEvent};
use copilot_core::tools::MockServices;

pub use error::ApiError;

/// Path prefix of the HTML pages standing in for the data platform UI.
/// Point [`MockServices::with_base_url`] at `http://<addr>/adma` to make
/// rendered page links resolvable.
pub const ADMA_PAGES: &str = "/adma";

const EVENT_BUFFER: usize = 1024;

#[derive(Debug, Clone)]
struct Envelope {
    session: String,
    event: SessionEvent,
}

#[derive(Clone)]
pub struct AppState {
    copilot: Arc<Copilot>,
    services: Arc<MockServices>,
    events: broadcast::Sender<Envelope>,
}

impl AppState {
    pub fn new(copilot: Arc<Copilot>, services: Arc<MockServices>) -> Self {
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let tx = events.clone();
        copilot.add_listener(Arc::new(move |session: &str, event: &SessionEvent| {
            // No subscribers is fine; the trace endpoint has everything.
            let _ = tx.send(Envelope {
                session: session.to_string(),
                event: event.clone(),
            });
        }));
        AppState {
            copilot,
            services,
            events,
        }
    }

    pub fn copilot(&self) -> &Arc<Copilot> {
        &self.copilot
    }

    pub fn services(&self) -> &Arc<MockServices> {
        &self.services
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(api::healthz))
        .route(
            "/sessions",
            post(api::create_session).get(api::list_sessions),
        )
        .route("/sessions/{id}", get(api::session_info))
        .route("/sessions/{id}/messages", post(api::submit_message))
        .route("/sessions/{id}/clarifications", post(api::clarify))
        .route("/sessions/{id}/credentials", post(api::credentials))
        .route("/sessions/{id}/trace", get(api::trace))
        .route("/sessions/{id}/events", get(events::stream))
        .nest("/mock", mock::routes())
        .nest(ADMA_PAGES, mock::pages())
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "copilot server listening");
    axum::serve(listener, router(state)).await
}
