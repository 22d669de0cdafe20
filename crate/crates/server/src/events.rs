//! Per-session server-sent events: the recorded history first, then live
//! events. Steps are never repeated within one connection; a consumer that
//! falls behind the broadcast buffer is caught up from the trace.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::HeaderMap;
use axum::response::sse::{Event, KeepAlive, Sse};
use futures::stream::{self, Stream};
use tokio::sync::broadcast::{error::RecvError, Receiver};

use copilot_core::engine::{Copilot, EngineError, SessionEvent};

use crate::{ApiError, AppState, Envelope};

struct Feed {
    id: String,
    copilot: Arc<Copilot>,
    rx: Receiver<Envelope>,
    pending: VecDeque<SessionEvent>,
    last_seq: u64,
}

impl Feed {
    /// Queues every recorded step after `last_seq` and the current phase.
    fn catch_up(&mut self) -> Result<(), EngineError> {
        let trace = self.copilot.get_trace(&self.id)?;
        let phase = self.copilot.phase(&self.id)?;
        let after = self.last_seq;
        for event in trace.events.into_iter().filter(|e| e.seq > after) {
            self.last_seq = event.seq;
            self.pending.push_back(SessionEvent::Step { event });
        }
        self.pending.push_back(SessionEvent::Phase {
            seq: self.last_seq,
            phase,
        });
        Ok(())
    }

    async fn next(&mut self) -> Option<SessionEvent> {
        loop {
            if let Some(ev) = self.pending.pop_front() {
                return Some(ev);
            }
            match self.rx.recv().await {
                Ok(env) if env.session != self.id => {}
                Ok(Envelope {
                    event: SessionEvent::Step { event },
                    ..
                }) => {
                    if event.seq > self.last_seq {
                        self.last_seq = event.seq;
                        return Some(SessionEvent::Step { event });
                    }
                }
                Ok(env) => return Some(env.event),
                Err(RecvError::Lagged(n)) => {
                    tracing::debug!(session = %self.id, skipped = n, "event stream lagged, catching up");
                    self.catch_up().ok()?;
                }
                Err(RecvError::Closed) => return None,
            }
        }
    }
}

fn to_sse(ev: &SessionEvent) -> Event {
    let (name, seq) = match ev {
        SessionEvent::Step { event } => ("step", event.seq),
        SessionEvent::Phase { seq, .. } => ("phase", *seq),
    };
    Event::default()
        .event(name)
        .id(seq.to_string())
        .json_data(ev)
        .unwrap_or_else(|_| Event::default().event("error").data("unserializable event"))
}

/// A reconnecting client sends the last seq it saw as `Last-Event-ID` and
/// only gets later steps.
pub async fn stream(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    // Subscribe before reading the trace so nothing falls in between.
    let mut feed = Feed {
        id,
        copilot: state.copilot.clone(),
        rx: state.events.subscribe(),
        pending: VecDeque::new(),
        last_seq: headers
            .get("last-event-id")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(0),
    };
    feed.catch_up()?;
    let events = stream::unfold(feed, |mut feed| async move {
        let ev = feed.next().await?;
        Some((Ok(to_sse(&ev)), feed))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}
