//! The notary HTTP service: JSON endpoints over the in-process state
//! machine plus a background task that seals a block every interval.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{ConnectInfo, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use synchronic_core::notary::{Notary, NotaryError};
use synchronic_core::Digest;
use tracing::{error, info};

#[derive(Clone)]
struct AppState {
    notary: Arc<Mutex<Notary>>,
}

fn status_for(code: &str) -> StatusCode {
    match code {
        "too_late" | "conflict" => StatusCode::CONFLICT,
        "throttled" => StatusCode::TOO_MANY_REQUESTS,
        "gone" => StatusCode::GONE,
        "not_found" | "pending" => StatusCode::NOT_FOUND,
        "genesis_reserved" | "too_far_ahead" | "bad_range" | "invalid_digest" => {
            StatusCode::BAD_REQUEST
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error_response(err: NotaryError) -> Response {
    let body = serde_json::json!({ "error": err.code(), "message": err.to_string() });
    (status_for(err.code()), Json(body)).into_response()
}

#[derive(Deserialize)]
struct CommitRequest {
    index: u64,
    key: Digest,
    value: Digest,
}

async fn commit(
    State(state): State<AppState>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    Json(request): Json<CommitRequest>,
) -> Response {
    let source = peer.ip().to_string();
    let mut notary = state.notary.lock().expect("notary lock");
    match notary.submit_commit(&source, request.index, request.key, request.value) {
        Ok(promise) => Json(promise).into_response(),
        Err(err) => error_response(err),
    }
}

#[derive(Deserialize)]
struct ProofQuery {
    index: u64,
    key: String,
}

async fn proof(State(state): State<AppState>, Query(query): Query<ProofQuery>) -> Response {
    let key = match Digest::from_hex(&query.key) {
        Ok(key) => key,
        Err(e) => {
            let body = serde_json::json!({ "error": "invalid_digest", "message": e.to_string() });
            return (StatusCode::BAD_REQUEST, Json(body)).into_response();
        }
    };
    let notary = state.notary.lock().expect("notary lock");
    match notary.get_proof(query.index, &key) {
        Ok(siblings) => Json(serde_json::json!({ "siblings": siblings })).into_response(),
        Err(err) => error_response(err),
    }
}

#[derive(Deserialize)]
struct BlockQuery {
    index: u64,
}

async fn block(State(state): State<AppState>, Query(query): Query<BlockQuery>) -> Response {
    let notary = state.notary.lock().expect("notary lock");
    match notary.get_block(query.index) {
        Ok(block) => Json(block).into_response(),
        Err(err) => error_response(err),
    }
}

#[derive(Deserialize)]
struct ChainQuery {
    from: u64,
    to: u64,
}

async fn chain(State(state): State<AppState>, Query(query): Query<ChainQuery>) -> Response {
    let notary = state.notary.lock().expect("notary lock");
    match notary.get_chain(query.from, query.to) {
        Ok(blocks) => Json(blocks).into_response(),
        Err(err) => error_response(err),
    }
}

async fn current(State(state): State<AppState>) -> Response {
    let notary = state.notary.lock().expect("notary lock");
    Json(serde_json::json!({ "index": notary.current_index() })).into_response()
}

/// Binds, seals genesis if the chain is fresh, spawns the interval sealer,
/// and serves until the process is killed. Prints the bound address on
/// stdout so scripts can pick up an ephemeral port.
pub async fn run(notary: Notary, listen: SocketAddr) -> anyhow::Result<()> {
    let block_interval = notary.config().block_interval;
    let notary_id = notary.config().notary_id.clone();
    let state = AppState { notary: Arc::new(Mutex::new(notary)) };

    {
        let mut notary = state.notary.lock().expect("notary lock");
        if notary.current_index() == 0 {
            notary.seal_block(0)?;
            info!("sealed genesis block");
        }
    }

    let sealer_state = state.clone();
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(block_interval);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            ticker.tick().await;
            let mut notary = sealer_state.notary.lock().expect("notary lock");
            let index = notary.current_index();
            match notary.seal_block(index) {
                Ok(block) => info!(index, payload = %block.payload, "sealed block"),
                Err(err) => error!(index, %err, "seal failed"),
            }
        }
    });

    let app = Router::new()
        .route("/commit", post(commit))
        .route("/proof", get(proof))
        .route("/block", get(block))
        .route("/chain", get(chain))
        .route("/current", get(current))
        .with_state(state);

    let listener = tokio::net::TcpListener::bind(listen).await?;
    let addr = listener.local_addr()?;
    println!("notary {notary_id} listening on http://{addr}");
    use std::io::Write;
    std::io::stdout().flush().ok();

    axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>()).await?;
    Ok(())
}
