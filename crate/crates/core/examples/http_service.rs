//! Drive the REST service in-process. Pass `--serve` to listen on the
//! default port instead.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request};
use dpcl::http;
use dpcl::session::SessionStore;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: Method, uri: &str, body: String) -> Value {
    let req = Request::builder()
        .method(&method)
        .uri(uri)
        .body(Body::from(body))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    let value: Value = serde_json::from_slice(&bytes).unwrap();
    println!("{method} {uri} -> {status}");
    value
}

#[tokio::main]
async fn main() {
    let store = Arc::new(SessionStore::in_memory());
    if std::env::args().any(|a| a == "--serve") {
        let addr = ([127, 0, 0, 1], http::DEFAULT_PORT).into();
        println!("listening on http://{addr}");
        http::serve(addr, store).await.unwrap();
        return;
    }

    let app = http::router(store);
    let program = call(
        &app,
        Method::POST,
        "/programs",
        include_str!("../corpus/library.dpcl").into(),
    )
    .await;
    let session = call(
        &app,
        Method::POST,
        "/sessions",
        json!({ "program_id": program["program_id"] }).to_string(),
    )
    .await;
    let id = session["session_id"].as_str().unwrap().to_string();

    let steps = [
        json!({ "assert": { "name": "alice", "descriptors": ["student"], "properties": { "id_card": "c1" } } }),
        json!({ "assert": { "name": "library" } }),
        json!({ "do": { "actor": "alice", "event": "register", "refinements": { "instrument": "c1" } } }),
        json!({ "do": { "actor": "alice", "event": "borrow", "refinements": { "item": "book1" } } }),
        json!({ "advance": "1m" }),
        json!({ "advance": "1s" }),
    ];
    for step in steps {
        call(&app, Method::POST, &format!("/sessions/{id}/steps"), step.to_string()).await;
    }

    let violated = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/positions?violated=true"),
        String::new(),
    )
    .await;
    println!("{}", serde_json::to_string_pretty(&violated).unwrap());
    let enabled = call(
        &app,
        Method::GET,
        &format!("/sessions/{id}/enabled?actor=library"),
        String::new(),
    )
    .await;
    for action in enabled.as_array().unwrap() {
        println!("library may do {}", action["template"].as_str().unwrap());
    }
}
