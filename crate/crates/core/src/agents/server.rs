//! Minimal `/v1` server wrapping any [`Backend`]. Used for loopback testing
//! and for exposing stub populations to external tooling.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use super::{ActRequest, Backend, BackendError, ErrorBody, HealthResponse, SurveyRequest};

pub struct BackendServer {
    addr: SocketAddr,
    server: Arc<Server>,
    worker: Option<JoinHandle<()>>,
}

impl BackendServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves requests
    /// on a background thread until dropped.
    pub fn start<B>(backend: B, health: HealthResponse, addr: &str) -> std::io::Result<Self>
    where
        B: Backend + Send + 'static,
    {
        let server = Server::http(addr).map_err(std::io::Error::other)?;
        let server = Arc::new(server);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
        let backend = Arc::new(Mutex::new(backend));
        let listener = Arc::clone(&server);
        let worker = std::thread::spawn(move || {
            for request in listener.incoming_requests() {
                let mut guard = backend.lock().unwrap_or_else(|e| e.into_inner());
                handle(request, &mut *guard, &health);
            }
        });
        Ok(BackendServer {
            addr,
            server,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server thread exits (it only does so once unblocked).
    pub fn join(mut self) {
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for BackendServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

fn json_response<T: Serialize>(status: u16, body: &T) -> Response<std::io::Cursor<Vec<u8>>> {
    let bytes = serde_json::to_vec(body).expect("response types serialize");
    Response::from_data(bytes)
        .with_status_code(status)
        .with_header(
            "Content-Type: application/json"
                .parse::<Header>()
                .expect("static header"),
        )
}

fn error_response(status: u16, message: String) -> Response<std::io::Cursor<Vec<u8>>> {
    json_response(status, &ErrorBody { error: message })
}

fn backend_failure(err: BackendError) -> Response<std::io::Cursor<Vec<u8>>> {
    match err {
        BackendError::Application { status, message } => error_response(status, message),
        other => error_response(500, other.to_string()),
    }
}

fn handle<B: Backend + ?Sized>(mut request: Request, backend: &mut B, health: &HealthResponse) {
    let mut body = String::new();
    let response = if request.as_reader().read_to_string(&mut body).is_err() {
        error_response(400, "request body is not UTF-8".into())
    } else {
        match (request.method(), request.url()) {
            (Method::Get, "/v1/health") => json_response(200, health),
            (Method::Post, "/v1/act") => match serde_json::from_str::<ActRequest>(&body) {
                Ok(req) => match backend.act(&req) {
                    Ok(resp) => json_response(200, &resp),
                    Err(err) => backend_failure(err),
                },
                Err(e) => error_response(400, format!("malformed act request: {e}")),
            },
            (Method::Post, "/v1/survey") => match serde_json::from_str::<SurveyRequest>(&body) {
                Ok(req) => match backend.survey(&req) {
                    Ok(resp) => json_response(200, &resp),
                    Err(err) => backend_failure(err),
                },
                Err(e) => error_response(400, format!("malformed survey request: {e}")),
            },
            (_, url) => error_response(404, format!("no route for {url}")),
        }
    };
    if let Err(e) = request.respond(response) {
        log::warn!("failed to send response: {e}");
    }
}
