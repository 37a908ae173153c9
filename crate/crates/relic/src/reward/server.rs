//! Serves the synthetic oracle over the wire protocol so client code can be
//! exercised against a real HTTP boundary. One endpoint: `POST /v1/score`.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use tiny_http::{Header, Method, Request, Response, Server};

use super::oracle::{synthetic_oracle_score, SyntheticOracleConfig};
use super::{RewardError, WireReply, WireRequest};

/// Handle to a background oracle server. Dropping it stops the server.
pub struct OracleServer {
    port: u16,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl OracleServer {
    pub fn port(&self) -> u16 {
        self.port
    }

    /// Base URL suitable for [`super::RemoteModel::new`].
    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    /// Stops the accept loop and waits for it to exit.
    pub fn shutdown(mut self) {
        self.stop_worker();
    }

    fn stop_worker(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for OracleServer {
    fn drop(&mut self) {
        self.stop_worker();
    }
}

fn bind(addr: &str) -> Result<Server, RewardError> {
    Server::http(addr).map_err(|e| RewardError::Backend {
        detail: format!("bind {addr}: {e}"),
    })
}

/// Starts the oracle server on a background thread. Binding to port 0 picks
/// a free port; read it back from the returned handle.
pub fn spawn_oracle_server(
    addr: &str,
    cfg: SyntheticOracleConfig,
) -> Result<OracleServer, RewardError> {
    let server = bind(addr)?;
    let port = server
        .server_addr()
        .to_ip()
        .map(|a| a.port())
        .ok_or_else(|| RewardError::Backend {
            detail: format!("bind {addr}: no ip address"),
        })?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = Arc::clone(&stop);
    let worker = std::thread::spawn(move || {
        while !stop_flag.load(Ordering::SeqCst) {
            match server.recv_timeout(Duration::from_millis(25)) {
                Ok(Some(request)) => handle(request, &cfg),
                Ok(None) => {}
                Err(_) => break,
            }
        }
    });
    Ok(OracleServer {
        port,
        stop,
        worker: Some(worker),
    })
}

/// Runs the oracle server on the calling thread until the process ends.
pub fn serve_oracle_blocking(addr: &str, cfg: SyntheticOracleConfig) -> Result<(), RewardError> {
    let server = bind(addr)?;
    if let Some(ip) = server.server_addr().to_ip() {
        log::info!("oracle listening on http://{ip}");
    }
    for request in server.incoming_requests() {
        handle(request, &cfg);
    }
    Ok(())
}

fn handle(mut request: Request, cfg: &SyntheticOracleConfig) {
    let (status, body) = respond_to(&mut request, cfg);
    let header = "Content-Type: application/json"
        .parse::<Header>()
        .expect("static header");
    let response = Response::from_data(body.into_bytes())
        .with_status_code(status)
        .with_header(header);
    if let Err(e) = request.respond(response) {
        log::warn!("oracle reply failed: {e}");
    }
}

/// Status code and JSON body for one request. Requests that are not a
/// well-formed `POST /v1/score` never reach the oracle.
fn respond_to(request: &mut Request, cfg: &SyntheticOracleConfig) -> (u16, String) {
    if request.url() != "/v1/score" {
        return (404, error_body("unknown path"));
    }
    if request.method() != &Method::Post {
        return (405, error_body("use POST"));
    }
    let mut raw = String::new();
    if let Err(e) = request.as_reader().read_to_string(&mut raw) {
        return (400, error_body(&format!("unreadable body: {e}")));
    }
    let wire: WireRequest = match serde_json::from_str(&raw) {
        Ok(wire) => wire,
        Err(e) => return (400, error_body(&format!("bad request: {e}"))),
    };
    let prompt = match wire.into_prompt() {
        Ok(prompt) => prompt,
        Err(e) => return (400, error_body(&format!("bad request: {e}"))),
    };
    let score = synthetic_oracle_score(cfg, &prompt);
    let reply = WireReply { score: score.0 };
    (200, serde_json::to_string(&reply).expect("reply serializes"))
}

fn error_body(detail: &str) -> String {
    serde_json::json!({ "error": detail }).to_string()
}
