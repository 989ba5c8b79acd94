//! Local HTTP stand-in for the remote media API.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};

pub const TOKEN: &str = "secret";

#[derive(Clone)]
pub enum Route {
    Json(String),
    Bytes(Vec<u8>),
    /// Answers 503 for the first `n` hits, then serves the bytes.
    FailFirst(usize, Vec<u8>),
    Status(u16),
}

pub struct StubServer {
    pub base: String,
    routes: Arc<Mutex<HashMap<String, Route>>>,
    hits: Arc<Mutex<HashMap<String, usize>>>,
    server: Arc<Server>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start() -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind stub server"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let routes: Arc<Mutex<HashMap<String, Route>>> = Arc::default();
        let hits: Arc<Mutex<HashMap<String, usize>>> = Arc::default();
        let thread = {
            let (server, routes, hits) = (server.clone(), routes.clone(), hits.clone());
            std::thread::spawn(move || {
                for req in server.incoming_requests() {
                    let url = req.url().to_string();
                    let n = {
                        let mut h = hits.lock().unwrap();
                        let c = h.entry(url.clone()).or_default();
                        *c += 1;
                        *c
                    };
                    let authorized = req
                        .headers()
                        .iter()
                        .any(|h| h.field.equiv("Authorization") && h.value.as_str() == format!("Token {TOKEN}"));
                    let route = routes.lock().unwrap().get(&url).cloned();
                    let resp = match (authorized, route) {
                        (false, _) => Response::from_string("denied").with_status_code(401),
                        (true, None) => Response::from_string("missing").with_status_code(404),
                        (true, Some(Route::Json(body))) => Response::from_string(body)
                            .with_header(Header::from_bytes("Content-Type", "application/json").unwrap()),
                        (true, Some(Route::Bytes(b))) => Response::from_data(b),
                        (true, Some(Route::FailFirst(k, b))) if n > k => Response::from_data(b),
                        (true, Some(Route::FailFirst(..))) => Response::from_string("busy").with_status_code(503),
                        (true, Some(Route::Status(s))) => Response::from_string("err").with_status_code(s),
                    };
                    let _ = req.respond(resp);
                }
            })
        };
        Self {
            base: format!("http://127.0.0.1:{port}"),
            routes,
            hits,
            server,
            thread: Some(thread),
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/api", self.base)
    }

    pub fn set(&self, path: &str, route: Route) {
        self.routes.lock().unwrap().insert(path.to_string(), route);
    }

    pub fn hits(&self, path: &str) -> usize {
        self.hits.lock().unwrap().get(path).copied().unwrap_or(0)
    }

    /// Three annotated images over three listing pages, one page linked by
    /// absolute URL and one by cursor, plus an image without annotations.
    /// The second media file fails once before succeeding.
    pub fn standard_project(&self) {
        let page1 = json!({
            "next": format!("{}/api/media/?page=2", self.base),
            "results": [
                record("cam1-001", "/files/a.png", 64, 48, &[("Red Deer", [4.0, 4.0, 20.0, 30.0])]),
                record("cam1-002", "/files/b.png", 64, 48, &[("Wild Boar", [10.0, 5.0, 40.0, 40.0]), ("Red Deer", [0.0, 0.0, 8.0, 8.0])]),
            ]
        });
        let page2 = json!({
            "next": "c3",
            "results": [
                record("cam2-007", "/files/empty.png", 64, 48, &[]),
            ]
        });
        let page3 = json!({
            "next": null,
            "results": [
                record("cam2-010", "/files/c.png", 32, 32, &[("Fox", [1.0, 1.0, 31.0, 31.0])]),
            ]
        });
        self.set("/api/media/", Route::Json(page1.to_string()));
        self.set("/api/media/?page=2", Route::Json(page2.to_string()));
        self.set("/api/media/?cursor=c3", Route::Json(page3.to_string()));
        self.set("/files/a.png", Route::Bytes(png(64, 48, 1)));
        self.set("/files/b.png", Route::FailFirst(1, png(64, 48, 2)));
        self.set("/files/c.png", Route::Bytes(png(32, 32, 3)));
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn record(id: &str, url: &str, w: u32, h: u32, boxes: &[(&str, [f64; 4])]) -> Value {
    json!({
        "id": id,
        "download_url": url,
        "width": w,
        "height": h,
        "location_id": id.split('-').next().unwrap(),
        "annotations": boxes
            .iter()
            .map(|(s, b)| json!({"species": s, "bbox": b}))
            .collect::<Vec<_>>(),
    })
}

/// Bytes that start like a PNG of the given size. `salt` makes the content
/// unique so each file gets its own content address.
pub fn png(w: u32, h: u32, salt: u8) -> Vec<u8> {
    let mut v = vec![0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a, 0, 0, 0, 13];
    v.extend_from_slice(b"IHDR");
    v.extend_from_slice(&w.to_be_bytes());
    v.extend_from_slice(&h.to_be_bytes());
    v.extend_from_slice(&[8, 2, 0, 0, 0, 0, 0, 0, 0]);
    v.extend_from_slice(&[salt; 32]);
    v
}
