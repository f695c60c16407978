#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use bodynet_core::metrics::SessionSummary;
use bodynet_core::wire::{NewUser, SampleRecord, SensorKind, WorkoutRecord};
use uuid::Uuid;

/// Minimal HTTP endpoint that counts requests and keeps their bodies.
pub struct CountingEndpoint {
    pub addr: SocketAddr,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<String>>>,
}

impl CountingEndpoint {
    pub fn start(status: u16) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let (h, b) = (hits.clone(), bodies.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                h.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0; len];
                let _ = reader.read_exact(&mut body);
                b.lock().unwrap().push(String::from_utf8_lossy(&body).into_owned());
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-length: 0\r\nconnection: close\r\n\r\n"
                );
            }
        });
        Self { addr, hits, bodies }
    }

    pub fn url(&self) -> String {
        format!("http://{}/hook", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<String> {
        self.bodies.lock().unwrap().clone()
    }
}

pub fn user(n: u128, name: &str) -> NewUser {
    NewUser { user_id: Uuid::from_u128(n), display_name: name.into(), external_ids: Default::default() }
}

pub fn workout(id: u128, user: Uuid, started_at: i64, duration_s: f64, hr: Option<f64>, dist: f64) -> WorkoutRecord {
    let mut summary = SessionSummary::empty(duration_s);
    summary.avg_hr_bpm = hr;
    summary.distance_m = dist;
    WorkoutRecord {
        workout_id: Uuid::from_u128(id),
        user_id: user,
        started_at,
        duration_s,
        summary,
        summary_mismatch: false,
    }
}

pub fn samples(n: usize) -> Vec<SampleRecord> {
    (0..n)
        .map(|i| SampleRecord {
            sensor: match i % 4 {
                0 => SensorKind::Emg,
                1 => SensorKind::Hr,
                2 => SensorKind::Distance,
                _ => SensorKind::Strides,
            },
            offset_ms: (i as u64 / 4) * 2,
            value: (i as f64 * 0.7311).sin() * 1234.5678,
        })
        .collect()
}
