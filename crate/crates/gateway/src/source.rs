//! One reader thread per sensor stream.
//!
//! A reader opens its source, forwards every chunk it reads to the
//! aggregator in order, and reconnects with backoff when a TCP link drops.
//! A file source ends at end of file.

use std::fs::File;
use std::io::{ErrorKind, Read};
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::config::{reconnect, Reconnect, SourceConfig, SourceKind};

const CHUNK: usize = 4096;
const POLL: Duration = Duration::from_millis(100);

#[derive(Debug)]
pub(crate) enum Event {
    Connected(usize),
    Data(usize, Vec<u8>),
    Disconnected(usize),
    /// The reader is done. `error` is set when it never managed to connect.
    Finished { source: usize, error: Option<String> },
}

enum Stream {
    File(File),
    Tcp(TcpStream),
}

impl Stream {
    fn open(cfg: &SourceConfig) -> std::io::Result<Self> {
        match cfg.kind {
            SourceKind::File => File::open(&cfg.address).map(Stream::File),
            SourceKind::Tcp => {
                let s = TcpStream::connect(&cfg.address)?;
                s.set_read_timeout(Some(POLL))?;
                Ok(Stream::Tcp(s))
            }
        }
    }

    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        match self {
            Stream::File(f) => f.read(buf),
            Stream::Tcp(s) => s.read(buf),
        }
    }
}

fn sleep_unless_stopped(d: Duration, stop: &AtomicBool) {
    let until = Instant::now() + d;
    while !stop.load(Ordering::Relaxed) {
        let now = Instant::now();
        if now >= until {
            return;
        }
        std::thread::sleep((until - now).min(POLL));
    }
}

pub(crate) fn spawn_reader(
    index: usize,
    cfg: SourceConfig,
    tx: Sender<Event>,
    stop: Arc<AtomicBool>,
) -> std::io::Result<JoinHandle<()>> {
    std::thread::Builder::new()
        .name(format!("source-{index}"))
        .spawn(move || read_source(index, &cfg, &tx, &stop))
}

fn read_source(index: usize, cfg: &SourceConfig, tx: &Sender<Event>, stop: &AtomicBool) {
    let mut attempt = 0u32;
    let mut connected_once = false;
    let mut last_error = String::new();
    let mut buf = vec![0u8; CHUNK];
    let finish = |error| {
        let _ = tx.send(Event::Finished { source: index, error });
    };
    while !stop.load(Ordering::Relaxed) {
        match Stream::open(cfg) {
            Ok(mut stream) => {
                attempt = 0;
                connected_once = true;
                let _ = tx.send(Event::Connected(index));
                loop {
                    if stop.load(Ordering::Relaxed) {
                        return finish(None);
                    }
                    match stream.read(&mut buf) {
                        Ok(0) => break,
                        Ok(n) => {
                            if tx.send(Event::Data(index, buf[..n].to_vec())).is_err() {
                                return;
                            }
                        }
                        Err(e) if matches!(e.kind(), ErrorKind::Interrupted) => {}
                        Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                        Err(e) => {
                            last_error = e.to_string();
                            break;
                        }
                    }
                }
                if cfg.kind == SourceKind::File {
                    return finish(None);
                }
                let _ = tx.send(Event::Disconnected(index));
            }
            Err(e) => last_error = e.to_string(),
        }
        attempt += 1;
        match reconnect(cfg, attempt) {
            Reconnect::After(d) => sleep_unless_stopped(d, stop),
            Reconnect::GiveUp => break,
        }
    }
    finish((!connected_once).then(|| {
        format!("{} unreachable after {} attempts: {last_error}", cfg.address, attempt)
    }))
}
