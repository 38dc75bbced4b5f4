//! TCP delivery of the extracted stream.
//!
//! Every client gets its own pipeline, so each connection receives the same
//! byte stream a file run with the same config would produce. Nothing is
//! generated until a client connects, and a slow reader stalls its own
//! pipeline rather than losing bits.

use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::pipeline::{write_paced, PipelineConfig, PipelineStream, RateLimiter};

const ACCEPT_POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Default)]
pub struct ServerStats {
    pub generated_bits: AtomicU64,
    pub sent_bytes: AtomicU64,
    pub clients_served: AtomicUsize,
    pub active_clients: AtomicUsize,
}

pub struct Server {
    listener: TcpListener,
    config: Arc<PipelineConfig>,
    stop: Arc<AtomicBool>,
    stats: Arc<ServerStats>,
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(config: PipelineConfig, addr: A) -> Result<Self> {
        config.validate()?;
        let listener = TcpListener::bind(addr).map_err(Error::io("bind"))?;
        listener.set_nonblocking(true).map_err(Error::io("bind"))?;
        Ok(Self {
            listener,
            config: Arc::new(config),
            stop: Arc::new(AtomicBool::new(false)),
            stats: Arc::new(ServerStats::default()),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.listener.local_addr().map_err(Error::io("bind"))
    }

    pub fn stats(&self) -> Arc<ServerStats> {
        Arc::clone(&self.stats)
    }

    /// Flag that ends [`Server::run`] and all client sessions when set.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    /// Accepts clients until stopped. Each client runs on its own thread.
    pub fn run(self) -> Result<()> {
        let mut sessions = Vec::new();
        while !self.stop.load(Ordering::Relaxed) {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    let config = Arc::clone(&self.config);
                    let stop = Arc::clone(&self.stop);
                    let stats = Arc::clone(&self.stats);
                    sessions.push(thread::spawn(move || {
                        stats.active_clients.fetch_add(1, Ordering::Relaxed);
                        // a failed session only ends that client
                        let _ = serve_client(&config, stream, &stop, &stats);
                        stats.active_clients.fetch_sub(1, Ordering::Relaxed);
                        stats.clients_served.fetch_add(1, Ordering::Relaxed);
                    }));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
                Err(e) => return Err(Error::Io { stage: "accept", source: e }),
            }
            sessions.retain(|h| !h.is_finished());
        }
        for h in sessions {
            let _ = h.join();
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> thread::JoinHandle<Result<()>> {
        thread::spawn(move || self.run())
    }
}

fn serve_client(config: &PipelineConfig, mut stream: TcpStream, stop: &AtomicBool, stats: &ServerStats) -> Result<()> {
    stream.set_nonblocking(false).map_err(Error::io("client socket"))?;
    stream.set_nodelay(true).map_err(Error::io("client socket"))?;
    let mut pipeline = PipelineStream::simulated(config, None)?;
    let mut limiter = config.rate_cap.map(RateLimiter::new);
    let mut generated = 0u64;
    while !stop.load(Ordering::Relaxed) {
        let Some(chunk) = pipeline.next_chunk()? else {
            break;
        };
        let bits = pipeline.counters().bits_out;
        stats.generated_bits.fetch_add(bits - generated, Ordering::Relaxed);
        generated = bits;
        write_paced(&mut stream, &chunk, limiter.as_mut()).map_err(Error::io("send"))?;
        stats.sent_bytes.fetch_add(chunk.len() as u64, Ordering::Relaxed);
    }
    stream.flush().map_err(Error::io("send"))
}

/// Binds and serves until the process exits.
pub fn serve<A: ToSocketAddrs>(config: PipelineConfig, addr: A) -> Result<()> {
    Server::bind(config, addr)?.run()
}
