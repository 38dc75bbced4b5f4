//! Serves the extracted stream on a local port, reads from it with a rate
//! cap, and shuts down.

use std::io::Read;
use std::net::TcpStream;
use std::sync::atomic::Ordering;
use std::time::Instant;

use qrng_core::pipeline::PipelineConfig;
use qrng_core::serve::Server;

fn main() -> qrng_core::Result<()> {
    let config = PipelineConfig {
        rate_cap: Some(4e6),
        ..PipelineConfig::default()
    };
    let server = Server::bind(config, "127.0.0.1:0")?;
    let addr = server.local_addr()?;
    let stats = server.stats();
    let stop = server.stop_handle();
    let handle = server.spawn();
    println!("listening on {addr}, generated so far: {}", stats.generated_bits.load(Ordering::Relaxed));

    let mut client = TcpStream::connect(addr).expect("connect");
    let mut buf = vec![0u8; 500_000];
    let start = Instant::now();
    client.read_exact(&mut buf).expect("read");
    let secs = start.elapsed().as_secs_f64();
    println!("read {} bytes in {secs:.2} s ({:.2} Mbit/s)", buf.len(), buf.len() as f64 * 8.0 / secs / 1e6);
    println!("first bytes {:02x?}", &buf[..8]);

    drop(client);
    stop.store(true, Ordering::Relaxed);
    handle.join().expect("server thread")?;
    println!("generated {} bits in total", stats.generated_bits.load(Ordering::Relaxed));
    Ok(())
}
