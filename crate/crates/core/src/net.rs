//! Blocking TCP plumbing: one frame in, one frame out per turn.

use std::io;
use std::net::{IpAddr, Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::protocol::{Frame, ProtocolError};

const IDLE_TIMEOUT: Duration = Duration::from_secs(60);

/// Answers one request frame. `None` drops the connection without a reply.
pub type Handler = Arc<dyn Fn(Frame, SocketAddr) -> Option<Frame> + Send + Sync>;

pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(&mut self) {
        if self.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        // Wake the blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(500));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves `handler` on `listener` until stopped. When `allowed_peers` is
/// non-empty, connections from any other address are closed unanswered.
pub fn serve(
    listener: TcpListener,
    handler: Handler,
    allowed_peers: Vec<IpAddr>,
) -> io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    let thread = thread::Builder::new()
        .name(format!("accept-{addr}"))
        .spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let stream = match conn {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("accept on {addr}: {e}");
                        continue;
                    }
                };
                let peer = match stream.peer_addr() {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                if !allowed_peers.is_empty() && !allowed_peers.contains(&peer.ip()) {
                    log::warn!("{addr}: refusing connection from {peer}");
                    let _ = stream.shutdown(Shutdown::Both);
                    continue;
                }
                let handler = handler.clone();
                let _ = thread::Builder::new()
                    .name(format!("conn-{peer}"))
                    .spawn(move || connection(stream, peer, handler));
            }
        })?;
    Ok(ServerHandle {
        addr,
        shutdown,
        thread: Some(thread),
    })
}

fn connection(mut stream: TcpStream, peer: SocketAddr, handler: Handler) {
    let _ = stream.set_read_timeout(Some(IDLE_TIMEOUT));
    let _ = stream.set_nodelay(true);
    loop {
        let frame = match Frame::read_from(&mut stream) {
            Ok(Some(f)) => f,
            Ok(None) => return,
            Err(e) => {
                log::debug!("{peer}: {e}");
                return;
            }
        };
        match handler(frame, peer) {
            Some(reply) => {
                if reply.write_to(&mut stream).is_err() {
                    return;
                }
            }
            None => {
                let _ = stream.shutdown(Shutdown::Both);
                return;
            }
        }
    }
}

/// Opens a connection, sends one frame, and waits for one reply.
pub fn request<A: ToSocketAddrs>(
    addr: A,
    frame: &Frame,
    timeout: Duration,
) -> Result<Frame, ProtocolError> {
    let addr = addr
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
    let mut stream = TcpStream::connect_timeout(&addr, timeout)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    stream.set_nodelay(true)?;
    frame.write_to(&mut stream)?;
    Frame::read_from(&mut stream)?.ok_or(ProtocolError::TruncatedFrame)
}
