//! A recording TCP relay placed between clients and the system server: the
//! eavesdropper's view of the client channel.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ToServer,
    ToClient,
}

/// One contiguous read off one side of one relayed connection.
#[derive(Clone, Debug)]
pub struct Captured {
    pub connection: u64,
    pub direction: Direction,
    pub bytes: Vec<u8>,
}

pub struct CaptureProxy {
    addr: SocketAddr,
    log: Arc<Mutex<Vec<Captured>>>,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl CaptureProxy {
    pub fn start(upstream: SocketAddr) -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let log = Arc::new(Mutex::new(Vec::new()));
        let shutdown = Arc::new(AtomicBool::new(false));
        let (l, flag) = (log.clone(), shutdown.clone());
        let thread = thread::Builder::new()
            .name("capture-proxy".into())
            .spawn(move || {
                let mut next_id = 0u64;
                for conn in listener.incoming() {
                    if flag.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(client) = conn else { continue };
                    let Ok(server) = TcpStream::connect_timeout(&upstream, Duration::from_secs(5))
                    else {
                        let _ = client.shutdown(Shutdown::Both);
                        continue;
                    };
                    next_id += 1;
                    relay(next_id, client, server, l.clone());
                }
            })?;
        Ok(Self {
            addr,
            log,
            shutdown,
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn captured(&self) -> Vec<Captured> {
        self.log.lock().unwrap().clone()
    }

    /// Concatenation of everything seen, per connection and direction.
    pub fn streams(&self) -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<(String, Vec<u8>)> = Vec::new();
        for c in self.log.lock().unwrap().iter() {
            let name = format!(
                "conn-{}/{}",
                c.connection,
                match c.direction {
                    Direction::ToServer => "client-to-system",
                    Direction::ToClient => "system-to-client",
                }
            );
            match out.iter_mut().find(|(n, _)| *n == name) {
                Some((_, bytes)) => bytes.extend_from_slice(&c.bytes),
                None => out.push((name, c.bytes.clone())),
            }
        }
        out
    }

    pub fn clear(&self) {
        self.log.lock().unwrap().clear();
    }

    pub fn stop(&mut self) {
        if self.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(500));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for CaptureProxy {
    fn drop(&mut self) {
        self.stop();
    }
}

fn relay(id: u64, client: TcpStream, server: TcpStream, log: Arc<Mutex<Vec<Captured>>>) {
    let pairs = [
        (client.try_clone(), server.try_clone(), Direction::ToServer),
        (server.try_clone(), client.try_clone(), Direction::ToClient),
    ];
    for (from, to, direction) in pairs {
        let (Ok(mut from), Ok(mut to)) = (from, to) else {
            return;
        };
        let log = log.clone();
        let _ = thread::Builder::new()
            .name(format!("relay-{id}"))
            .spawn(move || {
                let mut buf = vec![0u8; 64 * 1024];
                loop {
                    let n = match from.read(&mut buf) {
                        Ok(0) | Err(_) => break,
                        Ok(n) => n,
                    };
                    log.lock().unwrap().push(Captured {
                        connection: id,
                        direction,
                        bytes: buf[..n].to_vec(),
                    });
                    if to.write_all(&buf[..n]).is_err() {
                        break;
                    }
                }
                let _ = to.shutdown(Shutdown::Write);
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{self, Handler};
    use crate::protocol::{recv_plain, send_plain, Message};

    #[test]
    fn relays_and_records_both_directions() {
        let handler: Handler = Arc::new(|_, _| Some(send_plain(&Message::Pong).unwrap()));
        let server = net::serve(
            TcpListener::bind("127.0.0.1:0").unwrap(),
            handler,
            Vec::new(),
        )
        .unwrap();
        let mut proxy = CaptureProxy::start(server.addr()).unwrap();
        let ping = send_plain(&Message::Ping).unwrap();
        let reply = net::request(proxy.addr(), &ping, Duration::from_secs(5)).unwrap();
        assert_eq!(recv_plain(&reply).unwrap(), Message::Pong);
        let streams = proxy.streams();
        assert_eq!(streams.len(), 2);
        assert_eq!(streams[0].1, ping.to_bytes());
        assert_eq!(streams[1].1, reply.to_bytes());
        proxy.stop();
    }
}
