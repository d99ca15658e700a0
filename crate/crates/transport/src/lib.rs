//! Real-network message delivery for the membership protocol.
//!
//! Two channels per agent, mirroring the protocol's needs:
//!
//! - an unreliable datagram channel (UDP) for probes, acks and gossip;
//! - a reliable request/response channel (TCP, length-prefixed frames)
//!   for the fallback direct probe and push-pull state syncs.
//!
//! All inbound traffic from both sockets is funneled into one event
//! stream so the consumer can drive a strictly serialized protocol state
//! machine. Reader threads never invoke the consumer; they only feed the
//! channel.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, Sender};
use shoal_core::MAX_DATAGRAM;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("payload of {0} bytes exceeds the datagram limit")]
    Oversize(usize),
    #[error("invalid address {0:?}")]
    Address(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("reliable exchange timed out")]
    Deadline,
    #[error("peer closed the connection early")]
    Closed,
}

/// One inbound event, delivered in arrival order.
#[derive(Debug)]
pub enum TransportEvent {
    /// A datagram from the unreliable channel.
    Datagram { from: SocketAddr, bytes: Vec<u8> },
    /// A request frame from the reliable channel; the consumer must answer
    /// through `reply` (an empty reply closes the exchange without data).
    Request {
        from: SocketAddr,
        bytes: Vec<u8>,
        reply: mpsc::Sender<Vec<u8>>,
    },
    /// The response to a [`NetTransport::request_reliable`] call issued by
    /// this agent, or the error it ended with.
    Response {
        to: String,
        result: Result<Vec<u8>, TransportError>,
    },
}

/// UDP + TCP backend bound to one address. Addresses are `host:port`
/// strings throughout.
pub struct NetTransport {
    udp: UdpSocket,
    local: SocketAddr,
    events_rx: Receiver<TransportEvent>,
    events_tx: Sender<TransportEvent>,
}

impl NetTransport {
    /// Binds the datagram socket and the stream listener on `addr` and
    /// starts the reader threads.
    pub fn bind(addr: &str) -> Result<NetTransport, TransportError> {
        let udp = UdpSocket::bind(addr)?;
        let local = udp.local_addr()?;
        let tcp = TcpListener::bind(local)?;
        let (events_tx, events_rx) = unbounded();

        let udp_reader = udp.try_clone()?;
        let tx = events_tx.clone();
        thread::Builder::new()
            .name("udp-reader".into())
            .spawn(move || {
                let mut buf = vec![0u8; MAX_DATAGRAM + 64];
                loop {
                    match udp_reader.recv_from(&mut buf) {
                        Ok((len, from)) => {
                            let event = TransportEvent::Datagram {
                                from,
                                bytes: buf[..len].to_vec(),
                            };
                            if tx.send(event).is_err() {
                                return;
                            }
                        }
                        Err(_) => return,
                    }
                }
            })
            .expect("spawn udp reader");

        let tx = events_tx.clone();
        thread::Builder::new()
            .name("tcp-acceptor".into())
            .spawn(move || {
                for conn in tcp.incoming() {
                    let Ok(stream) = conn else { continue };
                    let tx = tx.clone();
                    thread::spawn(move || {
                        let _ = serve_connection(stream, tx);
                    });
                }
            })
            .expect("spawn tcp acceptor");

        Ok(NetTransport {
            udp,
            local,
            events_rx,
            events_tx,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    /// The single inbound event stream.
    pub fn events(&self) -> &Receiver<TransportEvent> {
        &self.events_rx
    }

    /// Best-effort datagram send. Never blocks on the peer; delivery may
    /// fail silently anywhere past the local socket.
    pub fn send_unreliable(&self, dest: &str, bytes: &[u8]) -> Result<(), TransportError> {
        if bytes.len() > MAX_DATAGRAM {
            return Err(TransportError::Oversize(bytes.len()));
        }
        let addr = resolve(dest)?;
        // An unreachable destination is the detector's problem, not ours.
        let _ = self.udp.send_to(bytes, addr);
        Ok(())
    }

    /// Starts a reliable request/response exchange; the outcome arrives on
    /// the event stream as [`TransportEvent::Response`] so the caller's
    /// event loop never blocks.
    pub fn request_reliable(&self, dest: &str, bytes: Vec<u8>, deadline: Duration) {
        let tx = self.events_tx.clone();
        let dest = dest.to_string();
        thread::spawn(move || {
            let result = reliable_exchange(&dest, &bytes, deadline);
            let _ = tx.send(TransportEvent::Response { to: dest, result });
        });
    }

    /// Blocking variant of [`request_reliable`], for joins and tests.
    pub fn request_reliable_blocking(
        &self,
        dest: &str,
        bytes: &[u8],
        deadline: Duration,
    ) -> Result<Vec<u8>, TransportError> {
        reliable_exchange(dest, bytes, deadline)
    }
}

fn resolve(dest: &str) -> Result<SocketAddr, TransportError> {
    dest.parse()
        .map_err(|_| TransportError::Address(dest.to_string()))
}

fn reliable_exchange(
    dest: &str,
    bytes: &[u8],
    deadline: Duration,
) -> Result<Vec<u8>, TransportError> {
    let addr = resolve(dest)?;
    let stream = TcpStream::connect_timeout(&addr, deadline)?;
    stream.set_read_timeout(Some(deadline))?;
    stream.set_write_timeout(Some(deadline))?;
    stream.set_nodelay(true)?;
    write_frame(&stream, bytes)?;
    read_frame(&stream)
}

fn serve_connection(stream: TcpStream, tx: Sender<TransportEvent>) -> Result<(), TransportError> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    stream.set_write_timeout(Some(Duration::from_secs(10)))?;
    stream.set_nodelay(true)?;
    let from = stream.peer_addr()?;
    let bytes = read_frame(&stream)?;
    let (reply_tx, reply_rx) = mpsc::channel();
    tx.send(TransportEvent::Request {
        from,
        bytes,
        reply: reply_tx,
    })
    .map_err(|_| TransportError::Closed)?;
    // The consumer's event loop produces the response.
    let response = reply_rx
        .recv_timeout(Duration::from_secs(10))
        .map_err(|_| TransportError::Deadline)?;
    if !response.is_empty() {
        write_frame(&stream, &response)?;
    }
    Ok(())
}

fn write_frame(mut stream: &TcpStream, bytes: &[u8]) -> Result<(), TransportError> {
    stream.write_all(&(bytes.len() as u32).to_le_bytes())?;
    stream.write_all(bytes)?;
    stream.flush()?;
    Ok(())
}

fn read_frame(mut stream: &TcpStream) -> Result<Vec<u8>, TransportError> {
    let mut len_buf = [0u8; 4];
    stream.read_exact(&mut len_buf)?;
    let len = u32::from_le_bytes(len_buf) as usize;
    let mut buf = vec![0u8; len];
    stream.read_exact(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> (NetTransport, NetTransport) {
        let a = NetTransport::bind("127.0.0.1:0").unwrap();
        let b = NetTransport::bind("127.0.0.1:0").unwrap();
        (a, b)
    }

    #[test]
    fn datagram_delivered_once_on_loopback() {
        let (a, b) = pair();
        a.send_unreliable(&b.local_addr().to_string(), b"hello")
            .unwrap();
        match b.events().recv_timeout(Duration::from_secs(2)).unwrap() {
            TransportEvent::Datagram { bytes, .. } => assert_eq!(bytes, b"hello"),
            other => panic!("unexpected event {other:?}"),
        }
        assert!(b
            .events()
            .recv_timeout(Duration::from_millis(100))
            .is_err());
    }

    #[test]
    fn oversize_datagram_rejected_locally() {
        let (a, b) = pair();
        let big = vec![0u8; MAX_DATAGRAM + 1];
        match a.send_unreliable(&b.local_addr().to_string(), &big) {
            Err(TransportError::Oversize(n)) => assert_eq!(n, MAX_DATAGRAM + 1),
            other => panic!("expected oversize rejection, got {other:?}"),
        }
    }

    #[test]
    fn unreachable_destination_drops_silently() {
        let (a, _b) = pair();
        // Port 9 on localhost: nobody home, still no error.
        a.send_unreliable("127.0.0.1:9", b"gone").unwrap();
    }

    #[test]
    fn reliable_round_trip() {
        let (a, b) = pair();
        let b_addr = b.local_addr().to_string();
        let echo = thread::spawn(move || {
            match b.events().recv_timeout(Duration::from_secs(5)).unwrap() {
                TransportEvent::Request { bytes, reply, .. } => {
                    let mut out = bytes;
                    out.reverse();
                    reply.send(out).unwrap();
                }
                other => panic!("unexpected event {other:?}"),
            }
        });
        let resp = a
            .request_reliable_blocking(&b_addr, b"abc", Duration::from_secs(5))
            .unwrap();
        assert_eq!(resp, b"cba");
        echo.join().unwrap();
    }

    #[test]
    fn reliable_large_payload_transfers_intact() {
        let (a, b) = pair();
        let b_addr = b.local_addr().to_string();
        let payload: Vec<u8> = (0..100_000u32).flat_map(|i| i.to_le_bytes()).collect();
        let expect = payload.clone();
        let server = thread::spawn(move || {
            match b.events().recv_timeout(Duration::from_secs(5)).unwrap() {
                TransportEvent::Request { bytes, reply, .. } => {
                    assert_eq!(bytes, expect);
                    reply.send(vec![1]).unwrap();
                }
                other => panic!("unexpected event {other:?}"),
            }
        });
        let resp = a
            .request_reliable_blocking(&b_addr, &payload, Duration::from_secs(5))
            .unwrap();
        assert_eq!(resp, vec![1]);
        server.join().unwrap();
    }

    #[test]
    fn reliable_to_dead_peer_fails_before_deadline() {
        let a = NetTransport::bind("127.0.0.1:0").unwrap();
        let start = std::time::Instant::now();
        let res =
            a.request_reliable_blocking("127.0.0.1:1", b"x", Duration::from_millis(500));
        assert!(res.is_err());
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn async_request_reports_back_on_event_stream() {
        let (a, b) = pair();
        let b_addr = b.local_addr().to_string();
        thread::spawn(move || {
            if let Ok(TransportEvent::Request { bytes, reply, .. }) =
                b.events().recv_timeout(Duration::from_secs(5))
            {
                reply.send(bytes).unwrap();
            }
        });
        a.request_reliable(&b_addr, b"ping".to_vec(), Duration::from_secs(5));
        match a.events().recv_timeout(Duration::from_secs(5)).unwrap() {
            TransportEvent::Response { result, .. } => {
                assert_eq!(result.unwrap(), b"ping");
            }
            other => panic!("unexpected event {other:?}"),
        }
    }

    #[test]
    fn end_to_end_bytes_decode_to_the_encoded_envelope() {
        use shoal_core::{codec, Body, Envelope, MemberId};
        let (a, b) = pair();
        let envelope = Envelope {
            sender: MemberId::new(a.local_addr().to_string()),
            seq: 9,
            body: Body::Ping { updates: vec![] },
        };
        let bytes = codec::encode_datagram(&envelope).unwrap();
        a.send_unreliable(&b.local_addr().to_string(), &bytes)
            .unwrap();
        match b.events().recv_timeout(Duration::from_secs(2)).unwrap() {
            TransportEvent::Datagram { bytes, .. } => {
                assert_eq!(codec::decode(&bytes).unwrap(), envelope);
            }
            other => panic!("unexpected event {other:?}"),
        }
    }
}
