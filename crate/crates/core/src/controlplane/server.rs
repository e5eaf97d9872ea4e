//! Control API transport.
//!
//! One listening socket serves two framings. A connection whose first bytes
//! are `GET ` is upgraded to a WebSocket (one JSON message per text frame,
//! for browsers); anything else is line-delimited JSON. Both carry
//! [`ServerMessage`] values outbound and [`ControlMessage`] values inbound.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use tungstenite::{Message, WebSocket};

use super::api::{parse_message, ControlPlane, ControlReply, ServerMessage, Session};
use super::bus::{BusError, Notice, StreamBody, StreamMessage, Subscription, EVENT_BUFFER};
use crate::num::Scalar;

enum Outbound {
    Text(String),
    Close,
}

fn encode<T: Scalar>(m: &ServerMessage<T>) -> String {
    serde_json::to_string(m).expect("server messages serialize")
}

/// Accepts connections until the listener fails, one thread per client.
pub fn serve<T: Scalar>(listener: TcpListener, plane: Arc<ControlPlane<T>>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let plane = plane.clone();
        thread::spawn(move || {
            let _ = handle_connection(stream, plane);
        });
    }
    Ok(())
}

pub fn handle_connection<T: Scalar>(
    stream: TcpStream,
    plane: Arc<ControlPlane<T>>,
) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut head = [0u8; 4];
    let n = loop {
        match stream.peek(&mut head) {
            Ok(n) if n >= 4 || n == 0 => break n,
            Ok(_) => thread::sleep(Duration::from_millis(2)),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    };
    if n == 4 && &head == b"GET " {
        serve_websocket(stream, plane)
    } else {
        serve_lines(stream, plane)
    }
}

/// Moves events from a bus subscription to the connection's outbound queue.
/// If the queue is full the client is not keeping up: it gets an overrun
/// notice and the connection is closed.
fn forward_events<T: Scalar>(mut sub: Subscription<T>, out: SyncSender<Outbound>) {
    thread::spawn(move || {
        let overrun = |out: &SyncSender<Outbound>, seq: u64, cap: usize| {
            let notice = ServerMessage::<T>::Event(StreamMessage {
                seq,
                body: StreamBody::Notice(Notice::BufferOverrun { capacity: cap }),
            });
            let _ = out.send(Outbound::Text(encode(&notice)));
            let _ = out.send(Outbound::Close);
        };
        let mut last_seq = 0;
        loop {
            match sub.recv() {
                Ok(msg) => {
                    last_seq = msg.seq;
                    match out.try_send(Outbound::Text(encode(&ServerMessage::Event(msg)))) {
                        Ok(()) => {}
                        Err(TrySendError::Full(_)) => {
                            overrun(&out, last_seq + 1, EVENT_BUFFER);
                            return;
                        }
                        Err(TrySendError::Disconnected(_)) => return,
                    }
                }
                Err(BusError::BufferOverrun(cap)) => {
                    overrun(&out, last_seq + 1, cap);
                    return;
                }
                Err(_) => return,
            }
        }
    });
}

fn dispatch_request<T: Scalar>(
    plane: &ControlPlane<T>,
    session: &mut Session,
    text: &str,
    out: &SyncSender<Outbound>,
) -> bool {
    let (reply, sub): (ControlReply<T>, _) = match parse_message::<T>(text) {
        Ok(msg) => plane.handle(session, msg),
        Err(reply) => (reply, None),
    };
    if out
        .send(Outbound::Text(encode(&ServerMessage::Reply(reply))))
        .is_err()
    {
        return false;
    }
    if let Some(sub) = sub {
        forward_events(sub, out.clone());
    }
    true
}

fn serve_lines<T: Scalar>(stream: TcpStream, plane: Arc<ControlPlane<T>>) -> io::Result<()> {
    let (tx, rx): (SyncSender<Outbound>, Receiver<Outbound>) = mpsc::sync_channel(EVENT_BUFFER);
    let mut write_half = stream.try_clone()?;
    let writer = thread::spawn(move || {
        for m in rx {
            match m {
                Outbound::Text(s) => {
                    if write_half
                        .write_all(s.as_bytes())
                        .and_then(|_| write_half.write_all(b"\n"))
                        .and_then(|_| write_half.flush())
                        .is_err()
                    {
                        break;
                    }
                }
                Outbound::Close => break,
            }
        }
        let _ = write_half.shutdown(Shutdown::Both);
    });

    let mut session = Session::new();
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        if !dispatch_request(&plane, &mut session, &line, &tx) {
            break;
        }
    }
    drop(tx);
    let _ = writer.join();
    Ok(())
}

fn serve_websocket<T: Scalar>(stream: TcpStream, plane: Arc<ControlPlane<T>>) -> io::Result<()> {
    let mut ws: WebSocket<TcpStream> =
        tungstenite::accept(stream).map_err(|e| io::Error::other(e.to_string()))?;
    ws.get_ref()
        .set_read_timeout(Some(Duration::from_millis(10)))?;
    let (tx, rx) = mpsc::sync_channel::<Outbound>(EVENT_BUFFER);
    let mut session = Session::new();
    'conn: loop {
        match ws.read() {
            Ok(Message::Text(text)) => {
                if !dispatch_request(&plane, &mut session, &text, &tx) {
                    break;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) => {}
            Err(_) => break,
        }
        while let Ok(m) = rx.try_recv() {
            match m {
                Outbound::Text(s) => {
                    if ws.send(Message::Text(s)).is_err() {
                        break 'conn;
                    }
                }
                Outbound::Close => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    break 'conn;
                }
            }
        }
    }
    Ok(())
}
