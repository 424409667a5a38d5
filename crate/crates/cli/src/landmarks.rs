//! Live landmark input: newline-delimited trace records over TCP.

use std::sync::mpsc::Sender;

use theater_core::hand::parse_trace_line;
use theater_core::Input;
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::net::{TcpListener, TcpStream};

use crate::runtime::Control;

/// Accepts trackers until the engine goes away. Each connection's frames
/// go to the engine in arrival order; bad lines are logged and skipped, and
/// a closed connection ends the stream so pending gestures complete.
pub async fn serve(listener: TcpListener, control: Sender<Control>) {
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(c) => c,
            Err(e) => {
                tracing::warn!("landmark accept failed: {e}");
                continue;
            }
        };
        tracing::info!("landmark source connected: {peer}");
        let control = control.clone();
        tokio::spawn(async move {
            let n = read_frames(stream, &control).await;
            tracing::info!("landmark source {peer} closed after {n} frames");
        });
    }
}

async fn read_frames(stream: TcpStream, control: &Sender<Control>) -> usize {
    let mut lines = BufReader::new(stream).lines();
    let mut n = 0;
    loop {
        let line = match lines.next_line().await {
            Ok(Some(l)) => l,
            Ok(None) => break,
            Err(e) => {
                tracing::warn!("landmark read error: {e}");
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match parse_trace_line(&line) {
            Ok(frame) => {
                n += 1;
                let msg = Control::Submit {
                    input: Input::Frame(frame),
                    reply: None,
                };
                if control.send(msg).is_err() {
                    return n;
                }
            }
            Err(e) => tracing::warn!("dropping landmark record: {e}"),
        }
    }
    let _ = control.send(Control::Submit {
        input: Input::EndOfStream,
        reply: None,
    });
    n
}
