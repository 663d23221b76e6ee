//! Line transports: raw TCP (LF-delimited) and WebSocket text messages.

use std::io;

use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use navsim_core::wire::{self, Message};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_tungstenite::WebSocketStream;

type Ws = WebSocketStream<TcpStream>;

pub(crate) enum LineSource {
    Tcp(BufReader<OwnedReadHalf>),
    Ws(SplitStream<Ws>),
}

pub(crate) enum LineSink {
    Tcp(OwnedWriteHalf),
    Ws(SplitSink<Ws, WsMessage>),
}

pub(crate) fn tcp(stream: TcpStream) -> (LineSource, LineSink) {
    let (r, w) = stream.into_split();
    (LineSource::Tcp(BufReader::new(r)), LineSink::Tcp(w))
}

pub(crate) fn websocket(ws: Ws) -> (LineSource, LineSink) {
    let (w, r) = ws.split();
    (LineSource::Ws(r), LineSink::Ws(w))
}

fn ws_err(e: tokio_tungstenite::tungstenite::Error) -> io::Error {
    io::Error::other(e)
}

impl LineSource {
    /// Next raw line, `None` at end of stream.
    pub(crate) async fn next_line(&mut self) -> io::Result<Option<Vec<u8>>> {
        match self {
            LineSource::Tcp(r) => {
                let mut buf = Vec::new();
                if r.read_until(b'\n', &mut buf).await? == 0 {
                    return Ok(None);
                }
                Ok(Some(buf))
            }
            LineSource::Ws(r) => loop {
                match r.next().await {
                    None | Some(Ok(WsMessage::Close(_))) => return Ok(None),
                    Some(Ok(WsMessage::Text(t))) => return Ok(Some(t.as_bytes().to_vec())),
                    Some(Ok(WsMessage::Binary(b))) => return Ok(Some(b.to_vec())),
                    Some(Ok(_)) => continue,
                    Some(Err(e)) => return Err(ws_err(e)),
                }
            },
        }
    }
}

impl LineSink {
    pub(crate) async fn send(&mut self, m: &Message) -> io::Result<()> {
        let bytes = wire::encode(m);
        match self {
            LineSink::Tcp(w) => w.write_all(&bytes).await,
            LineSink::Ws(w) => {
                let text = String::from_utf8(bytes).expect("wire encoding is UTF-8");
                w.send(WsMessage::text(text.trim_end_matches('\n')))
                    .await
                    .map_err(ws_err)
            }
        }
    }

    pub(crate) async fn close(&mut self) {
        match self {
            LineSink::Tcp(w) => {
                let _ = w.shutdown().await;
            }
            LineSink::Ws(w) => {
                let _ = w.close().await;
            }
        }
    }
}
