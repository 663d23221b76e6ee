//! Minimal HTTP/1.1 handling on the shared port: static UI assets and the
//! `/ws` upgrade.

use std::io;
use std::path::{Component, Path, PathBuf};

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::handshake::derive_accept_key;

const MAX_HEAD: usize = 16 * 1024;

pub(crate) enum Outcome {
    WebSocket(TcpStream),
    Done,
}

struct Head {
    method: String,
    path: String,
    ws_key: Option<String>,
}

async fn read_head(stream: &mut TcpStream) -> io::Result<Option<Head>> {
    let mut buf = Vec::with_capacity(1024);
    let mut chunk = [0u8; 1024];
    loop {
        let n = stream.read(&mut chunk).await?;
        if n == 0 {
            return Ok(None);
        }
        buf.extend_from_slice(&chunk[..n]);
        let mut headers = [httparse::EMPTY_HEADER; 64];
        let mut req = httparse::Request::new(&mut headers);
        match req.parse(&buf) {
            Ok(httparse::Status::Complete(_)) => {
                let header = |name: &str| {
                    req.headers
                        .iter()
                        .find(|h| h.name.eq_ignore_ascii_case(name))
                        .and_then(|h| std::str::from_utf8(h.value).ok())
                        .map(str::to_owned)
                };
                let upgrade = header("upgrade").is_some_and(|v| v.eq_ignore_ascii_case("websocket"));
                return Ok(Some(Head {
                    method: req.method.unwrap_or("").to_owned(),
                    path: req.path.unwrap_or("/").to_owned(),
                    ws_key: header("sec-websocket-key").filter(|_| upgrade),
                }));
            }
            Ok(httparse::Status::Partial) if buf.len() < MAX_HEAD => continue,
            _ => return Ok(None),
        }
    }
}

async fn respond(
    stream: &mut TcpStream,
    status: &str,
    content_type: &str,
    body: &[u8],
    head_only: bool,
) -> io::Result<()> {
    let head = format!(
        "HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes()).await?;
    if !head_only {
        stream.write_all(body).await?;
    }
    stream.shutdown().await
}

/// Maps a request path onto a file below `root`, refusing escapes.
pub(crate) fn resolve_asset(root: &Path, request_path: &str) -> Option<PathBuf> {
    let path = request_path.split(['?', '#']).next().unwrap_or("/");
    let rel = path.trim_start_matches('/');
    let rel = if rel.is_empty() || rel.ends_with('/') {
        format!("{rel}index.html")
    } else {
        rel.to_owned()
    };
    let rel = Path::new(&rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    Some(root.join(rel))
}

pub(crate) async fn handle(mut stream: TcpStream, ui_dir: Option<&Path>) -> io::Result<Outcome> {
    let Some(head) = read_head(&mut stream).await? else {
        respond(&mut stream, "400 Bad Request", "text/plain", b"bad request\n", false).await?;
        return Ok(Outcome::Done);
    };
    let route = head.path.split('?').next().unwrap_or("");
    if route == "/ws" {
        let Some(key) = head.ws_key else {
            respond(
                &mut stream,
                "426 Upgrade Required",
                "text/plain",
                b"websocket upgrade required\n",
                false,
            )
            .await?;
            return Ok(Outcome::Done);
        };
        let reply = format!(
            "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: {}\r\n\r\n",
            derive_accept_key(key.as_bytes())
        );
        stream.write_all(reply.as_bytes()).await?;
        return Ok(Outcome::WebSocket(stream));
    }
    let head_only = head.method == "HEAD";
    if head.method != "GET" && !head_only {
        respond(
            &mut stream,
            "405 Method Not Allowed",
            "text/plain",
            b"method not allowed\n",
            false,
        )
        .await?;
        return Ok(Outcome::Done);
    }
    let file = ui_dir.and_then(|root| resolve_asset(root, &head.path));
    let body = match &file {
        Some(p) => tokio::fs::read(p).await.ok(),
        None => None,
    };
    match (file, body) {
        (Some(p), Some(body)) => {
            let mime = mime_guess::from_path(&p).first_or_octet_stream();
            respond(&mut stream, "200 OK", mime.essence_str(), &body, head_only).await?;
        }
        _ => respond(&mut stream, "404 Not Found", "text/plain", b"not found\n", head_only).await?,
    }
    Ok(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asset_paths() {
        let root = Path::new("/ui");
        assert_eq!(resolve_asset(root, "/"), Some(PathBuf::from("/ui/index.html")));
        assert_eq!(resolve_asset(root, "/app.js?v=2"), Some(PathBuf::from("/ui/app.js")));
        assert_eq!(resolve_asset(root, "/css/"), Some(PathBuf::from("/ui/css/index.html")));
        assert_eq!(resolve_asset(root, "/../etc/passwd"), None);
        assert_eq!(resolve_asset(root, "/a/./b"), Some(PathBuf::from("/ui/a/b")));
    }
}
