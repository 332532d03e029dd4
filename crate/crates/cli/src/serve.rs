//! Newline-delimited JSON reward service.
//!
//! Each request line gets exactly one reply line on the same connection, in
//! request order. A malformed request produces an error reply and does not
//! close the connection.

use std::io::{BufRead, Write};
use std::sync::Arc;

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use verigate_core::reward::RewardConfig;

use crate::score::score_line;

fn reply(line: &[u8], config: &RewardConfig) -> Vec<u8> {
    let mut out = serde_json::to_vec(&score_line(line, config)).expect("reply serializes");
    out.push(b'\n');
    out
}

async fn handle(stream: TcpStream, config: Arc<RewardConfig>) -> std::io::Result<()> {
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf).await? == 0 {
            break;
        }
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        write.write_all(&reply(&buf, &config)).await?;
    }
    write.shutdown().await
}

/// Accepts connections until the listener fails; each connection is served
/// on its own task.
pub async fn serve(listener: TcpListener, config: Arc<RewardConfig>) -> std::io::Result<()> {
    loop {
        let (stream, _) = listener.accept().await?;
        let config = Arc::clone(&config);
        tokio::spawn(async move {
            let _ = handle(stream, config).await;
        });
    }
}

/// Serves one session over arbitrary byte streams (stdin/stdout in the binary).
pub fn serve_stdio<R: BufRead, W: Write>(mut input: R, mut output: W, config: &RewardConfig) -> std::io::Result<()> {
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        if buf.last() == Some(&b'\n') {
            buf.pop();
        }
        output.write_all(&reply(&buf, config))?;
        output.flush()?;
    }
    Ok(())
}
