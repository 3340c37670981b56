use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{TagRequest, TagResponse, Tagger, TaggerError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Serialize, Deserialize)]
struct Handshake {
    op: String,
}

/// One child process speaking the JSON Lines protocol. Requests are
/// serialized; run several instances for parallelism.
pub struct ProcessTagger {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl std::fmt::Debug for ProcessTagger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProcessTagger")
            .field("command", &self.command)
            .field("pid", &self.child.id())
            .finish()
    }
}

impl ProcessTagger {
    /// Starts `command` (split with shell quoting rules), appending
    /// `--model <model>` when given, and performs the ping/pong handshake.
    pub fn spawn(command: &str, model: Option<&str>, timeout: Duration) -> Result<Self, TaggerError> {
        let mut argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| TaggerError::BadCommand(command.to_string()))?;
        if let Some(model) = model {
            argv.push("--model".into());
            argv.push(model.into());
        }
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| TaggerError::Spawn {
                command: command.to_string(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");

        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        let mut tagger = ProcessTagger {
            command: command.to_string(),
            child,
            stdin,
            lines,
            timeout,
        };
        tagger.handshake()?;
        Ok(tagger)
    }

    fn send<T: Serialize>(&mut self, message: &T) -> Result<(), TaggerError> {
        let stdin = self.stdin.as_mut().ok_or(TaggerError::Exited)?;
        let mut line = serde_json::to_string(message).map_err(|e| TaggerError::Protocol(e.to_string()))?;
        line.push('\n');
        stdin.write_all(line.as_bytes()).map_err(|e| match e.kind() {
            std::io::ErrorKind::BrokenPipe => TaggerError::Exited,
            _ => TaggerError::Io(e),
        })?;
        stdin.flush().map_err(|_| TaggerError::Exited)
    }

    fn receive(&mut self) -> Result<String, TaggerError> {
        loop {
            return match self.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => Ok(line),
                Ok(Err(e)) => Err(TaggerError::Io(e)),
                Err(RecvTimeoutError::Timeout) => Err(TaggerError::Timeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => Err(TaggerError::Exited),
            };
        }
    }

    fn handshake(&mut self) -> Result<(), TaggerError> {
        self.send(&Handshake { op: "ping".into() })?;
        let line = self.receive()?;
        match serde_json::from_str::<Handshake>(&line) {
            Ok(h) if h.op == "pong" => Ok(()),
            _ => Err(TaggerError::Protocol(format!("expected pong, got `{line}`"))),
        }
    }
}

impl Tagger for ProcessTagger {
    fn tag(&mut self, request: &TagRequest) -> Result<TagResponse, TaggerError> {
        request.validate()?;
        self.send(request)?;
        let line = self.receive()?;
        let response: TagResponse = serde_json::from_str(&line)
            .map_err(|e| TaggerError::Protocol(format!("bad response `{line}`: {e}")))?;
        response.check_against(request)?;
        Ok(response)
    }
}

impl Drop for ProcessTagger {
    fn drop(&mut self) {
        // Closing stdin is the shutdown signal; give the peer a moment.
        drop(self.stdin.take());
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// The peer side of the protocol: answers a ping with a pong and every
/// request with `tagger`'s response until `input` closes. Returns the number
/// of requests served.
pub fn serve<T, R, W>(tagger: &mut T, input: R, mut output: W) -> Result<usize, TaggerError>
where
    T: Tagger + ?Sized,
    R: BufRead,
    W: Write,
{
    let mut served = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Handshake>(&line) {
            Ok(h) if h.op == "ping" => serde_json::to_string(&Handshake { op: "pong".into() }),
            _ => {
                let request: TagRequest = serde_json::from_str(&line)
                    .map_err(|e| TaggerError::Protocol(format!("bad request `{line}`: {e}")))?;
                request.validate()?;
                let response = tagger.tag(&request)?;
                response.check_against(&request)?;
                served += 1;
                serde_json::to_string(&response)
            }
        }
        .map_err(|e| TaggerError::Protocol(e.to_string()))?;
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(served)
}
