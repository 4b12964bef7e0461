//! Client for a backend running as a child process.

use std::collections::HashSet;
use std::io::{BufReader, BufWriter};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::backend::protocol::FrameClient;
use crate::backend::{Embedding, SampleRef};
use crate::digest::digest_f64s;
use crate::error::{check_dim, BackendError, Error, Result};
use crate::latent::LatentVector;

const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub dim: usize,
    pub embed_dim: usize,
}

pub struct ExternalBackend {
    child: Option<Child>,
    client: FrameClient<BufReader<ChildStdout>, BufWriter<ChildStdin>>,
    dim: usize,
    embed_dim: usize,
    known: HashSet<String>,
    closed: bool,
}

impl ExternalBackend {
    /// Spawn the command and complete the handshake.
    pub fn spawn(cfg: &ExternalConfig) -> Result<Self> {
        let (program, args) = cfg
            .command
            .split_first()
            .ok_or_else(|| Error::invalid("external backend command is empty"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| BackendError::Spawn {
                command: cfg.command.join(" "),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut backend = ExternalBackend {
            child: Some(child),
            client: FrameClient::new(BufReader::new(stdout), BufWriter::new(stdin)),
            dim: cfg.dim,
            embed_dim: cfg.embed_dim,
            known: HashSet::new(),
            closed: false,
        };
        if let Err(e) = backend.client.hello(cfg.dim, cfg.embed_dim) {
            backend.closed = true;
            if let Some(mut child) = backend.child.take() {
                let _ = child.kill();
                let _ = child.wait();
            }
            return Err(e);
        }
        Ok(backend)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn generate(&mut self, id: &str, w: &LatentVector) -> Result<SampleRef> {
        check_dim(self.dim, w.dim())?;
        let reply = self.client.generate(id, w.as_slice())?;
        reply.metadata.validate().map_err(|e| {
            BackendError::Protocol(format!("invalid metadata for {id:?}: {e}"))
        })?;
        if let Some((method, q)) = reply.quality.iter().find(|(_, q)| !(0.0..=100.0).contains(*q)) {
            return Err(BackendError::Protocol(format!(
                "quality {method}={q} for {id:?} is outside [0, 100]"
            ))
            .into());
        }
        self.known.insert(id.to_string());
        Ok(SampleRef {
            id: reply.id,
            latent_hash: digest_f64s(w.as_slice()),
            metadata: reply.metadata,
            image_uri: reply.image_uri,
            quality: reply.quality,
        })
    }

    pub fn embed(&mut self, sample: &SampleRef) -> Result<Embedding> {
        if !self.known.contains(&sample.id) {
            return Err(BackendError::UnknownRef(sample.id.clone()).into());
        }
        let raw = self.client.embed(&sample.id)?;
        if raw.len() != self.embed_dim {
            return Err(BackendError::Protocol(format!(
                "embedding for {:?} has {} entries, expected {}",
                sample.id,
                raw.len(),
                self.embed_dim
            ))
            .into());
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() <= 1e-12 && raw.iter().all(|v| v.is_finite()) {
            return Ok(Embedding::from_unit(raw));
        }
        Embedding::from_raw(raw)
    }

    pub fn center(&mut self) -> Result<Option<LatentVector>> {
        match self.client.center()? {
            Some(values) => Ok(Some(LatentVector::new(values).map_err(|e| {
                BackendError::Protocol(format!("invalid center latent: {e}"))
            })?)),
            None => Ok(None),
        }
    }

    pub fn release(&mut self, id: &str) {
        self.known.remove(id);
    }

    pub fn shutdown(mut self) -> Result<()> {
        self.closed = true;
        let sent = self.client.shutdown();
        self.reap();
        sent
    }

    fn reap(&mut self) {
        let Some(mut child) = self.child.take() else {
            return;
        };
        let deadline = Instant::now() + SHUTDOWN_GRACE;
        loop {
            match child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return;
                }
            }
        }
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        if !self.closed {
            let _ = self.client.shutdown();
        }
        self.reap();
    }
}
