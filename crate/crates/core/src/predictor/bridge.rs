//! Client for an external predictor process.
//!
//! The bridge speaks newline-delimited JSON over the child's stdin/stdout,
//! strictly one request then one response. Operations:
//!
//! - `{"op":"identify"}` -> `{"model_id", "vocab_size", "tokenizer_id"}`
//! - `{"op":"rank","context":[..],"top_k":k}` -> `{"ranking":[..], "model_id"}`
//! - `{"op":"encode","text":".."}` -> `{"ids":[..]}`
//! - `{"op":"decode","ids":[..]}` -> `{"text":".."}`
//!
//! Any response carrying an `"error"` field is a failure.

use std::collections::HashSet;
use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Predictor, PredictorConfig, PredictorError};
use crate::tokenizer::{Tokenizer, TokenizerError};
use crate::TokenId;

/// One request line out, one response line back.
pub trait Transport: Send {
    fn exchange(&mut self, request: &str) -> io::Result<String>;
}

/// Transport over a spawned child process.
pub struct ProcessTransport {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ProcessTransport {
    /// Spawn `program` with `args`; stderr is inherited.
    pub fn spawn(program: &str, args: &[String]) -> io::Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child,
            stdin,
            stdout,
        })
    }
}

impl Transport for ProcessTransport {
    fn exchange(&mut self, request: &str) -> io::Result<String> {
        self.stdin.write_all(request.as_bytes())?;
        self.stdin.write_all(b"\n")?;
        self.stdin.flush()?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line)? == 0 {
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "bridge closed its output",
            ));
        }
        Ok(line)
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request<'a> {
    Identify,
    Rank { context: &'a [TokenId], top_k: usize },
    Encode { text: &'a str },
    Decode { ids: &'a [TokenId] },
}

#[derive(Debug, Default, Deserialize)]
struct Response {
    error: Option<String>,
    model_id: Option<String>,
    vocab_size: Option<usize>,
    tokenizer_id: Option<String>,
    ranking: Option<Vec<TokenId>>,
    ids: Option<Vec<TokenId>>,
    text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeIdentity {
    pub model_id: String,
    pub vocab_size: usize,
    pub tokenizer_id: String,
}

/// An external predictor together with the tokenizer it owns.
pub struct Bridge {
    transport: Mutex<Box<dyn Transport>>,
    identity: BridgeIdentity,
}

impl Bridge {
    /// Connect over `transport` and ask the bridge to identify itself.
    pub fn connect(transport: Box<dyn Transport>) -> Result<Self, PredictorError> {
        let transport = Mutex::new(transport);
        let resp = call(&transport, &Request::Identify)?;
        let identity = BridgeIdentity {
            model_id: resp.model_id.ok_or_else(|| missing("model_id"))?,
            vocab_size: resp.vocab_size.ok_or_else(|| missing("vocab_size"))?,
            tokenizer_id: resp.tokenizer_id.ok_or_else(|| missing("tokenizer_id"))?,
        };
        if identity.vocab_size == 0 {
            return Err(PredictorError::Protocol("vocab_size is zero".into()));
        }
        Ok(Self {
            transport,
            identity,
        })
    }

    /// Spawn a bridge from a command line such as `python3 bridge.py --model x`.
    pub fn spawn(command_line: &str) -> Result<Self, PredictorError> {
        let mut parts = command_line.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| PredictorError::Protocol("empty bridge command".into()))?;
        let args: Vec<String> = parts.collect();
        Self::connect(Box::new(ProcessTransport::spawn(&program, &args)?))
    }

    pub fn identity(&self) -> &BridgeIdentity {
        &self.identity
    }

    fn ranking(&self, context: &[TokenId], top_k: usize) -> Result<Vec<TokenId>, PredictorError> {
        let resp = call(&self.transport, &Request::Rank { context, top_k })?;
        let ranking = resp.ranking.ok_or_else(|| missing("ranking"))?;
        if ranking.len() != top_k {
            return Err(PredictorError::Protocol(format!(
                "asked for {top_k} ranked tokens, got {}",
                ranking.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ranking.len());
        for &t in &ranking {
            if t as usize >= self.identity.vocab_size || !seen.insert(t) {
                return Err(PredictorError::Protocol(format!(
                    "ranking entry {t} is out of range or repeated"
                )));
            }
        }
        Ok(ranking)
    }
}

fn missing(field: &str) -> PredictorError {
    PredictorError::Protocol(format!("response lacks {field:?}"))
}

fn call(transport: &Mutex<Box<dyn Transport>>, request: &Request<'_>) -> Result<Response, PredictorError> {
    let line = serde_json::to_string(request).expect("requests always serialize");
    let mut guard = transport.lock().unwrap_or_else(|e| e.into_inner());
    let reply = guard.exchange(&line)?;
    let resp: Response = serde_json::from_str(reply.trim_end())
        .map_err(|e| PredictorError::Protocol(format!("unparseable response: {e}")))?;
    match resp.error {
        Some(err) => Err(PredictorError::Remote(err)),
        None => Ok(resp),
    }
}

impl Predictor for Bridge {
    fn vocab_size(&self) -> usize {
        self.identity.vocab_size
    }

    fn fingerprint(&self, config: &PredictorConfig) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"bridge");
        hasher.update((self.identity.model_id.len() as u64).to_le_bytes());
        hasher.update(self.identity.model_id.as_bytes());
        hasher.update((self.identity.vocab_size as u64).to_le_bytes());
        config.hash_into(&mut hasher);
        hasher.finalize().into()
    }

    fn predict(
        &self,
        context: &[TokenId],
        _config: &PredictorConfig,
    ) -> Result<TokenId, PredictorError> {
        Ok(self.ranking(context, 1)?[0])
    }

    fn rank(
        &self,
        context: &[TokenId],
        _config: &PredictorConfig,
    ) -> Result<Vec<TokenId>, PredictorError> {
        self.ranking(context, self.identity.vocab_size)
    }
}

impl Tokenizer for Bridge {
    fn vocab_size(&self) -> usize {
        self.identity.vocab_size
    }

    fn tokenize(&self, text: &[u8]) -> Result<Vec<TokenId>, TokenizerError> {
        let text = std::str::from_utf8(text)
            .map_err(|_| TokenizerError::Remote("bridge tokenizers accept UTF-8 text only".into()))?;
        let resp = call(&self.transport, &Request::Encode { text }).map_err(remote)?;
        let ids = resp.ids.ok_or_else(|| remote(missing("ids")))?;
        if let Some(&id) = ids.iter().find(|&&t| t as usize >= self.identity.vocab_size) {
            return Err(TokenizerError::OutOfRangeId {
                id,
                vocab_size: self.identity.vocab_size,
            });
        }
        Ok(ids)
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<Vec<u8>, TokenizerError> {
        let resp = call(&self.transport, &Request::Decode { ids }).map_err(remote)?;
        Ok(resp.text.ok_or_else(|| remote(missing("text")))?.into_bytes())
    }

    fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"bridge-tokenizer");
        hasher.update(self.identity.tokenizer_id.as_bytes());
        hasher.finalize().into()
    }
}

fn remote(e: PredictorError) -> TokenizerError {
    TokenizerError::Remote(e.to_string())
}
