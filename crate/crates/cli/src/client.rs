//! HTTP client for a remote notary: the wire counterpart of the
//! in-process service, speaking the JSON API that `notary serve` hosts.

use std::time::{Duration, Instant};

use serde::Deserialize;
use synchronic_core::notary::{Block, NotaryService, Promise, ServiceError};
use synchronic_core::verifier::{ChainSource, ChainSourceError};
use synchronic_core::{Digest, InclusionProof};

#[derive(Debug, Deserialize)]
struct ErrorEnvelope {
    error: String,
    message: String,
}

#[derive(Debug, Deserialize)]
struct CurrentResponse {
    index: u64,
}

#[derive(Debug, Deserialize)]
struct ProofResponse {
    siblings: InclusionProof,
}

pub struct HttpNotary {
    agent: ureq::Agent,
    base: String,
    /// How long `wait_sealed` polls before giving up.
    pub wait_timeout: Duration,
    poll_interval: Duration,
}

impl HttpNotary {
    pub fn new(endpoint: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build();
        HttpNotary {
            agent: config.into(),
            base: endpoint.trim_end_matches('/').to_string(),
            wait_timeout: Duration::from_secs(30),
            poll_interval: Duration::from_millis(50),
        }
    }

    fn get_json<T: for<'de> Deserialize<'de>>(&self, path: &str) -> Result<T, ServiceError> {
        let url = format!("{}{}", self.base, path);
        let mut response = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| ServiceError::Unavailable(e.to_string()))?;
        Self::decode(&mut response)
    }

    fn post_json<T: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: serde_json::Value,
    ) -> Result<T, ServiceError> {
        let url = format!("{}{}", self.base, path);
        let mut response = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| ServiceError::Unavailable(e.to_string()))?;
        Self::decode(&mut response)
    }

    fn decode<T: for<'de> Deserialize<'de>>(
        response: &mut ureq::http::Response<ureq::Body>,
    ) -> Result<T, ServiceError> {
        if response.status().is_success() {
            response
                .body_mut()
                .read_json()
                .map_err(|e| ServiceError::Unavailable(format!("malformed response: {e}")))
        } else {
            let envelope: ErrorEnvelope = response
                .body_mut()
                .read_json()
                .unwrap_or_else(|_| ErrorEnvelope {
                    error: "http".into(),
                    message: format!("status {}", response.status()),
                });
            Err(ServiceError::Remote { code: envelope.error, message: envelope.message })
        }
    }
}

impl NotaryService for HttpNotary {
    fn fetch_current_index(&mut self) -> Result<u64, ServiceError> {
        self.get_json::<CurrentResponse>("/current").map(|r| r.index)
    }

    fn submit(
        &mut self,
        index: u64,
        global_key: Digest,
        global_value: Digest,
    ) -> Result<Promise, ServiceError> {
        self.post_json(
            "/commit",
            serde_json::json!({
                "index": index,
                "key": global_key,
                "value": global_value,
            }),
        )
    }

    fn fetch_proof(
        &mut self,
        index: u64,
        global_key: &Digest,
    ) -> Result<InclusionProof, ServiceError> {
        let path = format!("/proof?index={}&key={}", index, global_key.to_hex());
        self.get_json::<ProofResponse>(&path).map(|r| r.siblings)
    }

    fn fetch_block(&mut self, index: u64) -> Result<Block, ServiceError> {
        self.get_json(&format!("/block?index={index}"))
    }

    fn wait_sealed(&mut self, index: u64) -> Result<(), ServiceError> {
        let deadline = Instant::now() + self.wait_timeout;
        loop {
            if self.fetch_current_index()? > index {
                return Ok(());
            }
            if Instant::now() >= deadline {
                return Err(ServiceError::Unavailable(format!(
                    "block {index} not sealed within {:?}",
                    self.wait_timeout
                )));
            }
            std::thread::sleep(self.poll_interval);
        }
    }
}

impl HttpNotary {
    pub fn fetch_chain(&self, from: u64, to: u64) -> Result<Vec<Block>, ServiceError> {
        self.get_json(&format!("/chain?from={from}&to={to}"))
    }
}

impl ChainSource for HttpNotary {
    fn block_root(&mut self, index: u64) -> Result<Digest, ChainSourceError> {
        match self.fetch_block(index) {
            Ok(block) => Ok(block.payload),
            Err(ServiceError::Remote { code, .. }) if code == "not_found" => {
                Err(ChainSourceError::NotFound(index))
            }
            Err(e) => Err(ChainSourceError::Unavailable(e.to_string())),
        }
    }
}
