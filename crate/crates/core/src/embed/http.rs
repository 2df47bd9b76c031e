use serde::{Deserialize, Serialize};

use super::{check_non_empty, EmbedError, Embedder, EmbeddingVector};
use crate::http::{HttpError, HttpSettings, JsonClient};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for `POST {endpoint}/embed`. Texts are sent in batches of
/// `batch_size`; batches run concurrently up to the client's in-flight cap.
/// Returned vectors are normalised client-side.
pub struct HttpEmbedder {
    client: JsonClient,
    dims: usize,
    batch_size: usize,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: &str,
        dims: usize,
        batch_size: usize,
        settings: &HttpSettings,
    ) -> Result<Self, EmbedError> {
        Ok(Self {
            client: JsonClient::new(endpoint, settings)?,
            dims,
            batch_size: batch_size.max(1),
        })
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let (request_id, resp): (String, EmbedResponse) =
            self.client.post("/embed", &EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(HttpError::malformed(
                &request_id,
                format!("expected {} vectors, got {}", texts.len(), resp.vectors.len()),
            )
            .into());
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dims {
                    return Err(HttpError::malformed(
                        &request_id,
                        format!("expected {} dims, got {}", self.dims, v.len()),
                    )
                    .into());
                }
                EmbeddingVector::normalized(v).map_err(|_| {
                    HttpError::malformed(&request_id, "zero or non-finite vector").into()
                })
            })
            .collect()
    }
}

impl Embedder for HttpEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        check_non_empty(texts)?;
        let batches: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        let mut out = Vec::with_capacity(texts.len());
        for group in batches.chunks(self.client.max_in_flight()) {
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|batch| s.spawn(move || self.embed_batch(batch)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("embed worker panicked")).collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}
