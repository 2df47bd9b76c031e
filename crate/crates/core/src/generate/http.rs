use serde::{Deserialize, Serialize};

use super::{ContextWindow, GenerateError, GenerationRequest, Generator};
use crate::http::{HttpSettings, JsonClient};

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Client for `POST {endpoint}/generate`. The remote model is assumed to
/// have no context extension, so prompts past its window are rejected.
pub struct HttpGenerator {
    client: JsonClient,
    max_tokens: usize,
    window: usize,
}

impl HttpGenerator {
    pub fn new(endpoint: &str, max_tokens: usize, window: usize, settings: &HttpSettings) -> Result<Self, GenerateError> {
        Ok(Self {
            client: JsonClient::new(endpoint, settings)?,
            max_tokens,
            window,
        })
    }
}

impl Generator for HttpGenerator {
    fn window(&self) -> ContextWindow {
        ContextWindow::Strict(self.window)
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, GenerateError> {
        let (_, resp): (String, GenerateResponse) = self.client.post(
            "/generate",
            &GenerateRequest {
                prompt: &request.prompt.text,
                max_tokens: self.max_tokens,
            },
        )?;
        Ok(resp.text)
    }
}
