use super::{stub_generate, ContextWindow, GenerateError, GenerationRequest, Generator};
use crate::neural::{AttentionConfig, AttentionMode, NeuralError, ToyConfig, ToyDecoder};

/// Runs the prompt through the small random-weight decoder, which enforces
/// the attention window, then answers with the lexical readout of the stub.
/// The decoder's logits carry no knowledge; this generator exists to show
/// which prompt lengths each attention mode can process.
pub struct ToyGenerator {
    model: ToyDecoder,
    mode: AttentionMode,
}

impl ToyGenerator {
    pub fn new(seed: u64, attention: &AttentionConfig, selfextend: bool) -> Result<Self, GenerateError> {
        attention.validate()?;
        let model = ToyDecoder::new(ToyConfig {
            n_heads: attention.n_heads,
            head_dim: attention.head_dim,
            seed,
            ..ToyConfig::default()
        });
        let mode = if selfextend {
            AttentionMode::SelfExtend(attention.clone())
        } else {
            AttentionMode::Standard {
                window: attention.pretrain_window,
                rope_base: attention.rope_base,
            }
        };
        Ok(Self { model, mode })
    }

    pub fn mode(&self) -> &AttentionMode {
        &self.mode
    }
}

impl Generator for ToyGenerator {
    fn window(&self) -> ContextWindow {
        ContextWindow::Strict(self.mode.window())
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, GenerateError> {
        let item = request
            .item
            .ok_or_else(|| GenerateError::InvalidItem("the toy generator needs answer options".into()))?;
        let tokens = self.model.tokenize(&request.prompt.text);
        match self.model.forward(&tokens, &self.mode) {
            Ok(logits) if logits.iter().all(|v| v.is_finite()) => {}
            Ok(_) => return Err(GenerateError::InvalidConfig("toy decoder produced non-finite logits".into())),
            Err(NeuralError::ContextOverflow { len, window }) => {
                return Err(GenerateError::ContextOverflow { tokens: len, window })
            }
            Err(e) => return Err(e.into()),
        }
        Ok(stub_generate(request.prompt, item, request.contexts))
    }
}
