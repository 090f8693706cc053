//! End-to-end translation pipeline: batching, per-batch shortlists,
//! encoding and incremental decoding under a precision regime.

use crate::decode::{
    beam_search, build_shortlist, greedy_decode, make_batches, LexTable, Shortlist, Vocab, EOS_ID,
};
use crate::error::{Error, Result};
use crate::model::{decoder_step, embed_token, encoder_forward, output_logits, DecoderState, ModelConfig, ModelParams};
use crate::runtime::{GemmEngine, Precision};

/// Decoding options for one run.
#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub precision: Precision,
    pub beam: usize,
    pub batch_words: usize,
    pub memoize: bool,
    pub force_alt: Option<String>,
    pub length_norm: Option<f32>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            precision: Precision::Float32,
            beam: 1,
            batch_words: 384,
            memoize: true,
            force_alt: None,
            length_norm: None,
        }
    }
}

/// Output length cap for a source of `src_len` tokens.
fn max_output_len(src_len: usize) -> usize {
    4 * src_len + 8
}

/// A loaded model plus everything needed to translate token lines.
pub struct Translator {
    config: ModelConfig,
    params: ModelParams,
    vocab: Vocab,
    lex: Option<LexTable>,
    engine: GemmEngine,
    options: PipelineOptions,
}

impl Translator {
    pub fn new(
        config: ModelConfig,
        params: ModelParams,
        vocab: Vocab,
        lex: Option<LexTable>,
        options: PipelineOptions,
    ) -> Result<Self> {
        config.validate()?;
        params.validate(&config)?;
        if vocab.len() != config.vocab_size {
            return Err(Error::Parameter(format!(
                "vocabulary has {} entries, config wants {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        if options.beam < 1 {
            return Err(Error::Parameter("beam size must be at least 1".into()));
        }
        let mut engine = GemmEngine::new(options.precision);
        engine.set_memoize(options.memoize);
        if options.force_alt.is_some() {
            engine.set_force_alt(options.force_alt.clone())?;
        }
        Ok(Translator { config, params, vocab, lex, engine, options })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn engine(&self) -> &GemmEngine {
        &self.engine
    }

    /// Translate tokenized lines; output lines come back in input order.
    pub fn translate_corpus(&mut self, lines: &[String]) -> Result<Vec<String>> {
        let sentences: Vec<Vec<u32>> = lines.iter().map(|l| self.vocab.encode_line(l)).collect();
        let mut outputs = vec![String::new(); lines.len()];
        for batch in make_batches(&sentences, self.options.batch_words)? {
            let candidates = match &self.lex {
                Some(lex) => build_shortlist(&batch, lex),
                None => Shortlist::full(self.vocab.len()),
            };
            for item in &batch.items {
                if item.tokens.is_empty() {
                    continue;
                }
                let ids = self.translate_ids(&item.tokens, candidates.ids())?;
                outputs[item.index] = self.vocab.decode_ids(&ids)?;
            }
        }
        Ok(outputs)
    }

    /// Translate one sentence of token ids against a candidate id set.
    pub fn translate_ids(&mut self, source: &[u32], candidates: &[u32]) -> Result<Vec<u32>> {
        let config = &self.config;
        let params = &self.params;
        let engine = &mut self.engine;
        let enc_out = encoder_forward(config, params, engine, source)?;
        let embed = params.get("embed")?;
        let max_len = max_output_len(source.len());

        let mut step = |state: &mut DecoderState, prev: u32| -> Result<Vec<f32>> {
            let y = embed_token(config, params, prev, state.step_count())?;
            let hidden = decoder_step(config, params, engine, state, &y, &enc_out)?;
            output_logits(&hidden, embed, Some(candidates))
        };

        let state = DecoderState::new(config);
        if self.options.beam == 1 {
            greedy_decode(state, &mut step, candidates, EOS_ID, max_len)
        } else {
            let hyps = beam_search(
                state,
                &mut step,
                candidates,
                EOS_ID,
                self.options.beam,
                max_len,
                self.options.length_norm,
            )?;
            Ok(hyps
                .into_iter()
                .next()
                .map(|h| h.tokens)
                .unwrap_or_default())
        }
    }

    /// Kernel counter summary of the run so far.
    pub fn counter_line(&self) -> String {
        self.engine.counter_line()
    }

    /// Tuning-table dump, when running under the autotune regime.
    pub fn tuner_dump(&self) -> Option<String> {
        self.engine.tuner().map(|t| t.lock().map(|g| g.dump()).unwrap_or_default())
    }
}
