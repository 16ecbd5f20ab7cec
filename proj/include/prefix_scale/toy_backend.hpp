#pragma once

#include "prefix_scale/backend.hpp"

namespace pscale {

// ============================================================================
// Toy backend: seeded sampling from a bigram model
// ============================================================================
//
// Token i decodes to its decimal id plus a trailing space ("7 "), so decoded
// text round-trips the token stream exactly. Per-step randomness is
// counter-based on the absolute generation position, so a continuation under
// the same seed resumes the full attempt's token stream.

/// Samples from the model. `position_offset` is the number of tokens already
/// generated for this attempt (0 for a fresh generation); it offsets the
/// per-step randomness counters.
ScoredSequence toy_generate(const BigramLM& model,
                            const GenerationRequest& request,
                            ComputeMeter& meter, int position_offset = 0,
                            int start_context = -1);

class ToyBackend final : public Backend {
 public:
  explicit ToyBackend(BigramLM model) : model_(std::move(model)) {}

  std::string id() const override { return "toy"; }

  BackendCapabilities capabilities() const override {
    BackendCapabilities caps;
    caps.full_distribution = true;
    caps.trainable = true;
    caps.vocab_size = model_.vocab_size;
    caps.deterministic_given_seed = true;
    return caps;
  }

  ScoredSequence generate(const GenerationRequest& request,
                          ComputeMeter& meter) const override;

  ScoredSequence continue_generation(const std::string& prefix_prompt,
                                     const ScoredSequence& prefix,
                                     const GenerationRequest& request,
                                     ComputeMeter& meter) const override;

  const BigramLM* trainable_model() const override { return &model_; }

 private:
  BigramLM model_;
};

}  // namespace pscale
