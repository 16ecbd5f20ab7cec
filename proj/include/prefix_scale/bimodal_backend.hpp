#pragma once

#include "prefix_scale/backend.hpp"

namespace pscale {

// ============================================================================
// Bimodal backend: scripted attempts with analytic accuracy
// ============================================================================
//
// Every attempt is either "good" (probability q, per-token probability p_g,
// correct boxed answer) or "bad" (per-token probability p_b, wrong boxed
// answer). The mode is drawn once per attempt from the request seed and is
// recoverable from the token alphabet, so continuing a prefix preserves its
// mode. Good and bad attempts have the same intrinsic length, which makes
// selection behavior analytic: with p_g > p_b every good prefix strictly
// outscores every bad prefix of the same length.

struct BimodalParams {
  double mode_rate = 0.3;        // q, probability of a good attempt
  double good_token_prob = 0.9;  // p_g
  double bad_token_prob = 0.5;   // p_b
  int vocab_size = 8;
  /// Intrinsic attempt length: the boxed answer is emitted at exactly this
  /// position and terminates the attempt.
  int attempt_tokens = 64;

  void validate() const;
};

/// The gold answer the backend embeds for a given question prompt; dataset
/// builders use the same rule so grading lines up.
std::string bimodal_gold_answer(const std::string& prompt);

/// Core generator. `position_offset` is the number of attempt tokens already
/// generated (continuations); `forced_mode` overrides the seed-driven mode
/// draw (1 = good, 0 = bad, -1 = draw from seed).
ScoredSequence bimodal_generate(const GenerationRequest& request,
                                const BimodalParams& params,
                                const std::string& gold_answer,
                                ComputeMeter& meter, int position_offset = 0,
                                int forced_mode = -1);

class BimodalBackend final : public Backend {
 public:
  explicit BimodalBackend(BimodalParams params = {}) : params_(params) {
    params_.validate();
  }

  std::string id() const override { return "bimodal"; }
  const BimodalParams& params() const { return params_; }

  BackendCapabilities capabilities() const override {
    BackendCapabilities caps;
    caps.full_distribution = true;
    caps.trainable = false;
    caps.vocab_size = params_.vocab_size;
    caps.deterministic_given_seed = true;
    return caps;
  }

  ScoredSequence generate(const GenerationRequest& request,
                          ComputeMeter& meter) const override;

  ScoredSequence continue_generation(const std::string& prefix_prompt,
                                     const ScoredSequence& prefix,
                                     const GenerationRequest& request,
                                     ComputeMeter& meter) const override;

 private:
  BimodalParams params_;
};

}  // namespace pscale
