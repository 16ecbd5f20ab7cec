#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prefix_scale/bigram.hpp"
#include "prefix_scale/sequence.hpp"

namespace pscale {

// ============================================================================
// Generation interface
// ============================================================================

struct BackendCapabilities {
  bool full_distribution = false;
  std::optional<int> top_k_logprobs;
  bool trainable = false;
  int vocab_size = 0;  // known and finite whenever full_distribution is set
  bool deterministic_given_seed = false;
};

struct GenerationRequest {
  std::string prompt;
  int max_new_tokens = 1024;
  double temperature = 1.0;  // 0 = greedy
  std::vector<std::string> stop;
  uint64_t seed = 0;
  bool want_distribution = false;

  void validate() const {
    if (max_new_tokens < 1) {
      throw ValidationError("GenerationRequest: max_new_tokens must be >= 1");
    }
    if (temperature < 0.0) {
      throw ValidationError("GenerationRequest: temperature must be >= 0");
    }
  }
};

/// Uniform generation interface. Implementations are safe for concurrent
/// generate calls from multiple workers; the meter is owned by the caller.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string id() const = 0;
  virtual BackendCapabilities capabilities() const = 0;

  /// Generates at most max_new_tokens steps, stopping early on a stop
  /// condition (terminated = true). Fills per-step distributions iff
  /// want_distribution and the capability allows. Adds the generated token
  /// count and one backend call to the meter.
  virtual ScoredSequence generate(const GenerationRequest& request,
                                  ComputeMeter& meter) const = 0;

  /// Continues generation after `prefix` (which was produced from
  /// `prefix_prompt`). Equivalent to generating with prompt = prefix_prompt
  /// + prefix.text; returns the continuation only.
  virtual ScoredSequence continue_generation(const std::string& prefix_prompt,
                                             const ScoredSequence& prefix,
                                             const GenerationRequest& request,
                                             ComputeMeter& meter) const = 0;

  /// Model handle for test-time training, or nullptr when not trainable.
  virtual const BigramLM* trainable_model() const { return nullptr; }
};

}  // namespace pscale
