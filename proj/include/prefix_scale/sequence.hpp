#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prefix_scale/common.hpp"

namespace pscale {

/// Probability floor applied at backend boundaries: no stored log-probability
/// is ever below ln(kProbFloor), so whole-vocabulary sums stay finite.
inline constexpr double kProbFloor = 1e-30;

/// Tolerance for the exp-sum-to-one check on full distributions.
inline constexpr double kDistributionTol = 1e-9;

// ============================================================================
// Core sequence model
// ============================================================================

/// One generated token. Log-probabilities are natural-log, double precision;
/// probabilities are never stored or combined in linear space.
struct TokenStep {
  int token_id = 0;
  double chosen_logprob = 0.0;  // <= 0
  /// Full next-token log-distribution (length V) when the backend provides it.
  /// Invariants: exp-sum == 1 +- 1e-9 and distribution[token_id] ==
  /// chosen_logprob exactly.
  std::optional<Eigen::VectorXd> distribution;
};

/// A prompt-conditioned generated sequence: a prefix or a full attempt.
/// Immutable after construction; safe to share across workers.
struct ScoredSequence {
  std::string prompt_text;
  std::vector<TokenStep> steps;
  std::string text;         // decodes exactly the tokens in `steps`
  bool terminated = false;  // stop condition reached (vs. length-truncated)

  int length() const { return static_cast<int>(steps.size()); }
};

/// Token/call/gradient accounting for one strategy run. Counters only grow.
/// Token and gradient-step counts are the normative compute measure; wall
/// clock is advisory and never serialized.
struct ComputeMeter {
  int64_t prompt_tokens = 0;
  int64_t generated_tokens = 0;
  int64_t backend_calls = 0;
  int64_t gradient_steps = 0;

  void add_generation(int64_t prompt_n, int64_t generated_n) {
    prompt_tokens += prompt_n;
    generated_tokens += generated_n;
    backend_calls += 1;
  }
};

// ============================================================================
// Operations
// ============================================================================

/// Validates the TokenStep invariants (logprob sign, distribution
/// normalization, chosen entry consistency). Throws ValidationError.
void validate_step(const TokenStep& step);

/// Validates every step of a sequence.
void validate_sequence(const ScoredSequence& seq);

/// Joins a prefix with a continuation that was generated conditioned on
/// prompt + prefix text. The continuation's prompt must equal
/// prefix.prompt_text + prefix.text; otherwise a ValidationError is thrown.
/// `terminated` is inherited from the continuation.
ScoredSequence concat(const ScoredSequence& prefix,
                      const ScoredSequence& continuation);

}  // namespace pscale
