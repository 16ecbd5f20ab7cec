#include "prefix_scale/sequence.hpp"

#include <cmath>

namespace pscale {

void validate_step(const TokenStep& step) {
  if (step.chosen_logprob > 0.0) {
    throw ValidationError("TokenStep: chosen_logprob must be <= 0, got " +
                          std::to_string(step.chosen_logprob));
  }
  if (!step.distribution) return;

  const Eigen::VectorXd& d = *step.distribution;
  if (step.token_id < 0 || step.token_id >= d.size()) {
    throw ValidationError("TokenStep: token_id out of distribution range");
  }
  const double mass = d.array().exp().sum();
  if (mass < 1.0 - kDistributionTol || mass > 1.0 + kDistributionTol) {
    throw ValidationError("TokenStep: distribution exp-sum " +
                          std::to_string(mass) + " not within 1e-9 of 1");
  }
  if (d[step.token_id] != step.chosen_logprob) {
    throw ValidationError(
        "TokenStep: distribution[token_id] must equal chosen_logprob exactly");
  }
}

void validate_sequence(const ScoredSequence& seq) {
  for (const TokenStep& step : seq.steps) validate_step(step);
}

ScoredSequence concat(const ScoredSequence& prefix,
                      const ScoredSequence& continuation) {
  const std::string expected_prompt = prefix.prompt_text + prefix.text;
  if (continuation.prompt_text != expected_prompt) {
    throw ValidationError(
        "concat: continuation prompt does not extend the prefix (expected \"" +
        expected_prompt + "\", got \"" + continuation.prompt_text + "\")");
  }
  ScoredSequence out;
  out.prompt_text = prefix.prompt_text;
  out.steps.reserve(prefix.steps.size() + continuation.steps.size());
  out.steps.insert(out.steps.end(), prefix.steps.begin(), prefix.steps.end());
  out.steps.insert(out.steps.end(), continuation.steps.begin(),
                   continuation.steps.end());
  out.text = prefix.text + continuation.text;
  out.terminated = continuation.terminated;
  return out;
}

}  // namespace pscale
