#include "prefix_scale/confidence.hpp"

#include <cmath>

namespace pscale {

const char* to_string(ConfidenceMeasure m) {
  switch (m) {
    case ConfidenceMeasure::SelfConfidence: return "self-confidence";
    case ConfidenceMeasure::SelfCertainty: return "self-certainty";
    case ConfidenceMeasure::NegativeEntropy: return "negative-entropy";
  }
  return "?";
}

ConfidenceMeasure measure_from_string(const std::string& name) {
  if (name == "self-confidence") return ConfidenceMeasure::SelfConfidence;
  if (name == "self-certainty") return ConfidenceMeasure::SelfCertainty;
  if (name == "negative-entropy") return ConfidenceMeasure::NegativeEntropy;
  throw ValidationError("unknown confidence measure: " + name);
}

bool requires_distribution(ConfidenceMeasure m) {
  return m != ConfidenceMeasure::SelfConfidence;
}

namespace {

void require_nonempty(const ScoredSequence& seq, const char* measure) {
  if (seq.steps.empty()) {
    throw ValidationError(std::string(measure) +
                          ": undefined on an empty sequence");
  }
}

const Eigen::VectorXd& require_distribution(const TokenStep& step,
                                            const char* measure) {
  if (!step.distribution) {
    throw CapabilityError(std::string(measure) +
                          " requires full per-step distributions, but a step "
                          "has none (backend emitted chosen logprobs only)");
  }
  return *step.distribution;
}

}  // namespace

double self_confidence(const ScoredSequence& seq) {
  require_nonempty(seq, "self_confidence");
  double total = 0.0;
  for (const TokenStep& step : seq.steps) total += step.chosen_logprob;
  return total;
}

double self_certainty(const ScoredSequence& seq) {
  require_nonempty(seq, "self_certainty");
  double total = 0.0;
  for (const TokenStep& step : seq.steps) {
    const Eigen::VectorXd& d = require_distribution(step, "self-certainty");
    const double v = static_cast<double>(d.size());
    total += -std::log(v) - d.mean();
  }
  return total / static_cast<double>(seq.steps.size());
}

double negative_entropy(const ScoredSequence& seq) {
  require_nonempty(seq, "negative_entropy");
  double total = 0.0;
  for (const TokenStep& step : seq.steps) {
    const Eigen::VectorXd& d = require_distribution(step, "negative-entropy");
    total += (d.array().exp() * d.array()).sum();
  }
  return total / static_cast<double>(seq.steps.size());
}

double score(const ScoredSequence& seq, ConfidenceMeasure m) {
  switch (m) {
    case ConfidenceMeasure::SelfConfidence: return self_confidence(seq);
    case ConfidenceMeasure::SelfCertainty: return self_certainty(seq);
    case ConfidenceMeasure::NegativeEntropy: return negative_entropy(seq);
  }
  throw ValidationError("score: bad measure");
}

SelectionResult select_best(const std::vector<ScoredSequence>& candidates,
                            ConfidenceMeasure measure) {
  if (candidates.empty()) {
    throw ValidationError("select_best: empty candidate list");
  }
  SelectionResult result;
  result.scores.reserve(candidates.size());
  for (const ScoredSequence& c : candidates) {
    result.scores.push_back(score(c, measure));
  }
  result.best_index = 0;
  for (int i = 1; i < static_cast<int>(result.scores.size()); ++i) {
    if (result.scores[i] > result.scores[result.best_index]) {
      result.best_index = i;
    }
  }
  if (measure == ConfidenceMeasure::SelfConfidence) {
    const int n0 = candidates.front().length();
    for (const ScoredSequence& c : candidates) {
      if (c.length() != n0) {
        result.length_bias_warning = true;
        break;
      }
    }
  }
  return result;
}

}  // namespace pscale
