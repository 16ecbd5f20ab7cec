#pragma once

#include <string>
#include <vector>

#include "prefix_scale/sequence.hpp"

namespace pscale {

// ============================================================================
// Confidence measures
// ============================================================================
//
// Three scoring rules over a generated sequence. SelfConfidence needs only
// the chosen-token log-probabilities; the other two need the full next-token
// distribution on every step.

enum class ConfidenceMeasure {
  SelfConfidence,   // unnormalized sequence log-likelihood
  SelfCertainty,    // mean per-token KL(Unif || p)
  NegativeEntropy,  // minus the mean per-token entropy
};

const char* to_string(ConfidenceMeasure m);
ConfidenceMeasure measure_from_string(const std::string& name);

/// True if the measure needs the full distribution on every step.
bool requires_distribution(ConfidenceMeasure m);

/// Sum of chosen-token log-probabilities (no 1/n scaling). Always <= 0.
/// Throws ValidationError on an empty sequence.
double self_confidence(const ScoredSequence& seq);

/// (1/n) sum_i KL(Unif || p_i), with the exact KL form
///   KL(Unif || p) = -ln V - (1/V) sum_j ln p_j,
/// constant included so a uniform distribution scores exactly zero.
/// Throws CapabilityError if any step lacks its distribution.
double self_certainty(const ScoredSequence& seq);

/// Minus the mean token entropy, (1/n) sum_i sum_j p_ij ln p_ij, computed as
/// sum exp(l)*l over the stored log-probabilities. Zero for point masses,
/// -ln V for uniform distributions.
double negative_entropy(const ScoredSequence& seq);

/// Dispatches to the measure's scoring function.
double score(const ScoredSequence& seq, ConfidenceMeasure m);

// ============================================================================
// Selection
// ============================================================================

struct SelectionResult {
  int best_index = 0;          // smallest index attaining the maximum score
  std::vector<double> scores;  // one per candidate, in input order
  /// Set when candidates of unequal length were ranked by SelfConfidence,
  /// which penalizes longer sequences.
  bool length_bias_warning = false;
};

/// Scores every candidate and returns the argmax, ties broken to the lowest
/// index. Mixed lengths are permitted (full-attempt reranking needs them) but
/// flagged under SelfConfidence. Throws ValidationError on an empty list.
SelectionResult select_best(const std::vector<ScoredSequence>& candidates,
                            ConfidenceMeasure measure);

}  // namespace pscale
