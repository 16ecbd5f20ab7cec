#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prefix_scale/answers.hpp"
#include "prefix_scale/backend.hpp"
#include "prefix_scale/confidence.hpp"

namespace pscale {

// ============================================================================
// Test-time scaling strategies
// ============================================================================
//
// Five ways to spend inference compute on one question:
//   base      one full attempt
//   majority  N full attempts, plurality answer
//   bon       N full attempts, answer of the highest-confidence attempt
//   pc-vote   N short prefixes, continue only the most confident one
//   pc-train  fine-tune a copy of the model on its own N prefixes, then
//             generate one attempt
//
// Every candidate generation draws its seed from (run seed, question id,
// candidate index), so candidate sets are reproducible and the N = 1
// variants of majority / bon / pc-vote reproduce base exactly on
// deterministic backends.

enum class StrategyKind { Base, Majority, BestOfN, PrefixVote, PrefixTrain };

const char* to_string(StrategyKind k);
StrategyKind strategy_from_string(const std::string& name);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Base;
  int num_candidates = 8;  // N
  int prefix_tokens = 32;  // K
  ConfidenceMeasure measure = ConfidenceMeasure::SelfConfidence;
  LossKind loss = LossKind::Nll;
  OptimizerConfig optimizer = OptimizerConfig::defaults_for(OptimizerKind::Sgd);
  int epochs = 1;            // E
  double tuning_ratio = 0.0; // r: fraction of prefixes extended to full
                             // attempts before training

  // Generation defaults shared by all attempts of the run.
  int max_new_tokens = 1024;
  double temperature = 1.0;
  std::vector<std::string> stop;

  /// Validates ranges and the backend's capabilities for this strategy.
  /// Throws ValidationError / CapabilityError with actionable messages.
  void validate(const Backend& backend) const;
};

struct Question {
  std::string id;
  std::string text;
};

struct StrategyAudit {
  std::vector<double> selection_scores;  // bon / pc-vote, candidate order
  std::optional<int> selected_index;
  std::vector<VoteClass> vote_counts;    // majority
  bool length_bias_warning = false;
  std::vector<int> early_stopped_prefixes;  // pc-vote/pc-train candidates
  std::vector<TrainStepLog> training_log;   // pc-train
  std::vector<std::string> warnings;
};

struct StrategyOutcome {
  std::optional<std::string> final_answer;  // raw extracted answer
  std::string final_text;                   // text the answer came from
  std::vector<ScoredSequence> attempts;     // every sequence generated
  ComputeMeter meter;
  StrategyAudit audit;
};

StrategyOutcome run_base(const Question& question, const Backend& backend,
                         const StrategyConfig& config, uint64_t run_seed);
StrategyOutcome run_majority(const Question& question, const Backend& backend,
                             const StrategyConfig& config, uint64_t run_seed);
StrategyOutcome run_bon(const Question& question, const Backend& backend,
                        const StrategyConfig& config, uint64_t run_seed);
StrategyOutcome run_prefix_voting(const Question& question,
                                  const Backend& backend,
                                  const StrategyConfig& config,
                                  uint64_t run_seed);
StrategyOutcome run_prefix_training(const Question& question,
                                    const Backend& backend,
                                    const StrategyConfig& config,
                                    uint64_t run_seed);

/// Validates, dispatches on config.kind, and checks the meter against the
/// retained attempts before returning.
StrategyOutcome run_strategy(const Question& question, const Backend& backend,
                             const StrategyConfig& config, uint64_t run_seed);

}  // namespace pscale
