#include "prefix_scale/strategies.hpp"

#include <cmath>

#include "prefix_scale/toy_backend.hpp"

namespace pscale {

const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Base: return "base";
    case StrategyKind::Majority: return "majority";
    case StrategyKind::BestOfN: return "bon";
    case StrategyKind::PrefixVote: return "pc-vote";
    case StrategyKind::PrefixTrain: return "pc-train";
  }
  return "?";
}

StrategyKind strategy_from_string(const std::string& name) {
  if (name == "base") return StrategyKind::Base;
  if (name == "majority") return StrategyKind::Majority;
  if (name == "bon") return StrategyKind::BestOfN;
  if (name == "pc-vote") return StrategyKind::PrefixVote;
  if (name == "pc-train") return StrategyKind::PrefixTrain;
  throw ValidationError("unknown strategy: " + name);
}

void StrategyConfig::validate(const Backend& backend) const {
  if (num_candidates < 1) throw ValidationError("strategy: N must be >= 1");
  if (prefix_tokens < 1) throw ValidationError("strategy: K must be >= 1");
  if (epochs < 1) throw ValidationError("strategy: E must be >= 1");
  if (tuning_ratio < 0.0 || tuning_ratio > 1.0) {
    throw ValidationError("strategy: tuning ratio must lie in [0, 1]");
  }
  if (max_new_tokens < 1) {
    throw ValidationError("strategy: max_new_tokens must be >= 1");
  }
  if (temperature < 0.0) {
    throw ValidationError("strategy: temperature must be >= 0");
  }

  const BackendCapabilities caps = backend.capabilities();
  const bool uses_selection =
      kind == StrategyKind::BestOfN || kind == StrategyKind::PrefixVote;
  if (uses_selection && requires_distribution(measure) &&
      !caps.full_distribution) {
    throw CapabilityError(std::string(to_string(measure)) +
                          " needs full distributions, which backend '" +
                          backend.id() +
                          "' does not provide (HTTP backends need "
                          "--approx-tail)");
  }
  const bool uses_prefixes =
      kind == StrategyKind::PrefixVote || kind == StrategyKind::PrefixTrain;
  if (uses_prefixes && max_new_tokens <= prefix_tokens) {
    throw ValidationError(
        "strategy: max_new_tokens must exceed the prefix length K");
  }
  if (kind == StrategyKind::PrefixTrain) {
    if (!backend.trainable_model()) {
      throw CapabilityError("pc-train needs a trainable backend; '" +
                            backend.id() + "' is not trainable");
    }
    optimizer.validate();
  }
}

namespace {

GenerationRequest make_request(const Question& question,
                               const StrategyConfig& config, int budget,
                               uint64_t seed, bool want_distribution) {
  GenerationRequest req;
  req.prompt = question.text;
  req.max_new_tokens = budget;
  req.temperature = config.temperature;
  req.stop = config.stop;
  req.seed = seed;
  req.want_distribution = want_distribution;
  return req;
}

void finish_outcome(StrategyOutcome& outcome, const std::string& text) {
  outcome.final_text = text;
  const ExtractResult extracted = extract_answer(text);
  outcome.final_answer = extracted.raw;
  if (extracted.parse_warning) {
    outcome.audit.warnings.push_back(
        "answer extraction fell back to the numeric rule (unbalanced boxed)");
  }
}

// The retained attempts must account for every generated token.
void check_meter(const StrategyOutcome& outcome) {
  int64_t total = 0;
  for (const ScoredSequence& seq : outcome.attempts) total += seq.length();
  if (total != outcome.meter.generated_tokens) {
    throw Error("internal: meter counted " +
                std::to_string(outcome.meter.generated_tokens) +
                " generated tokens but attempts hold " + std::to_string(total));
  }
}

std::vector<int> token_ids(const ScoredSequence& seq) {
  std::vector<int> ids;
  ids.reserve(seq.steps.size());
  for (const TokenStep& step : seq.steps) ids.push_back(step.token_id);
  return ids;
}

}  // namespace

StrategyOutcome run_base(const Question& question, const Backend& backend,
                         const StrategyConfig& config, uint64_t run_seed) {
  StrategyOutcome outcome;
  const uint64_t seed = derive_candidate_seed(run_seed, question.id, 0);
  const GenerationRequest req =
      make_request(question, config, config.max_new_tokens, seed, false);
  ScoredSequence attempt = backend.generate(req, outcome.meter);
  finish_outcome(outcome, attempt.text);
  outcome.attempts.push_back(std::move(attempt));
  return outcome;
}

StrategyOutcome run_majority(const Question& question, const Backend& backend,
                             const StrategyConfig& config, uint64_t run_seed) {
  StrategyOutcome outcome;
  std::vector<std::optional<std::string>> answers;
  for (int i = 0; i < config.num_candidates; ++i) {
    const uint64_t seed = derive_candidate_seed(run_seed, question.id, i);
    const GenerationRequest req =
        make_request(question, config, config.max_new_tokens, seed, false);
    ScoredSequence attempt = backend.generate(req, outcome.meter);
    answers.push_back(extract_answer(attempt.text).raw);
    outcome.attempts.push_back(std::move(attempt));
  }

  const VoteResult vote = majority_vote(answers);
  outcome.audit.vote_counts = vote.classes;
  outcome.final_answer = vote.winner;
  int winner_index = 0;
  for (const VoteClass& cls : vote.classes) {
    if (!cls.absent && vote.winner && cls.representative_raw == *vote.winner) {
      winner_index = cls.first_index;
      break;
    }
  }
  outcome.final_text = outcome.attempts[winner_index].text;
  return outcome;
}

StrategyOutcome run_bon(const Question& question, const Backend& backend,
                        const StrategyConfig& config, uint64_t run_seed) {
  StrategyOutcome outcome;
  const bool want_dist = requires_distribution(config.measure);
  std::vector<ScoredSequence> attempts;
  for (int i = 0; i < config.num_candidates; ++i) {
    const uint64_t seed = derive_candidate_seed(run_seed, question.id, i);
    const GenerationRequest req = make_request(
        question, config, config.max_new_tokens, seed, want_dist);
    attempts.push_back(backend.generate(req, outcome.meter));
  }

  // Scores the complete attempts, answer tokens included.
  const SelectionResult selection = select_best(attempts, config.measure);
  outcome.audit.selection_scores = selection.scores;
  outcome.audit.selected_index = selection.best_index;
  outcome.audit.length_bias_warning = selection.length_bias_warning;
  if (selection.length_bias_warning) {
    outcome.audit.warnings.push_back(
        "self-confidence compared across attempts of unequal length "
        "(longer sequences score lower)");
  }
  finish_outcome(outcome, attempts[selection.best_index].text);
  outcome.attempts = std::move(attempts);
  return outcome;
}

StrategyOutcome run_prefix_voting(const Question& question,
                                  const Backend& backend,
                                  const StrategyConfig& config,
                                  uint64_t run_seed) {
  StrategyOutcome outcome;
  const bool want_dist = requires_distribution(config.measure);

  std::vector<ScoredSequence> prefixes;
  std::vector<uint64_t> seeds;
  for (int i = 0; i < config.num_candidates; ++i) {
    const uint64_t seed = derive_candidate_seed(run_seed, question.id, i);
    seeds.push_back(seed);
    const GenerationRequest req =
        make_request(question, config, config.prefix_tokens, seed, want_dist);
    ScoredSequence prefix = backend.generate(req, outcome.meter);
    if (prefix.length() < config.prefix_tokens) {
      outcome.audit.early_stopped_prefixes.push_back(i);
    }
    prefixes.push_back(std::move(prefix));
  }

  const SelectionResult selection = select_best(prefixes, config.measure);
  outcome.audit.selection_scores = selection.scores;
  outcome.audit.selected_index = selection.best_index;
  outcome.audit.length_bias_warning = selection.length_bias_warning;

  const ScoredSequence& winner = prefixes[selection.best_index];
  std::string full_text = winner.text;
  if (!winner.terminated) {
    // Continue the winning prefix under its own candidate seed: with
    // counter-based step randomness the deterministic backends resume the
    // attempt's stream, so pc-vote with N = 1 reproduces base exactly.
    const GenerationRequest req = make_request(
        question, config, config.max_new_tokens - config.prefix_tokens,
        seeds[selection.best_index], false);
    ScoredSequence continuation =
        backend.continue_generation(question.text, winner, req, outcome.meter);
    full_text = concat(winner, continuation).text;
    outcome.attempts = std::move(prefixes);
    outcome.attempts.push_back(std::move(continuation));
  } else {
    outcome.audit.warnings.push_back(
        "winning prefix already terminated; no continuation generated");
    outcome.attempts = std::move(prefixes);
  }

  finish_outcome(outcome, full_text);
  return outcome;
}

StrategyOutcome run_prefix_training(const Question& question,
                                    const Backend& backend,
                                    const StrategyConfig& config,
                                    uint64_t run_seed) {
  StrategyOutcome outcome;
  const BigramLM* base_model = backend.trainable_model();
  if (!base_model) {
    throw CapabilityError("pc-train needs a trainable backend; '" +
                          backend.id() + "' is not trainable");
  }
  // The copy is trained and then discarded; the backend's model is never
  // touched, so later questions start from the same base state.
  const BigramLM model = *base_model;

  const int n = config.num_candidates;
  std::vector<std::vector<int>> training_sequences;
  std::vector<ScoredSequence> prefixes;
  for (int i = 0; i < n; ++i) {
    const uint64_t seed = derive_candidate_seed(run_seed, question.id, i);
    const GenerationRequest req =
        make_request(question, config, config.prefix_tokens, seed, false);
    ScoredSequence prefix = toy_generate(model, req, outcome.meter);
    if (prefix.length() < config.prefix_tokens) {
      outcome.audit.early_stopped_prefixes.push_back(i);
    }
    prefixes.push_back(std::move(prefix));
  }

  // Tuning ratio r: the first ceil(r*N) prefixes are extended to full
  // attempts before training.
  const int num_extended =
      static_cast<int>(std::ceil(config.tuning_ratio * double(n)));
  for (int i = 0; i < n; ++i) {
    const ScoredSequence& prefix = prefixes[i];
    std::vector<int> ids = token_ids(prefix);
    if (i < num_extended && !prefix.terminated) {
      const GenerationRequest req = make_request(
          question, config, config.max_new_tokens - config.prefix_tokens,
          derive_candidate_seed(run_seed, question.id, i), false);
      ScoredSequence extension =
          toy_generate(model, req, outcome.meter, prefix.length(),
                       prefix.steps.back().token_id);
      for (int id : token_ids(extension)) ids.push_back(id);
      outcome.attempts.push_back(std::move(extension));
    }
    training_sequences.push_back(std::move(ids));
  }
  for (ScoredSequence& prefix : prefixes) {
    outcome.attempts.push_back(std::move(prefix));
  }

  // AdamWarmup wants one fresh prefix from the pre-training state; candidate
  // index N is unused by the training prefixes.
  std::vector<int> warmup_ids;
  const std::vector<int>* warmup = nullptr;
  if (config.optimizer.kind == OptimizerKind::AdamWarmup) {
    const GenerationRequest req =
        make_request(question, config, config.prefix_tokens,
                     derive_candidate_seed(run_seed, question.id, n), false);
    ScoredSequence warmup_prefix = toy_generate(model, req, outcome.meter);
    warmup_ids = token_ids(warmup_prefix);
    warmup = &warmup_ids;
    outcome.attempts.push_back(std::move(warmup_prefix));
  }

  TrainResult trained =
      train_on_prefixes(model, question.text, training_sequences, config.loss,
                        config.optimizer, config.epochs, 0, warmup);
  outcome.meter.gradient_steps +=
      static_cast<int64_t>(trained.steps.size());
  outcome.audit.training_log = std::move(trained.steps);

  // One full attempt from the trained copy, under candidate seed 0 so a
  // zero-learning-rate run reproduces base exactly.
  const GenerationRequest req =
      make_request(question, config, config.max_new_tokens,
                   derive_candidate_seed(run_seed, question.id, 0), false);
  ScoredSequence attempt = toy_generate(trained.model, req, outcome.meter);
  finish_outcome(outcome, attempt.text);
  outcome.attempts.push_back(std::move(attempt));
  return outcome;
}

StrategyOutcome run_strategy(const Question& question, const Backend& backend,
                             const StrategyConfig& config, uint64_t run_seed) {
  config.validate(backend);
  StrategyOutcome outcome;
  switch (config.kind) {
    case StrategyKind::Base:
      outcome = run_base(question, backend, config, run_seed);
      break;
    case StrategyKind::Majority:
      outcome = run_majority(question, backend, config, run_seed);
      break;
    case StrategyKind::BestOfN:
      outcome = run_bon(question, backend, config, run_seed);
      break;
    case StrategyKind::PrefixVote:
      outcome = run_prefix_voting(question, backend, config, run_seed);
      break;
    case StrategyKind::PrefixTrain:
      outcome = run_prefix_training(question, backend, config, run_seed);
      break;
  }
  check_meter(outcome);
  return outcome;
}

}  // namespace pscale
