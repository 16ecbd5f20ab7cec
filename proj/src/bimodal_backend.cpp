#include "prefix_scale/bimodal_backend.hpp"

#include <cmath>

namespace pscale {

namespace {

// Token alphabet. Good and bad attempts use disjoint ids so a prefix's mode
// is recoverable when continuing it.
constexpr int kGoodFiller = 0;
constexpr int kBadFiller = 1;
constexpr int kGoodAnswer = 2;
constexpr int kBadAnswer = 3;

// Counter reserved for the per-attempt mode draw, outside the positional
// counter range.
constexpr uint64_t kModeCounter = uint64_t(1) << 62;

Eigen::VectorXd synth_distribution(int vocab_size, int chosen,
                                   double chosen_prob) {
  // Chosen token carries mass p; the remainder is uniform, floored so a
  // point mass never produces ln(0).
  const double rest = std::log(
      std::max((1.0 - chosen_prob) / double(vocab_size - 1), kProbFloor));
  Eigen::VectorXd d = Eigen::VectorXd::Constant(vocab_size, rest);
  d[chosen] = std::log(chosen_prob);
  return d;
}

std::string wrong_answer(const std::string& gold) {
  const uint64_t g = std::stoull(gold);
  return std::to_string((g + 1) % 10000);
}

}  // namespace

void BimodalParams::validate() const {
  // mode_rate may be 1 (every attempt good), which degenerate setting some
  // tests rely on.
  if (!(mode_rate > 0.0 && mode_rate <= 1.0)) {
    throw ValidationError("bimodal: mode_rate must lie in (0, 1]");
  }
  if (!(bad_token_prob > 0.0 && bad_token_prob < good_token_prob &&
        good_token_prob <= 1.0)) {
    throw ValidationError(
        "bimodal: need 0 < bad_token_prob < good_token_prob <= 1");
  }
  if (vocab_size < 5) throw ValidationError("bimodal: vocab_size must be >= 5");
  if (attempt_tokens < 2) {
    throw ValidationError("bimodal: attempt_tokens must be >= 2");
  }
}

std::string bimodal_gold_answer(const std::string& prompt) {
  return std::to_string(splitmix64(fnv1a64(prompt)) % 10000);
}

ScoredSequence bimodal_generate(const GenerationRequest& request,
                                const BimodalParams& params,
                                const std::string& gold_answer,
                                ComputeMeter& meter, int position_offset,
                                int forced_mode) {
  request.validate();
  params.validate();

  const bool good =
      forced_mode >= 0
          ? forced_mode != 0
          : seeded_uniform(request.seed, kModeCounter) < params.mode_rate;
  const double token_prob =
      good ? params.good_token_prob : params.bad_token_prob;
  const int filler = good ? kGoodFiller : kBadFiller;
  const int answer_token = good ? kGoodAnswer : kBadAnswer;
  const std::string answer_text =
      good ? gold_answer : wrong_answer(gold_answer);

  ScoredSequence seq;
  seq.prompt_text = request.prompt;

  const int last_position =
      std::min(position_offset + request.max_new_tokens, params.attempt_tokens);
  for (int pos = position_offset; pos < last_position; ++pos) {
    const bool is_answer = pos == params.attempt_tokens - 1;
    TokenStep step;
    step.token_id = is_answer ? answer_token : filler;
    step.chosen_logprob = std::log(token_prob);
    if (request.want_distribution) {
      step.distribution =
          synth_distribution(params.vocab_size, step.token_id, token_prob);
    }
    seq.steps.push_back(std::move(step));
    if (is_answer) {
      seq.text += "\\boxed{" + answer_text + "}";
      seq.terminated = true;
    } else {
      seq.text += good ? "ok " : "hm ";
    }
  }

  meter.add_generation(1, seq.length());
  return seq;
}

ScoredSequence BimodalBackend::generate(const GenerationRequest& request,
                                        ComputeMeter& meter) const {
  return bimodal_generate(request, params_,
                          bimodal_gold_answer(request.prompt), meter);
}

ScoredSequence BimodalBackend::continue_generation(
    const std::string& prefix_prompt, const ScoredSequence& prefix,
    const GenerationRequest& request, ComputeMeter& meter) const {
  int forced_mode = -1;
  if (!prefix.steps.empty()) {
    const int first = prefix.steps.front().token_id;
    forced_mode = (first == kGoodFiller || first == kGoodAnswer) ? 1 : 0;
  }
  GenerationRequest continued = request;
  continued.prompt = prefix_prompt + prefix.text;
  ScoredSequence out =
      bimodal_generate(continued, params_, bimodal_gold_answer(prefix_prompt),
                       meter, prefix.length(), forced_mode);
  return out;
}

}  // namespace pscale
