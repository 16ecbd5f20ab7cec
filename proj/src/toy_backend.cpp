#include "prefix_scale/toy_backend.hpp"

#include <algorithm>
#include <cmath>

namespace pscale {

namespace {

Eigen::VectorXd tempered_log_softmax(const BigramLM& model, int context,
                                     double temperature) {
  Eigen::VectorXd row = model.logits.row(context) / temperature;
  const double m = row.maxCoeff();
  Eigen::VectorXd shifted = row.array() - m;
  const double lse = std::log(shifted.array().exp().sum());
  return shifted.array() - lse;
}

int sample_from_logdist(const Eigen::VectorXd& logdist, double u) {
  double cum = 0.0;
  const int v = static_cast<int>(logdist.size());
  for (int j = 0; j < v; ++j) {
    cum += std::exp(logdist[j]);
    if (u < cum) return j;
  }
  return v - 1;
}

bool is_stop_token(const std::vector<std::string>& stop, int token) {
  const std::string piece = std::to_string(token);
  return std::find(stop.begin(), stop.end(), piece) != stop.end();
}

}  // namespace

ScoredSequence toy_generate(const BigramLM& model,
                            const GenerationRequest& request,
                            ComputeMeter& meter, int position_offset,
                            int start_context) {
  request.validate();
  ScoredSequence seq;
  seq.prompt_text = request.prompt;

  int context = start_context >= 0 ? start_context
                                   : conditioning_token(model, request.prompt);
  for (int i = 0; i < request.max_new_tokens; ++i) {
    int token;
    double chosen_logprob;
    Eigen::VectorXd recorded;
    if (request.temperature == 0.0) {
      // Greedy: argmax of the untempered distribution, which is also what
      // gets recorded.
      recorded = next_distribution(model, context);
      recorded.maxCoeff(&token);
      chosen_logprob = recorded[token];
    } else {
      recorded = tempered_log_softmax(model, context, request.temperature);
      const double u =
          seeded_uniform(request.seed, uint64_t(position_offset) + i);
      token = sample_from_logdist(recorded, u);
      chosen_logprob = recorded[token];
    }

    if (is_stop_token(request.stop, token)) {
      // The stop token is consumed but excluded from the sequence, mirroring
      // how servers exclude stop strings from returned text.
      seq.terminated = true;
      break;
    }

    TokenStep step;
    step.token_id = token;
    step.chosen_logprob = chosen_logprob;
    if (request.want_distribution) step.distribution = std::move(recorded);
    seq.steps.push_back(std::move(step));
    seq.text += std::to_string(token) + " ";
    context = token;
  }

  meter.add_generation(1, seq.length());
  return seq;
}

ScoredSequence ToyBackend::generate(const GenerationRequest& request,
                                    ComputeMeter& meter) const {
  return toy_generate(model_, request, meter);
}

ScoredSequence ToyBackend::continue_generation(const std::string& prefix_prompt,
                                               const ScoredSequence& prefix,
                                               const GenerationRequest& request,
                                               ComputeMeter& meter) const {
  const int context = prefix.steps.empty()
                          ? conditioning_token(model_, prefix_prompt)
                          : prefix.steps.back().token_id;
  GenerationRequest continued = request;
  continued.prompt = prefix_prompt + prefix.text;
  return toy_generate(model_, continued, meter, prefix.length(), context);
}

}  // namespace pscale
