#include <doctest.h>

#include <cmath>

#include "prefix_scale/common.hpp"
#include "prefix_scale/confidence.hpp"
#include "prefix_scale/sequence.hpp"
#include "prefix_scale/toy_backend.hpp"
#include "test_util.hpp"

using namespace pscale;
using test_util::close_abs;

namespace {

TokenStep make_step(int token, double logprob) {
  TokenStep s;
  s.token_id = token;
  s.chosen_logprob = logprob;
  return s;
}

ScoredSequence make_sequence(const std::string& prompt, int n, double logprob,
                             const std::string& piece = "x ") {
  ScoredSequence seq;
  seq.prompt_text = prompt;
  for (int i = 0; i < n; ++i) {
    seq.steps.push_back(make_step(i % 3, logprob));
    seq.text += piece;
  }
  return seq;
}

}  // namespace

TEST_CASE("token step validation") {
  TokenStep ok = make_step(1, -0.5);
  CHECK_NOTHROW(validate_step(ok));

  TokenStep positive = make_step(0, 0.25);
  CHECK_THROWS_AS(validate_step(positive), ValidationError);

  TokenStep with_dist = make_step(0, std::log(0.25));
  with_dist.distribution = Eigen::VectorXd::Constant(4, std::log(0.25));
  CHECK_NOTHROW(validate_step(with_dist));

  // Exp-sum off by more than 1e-9.
  TokenStep bad_mass = with_dist;
  bad_mass.distribution = Eigen::VectorXd::Constant(4, std::log(0.3));
  bad_mass.chosen_logprob = std::log(0.3);
  CHECK_THROWS_AS(validate_step(bad_mass), ValidationError);

  // Chosen entry must match bit-exactly.
  TokenStep mismatched = with_dist;
  mismatched.chosen_logprob = std::log(0.25) + 1e-15;
  CHECK_THROWS_AS(validate_step(mismatched), ValidationError);
}

TEST_CASE("concat length additivity") {
  ScoredSequence prefix = make_sequence("Q", 32, -0.1);
  ScoredSequence continuation = make_sequence("Q" + prefix.text, 200, -0.2);
  continuation.terminated = true;

  const ScoredSequence joined = concat(prefix, continuation);
  CHECK(joined.length() == 232);
  CHECK(joined.prompt_text == "Q");
  CHECK(joined.text == prefix.text + continuation.text);
  CHECK(joined.terminated);
}

TEST_CASE("concat identity on empty prefix") {
  ScoredSequence empty;
  empty.prompt_text = "Q";
  ScoredSequence s = make_sequence("Q", 5, -0.3);

  const ScoredSequence joined = concat(empty, s);
  CHECK(joined.length() == s.length());
  CHECK(joined.text == s.text);
  CHECK(joined.prompt_text == s.prompt_text);
}

TEST_CASE("concat rejects prompt mismatch") {
  ScoredSequence prefix = make_sequence("Q", 3, -0.1);
  ScoredSequence other = make_sequence("other prompt", 3, -0.1);
  CHECK_THROWS_AS(concat(prefix, other), ValidationError);
}

TEST_CASE("concat preserves self-confidence additivity on toy generations") {
  // Chain rule: the continuation is conditioned on the prefix, so sequence
  // log-probabilities add. Oracle: direct summation over both parts.
  const BigramLM model = BigramLM::random(12, 7);
  const ToyBackend backend(model);

  for (int trial = 0; trial < 50; ++trial) {
    ComputeMeter meter;
    GenerationRequest req;
    req.prompt = "question " + std::to_string(trial);
    req.max_new_tokens = 6 + trial % 5;
    req.seed = trial;
    const ScoredSequence prefix = backend.generate(req, meter);

    GenerationRequest cont_req = req;
    cont_req.max_new_tokens = 4 + trial % 7;
    const ScoredSequence continuation =
        backend.continue_generation(req.prompt, prefix, cont_req, meter);
    const ScoredSequence joined = concat(prefix, continuation);

    double oracle = 0.0;
    for (const TokenStep& s : prefix.steps) oracle += s.chosen_logprob;
    for (const TokenStep& s : continuation.steps) oracle += s.chosen_logprob;
    CHECK(close_abs(self_confidence(joined),
                    self_confidence(prefix) + self_confidence(continuation),
                    1e-12));
    CHECK(close_abs(self_confidence(joined), oracle, 1e-12));
  }
}

TEST_CASE("compute meter counters grow monotonically") {
  ComputeMeter meter;
  meter.add_generation(10, 32);
  CHECK(meter.prompt_tokens == 10);
  CHECK(meter.generated_tokens == 32);
  CHECK(meter.backend_calls == 1);
  meter.add_generation(0, 8);
  CHECK(meter.generated_tokens == 40);
  CHECK(meter.backend_calls == 2);
}
