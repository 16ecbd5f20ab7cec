#include <doctest.h>

#include <cmath>
#include <random>

#include "prefix_scale/confidence.hpp"
#include "prefix_scale/toy_backend.hpp"
#include "test_util.hpp"

using namespace pscale;
using test_util::close_abs;

namespace {

ScoredSequence sequence_from_logprobs(const std::vector<double>& logprobs) {
  ScoredSequence seq;
  for (double lp : logprobs) {
    TokenStep s;
    s.chosen_logprob = lp;
    seq.steps.push_back(s);
  }
  return seq;
}

// A step whose distribution is given as probabilities; the chosen token's
// log-probability matches its distribution entry exactly.
TokenStep step_from_probs(const std::vector<double>& probs, int chosen) {
  Eigen::VectorXd d(probs.size());
  for (size_t j = 0; j < probs.size(); ++j) d[j] = std::log(probs[j]);
  TokenStep s;
  s.token_id = chosen;
  s.chosen_logprob = d[chosen];
  s.distribution = d;
  return s;
}

ScoredSequence uniform_sequence(int n, int vocab) {
  ScoredSequence seq;
  for (int i = 0; i < n; ++i) {
    seq.steps.push_back(
        step_from_probs(std::vector<double>(vocab, 1.0 / vocab), i % vocab));
  }
  return seq;
}

}  // namespace

TEST_CASE("self-confidence spot values") {
  // Deterministic model: every chosen token had probability one.
  CHECK(self_confidence(sequence_from_logprobs({0.0, 0.0, 0.0})) == 0.0);

  // Probabilities 0.5 and 0.25 multiply to 0.125.
  const ScoredSequence seq =
      sequence_from_logprobs({std::log(0.5), std::log(0.25)});
  CHECK(close_abs(self_confidence(seq), std::log(0.125), 1e-12));
  CHECK(close_abs(self_confidence(seq), -2.0794415416798357, 1e-12));

  CHECK_THROWS_AS(self_confidence(ScoredSequence{}), ValidationError);
}

TEST_CASE("self-certainty spot values") {
  // Uniform distributions: KL to itself is zero, constant included.
  CHECK(close_abs(self_certainty(uniform_sequence(5, 16)), 0.0, 1e-12));

  // Single step, V = 2, p = (0.9, 0.1):
  // 0.5 * (ln(0.5/0.9) + ln(0.5/0.1)) = 0.51082562...
  ScoredSequence seq;
  seq.steps.push_back(step_from_probs({0.9, 0.1}, 0));
  CHECK(close_abs(self_certainty(seq), 0.5108256237659907, 1e-9));
  CHECK(close_abs(self_certainty(seq), 0.510826, 1e-6));

  // Missing distributions name the measure.
  const ScoredSequence no_dist = sequence_from_logprobs({-0.5});
  CHECK_THROWS_WITH_AS(self_certainty(no_dist),
                       doctest::Contains("self-certainty"), CapabilityError);
}

TEST_CASE("self-certainty ignores which token was sampled") {
  ScoredSequence a;
  ScoredSequence b;
  const std::vector<double> probs = {0.7, 0.2, 0.06, 0.04};
  a.steps.push_back(step_from_probs(probs, 0));
  b.steps.push_back(step_from_probs(probs, 3));
  CHECK(self_certainty(a) == self_certainty(b));
  CHECK(negative_entropy(a) == negative_entropy(b));
}

TEST_CASE("negative entropy spot values") {
  // Point mass: zero entropy. The off-mass entries sit at the backend floor.
  std::vector<double> point(8, 1e-30);
  point[3] = 1.0 - 7e-30;
  ScoredSequence seq;
  seq.steps.push_back(step_from_probs(point, 3));
  CHECK(close_abs(negative_entropy(seq), 0.0, 1e-9));

  // Uniform over V = 4: minus the entropy of uniform, -ln 4.
  CHECK(close_abs(negative_entropy(uniform_sequence(3, 4)),
                  -1.3862943611198906, 1e-12));
}

TEST_CASE("confidence measures match brute-force oracles on toy sequences") {
  // 1000 random toy-generated sequences, V <= 50, n <= 64; all three
  // measures must match an independent sequential re-summation to 1e-12.
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int vocab = 2 + int(rng() % 49);
    const int len = 1 + int(rng() % 64);
    const BigramLM model = BigramLM::random(vocab, rng(), 1.5);

    GenerationRequest req;
    req.prompt = "oracle " + std::to_string(trial);
    req.max_new_tokens = len;
    req.seed = rng();
    req.want_distribution = true;

    ComputeMeter meter;
    const ScoredSequence seq = toy_generate(model, req, meter);
    REQUIRE(seq.length() == len);

    CHECK(close_abs(self_confidence(seq),
                    test_util::oracle_self_confidence(seq), 1e-12));
    CHECK(close_abs(self_certainty(seq), test_util::oracle_self_certainty(seq),
                    1e-12));
    CHECK(close_abs(negative_entropy(seq),
                    test_util::oracle_negative_entropy(seq), 1e-12));
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("measure bounds hold on random sequences") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int vocab = 2 + int(rng() % 30);
    const BigramLM model = BigramLM::random(vocab, rng(), 2.0);
    GenerationRequest req;
    req.prompt = "bounds";
    req.max_new_tokens = 1 + int(rng() % 20);
    req.seed = rng();
    req.want_distribution = true;
    ComputeMeter meter;
    const ScoredSequence seq = toy_generate(model, req, meter);

    CHECK(self_confidence(seq) <= 0.0);
    CHECK(self_certainty(seq) >= -1e-12);
    CHECK(negative_entropy(seq) <= 1e-12);
    CHECK(negative_entropy(seq) >= -std::log(double(vocab)) - 1e-12);
  }
}

TEST_CASE("select_best breaks ties to the lowest index") {
  auto seq_with_score = [](double total, int n) {
    std::vector<double> logprobs(n, total / n);
    ScoredSequence seq;
    for (double lp : logprobs) {
      TokenStep s;
      s.chosen_logprob = lp;
      seq.steps.push_back(s);
    }
    return seq;
  };

  const std::vector<ScoredSequence> candidates = {
      seq_with_score(-3.1, 4), seq_with_score(-2.5, 4), seq_with_score(-2.5, 4)};
  const SelectionResult r =
      select_best(candidates, ConfidenceMeasure::SelfConfidence);
  CHECK(r.best_index == 1);
  CHECK(!r.length_bias_warning);

  const std::vector<ScoredSequence> equal = {
      seq_with_score(-1.0, 2), seq_with_score(-1.0, 2), seq_with_score(-1.0, 2)};
  CHECK(select_best(equal, ConfidenceMeasure::SelfConfidence).best_index == 0);

  CHECK_THROWS_AS(select_best({}, ConfidenceMeasure::SelfConfidence),
                  ValidationError);
}

TEST_CASE("select_best flags mixed lengths under self-confidence only") {
  ScoredSequence short_seq = sequence_from_logprobs({-0.1, -0.1});
  ScoredSequence long_seq = sequence_from_logprobs({-0.1, -0.1, -0.1});
  const SelectionResult r = select_best({short_seq, long_seq},
                                        ConfidenceMeasure::SelfConfidence);
  CHECK(r.length_bias_warning);
  CHECK(r.best_index == 0);  // longer sequence scores lower

  ScoredSequence a;
  a.steps.push_back(step_from_probs({0.9, 0.1}, 0));
  ScoredSequence b;
  b.steps.push_back(step_from_probs({0.8, 0.2}, 0));
  b.steps.push_back(step_from_probs({0.8, 0.2}, 0));
  const SelectionResult cert =
      select_best({a, b}, ConfidenceMeasure::SelfCertainty);
  CHECK(!cert.length_bias_warning);
}

TEST_CASE("argmax is invariant to per-token additive shifts at equal length") {
  // Property over random equal-length score sets: adding the same constant
  // to every chosen logprob of every candidate cannot change the argmax.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> logprob_dist(-3.0, 0.0);
  std::uniform_real_distribution<double> shift_dist(-2.0, 0.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int num = 2 + int(rng() % 6);
    const int len = 1 + int(rng() % 8);
    std::vector<ScoredSequence> candidates;
    for (int c = 0; c < num; ++c) {
      std::vector<double> lps;
      for (int i = 0; i < len; ++i) lps.push_back(logprob_dist(rng));
      candidates.push_back(sequence_from_logprobs(lps));
    }
    const int before =
        select_best(candidates, ConfidenceMeasure::SelfConfidence).best_index;

    const double shift = shift_dist(rng);
    for (ScoredSequence& c : candidates) {
      for (TokenStep& s : c.steps) s.chosen_logprob += shift;
    }
    const int after =
        select_best(candidates, ConfidenceMeasure::SelfConfidence).best_index;
    CHECK(before == after);
  }
}

TEST_CASE("scores are deterministic") {
  const BigramLM model = BigramLM::random(20, 3);
  GenerationRequest req;
  req.prompt = "determinism";
  req.max_new_tokens = 32;
  req.seed = 11;
  req.want_distribution = true;
  ComputeMeter meter;
  const ScoredSequence seq = toy_generate(model, req, meter);

  CHECK(self_confidence(seq) == self_confidence(seq));
  CHECK(self_certainty(seq) == self_certainty(seq));
  CHECK(negative_entropy(seq) == negative_entropy(seq));
}

TEST_CASE("measure names round-trip") {
  for (ConfidenceMeasure m :
       {ConfidenceMeasure::SelfConfidence, ConfidenceMeasure::SelfCertainty,
        ConfidenceMeasure::NegativeEntropy}) {
    CHECK(measure_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(measure_from_string("entropy?"), ValidationError);
  CHECK(!requires_distribution(ConfidenceMeasure::SelfConfidence));
  CHECK(requires_distribution(ConfidenceMeasure::SelfCertainty));
  CHECK(requires_distribution(ConfidenceMeasure::NegativeEntropy));
}
