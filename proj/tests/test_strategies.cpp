#include <doctest.h>

#include <cmath>

#include "prefix_scale/bimodal_backend.hpp"
#include "prefix_scale/http_backend.hpp"
#include "prefix_scale/strategies.hpp"
#include "prefix_scale/toy_backend.hpp"
#include "test_util.hpp"

using namespace pscale;
using test_util::close_abs;

namespace {

StrategyConfig base_config(int max_new_tokens = 64) {
  StrategyConfig c;
  c.kind = StrategyKind::Base;
  c.max_new_tokens = max_new_tokens;
  return c;
}

StrategyConfig pc_vote_config(int n, int k = 32, int max_new_tokens = 64) {
  StrategyConfig c;
  c.kind = StrategyKind::PrefixVote;
  c.num_candidates = n;
  c.prefix_tokens = k;
  c.max_new_tokens = max_new_tokens;
  return c;
}

const Question kQuestion{"q-1", "Compute the boxed value of task 1."};

}  // namespace

TEST_CASE("single-candidate strategies reproduce base exactly") {
  const ToyBackend toy(BigramLM::random(20, 3));
  const BimodalBackend bimodal;

  for (const Backend* backend :
       std::initializer_list<const Backend*>{&toy, &bimodal}) {
    for (uint64_t run_seed : {0ull, 1ull, 17ull}) {
      const StrategyOutcome base =
          run_strategy(kQuestion, *backend, base_config(), run_seed);

      StrategyConfig majority = base_config();
      majority.kind = StrategyKind::Majority;
      majority.num_candidates = 1;
      CHECK(run_strategy(kQuestion, *backend, majority, run_seed).final_text ==
            base.final_text);

      StrategyConfig bon = base_config();
      bon.kind = StrategyKind::BestOfN;
      bon.num_candidates = 1;
      CHECK(run_strategy(kQuestion, *backend, bon, run_seed).final_text ==
            base.final_text);

      const StrategyOutcome pc =
          run_strategy(kQuestion, *backend, pc_vote_config(1), run_seed);
      CHECK(pc.final_text == base.final_text);
      if (base.final_answer) {
        CHECK(pc.final_answer == base.final_answer);
      }
    }
  }
}

TEST_CASE("base strategy accounts for exactly one attempt") {
  const BimodalBackend backend;
  const StrategyOutcome outcome =
      run_strategy(kQuestion, backend, base_config(), 5);
  REQUIRE(outcome.attempts.size() == 1);
  CHECK(outcome.meter.generated_tokens == outcome.attempts[0].length());
  CHECK(outcome.meter.backend_calls == 1);
  CHECK(outcome.meter.gradient_steps == 0);

  // Determinism: the same run twice is identical.
  const StrategyOutcome again =
      run_strategy(kQuestion, backend, base_config(), 5);
  CHECK(again.final_text == outcome.final_text);
  CHECK(again.meter.generated_tokens == outcome.meter.generated_tokens);
}

TEST_CASE("base on a good-mode seed returns the gold answer") {
  const BimodalBackend backend;
  const std::string gold = bimodal_gold_answer(kQuestion.text);
  bool saw_good = false;
  bool saw_bad = false;
  for (uint64_t run_seed = 0; run_seed < 40 && !(saw_good && saw_bad);
       ++run_seed) {
    const StrategyOutcome outcome =
        run_strategy(kQuestion, backend, base_config(), run_seed);
    REQUIRE(outcome.final_answer.has_value());
    if (equivalent(*outcome.final_answer, gold)) {
      saw_good = true;
    } else {
      saw_bad = true;
    }
  }
  CHECK(saw_good);
  CHECK(saw_bad);
}

TEST_CASE("majority with mode rate one is always correct") {
  BimodalParams params;
  params.mode_rate = 1.0;
  const BimodalBackend backend(params);
  const std::string gold = bimodal_gold_answer(kQuestion.text);

  for (int n : {1, 3, 8}) {
    StrategyConfig config = base_config();
    config.kind = StrategyKind::Majority;
    config.num_candidates = n;
    const StrategyOutcome outcome =
        run_strategy(kQuestion, backend, config, 11);
    REQUIRE(outcome.final_answer.has_value());
    CHECK(equivalent(*outcome.final_answer, gold));

    int votes = 0;
    for (const VoteClass& cls : outcome.audit.vote_counts) {
      votes += cls.count;
    }
    CHECK(votes == n);
  }
}

TEST_CASE("majority meter counts all attempts") {
  const ToyBackend backend(BigramLM::random(16, 9));
  StrategyConfig config = base_config(40);
  config.kind = StrategyKind::Majority;
  config.num_candidates = 5;
  const StrategyOutcome outcome = run_strategy(kQuestion, backend, config, 3);
  CHECK(outcome.attempts.size() == 5);
  CHECK(outcome.meter.generated_tokens == 5 * 40);
  CHECK(outcome.meter.backend_calls == 5);
}

TEST_CASE("best-of-n picks the enumerated argmax attempt") {
  // Bimodal attempts all have the same length, so self-confidence ranks
  // good above bad deterministically; the first good candidate wins.
  const BimodalBackend backend;
  StrategyConfig config = base_config();
  config.kind = StrategyKind::BestOfN;
  config.num_candidates = 8;
  const std::string gold = bimodal_gold_answer(kQuestion.text);

  int good_runs = 0;
  for (uint64_t run_seed = 0; run_seed < 30; ++run_seed) {
    const StrategyOutcome outcome =
        run_strategy(kQuestion, backend, config, run_seed);
    REQUIRE(outcome.audit.selected_index.has_value());
    REQUIRE(outcome.audit.selection_scores.size() == 8);
    CHECK(!outcome.audit.length_bias_warning);  // equal lengths

    // Oracle: the selected index is the first maximal score.
    const auto& scores = outcome.audit.selection_scores;
    int expected = 0;
    for (int i = 1; i < 8; ++i) {
      if (scores[i] > scores[expected]) expected = i;
    }
    CHECK(*outcome.audit.selected_index == expected);

    REQUIRE(outcome.final_answer.has_value());
    const bool any_good =
        *std::max_element(scores.begin(), scores.end()) >
        64.0 * std::log(0.5) + 1.0;
    if (any_good) {
      CHECK(equivalent(*outcome.final_answer, gold));
      ++good_runs;
    }
    CHECK(outcome.meter.generated_tokens == 8 * 64);
  }
  CHECK(good_runs > 0);
}

TEST_CASE("best-of-n flags unequal attempt lengths under self-confidence") {
  // A toy model with a reachable stop token makes attempts stop at
  // different lengths across candidates.
  BigramLM model = BigramLM::random(6, 2);
  model.logits.col(0).array() -= 0.5;  // keep token "0" rare but reachable
  const ToyBackend backend(model);

  StrategyConfig config = base_config(30);
  config.kind = StrategyKind::BestOfN;
  config.num_candidates = 6;
  config.stop = {"0"};

  const StrategyOutcome outcome = run_strategy(kQuestion, backend, config, 0);
  bool unequal = false;
  for (const ScoredSequence& a : outcome.attempts) {
    if (a.length() != outcome.attempts.front().length()) unequal = true;
  }
  REQUIRE(unequal);  // seed chosen so lengths differ
  CHECK(outcome.audit.length_bias_warning);
  CHECK(!outcome.audit.warnings.empty());
}

TEST_CASE("prefix voting accounts N*K plus continuation tokens") {
  BimodalParams params;
  params.attempt_tokens = 232;
  const BimodalBackend backend(params);
  const StrategyOutcome outcome = run_strategy(
      kQuestion, backend, pc_vote_config(8, 32, 232), 4);
  // 8 prefixes of 32 plus one continuation of 200.
  CHECK(outcome.meter.generated_tokens == 8 * 32 + 200);
  CHECK(outcome.meter.backend_calls == 9);
  CHECK(outcome.audit.early_stopped_prefixes.empty());
  REQUIRE(outcome.audit.selected_index.has_value());
}

TEST_CASE("prefix voting achieves the closed-form bimodal accuracy") {
  // P(at least one good prefix among 8) = 1 - 0.7^8 = 0.94235...; any good
  // prefix outscores every bad prefix, and continuing it yields the gold
  // answer.
  const BimodalBackend backend;  // q = 0.3, p_g = 0.9, p_b = 0.5
  const StrategyConfig config = pc_vote_config(8);

  int correct = 0;
  const int runs = 400;
  for (int i = 0; i < runs; ++i) {
    const Question q{"q-" + std::to_string(i),
                     "Bimodal accuracy task " + std::to_string(i)};
    const std::string gold = bimodal_gold_answer(q.text);
    const StrategyOutcome outcome = run_strategy(q, backend, config, 0);
    REQUIRE(outcome.final_answer.has_value());
    if (equivalent(*outcome.final_answer, gold)) ++correct;
  }
  const double expected = 1.0 - std::pow(0.7, 8);
  // Five-sigma Monte-Carlo band for 400 Bernoulli draws.
  CHECK(close_abs(double(correct) / runs, expected, 0.06));
}

TEST_CASE("prefix voting skips the continuation when the prefix terminated") {
  BimodalParams params;
  params.attempt_tokens = 16;  // shorter than the requested prefix
  const BimodalBackend backend(params);
  const StrategyOutcome outcome = run_strategy(
      kQuestion, backend, pc_vote_config(4, 32, 64), 9);
  CHECK(outcome.meter.generated_tokens == 4 * 16);
  CHECK(outcome.audit.early_stopped_prefixes.size() == 4);
  REQUIRE(outcome.final_answer.has_value());  // answer inside the prefix
}

TEST_CASE("prefix training performs N*E gradient steps and extends r*N") {
  const ToyBackend backend(BigramLM::random(12, 5));
  StrategyConfig config;
  config.kind = StrategyKind::PrefixTrain;
  config.num_candidates = 4;
  config.prefix_tokens = 8;
  config.max_new_tokens = 20;
  config.epochs = 3;
  config.tuning_ratio = 0.5;

  const StrategyOutcome outcome = run_strategy(kQuestion, backend, config, 6);
  CHECK(outcome.meter.gradient_steps == 4 * 3);
  CHECK(outcome.audit.training_log.size() == 12);
  // Tokens: 4 prefixes of 8, two extensions of 12, one final attempt of 20.
  CHECK(outcome.meter.generated_tokens == 4 * 8 + 2 * 12 + 20);
  REQUIRE(outcome.attempts.size() == 4 + 2 + 1);
}

TEST_CASE("prefix training with zero learning rate reproduces base") {
  const ToyBackend backend(BigramLM::random(18, 31));
  StrategyConfig config;
  config.kind = StrategyKind::PrefixTrain;
  config.num_candidates = 8;
  config.prefix_tokens = 16;
  config.max_new_tokens = 48;
  config.optimizer.learning_rate = 0.0;

  const StrategyOutcome trained = run_strategy(kQuestion, backend, config, 13);
  const StrategyOutcome base =
      run_strategy(kQuestion, backend, base_config(48), 13);
  CHECK(trained.final_text == base.final_text);
  CHECK(trained.final_answer == base.final_answer);
}

TEST_CASE("prefix training isolates questions") {
  // Training on question A must not bleed into question B: the backend's
  // model is copied per test point.
  const ToyBackend backend(BigramLM::random(14, 77));
  StrategyConfig config;
  config.kind = StrategyKind::PrefixTrain;
  config.num_candidates = 6;
  config.prefix_tokens = 8;
  config.max_new_tokens = 24;
  config.optimizer.learning_rate = 0.5;  // large enough to move the model

  const Question a{"qa", "First question."};
  const Question b{"qb", "Second question."};

  const StrategyOutcome b_alone = run_strategy(b, backend, config, 21);
  (void)run_strategy(a, backend, config, 21);
  const StrategyOutcome b_after_a = run_strategy(b, backend, config, 21);
  CHECK(b_alone.final_text == b_after_a.final_text);
}

TEST_CASE("prefix training with tuning ratio zero extends nothing") {
  const ToyBackend backend(BigramLM::random(10, 41));
  StrategyConfig config;
  config.kind = StrategyKind::PrefixTrain;
  config.num_candidates = 5;
  config.prefix_tokens = 6;
  config.max_new_tokens = 18;
  config.tuning_ratio = 0.0;

  const StrategyOutcome outcome = run_strategy(kQuestion, backend, config, 2);
  // 5 prefixes + 1 final attempt, no extensions.
  CHECK(outcome.attempts.size() == 6);
  CHECK(outcome.meter.generated_tokens == 5 * 6 + 18);
}

TEST_CASE("prefix training needs a trainable backend") {
  const BimodalBackend bimodal;
  StrategyConfig config;
  config.kind = StrategyKind::PrefixTrain;
  config.max_new_tokens = 64;
  CHECK_THROWS_AS(run_strategy(kQuestion, bimodal, config, 0),
                  CapabilityError);
}

TEST_CASE("distribution measures are rejected on chosen-logprob backends") {
  HttpOptions options;
  options.base_url = "http://localhost:1";
  options.approx_tail = false;
  const HttpBackend http(options);

  StrategyConfig config = base_config();
  config.kind = StrategyKind::BestOfN;
  config.measure = ConfidenceMeasure::SelfCertainty;
  CHECK_THROWS_AS(config.validate(http), CapabilityError);

  // With the tail approximation the same config validates.
  options.approx_tail = true;
  const HttpBackend tail(options);
  CHECK_NOTHROW(config.validate(tail));
}

TEST_CASE("strategy validation rejects bad parameters") {
  const ToyBackend backend(BigramLM::random(8, 1));
  StrategyConfig config;
  config.num_candidates = 0;
  CHECK_THROWS_AS(config.validate(backend), ValidationError);

  config = StrategyConfig{};
  config.kind = StrategyKind::PrefixVote;
  config.prefix_tokens = 64;
  config.max_new_tokens = 64;  // must exceed K
  CHECK_THROWS_AS(config.validate(backend), ValidationError);

  config = StrategyConfig{};
  config.tuning_ratio = 1.5;
  CHECK_THROWS_AS(config.validate(backend), ValidationError);
}

TEST_CASE("compute accounting is structurally exact across strategies") {
  const ToyBackend toy(BigramLM::random(16, 61));
  const BimodalBackend bimodal;

  std::vector<StrategyConfig> configs;
  configs.push_back(base_config());
  {
    StrategyConfig c = base_config();
    c.kind = StrategyKind::Majority;
    c.num_candidates = 4;
    configs.push_back(c);
  }
  {
    StrategyConfig c = base_config();
    c.kind = StrategyKind::BestOfN;
    c.num_candidates = 4;
    configs.push_back(c);
  }
  configs.push_back(pc_vote_config(4));
  {
    StrategyConfig c;
    c.kind = StrategyKind::PrefixTrain;
    c.num_candidates = 4;
    c.prefix_tokens = 8;
    c.max_new_tokens = 32;
    configs.push_back(c);
  }

  // run_strategy already cross-checks the meter against retained attempts
  // and throws on mismatch; over 100 runs across strategies and backends.
  int runs = 0;
  for (uint64_t run_seed = 0; run_seed < 12; ++run_seed) {
    for (const StrategyConfig& config : configs) {
      const StrategyOutcome toy_outcome =
          run_strategy(kQuestion, toy, config, run_seed);
      int64_t total = 0;
      for (const ScoredSequence& seq : toy_outcome.attempts) {
        total += seq.length();
      }
      CHECK(total == toy_outcome.meter.generated_tokens);
      ++runs;
      if (config.kind != StrategyKind::PrefixTrain) {
        const StrategyOutcome bi_outcome =
            run_strategy(kQuestion, bimodal, config, run_seed);
        int64_t bi_total = 0;
        for (const ScoredSequence& seq : bi_outcome.attempts) {
          bi_total += seq.length();
        }
        CHECK(bi_total == bi_outcome.meter.generated_tokens);
        ++runs;
      }
    }
  }
  CHECK(runs >= 100);
}
