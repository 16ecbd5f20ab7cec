// prefix-scale: inference-scaling experiments over a shared backend
// interface.
//
//   run     evaluate one strategy on a dataset and write a report
//   sweep   evaluate a hyperparameter grid and write a combined CSV
//   check   numerical self-checks (gradients, score oracles, determinism)
//   parse   answer extraction and normalization, one-off or corpus mode
//
// Exit codes: 0 success, 1 validation, 2 backend/transport, 3 check failure.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>

#include "prefix_scale/bimodal_backend.hpp"
#include "prefix_scale/harness.hpp"
#include "prefix_scale/http_backend.hpp"
#include "prefix_scale/toy_backend.hpp"

using namespace pscale;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitTransport = 2;
constexpr int kExitCheckFailure = 3;

// ----------------------------------------------------------------------------
// Shared run/sweep flags
// ----------------------------------------------------------------------------

struct RunFlags {
  std::string backend = "toy";
  std::string strategy = "base";
  int n = 8;
  int k = 32;
  std::string measure = "self-confidence";
  std::string loss = "nll";
  std::string optimizer = "sgd";
  double lr = -1.0;  // negative = optimizer default
  int epochs = 1;
  double tuning_ratio = 0.0;
  std::string dataset;
  int limit = 0;  // 0 = all
  int seeds = 10;
  uint64_t seed_base = 0;
  int max_new_tokens = 0;  // 0 = backend-appropriate default
  double temperature = 1.0;
  std::vector<std::string> stop;
  std::string out;
  std::string format = "json";
  bool approx_tail = false;
  int workers = 1;
  bool per_question = false;
  std::string prompt_template = "{question}";

  // toy backend
  int vocab_size = 32;
  uint64_t toy_init_seed = 1;
  std::string toy_model_path;

  // bimodal backend
  int questions = 200;
  double mode_rate = 0.3;
  double p_good = 0.9;
  double p_bad = 0.5;
  int attempt_tokens = 64;

  // http backend
  std::string api_base;
  std::string api_key;
  std::string model;
  int top_k = 5;
  std::string record_path;
  std::string replay_path;
};

void add_backend_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--backend", f.backend, "Backend: toy|bimodal|http")
      ->check(CLI::IsMember({"toy", "bimodal", "http"}))
      ->capture_default_str();
  cmd->add_option("--vocab-size", f.vocab_size,
                  "Toy vocabulary size (also V for --approx-tail)")
      ->capture_default_str();
  cmd->add_option("--toy-init-seed", f.toy_init_seed,
                  "Seed for the random toy model init")
      ->capture_default_str();
  cmd->add_option("--toy-model", f.toy_model_path,
                  "Load toy model weights from a JSON file");
  cmd->add_option("--questions", f.questions,
                  "Synthetic question count for the bimodal backend")
      ->capture_default_str();
  cmd->add_option("--mode-rate", f.mode_rate,
                  "Bimodal: probability of a good attempt")
      ->capture_default_str();
  cmd->add_option("--p-good", f.p_good, "Bimodal: good per-token probability")
      ->capture_default_str();
  cmd->add_option("--p-bad", f.p_bad, "Bimodal: bad per-token probability")
      ->capture_default_str();
  cmd->add_option("--attempt-tokens", f.attempt_tokens,
                  "Bimodal: intrinsic attempt length")
      ->capture_default_str();
  cmd->add_option("--api-base", f.api_base,
                  "HTTP: base URL of an OpenAI-compatible server")
      ->envname("PREFIX_SCALE_API_BASE");
  cmd->add_option("--api-key", f.api_key, "HTTP: bearer token")
      ->envname("PREFIX_SCALE_API_KEY");
  cmd->add_option("--model", f.model, "HTTP: model name for the payload");
  cmd->add_option("--top-k", f.top_k,
                  "HTTP: top-k logprobs to request for distributions")
      ->capture_default_str();
  cmd->add_flag("--approx-tail", f.approx_tail,
                "HTTP: approximate full distributions from top-k logprobs");
  cmd->add_option("--record", f.record_path,
                  "HTTP: append request/response transcript (JSONL)");
  cmd->add_option("--replay", f.replay_path,
                  "Serve recorded transcript instead of a live server");
}

void add_run_flags(CLI::App* cmd, RunFlags& f, bool grid_mode) {
  add_backend_flags(cmd, f);
  cmd->add_option("--strategy", f.strategy,
                  "Strategy: base|majority|bon|pc-vote|pc-train")
      ->check(CLI::IsMember({"base", "majority", "bon", "pc-vote", "pc-train"}))
      ->capture_default_str();
  if (!grid_mode) {
    cmd->add_option("--n", f.n, "Candidate count N")->capture_default_str();
    cmd->add_option("--k", f.k, "Prefix length K in tokens")
        ->capture_default_str();
    cmd->add_option("--measure", f.measure,
                    "self-confidence|self-certainty|negative-entropy")
        ->capture_default_str();
    cmd->add_option("--loss", f.loss, "pc-train loss: nll|entropy")
        ->capture_default_str();
    cmd->add_option("--optimizer", f.optimizer,
                    "pc-train optimizer: sgd|adamw|adam-warmup")
        ->capture_default_str();
    cmd->add_option("--lr", f.lr,
                    "Learning rate (default: per-optimizer preset)");
    cmd->add_option("--epochs", f.epochs, "pc-train epochs E")
        ->capture_default_str();
    cmd->add_option("--tuning-ratio", f.tuning_ratio,
                    "pc-train fraction of prefixes extended to full attempts")
        ->capture_default_str();
  }
  cmd->add_option("--dataset", f.dataset, "Dataset JSONL path");
  cmd->add_option("--limit", f.limit, "Use only the first L dataset items");
  cmd->add_option("--seeds", f.seeds, "Number of evaluation seeds")
      ->capture_default_str();
  cmd->add_option("--seed-base", f.seed_base, "First seed value")
      ->capture_default_str();
  cmd->add_option("--max-new-tokens", f.max_new_tokens,
                  "Full-attempt budget (default 1024; bimodal defaults to "
                  "--attempt-tokens)");
  cmd->add_option("--temperature", f.temperature, "Sampling temperature")
      ->capture_default_str();
  cmd->add_option("--stop", f.stop, "Stop string (repeatable)");
  cmd->add_option("--out", f.out, "Report output path");
  cmd->add_option("--format", f.format, "Report format: json|csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  cmd->add_option("--workers", f.workers, "Concurrent question workers")
      ->capture_default_str();
  cmd->add_flag("--per-question", f.per_question,
                "Keep per-question records in the JSON report");
  cmd->add_option("--prompt-template", f.prompt_template,
                  "Prompt wrapper with a {question} placeholder")
      ->capture_default_str();
}

// ----------------------------------------------------------------------------
// Flag resolution
// ----------------------------------------------------------------------------

std::unique_ptr<Backend> make_backend(const RunFlags& f) {
  if (!f.replay_path.empty()) {
    HttpOptions options;
    options.base_url = "http://replay";
    options.approx_tail = f.approx_tail;
    options.vocab_size = f.vocab_size;
    options.top_k_logprobs = f.top_k;
    return std::make_unique<ReplayBackend>(f.replay_path, options);
  }
  if (f.backend == "toy") {
    BigramLM model = f.toy_model_path.empty()
                         ? BigramLM::random(f.vocab_size, f.toy_init_seed)
                         : load_model(f.toy_model_path);
    return std::make_unique<ToyBackend>(std::move(model));
  }
  if (f.backend == "bimodal") {
    BimodalParams params;
    params.mode_rate = f.mode_rate;
    params.good_token_prob = f.p_good;
    params.bad_token_prob = f.p_bad;
    params.attempt_tokens = f.attempt_tokens;
    return std::make_unique<BimodalBackend>(params);
  }
  HttpOptions options;
  options.base_url = f.api_base;
  options.api_key = f.api_key;
  options.model = f.model;
  options.top_k_logprobs = f.top_k;
  options.approx_tail = f.approx_tail;
  options.vocab_size = f.vocab_size;
  options.connection_pool = std::max(1, f.workers);
  options.record_path = f.record_path;
  return std::make_unique<HttpBackend>(options);
}

std::string apply_template(const std::string& tmpl, const std::string& q) {
  const std::string placeholder = "{question}";
  const size_t pos = tmpl.find(placeholder);
  if (pos == std::string::npos) return tmpl + q;
  std::string out = tmpl;
  out.replace(pos, placeholder.size(), q);
  return out;
}

Dataset resolve_dataset(const RunFlags& f) {
  Dataset dataset;
  if (!f.dataset.empty()) {
    dataset = load_dataset(
        f.dataset, f.limit > 0 ? std::optional<int>(f.limit) : std::nullopt);
  } else if (f.backend == "bimodal") {
    dataset = make_bimodal_dataset(f.limit > 0 ? std::min(f.limit, f.questions)
                                               : f.questions);
  } else {
    throw ValidationError(
        "--dataset is required for the " + f.backend +
        " backend (only bimodal synthesizes its own questions)");
  }
  if (f.prompt_template != "{question}") {
    if (f.backend == "bimodal" && f.dataset.empty()) {
      throw ValidationError(
          "--prompt-template would break the bimodal gold-answer linkage");
    }
    for (DatasetItem& item : dataset.items) {
      item.question = apply_template(f.prompt_template, item.question);
    }
  }
  return dataset;
}

StrategyConfig resolve_strategy(const RunFlags& f) {
  StrategyConfig config;
  config.kind = strategy_from_string(f.strategy);
  config.num_candidates = f.n;
  config.prefix_tokens = f.k;
  config.measure = measure_from_string(f.measure);
  config.loss = loss_from_string(f.loss);
  config.optimizer =
      OptimizerConfig::defaults_for(optimizer_from_string(f.optimizer));
  if (f.lr >= 0.0) config.optimizer.learning_rate = f.lr;
  config.epochs = f.epochs;
  config.tuning_ratio = f.tuning_ratio;
  config.max_new_tokens = f.max_new_tokens > 0 ? f.max_new_tokens
                          : f.backend == "bimodal" ? f.attempt_tokens
                                                   : 1024;
  config.temperature = f.temperature;
  config.stop = f.stop;
  return config;
}

std::vector<uint64_t> resolve_seeds(const RunFlags& f) {
  if (f.seeds < 1) throw ValidationError("--seeds must be >= 1");
  std::vector<uint64_t> seeds;
  for (int i = 0; i < f.seeds; ++i) seeds.push_back(f.seed_base + i);
  return seeds;
}

EvalOptions resolve_options(const RunFlags& f) {
  EvalOptions options;
  options.workers = std::max(1, f.workers);
  options.keep_per_question = f.per_question;
  options.extra_config["backend_kind"] = f.backend;
  if (f.backend == "toy") {
    options.extra_config["vocab_size"] = f.vocab_size;
    options.extra_config["toy_init_seed"] = f.toy_init_seed;
    if (!f.toy_model_path.empty()) {
      options.extra_config["toy_model"] = f.toy_model_path;
    }
  } else if (f.backend == "bimodal") {
    options.extra_config["mode_rate"] = f.mode_rate;
    options.extra_config["p_good"] = f.p_good;
    options.extra_config["p_bad"] = f.p_bad;
    options.extra_config["attempt_tokens"] = f.attempt_tokens;
  } else {
    options.extra_config["api_base"] = f.api_base;
    options.extra_config["model"] = f.model;
    options.extra_config["top_k"] = f.top_k;
    options.extra_config["approx_tail"] = f.approx_tail;
  }
  if (f.prompt_template != "{question}") {
    options.extra_config["prompt_template"] = f.prompt_template;
  }
  if (!f.dataset.empty()) options.extra_config["dataset_path"] = f.dataset;
  return options;
}

std::string summary_line(const EvalReport& report) {
  char buf[256];
  if (report.accuracy_stderr) {
    snprintf(buf, sizeof buf,
             "accuracy %.4f +- %.4f | tokens/question %.1f | grad "
             "steps/question %.1f | questions %d | wall %.2fs",
             report.accuracy_mean, *report.accuracy_stderr, report.tokens_mean,
             report.gradient_steps_mean, report.questions_evaluated,
             report.wall_seconds);
  } else {
    snprintf(buf, sizeof buf,
             "accuracy %.4f | tokens/question %.1f | grad steps/question "
             "%.1f | questions %d | wall %.2fs",
             report.accuracy_mean, report.tokens_mean,
             report.gradient_steps_mean, report.questions_evaluated,
             report.wall_seconds);
  }
  return buf;
}

// ----------------------------------------------------------------------------
// run
// ----------------------------------------------------------------------------

int cmd_run(const RunFlags& f) {
  const std::unique_ptr<Backend> backend = make_backend(f);
  const Dataset dataset = resolve_dataset(f);
  const StrategyConfig config = resolve_strategy(f);
  config.validate(*backend);  // reject bad combinations before any work
  const std::vector<uint64_t> seeds = resolve_seeds(f);

  const EvalReport report =
      evaluate(config, dataset, *backend, seeds, resolve_options(f));

  const std::string out =
      f.out.empty() ? ("report." + f.format) : f.out;
  if (f.format == "json") {
    emit_report_json(report, out);
  } else {
    emit_report_csv({&report}, out);
  }
  for (const QuestionError& e : report.excluded) {
    std::cerr << "excluded " << e.id << ": " << e.message << "\n";
  }
  std::cout << to_string(config.kind) << " on " << dataset.name << " ["
            << backend->id() << "]: " << summary_line(report) << "\n"
            << "report written to " << out << "\n";
  return 0;
}

// ----------------------------------------------------------------------------
// sweep
// ----------------------------------------------------------------------------

struct GridFlags {
  std::string n, k, epochs, measures, losses, optimizers, lrs, ratios, ne;
};

template <typename T, typename Parse>
std::vector<T> split_list(const std::string& csv, Parse parse,
                          const char* flag) {
  std::vector<T> out;
  if (csv.empty()) return out;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) {
      throw ValidationError(std::string("empty value in ") + flag);
    }
    out.push_back(parse(item));
  }
  if (out.empty()) {
    throw ValidationError(std::string(flag) + ": empty value set");
  }
  return out;
}

SweepGrid resolve_grid(const GridFlags& g) {
  SweepGrid grid;
  const auto to_int = [](const std::string& s) { return std::stoi(s); };
  const auto to_double = [](const std::string& s) { return std::stod(s); };
  grid.n_values = split_list<int>(g.n, to_int, "--n");
  grid.k_values = split_list<int>(g.k, to_int, "--k");
  grid.e_values = split_list<int>(g.epochs, to_int, "--epochs");
  grid.measures = split_list<ConfidenceMeasure>(
      g.measures, [](const std::string& s) { return measure_from_string(s); },
      "--measure");
  grid.losses = split_list<LossKind>(
      g.losses, [](const std::string& s) { return loss_from_string(s); },
      "--loss");
  grid.optimizers = split_list<OptimizerKind>(
      g.optimizers,
      [](const std::string& s) { return optimizer_from_string(s); },
      "--optimizer");
  grid.learning_rates = split_list<double>(g.lrs, to_double, "--lr");
  grid.tuning_ratios = split_list<double>(g.ratios, to_double,
                                          "--tuning-ratio");
  grid.ne_pairs = split_list<std::pair<int, int>>(
      g.ne,
      [](const std::string& s) {
        const size_t colon = s.find(':');
        if (colon == std::string::npos) {
          throw ValidationError("--ne-pairs entries look like N:E");
        }
        return std::make_pair(std::stoi(s.substr(0, colon)),
                              std::stoi(s.substr(colon + 1)));
      },
      "--ne-pairs");
  return grid;
}

int cmd_sweep(const RunFlags& f, const GridFlags& g) {
  const std::unique_ptr<Backend> backend = make_backend(f);
  const Dataset dataset = resolve_dataset(f);
  const StrategyConfig base = resolve_strategy(f);
  const SweepGrid grid = resolve_grid(g);
  const std::vector<uint64_t> seeds = resolve_seeds(f);

  const std::vector<SweepCell> cells =
      sweep(base, grid, dataset, *backend, seeds, resolve_options(f));

  int failed = 0;
  for (const SweepCell& cell : cells) {
    std::ostringstream label;
    label << to_string(cell.config.kind) << " N=" << cell.config.num_candidates
          << " K=" << cell.config.prefix_tokens << " E=" << cell.config.epochs
          << " measure=" << to_string(cell.config.measure);
    if (cell.report) {
      std::cout << label.str() << ": " << summary_line(*cell.report) << "\n";
    } else {
      std::cerr << label.str() << ": FAILED: " << cell.error << "\n";
      ++failed;
    }
  }

  const std::string out = f.out.empty() ? "sweep.csv" : f.out;
  std::ofstream file(out);
  file << sweep_to_csv(cells);
  std::cout << cells.size() - failed << "/" << cells.size()
            << " cells succeeded; table written to " << out << "\n";
  return failed == int(cells.size()) ? kExitValidation : 0;
}

// ----------------------------------------------------------------------------
// check
// ----------------------------------------------------------------------------

bool report_check(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n";
  return ok;
}

bool check_gradients() {
  std::mt19937_64 rng(20240601);
  bool ok = true;
  int nll_checked = 0;
  int entropy_total = 0;
  int entropy_pass = 0;
  double worst_nll = 0.0;

  for (int trial = 0; trial < 60; ++trial) {
    const int vocab = 2 + int(rng() % 11);
    const BigramLM model = BigramLM::random(vocab, rng());
    const std::string prompt = "check " + std::to_string(trial);
    std::vector<std::vector<int>> sequences;
    const int count = 1 + int(rng() % 4);
    for (int c = 0; c < count; ++c) {
      std::vector<int> seq;
      const int len = 1 + int(rng() % 8);
      for (int i = 0; i < len; ++i) seq.push_back(int(rng() % vocab));
      sequences.push_back(std::move(seq));
    }

    for (LossKind kind : {LossKind::Nll, LossKind::Entropy}) {
      const LossResult analytic = loss_and_grad(kind, model, prompt, sequences);
      BigramLM probe = model;
      const double h = 1e-5;
      for (int r = 0; r < vocab; ++r) {
        for (int c = 0; c < vocab; ++c) {
          const double saved = probe.logits(r, c);
          probe.logits(r, c) = saved + h;
          const double up = loss_and_grad(kind, probe, prompt, sequences).loss;
          probe.logits(r, c) = saved - h;
          const double down =
              loss_and_grad(kind, probe, prompt, sequences).loss;
          probe.logits(r, c) = saved;
          const double fd = (up - down) / (2.0 * h);
          const double g = analytic.grad(r, c);
          const double err =
              std::abs(g - fd) / std::max(1.0, std::abs(g) + std::abs(fd));
          if (kind == LossKind::Nll) {
            worst_nll = std::max(worst_nll, err);
            if (err > 1e-6) ok = false;
            ++nll_checked;
          } else {
            ++entropy_total;
            if (err <= 1e-4) ++entropy_pass;
          }
        }
      }
    }
  }
  const bool entropy_ok =
      double(entropy_pass) >= 0.95 * double(entropy_total);
  char detail[128];
  snprintf(detail, sizeof detail, "%d coords, worst %.2e", nll_checked,
           worst_nll);
  bool all = report_check("nll gradient vs central differences (1e-6)", ok,
                          detail);
  snprintf(detail, sizeof detail, "%d/%d coords within 1e-4", entropy_pass,
           entropy_total);
  all &= report_check("entropy gradient vs central differences (95% @ 1e-4)",
                      entropy_ok, detail);
  return all;
}

bool check_oracle() {
  std::mt19937_64 rng(777);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int vocab = 2 + int(rng() % 49);
    const BigramLM model = BigramLM::random(vocab, rng(), 1.5);
    GenerationRequest req;
    req.prompt = "oracle " + std::to_string(trial);
    req.max_new_tokens = 1 + int(rng() % 64);
    req.seed = rng();
    req.want_distribution = true;
    ComputeMeter meter;
    const ScoredSequence seq = toy_generate(model, req, meter);

    // Independent sequential re-summation.
    double sc = 0.0;
    for (const TokenStep& s : seq.steps) sc += s.chosen_logprob;
    double cert = 0.0;
    double nent = 0.0;
    for (const TokenStep& s : seq.steps) {
      const Eigen::VectorXd& d = *s.distribution;
      double logs = 0.0;
      double plogp = 0.0;
      for (int j = 0; j < d.size(); ++j) {
        logs += d[j];
        plogp += std::exp(d[j]) * d[j];
      }
      cert += -std::log(double(d.size())) - logs / double(d.size());
      nent += plogp;
    }
    cert /= double(seq.length());
    nent /= double(seq.length());

    worst = std::max(worst, std::abs(self_confidence(seq) - sc));
    worst = std::max(worst, std::abs(self_certainty(seq) - cert));
    worst = std::max(worst, std::abs(negative_entropy(seq) - nent));
  }
  char detail[64];
  snprintf(detail, sizeof detail, "1000 sequences, worst |diff| %.2e", worst);
  return report_check("confidence measures vs brute-force oracle (1e-12)",
                      worst <= 1e-12, detail);
}

bool check_determinism() {
  const auto run_once = [](const Backend& backend, StrategyKind kind) {
    StrategyConfig config;
    config.kind = kind;
    config.num_candidates = 4;
    config.prefix_tokens = 8;
    config.max_new_tokens = 32;
    const Dataset dataset = make_bimodal_dataset(40);
    const EvalReport report = evaluate(config, dataset, backend, {0, 1, 2});
    return report_to_json(report).dump();
  };

  bool all = true;
  {
    const BimodalBackend backend;
    const std::string a = run_once(backend, StrategyKind::PrefixVote);
    const std::string b = run_once(backend, StrategyKind::PrefixVote);
    char detail[64];
    snprintf(detail, sizeof detail, "hash %016llx vs %016llx",
             (unsigned long long)fnv1a64(a), (unsigned long long)fnv1a64(b));
    all &= report_check("bimodal double-run byte comparison", a == b, detail);
  }
  {
    const ToyBackend backend(BigramLM::random(16, 1));
    const std::string a = run_once(backend, StrategyKind::Majority);
    const std::string b = run_once(backend, StrategyKind::Majority);
    char detail[64];
    snprintf(detail, sizeof detail, "hash %016llx vs %016llx",
             (unsigned long long)fnv1a64(a), (unsigned long long)fnv1a64(b));
    all &= report_check("toy double-run byte comparison", a == b, detail);
  }
  return all;
}

int cmd_check(const std::string& kind) {
  bool ok = true;
  if (kind == "grad" || kind == "all") ok &= check_gradients();
  if (kind == "oracle" || kind == "all") ok &= check_oracle();
  if (kind == "determinism" || kind == "all") ok &= check_determinism();
  return ok ? 0 : kExitCheckFailure;
}

// ----------------------------------------------------------------------------
// parse
// ----------------------------------------------------------------------------

int parse_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("parse: cannot open corpus " + path);
  int cases = 0;
  int failures = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("corpus line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    ++cases;
    const std::string input = j.at("input").get<std::string>();
    const ExtractResult extracted = extract_answer(input);

    bool case_ok = true;
    if (j.at("expected_raw").is_null()) {
      case_ok = !extracted.raw.has_value();
    } else if (!extracted.raw ||
               *extracted.raw != j.at("expected_raw").get<std::string>()) {
      case_ok = false;
    } else if (!j.at("expected_canonical").is_null()) {
      try {
        case_ok = normalize(*extracted.raw).to_string() ==
                  j.at("expected_canonical").get<std::string>();
      } catch (const ParseError&) {
        case_ok = false;
      }
    } else {
      try {
        normalize(*extracted.raw);
        case_ok = false;  // expected a normalization failure
      } catch (const ParseError&) {
      }
    }
    if (!case_ok) {
      ++failures;
      std::cerr << "[FAIL] line " << line_no << ": " << input << "\n";
    }
  }
  std::cout << (cases - failures) << "/" << cases << " corpus cases pass\n";
  return failures == 0 ? 0 : kExitCheckFailure;
}

int cmd_parse(const std::string& text, const std::string& corpus) {
  if (!corpus.empty()) return parse_corpus(corpus);
  const ExtractResult extracted = extract_answer(text);
  if (!extracted.raw) {
    std::cerr << "no answer found\n";
    return kExitValidation;
  }
  std::cout << "raw: " << *extracted.raw << "\n";
  if (extracted.parse_warning) {
    std::cerr << "warning: unbalanced boxed braces, numeric fallback used\n";
  }
  try {
    std::cout << "canonical: " << normalize(*extracted.raw).to_string()
              << "\n";
  } catch (const ParseError& e) {
    std::cerr << "normalization failed: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prefix-confidence test-time scaling toolkit"};
  app.require_subcommand(1);
  // Key=value config file with [run] / [sweep] sections; flags given on the
  // command line override file values.
  app.set_config("--config", "",
                 "Read defaults from a config file (sections per subcommand)");

  RunFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "Evaluate one strategy");
  add_run_flags(run, run_flags, /*grid_mode=*/false);

  RunFlags sweep_flags;
  GridFlags grid_flags;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "Evaluate a hyperparameter grid");
  add_run_flags(sweep_cmd, sweep_flags, /*grid_mode=*/true);
  sweep_cmd->add_option("--n", grid_flags.n, "N values, comma-separated");
  sweep_cmd->add_option("--k", grid_flags.k, "K values, comma-separated");
  sweep_cmd->add_option("--epochs", grid_flags.epochs,
                        "E values, comma-separated");
  sweep_cmd->add_option("--measure", grid_flags.measures,
                        "Measures, comma-separated");
  sweep_cmd->add_option("--loss", grid_flags.losses, "Losses, comma-separated");
  sweep_cmd->add_option("--optimizer", grid_flags.optimizers,
                        "Optimizers, comma-separated");
  sweep_cmd->add_option("--lr", grid_flags.lrs,
                        "Learning rates, comma-separated");
  sweep_cmd->add_option("--tuning-ratio", grid_flags.ratios,
                        "Tuning ratios, comma-separated");
  sweep_cmd->add_option("--ne-pairs", grid_flags.ne,
                        "N:E pairs, comma-separated (replaces --n/--epochs)");

  std::string check_kind = "all";
  CLI::App* check = app.add_subcommand("check", "Numerical self-checks");
  check->add_option("kind", check_kind, "grad|oracle|determinism|all")
      ->check(CLI::IsMember({"grad", "oracle", "determinism", "all"}));

  std::string parse_text;
  std::string parse_file;
  CLI::App* parse = app.add_subcommand("parse", "Extract and normalize answers");
  parse->add_option("text", parse_text, "Text to extract an answer from");
  parse->add_option("--file", parse_file,
                    "Run a parser regression corpus (JSONL)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_flags, grid_flags);
    if (check->parsed()) return cmd_check(check_kind);
    if (parse->parsed()) return cmd_parse(parse_text, parse_file);
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const CapabilityError& e) {
    std::cerr << "capability error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
