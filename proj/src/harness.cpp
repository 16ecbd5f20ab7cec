#include "prefix_scale/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include "prefix_scale/bimodal_backend.hpp"

namespace pscale {

// ============================================================================
// Datasets
// ============================================================================

namespace {

std::string json_string_or_number(const nlohmann::json& v, const char* key,
                                  int line_no) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<int64_t>());
  if (v.is_number()) return nlohmann::json(v).dump();
  throw ParseError("dataset line " + std::to_string(line_no) + ": field '" +
                   key + "' must be a string or number");
}

}  // namespace

Dataset load_dataset(const std::string& path, std::optional<int> limit) {
  std::ifstream in(path);
  if (!in) throw ValidationError("dataset: cannot open " + path);

  Dataset dataset;
  const size_t slash = path.find_last_of('/');
  dataset.name = slash == std::string::npos ? path : path.substr(slash + 1);

  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (limit && static_cast<int>(dataset.items.size()) >= *limit) break;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset line " + std::to_string(line_no) +
                       ": invalid JSON: " + e.what());
    }
    if (!j.contains("id") || !j.contains("question") || !j.contains("answer")) {
      throw ParseError("dataset line " + std::to_string(line_no) +
                       ": need keys id, question, answer");
    }
    DatasetItem item;
    item.id = json_string_or_number(j["id"], "id", line_no);
    item.question = json_string_or_number(j["question"], "question", line_no);
    item.answer = json_string_or_number(j["answer"], "answer", line_no);

    if (!seen_ids.insert(item.id).second) {
      throw ValidationError("dataset: duplicate id '" + item.id + "' at line " +
                            std::to_string(line_no));
    }
    try {
      normalize(item.answer);
    } catch (const ParseError& e) {
      throw ValidationError("dataset: gold answer of id '" + item.id +
                            "' does not normalize: " + e.what());
    }
    dataset.items.push_back(std::move(item));
  }
  return dataset;
}

Dataset make_bimodal_dataset(int num_questions) {
  if (num_questions < 1) {
    throw ValidationError("bimodal dataset: need at least one question");
  }
  Dataset dataset;
  dataset.name = "bimodal-synthetic-" + std::to_string(num_questions);
  for (int i = 0; i < num_questions; ++i) {
    DatasetItem item;
    item.id = "bm-" + std::to_string(i);
    item.question =
        "Synthetic task " + item.id + ": report the boxed value.";
    item.answer = bimodal_gold_answer(item.question);
    dataset.items.push_back(std::move(item));
  }
  return dataset;
}

// ============================================================================
// Evaluation
// ============================================================================

std::optional<double> standard_error(const std::vector<double>& values) {
  const size_t s = values.size();
  if (s < 2) return std::nullopt;
  // Accumulate in sorted order so the result is bitwise independent of how
  // the values were ordered (seed-list permutations included).
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= double(s);
  double variance = 0.0;
  for (double v : sorted) variance += (v - mean) * (v - mean);
  variance /= double(s - 1);
  return std::sqrt(variance) / std::sqrt(double(s));
}

namespace {

bool graded_correct(const std::optional<std::string>& answer,
                    const std::string& gold) {
  if (!answer) return false;
  try {
    return equivalent(*answer, gold);
  } catch (const ParseError&) {
    return false;
  }
}

nlohmann::ordered_json strategy_config_json(const StrategyConfig& c) {
  nlohmann::ordered_json j;
  j["strategy"] = to_string(c.kind);
  j["n"] = c.num_candidates;
  j["k"] = c.prefix_tokens;
  j["measure"] = to_string(c.measure);
  j["loss"] = to_string(c.loss);
  j["optimizer"] = to_string(c.optimizer.kind);
  j["learning_rate"] = c.optimizer.learning_rate;
  j["adam_beta1"] = c.optimizer.adam_beta1;
  j["adam_beta2"] = c.optimizer.adam_beta2;
  j["adam_eps"] = c.optimizer.adam_eps;
  j["weight_decay"] = c.optimizer.weight_decay;
  j["epochs"] = c.epochs;
  j["tuning_ratio"] = c.tuning_ratio;
  j["max_new_tokens"] = c.max_new_tokens;
  j["temperature"] = c.temperature;
  j["stop"] = c.stop;
  return j;
}

struct RunSlot {
  bool ok = false;
  std::string error;
  bool correct = false;
  std::optional<std::string> answer;
  int64_t generated_tokens = 0;
  int64_t gradient_steps = 0;
};

}  // namespace

EvalReport evaluate(const StrategyConfig& config, const Dataset& dataset,
                    const Backend& backend, const std::vector<uint64_t>& seeds,
                    const EvalOptions& options) {
  if (seeds.empty()) throw ValidationError("evaluate: need at least one seed");
  if (dataset.items.empty()) {
    throw ValidationError("evaluate: dataset is empty");
  }
  config.validate(backend);
  const auto t0 = std::chrono::steady_clock::now();

  const size_t num_seeds = seeds.size();
  const size_t num_items = dataset.items.size();
  std::vector<RunSlot> slots(num_seeds * num_items);

  // One task per (seed, question); workers pull the next index. Results land
  // in a pre-sized vector, so aggregation order never depends on timing.
  std::atomic<size_t> next_task{0};
  const int worker_count =
      std::max(1, std::min<int>(options.workers, int(slots.size())));
  auto worker = [&]() {
    while (true) {
      const size_t task = next_task.fetch_add(1);
      if (task >= slots.size()) return;
      const size_t seed_idx = task / num_items;
      const size_t item_idx = task % num_items;
      const DatasetItem& item = dataset.items[item_idx];
      RunSlot& slot = slots[task];
      try {
        const StrategyOutcome outcome = run_strategy(
            {item.id, item.question}, backend, config, seeds[seed_idx]);
        slot.ok = true;
        slot.correct = graded_correct(outcome.final_answer, item.answer);
        slot.answer = outcome.final_answer;
        slot.generated_tokens = outcome.meter.generated_tokens;
        slot.gradient_steps = outcome.meter.gradient_steps;
      } catch (const std::exception& e) {
        slot.ok = false;
        slot.error = e.what();
      }
    }
  };
  if (worker_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(worker_count);
    for (int w = 0; w < worker_count; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  // A question that errored under any seed leaves every seed's denominator.
  std::vector<bool> excluded_item(num_items, false);
  EvalReport report;
  for (size_t item_idx = 0; item_idx < num_items; ++item_idx) {
    for (size_t seed_idx = 0; seed_idx < num_seeds; ++seed_idx) {
      const RunSlot& slot = slots[seed_idx * num_items + item_idx];
      if (!slot.ok) {
        excluded_item[item_idx] = true;
        report.excluded.push_back({dataset.items[item_idx].id, slot.error});
        break;
      }
    }
  }

  int included = 0;
  for (size_t i = 0; i < num_items; ++i) {
    if (!excluded_item[i]) ++included;
  }
  if (included == 0) {
    throw Error("evaluate: every question errored; nothing to aggregate "
                "(first error: " +
                (report.excluded.empty() ? std::string("?")
                                         : report.excluded.front().message) +
                ")");
  }

  double tokens_total = 0.0;
  double grad_total = 0.0;
  int64_t runs = 0;
  for (size_t seed_idx = 0; seed_idx < num_seeds; ++seed_idx) {
    int correct = 0;
    for (size_t item_idx = 0; item_idx < num_items; ++item_idx) {
      if (excluded_item[item_idx]) continue;
      const RunSlot& slot = slots[seed_idx * num_items + item_idx];
      correct += slot.correct ? 1 : 0;
      tokens_total += double(slot.generated_tokens);
      grad_total += double(slot.gradient_steps);
      ++runs;
      if (options.keep_per_question) {
        report.per_question.push_back({seeds[seed_idx],
                                       dataset.items[item_idx].id, slot.correct,
                                       slot.answer, slot.generated_tokens});
      }
    }
    report.per_seed_accuracies.push_back(double(correct) / double(included));
  }

  report.strategy_label = to_string(config.kind);
  report.backend_id = backend.id();
  report.dataset_name = dataset.name;
  report.strategy = config;
  report.seeds = seeds;
  report.questions_evaluated = included;

  {
    std::vector<double> sorted = report.per_seed_accuracies;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0.0;
    for (double a : sorted) mean += a;
    report.accuracy_mean = mean / double(sorted.size());
  }
  report.accuracy_stderr = standard_error(report.per_seed_accuracies);
  report.tokens_mean = tokens_total / double(runs);
  report.gradient_steps_mean = grad_total / double(runs);

  report.config = strategy_config_json(config);
  report.config["backend"] = backend.id();
  report.config["dataset"] = dataset.name;
  report.config["seeds"] = seeds;
  for (auto it = options.extra_config.begin(); it != options.extra_config.end();
       ++it) {
    report.config[it.key()] = it.value();
  }
  report.config_hash = [&] {
    char buf[17];
    snprintf(buf, sizeof buf, "%016llx",
             static_cast<unsigned long long>(fnv1a64(report.config.dump())));
    return std::string(buf);
  }();

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

// ============================================================================
// Sweeps
// ============================================================================

bool SweepGrid::empty() const {
  return n_values.empty() && k_values.empty() && e_values.empty() &&
         measures.empty() && losses.empty() && optimizers.empty() &&
         learning_rates.empty() && tuning_ratios.empty() && ne_pairs.empty();
}

namespace {

template <typename T, typename Apply>
std::vector<StrategyConfig> expand_dim(const std::vector<StrategyConfig>& in,
                                       const std::vector<T>& values,
                                       Apply apply) {
  if (values.empty()) return in;
  std::vector<StrategyConfig> out;
  out.reserve(in.size() * values.size());
  for (const StrategyConfig& c : in) {
    for (const T& v : values) {
      StrategyConfig next = c;
      apply(next, v);
      out.push_back(std::move(next));
    }
  }
  return out;
}

}  // namespace

std::vector<SweepCell> sweep(const StrategyConfig& base, const SweepGrid& grid,
                             const Dataset& dataset, const Backend& backend,
                             const std::vector<uint64_t>& seeds,
                             const EvalOptions& options) {
  if (grid.empty()) throw ValidationError("sweep: empty grid");

  std::vector<StrategyConfig> cells{base};
  if (!grid.ne_pairs.empty()) {
    cells = expand_dim(cells, grid.ne_pairs,
                       [](StrategyConfig& c, const std::pair<int, int>& ne) {
                         c.num_candidates = ne.first;
                         c.epochs = ne.second;
                       });
  } else {
    cells = expand_dim(cells, grid.n_values,
                       [](StrategyConfig& c, int n) { c.num_candidates = n; });
    cells = expand_dim(cells, grid.e_values,
                       [](StrategyConfig& c, int e) { c.epochs = e; });
  }
  cells = expand_dim(cells, grid.k_values,
                     [](StrategyConfig& c, int k) { c.prefix_tokens = k; });
  cells = expand_dim(cells, grid.measures,
                     [](StrategyConfig& c, ConfidenceMeasure m) {
                       c.measure = m;
                     });
  cells = expand_dim(cells, grid.losses,
                     [](StrategyConfig& c, LossKind l) { c.loss = l; });
  cells = expand_dim(cells, grid.optimizers,
                     [](StrategyConfig& c, OptimizerKind o) {
                       const double lr = c.optimizer.learning_rate;
                       const bool keep_lr =
                           o == c.optimizer.kind;
                       c.optimizer = OptimizerConfig::defaults_for(o);
                       if (keep_lr) c.optimizer.learning_rate = lr;
                     });
  cells = expand_dim(cells, grid.learning_rates, [](StrategyConfig& c,
                                                    double lr) {
    c.optimizer.learning_rate = lr;
  });
  cells = expand_dim(cells, grid.tuning_ratios,
                     [](StrategyConfig& c, double r) { c.tuning_ratio = r; });

  std::vector<SweepCell> out;
  out.reserve(cells.size());
  for (const StrategyConfig& cell_config : cells) {
    SweepCell cell;
    cell.config = cell_config;
    try {
      cell.report = evaluate(cell_config, dataset, backend, seeds, options);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    out.push_back(std::move(cell));
  }
  return out;
}

// ============================================================================
// Reports
// ============================================================================

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["strategy"] = report.strategy_label;
  j["backend"] = report.backend_id;
  j["dataset"] = report.dataset_name;
  j["config"] = report.config;
  j["config_hash"] = report.config_hash;
  j["seeds"] = report.seeds;
  nlohmann::ordered_json metrics;
  metrics["accuracy_mean"] = report.accuracy_mean;
  if (report.accuracy_stderr) {
    metrics["accuracy_stderr"] = *report.accuracy_stderr;
  } else {
    metrics["accuracy_stderr"] = nullptr;
  }
  metrics["per_seed_accuracies"] = report.per_seed_accuracies;
  metrics["tokens_mean"] = report.tokens_mean;
  metrics["gradient_steps_mean"] = report.gradient_steps_mean;
  metrics["questions_evaluated"] = report.questions_evaluated;
  j["metrics"] = metrics;
  nlohmann::ordered_json excluded = nlohmann::ordered_json::array();
  for (const QuestionError& e : report.excluded) {
    excluded.push_back({{"id", e.id}, {"error", e.message}});
  }
  j["excluded"] = excluded;
  if (!report.per_question.empty()) {
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (const QuestionRecord& r : report.per_question) {
      nlohmann::ordered_json rec;
      rec["seed"] = r.seed;
      rec["id"] = r.id;
      rec["correct"] = r.correct;
      if (r.answer) {
        rec["answer"] = *r.answer;
      } else {
        rec["answer"] = nullptr;
      }
      rec["generated_tokens"] = r.generated_tokens;
      records.push_back(std::move(rec));
    }
    j["per_question"] = records;
  }
  return j;
}

EvalReport report_from_json(const nlohmann::ordered_json& j) {
  EvalReport report;
  report.strategy_label = j.at("strategy").get<std::string>();
  report.backend_id = j.at("backend").get<std::string>();
  report.dataset_name = j.at("dataset").get<std::string>();
  report.config = j.at("config");
  report.config_hash = j.at("config_hash").get<std::string>();
  report.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  const nlohmann::ordered_json& metrics = j.at("metrics");
  report.accuracy_mean = metrics.at("accuracy_mean").get<double>();
  if (!metrics.at("accuracy_stderr").is_null()) {
    report.accuracy_stderr = metrics.at("accuracy_stderr").get<double>();
  }
  report.per_seed_accuracies =
      metrics.at("per_seed_accuracies").get<std::vector<double>>();
  report.tokens_mean = metrics.at("tokens_mean").get<double>();
  report.gradient_steps_mean = metrics.at("gradient_steps_mean").get<double>();
  report.questions_evaluated = metrics.at("questions_evaluated").get<int>();
  for (const auto& e : j.at("excluded")) {
    report.excluded.push_back(
        {e.at("id").get<std::string>(), e.at("error").get<std::string>()});
  }
  if (j.contains("per_question")) {
    for (const auto& r : j.at("per_question")) {
      QuestionRecord rec;
      rec.seed = r.at("seed").get<uint64_t>();
      rec.id = r.at("id").get<std::string>();
      rec.correct = r.at("correct").get<bool>();
      if (!r.at("answer").is_null()) {
        rec.answer = r.at("answer").get<std::string>();
      }
      rec.generated_tokens = r.at("generated_tokens").get<int64_t>();
      report.per_question.push_back(std::move(rec));
    }
  }
  // Strategy columns for CSV re-emission.
  if (report.config.contains("strategy")) {
    report.strategy.kind =
        strategy_from_string(report.config["strategy"].get<std::string>());
    report.strategy.num_candidates = report.config.value("n", 1);
    report.strategy.prefix_tokens = report.config.value("k", 32);
    report.strategy.measure = measure_from_string(
        report.config.value("measure", std::string("self-confidence")));
    report.strategy.epochs = report.config.value("epochs", 1);
  }
  return report;
}

void emit_report_json(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("emit_report_json: cannot open " + path);
  out << report_to_json(report).dump(2) << "\n";
  if (!out) throw Error("emit_report_json: write failed for " + path);
}

EvalReport load_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_report_json: cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_report_json: bad JSON in " + path + ": " + e.what());
  }
  return report_from_json(j);
}

namespace {

std::string csv_number(double v) {
  return nlohmann::json(v).dump();  // shortest round-trip form
}

void append_csv_row(std::string& csv, const EvalReport& report) {
  csv += report.strategy_label;
  csv += ',';
  csv += to_string(report.strategy.measure);
  csv += ',';
  csv += std::to_string(report.strategy.num_candidates);
  csv += ',';
  csv += std::to_string(report.strategy.prefix_tokens);
  csv += ',';
  csv += std::to_string(report.strategy.epochs);
  csv += ',';
  csv += csv_number(report.accuracy_mean);
  csv += ',';
  if (report.accuracy_stderr) csv += csv_number(*report.accuracy_stderr);
  csv += ',';
  csv += csv_number(report.tokens_mean);
  csv += ',';
  csv += csv_number(report.gradient_steps_mean);
  csv += '\n';
}

}  // namespace

std::string reports_to_csv(const std::vector<const EvalReport*>& reports) {
  std::string csv =
      "strategy,measure,N,K,E,accuracy_mean,accuracy_stderr,tokens_mean,"
      "gradient_steps_mean\n";
  for (const EvalReport* report : reports) append_csv_row(csv, *report);
  return csv;
}

void emit_report_csv(const std::vector<const EvalReport*>& reports,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("emit_report_csv: cannot open " + path);
  out << reports_to_csv(reports);
  if (!out) throw Error("emit_report_csv: write failed for " + path);
}

std::string sweep_to_csv(const std::vector<SweepCell>& cells) {
  std::vector<const EvalReport*> reports;
  for (const SweepCell& cell : cells) {
    if (cell.report) reports.push_back(&*cell.report);
  }
  return reports_to_csv(reports);
}

}  // namespace pscale
