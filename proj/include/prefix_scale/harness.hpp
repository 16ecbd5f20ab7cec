#pragma once

#include <json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prefix_scale/strategies.hpp"

namespace pscale {

// ============================================================================
// Datasets
// ============================================================================

struct DatasetItem {
  std::string id;
  std::string question;
  std::string answer;  // gold answer, raw form
};

struct Dataset {
  std::string name;
  std::vector<DatasetItem> items;
};

/// Loads a JSONL dataset ({"id", "question", "answer"} per line, file
/// order). Ids must be unique and every gold answer must normalize.
/// `limit` truncates to the first items.
Dataset load_dataset(const std::string& path,
                     std::optional<int> limit = std::nullopt);

/// Synthetic questions whose gold answers match what the bimodal backend
/// embeds for the same prompt.
Dataset make_bimodal_dataset(int num_questions);

// ============================================================================
// Evaluation
// ============================================================================

struct QuestionError {
  std::string id;
  std::string message;
};

struct QuestionRecord {
  uint64_t seed = 0;
  std::string id;
  bool correct = false;
  std::optional<std::string> answer;
  int64_t generated_tokens = 0;
};

struct EvalReport {
  std::string strategy_label;
  std::string backend_id;
  std::string dataset_name;
  nlohmann::ordered_json config;  // effective configuration
  std::string config_hash;
  std::vector<uint64_t> seeds;
  StrategyConfig strategy;  // for CSV columns

  double accuracy_mean = 0.0;
  std::optional<double> accuracy_stderr;  // absent with a single seed
  std::vector<double> per_seed_accuracies;
  double tokens_mean = 0.0;          // generated tokens per question-run
  double gradient_steps_mean = 0.0;  // gradient steps per question-run
  int questions_evaluated = 0;       // accuracy denominator per seed

  std::vector<QuestionError> excluded;
  std::vector<QuestionRecord> per_question;

  /// Advisory only; never serialized, so identical configs produce
  /// byte-identical report files.
  double wall_seconds = 0.0;
};

struct EvalOptions {
  int workers = 1;
  bool keep_per_question = false;
  /// Extra key/values merged into the report's effective config (e.g.
  /// backend parameters resolved by the CLI).
  nlohmann::ordered_json extra_config = nlohmann::ordered_json::object();
};

/// Sample standard deviation (denominator S-1) over the square root of S;
/// absent when fewer than two values.
std::optional<double> standard_error(const std::vector<double>& values);

/// Runs the strategy on every question for every seed and aggregates.
/// A question whose run errors in any seed is excluded from every seed's
/// accuracy and listed in the report. Questions run concurrently up to
/// options.workers; aggregation order is deterministic.
EvalReport evaluate(const StrategyConfig& config, const Dataset& dataset,
                    const Backend& backend, const std::vector<uint64_t>& seeds,
                    const EvalOptions& options = {});

// ============================================================================
// Sweeps
// ============================================================================

struct SweepGrid {
  std::vector<int> n_values;
  std::vector<int> k_values;
  std::vector<int> e_values;
  std::vector<ConfidenceMeasure> measures;
  std::vector<LossKind> losses;
  std::vector<OptimizerKind> optimizers;
  std::vector<double> learning_rates;
  std::vector<double> tuning_ratios;
  /// (N, E) pairs; when set they replace the n/e dimensions, letting a sweep
  /// hold N*E fixed.
  std::vector<std::pair<int, int>> ne_pairs;

  bool empty() const;
};

struct SweepCell {
  StrategyConfig config;
  std::optional<EvalReport> report;
  std::string error;  // non-empty when the cell failed
};

/// Expands the grid against `base` (Cartesian product over the provided
/// dimensions) and evaluates every cell. Per-cell errors are recorded and
/// the sweep continues. Throws ValidationError on an empty grid.
std::vector<SweepCell> sweep(const StrategyConfig& base, const SweepGrid& grid,
                             const Dataset& dataset, const Backend& backend,
                             const std::vector<uint64_t>& seeds,
                             const EvalOptions& options = {});

// ============================================================================
// Report emission
// ============================================================================

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::ordered_json& j);

/// Writes the JSON report; identical reports serialize byte-identically.
void emit_report_json(const EvalReport& report, const std::string& path);
EvalReport load_report_json(const std::string& path);

/// Flat CSV, one row per report, fixed header:
/// strategy,measure,N,K,E,accuracy_mean,accuracy_stderr,tokens_mean,gradient_steps_mean
std::string reports_to_csv(const std::vector<const EvalReport*>& reports);
void emit_report_csv(const std::vector<const EvalReport*>& reports,
                     const std::string& path);

/// Accuracy-versus-compute table for a sweep (same CSV schema; errored
/// cells are skipped).
std::string sweep_to_csv(const std::vector<SweepCell>& cells);

}  // namespace pscale
