#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "prefix_scale/common.hpp"

namespace pscale {

// ============================================================================
// Tabular bigram language model
// ============================================================================
//
// A V x V logit matrix: row k holds the next-token logits given current token
// k. Gradients are closed-form, so finite-difference checks are cheap and the
// per-test-point training protocol can be exercised exactly.

struct BigramLM {
  int vocab_size = 0;
  Eigen::MatrixXd logits;  // V x V, row-major semantics: row = context token
  int bos_token = 0;       // conditioning token for an empty prompt

  static BigramLM zeros(int vocab_size, int bos_token = 0);
  /// Gaussian-initialized logits, deterministic in `seed`.
  static BigramLM random(int vocab_size, uint64_t seed, double scale = 1.0,
                         int bos_token = 0);
};

/// Maps a prompt to the bigram conditioning token: empty prompt -> bos_token;
/// a whitespace-separated list of in-range token ids ("toy-native") -> its
/// last id; anything else -> a stable hash of the text mod V.
int conditioning_token(const BigramLM& model, const std::string& prompt);

/// Log-softmax of row `context_token`, max-subtracted for stability.
/// Throws ValidationError on an out-of-range token.
Eigen::VectorXd next_distribution(const BigramLM& model, int context_token);

/// Teacher-forced log-probability of `continuation` given the running context
/// started from `prompt_tokens` (empty -> bos). Throws on an empty
/// continuation or out-of-range tokens.
double sequence_logprob(const BigramLM& model,
                        const std::vector<int>& prompt_tokens,
                        const std::vector<int>& continuation);

// ============================================================================
// Training losses
// ============================================================================

enum class LossKind { Nll, Entropy };

const char* to_string(LossKind k);
LossKind loss_from_string(const std::string& name);

struct LossResult {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // dLoss/dLogits, same shape as model.logits
};

/// Summed negative log-likelihood of the given sequences under the model,
/// conditioned on the prompt. Row gradient per visited (context, target)
/// pair is softmax(row) - onehot(target); untouched rows stay zero.
LossResult nll_loss_and_grad(const BigramLM& model, const std::string& prompt,
                             const std::vector<std::vector<int>>& sequences);

/// Trajectory-level entropy loss sum_k -exp(s_k) * s_k with s_k the
/// sequence log-probability. The gradient flows through both factors:
///   dL/dtheta = sum_k -exp(s_k) (s_k + 1) ds_k/dtheta.
LossResult entropy_loss_and_grad(const BigramLM& model,
                                 const std::string& prompt,
                                 const std::vector<std::vector<int>>& sequences);

LossResult loss_and_grad(LossKind kind, const BigramLM& model,
                         const std::string& prompt,
                         const std::vector<std::vector<int>>& sequences);

// ============================================================================
// Optimizers
// ============================================================================

enum class OptimizerKind { Sgd, AdamW, AdamWarmup };

const char* to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double learning_rate = 2e-3;  // SGD default; AdamW family defaults to 5e-6
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;

  static OptimizerConfig defaults_for(OptimizerKind kind);
  void validate() const;
};

struct OptimizerState {
  Eigen::MatrixXd m;  // first moment (AdamW family)
  Eigen::MatrixXd v;  // second moment
  int64_t step = 0;   // bias-correction counter

  static OptimizerState init(int vocab_size);
};

/// One optimizer step in place. SGD: W -= lr * g. AdamW: decoupled weight
/// decay with bias correction. Throws on shape mismatch.
void apply_step(BigramLM& model, const Eigen::MatrixXd& grad,
                OptimizerState& state, const OptimizerConfig& config);

/// Moment update without a parameter update; used to warm AdamW moments from
/// one gradient before the real steps.
void warm_moments(const Eigen::MatrixXd& grad, OptimizerState& state,
                  const OptimizerConfig& config);

// ============================================================================
// Per-test-point training
// ============================================================================

struct TrainStepLog {
  int epoch = 0;
  int sequence_index = 0;
  double loss = 0.0;
};

struct TrainResult {
  BigramLM model;  // trained copy; the input model is never mutated
  std::vector<TrainStepLog> steps;
  /// Tokens generated internally for AdamWarmup moment initialization.
  int64_t warmup_generated_tokens = 0;
};

/// Performs exactly N*E gradient steps, one sequence per step in epoch-major
/// order (no batching), on a copy of the model. With AdamWarmup, the moments
/// are warmed from one gradient on a fresh prefix before the real steps; the
/// warmup updates no parameters and is not counted as a step. The warmup
/// prefix is `warmup_prefix` if given, otherwise sampled internally from the
/// pre-training model with `warmup_seed`.
TrainResult train_on_prefixes(const BigramLM& model, const std::string& prompt,
                              const std::vector<std::vector<int>>& prefixes,
                              LossKind loss_kind, const OptimizerConfig& config,
                              int epochs, uint64_t warmup_seed = 0,
                              const std::vector<int>* warmup_prefix = nullptr);

// ============================================================================
// Persistence
// ============================================================================
//
// JSON layout: {"vocab_size": V, "bos_token": b, "logits": [V*V doubles]}
// with logits flattened row-major (row = context token).

void save_model(const BigramLM& model, const std::string& path);
BigramLM load_model(const std::string& path);

}  // namespace pscale
