#include "prefix_scale/bigram.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace pscale {

BigramLM BigramLM::zeros(int vocab_size, int bos_token) {
  if (vocab_size < 1) throw ValidationError("BigramLM: vocab_size must be >= 1");
  BigramLM m;
  m.vocab_size = vocab_size;
  m.logits = Eigen::MatrixXd::Zero(vocab_size, vocab_size);
  m.bos_token = bos_token;
  return m;
}

BigramLM BigramLM::random(int vocab_size, uint64_t seed, double scale,
                          int bos_token) {
  BigramLM m = zeros(vocab_size, bos_token);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, scale);
  for (int r = 0; r < vocab_size; ++r) {
    for (int c = 0; c < vocab_size; ++c) {
      m.logits(r, c) = gauss(rng);
    }
  }
  return m;
}

int conditioning_token(const BigramLM& model, const std::string& prompt) {
  if (prompt.empty()) return model.bos_token;
  // Toy-native prompt: whitespace-separated in-range token ids.
  std::istringstream in(prompt);
  std::string word;
  int last = -1;
  bool native = true;
  bool any = false;
  while (in >> word) {
    any = true;
    try {
      size_t used = 0;
      const int id = std::stoi(word, &used);
      if (used != word.size() || id < 0 || id >= model.vocab_size) {
        native = false;
        break;
      }
      last = id;
    } catch (const std::exception&) {
      native = false;
      break;
    }
  }
  if (native && any) return last;
  return static_cast<int>(fnv1a64(prompt) %
                          static_cast<uint64_t>(model.vocab_size));
}

Eigen::VectorXd next_distribution(const BigramLM& model, int context_token) {
  if (context_token < 0 || context_token >= model.vocab_size) {
    throw ValidationError("next_distribution: context token " +
                          std::to_string(context_token) + " out of range");
  }
  Eigen::VectorXd row = model.logits.row(context_token);
  const double m = row.maxCoeff();
  Eigen::VectorXd shifted = row.array() - m;
  const double lse = std::log(shifted.array().exp().sum());
  return shifted.array() - lse;
}

double sequence_logprob(const BigramLM& model,
                        const std::vector<int>& prompt_tokens,
                        const std::vector<int>& continuation) {
  if (continuation.empty()) {
    throw ValidationError("sequence_logprob: empty continuation");
  }
  int context = prompt_tokens.empty() ? model.bos_token : prompt_tokens.back();
  double total = 0.0;
  for (int tok : continuation) {
    if (tok < 0 || tok >= model.vocab_size) {
      throw ValidationError("sequence_logprob: token out of range");
    }
    total += next_distribution(model, context)[tok];
    context = tok;
  }
  return total;
}

// ============================================================================
// Losses
// ============================================================================

const char* to_string(LossKind k) {
  return k == LossKind::Nll ? "nll" : "entropy";
}

LossKind loss_from_string(const std::string& name) {
  if (name == "nll") return LossKind::Nll;
  if (name == "entropy") return LossKind::Entropy;
  throw ValidationError("unknown loss: " + name);
}

namespace {

// Accumulates the gradient of the sequence LOG-LIKELIHOOD s_k (not its
// negation) into `grad`, scaled by `weight`:
//   d s / d row(context) = onehot(target) - softmax(row(context)).
// Returns s_k.
double accumulate_loglik_grad(const BigramLM& model, int start_context,
                              const std::vector<int>& tokens, double weight,
                              Eigen::MatrixXd& grad) {
  int context = start_context;
  double s = 0.0;
  for (int tok : tokens) {
    if (tok < 0 || tok >= model.vocab_size) {
      throw ValidationError("loss: token out of range");
    }
    const Eigen::VectorXd logdist = next_distribution(model, context);
    s += logdist[tok];
    grad.row(context) -= weight * logdist.array().exp().matrix().transpose();
    grad(context, tok) += weight;
    context = tok;
  }
  return s;
}

}  // namespace

LossResult nll_loss_and_grad(const BigramLM& model, const std::string& prompt,
                             const std::vector<std::vector<int>>& sequences) {
  if (sequences.empty()) {
    throw ValidationError("nll_loss_and_grad: no sequences");
  }
  const int start = conditioning_token(model, prompt);
  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(model.vocab_size, model.vocab_size);
  for (const std::vector<int>& seq : sequences) {
    // NLL gradient is minus the log-likelihood gradient.
    const double s = accumulate_loglik_grad(model, start, seq, -1.0, out.grad);
    out.loss -= s;
  }
  return out;
}

LossResult entropy_loss_and_grad(const BigramLM& model,
                                 const std::string& prompt,
                                 const std::vector<std::vector<int>>& sequences) {
  if (sequences.empty()) {
    throw ValidationError("entropy_loss_and_grad: no sequences");
  }
  const int start = conditioning_token(model, prompt);
  LossResult out;
  out.grad = Eigen::MatrixXd::Zero(model.vocab_size, model.vocab_size);
  for (const std::vector<int>& seq : sequences) {
    // Two passes: s_k first, then its gradient with the product-rule weight
    //   d/dtheta [-exp(s) s] = -exp(s) (s + 1) ds/dtheta.
    Eigen::MatrixXd scratch =
        Eigen::MatrixXd::Zero(model.vocab_size, model.vocab_size);
    const double s = accumulate_loglik_grad(model, start, seq, 1.0, scratch);
    const double weight = -std::exp(s) * (s + 1.0);
    out.loss += -std::exp(s) * s;
    out.grad += weight * scratch;
  }
  return out;
}

LossResult loss_and_grad(LossKind kind, const BigramLM& model,
                         const std::string& prompt,
                         const std::vector<std::vector<int>>& sequences) {
  return kind == LossKind::Nll ? nll_loss_and_grad(model, prompt, sequences)
                               : entropy_loss_and_grad(model, prompt, sequences);
}

// ============================================================================
// Optimizers
// ============================================================================

const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::AdamW: return "adamw";
    case OptimizerKind::AdamWarmup: return "adam-warmup";
  }
  return "?";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adamw") return OptimizerKind::AdamW;
  if (name == "adam-warmup") return OptimizerKind::AdamWarmup;
  throw ValidationError("unknown optimizer: " + name);
}

OptimizerConfig OptimizerConfig::defaults_for(OptimizerKind kind) {
  OptimizerConfig c;
  c.kind = kind;
  c.learning_rate = (kind == OptimizerKind::Sgd) ? 2e-3 : 5e-6;
  return c;
}

void OptimizerConfig::validate() const {
  if (learning_rate < 0.0) {
    throw ValidationError("optimizer: learning_rate must be >= 0");
  }
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0) {
    throw ValidationError("optimizer: betas must lie in [0, 1)");
  }
  if (adam_eps <= 0.0) throw ValidationError("optimizer: eps must be > 0");
}

OptimizerState OptimizerState::init(int vocab_size) {
  OptimizerState s;
  s.m = Eigen::MatrixXd::Zero(vocab_size, vocab_size);
  s.v = Eigen::MatrixXd::Zero(vocab_size, vocab_size);
  return s;
}

namespace {

void check_shapes(const BigramLM& model, const Eigen::MatrixXd& grad,
                  const OptimizerState& state) {
  if (grad.rows() != model.logits.rows() || grad.cols() != model.logits.cols()) {
    throw ValidationError("apply_step: gradient shape mismatch");
  }
  if (state.m.rows() != grad.rows() || state.m.cols() != grad.cols()) {
    throw ValidationError("apply_step: optimizer state shape mismatch");
  }
}

void adam_moment_update(const Eigen::MatrixXd& grad, OptimizerState& state,
                        const OptimizerConfig& c) {
  state.step += 1;
  state.m = c.adam_beta1 * state.m + (1.0 - c.adam_beta1) * grad;
  state.v = (c.adam_beta2 * state.v.array() +
             (1.0 - c.adam_beta2) * grad.array().square())
                .matrix();
}

}  // namespace

void apply_step(BigramLM& model, const Eigen::MatrixXd& grad,
                OptimizerState& state, const OptimizerConfig& config) {
  config.validate();
  check_shapes(model, grad, state);
  if (config.kind == OptimizerKind::Sgd) {
    state.step += 1;
    model.logits -= config.learning_rate * grad;
    return;
  }
  // AdamW / AdamWarmup: decoupled weight decay with bias correction.
  adam_moment_update(grad, state, config);
  const double bc1 = 1.0 - std::pow(config.adam_beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(config.adam_beta2, double(state.step));
  const Eigen::ArrayXXd m_hat = state.m.array() / bc1;
  const Eigen::ArrayXXd v_hat = state.v.array() / bc2;
  model.logits.array() -=
      config.learning_rate * (m_hat / (v_hat.sqrt() + config.adam_eps) +
                              config.weight_decay * model.logits.array());
}

void warm_moments(const Eigen::MatrixXd& grad, OptimizerState& state,
                  const OptimizerConfig& config) {
  adam_moment_update(grad, state, config);
}

// ============================================================================
// Training
// ============================================================================

namespace {

// Inverse-CDF draw from a log-distribution with a counter-based uniform.
int sample_from_logdist(const Eigen::VectorXd& logdist, double u) {
  double cum = 0.0;
  const int v = static_cast<int>(logdist.size());
  for (int j = 0; j < v; ++j) {
    cum += std::exp(logdist[j]);
    if (u < cum) return j;
  }
  return v - 1;
}

std::vector<int> sample_token_ids(const BigramLM& model,
                                  const std::string& prompt, int count,
                                  uint64_t seed) {
  std::vector<int> out;
  out.reserve(count);
  int context = conditioning_token(model, prompt);
  for (int i = 0; i < count; ++i) {
    const Eigen::VectorXd logdist = next_distribution(model, context);
    const int tok = sample_from_logdist(logdist, seeded_uniform(seed, i));
    out.push_back(tok);
    context = tok;
  }
  return out;
}

}  // namespace

TrainResult train_on_prefixes(const BigramLM& model, const std::string& prompt,
                              const std::vector<std::vector<int>>& prefixes,
                              LossKind loss_kind, const OptimizerConfig& config,
                              int epochs, uint64_t warmup_seed,
                              const std::vector<int>* warmup_prefix) {
  if (prefixes.empty()) {
    throw ValidationError("train_on_prefixes: need at least one prefix");
  }
  if (epochs < 1) throw ValidationError("train_on_prefixes: epochs must be >= 1");
  config.validate();

  TrainResult result;
  result.model = model;  // trained copy; caller's model stays untouched
  OptimizerState state = OptimizerState::init(model.vocab_size);

  if (config.kind == OptimizerKind::AdamWarmup) {
    std::vector<int> sampled;
    if (!warmup_prefix) {
      const int warmup_len = static_cast<int>(prefixes.front().size());
      sampled = sample_token_ids(result.model, prompt, warmup_len, warmup_seed);
      result.warmup_generated_tokens = warmup_len;
      warmup_prefix = &sampled;
    }
    if (!warmup_prefix->empty()) {
      const LossResult warm =
          loss_and_grad(loss_kind, result.model, prompt, {*warmup_prefix});
      warm_moments(warm.grad, state, config);
    }
  }

  // Epoch-major, one sequence per gradient step, no batching.
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int k = 0; k < static_cast<int>(prefixes.size()); ++k) {
      const LossResult step =
          loss_and_grad(loss_kind, result.model, prompt, {prefixes[k]});
      apply_step(result.model, step.grad, state, config);
      result.steps.push_back({epoch, k, step.loss});
    }
  }
  return result;
}

// ============================================================================
// Persistence
// ============================================================================

void save_model(const BigramLM& model, const std::string& path) {
  nlohmann::ordered_json j;
  j["vocab_size"] = model.vocab_size;
  j["bos_token"] = model.bos_token;
  std::vector<double> flat;
  flat.reserve(size_t(model.vocab_size) * model.vocab_size);
  for (int r = 0; r < model.vocab_size; ++r) {
    for (int c = 0; c < model.vocab_size; ++c) {
      flat.push_back(model.logits(r, c));
    }
  }
  j["logits"] = flat;
  std::ofstream out(path);
  if (!out) throw Error("save_model: cannot open " + path);
  out << j.dump() << "\n";
}

BigramLM load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_model: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_model: bad JSON in " + path + ": " + e.what());
  }
  const int v = j.at("vocab_size").get<int>();
  BigramLM model = BigramLM::zeros(v, j.at("bos_token").get<int>());
  const auto& flat = j.at("logits");
  if (static_cast<int>(flat.size()) != v * v) {
    throw ParseError("load_model: expected " + std::to_string(v * v) +
                     " logits, got " + std::to_string(flat.size()));
  }
  for (int r = 0; r < v; ++r) {
    for (int c = 0; c < v; ++c) {
      model.logits(r, c) = flat[size_t(r) * v + c].get<double>();
    }
  }
  return model;
}

}  // namespace pscale
