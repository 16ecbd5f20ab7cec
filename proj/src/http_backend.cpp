#include "prefix_scale/http_backend.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <thread>

#include <httplib.h>

namespace pscale {

// ============================================================================
// Tail approximation
// ============================================================================

Eigen::VectorXd approximate_full_distribution(
    const std::vector<std::pair<int, double>>& top_k, int vocab_size) {
  const int k = static_cast<int>(top_k.size());
  if (k == 0) {
    throw ValidationError("approximate_full_distribution: empty top-k");
  }
  if (k >= vocab_size) {
    throw ValidationError(
        "approximate_full_distribution: k must be smaller than V");
  }
  double seen_mass = 0.0;
  for (const auto& [id, logprob] : top_k) {
    if (id < 0 || id >= vocab_size) {
      throw ValidationError("approximate_full_distribution: id out of range");
    }
    if (logprob > 0.0) {
      throw TransportError(
          "malformed server reply: positive top-k logprob " +
          std::to_string(logprob));
    }
    seen_mass += std::exp(logprob);
  }
  if (seen_mass > 1.0 + 1e-6) {
    throw TransportError("malformed server reply: top-k mass " +
                         std::to_string(seen_mass) + " exceeds 1");
  }

  const double residual = 1.0 - seen_mass;
  const double per_unseen =
      std::max(residual / double(vocab_size - k), kProbFloor);
  Eigen::VectorXd d =
      Eigen::VectorXd::Constant(vocab_size, std::log(per_unseen));
  for (const auto& [id, logprob] : top_k) d[id] = logprob;
  return d;
}

// ============================================================================
// Wire payload and reply parsing
// ============================================================================

nlohmann::ordered_json build_completion_payload(const GenerationRequest& request,
                                                const HttpOptions& options) {
  request.validate();
  nlohmann::ordered_json payload;
  if (!options.model.empty()) payload["model"] = options.model;
  payload["prompt"] = request.prompt;
  payload["max_tokens"] = request.max_new_tokens;
  payload["temperature"] = request.temperature;
  payload["logprobs"] =
      request.want_distribution ? options.top_k_logprobs : 0;
  payload["seed"] = request.seed;
  if (!request.stop.empty()) payload["stop"] = request.stop;
  return payload;
}

namespace {

int opaque_token_id(const std::string& token_text) {
  return static_cast<int>(fnv1a64(token_text) & 0x7fffffffull);
}

}  // namespace

ScoredSequence parse_completion_response(const GenerationRequest& request,
                                         const nlohmann::json& response,
                                         const HttpOptions& options,
                                         ComputeMeter& meter) {
  if (request.want_distribution && !options.approx_tail) {
    throw CapabilityError(
        "full distributions on an HTTP backend require the top-k tail "
        "approximation (--approx-tail)");
  }
  try {
    const nlohmann::json& choice = response.at("choices").at(0);
    ScoredSequence seq;
    seq.prompt_text = request.prompt;
    seq.text = choice.at("text").get<std::string>();
    seq.terminated = choice.value("finish_reason", "") == "stop";

    const nlohmann::json& lp = choice.at("logprobs");
    const nlohmann::json& tokens = lp.at("tokens");
    const nlohmann::json& token_logprobs = lp.at("token_logprobs");
    if (tokens.size() != token_logprobs.size()) {
      throw TransportError("malformed server reply: token array mismatch");
    }

    for (size_t i = 0; i < tokens.size(); ++i) {
      if (token_logprobs[i].is_null()) {
        throw TransportError("malformed server reply: null token logprob");
      }
      const std::string token_text = tokens[i].get<std::string>();
      const double chosen = token_logprobs[i].get<double>();

      TokenStep step;
      step.chosen_logprob = std::min(chosen, 0.0);
      if (request.want_distribution) {
        // Merge the top-k map with the chosen token, order entries
        // deterministically, and hand them positional ids.
        std::map<std::string, double> entries;
        const nlohmann::json& top = lp.at("top_logprobs").at(i);
        for (auto it = top.begin(); it != top.end(); ++it) {
          entries[it.key()] = std::min(it.value().get<double>(), 0.0);
        }
        entries[token_text] = step.chosen_logprob;

        std::vector<std::pair<std::string, double>> ordered(entries.begin(),
                                                            entries.end());
        std::stable_sort(ordered.begin(), ordered.end(),
                         [](const auto& a, const auto& b) {
                           if (a.second != b.second) return a.second > b.second;
                           return a.first < b.first;
                         });
        std::vector<std::pair<int, double>> top_k;
        top_k.reserve(ordered.size());
        for (int j = 0; j < static_cast<int>(ordered.size()); ++j) {
          top_k.emplace_back(j, ordered[j].second);
          if (ordered[j].first == token_text) step.token_id = j;
        }
        step.distribution =
            approximate_full_distribution(top_k, options.vocab_size);
      } else {
        step.token_id = opaque_token_id(token_text);
      }
      seq.steps.push_back(std::move(step));
    }

    int64_t prompt_tokens = 0;
    if (response.contains("usage")) {
      prompt_tokens = response["usage"].value("prompt_tokens", 0);
    }
    meter.add_generation(prompt_tokens, seq.length());
    return seq;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed server reply: ") + e.what());
  }
}

// ============================================================================
// Live client
// ============================================================================

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) {
    throw ValidationError(
        "http backend: no base URL (set PREFIX_SCALE_API_BASE or --api-base)");
  }
  // Split an optional path prefix off the base URL so
  // http://host:8000/prefix -> host http://host:8000, path /prefix.
  const std::string& url = options_.base_url;
  const size_t scheme_end = url.find("://");
  const size_t path_start =
      url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) {
    host_ = url;
  } else {
    host_ = url.substr(0, path_start);
    path_prefix_ = url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') {
      path_prefix_.pop_back();
    }
  }
}

BackendCapabilities HttpBackend::capabilities() const {
  BackendCapabilities caps;
  caps.full_distribution = options_.approx_tail;
  caps.top_k_logprobs = options_.top_k_logprobs;
  caps.trainable = false;
  caps.vocab_size = options_.vocab_size;
  caps.deterministic_given_seed = false;
  return caps;
}

nlohmann::json HttpBackend::post_with_retries(
    const nlohmann::ordered_json& payload) const {
  const std::string body = payload.dump();
  const std::string path = path_prefix_ + "/v1/completions";

  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_retries + 1; ++attempt) {
    {
      // Bounded connection pool: never more than connection_pool sockets.
      std::unique_lock<std::mutex> lock(pool_mutex_);
      while (in_flight_ >= options_.connection_pool) {
        lock.unlock();
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        lock.lock();
      }
      ++in_flight_;
    }
    httplib::Client client(host_);
    client.set_connection_timeout(options_.timeout_seconds, 0);
    client.set_read_timeout(options_.timeout_seconds, 0);
    httplib::Headers headers;
    if (!options_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + options_.api_key);
    }
    httplib::Result result =
        client.Post(path, headers, body, "application/json");
    {
      std::lock_guard<std::mutex> lock(pool_mutex_);
      --in_flight_;
    }

    if (result && result->status == 200) {
      try {
        return nlohmann::json::parse(result->body);
      } catch (const nlohmann::json::exception& e) {
        throw TransportError(
            std::string("malformed server reply: invalid JSON: ") + e.what(),
            attempt);
      }
    }
    if (result && result->status > 0 && result->status < 500) {
      // Client-side errors do not get better on retry.
      throw TransportError("server returned status " +
                               std::to_string(result->status) + ": " +
                               result->body,
                           attempt);
    }
    last_error = result ? "status " + std::to_string(result->status)
                        : httplib::to_string(result.error());
    if (attempt <= options_.max_retries) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(100ll << (attempt - 1)));
    }
  }
  throw TransportError("transport failure after " +
                           std::to_string(options_.max_retries + 1) +
                           " attempts: " + last_error,
                       options_.max_retries + 1);
}

void HttpBackend::record(const nlohmann::ordered_json& payload,
                         const nlohmann::json& response) const {
  if (options_.record_path.empty()) return;
  std::lock_guard<std::mutex> lock(record_mutex_);
  std::ofstream out(options_.record_path, std::ios::app);
  nlohmann::ordered_json line;
  line["request"] = payload;
  line["response"] = response;
  out << line.dump() << "\n";
}

ScoredSequence HttpBackend::generate(const GenerationRequest& request,
                                     ComputeMeter& meter) const {
  if (request.want_distribution && !options_.approx_tail) {
    throw CapabilityError(
        "full distributions on an HTTP backend require the top-k tail "
        "approximation (--approx-tail)");
  }
  const nlohmann::ordered_json payload =
      build_completion_payload(request, options_);
  const nlohmann::json response = post_with_retries(payload);
  record(payload, response);
  return parse_completion_response(request, response, options_, meter);
}

ScoredSequence HttpBackend::continue_generation(
    const std::string& prefix_prompt, const ScoredSequence& prefix,
    const GenerationRequest& request, ComputeMeter& meter) const {
  GenerationRequest continued = request;
  continued.prompt = prefix_prompt + prefix.text;
  return generate(continued, meter);
}

// ============================================================================
// Replay
// ============================================================================

ReplayBackend::ReplayBackend(const std::string& transcript_path,
                             HttpOptions options)
    : options_(std::move(options)) {
  std::ifstream in(transcript_path);
  if (!in) {
    throw ValidationError("replay: cannot open transcript " + transcript_path);
  }
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json entry = nlohmann::json::parse(line);
      responses_[entry.at("request").dump()] = entry.at("response");
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("replay: bad transcript line " +
                       std::to_string(line_no) + ": " + e.what());
    }
  }
}

BackendCapabilities ReplayBackend::capabilities() const {
  BackendCapabilities caps;
  caps.full_distribution = options_.approx_tail;
  caps.top_k_logprobs = options_.top_k_logprobs;
  caps.vocab_size = options_.vocab_size;
  caps.deterministic_given_seed = true;  // transcripts are frozen
  return caps;
}

ScoredSequence ReplayBackend::generate(const GenerationRequest& request,
                                       ComputeMeter& meter) const {
  const std::string key =
      nlohmann::json(build_completion_payload(request, options_)).dump();
  const auto it = responses_.find(key);
  if (it == responses_.end()) {
    throw TransportError("replay: no recorded response for request " + key);
  }
  return parse_completion_response(request, it->second, options_, meter);
}

ScoredSequence ReplayBackend::continue_generation(
    const std::string& prefix_prompt, const ScoredSequence& prefix,
    const GenerationRequest& request, ComputeMeter& meter) const {
  GenerationRequest continued = request;
  continued.prompt = prefix_prompt + prefix.text;
  return generate(continued, meter);
}

}  // namespace pscale
