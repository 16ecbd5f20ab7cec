#pragma once

#include <map>
#include <mutex>
#include <utility>

#include <json.hpp>

#include "prefix_scale/backend.hpp"

namespace pscale {

// ============================================================================
// OpenAI-compatible completions client
// ============================================================================
//
// POSTs {base_url}/v1/completions with `logprobs` requested and reads
// choices[0].text plus choices[0].logprobs.{tokens, token_logprobs,
// top_logprobs}. Chosen-token log-probabilities come from the per-token
// array; full distributions are only available as a top-k tail
// approximation (no mainstream server returns whole-vocabulary logprobs).

struct HttpOptions {
  std::string base_url;  // e.g. http://localhost:8000
  std::string api_key;
  std::string model;        // omitted from the payload when empty
  int top_k_logprobs = 5;   // k requested when distributions are wanted
  bool approx_tail = false; // enable top-k tail approximation
  int vocab_size = 151936;  // V used by the tail approximation
  int max_retries = 3;      // transport retries with exponential backoff
  int connection_pool = 4;  // max concurrent connections
  int timeout_seconds = 120;
  std::string record_path;  // when set, append request/response JSONL here
};

/// Spreads the residual probability mass uniformly over the token ids absent
/// from `top_k`, flooring each unseen probability at 1e-30. Entries are
/// placed verbatim at their ids. Throws ValidationError when k >= V and
/// TransportError when the top-k mass exceeds 1 + 1e-6 (malformed server).
Eigen::VectorXd approximate_full_distribution(
    const std::vector<std::pair<int, double>>& top_k, int vocab_size);

/// Builds the completions payload for a request. Deterministic field order;
/// also the record/replay lookup key.
nlohmann::ordered_json build_completion_payload(const GenerationRequest& request,
                                                const HttpOptions& options);

/// Converts one server reply into a ScoredSequence. Pure in the wire payload:
/// replaying a recorded response reproduces the sequence exactly. Top-k
/// token strings are assigned per-step positional ids (confidence measures
/// only consume the probability multiset, which is permutation-invariant).
ScoredSequence parse_completion_response(const GenerationRequest& request,
                                         const nlohmann::json& response,
                                         const HttpOptions& options,
                                         ComputeMeter& meter);

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpOptions options);

  std::string id() const override { return "http:" + options_.base_url; }
  BackendCapabilities capabilities() const override;

  ScoredSequence generate(const GenerationRequest& request,
                          ComputeMeter& meter) const override;

  ScoredSequence continue_generation(const std::string& prefix_prompt,
                                     const ScoredSequence& prefix,
                                     const GenerationRequest& request,
                                     ComputeMeter& meter) const override;

 private:
  nlohmann::json post_with_retries(const nlohmann::ordered_json& payload) const;
  void record(const nlohmann::ordered_json& payload,
              const nlohmann::json& response) const;

  HttpOptions options_;
  std::string host_;         // scheme://host:port
  std::string path_prefix_;  // optional path portion of base_url
  mutable std::mutex record_mutex_;
  mutable std::mutex pool_mutex_;
  mutable int in_flight_ = 0;
};

/// Serves recorded transcripts offline: looks every request up by its
/// canonical payload and parses the stored response through the same path as
/// the live client.
class ReplayBackend final : public Backend {
 public:
  ReplayBackend(const std::string& transcript_path, HttpOptions options);

  std::string id() const override { return "replay"; }
  BackendCapabilities capabilities() const override;

  ScoredSequence generate(const GenerationRequest& request,
                          ComputeMeter& meter) const override;

  ScoredSequence continue_generation(const std::string& prefix_prompt,
                                     const ScoredSequence& prefix,
                                     const GenerationRequest& request,
                                     ComputeMeter& meter) const override;

 private:
  HttpOptions options_;
  std::map<std::string, nlohmann::json> responses_;  // payload dump -> reply
};

}  // namespace pscale
