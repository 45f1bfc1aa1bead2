// Copyright 2026 The floodrag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Stateless LLM invocation: a backend interface, a scripted mock, an HTTP
// chat-completions client, retries, one bounded re-ask on invalid output,
// and token/time accounting.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "floodrag/core_model.hpp"
#include "floodrag/prompt_forge.hpp"
#include "json.hpp"

namespace floodrag::llm {

/// Retryable failure: network error, HTTP 429 or 5xx, scripted fault.
class TransientError : public Error {
 public:
  using Error::Error;
};

class AuthError : public Error {
 public:
  using Error::Error;
};

class ResponseTooLarge : public Error {
 public:
  using Error::Error;
};

struct Pricing {
  enum class Mode { kUnset, kToken, kHourly, kFixedFee };
  Mode mode = Mode::kUnset;
  double input_rate = 0.0;   // per prompt token
  double output_rate = 0.0;  // per completion token
  double hourly_rate = 0.0;
  double fixed_fee = 0.0;
  std::size_t amortized_over = 0;

  static Pricing token(double input_rate, double output_rate);
  static Pricing hourly(double rate);
  static Pricing fixed(double fee, std::size_t amortized_over);
};

struct BackendConfig {
  std::string backend_id = "mock";
  /// Chat-completions URL, or "mock".
  std::string endpoint = "mock";
  std::string model_name = "mock";
  double temperature = 0.0;
  int max_tokens = 4096;
  Pricing pricing = Pricing::token(0.0, 0.0);
  int max_parallel = 4;
  int max_retries = 3;
  int backoff_initial_ms = 500;
  int timeout_seconds = 120;
  std::size_t max_response_bytes = 1 << 22;
  /// Mock only: script file, and whether unscripted prompts are answered by
  /// the built-in deterministic responder instead of failing.
  std::string mock_script;
  bool mock_synthesize = false;

  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
  /// Name of the environment variable holding the API key.
  std::string api_key_env() const;
};

nlohmann::ordered_json config_to_json(const BackendConfig& c);
BackendConfig config_from_json(const nlohmann::json& j);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
/// Key used by mock scripts: sha256(system + "\n\n" + user).
std::string prompt_hash(const prompt::PromptBundle& bundle);
/// ceil(bytes / 4), the fallback when a backend reports no usage.
std::int64_t estimate_tokens(std::string_view text);

struct BackendReply {
  std::string text;
  std::optional<std::int64_t> prompt_tokens;
  std::optional<std::int64_t> completion_tokens;
};

class Backend {
 public:
  virtual ~Backend() = default;
  /// One stateless request. Throws TransientError, AuthError,
  /// ResponseTooLarge or Error.
  virtual BackendReply complete(const prompt::PromptBundle& bundle, const BackendConfig& config) = 0;
  /// False when wall time is not meaningful (the mock reports 0).
  virtual bool measures_time() const { return true; }
};

/// Scripted responses keyed by prompt hash, with an optional fault schedule.
///
/// Script lines: {"prompt_sha256": h, "response": text} or
/// {"prompt_sha256": h, "fault": "transient"|"auth", "count": n}; a fault
/// fires on the first n calls for that hash.
class MockBackend : public Backend {
 public:
  MockBackend() = default;
  static std::unique_ptr<MockBackend> from_file(const std::filesystem::path& path, bool synthesize);
  static std::unique_ptr<MockBackend> from_string(std::string_view jsonl, bool synthesize);

  void add_response(const std::string& hash, std::string response);
  void add_fault(const std::string& hash, std::string kind, int count);
  void set_synthesize(bool on) { synthesize_ = on; }

  BackendReply complete(const prompt::PromptBundle& bundle, const BackendConfig& config) override;
  bool measures_time() const override { return false; }

 private:
  struct Fault {
    std::string kind;
    int remaining = 0;
  };
  std::mutex mu_;
  std::map<std::string, std::string> responses_;
  std::map<std::string, Fault> faults_;
  bool synthesize_ = false;
};

/// Deterministic stand-in for a model: answers any bundle built by
/// prompt_forge with contract-compliant output derived from its inputs.
std::string synthesize_response(const prompt::PromptBundle& bundle);

/// OpenAI-style chat completions over HTTPS.
class HttpBackend : public Backend {
 public:
  BackendReply complete(const prompt::PromptBundle& bundle, const BackendConfig& config) override;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

struct UsageRecord {
  std::string call_key;
  std::string kind;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t wall_micros = 0;
  int retries = 0;

  bool operator==(const UsageRecord&) const = default;
};

struct UsageTotals {
  std::int64_t calls = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::int64_t wall_micros = 0;
  std::int64_t retries = 0;

  bool operator==(const UsageTotals&) const = default;
};

/// Append-only, safe for concurrent writers.
class UsageLedger {
 public:
  void append(UsageRecord r);
  /// Records sorted by call key.
  std::vector<UsageRecord> records() const;
  UsageTotals totals() const;

 private:
  mutable std::mutex mu_;
  std::vector<UsageRecord> records_;
};

/// Per-sample cost under the configured pricing mode.
double cost_index(const UsageTotals& totals, const Pricing& pricing, std::size_t n_samples);

struct TranscriptLine {
  std::string call_key;
  std::string kind;
  std::string prompt_sha256;
  std::string system;
  std::string user;
  std::string response;
};

using Validator = std::function<std::vector<prompt::Violation>(const std::string& response)>;

struct Attempt {
  std::string response;
  std::vector<prompt::Violation> violations;
};

struct ValidatedCall {
  bool ok = false;
  /// Every attempt in order; the last one is the final answer.
  std::vector<Attempt> attempts;
};

/// Copy of `bundle` whose user message lists the violations to fix.
prompt::PromptBundle reask_bundle(const prompt::PromptBundle& bundle, const std::vector<prompt::Violation>& violations);

class Gateway {
 public:
  Gateway(BackendConfig config, std::unique_ptr<Backend> backend);

  /// One call with retries. `call_key` orders ledger and transcript output.
  std::string invoke(const prompt::PromptBundle& bundle, const std::string& call_key);

  /// invoke(), then up to `max_reasks` re-asks while validation fails.
  ValidatedCall invoke_validated(const prompt::PromptBundle& bundle, const std::string& call_key,
                                 const Validator& validator, int max_reasks = 1);

  const BackendConfig& config() const { return config_; }
  const UsageLedger& ledger() const { return ledger_; }
  /// Transcript sorted by call key.
  std::vector<TranscriptLine> transcript() const;

 private:
  BackendConfig config_;
  std::unique_ptr<Backend> backend_;
  std::counting_semaphore<1024> slots_;
  UsageLedger ledger_;
  mutable std::mutex transcript_mu_;
  std::vector<TranscriptLine> transcript_;
};

nlohmann::ordered_json usage_to_json(const UsageRecord& r);
nlohmann::ordered_json transcript_to_json(const TranscriptLine& t);

}  // namespace floodrag::llm
