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

#include "floodrag/llm_gateway.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "floodrag/text_util.hpp"

namespace floodrag::llm {

using nlohmann::json;
using nlohmann::ordered_json;

Pricing Pricing::token(double input_rate, double output_rate) {
  Pricing p;
  p.mode = Mode::kToken;
  p.input_rate = input_rate;
  p.output_rate = output_rate;
  return p;
}

Pricing Pricing::hourly(double rate) {
  Pricing p;
  p.mode = Mode::kHourly;
  p.hourly_rate = rate;
  return p;
}

Pricing Pricing::fixed(double fee, std::size_t amortized_over) {
  Pricing p;
  p.mode = Mode::kFixedFee;
  p.fixed_fee = fee;
  p.amortized_over = amortized_over;
  return p;
}

void BackendConfig::validate() const {
  if (backend_id.empty()) throw std::invalid_argument("backend_id must be non-empty");
  if (endpoint.empty()) throw std::invalid_argument("endpoint must be non-empty");
  if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
  if (max_parallel < 1 || max_parallel > 1024) throw std::invalid_argument("max_parallel must be in 1..1024");
  if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
  if (backoff_initial_ms < 0) throw std::invalid_argument("backoff_initial_ms must be >= 0");
  switch (pricing.mode) {
    case Pricing::Mode::kUnset: throw std::invalid_argument("pricing mode unset");
    case Pricing::Mode::kToken:
      if (pricing.input_rate < 0 || pricing.output_rate < 0) throw std::invalid_argument("negative token rate");
      break;
    case Pricing::Mode::kHourly:
      if (pricing.hourly_rate < 0) throw std::invalid_argument("negative hourly rate");
      break;
    case Pricing::Mode::kFixedFee:
      if (pricing.fixed_fee < 0 || pricing.amortized_over == 0) {
        throw std::invalid_argument("fixed fee needs a non-negative fee and amortized_over >= 1");
      }
      break;
  }
}

std::string BackendConfig::api_key_env() const {
  std::string s;
  for (char c : backend_id) {
    s += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                                                     : '_';
  }
  return s + "_API_KEY";
}

ordered_json config_to_json(const BackendConfig& c) {
  ordered_json p;
  switch (c.pricing.mode) {
    case Pricing::Mode::kUnset: p["mode"] = "unset"; break;
    case Pricing::Mode::kToken:
      p["mode"] = "token";
      p["input_rate"] = c.pricing.input_rate;
      p["output_rate"] = c.pricing.output_rate;
      break;
    case Pricing::Mode::kHourly:
      p["mode"] = "hourly";
      p["hourly_rate"] = c.pricing.hourly_rate;
      break;
    case Pricing::Mode::kFixedFee:
      p["mode"] = "fixed_fee";
      p["fixed_fee"] = c.pricing.fixed_fee;
      p["amortized_over"] = c.pricing.amortized_over;
      break;
  }
  ordered_json j;
  j["backend_id"] = c.backend_id;
  j["endpoint"] = c.endpoint;
  j["model_name"] = c.model_name;
  j["temperature"] = c.temperature;
  j["max_tokens"] = c.max_tokens;
  j["pricing"] = std::move(p);
  j["max_parallel"] = c.max_parallel;
  j["max_retries"] = c.max_retries;
  j["backoff_initial_ms"] = c.backoff_initial_ms;
  j["timeout_seconds"] = c.timeout_seconds;
  j["max_response_bytes"] = c.max_response_bytes;
  j["mock_script"] = c.mock_script;
  j["mock_synthesize"] = c.mock_synthesize;
  return j;
}

BackendConfig config_from_json(const json& j) {
  BackendConfig c;
  c.backend_id = j.value("backend_id", c.backend_id);
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model_name = j.value("model_name", c.model_name);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.max_parallel = j.value("max_parallel", c.max_parallel);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_initial_ms = j.value("backoff_initial_ms", c.backoff_initial_ms);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.max_response_bytes = j.value("max_response_bytes", c.max_response_bytes);
  c.mock_script = j.value("mock_script", c.mock_script);
  c.mock_synthesize = j.value("mock_synthesize", c.mock_synthesize);
  if (j.contains("pricing")) {
    const auto& p = j.at("pricing");
    const auto mode = p.value("mode", std::string("unset"));
    if (mode == "token") {
      c.pricing = Pricing::token(p.value("input_rate", 0.0), p.value("output_rate", 0.0));
    } else if (mode == "hourly") {
      c.pricing = Pricing::hourly(p.value("hourly_rate", 0.0));
    } else if (mode == "fixed_fee") {
      c.pricing = Pricing::fixed(p.value("fixed_fee", 0.0), p.value("amortized_over", std::size_t{0}));
    } else if (mode == "unset") {
      c.pricing = Pricing{};
    } else {
      throw std::invalid_argument("unknown pricing mode: " + mode);
    }
  }
  return c;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string prompt_hash(const prompt::PromptBundle& bundle) { return sha256_hex(bundle.system + "\n\n" + bundle.user); }

std::int64_t estimate_tokens(std::string_view text) { return static_cast<std::int64_t>((text.size() + 3) / 4); }

// ---------------------------------------------------------------------------
// Mock

std::unique_ptr<MockBackend> MockBackend::from_string(std::string_view jsonl, bool synthesize) {
  auto m = std::make_unique<MockBackend>();
  m->synthesize_ = synthesize;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto hash = j.at("prompt_sha256").get<std::string>();
      if (j.contains("fault")) {
        m->add_fault(hash, j.at("fault").get<std::string>(), j.value("count", 1));
      } else {
        m->add_response(hash, j.at("response").get<std::string>());
      }
    } catch (const json::exception& e) {
      throw Error("mock script line " + std::to_string(n) + ": " + e.what());
    }
  }
  return m;
}

std::unique_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& path, bool synthesize) {
  return from_string(read_file(path), synthesize);
}

void MockBackend::add_response(const std::string& hash, std::string response) {
  std::lock_guard lock(mu_);
  responses_[hash] = std::move(response);
}

void MockBackend::add_fault(const std::string& hash, std::string kind, int count) {
  if (kind != "transient" && kind != "auth") throw Error("unknown mock fault kind: " + kind);
  std::lock_guard lock(mu_);
  faults_[hash] = Fault{std::move(kind), count};
}

BackendReply MockBackend::complete(const prompt::PromptBundle& bundle, const BackendConfig&) {
  const auto hash = prompt_hash(bundle);
  {
    std::lock_guard lock(mu_);
    if (auto f = faults_.find(hash); f != faults_.end() && f->second.remaining > 0) {
      --f->second.remaining;
      if (f->second.kind == "auth") throw AuthError("scripted authentication failure");
      throw TransientError("scripted transient failure");
    }
    if (auto r = responses_.find(hash); r != responses_.end()) return BackendReply{r->second, std::nullopt, std::nullopt};
    if (!synthesize_) throw Error("mock script has no response for prompt " + hash);
  }
  return BackendReply{synthesize_response(bundle), std::nullopt, std::nullopt};
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.endpoint == "mock") {
    auto m = config.mock_script.empty() ? std::make_unique<MockBackend>()
                                        : MockBackend::from_file(config.mock_script, config.mock_synthesize);
    m->set_synthesize(config.mock_synthesize);
    return m;
  }
  return std::make_unique<HttpBackend>();
}

// ---------------------------------------------------------------------------
// Ledger

void UsageLedger::append(UsageRecord r) {
  std::lock_guard lock(mu_);
  records_.push_back(std::move(r));
}

std::vector<UsageRecord> UsageLedger::records() const {
  std::lock_guard lock(mu_);
  auto out = records_;
  std::sort(out.begin(), out.end(), [](const UsageRecord& a, const UsageRecord& b) { return a.call_key < b.call_key; });
  return out;
}

UsageTotals UsageLedger::totals() const {
  std::lock_guard lock(mu_);
  UsageTotals t;
  for (const auto& r : records_) {
    ++t.calls;
    t.prompt_tokens += r.prompt_tokens;
    t.completion_tokens += r.completion_tokens;
    t.wall_micros += r.wall_micros;
    t.retries += r.retries;
  }
  return t;
}

double cost_index(const UsageTotals& totals, const Pricing& pricing, std::size_t n_samples) {
  if (n_samples < 1) throw std::invalid_argument("cost_index: n_samples must be >= 1");
  const auto n = static_cast<double>(n_samples);
  switch (pricing.mode) {
    case Pricing::Mode::kToken:
      return (static_cast<double>(totals.prompt_tokens) * pricing.input_rate +
              static_cast<double>(totals.completion_tokens) * pricing.output_rate) /
             n;
    case Pricing::Mode::kHourly:
      return static_cast<double>(totals.wall_micros) / 1e6 / 3600.0 * pricing.hourly_rate / n;
    case Pricing::Mode::kFixedFee:
      if (pricing.amortized_over == 0) throw std::invalid_argument("cost_index: amortized_over must be >= 1");
      return pricing.fixed_fee / static_cast<double>(pricing.amortized_over);
    case Pricing::Mode::kUnset:
      break;
  }
  throw std::invalid_argument("cost_index: pricing mode unset");
}

// ---------------------------------------------------------------------------
// Gateway

prompt::PromptBundle reask_bundle(const prompt::PromptBundle& bundle, const std::vector<prompt::Violation>& violations) {
  auto b = bundle;
  b.user += "\n\nYour previous response violated the output contract:\n";
  for (const auto& v : violations) {
    b.user += "- " + std::string(prompt::violation_name(v.code));
    if (!v.detail.empty()) b.user += ": " + v.detail;
    b.user += "\n";
  }
  b.user += "Return the corrected STRICT JSONL only.";
  return b;
}

Gateway::Gateway(BackendConfig config, std::unique_ptr<Backend> backend)
    : config_(std::move(config)), backend_(std::move(backend)), slots_(config_.max_parallel) {
  config_.validate();
  if (!backend_) throw std::invalid_argument("Gateway: null backend");
}

std::string Gateway::invoke(const prompt::PromptBundle& bundle, const std::string& call_key) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};

  int retries = 0;
  const auto start = std::chrono::steady_clock::now();
  BackendReply reply;
  for (;;) {
    try {
      reply = backend_->complete(bundle, config_);
      break;
    } catch (const TransientError&) {
      if (retries >= config_.max_retries) throw;
      const auto wait = std::chrono::milliseconds(static_cast<long long>(config_.backoff_initial_ms) << retries);
      ++retries;
      std::this_thread::sleep_for(wait);
    }
  }
  if (reply.text.size() > config_.max_response_bytes) {
    throw ResponseTooLarge("response of " + std::to_string(reply.text.size()) + " bytes exceeds the limit");
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;

  UsageRecord u;
  u.call_key = call_key;
  u.kind = std::string(prompt::kind_name(bundle.kind));
  u.prompt_tokens = reply.prompt_tokens.value_or(estimate_tokens(bundle.system) + estimate_tokens(bundle.user));
  u.completion_tokens = reply.completion_tokens.value_or(estimate_tokens(reply.text));
  u.wall_micros =
      backend_->measures_time() ? std::chrono::duration_cast<std::chrono::microseconds>(elapsed).count() : 0;
  u.retries = retries;
  ledger_.append(u);
  {
    std::lock_guard lock(transcript_mu_);
    transcript_.push_back({call_key, u.kind, prompt_hash(bundle), bundle.system, bundle.user, reply.text});
  }
  return reply.text;
}

ValidatedCall Gateway::invoke_validated(const prompt::PromptBundle& bundle, const std::string& call_key,
                                        const Validator& validator, int max_reasks) {
  ValidatedCall call;
  auto current = bundle;
  for (int attempt = 0; attempt <= max_reasks; ++attempt) {
    const auto key = attempt == 0 ? call_key : call_key + "/reask-" + std::to_string(attempt);
    auto response = invoke(current, key);
    auto violations = validator(response);
    const bool ok = violations.empty();
    call.attempts.push_back({std::move(response), violations});
    if (ok) {
      call.ok = true;
      break;
    }
    current = reask_bundle(bundle, violations);
  }
  return call;
}

std::vector<TranscriptLine> Gateway::transcript() const {
  std::lock_guard lock(transcript_mu_);
  auto out = transcript_;
  std::sort(out.begin(), out.end(),
            [](const TranscriptLine& a, const TranscriptLine& b) { return a.call_key < b.call_key; });
  return out;
}

ordered_json usage_to_json(const UsageRecord& r) {
  ordered_json j;
  j["call_key"] = r.call_key;
  j["kind"] = r.kind;
  j["prompt_tokens"] = r.prompt_tokens;
  j["completion_tokens"] = r.completion_tokens;
  j["wall_micros"] = r.wall_micros;
  j["retries"] = r.retries;
  return j;
}

ordered_json transcript_to_json(const TranscriptLine& t) {
  ordered_json j;
  j["call_key"] = t.call_key;
  j["kind"] = t.kind;
  j["prompt_sha256"] = t.prompt_sha256;
  j["system"] = t.system;
  j["user"] = t.user;
  j["response"] = t.response;
  return j;
}

}  // namespace floodrag::llm
