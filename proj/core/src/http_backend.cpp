#include "detox/http_backend.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <json.hpp>
#include <mutex>
#include <regex>
#include <set>

#include "detox/errors.hpp"

namespace detox::http {
namespace {

using nlohmann::json;

constexpr double kTotalTolerance = 1e-4;

class ClientPool;

// Returns a client to the pool on destruction.
class Lease {
 public:
  Lease(ClientPool& pool, std::unique_ptr<httplib::Client> client)
      : pool_(&pool), client_(std::move(client)) {}
  Lease(Lease&&) = default;
  ~Lease();
  httplib::Client& operator*() { return *client_; }

 private:
  ClientPool* pool_;
  std::unique_ptr<httplib::Client> client_;
};

class ClientPool {
 public:
  explicit ClientPool(const ServerConfig& config) : config_(config) {}

  Lease acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !idle_.empty() || created_ < config_.pool_size; });
    if (!idle_.empty()) {
      auto client = std::move(idle_.back());
      idle_.pop_back();
      return Lease(*this, std::move(client));
    }
    ++created_;
    lock.unlock();
    return Lease(*this, make_client());
  }

  void release(std::unique_ptr<httplib::Client> client) {
    {
      std::lock_guard lock(mu_);
      idle_.push_back(std::move(client));
    }
    cv_.notify_one();
  }

 private:
  std::unique_ptr<httplib::Client> make_client() const {
    auto client = std::make_unique<httplib::Client>(config_.base_url);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client->set_connection_timeout(timeout);
    client->set_read_timeout(timeout);
    client->set_write_timeout(timeout);
    client->set_keep_alive(true);
    client->set_tcp_nodelay(true);
    return client;
  }

  ServerConfig config_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
  std::size_t created_ = 0;
};

Lease::~Lease() {
  if (client_) pool_->release(std::move(client_));
}

std::string error_message(const std::string& body) {
  const auto j = json::parse(body, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("error") && j["error"].is_object()) {
    const auto& e = j["error"];
    return e.value("code", std::string("ERROR")) + ": " + e.value("message", std::string());
  }
  return body;
}

class Transport {
 public:
  explicit Transport(const ServerConfig& config)
      : config_(config), prefix_("/" + config.api_version), pool_(config) {}

  json get(const std::string& endpoint) { return request(endpoint, nullptr); }
  json post(const std::string& endpoint, const json& body) { return request(endpoint, &body); }

 private:
  // Transport failures and 5xx responses are retried; 4xx are not.
  json request(const std::string& endpoint, const json* body) {
    const auto path = prefix_ + endpoint;
    const auto payload = body ? body->dump() : std::string();
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      auto lease = pool_.acquire();
      auto result = body ? (*lease).Post(path, payload, "application/json") : (*lease).Get(path);
      if (!result) {
        last_error = "transport error: " + httplib::to_string(result.error());
        continue;
      }
      const int status = result->status;
      if (status >= 200 && status < 300) {
        auto parsed = json::parse(result->body, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) {
          throw ProtocolError(path + ": response is not a JSON object", result->body);
        }
        return parsed;
      }
      const auto message = path + " returned HTTP " + std::to_string(status) + ": " +
                           error_message(result->body);
      if (status == 422) throw IndexError(message);
      if (status >= 400 && status < 500) throw BackendError(message);
      last_error = message;
    }
    if (last_error.rfind("transport error", 0) == 0) {
      throw ConnectError(config_.base_url + path + ": " + last_error);
    }
    throw BackendError(last_error);
  }

  ServerConfig config_;
  std::string prefix_;
  ClientPool pool_;
};

json token_array(const TokenText& text) { return text.tokens(); }

json text_batch(std::span<const TokenText> texts) {
  json arr = json::array();
  for (const auto& t : texts) arr.push_back(token_array(t));
  return arr;
}

const json& require(const json& j, const char* key, json::value_t type, const std::string& where) {
  if (!j.contains(key)) throw ProtocolError(where + ": missing field '" + key + "'", j.dump());
  const auto& v = j.at(key);
  const bool ok = type == json::value_t::number_float ? v.is_number() : v.type() == type;
  if (!ok) throw ProtocolError(where + ": field '" + key + "' has wrong type", j.dump());
  return v;
}

std::vector<double> number_list(const json& arr, std::size_t expected, const json& whole,
                                const std::string& where) {
  if (!arr.is_array() || arr.size() != expected) {
    throw ProtocolError(where + ": expected " + std::to_string(expected) + " numbers", whole.dump());
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& v : arr) {
    if (!v.is_number()) throw ProtocolError(where + ": non-numeric entry", whole.dump());
    out.push_back(v.get<double>());
  }
  return out;
}

class HttpClassifier final : public ToxicityClassifier {
 public:
  explicit HttpClassifier(std::shared_ptr<Transport> t) : t_(std::move(t)) {}
  std::vector<ToxicityScore> classify(std::span<const TokenText> texts) const override {
    const auto r = t_->post("/classify", {{"texts", text_batch(texts)}});
    const auto& probs = require(r, "probs", json::value_t::array, "classify");
    if (probs.size() != texts.size()) throw ProtocolError("classify: batch size mismatch", r.dump());
    std::vector<ToxicityScore> out;
    out.reserve(texts.size());
    for (const auto& pair : probs) {
      const auto p = number_list(pair, 2, r, "classify");
      try {
        out.push_back(ToxicityScore::from_probs(p[0], p[1]));
      } catch (const std::invalid_argument&) {
        throw ProtocolError("classify: invalid probability pair", r.dump());
      }
    }
    return out;
  }

 private:
  std::shared_ptr<Transport> t_;
};

class HttpInfiller final : public MaskInfiller {
 public:
  explicit HttpInfiller(std::shared_ptr<Transport> t) : t_(std::move(t)) {}
  std::vector<InfillCandidate> fill_mask(const TokenText& text, std::size_t position,
                                         std::size_t k) const override {
    const auto r = t_->post("/fill_mask",
                            {{"tokens", token_array(text)}, {"position", position}, {"top_k", k}});
    const auto& cands = require(r, "candidates", json::value_t::array, "fill_mask");
    std::vector<InfillCandidate> out;
    for (const auto& c : cands) {
      if (!c.is_object()) throw ProtocolError("fill_mask: candidate is not an object", r.dump());
      const auto& token = require(c, "token", json::value_t::string, "fill_mask");
      const auto& score = require(c, "score", json::value_t::number_float, "fill_mask");
      out.push_back({token.get<std::string>(), score.get<double>()});
    }
    return out;
  }

 private:
  std::shared_ptr<Transport> t_;
};

class HttpEmbedder final : public SentenceEmbedder {
 public:
  explicit HttpEmbedder(std::shared_ptr<Transport> t) : t_(std::move(t)) {}
  std::vector<std::vector<double>> embed(std::span<const TokenText> texts) const override {
    const auto r = t_->post("/embed", {{"texts", text_batch(texts)}});
    const auto& vectors = require(r, "vectors", json::value_t::array, "embed");
    if (vectors.size() != texts.size()) throw ProtocolError("embed: batch size mismatch", r.dump());
    std::vector<std::vector<double>> out;
    for (const auto& v : vectors) {
      if (!v.is_array() || v.empty()) throw ProtocolError("embed: bad vector", r.dump());
      out.push_back(number_list(v, v.size(), r, "embed"));
    }
    return out;
  }

 private:
  std::shared_ptr<Transport> t_;
};

class HttpPerplexity final : public PerplexityScorer {
 public:
  explicit HttpPerplexity(std::shared_ptr<Transport> t) : t_(std::move(t)) {}
  std::vector<double> perplexity(std::span<const TokenText> texts) const override {
    const auto r = t_->post("/perplexity", {{"texts", text_batch(texts)}});
    auto values = number_list(require(r, "ppl", json::value_t::array, "perplexity"), texts.size(),
                              r, "perplexity");
    for (const double v : values) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ProtocolError("perplexity: non-positive value", r.dump());
    }
    return values;
  }

 private:
  std::shared_ptr<Transport> t_;
};

class HttpSaliency final : public SaliencyProvider {
 public:
  explicit HttpSaliency(std::shared_ptr<Transport> t) : t_(std::move(t)) {}
  std::vector<double> gradient_saliency(const TokenText& text, double alpha,
                                        const BaselineSpec& baseline) const override {
    json base = baseline.kind == BaselineSpec::Kind::kMask ? json("mask") : json(baseline.tokens);
    const auto r = t_->post("/gradient_saliency",
                            {{"tokens", token_array(text)}, {"alpha", alpha}, {"baseline", base}});
    auto values = number_list(require(r, "saliency", json::value_t::array, "gradient_saliency"),
                              text.size(), r, "gradient_saliency");
    const double total = require(r, "total", json::value_t::number_float, "gradient_saliency").get<double>();
    double sum = 0.0;
    for (const double v : values) sum += v;
    if (std::abs(sum - total) > kTotalTolerance) {
      throw ProtocolError("gradient_saliency: per-word values do not sum to total", r.dump());
    }
    return values;
  }

 private:
  std::shared_ptr<Transport> t_;
};

class HttpAttention final : public AttentionProvider {
 public:
  explicit HttpAttention(std::shared_ptr<Transport> t) : t_(std::move(t)) {}
  std::vector<std::vector<double>> attention_weights(const TokenText& text) const override {
    const auto r = t_->post("/attention", {{"tokens", token_array(text)}});
    const auto& heads = require(r, "heads", json::value_t::array, "attention");
    if (heads.empty()) throw ProtocolError("attention: no heads", r.dump());
    std::vector<std::vector<double>> out;
    for (const auto& row : heads) out.push_back(number_list(row, text.size(), r, "attention"));
    return out;
  }

 private:
  std::shared_ptr<Transport> t_;
};

}  // namespace

void ServerConfig::validate() const {
  static const std::regex kUrl(R"(^http://([A-Za-z0-9.\-]+|\[[0-9A-Fa-f:.]+\])(:[0-9]{1,5})?/?$)");
  if (!std::regex_match(base_url, kUrl)) {
    throw ConfigError("invalid server URL '" + base_url + "' (expected http://host[:port])");
  }
  if (timeout_ms <= 0) throw ConfigError("timeout_ms must be positive");
  if (max_retries < 0) throw ConfigError("max_retries must be non-negative");
  if (pool_size == 0) throw ConfigError("pool_size must be positive");
  if (api_version != "v1") throw ConfigError("unsupported api_version '" + api_version + "'");
}

BackendSuite connect(const ServerConfig& config) {
  config.validate();
  auto normalized = config;
  if (!normalized.base_url.empty() && normalized.base_url.back() == '/') normalized.base_url.pop_back();
  auto transport = std::make_shared<Transport>(normalized);

  const auto caps = transport->get("/capabilities");
  const auto& version = require(caps, "api_version", json::value_t::string, "capabilities");
  if (version.get<std::string>() != config.api_version) {
    throw VersionMismatch("server api_version '" + version.get<std::string>() + "', expected '" +
                          config.api_version + "'");
  }
  std::set<std::string> offered;
  for (const auto& c : require(caps, "capabilities", json::value_t::array, "capabilities")) {
    if (!c.is_string()) throw ProtocolError("capabilities: non-string entry", caps.dump());
    offered.insert(c.get<std::string>());
  }
  for (const char* needed : {"classify", "fill_mask", "embed", "perplexity"}) {
    if (!offered.contains(needed)) {
      throw BackendError(std::string("server lacks mandatory capability '") + needed + "'");
    }
  }

  BackendSuite suite;
  suite.name = "http:" + normalized.base_url;
  if (caps.contains("mask_token") && caps["mask_token"].is_string()) {
    suite.mask_token = caps["mask_token"].get<std::string>();
  }
  suite.classifier = std::make_shared<const HttpClassifier>(transport);
  suite.infiller = std::make_shared<const HttpInfiller>(transport);
  suite.embedder = std::make_shared<const HttpEmbedder>(transport);
  suite.perplexity = std::make_shared<const HttpPerplexity>(transport);
  if (offered.contains("gradient_saliency")) suite.saliency = std::make_shared<const HttpSaliency>(transport);
  if (offered.contains("attention")) suite.attention = std::make_shared<const HttpAttention>(transport);
  return suite;
}

}  // namespace detox::http
