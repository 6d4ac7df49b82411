#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vlcount {

/// Hand-written caption templates; "{}" marks where the category name goes.
/// The numbered-count variant ("A photo of {number} ...") is omitted because
/// per-category prompts have no count to substitute.
inline const std::vector<std::string>& default_templates() {
  static const std::vector<std::string> t = {
      "A photo of a {}.",
      "A bad photo of a {}.",
      "A photo of many {}.",
      "A low resolution photo of the {}.",
      "A photo of a hard to see {}.",
      "A cropped photo of a {}.",
      "A blurry photo of a {}.",
      "A good photo of a {}.",
  };
  return t;
}

/// Questions sent to a language model to elicit category descriptions; the
/// "within 20 words" suffixes keep answers short for low-detail objects.
inline const std::vector<std::string>& default_llm_queries() {
  static const std::vector<std::string> q = {
      "Describe what a {} looks like?",
      "How can you identify a {}?",
      "Describe what a {} in a distance look like within 20 words.",
      "Describe what a {} in a low resolution photo look like within 20 words.",
  };
  return q;
}

/// Substitutes the category for the single "{}" placeholder, verbatim.
inline std::string fill_one(const std::string& templ, const std::string& category) {
  auto pos = templ.find("{}");
  if (pos == std::string::npos) {
    throw std::invalid_argument("template \"" + templ + "\" has no {} placeholder");
  }
  if (templ.find("{}", pos + 2) != std::string::npos) {
    throw std::invalid_argument("template \"" + templ + "\" has more than one {} placeholder");
  }
  return templ.substr(0, pos) + category + templ.substr(pos + 2);
}

inline std::vector<std::string> fill_templates(const std::string& category,
                                               const std::vector<std::string>& templates) {
  std::vector<std::string> out;
  out.reserve(templates.size());
  for (const std::string& t : templates) out.push_back(fill_one(t, category));
  return out;
}

/// Rewrites a template for category-name-free operation: the placeholder and
/// its leading article become "the category of the most numerous objects in
/// the image" (capitalized when it opens the sentence).
inline std::string fill_name_free(const std::string& templ) {
  auto pos = templ.find("{}");
  if (pos == std::string::npos) {
    throw std::invalid_argument("template \"" + templ + "\" has no {} placeholder");
  }
  size_t start = pos;
  // Swallow a preceding article so "a {}" reads "the category ...".
  for (const char* article : {"a ", "an ", "the ", "A ", "An ", "The "}) {
    size_t len = std::string(article).size();
    if (pos >= len && templ.compare(pos - len, len, article) == 0) {
      size_t cand = pos - len;
      if (cand == 0 || templ[cand - 1] == ' ') {
        start = cand;
        break;
      }
    }
  }
  std::string phrase = "the category of the most numerous objects in the image";
  if (start == 0) phrase[0] = 'T';
  return templ.substr(0, start) + phrase + templ.substr(pos + 2);
}

/// On-disk prompt cache: JSON object category -> query -> response. Reads
/// may run concurrently; all mutation funnels through one mutex.
class PromptCache {
 public:
  static PromptCache load(const std::string& path) {
    PromptCache cache;
    cache.path_ = path;
    std::ifstream f(path);
    if (!f) return cache;  // absent file = empty cache
    nlohmann::json j;
    try {
      f >> j;
    } catch (const std::exception& e) {
      throw std::runtime_error("prompt cache " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) {
      throw std::runtime_error("prompt cache " + path + " must be a JSON object");
    }
    for (auto& [cat, queries] : j.items()) {
      if (!queries.is_object()) {
        throw std::runtime_error("prompt cache " + path + ": entry for \"" + cat +
                                 "\" must map queries to responses");
      }
      for (auto& [q, r] : queries.items()) {
        if (!r.is_string()) {
          throw std::runtime_error("prompt cache " + path + ": response for (\"" + cat +
                                   "\", \"" + q + "\") must be a string");
        }
        cache.entries_[cat][q] = r.get<std::string>();
      }
    }
    return cache;
  }

  std::optional<std::string> lookup(const std::string& category,
                                    const std::string& query) const {
    auto cat = entries_.find(category);
    if (cat == entries_.end()) return std::nullopt;
    auto q = cat->second.find(query);
    if (q == cat->second.end()) return std::nullopt;
    return q->second;
  }

  void store(const std::string& category, const std::string& query,
             const std::string& response) {
    std::lock_guard<std::mutex> lock(*write_mutex_);
    entries_[category][query] = response;
  }

  void save(const std::string& path) const {
    std::lock_guard<std::mutex> lock(*write_mutex_);
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [cat, queries] : entries_) {
      nlohmann::ordered_json qj = nlohmann::ordered_json::object();
      for (const auto& [q, r] : queries) qj[q] = r;
      j[cat] = std::move(qj);
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write prompt cache " + path);
    f << j.dump(2) << "\n";
  }

  void save() const {
    if (path_.empty()) throw std::runtime_error("prompt cache has no backing path");
    save(path_);
  }

  size_t size() const {
    size_t n = 0;
    for (const auto& [cat, queries] : entries_) n += queries.size();
    return n;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> entries_;
  std::string path_;
  // Shared handle keeps the cache movable while still serializing writers.
  std::shared_ptr<std::mutex> write_mutex_ = std::make_shared<std::mutex>();
};

/// A language-model endpoint. complete() returns the response or nullopt if
/// the backend is unreachable; callers then fall back to the cache.
class LLMClient {
 public:
  virtual ~LLMClient() = default;
  virtual std::optional<std::string> complete(const std::string& category,
                                              const std::string& query) = 0;
  virtual std::string name() const = 0;
};

/// HTTP client stub for a live language-model endpoint. POSTs
/// {"category":..., "prompt":...} to `path` on `host:port` and expects
/// {"response": "..."} back. Ships as an integration point; the test suite
/// never talks to a network, so point it at your own service before use.
class HttpLLMClient : public LLMClient {
 public:
  HttpLLMClient(std::string host, int port, std::string path = "/complete")
      : host_(std::move(host)), port_(port), path_(std::move(path)) {}

  std::optional<std::string> complete(const std::string& category,
                                      const std::string& query) override;
  std::string name() const override { return "http:" + host_; }

 private:
  std::string host_;
  int port_;
  std::string path_;
};

struct PromptSet {
  std::string category;
  std::vector<std::string> prompts;
};

/// Deterministic fixture response for synthetic-benchmark categories. This
/// is NOT a language model: it composes a formulaic description so the
/// benchmark can run fully offline. Real deployments populate the cache from
/// an actual endpoint instead.
inline std::string synthesize_fixture_response(const std::string& category,
                                               const std::string& query) {
  auto space = category.find(' ');
  std::string color = space == std::string::npos ? category : category.substr(0, space);
  std::string shape = space == std::string::npos ? "object" : category.substr(space + 1);
  std::string base = "A " + category + " is a flat " + shape + "-shaped marker with a uniform " +
                     color + " surface and sharp edges";
  if (query.find("identify") != std::string::npos) {
    return "You can identify a " + category + " by its " + color + " color and its " +
           shape + " outline against the background.";
  }
  if (query.find("distance") != std::string::npos) {
    return base + "; from a distance it reads as a small " + color + " blob.";
  }
  if (query.find("low resolution") != std::string::npos) {
    return base + "; at low resolution only the " + color + " tint remains visible.";
  }
  return base + ".";
}

/// Builds per-category prompt sets: filled templates plus one cached (or
/// freshly fetched) response per language-model query.
class PromptBank {
 public:
  PromptBank(std::vector<std::string> templates, std::vector<std::string> llm_queries,
             std::shared_ptr<PromptCache> cache,
             std::shared_ptr<LLMClient> live = nullptr, bool name_free = false)
      : templates_(std::move(templates)),
        llm_queries_(std::move(llm_queries)),
        cache_(std::move(cache)),
        live_(std::move(live)),
        name_free_(name_free) {
    if (!cache_) throw std::invalid_argument("prompt bank needs a cache");
    // Surface malformed templates at construction, not mid-training.
    for (const std::string& t : templates_) (void)fill_one(t, "x");
    for (const std::string& q : llm_queries_) (void)fill_one(q, "x");
  }

  static PromptBank with_defaults(std::shared_ptr<PromptCache> cache,
                                  bool name_free = false) {
    return PromptBank(default_templates(), default_llm_queries(), std::move(cache),
                      nullptr, name_free);
  }

  PromptSet build(const std::string& category) const {
    PromptSet set;
    set.category = category;
    for (const std::string& t : templates_) set.prompts.push_back(fill(t, category));

    std::vector<std::pair<std::string, std::string>> missing;
    for (const std::string& q : llm_queries_) {
      std::string filled = fill(q, category);
      std::optional<std::string> response;
      if (live_) {
        response = live_->complete(category, filled);
        if (response) cache_->store(category, filled, *response);
      }
      if (!response) response = cache_->lookup(category, filled);
      if (!response) {
        missing.emplace_back(category, filled);
        continue;
      }
      set.prompts.push_back(*response);
    }
    if (!missing.empty()) {
      std::string msg = "prompt cache is missing responses for:";
      for (const auto& [c, q] : missing) msg += "\n  (\"" + c + "\", \"" + q + "\")";
      msg += "\nrun build-prompts (or point a live endpoint) first";
      throw std::runtime_error(msg);
    }
    return set;
  }

  /// Fills the cache for every category using the offline fixture generator.
  void populate_fixtures(const std::vector<std::string>& categories) const {
    for (const std::string& c : categories) {
      for (const std::string& q : llm_queries_) {
        std::string filled = fill(q, c);
        if (!cache_->lookup(c, filled)) {
          cache_->store(c, filled, synthesize_fixture_response(c, filled));
        }
      }
    }
  }

  const std::vector<std::string>& templates() const { return templates_; }
  const std::vector<std::string>& llm_queries() const { return llm_queries_; }
  bool name_free() const { return name_free_; }
  PromptCache& cache() { return *cache_; }

 private:
  std::string fill(const std::string& templ, const std::string& category) const {
    return name_free_ ? fill_name_free(templ) : fill_one(templ, category);
  }

  std::vector<std::string> templates_;
  std::vector<std::string> llm_queries_;
  std::shared_ptr<PromptCache> cache_;
  std::shared_ptr<LLMClient> live_;
  bool name_free_;
};

}  // namespace vlcount

// The HTTP implementation lives out of line so that translation units that
// never configure a live endpoint don't pay for the header-only HTTP stack.
#ifdef VLCOUNT_ENABLE_HTTP_LLM
#include <httplib.h>

namespace vlcount {
inline std::optional<std::string> HttpLLMClient::complete(const std::string& category,
                                                          const std::string& query) {
  try {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(5);
    nlohmann::json body = {{"category", category}, {"prompt", query}};
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res || res->status != 200) return std::nullopt;
    nlohmann::json j = nlohmann::json::parse(res->body);
    if (!j.contains("response") || !j["response"].is_string()) return std::nullopt;
    return j["response"].get<std::string>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}
}  // namespace vlcount
#else
namespace vlcount {
inline std::optional<std::string> HttpLLMClient::complete(const std::string&,
                                                          const std::string&) {
  // Built without VLCOUNT_ENABLE_HTTP_LLM: behave as an unreachable
  // endpoint so callers fall back to the cache.
  return std::nullopt;
}
}  // namespace vlcount
#endif
