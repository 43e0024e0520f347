#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace termforge {

struct ChatRequest {
    std::string template_id;
    std::string model_id;
    std::vector<std::string> segments;  // rendered prompt parts, in order
    double temperature = 0.0;
    int max_output_tokens = 4096;

    // Content digest of the fully rendered request; the replay cache key.
    std::string digest() const;
};

struct UsageRecord {
    std::string model_id;
    long input_tokens = 0;
    long output_tokens = 0;
    double cost_usd = 0.0;
};

struct ChatResponse {
    std::string text;
    UsageRecord usage;
    bool cache_hit = false;
};

enum class LlmMode { Live, Record, Replay };

LlmMode llm_mode_from_string(const std::string& s);
std::string to_string(LlmMode m);

// Prices per million tokens, keyed by model id.
struct PriceTable {
    struct Price {
        double input_per_million = 0.0;
        double output_per_million = 0.0;
    };
    std::map<std::string, Price> prices;

    bool has(const std::string& model_id) const { return prices.count(model_id) > 0; }
    double cost(const UsageRecord& u) const;  // throws UnknownModelPrice

    // key=value file: "model-id = p_in,p_out" (per million tokens).
    static PriceTable from_file(const std::filesystem::path& p);
};

struct UsageTotals {
    long input_tokens = 0;
    long output_tokens = 0;
    double cost_usd = 0.0;
};

UsageTotals account(std::span<const UsageRecord> usages, const PriceTable& prices);

class Provider {
  public:
    virtual ~Provider() = default;
    virtual std::string name() const = 0;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// Deterministic in-process provider used to author replay fixtures and run
// the pipeline hermetically. Responses are pure functions of the request.
std::shared_ptr<Provider> make_stub_provider();

// OpenAI-compatible chat completions endpoint; base URL and key from
// TERMFORGE_LLM_BASE_URL / TERMFORGE_LLM_API_KEY.
std::shared_ptr<Provider> make_http_provider();

class LlmGateway {
  public:
    LlmGateway(std::shared_ptr<Provider> provider, std::filesystem::path cache_dir, LlmMode mode,
               PriceTable prices = {});

    ChatResponse complete(const ChatRequest& request);

    // Writes a cache entry directly; the way tests pin replay fixtures.
    void store_fixture(const ChatRequest& request, const std::string& text, long input_tokens = 0,
                       long output_tokens = 0);

    LlmMode mode() const { return mode_; }
    int provider_calls() const { return provider_calls_.load(); }
    int complete_calls() const { return complete_calls_.load(); }
    const std::filesystem::path& cache_dir() const { return cache_dir_; }

  private:
    std::filesystem::path cache_path(const std::string& digest) const;

    std::shared_ptr<Provider> provider_;
    std::filesystem::path cache_dir_;
    LlmMode mode_;
    PriceTable prices_;
    std::atomic<int> provider_calls_{0};
    std::atomic<int> complete_calls_{0};
};

}  // namespace termforge
