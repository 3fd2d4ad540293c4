#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "atars/corpus.hpp"

namespace atars::gateway {

struct GenerationRequest {
  std::string prompt;  // non-empty
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dimension() const { return values.size(); }
  double norm() const;
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class TextGenBackend {
 public:
  virtual ~TextGenBackend() = default;
  virtual std::string generate(const GenerationRequest& req) = 0;
  virtual std::string id() const = 0;
};

class EmbedBackend {
 public:
  virtual ~EmbedBackend() = default;
  virtual EmbeddingVector embed(std::string_view text) = 0;  // unit-normalized
  virtual std::string id() const = 0;
};

// Table-driven mock keyed by sha256(prompt); also the replay half of the
// record/replay cassette format.
class ScriptedTextBackend : public TextGenBackend {
 public:
  ScriptedTextBackend() = default;
  void add(std::string_view prompt, std::string response);
  void add_by_hash(std::string prompt_sha256, std::string response);
  static ScriptedTextBackend from_cassette(const std::filesystem::path& file);
  void save_cassette(const std::filesystem::path& file) const;

  std::string generate(const GenerationRequest& req) override;
  std::string id() const override;
  std::size_t size() const { return responses_.size(); }

 private:
  std::map<std::string, std::string> responses_;  // sha256 -> response
};

// Deterministic pseudo-text for arbitrary prompts; output depends only on
// (prompt, seed).
class HashTextBackend : public TextGenBackend {
 public:
  explicit HashTextBackend(std::uint64_t seed) : seed_(seed) {}
  std::string generate(const GenerationRequest& req) override;
  std::string id() const override { return "hash:" + std::to_string(seed_); }

 private:
  std::uint64_t seed_;
};

// Deterministic unit vectors from hashed word features.
class HashEmbedBackend : public EmbedBackend {
 public:
  explicit HashEmbedBackend(std::uint64_t seed, std::size_t dim = 64) : seed_(seed), dim_(dim) {}
  EmbeddingVector embed(std::string_view text) override;
  std::string id() const override;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

// Table-driven embeddings for tests with hand-set vectors; inputs are
// normalized on insertion.
class ScriptedEmbedBackend : public EmbedBackend {
 public:
  void add(std::string_view text, std::vector<double> values);
  EmbeddingVector embed(std::string_view text) override;
  std::string id() const override { return "scripted-embed"; }

 private:
  std::map<std::string, EmbeddingVector> vectors_;
};

struct LiveBackendConfig {
  std::string endpoint;              // e.g. https://api.example.com
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "ATARS_API_KEY";
  int timeout_seconds = 60;
  int max_retries = 1;  // one bounded retry on rate limiting
};

// Chat-completion client. Retries once with backoff on HTTP 429; mocks
// never retry.
class LiveTextBackend : public TextGenBackend {
 public:
  explicit LiveTextBackend(LiveBackendConfig config);
  std::string generate(const GenerationRequest& req) override;
  std::string id() const override { return "live:" + config_.model; }

 private:
  LiveBackendConfig config_;
  std::string api_key_;
};

// Shared entry point that enforces the max in-flight request cap.
class Gateway {
 public:
  Gateway(std::shared_ptr<TextGenBackend> text, std::shared_ptr<EmbedBackend> embed,
          int max_inflight = 1);

  std::string generate(const GenerationRequest& req);
  EmbeddingVector embed(std::string_view text);

  TextGenBackend& text_backend() { return *text_; }
  EmbedBackend& embed_backend() { return *embed_; }
  int max_inflight() const { return max_inflight_; }
  std::string text_backend_id() const { return text_->id(); }

 private:
  struct Limiter;
  std::shared_ptr<TextGenBackend> text_;
  std::shared_ptr<EmbedBackend> embed_;
  int max_inflight_;
  std::shared_ptr<Limiter> limiter_;
};

enum class PromptFamily { Step1Reformulate, Step2Extract, UtilityClassify, ProfileGenerate };

std::string to_string(PromptFamily f);
PromptFamily prompt_family_from_string(std::string_view s);

// Example slot capacity: 3 for Step1, 8 for Step2, 4 for UtilityClassify,
// 9 for ProfileGenerate.
std::size_t example_capacity(PromptFamily f);

// One in-context example; which fields apply depends on the family.
struct PromptExample {
  // Step1Reformulate / Step2Extract
  std::string input;
  std::string output;
  // UtilityClassify
  std::string profile;
  std::string sentence;
  std::string explanation;
  // ProfileGenerate
  std::string topics;
  std::string rationale;
  std::string biography;
};

struct PromptTemplate {
  PromptFamily family = PromptFamily::Step1Reformulate;
  corpus::Domain domain = corpus::Domain::Restaurants;
  std::string instruction_text;          // rendered first, byte-exact
  std::string query_format;              // closing block with {placeholders}
  std::vector<PromptExample> examples;   // the fixed ICL set for this family
};

// Reads instructions.txt, query.txt and examples/*.txt from
// <root>/<family>/<domain>/. Validates the example count against the
// family capacity.
PromptTemplate load_template(const std::filesystem::path& fixtures_root, PromptFamily family,
                             corpus::Domain domain);

// Final-query slot values; unused fields may stay empty.
struct SlotValues {
  std::string review;
  std::string sentence;
  std::string profile;
  std::string topics;
};

// Byte-deterministic rendering: instructions, then the example blocks in
// order, then the closing query. examples must be empty (zero-shot) or
// exactly the family capacity.
std::string render_prompt(const PromptTemplate& tpl, const std::vector<PromptExample>& examples,
                          const SlotValues& slots);

// Convenience: render with the template's own fixed example set.
std::string render_prompt_fixed(const PromptTemplate& tpl, const SlotValues& slots);
std::string render_prompt_zero_shot(const PromptTemplate& tpl, const SlotValues& slots);

// Step 1 output: the completion split into aspect sentences.
std::vector<std::string> parse_step1(std::string_view response);

struct Step2Result {
  bool positive = false;
  std::vector<std::string> aspects;  // empty iff negative
};

// Step 2 output: lenient about surrounding prose, strict about the
// <pos>/<neg> tags and the <None> marker.
Step2Result parse_step2(std::string_view response);

struct UtilityResult {
  std::string aspect;
  corpus::UtilityLevel label = corpus::UtilityLevel::None;
  std::string explanation;  // retained as metadata, never interpreted
};

// Parses the A' = [("<aspect>", "<label>")] line of a utility response.
UtilityResult parse_utility(std::string_view response);

}  // namespace atars::gateway
