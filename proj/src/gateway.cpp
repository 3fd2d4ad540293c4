#include "atars/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include "atars/errors.hpp"
#include "atars/jsonl.hpp"
#include "atars/text.hpp"

namespace atars::gateway {

using jsonl::json;

double EmbeddingVector::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension())
    throw DomainError("embedding dimensions differ (" + std::to_string(a.dimension()) + " vs " +
                      std::to_string(b.dimension()) + ")");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
  double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine of zero-norm embedding");
  return dot / (na * nb);
}

namespace {

void check_request(const GenerationRequest& req) {
  if (req.prompt.empty()) throw EmptyText("empty prompt");
  if (req.temperature < 0.0) throw DomainError("negative temperature");
  if (req.max_tokens <= 0) throw DomainError("max_tokens must be positive");
}

EmbeddingVector normalized(std::vector<double> values) {
  EmbeddingVector v{std::move(values)};
  double n = v.norm();
  if (n == 0.0) throw DomainError("zero-norm embedding");
  for (double& x : v.values) x /= n;
  return v;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ull ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

void ScriptedTextBackend::add(std::string_view prompt, std::string response) {
  responses_[text::sha256_hex(prompt)] = std::move(response);
}

void ScriptedTextBackend::add_by_hash(std::string prompt_sha256, std::string response) {
  responses_[std::move(prompt_sha256)] = std::move(response);
}

ScriptedTextBackend ScriptedTextBackend::from_cassette(const std::filesystem::path& file) {
  ScriptedTextBackend backend;
  jsonl::for_each_record(file, [&](const json& rec, int lineno) {
    const std::string ctx = file.filename().string() + ":" + std::to_string(lineno);
    backend.add_by_hash(jsonl::require_field<std::string>(rec, "prompt_sha256", ctx),
                        jsonl::require_field<std::string>(rec, "response", ctx));
  });
  return backend;
}

void ScriptedTextBackend::save_cassette(const std::filesystem::path& file) const {
  jsonl::Writer out(file);
  for (const auto& [hash, response] : responses_)
    out.write(json{{"prompt_sha256", hash}, {"response", response}});
}

std::string ScriptedTextBackend::generate(const GenerationRequest& req) {
  check_request(req);
  auto it = responses_.find(text::sha256_hex(req.prompt));
  if (it == responses_.end())
    throw BackendUnavailable("no scripted response for prompt sha256 " +
                             text::sha256_hex(req.prompt).substr(0, 12));
  return it->second;
}

std::string ScriptedTextBackend::id() const {
  std::string all;
  for (const auto& [hash, response] : responses_) all += hash;
  return "scripted:" + text::sha256_hex(all).substr(0, 12);
}

std::string HashTextBackend::generate(const GenerationRequest& req) {
  check_request(req);
  static const char* kWords[] = {"garden",  "mural",   "arcade",  "terrace", "aquarium", "library",
                                 "gallery", "fountain", "stage",  "greenhouse", "organ", "telescope",
                                 "orchard", "pond",    "workshop", "carousel"};
  constexpr std::size_t kWordCount = sizeof(kWords) / sizeof(kWords[0]);
  std::uint64_t state = fnv1a64(req.prompt, seed_);
  std::size_t n = 2 + splitmix64(state) % 3;
  std::ostringstream out;
  out << "The place has";
  for (std::size_t i = 0; i < n; ++i) {
    out << (i == 0 ? " " : i + 1 == n ? " and " : ", ");
    out << kWords[splitmix64(state) % kWordCount];
  }
  out << ".";
  return out.str();
}

EmbeddingVector HashEmbedBackend::embed(std::string_view raw) {
  std::string t = text::trim(raw);
  if (t.empty()) throw EmptyText("cannot embed empty text");
  std::vector<double> values(dim_, 0.0);
  std::vector<std::string> words = text::tokenize_words(t);
  auto bump = [&](std::string_view feature) {
    std::uint64_t h = fnv1a64(feature, seed_);
    values[h % dim_] += (h >> 32) % 2 ? 1.0 : -1.0;
  };
  for (std::size_t i = 0; i < words.size(); ++i) {
    bump(words[i]);
    if (i + 1 < words.size()) bump(words[i] + " " + words[i + 1]);
  }
  // tiny full-text component so no input hashes to the zero vector
  std::uint64_t h = fnv1a64(t, seed_ ^ 0x5bd1e995u);
  values[h % dim_] += ((h >> 32) % 2 ? 1.0 : -1.0) * 0.25;
  values[(h >> 7) % dim_] += 0.125;
  return normalized(std::move(values));
}

std::string HashEmbedBackend::id() const {
  return "hash-embed:" + std::to_string(seed_) + ":" + std::to_string(dim_);
}

void ScriptedEmbedBackend::add(std::string_view key, std::vector<double> values) {
  vectors_[std::string(key)] = normalized(std::move(values));
}

EmbeddingVector ScriptedEmbedBackend::embed(std::string_view key) {
  if (text::trim(key).empty()) throw EmptyText("cannot embed empty text");
  auto it = vectors_.find(std::string(key));
  if (it == vectors_.end())
    throw BackendUnavailable("no scripted embedding for \"" + std::string(key) + "\"");
  return it->second;
}

LiveTextBackend::LiveTextBackend(LiveBackendConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ConfigError("live backend requires an endpoint URL");
  if (config_.model.empty()) throw ConfigError("live backend requires a model name");
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (!key || !*key)
    throw ConfigError("API key environment variable " + config_.api_key_env + " is not set");
  api_key_ = key;
}

Gateway::Gateway(std::shared_ptr<TextGenBackend> text, std::shared_ptr<EmbedBackend> embed,
                 int max_inflight)
    : text_(std::move(text)), embed_(std::move(embed)), max_inflight_(max_inflight) {
  if (max_inflight_ < 1) throw ConfigError("max_inflight must be >= 1");
  limiter_ = std::make_shared<Limiter>();
}

struct Gateway::Limiter {
  std::mutex mutex;
  std::condition_variable cv;
  int inflight = 0;

  struct Slot {
    Limiter& limiter;
    ~Slot() {
      {
        std::lock_guard<std::mutex> lock(limiter.mutex);
        --limiter.inflight;
      }
      limiter.cv.notify_one();
    }
  };

  Slot acquire(int cap) {
    std::unique_lock<std::mutex> lock(mutex);
    cv.wait(lock, [&] { return inflight < cap; });
    ++inflight;
    return Slot{*this};
  }
};

std::string Gateway::generate(const GenerationRequest& req) {
  auto slot = limiter_->acquire(max_inflight_);
  return text_->generate(req);
}

EmbeddingVector Gateway::embed(std::string_view t) {
  auto slot = limiter_->acquire(max_inflight_);
  return embed_->embed(t);
}

std::string to_string(PromptFamily f) {
  switch (f) {
    case PromptFamily::Step1Reformulate: return "step1_reformulate";
    case PromptFamily::Step2Extract: return "step2_extract";
    case PromptFamily::UtilityClassify: return "utility_classify";
    case PromptFamily::ProfileGenerate: return "profile_generate";
  }
  return "step1_reformulate";
}

PromptFamily prompt_family_from_string(std::string_view s) {
  std::string k = text::casefold(s);
  if (k == "step1_reformulate") return PromptFamily::Step1Reformulate;
  if (k == "step2_extract") return PromptFamily::Step2Extract;
  if (k == "utility_classify") return PromptFamily::UtilityClassify;
  if (k == "profile_generate") return PromptFamily::ProfileGenerate;
  throw ConfigError("unknown prompt family \"" + std::string(s) + "\"");
}

std::size_t example_capacity(PromptFamily f) {
  switch (f) {
    case PromptFamily::Step1Reformulate: return 3;
    case PromptFamily::Step2Extract: return 8;
    case PromptFamily::UtilityClassify: return 4;
    case PromptFamily::ProfileGenerate: return 9;
  }
  return 0;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("missing prompt fixture " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Example fixture format: "<<<field>>>" markers, one per line, each
// followed by the field's text.
std::map<std::string, std::string> parse_example_file(const std::filesystem::path& p) {
  std::map<std::string, std::string> fields;
  std::istringstream in(read_file(p));
  std::string line, current;
  std::ostringstream value;
  auto flush = [&] {
    if (!current.empty()) fields[current] = text::trim(value.str());
    value.str("");
    value.clear();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() > 6 && line.rfind("<<<", 0) == 0 && line.substr(line.size() - 3) == ">>>") {
      flush();
      current = line.substr(3, line.size() - 6);
    } else if (!current.empty()) {
      value << line << "\n";
    }
  }
  flush();
  return fields;
}

std::string require_example_field(const std::map<std::string, std::string>& fields,
                                  const std::string& name, const std::filesystem::path& p) {
  auto it = fields.find(name);
  if (it == fields.end() || it->second.empty())
    throw SlotMismatch("example fixture " + p.string() + " lacks <<<" + name + ">>>");
  return it->second;
}

}  // namespace

PromptTemplate load_template(const std::filesystem::path& fixtures_root, PromptFamily family,
                             corpus::Domain domain) {
  std::filesystem::path dir = fixtures_root / to_string(family) / corpus::to_string(domain);
  PromptTemplate tpl;
  tpl.family = family;
  tpl.domain = domain;
  tpl.instruction_text = text::trim(read_file(dir / "instructions.txt"));
  tpl.query_format = text::trim(read_file(dir / "query.txt"));

  std::vector<std::filesystem::path> files;
  std::filesystem::path exdir = dir / "examples";
  if (std::filesystem::exists(exdir))
    for (const auto& entry : std::filesystem::directory_iterator(exdir))
      if (entry.path().extension() == ".txt") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  for (const auto& file : files) {
    auto fields = parse_example_file(file);
    PromptExample ex;
    switch (family) {
      case PromptFamily::Step1Reformulate:
      case PromptFamily::Step2Extract:
        ex.input = require_example_field(fields, "input", file);
        ex.output = require_example_field(fields, "output", file);
        break;
      case PromptFamily::UtilityClassify:
        ex.profile = require_example_field(fields, "profile", file);
        ex.sentence = require_example_field(fields, "sentence", file);
        ex.output = require_example_field(fields, "output", file);
        ex.explanation = require_example_field(fields, "explanation", file);
        break;
      case PromptFamily::ProfileGenerate:
        ex.topics = require_example_field(fields, "topics", file);
        ex.rationale = require_example_field(fields, "rationale", file);
        ex.biography = require_example_field(fields, "biography", file);
        break;
    }
    tpl.examples.push_back(std::move(ex));
  }

  if (tpl.examples.size() != example_capacity(family))
    throw SlotMismatch(to_string(family) + "/" + corpus::to_string(domain) + " has " +
                       std::to_string(tpl.examples.size()) + " examples, want " +
                       std::to_string(example_capacity(family)));
  return tpl;
}

namespace {

std::string example_block(PromptFamily family, std::size_t index, const PromptExample& ex) {
  const std::string n = std::to_string(index + 1);
  std::ostringstream out;
  switch (family) {
    case PromptFamily::Step1Reformulate:
      if (ex.input.empty() || ex.output.empty())
        throw SlotMismatch("step1 example " + n + " needs input and output");
      out << "Example " << n << ": " << ex.input << "\n\nOutput " << n << ": " << ex.output;
      break;
    case PromptFamily::Step2Extract:
      if (ex.input.empty() || ex.output.empty())
        throw SlotMismatch("step2 example " + n + " needs input and output");
      out << "Example " << n << ": " << ex.input << "\n" << ex.output;
      break;
    case PromptFamily::UtilityClassify:
      if (ex.profile.empty() || ex.sentence.empty() || ex.output.empty())
        throw SlotMismatch("utility example " + n + " needs profile, sentence and output");
      out << "Example " << n << ":\nU: " << ex.profile << "\nR: " << ex.sentence
          << "\nOutput: " << ex.output;
      if (!ex.explanation.empty()) out << "\nExplanation: " << ex.explanation;
      break;
    case PromptFamily::ProfileGenerate:
      if (ex.topics.empty() || ex.biography.empty())
        throw SlotMismatch("profile example " + n + " needs topics and biography");
      out << "Example " << n << ": The given topics are <" << ex.topics << ">\n"
          << "Let's think step by step: " << ex.rationale << "\n"
          << "So, a good biography would be: " << ex.biography;
      break;
  }
  return out.str();
}

}  // namespace

std::string render_prompt(const PromptTemplate& tpl, const std::vector<PromptExample>& examples,
                          const SlotValues& slots) {
  if (!examples.empty() && examples.size() != example_capacity(tpl.family))
    throw SlotMismatch(to_string(tpl.family) + " takes 0 or " +
                       std::to_string(example_capacity(tpl.family)) + " examples, got " +
                       std::to_string(examples.size()));
  std::ostringstream out;
  out << tpl.instruction_text << "\n\n";
  for (std::size_t i = 0; i < examples.size(); ++i)
    out << example_block(tpl.family, i, examples[i]) << "\n\n";
  out << text::substitute_placeholders(tpl.query_format, {{"review", slots.review},
                                                          {"sentence", slots.sentence},
                                                          {"profile", slots.profile},
                                                          {"topics", slots.topics}});
  return out.str();
}

std::string render_prompt_fixed(const PromptTemplate& tpl, const SlotValues& slots) {
  return render_prompt(tpl, tpl.examples, slots);
}

std::string render_prompt_zero_shot(const PromptTemplate& tpl, const SlotValues& slots) {
  return render_prompt(tpl, {}, slots);
}

std::vector<std::string> parse_step1(std::string_view response) {
  if (text::trim(response).empty()) throw EmptyOutput("step 1 returned no text");
  std::vector<std::string> sentences = text::split_sentences(response);
  if (sentences.empty()) throw EmptyOutput("step 1 returned no sentences");
  return sentences;
}

namespace {

constexpr std::string_view kAspectsLabel = "atypical aspects";

std::string rest_of_line(std::string_view s, std::size_t from) {
  std::size_t end = s.find('\n', from);
  if (end == std::string_view::npos) end = s.size();
  return std::string(s.substr(from, end - from));
}

}  // namespace

Step2Result parse_step2(std::string_view response) {
  const std::string folded = text::casefold(response);
  std::size_t pos_tag = folded.find("<pos>");
  std::size_t neg_tag = folded.find("<neg>");
  if (pos_tag == std::string::npos && neg_tag == std::string::npos)
    throw UnparseableResponse("no <pos>/<neg> tag in step 2 response");

  Step2Result result;
  result.positive = pos_tag != std::string::npos &&
                    (neg_tag == std::string::npos || pos_tag < neg_tag);
  std::size_t tag_end = (result.positive ? pos_tag : neg_tag) + 5;

  std::string aspect_text;
  std::size_t label = folded.find(kAspectsLabel, tag_end);
  if (label != std::string::npos) {
    std::size_t start = label + kAspectsLabel.size();
    if (start < response.size() && response[start] == ':') ++start;
    aspect_text = rest_of_line(response, start);
  } else {
    aspect_text = rest_of_line(response, tag_end);
  }
  aspect_text = text::trim(aspect_text);

  const bool has_none_marker = text::casefold(aspect_text).find("<none>") != std::string::npos;
  if (result.positive) {
    if (has_none_marker)
      throw InconsistentResponse("positive classification with <None> aspect list");
    std::istringstream in(aspect_text);
    std::string part;
    while (std::getline(in, part, ',')) {
      std::string aspect = text::trim(part);
      if (!aspect.empty()) result.aspects.push_back(aspect);
    }
    if (result.aspects.empty())
      throw InconsistentResponse("positive classification without any aspect");
  } else {
    if (!aspect_text.empty() && !has_none_marker)
      throw InconsistentResponse("negative classification lists aspects: \"" + aspect_text + "\"");
  }
  return result;
}

UtilityResult parse_utility(std::string_view response) {
  static const std::regex kPair(
      R"re(A'\s*=\s*\[?\s*\(\s*"([^"]*)"\s*,\s*"([^"]*)"\s*\)\s*\]?)re");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(response.begin(), response.end(), m, kPair))
    throw UnparseableResponse("no A' = [(\"<aspect>\", \"<label>\")] pair in utility response");

  UtilityResult result;
  result.aspect = text::trim(m[1].str());
  if (result.aspect.empty()) throw UnparseableResponse("empty aspect in utility response");
  result.label = corpus::utility_from_string(m[2].str());

  const std::string folded = text::casefold(response);
  std::size_t expl = folded.find("explanation", static_cast<std::size_t>(m.position(0)));
  if (expl != std::string::npos) {
    std::size_t start = expl + std::string_view("explanation").size();
    while (start < response.size() &&
           (response[start] == ' ' || response[start] == ':' || response[start] == '='))
      ++start;
    result.explanation = text::trim(response.substr(start));
  }
  return result;
}

}  // namespace atars::gateway
