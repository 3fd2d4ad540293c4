#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "atars/corpus.hpp"
#include "atars/gateway.hpp"

namespace atars::extraction {

struct AspectSentence {
  std::string review_id;
  int index = 0;  // position within the review, 0-based
  std::string text;
  std::optional<bool> gold_positive;
  std::vector<std::string> gold_aspects;
};

// Lexicographic (review_id, index) identity used for retrieval tie-breaks.
bool sentence_id_less(const AspectSentence& a, const AspectSentence& b);

enum class Mode { ZeroShot, Fixed8, Dynamic8 };
std::string to_string(Mode m);
Mode extraction_mode_from_string(std::string_view s);

struct ExtractionConfig {
  Mode mode = Mode::Dynamic8;
  int positives_k = 4;
  int negatives_k = 4;
  std::set<corpus::AspectLayer> layers{corpus::AspectLayer::Primary};
};

struct BankEntry {
  AspectSentence sentence;  // gold_positive must be set
  std::string item_id;      // the leave-one-group-out group
  gateway::EmbeddingVector embedding;
};

// Labeled sentences with embeddings and item groups; immutable once built.
class ExampleBank {
 public:
  void add(BankEntry entry);  // validates label + embedding + group present
  const std::vector<BankEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<BankEntry> entries_;
};

// Reads sentences.jsonl ({"review_id","index","text","gold_positive",
// "gold_aspects","item_id"}) and embeds each sentence.
ExampleBank load_example_bank(const std::filesystem::path& sentences_jsonl,
                              gateway::Gateway& gateway);

// Derives a sentence-level gold label from gold aspect spans: positive iff
// the sentence contains at least one gold aspect of an enabled layer.
bool sentence_has_gold_aspect(std::string_view sentence_text,
                              const std::vector<corpus::AtypicalAspect>& review_aspects,
                              const std::set<corpus::AspectLayer>& layers);

// Top-k positive and top-k negative bank sentences by embedding cosine,
// excluding every sentence from the target's item group. Returned order:
// positives then negatives, each by descending similarity, ties broken by
// (review_id, index).
std::vector<const BankEntry*> select_dynamic_examples(const std::string& target_item_id,
                                                      const gateway::EmbeddingVector& target_embedding,
                                                      const ExampleBank& bank,
                                                      const ExtractionConfig& config);

// Step 1: review -> ordered aspect sentences. An empty completion yields
// zero sentences plus a warning rather than an error.
struct ReformulateResult {
  std::vector<AspectSentence> sentences;
  std::vector<std::string> warnings;
};
ReformulateResult reformulate(const corpus::Review& review, gateway::Gateway& gateway,
                              const gateway::PromptTemplate& tpl);

// Steps 2.1 + 2.2 for one sentence. An inconsistent response (<pos> with
// <None>) is downgraded to negative with a warning.
struct SentenceExtraction {
  bool positive = false;
  std::vector<std::string> aspects;
  std::vector<std::string> warnings;
};
SentenceExtraction classify_and_extract(const AspectSentence& sentence,
                                        const ExtractionConfig& config, gateway::Gateway& gateway,
                                        const gateway::PromptTemplate& tpl,
                                        const ExampleBank* bank = nullptr,
                                        const std::string& target_item_id = {});

struct ReviewExtraction {
  std::vector<corpus::AtypicalAspect> aspects;  // provenance=system, extractive
  std::vector<std::string> warnings;
  bool partial = false;  // true when any per-sentence call failed
};

struct StepTemplates {
  gateway::PromptTemplate step1;
  gateway::PromptTemplate step2;
};

// Full per-review pipeline: reformulate, then classify_and_extract per
// sentence (concurrently up to the gateway cap), deduplicated by
// case-folded surface. Per-sentence failures are recorded and skipped.
ReviewExtraction extract_review(const corpus::Review& review, const ExtractionConfig& config,
                                gateway::Gateway& gateway, const StepTemplates& templates,
                                const ExampleBank* bank = nullptr);

}  // namespace atars::extraction
