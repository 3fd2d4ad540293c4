#include "atars/extraction.hpp"

#include <algorithm>
#include <future>
#include <unordered_set>

#include "atars/errors.hpp"
#include "atars/jsonl.hpp"
#include "atars/text.hpp"

namespace atars::extraction {

using jsonl::json;

bool sentence_id_less(const AspectSentence& a, const AspectSentence& b) {
  if (a.review_id != b.review_id) return a.review_id < b.review_id;
  return a.index < b.index;
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::ZeroShot: return "0shot";
    case Mode::Fixed8: return "fixed";
    case Mode::Dynamic8: return "dynamic";
  }
  return "0shot";
}

Mode extraction_mode_from_string(std::string_view s) {
  std::string k = text::casefold(s);
  if (k == "0shot" || k == "zeroshot" || k == "zero-shot") return Mode::ZeroShot;
  if (k == "fixed" || k == "fixed8") return Mode::Fixed8;
  if (k == "dynamic" || k == "dynamic8") return Mode::Dynamic8;
  throw ConfigError("unknown extraction mode \"" + std::string(s) + "\"");
}

void ExampleBank::add(BankEntry entry) {
  if (!entry.sentence.gold_positive.has_value())
    throw InsufficientBank("bank sentence (" + entry.sentence.review_id + ", " +
                           std::to_string(entry.sentence.index) + ") lacks a gold label");
  if (entry.item_id.empty())
    throw InsufficientBank("bank sentence (" + entry.sentence.review_id + ", " +
                           std::to_string(entry.sentence.index) + ") lacks an item group");
  if (entry.embedding.dimension() == 0)
    throw InsufficientBank("bank sentence (" + entry.sentence.review_id + ", " +
                           std::to_string(entry.sentence.index) + ") lacks an embedding");
  entries_.push_back(std::move(entry));
}

ExampleBank load_example_bank(const std::filesystem::path& sentences_jsonl,
                              gateway::Gateway& gateway) {
  ExampleBank bank;
  jsonl::for_each_record(sentences_jsonl, [&](const json& rec, int lineno) {
    const std::string ctx = sentences_jsonl.filename().string() + ":" + std::to_string(lineno);
    BankEntry entry;
    entry.sentence.review_id = jsonl::require_field<std::string>(rec, "review_id", ctx);
    entry.sentence.index = jsonl::require_field<int>(rec, "index", ctx);
    entry.sentence.text = jsonl::require_field<std::string>(rec, "text", ctx);
    entry.sentence.gold_positive = jsonl::require_field<bool>(rec, "gold_positive", ctx);
    if (rec.contains("gold_aspects"))
      entry.sentence.gold_aspects = rec.at("gold_aspects").get<std::vector<std::string>>();
    entry.item_id = jsonl::require_field<std::string>(rec, "item_id", ctx);
    if (entry.sentence.text.empty()) throw ParseError(ctx + ": empty sentence text");
    if (*entry.sentence.gold_positive && entry.sentence.gold_aspects.empty())
      throw ParseError(ctx + ": positive bank sentence without gold aspects");
    entry.embedding = gateway.embed(entry.sentence.text);
    bank.add(std::move(entry));
  });
  return bank;
}

bool sentence_has_gold_aspect(std::string_view sentence_text,
                              const std::vector<corpus::AtypicalAspect>& review_aspects,
                              const std::set<corpus::AspectLayer>& layers) {
  for (const auto& aspect : review_aspects) {
    if (aspect.provenance != corpus::Provenance::Gold) continue;
    if (!layers.count(aspect.layer)) continue;
    if (text::contains_casefold(sentence_text, aspect.surface)) return true;
  }
  return false;
}

std::vector<const BankEntry*> select_dynamic_examples(
    const std::string& target_item_id, const gateway::EmbeddingVector& target_embedding,
    const ExampleBank& bank, const ExtractionConfig& config) {
  struct Scored {
    const BankEntry* entry;
    double similarity;
  };
  std::vector<Scored> positives, negatives;
  for (const auto& entry : bank.entries()) {
    if (entry.item_id == target_item_id) continue;  // leave-one-group-out
    Scored s{&entry, gateway::cosine(target_embedding, entry.embedding)};
    (*entry.sentence.gold_positive ? positives : negatives).push_back(s);
  }

  auto by_similarity = [](const Scored& a, const Scored& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return sentence_id_less(a.entry->sentence, b.entry->sentence);
  };
  std::sort(positives.begin(), positives.end(), by_similarity);
  std::sort(negatives.begin(), negatives.end(), by_similarity);

  const std::size_t want_pos = static_cast<std::size_t>(config.positives_k);
  const std::size_t want_neg = static_cast<std::size_t>(config.negatives_k);
  if (positives.size() < want_pos || negatives.size() < want_neg)
    throw InsufficientBank("outside group \"" + target_item_id + "\": " +
                           std::to_string(positives.size()) + " positives / " +
                           std::to_string(negatives.size()) + " negatives, want " +
                           std::to_string(want_pos) + "+" + std::to_string(want_neg));

  std::vector<const BankEntry*> out;
  for (std::size_t i = 0; i < want_pos; ++i) out.push_back(positives[i].entry);
  for (std::size_t i = 0; i < want_neg; ++i) out.push_back(negatives[i].entry);
  return out;
}

ReformulateResult reformulate(const corpus::Review& review, gateway::Gateway& gateway,
                              const gateway::PromptTemplate& tpl) {
  if (review.text.empty()) throw EmptyText("review \"" + review.id + "\" has no text");
  gateway::SlotValues slots;
  slots.review = review.text;
  gateway::GenerationRequest req{gateway::render_prompt_fixed(tpl, slots)};
  std::string response = gateway.generate(req);

  ReformulateResult result;
  std::vector<std::string> sentences;
  try {
    sentences = gateway::parse_step1(response);
  } catch (const EmptyOutput&) {
    result.warnings.push_back("review " + review.id + ": step 1 produced no sentences");
    return result;
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    AspectSentence s;
    s.review_id = review.id;
    s.index = static_cast<int>(i);
    s.text = std::move(sentences[i]);
    result.sentences.push_back(std::move(s));
  }
  return result;
}

namespace {

gateway::PromptExample bank_entry_as_example(const BankEntry& entry) {
  gateway::PromptExample ex;
  ex.input = entry.sentence.text;
  if (*entry.sentence.gold_positive) {
    ex.output = "Classification: <pos> Atypical Aspects: " +
                text::join(entry.sentence.gold_aspects, ", ");
  } else {
    ex.output = "Classification: <neg> Atypical Aspects: <None>";
  }
  return ex;
}

}  // namespace

SentenceExtraction classify_and_extract(const AspectSentence& sentence,
                                        const ExtractionConfig& config, gateway::Gateway& gateway,
                                        const gateway::PromptTemplate& tpl,
                                        const ExampleBank* bank,
                                        const std::string& target_item_id) {
  gateway::SlotValues slots;
  slots.sentence = sentence.text;

  std::string prompt;
  switch (config.mode) {
    case Mode::ZeroShot:
      prompt = gateway::render_prompt_zero_shot(tpl, slots);
      break;
    case Mode::Fixed8:
      prompt = gateway::render_prompt_fixed(tpl, slots);
      break;
    case Mode::Dynamic8: {
      if (!bank) throw ConfigError("dynamic extraction requires an example bank");
      gateway::EmbeddingVector target = gateway.embed(sentence.text);
      std::vector<gateway::PromptExample> examples;
      for (const BankEntry* entry :
           select_dynamic_examples(target_item_id, target, *bank, config))
        examples.push_back(bank_entry_as_example(*entry));
      prompt = gateway::render_prompt(tpl, examples, slots);
      break;
    }
  }

  std::string response = gateway.generate(gateway::GenerationRequest{prompt});
  SentenceExtraction result;
  try {
    gateway::Step2Result parsed = gateway::parse_step2(response);
    result.positive = parsed.positive;
    result.aspects = std::move(parsed.aspects);
  } catch (const InconsistentResponse& e) {
    // conservative downgrade: treat as negative, keep the audit trail
    result.positive = false;
    result.warnings.push_back("sentence (" + sentence.review_id + ", " +
                              std::to_string(sentence.index) + ") " + e.what() +
                              "; treated as negative");
  }
  return result;
}

ReviewExtraction extract_review(const corpus::Review& review, const ExtractionConfig& config,
                                gateway::Gateway& gateway, const StepTemplates& templates,
                                const ExampleBank* bank) {
  ReviewExtraction result;
  ReformulateResult step1 = reformulate(review, gateway, templates.step1);
  result.warnings = std::move(step1.warnings);

  struct PerSentence {
    SentenceExtraction extraction;
    std::string error;
  };
  std::vector<PerSentence> per_sentence(step1.sentences.size());

  auto run_one = [&](std::size_t i) {
    try {
      per_sentence[i].extraction = classify_and_extract(step1.sentences[i], config, gateway,
                                                        templates.step2, bank, review.item_id);
    } catch (const std::exception& e) {
      per_sentence[i].error = e.what();
    }
  };

  if (gateway.max_inflight() > 1 && step1.sentences.size() > 1) {
    std::vector<std::future<void>> futures;
    futures.reserve(step1.sentences.size());
    for (std::size_t i = 0; i < step1.sentences.size(); ++i)
      futures.push_back(std::async(std::launch::async, run_one, i));
    for (auto& f : futures) f.get();
  } else {
    for (std::size_t i = 0; i < step1.sentences.size(); ++i) run_one(i);
  }

  // reassembled in sentence order, so output order never depends on
  // completion order
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < per_sentence.size(); ++i) {
    const PerSentence& ps = per_sentence[i];
    if (!ps.error.empty()) {
      result.partial = true;
      result.warnings.push_back("review " + review.id + " sentence " + std::to_string(i) +
                                " failed: " + ps.error);
      continue;
    }
    for (const std::string& w : ps.extraction.warnings) result.warnings.push_back(w);
    if (!ps.extraction.positive) continue;
    for (const std::string& surface : ps.extraction.aspects) {
      if (!seen.insert(text::surface_key(surface)).second) continue;
      corpus::AtypicalAspect aspect;
      aspect.surface = surface;
      aspect.form = corpus::AspectForm::Extractive;
      aspect.layer = corpus::AspectLayer::Primary;
      aspect.review_id = review.id;
      aspect.provenance = corpus::Provenance::System;
      result.aspects.push_back(std::move(aspect));
    }
  }
  return result;
}

}  // namespace atars::extraction
