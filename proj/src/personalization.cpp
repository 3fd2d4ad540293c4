#include "atars/personalization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "atars/errors.hpp"
#include "atars/jsonl.hpp"
#include "atars/text.hpp"

namespace atars::personalization {

using jsonl::json;

std::uint64_t Rng::next_raw() {
  // splitmix64: full 2^64 period, identical everywhere
  state_ += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::next_double() { return static_cast<double>(next_raw() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::next_below(std::uint64_t bound) {
  if (bound == 0) throw DomainError("next_below(0)");
  // rejection sampling keeps the draw unbiased
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                        std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = next_raw();
  } while (v >= limit);
  return v % bound;
}

double retrieval_score(double sim_u, double sim_a) {
  if (sim_u < 0.0 || sim_u > 1.0 || sim_a < 0.0 || sim_a > 1.0)
    throw DomainError("retrieval_score inputs must lie in [0,1], got (" + std::to_string(sim_u) +
                      ", " + std::to_string(sim_a) + ")");
  if (sim_u == 0.0 && sim_a == 0.0) return 0.0;
  return 2.0 * sim_u * sim_a / (sim_u + sim_a);
}

void UtilityExampleBank::add(UtilityTriplet triplet) {
  if (triplet.id.empty()) throw InsufficientBank("utility triplet lacks an id");
  if (triplet.profile_embedding.dimension() == 0 || triplet.aspect_embedding.dimension() == 0)
    throw InsufficientBank("utility triplet \"" + triplet.id + "\" lacks embeddings");
  triplets_.push_back(std::move(triplet));
}

UtilityExampleBank load_utility_bank(const std::filesystem::path& triplets_jsonl,
                                     gateway::Gateway& gateway) {
  UtilityExampleBank bank;
  jsonl::for_each_record(triplets_jsonl, [&](const json& rec, int lineno) {
    const std::string ctx = triplets_jsonl.filename().string() + ":" + std::to_string(lineno);
    UtilityTriplet t;
    t.id = jsonl::require_field<std::string>(rec, "id", ctx);
    t.user_id = jsonl::require_field<std::string>(rec, "user_id", ctx);
    t.item_id = jsonl::require_field<std::string>(rec, "item_id", ctx);
    t.profile_text = jsonl::require_field<std::string>(rec, "profile", ctx);
    t.tagged_sentence = jsonl::require_field<std::string>(rec, "sentence", ctx);
    t.aspect_text = jsonl::require_field<std::string>(rec, "aspect", ctx);
    t.gold_label = corpus::utility_from_string(jsonl::require_field<std::string>(rec, "label", ctx));
    t.profile_embedding = gateway.embed(t.profile_text);
    t.aspect_embedding = gateway.embed(t.aspect_text);
    bank.add(std::move(t));
  });
  return bank;
}

UtilityQuery UtilityQuery::make(corpus::UserProfile profile, std::string tagged_sentence,
                                std::string item_id) {
  constexpr std::string_view kOpen = "<ata>";
  constexpr std::string_view kClose = "</ata>";
  std::size_t open = tagged_sentence.find(kOpen);
  std::size_t close = tagged_sentence.find(kClose);
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw DomainError("utility query sentence lacks a well-formed <ata>...</ata> span");
  if (tagged_sentence.find(kOpen, open + kOpen.size()) != std::string::npos ||
      tagged_sentence.find(kClose, close + kClose.size()) != std::string::npos)
    throw DomainError("utility query sentence must contain exactly one <ata> span");

  UtilityQuery q;
  q.aspect_surface =
      text::trim(tagged_sentence.substr(open + kOpen.size(), close - open - kOpen.size()));
  if (q.aspect_surface.empty()) throw DomainError("empty <ata> span in utility query");
  if (profile.biography.empty()) throw DomainError("utility query profile has no biography");
  q.profile = std::move(profile);
  q.sentence_text = std::move(tagged_sentence);
  q.item_id = std::move(item_id);
  return q;
}

std::string tag_aspect_in_sentence(std::string_view sentence, std::string_view surface,
                                   corpus::Domain domain) {
  std::string folded_sentence = text::casefold(sentence);
  std::string folded_surface = text::casefold(surface);
  std::size_t at = folded_sentence.find(folded_surface);
  if (at == std::string::npos) {
    std::string noun;
    switch (domain) {
      case corpus::Domain::Restaurants: noun = "restaurant"; break;
      case corpus::Domain::Hotels: noun = "hotel"; break;
      case corpus::Domain::HairSalons: noun = "hair salon"; break;
    }
    return "The " + noun + " has <ata>" + std::string(surface) + "</ata>.";
  }
  std::string out(sentence);
  out.insert(at + surface.size(), "</ata>");
  out.insert(at, "<ata>");
  return out;
}

std::vector<const UtilityTriplet*> select_utility_examples(
    const std::string& target_user_id, const std::string& target_item_id,
    const gateway::EmbeddingVector& profile_embedding,
    const gateway::EmbeddingVector& aspect_embedding, const UtilityExampleBank& bank, int k) {
  struct Scored {
    const UtilityTriplet* triplet;
    double score;
  };
  std::vector<Scored> eligible;
  for (const auto& t : bank.triplets()) {
    if (t.user_id == target_user_id || t.item_id == target_item_id) continue;
    double sim_u = std::clamp(gateway::cosine(profile_embedding, t.profile_embedding), 0.0, 1.0);
    double sim_a = std::clamp(gateway::cosine(aspect_embedding, t.aspect_embedding), 0.0, 1.0);
    eligible.push_back({&t, retrieval_score(sim_u, sim_a)});
  }
  if (eligible.size() < static_cast<std::size_t>(k))
    throw InsufficientBank("only " + std::to_string(eligible.size()) +
                           " eligible utility triplets, want " + std::to_string(k));
  std::sort(eligible.begin(), eligible.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.triplet->id < b.triplet->id;
  });
  std::vector<const UtilityTriplet*> out;
  for (int i = 0; i < k; ++i) out.push_back(eligible[i].triplet);
  return out;
}

std::string to_string(UtilityMode m) {
  switch (m) {
    case UtilityMode::ZeroShot: return "0shot";
    case UtilityMode::FixedCoT4: return "fixed";
    case UtilityMode::Dynamic4: return "dynamic";
  }
  return "0shot";
}

UtilityMode utility_mode_from_string(std::string_view s) {
  std::string k = text::casefold(s);
  if (k == "0shot" || k == "zeroshot" || k == "zero-shot") return UtilityMode::ZeroShot;
  if (k == "fixed" || k == "cot" || k == "fixedcot4") return UtilityMode::FixedCoT4;
  if (k == "dynamic" || k == "dynamic4") return UtilityMode::Dynamic4;
  throw ConfigError("unknown utility mode \"" + std::string(s) + "\"");
}

namespace {

gateway::PromptExample triplet_as_example(const UtilityTriplet& t) {
  gateway::PromptExample ex;
  ex.profile = t.profile_text;
  ex.sentence = t.tagged_sentence;
  ex.output = "A' = [(\"" + t.aspect_text + "\", \"" + corpus::to_string(t.gold_label) + "\")]";
  return ex;  // retrieved examples carry no CoT rationale
}

}  // namespace

corpus::UtilityLevel classify_utility(const UtilityQuery& query, UtilityMode mode,
                                      gateway::Gateway& gateway,
                                      const gateway::PromptTemplate& tpl,
                                      const UtilityExampleBank* bank) {
  gateway::SlotValues slots;
  slots.profile = query.profile.biography;
  slots.sentence = query.sentence_text;

  std::string prompt;
  switch (mode) {
    case UtilityMode::ZeroShot:
      prompt = gateway::render_prompt_zero_shot(tpl, slots);
      break;
    case UtilityMode::FixedCoT4:
      prompt = gateway::render_prompt_fixed(tpl, slots);
      break;
    case UtilityMode::Dynamic4: {
      if (!bank) throw ConfigError("dynamic utility classification requires a bank");
      gateway::EmbeddingVector profile_emb = gateway.embed(query.profile.biography);
      gateway::EmbeddingVector aspect_emb = gateway.embed(query.aspect_surface);
      std::vector<gateway::PromptExample> examples;
      for (const UtilityTriplet* t : select_utility_examples(
               query.profile.id, query.item_id, profile_emb, aspect_emb, *bank))
        examples.push_back(triplet_as_example(*t));
      prompt = gateway::render_prompt(tpl, examples, slots);
      break;
    }
  }

  gateway::UtilityResult parsed = gateway::parse_utility(gateway.generate({prompt}));
  if (text::surface_key(parsed.aspect) != text::surface_key(query.aspect_surface))
    throw MismatchedAspect("response labels \"" + parsed.aspect + "\", queried \"" +
                           query.aspect_surface + "\"");
  return parsed.label;
}

int sample_aspect_count(Rng& rng) {
  static const double kCumulative[] = {0.1, 0.4, 0.7, 0.9, 1.0};
  double u = rng.next_double();
  for (int i = 0; i < 5; ++i)
    if (u < kCumulative[i]) return i + 1;
  return 5;
}

corpus::UserProfile generate_profile(const ProfileGenSpec& spec, corpus::Domain domain,
                                     gateway::Gateway& gateway,
                                     const gateway::PromptTemplate& tpl, Rng& rng,
                                     const std::string& profile_id) {
  if (spec.aspect_pool.empty()) throw ConfigError("profile generation needs a non-empty pool");
  double total = 0.0;
  for (double p : spec.count_probabilities) total += p;
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("count probabilities must sum to 1, got " + std::to_string(total));

  int n = sample_aspect_count(rng);
  n = std::min<int>(n, static_cast<int>(spec.aspect_pool.size()));

  // partial Fisher-Yates: first n slots of a shuffled index vector
  std::vector<std::size_t> indices(spec.aspect_pool.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  std::vector<std::string> topics;
  for (int i = 0; i < n; ++i) {
    std::size_t j = i + rng.next_below(indices.size() - i);
    std::swap(indices[i], indices[j]);
    topics.push_back(spec.aspect_pool[indices[i]]);
  }

  gateway::SlotValues slots;
  slots.topics = text::join(topics, ", ");
  gateway::GenerationRequest req{gateway::render_prompt_fixed(tpl, slots), spec.temperature,
                                 spec.max_tokens};
  std::string biography = text::trim(gateway.generate(req));
  if (biography.empty()) throw MalformedResponse("profile generation returned empty text");

  corpus::UserProfile profile;
  profile.id = profile_id;
  profile.domain = domain;
  profile.biography = std::move(biography);
  profile.seed_topics = std::move(topics);
  return profile;
}

}  // namespace atars::personalization
