#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "atars/corpus.hpp"
#include "atars/gateway.hpp"

namespace atars::personalization {

// Deterministic random stream; distributions are hand-rolled so the draw
// sequence is identical across platforms for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  double next_double();                 // uniform in [0,1)
  std::uint64_t next_below(std::uint64_t bound);  // uniform in [0,bound)

 private:
  std::uint64_t next_raw();
  std::uint64_t state_;
};

// Harmonic mean H(sim_u, sim_a) of the user-level and aspect-level
// similarities; 0 when both inputs are 0.
double retrieval_score(double sim_u, double sim_a);

struct UtilityTriplet {
  std::string id;  // tie-break key
  std::string user_id;
  std::string item_id;
  std::string profile_text;
  std::string tagged_sentence;  // one <ata>...</ata> span
  std::string aspect_text;      // abstractive formulation used for retrieval
  corpus::UtilityLevel gold_label = corpus::UtilityLevel::None;
  gateway::EmbeddingVector profile_embedding;
  gateway::EmbeddingVector aspect_embedding;
};

class UtilityExampleBank {
 public:
  void add(UtilityTriplet triplet);
  const std::vector<UtilityTriplet>& triplets() const { return triplets_; }
  std::size_t size() const { return triplets_.size(); }

 private:
  std::vector<UtilityTriplet> triplets_;
};

// Reads triplets.jsonl ({"id","user_id","item_id","profile","sentence",
// "aspect","label"}) and embeds each profile and aspect.
UtilityExampleBank load_utility_bank(const std::filesystem::path& triplets_jsonl,
                                     gateway::Gateway& gateway);

struct UtilityQuery {
  corpus::UserProfile profile;
  std::string sentence_text;   // contains exactly one <ata>...</ata> pair
  std::string aspect_surface;  // equals the tagged span
  std::string item_id;         // bank exclusion group

  // Validates the single-tag invariant and extracts the surface.
  static UtilityQuery make(corpus::UserProfile profile, std::string tagged_sentence,
                           std::string item_id = {});
};

// Wraps the first case-insensitive occurrence of the surface in <ata>
// tags; if the surface does not occur, a standalone sentence is
// synthesized so abstractive gold aspects stay usable.
std::string tag_aspect_in_sentence(std::string_view sentence, std::string_view surface,
                                   corpus::Domain domain);

// Top-k bank triplets by harmonic mean of profile and aspect cosines,
// excluding every triplet that shares the target's user or item. Cosines
// are clamped to [0,1] before the harmonic mean. Ties break by triplet id.
std::vector<const UtilityTriplet*> select_utility_examples(
    const std::string& target_user_id, const std::string& target_item_id,
    const gateway::EmbeddingVector& profile_embedding,
    const gateway::EmbeddingVector& aspect_embedding, const UtilityExampleBank& bank, int k = 4);

enum class UtilityMode { ZeroShot, FixedCoT4, Dynamic4 };
std::string to_string(UtilityMode m);
UtilityMode utility_mode_from_string(std::string_view s);

// Renders the utility prompt, calls the backend and parses the label. The
// response must name the queried aspect (case-folded) or MismatchedAspect
// is thrown.
corpus::UtilityLevel classify_utility(const UtilityQuery& query, UtilityMode mode,
                                      gateway::Gateway& gateway,
                                      const gateway::PromptTemplate& tpl,
                                      const UtilityExampleBank* bank = nullptr);

// Number of seed aspects per generated profile, drawn from the categorical
// distribution p(1..5) = (0.1, 0.3, 0.3, 0.2, 0.1).
int sample_aspect_count(Rng& rng);

struct ProfileGenSpec {
  std::vector<double> count_probabilities{0.1, 0.3, 0.3, 0.2, 0.1};  // over counts 1..5
  double temperature = 1.0;
  int max_tokens = 512;
  std::vector<std::string> aspect_pool;  // non-empty
};

// Samples seed aspects without replacement, renders the 9-example CoT
// prompt and returns the generated biography with its seed topics.
corpus::UserProfile generate_profile(const ProfileGenSpec& spec, corpus::Domain domain,
                                     gateway::Gateway& gateway,
                                     const gateway::PromptTemplate& tpl, Rng& rng,
                                     const std::string& profile_id);

}  // namespace atars::personalization
