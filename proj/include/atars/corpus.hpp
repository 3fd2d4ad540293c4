#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace atars::corpus {

enum class Domain { Restaurants, Hotels, HairSalons };

std::string to_string(Domain d);
Domain domain_from_string(std::string_view s);

enum class AspectForm { Extractive, Abstractive };
enum class AspectLayer { Primary, Secondary };
enum class Provenance { Gold, System };

std::string to_string(AspectForm f);
std::string to_string(AspectLayer l);
std::string to_string(Provenance p);
AspectForm aspect_form_from_string(std::string_view s);
AspectLayer aspect_layer_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);

// Ordinal utility levels with their numeric encoding.
enum class UtilityLevel { None = 0, Low = 1, Medium = 2, High = 3 };

double utility_numeric(UtilityLevel l);  // 0.0 / 0.5 / 0.75 / 1.0
int utility_rank(UtilityLevel l);        // 0..3
std::string to_string(UtilityLevel l);
UtilityLevel utility_from_string(std::string_view s);  // throws UnknownLabel

struct Item {
  std::string id;
  Domain domain = Domain::Restaurants;
  std::string name;
  double star = 0.0;  // in [0,5]
  std::set<std::string> categories;
  std::vector<std::string> review_ids;  // populated on load, file order
};

struct Review {
  std::string id;
  std::string item_id;
  Domain domain = Domain::Restaurants;
  std::string text;  // non-empty
};

struct AtypicalAspect {
  std::string surface;  // non-empty
  AspectForm form = AspectForm::Extractive;
  AspectLayer layer = AspectLayer::Primary;
  std::string review_id;
  Provenance provenance = Provenance::Gold;
};

struct UserProfile {
  std::string id;
  Domain domain = Domain::Restaurants;
  std::string biography;  // non-empty
  std::vector<std::string> seed_topics;  // may be empty for external profiles
};

// One crowdsourced annotation unit: a (user, review, aspect) triplet with
// three worker labels. accepted/consensus are derived, never loaded.
struct HitRecord {
  std::string user_id;
  std::string review_id;
  std::string aspect_surface;
  std::vector<UtilityLevel> worker_labels;  // exactly 3
  bool accepted = false;
  std::optional<UtilityLevel> consensus;
};

struct Query {
  std::string text;
  std::string category;  // non-empty
  Domain domain = Domain::Restaurants;
};

// Immutable after load; safe for concurrent reads.
class Corpus {
 public:
  Domain domain() const { return domain_; }

  const std::map<std::string, Item>& items() const { return items_; }
  const std::map<std::string, Review>& reviews() const { return reviews_; }
  const std::vector<UserProfile>& profiles() const { return profiles_; }
  const std::vector<HitRecord>& hits() const { return hits_; }
  const std::vector<Query>& queries() const { return queries_; }

  const Item& item(const std::string& id) const;      // throws UnknownItem
  const Review& review(const std::string& id) const;  // throws IntegrityError
  bool has_item(const std::string& id) const { return items_.count(id) > 0; }

  // Aspects of one review in file order; empty vector if none.
  const std::vector<AtypicalAspect>& aspects_of_review(const std::string& review_id) const;

  std::size_t aspect_count() const { return aspect_count_; }

 private:
  friend Corpus load_corpus(const std::filesystem::path&, Domain);
  friend class CorpusBuilder;

  Domain domain_ = Domain::Restaurants;
  std::map<std::string, Item> items_;
  std::map<std::string, Review> reviews_;
  std::map<std::string, std::vector<AtypicalAspect>> aspects_by_review_;
  std::vector<UserProfile> profiles_;
  std::vector<HitRecord> hits_;
  std::vector<Query> queries_;
  std::size_t aspect_count_ = 0;
};

// In-memory construction with the same integrity checks as load_corpus.
class CorpusBuilder {
 public:
  explicit CorpusBuilder(Domain domain) { corpus_.domain_ = domain; }
  CorpusBuilder& add_item(Item item);
  CorpusBuilder& add_review(Review review);
  CorpusBuilder& add_aspect(AtypicalAspect aspect);
  CorpusBuilder& add_profile(UserProfile profile);
  CorpusBuilder& add_hit(HitRecord hit);
  CorpusBuilder& add_query(Query query);
  Corpus build();  // verifies referential integrity

 private:
  Corpus corpus_;
  std::vector<std::string> review_order_;
};

// Loads items.jsonl / reviews.jsonl and, when present, aspects.jsonl,
// profiles.jsonl, hits.jsonl, queries.jsonl from dir. Records of other
// domains are skipped so multi-domain exports can share one directory.
Corpus load_corpus(const std::filesystem::path& dir, Domain domain);

// Items whose category set contains q.category (case-insensitive exact
// match), ordered by id.
std::vector<Item> items_matching(const Corpus& corpus, const Query& q);

// AtA(i): the union of aspects over the item's reviews, filtered by
// provenance and layer, deduplicated by case-folded surface. Order is
// (review id, position in review).
std::vector<AtypicalAspect> aspects_of_item(const Corpus& corpus, const std::string& item_id,
                                            Provenance provenance,
                                            const std::set<AspectLayer>& layers);

struct HitAcceptance {
  std::vector<HitRecord> accepted;  // consensus set on each
  std::size_t total = 0;
  std::size_t accepted_count = 0;
  std::size_t rejected_count = 0;
};

// A HIT is accepted iff at least 2 of its 3 labels agree; the consensus
// is the majority label.
HitAcceptance accept_hits(const std::vector<HitRecord>& hits);

struct CorpusStats {
  std::size_t reviews = 0;
  std::size_t atypical_reviews_primary = 0;       // reviews with >=1 primary gold aspect
  std::size_t aspects_primary = 0;                // gold primary annotations
  std::size_t atypical_reviews_with_secondary = 0;  // reviews with >=1 gold aspect of any layer
  std::size_t aspects_with_secondary = 0;           // all gold annotations
};

CorpusStats corpus_stats(const Corpus& corpus);

// Label-agreement mix of a HIT set, on the sigma lattice reachable with
// three ordinal labels: unanimous 0, adjacent-majority sqrt(2)/3, skip
// 2*sqrt(2)/3, extreme majority sqrt(2); rejected: near sqrt(2/3), far
// sqrt(14)/3.
struct HitAgreementMix {
  std::size_t unanimous = 0;
  std::size_t adjacent = 0;
  std::size_t skip = 0;
  std::size_t extreme = 0;
  std::size_t near = 0;
  std::size_t far = 0;
};

// Expected dataset shape, bundled per domain under fixtures/descriptors.
struct DatasetDescriptor {
  Domain domain = Domain::Restaurants;
  CorpusStats train_test;
  CorpusStats dev;
  std::size_t hits_total = 0;
  std::size_t hits_accepted = 0;
  std::optional<HitAgreementMix> ita_mix;  // shapes the synthetic HIT labels
  std::size_t profiles_train_test = 0;
  std::size_t profiles_dev = 0;
};

DatasetDescriptor load_descriptor(const std::filesystem::path& file);

// Mismatch messages between a loaded corpus and a descriptor split; empty
// means every count matches.
std::vector<std::string> verify_against_descriptor(const CorpusStats& stats,
                                                   const HitAcceptance& hits,
                                                   const DatasetDescriptor& descriptor);

// Last dev_count profiles become the Dev split, the rest Train+Test.
struct ProfileSplit {
  std::vector<UserProfile> train_test;
  std::vector<UserProfile> dev;
};
ProfileSplit split_profiles(const std::vector<UserProfile>& profiles, std::size_t dev_count);

}  // namespace atars::corpus
