#include "atars/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "atars/errors.hpp"
#include "atars/jsonl.hpp"
#include "atars/text.hpp"

namespace atars::corpus {

using jsonl::json;

std::string to_string(Domain d) {
  switch (d) {
    case Domain::Restaurants: return "restaurants";
    case Domain::Hotels: return "hotels";
    case Domain::HairSalons: return "hair_salons";
  }
  return "restaurants";
}

Domain domain_from_string(std::string_view s) {
  std::string k = text::casefold(text::normalize_whitespace(s));
  if (k == "restaurants" || k == "restaurant") return Domain::Restaurants;
  if (k == "hotels" || k == "hotel") return Domain::Hotels;
  if (k == "hair_salons" || k == "hair salons" || k == "hair salon" || k == "hairsalons")
    return Domain::HairSalons;
  throw ParseError("unknown domain \"" + std::string(s) + "\"");
}

std::string to_string(AspectForm f) {
  return f == AspectForm::Extractive ? "extractive" : "abstractive";
}
std::string to_string(AspectLayer l) { return l == AspectLayer::Primary ? "primary" : "secondary"; }
std::string to_string(Provenance p) { return p == Provenance::Gold ? "gold" : "system"; }

AspectForm aspect_form_from_string(std::string_view s) {
  std::string k = text::casefold(s);
  if (k == "extractive") return AspectForm::Extractive;
  if (k == "abstractive") return AspectForm::Abstractive;
  throw ParseError("unknown aspect form \"" + std::string(s) + "\"");
}

AspectLayer aspect_layer_from_string(std::string_view s) {
  std::string k = text::casefold(s);
  if (k == "primary") return AspectLayer::Primary;
  if (k == "secondary") return AspectLayer::Secondary;
  throw ParseError("unknown aspect layer \"" + std::string(s) + "\"");
}

Provenance provenance_from_string(std::string_view s) {
  std::string k = text::casefold(s);
  if (k == "gold") return Provenance::Gold;
  if (k == "system") return Provenance::System;
  throw ParseError("unknown provenance \"" + std::string(s) + "\"");
}

double utility_numeric(UtilityLevel l) {
  switch (l) {
    case UtilityLevel::None: return 0.0;
    case UtilityLevel::Low: return 0.5;
    case UtilityLevel::Medium: return 0.75;
    case UtilityLevel::High: return 1.0;
  }
  return 0.0;
}

int utility_rank(UtilityLevel l) { return static_cast<int>(l); }

std::string to_string(UtilityLevel l) {
  switch (l) {
    case UtilityLevel::None: return "None";
    case UtilityLevel::Low: return "Low";
    case UtilityLevel::Medium: return "Medium";
    case UtilityLevel::High: return "High";
  }
  return "None";
}

UtilityLevel utility_from_string(std::string_view s) {
  std::string k = text::casefold(text::trim(s));
  if (k == "none") return UtilityLevel::None;
  if (k == "low") return UtilityLevel::Low;
  if (k == "medium") return UtilityLevel::Medium;
  if (k == "high") return UtilityLevel::High;
  throw UnknownLabel("\"" + std::string(s) + "\" is not a utility level");
}

const Item& Corpus::item(const std::string& id) const {
  auto it = items_.find(id);
  if (it == items_.end()) throw UnknownItem(id);
  return it->second;
}

const Review& Corpus::review(const std::string& id) const {
  auto it = reviews_.find(id);
  if (it == reviews_.end()) throw IntegrityError("unknown review \"" + id + "\"");
  return it->second;
}

const std::vector<AtypicalAspect>& Corpus::aspects_of_review(const std::string& review_id) const {
  static const std::vector<AtypicalAspect> kEmpty;
  auto it = aspects_by_review_.find(review_id);
  return it == aspects_by_review_.end() ? kEmpty : it->second;
}

namespace {

void check_integrity(Corpus& c) {
  for (auto& [id, review] : c.reviews()) {
    if (!c.has_item(review.item_id))
      throw IntegrityError("review \"" + id + "\" references missing item \"" + review.item_id +
                           "\"");
  }
}

void index_reviews(std::map<std::string, Item>& items,
                   const std::map<std::string, Review>& reviews,
                   const std::vector<std::string>& review_order) {
  for (const auto& review_id : review_order) {
    const Review& r = reviews.at(review_id);
    auto it = items.find(r.item_id);
    if (it != items.end()) it->second.review_ids.push_back(review_id);
  }
}

}  // namespace

CorpusBuilder& CorpusBuilder::add_item(Item item) {
  if (item.star < 0.0 || item.star > 5.0)
    throw IntegrityError("item \"" + item.id + "\": star " + std::to_string(item.star) +
                         " outside [0,5]");
  std::string id = item.id;
  if (!corpus_.items_.emplace(id, std::move(item)).second)
    throw IntegrityError("duplicate item id \"" + id + "\"");
  return *this;
}

CorpusBuilder& CorpusBuilder::add_review(Review review) {
  if (review.text.empty()) throw IntegrityError("review \"" + review.id + "\": empty text");
  std::string id = review.id;
  if (!corpus_.reviews_.emplace(id, std::move(review)).second)
    throw IntegrityError("duplicate review id \"" + id + "\"");
  review_order_.push_back(id);
  return *this;
}

CorpusBuilder& CorpusBuilder::add_aspect(AtypicalAspect aspect) {
  if (aspect.surface.empty())
    throw IntegrityError("aspect in review \"" + aspect.review_id + "\": empty surface");
  std::string review_id = aspect.review_id;
  corpus_.aspects_by_review_[review_id].push_back(std::move(aspect));
  ++corpus_.aspect_count_;
  return *this;
}

CorpusBuilder& CorpusBuilder::add_profile(UserProfile profile) {
  if (profile.biography.empty())
    throw IntegrityError("profile \"" + profile.id + "\": empty biography");
  corpus_.profiles_.push_back(std::move(profile));
  return *this;
}

CorpusBuilder& CorpusBuilder::add_hit(HitRecord hit) {
  if (hit.worker_labels.size() != 3)
    throw MalformedHit("hit (" + hit.user_id + ", " + hit.review_id + ", " + hit.aspect_surface +
                       ") has " + std::to_string(hit.worker_labels.size()) + " labels, want 3");
  corpus_.hits_.push_back(std::move(hit));
  return *this;
}

CorpusBuilder& CorpusBuilder::add_query(Query query) {
  if (query.category.empty()) throw IntegrityError("query \"" + query.text + "\": empty category");
  corpus_.queries_.push_back(std::move(query));
  return *this;
}

Corpus CorpusBuilder::build() {
  for (auto& [id, item] : corpus_.items_) item.review_ids.clear();
  index_reviews(corpus_.items_, corpus_.reviews_, review_order_);
  check_integrity(corpus_);
  for (const auto& [review_id, aspects] : corpus_.aspects_by_review_) {
    if (!corpus_.reviews_.count(review_id))
      throw IntegrityError("aspect references missing review \"" + review_id + "\"");
  }
  return std::move(corpus_);
}

namespace {

std::string where(const std::filesystem::path& p, int lineno) {
  return p.filename().string() + ":" + std::to_string(lineno);
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& dir, Domain domain) {
  if (!std::filesystem::exists(dir)) throw ParseError("no such path: " + dir.string());
  CorpusBuilder builder(domain);

  auto path = [&](const char* name) { return dir / name; };

  jsonl::for_each_record(path("items.jsonl"), [&](const json& rec, int lineno) {
    Domain d = domain_from_string(jsonl::require_field<std::string>(rec, "domain",
                                                                    where(path("items.jsonl"), lineno)));
    if (d != domain) return;
    Item item;
    const std::string ctx = where(path("items.jsonl"), lineno);
    item.id = jsonl::require_field<std::string>(rec, "id", ctx);
    item.domain = d;
    item.name = jsonl::require_field<std::string>(rec, "name", ctx);
    item.star = jsonl::require_field<double>(rec, "star", ctx);
    for (const auto& c : jsonl::require_field<std::vector<std::string>>(rec, "categories", ctx))
      item.categories.insert(c);
    builder.add_item(std::move(item));
  });

  jsonl::for_each_record(path("reviews.jsonl"), [&](const json& rec, int lineno) {
    const std::string ctx = where(path("reviews.jsonl"), lineno);
    Domain d = domain_from_string(jsonl::require_field<std::string>(rec, "domain", ctx));
    if (d != domain) return;
    Review review;
    review.id = jsonl::require_field<std::string>(rec, "id", ctx);
    review.item_id = jsonl::require_field<std::string>(rec, "item_id", ctx);
    review.domain = d;
    review.text = jsonl::require_field<std::string>(rec, "text", ctx);
    if (review.text.empty()) throw ParseError(ctx + ": empty review text");
    builder.add_review(std::move(review));
  });

  auto optional_file = [&](const char* name, auto fn) {
    if (std::filesystem::exists(path(name))) jsonl::for_each_record(path(name), fn);
  };

  optional_file("aspects.jsonl", [&](const json& rec, int lineno) {
    const std::string ctx = where(path("aspects.jsonl"), lineno);
    AtypicalAspect aspect;
    aspect.review_id = jsonl::require_field<std::string>(rec, "review_id", ctx);
    aspect.surface = jsonl::require_field<std::string>(rec, "surface", ctx);
    aspect.form = aspect_form_from_string(jsonl::require_field<std::string>(rec, "form", ctx));
    aspect.layer = aspect_layer_from_string(jsonl::require_field<std::string>(rec, "layer", ctx));
    aspect.provenance =
        provenance_from_string(jsonl::require_field<std::string>(rec, "provenance", ctx));
    builder.add_aspect(std::move(aspect));
  });

  optional_file("profiles.jsonl", [&](const json& rec, int lineno) {
    const std::string ctx = where(path("profiles.jsonl"), lineno);
    Domain d = domain_from_string(jsonl::require_field<std::string>(rec, "domain", ctx));
    if (d != domain) return;
    UserProfile profile;
    profile.id = jsonl::require_field<std::string>(rec, "id", ctx);
    profile.domain = d;
    profile.biography = jsonl::require_field<std::string>(rec, "biography", ctx);
    if (rec.contains("seed_topics"))
      profile.seed_topics = rec.at("seed_topics").get<std::vector<std::string>>();
    builder.add_profile(std::move(profile));
  });

  optional_file("hits.jsonl", [&](const json& rec, int lineno) {
    const std::string ctx = where(path("hits.jsonl"), lineno);
    HitRecord hit;
    hit.user_id = jsonl::require_field<std::string>(rec, "user_id", ctx);
    hit.review_id = jsonl::require_field<std::string>(rec, "review_id", ctx);
    hit.aspect_surface = jsonl::require_field<std::string>(rec, "aspect_surface", ctx);
    for (const auto& l : jsonl::require_field<std::vector<std::string>>(rec, "worker_labels", ctx))
      hit.worker_labels.push_back(utility_from_string(l));
    builder.add_hit(std::move(hit));
  });

  optional_file("queries.jsonl", [&](const json& rec, int lineno) {
    const std::string ctx = where(path("queries.jsonl"), lineno);
    Domain d = domain_from_string(jsonl::require_field<std::string>(rec, "domain", ctx));
    if (d != domain) return;
    Query q;
    q.text = jsonl::require_field<std::string>(rec, "text", ctx);
    q.category = jsonl::require_field<std::string>(rec, "category", ctx);
    q.domain = d;
    builder.add_query(std::move(q));
  });

  return builder.build();
}

std::vector<Item> items_matching(const Corpus& corpus, const Query& q) {
  const std::string wanted = text::casefold(text::normalize_whitespace(q.category));
  std::vector<Item> out;
  for (const auto& [id, item] : corpus.items()) {
    for (const auto& c : item.categories) {
      if (text::casefold(text::normalize_whitespace(c)) == wanted) {
        out.push_back(item);
        break;
      }
    }
  }
  // items() is an ordered map, so output is already sorted by id
  return out;
}

std::vector<AtypicalAspect> aspects_of_item(const Corpus& corpus, const std::string& item_id,
                                            Provenance provenance,
                                            const std::set<AspectLayer>& layers) {
  const Item& item = corpus.item(item_id);
  std::vector<std::string> review_ids = item.review_ids;
  std::sort(review_ids.begin(), review_ids.end());

  std::vector<AtypicalAspect> out;
  std::unordered_set<std::string> seen;
  for (const auto& review_id : review_ids) {
    for (const auto& aspect : corpus.aspects_of_review(review_id)) {
      if (aspect.provenance != provenance) continue;
      if (!layers.count(aspect.layer)) continue;
      if (seen.insert(text::surface_key(aspect.surface)).second) out.push_back(aspect);
    }
  }
  return out;
}

HitAcceptance accept_hits(const std::vector<HitRecord>& hits) {
  HitAcceptance result;
  result.total = hits.size();
  for (const auto& hit : hits) {
    if (hit.worker_labels.size() != 3)
      throw MalformedHit("hit (" + hit.user_id + ", " + hit.review_id + ", " + hit.aspect_surface +
                         ") has " + std::to_string(hit.worker_labels.size()) + " labels, want 3");
    std::optional<UtilityLevel> majority;
    for (UtilityLevel candidate : hit.worker_labels) {
      int votes = 0;
      for (UtilityLevel l : hit.worker_labels)
        if (l == candidate) ++votes;
      if (votes >= 2) {
        majority = candidate;
        break;
      }
    }
    if (majority) {
      HitRecord accepted = hit;
      accepted.accepted = true;
      accepted.consensus = majority;
      result.accepted.push_back(std::move(accepted));
      ++result.accepted_count;
    } else {
      ++result.rejected_count;
    }
  }
  return result;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  stats.reviews = corpus.reviews().size();
  for (const auto& [review_id, review] : corpus.reviews()) {
    bool has_primary = false, has_any = false;
    for (const auto& aspect : corpus.aspects_of_review(review_id)) {
      if (aspect.provenance != Provenance::Gold) continue;
      has_any = true;
      if (aspect.layer == AspectLayer::Primary) {
        has_primary = true;
        ++stats.aspects_primary;
      }
      ++stats.aspects_with_secondary;
    }
    if (has_primary) ++stats.atypical_reviews_primary;
    if (has_any) ++stats.atypical_reviews_with_secondary;
  }
  return stats;
}

namespace {

CorpusStats stats_from_json(const json& j, const std::string& ctx) {
  CorpusStats s;
  s.reviews = jsonl::require_field<std::size_t>(j, "reviews", ctx);
  s.atypical_reviews_primary =
      jsonl::require_field<std::size_t>(j, "primary_atypical_reviews", ctx);
  s.aspects_primary = jsonl::require_field<std::size_t>(j, "primary_aspects", ctx);
  s.atypical_reviews_with_secondary =
      jsonl::require_field<std::size_t>(j, "plus_secondary_reviews", ctx);
  s.aspects_with_secondary = jsonl::require_field<std::size_t>(j, "plus_secondary_aspects", ctx);
  return s;
}

}  // namespace

DatasetDescriptor load_descriptor(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  const std::string ctx = file.filename().string();
  DatasetDescriptor d;
  d.domain = domain_from_string(jsonl::require_field<std::string>(j, "domain", ctx));
  d.train_test = stats_from_json(j.at("train_test"), ctx);
  d.dev = stats_from_json(j.at("dev"), ctx);
  d.hits_total = jsonl::require_field<std::size_t>(j.at("hits"), "total", ctx);
  d.hits_accepted = jsonl::require_field<std::size_t>(j.at("hits"), "accepted", ctx);
  if (j.contains("ita_accepted_mix")) {
    HitAgreementMix mix;
    const json& accepted = j.at("ita_accepted_mix");
    mix.unanimous = jsonl::require_field<std::size_t>(accepted, "unanimous", ctx);
    mix.adjacent = jsonl::require_field<std::size_t>(accepted, "adjacent", ctx);
    mix.skip = jsonl::require_field<std::size_t>(accepted, "skip", ctx);
    mix.extreme = jsonl::require_field<std::size_t>(accepted, "extreme", ctx);
    const json& rejected = j.at("ita_rejected_mix");
    mix.near = jsonl::require_field<std::size_t>(rejected, "near", ctx);
    mix.far = jsonl::require_field<std::size_t>(rejected, "far", ctx);
    if (mix.unanimous + mix.adjacent + mix.skip + mix.extreme != d.hits_accepted)
      throw ParseError(ctx + ": accepted ITA mix does not sum to the accepted count");
    if (mix.near + mix.far != d.hits_total - d.hits_accepted)
      throw ParseError(ctx + ": rejected ITA mix does not sum to the rejected count");
    d.ita_mix = mix;
  }
  d.profiles_train_test = jsonl::require_field<std::size_t>(j.at("profiles"), "train_test", ctx);
  d.profiles_dev = jsonl::require_field<std::size_t>(j.at("profiles"), "dev", ctx);
  return d;
}

std::vector<std::string> verify_against_descriptor(const CorpusStats& stats,
                                                   const HitAcceptance& hits,
                                                   const DatasetDescriptor& descriptor) {
  std::vector<std::string> mismatches;
  auto check = [&](const char* what, std::size_t got, std::size_t want) {
    if (got != want)
      mismatches.push_back(std::string(what) + ": got " + std::to_string(got) + ", want " +
                           std::to_string(want));
  };
  check("reviews", stats.reviews, descriptor.train_test.reviews);
  check("primary atypical reviews", stats.atypical_reviews_primary,
        descriptor.train_test.atypical_reviews_primary);
  check("primary aspects", stats.aspects_primary, descriptor.train_test.aspects_primary);
  check("primary+secondary reviews", stats.atypical_reviews_with_secondary,
        descriptor.train_test.atypical_reviews_with_secondary);
  check("primary+secondary aspects", stats.aspects_with_secondary,
        descriptor.train_test.aspects_with_secondary);
  check("hits total", hits.total, descriptor.hits_total);
  check("hits accepted", hits.accepted_count, descriptor.hits_accepted);
  return mismatches;
}

ProfileSplit split_profiles(const std::vector<UserProfile>& profiles, std::size_t dev_count) {
  if (dev_count > profiles.size())
    throw ConfigError("dev split larger than profile set (" + std::to_string(dev_count) + " > " +
                      std::to_string(profiles.size()) + ")");
  ProfileSplit split;
  split.train_test.assign(profiles.begin(), profiles.end() - dev_count);
  split.dev.assign(profiles.end() - dev_count, profiles.end());
  return split;
}

}  // namespace atars::corpus
