#include "atars/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "atars/errors.hpp"
#include "atars/text.hpp"

namespace atars::evaluation {

using corpus::UtilityLevel;

SpanSet SpanSet::from_strings(const std::vector<std::string>& phrases) {
  std::vector<Phrase> tokenized;
  tokenized.reserve(phrases.size());
  for (const auto& p : phrases) tokenized.push_back(text::tokenize_words(p));
  return from_phrases(std::move(tokenized));
}

SpanSet SpanSet::from_phrases(std::vector<Phrase> phrases) {
  for (const auto& p : phrases)
    if (p.empty()) throw EmptyInput("span set contains a phrase with no word tokens");
  SpanSet s;
  s.phrases_ = std::move(phrases);
  return s;
}

MatchScores scores_from_pr(double precision, double recall) {
  MatchScores s;
  s.precision = precision;
  s.recall = recall;
  s.f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  return s;
}

namespace {

// multiset view of a phrase: token -> count
std::map<std::string, int> counts(const Phrase& p) {
  std::map<std::string, int> c;
  for (const auto& t : p) ++c[t];
  return c;
}

int intersection_size(const Phrase& a, const Phrase& b) {
  auto ca = counts(a), cb = counts(b);
  int n = 0;
  for (const auto& [token, count] : ca) {
    auto it = cb.find(token);
    if (it != cb.end()) n += std::min(count, it->second);
  }
  return n;
}

int union_size(const Phrase& a, const Phrase& b) {
  auto ca = counts(a);
  for (const auto& [token, count] : counts(b)) {
    auto it = ca.find(token);
    if (it == ca.end())
      ca[token] = count;
    else
      it->second = std::max(it->second, count);
  }
  int n = 0;
  for (const auto& [token, count] : ca) n += count;
  return n;
}

double jaccard(const Phrase& a, const Phrase& b) {
  int u = union_size(a, b);
  return u == 0 ? 0.0 : static_cast<double>(intersection_size(a, b)) / u;
}

bool phrases_equal(const Phrase& a, const Phrase& b) { return a == b; }

}  // namespace

MatchScores exact_match(const SpanSet& gold, const SpanSet& extracted) {
  if (gold.size() == 0 && extracted.size() == 0) return {1.0, 1.0, 1.0};

  std::vector<bool> used(extracted.size(), false);
  int correct = 0;
  for (const auto& gp : gold.phrases()) {
    for (std::size_t j = 0; j < extracted.size(); ++j) {
      if (!used[j] && phrases_equal(gp, extracted.phrases()[j])) {
        used[j] = true;
        ++correct;
        break;
      }
    }
  }
  double precision = extracted.size() ? static_cast<double>(correct) / extracted.size() : 0.0;
  double recall = gold.size() ? static_cast<double>(correct) / gold.size() : 0.0;
  return scores_from_pr(precision, recall);
}

MatchScores partial_match(const SpanSet& gold, const SpanSet& extracted) {
  if (gold.size() == 0 && extracted.size() == 0) return {1.0, 1.0, 1.0};

  double tp_extracted = 0.0, tp_gold = 0.0, false_pos = 0.0, false_neg = 0.0;

  std::vector<const Phrase*> remaining;
  for (const auto& ep : extracted.phrases()) remaining.push_back(&ep);

  for (const auto& gp : gold.phrases()) {
    std::size_t best = 0;
    double best_jaccard = 0.0;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      double score = jaccard(*remaining[j], gp);
      if (score > best_jaccard) {  // ties keep the earliest candidate
        best_jaccard = score;
        best = j;
      }
    }
    // no overlapping phrase left: the empty-EP branch, nothing is consumed
    if (remaining.empty() || best_jaccard == 0.0) {
      false_neg += 1.0;  // |gp| / |gp|
      continue;
    }
    const Phrase& ep = *remaining[best];
    const double overlap = intersection_size(ep, gp);
    tp_extracted += overlap / ep.size();
    tp_gold += overlap / gp.size();
    false_pos += (ep.size() - overlap) / static_cast<double>(ep.size());
    false_neg += (gp.size() - overlap) / static_cast<double>(gp.size());
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
  }
  false_pos += static_cast<double>(remaining.size());  // each leftover adds |ep|/|ep|

  double precision = (tp_extracted + false_pos) > 0.0 ? tp_extracted / (tp_extracted + false_pos) : 0.0;
  double recall = (tp_gold + false_neg) > 0.0 ? tp_gold / (tp_gold + false_neg) : 0.0;
  return scores_from_pr(precision, recall);
}

CostMatrix CostMatrix::four_way() {
  CostMatrix m;
  for (int g = 0; g < 4; ++g)
    for (int p = 0; p < 4; ++p) {
      int d = std::abs(g - p);
      m.entries_[g][p] = d == 0 ? 0.0 : d == 1 ? 0.5 : 1.0;
    }
  return m;
}

CostMatrix CostMatrix::two_way() {
  CostMatrix m;
  auto positive = [](int rank) { return rank >= corpus::utility_rank(UtilityLevel::Medium); };
  for (int g = 0; g < 4; ++g)
    for (int p = 0; p < 4; ++p) {
      if (g == p || positive(g) == positive(p))
        m.entries_[g][p] = 0.0;  // same group: <H,M> and <L,N> are free
      else if (std::abs(g - p) == 1)
        m.entries_[g][p] = 0.25;  // only <M,L> crosses groups adjacently
      else
        m.entries_[g][p] = 1.0;
    }
  return m;
}

double CostMatrix::cost(UtilityLevel gold, UtilityLevel predicted) const {
  return entries_[corpus::utility_rank(gold)][corpus::utility_rank(predicted)];
}

double utility_accuracy(const std::vector<LabelPair>& pairs, const CostMatrix& matrix) {
  if (pairs.empty()) throw EmptyInput("utility_accuracy of zero pairs");
  double total = 0.0;
  for (const auto& [gold, predicted] : pairs) total += matrix.cost(gold, predicted);
  return 1.0 - total / static_cast<double>(pairs.size());
}

MatchScores binary_prf(const std::vector<LabelPair>& pairs) {
  if (pairs.empty()) throw EmptyInput("binary_prf of zero pairs");
  auto positive = [](UtilityLevel l) {
    return l == UtilityLevel::High || l == UtilityLevel::Medium;
  };
  int tp = 0, fp = 0, fn = 0;
  for (const auto& [gold, predicted] : pairs) {
    if (positive(gold) && positive(predicted)) ++tp;
    if (!positive(gold) && positive(predicted)) ++fp;
    if (positive(gold) && !positive(predicted)) ++fn;
  }
  double precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  double recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return scores_from_pr(precision, recall);
}

double kendall_tau(const std::vector<std::string>& ranking_a,
                   const std::vector<std::string>& ranking_b) {
  if (ranking_a.size() != ranking_b.size())
    throw SetMismatch("rankings have " + std::to_string(ranking_a.size()) + " vs " +
                      std::to_string(ranking_b.size()) + " items");
  std::map<std::string, std::size_t> pos_b;
  for (std::size_t i = 0; i < ranking_b.size(); ++i) {
    if (!pos_b.emplace(ranking_b[i], i).second)
      throw SetMismatch("duplicate item \"" + ranking_b[i] + "\" in ranking");
  }
  std::vector<std::size_t> positions;
  positions.reserve(ranking_a.size());
  {
    std::set<std::string> seen;
    for (const auto& id : ranking_a) {
      if (!seen.insert(id).second) throw SetMismatch("duplicate item \"" + id + "\" in ranking");
      auto it = pos_b.find(id);
      if (it == pos_b.end()) throw SetMismatch("item \"" + id + "\" missing from second ranking");
      positions.push_back(it->second);
    }
  }
  const std::size_t n = positions.size();
  if (n < 2) return 1.0;

  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      (positions[i] < positions[j] ? concordant : discordant) += 1;
  double pair_count = static_cast<double>(n) * (n - 1) / 2.0;
  return (concordant - discordant) / pair_count;
}

AgreementStats agreement_stats(const std::vector<corpus::HitRecord>& hits,
                               LabelEncoding encoding) {
  if (hits.empty()) throw EmptyInput("agreement_stats of zero HITs");
  auto encode = [&](UtilityLevel l) {
    return encoding == LabelEncoding::Rank0123 ? static_cast<double>(corpus::utility_rank(l))
                                               : corpus::utility_numeric(l);
  };
  std::vector<double> sigmas;
  sigmas.reserve(hits.size());
  for (const auto& hit : hits) {
    if (hit.worker_labels.size() != 3)
      throw MalformedHit("hit (" + hit.user_id + ", " + hit.review_id + ", " +
                         hit.aspect_surface + ") has " +
                         std::to_string(hit.worker_labels.size()) + " labels, want 3");
    double mean = 0.0;
    for (UtilityLevel l : hit.worker_labels) mean += encode(l);
    mean /= 3.0;
    double variance = 0.0;
    for (UtilityLevel l : hit.worker_labels) {
      double d = encode(l) - mean;
      variance += d * d;
    }
    variance /= 3.0;  // population std, divide by K
    sigmas.push_back(std::sqrt(variance));
  }

  AgreementStats stats;
  for (double s : sigmas) {
    stats.mean_sigma += s;
    stats.max_sigma = std::max(stats.max_sigma, s);
  }
  stats.mean_sigma /= static_cast<double>(sigmas.size());
  std::sort(sigmas.begin(), sigmas.end());
  std::size_t n = sigmas.size();
  stats.median_sigma = n % 2 ? sigmas[n / 2] : (sigmas[n / 2 - 1] + sigmas[n / 2]) / 2.0;
  return stats;
}

namespace {

std::string utility_key(const std::string& user_id, const std::string& review_id,
                        std::string_view surface) {
  return user_id + "\x1f" + review_id + "\x1f" + text::surface_key(surface);
}

}  // namespace

void UtilityLookup::set(const std::string& user_id, const std::string& review_id,
                        std::string_view surface, double value) {
  values_[utility_key(user_id, review_id, surface)] = value;
}

double UtilityLookup::get(const std::string& user_id, const std::string& review_id,
                          std::string_view surface) const {
  auto it = values_.find(utility_key(user_id, review_id, surface));
  return it == values_.end() ? 0.0 : it->second;
}

bool UtilityLookup::contains(const std::string& user_id, const std::string& review_id,
                             std::string_view surface) const {
  return values_.count(utility_key(user_id, review_id, surface)) > 0;
}

UtilityLookup gold_utilities(const corpus::Corpus& corpus) {
  UtilityLookup lookup;
  for (const auto& hit : corpus::accept_hits(corpus.hits()).accepted)
    lookup.set(hit.user_id, hit.review_id, hit.aspect_surface,
               corpus::utility_numeric(*hit.consensus));
  return lookup;
}

double item_score(const corpus::Corpus& corpus, const std::string& item_id,
                  const std::string& user_id, corpus::Provenance provenance,
                  const std::set<corpus::AspectLayer>& layers, const UtilityLookup& utilities,
                  bool use_utilities, gateway::Gateway& gateway,
                  std::size_t* missing_utility_count) {
  std::vector<corpus::AtypicalAspect> aspects =
      corpus::aspects_of_item(corpus, item_id, provenance, layers);
  if (aspects.empty()) return 0.0;

  std::vector<std::string> surfaces;
  surfaces.reserve(aspects.size());
  for (const auto& a : aspects) surfaces.push_back(a.surface);
  scoring::SimilarityMatrix sims = scoring::SimilarityMatrix::build(surfaces, gateway);

  if (!use_utilities) return scoring::surprise_score(surfaces, sims);

  std::vector<double> values;
  values.reserve(aspects.size());
  for (const auto& a : aspects) {
    if (!utilities.contains(user_id, a.review_id, a.surface) && missing_utility_count)
      ++*missing_utility_count;
    values.push_back(utilities.get(user_id, a.review_id, a.surface));
  }
  return scoring::serendipity_score(surfaces, values, sims);
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json cells_json = nlohmann::json::array();
  for (const auto& c : cells) {
    cells_json.push_back({{"query_index", c.query_index},
                          {"user_id", c.user_id},
                          {"tau", c.tau},
                          {"skipped", c.skipped},
                          {"skip_reason", c.skip_reason}});
  }
  return nlohmann::json{{"query_labels", query_labels}, {"per_query_tau", per_query_tau},
                        {"mean_tau", mean_tau},         {"cells", cells_json},
                        {"skipped_cells", skipped_cells}, {"missing_utilities", missing_utilities}};
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < per_query_tau.size(); ++i) out << "q" << (i + 1) << ",";
  out << "Mean\n";
  for (double tau : per_query_tau) out << tau << ",";
  out << mean_tau << "\n";
  return out.str();
}

ExperimentReport run_ranking_experiment(const corpus::Corpus& corpus,
                                        const std::vector<corpus::UserProfile>& users,
                                        const std::vector<corpus::Query>& queries,
                                        const UtilityLookup& system_utilities,
                                        const ExperimentConfig& config,
                                        gateway::Gateway& gateway) {
  if (queries.empty()) throw EmptyInput("experiment needs at least one query");
  if (users.empty()) throw EmptyInput("experiment needs at least one user");

  const UtilityLookup reference_utilities = gold_utilities(corpus);
  ExperimentReport report;

  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const corpus::Query& query = queries[qi];
    report.query_labels.push_back(query.category);
    std::vector<corpus::Item> matched = corpus::items_matching(corpus, query);

    double query_tau_sum = 0.0;
    std::size_t query_cells = 0;

    for (const auto& user : users) {
      CellResult cell;
      cell.query_index = qi;
      cell.user_id = user.id;

      std::vector<scoring::ScoredItem> system_items, reference_items;
      std::size_t positive_reference = 0;
      for (const auto& item : matched) {
        double ref = item_score(corpus, item.id, user.id, corpus::Provenance::Gold, config.layers,
                                reference_utilities,
                                scoring::strategy_uses_utilities(config.reference_strategy),
                                gateway, nullptr);
        double sys = item_score(corpus, item.id, user.id, config.system_aspects, config.layers,
                                system_utilities,
                                scoring::strategy_uses_utilities(config.system_strategy), gateway,
                                &report.missing_utilities);
        reference_items.push_back({item.id, ref, item.star});
        system_items.push_back({item.id, sys, item.star});
        if (ref > 0.0) ++positive_reference;
      }

      if (positive_reference < config.min_positive_items) {
        cell.skipped = true;
        cell.skip_reason = "only " + std::to_string(positive_reference) +
                           " items with positive reference score, need " +
                           std::to_string(config.min_positive_items);
        ++report.skipped_cells;
        report.cells.push_back(std::move(cell));
        continue;
      }

      scoring::RankedList reference =
          scoring::rank(std::move(reference_items), config.reference_strategy);
      scoring::RankedList system = scoring::rank(std::move(system_items), config.system_strategy);
      cell.tau = kendall_tau(system.item_ids(), reference.item_ids());
      query_tau_sum += cell.tau;
      ++query_cells;
      report.cells.push_back(std::move(cell));
    }

    report.per_query_tau.push_back(query_cells ? query_tau_sum / query_cells : 0.0);
  }

  double total = 0.0;
  for (double t : report.per_query_tau) total += t;
  report.mean_tau = report.per_query_tau.empty() ? 0.0 : total / report.per_query_tau.size();
  return report;
}

}  // namespace atars::evaluation
