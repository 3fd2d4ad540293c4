#include "atars/scoring.hpp"

#include <algorithm>

#include "atars/errors.hpp"
#include "atars/text.hpp"

namespace atars::scoring {

double aspect_similarity(std::string_view a, std::string_view b, gateway::Gateway& gateway) {
  if (text::trim(a).empty() || text::trim(b).empty())
    throw EmptyText("aspect similarity over empty text");
  if (text::surface_key(a) == text::surface_key(b)) return 1.0;
  double c = gateway::cosine(gateway.embed(a), gateway.embed(b));
  return std::clamp(c, 0.0, 1.0);
}

SimilarityMatrix SimilarityMatrix::build(const std::vector<std::string>& aspects,
                                         gateway::Gateway& gateway) {
  SimilarityMatrix m;
  const std::size_t n = aspects.size();
  m.entries_.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    m.entries_[i][i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = aspect_similarity(aspects[i], aspects[j], gateway);
      m.entries_[i][j] = s;
      m.entries_[j][i] = s;
    }
  }
  return m;
}

SimilarityMatrix SimilarityMatrix::identity(std::size_t n) { return constant(n, 0.0); }

SimilarityMatrix SimilarityMatrix::constant(std::size_t n, double off_diagonal) {
  if (off_diagonal < 0.0 || off_diagonal > 1.0)
    throw DomainError("similarity outside [0,1]: " + std::to_string(off_diagonal));
  SimilarityMatrix m;
  m.entries_.assign(n, std::vector<double>(n, off_diagonal));
  for (std::size_t i = 0; i < n; ++i) m.entries_[i][i] = 1.0;
  return m;
}

SimilarityMatrix SimilarityMatrix::from_entries(std::vector<std::vector<double>> entries) {
  const std::size_t n = entries.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (entries[i].size() != n) throw DomainError("similarity matrix is not square");
    if (entries[i][i] != 1.0) throw DomainError("similarity matrix diagonal must be 1");
    for (std::size_t j = 0; j < n; ++j) {
      if (entries[i][j] < 0.0 || entries[i][j] > 1.0)
        throw DomainError("similarity entry outside [0,1]");
      if (entries[i][j] != entries[j][i]) throw DomainError("similarity matrix is not symmetric");
    }
  }
  SimilarityMatrix m;
  m.entries_ = std::move(entries);
  return m;
}

double serendipity_score(const std::vector<std::string>& aspects,
                         const std::vector<double>& utilities, const SimilarityMatrix& sims) {
  if (utilities.size() != aspects.size())
    throw CoverageError("got " + std::to_string(utilities.size()) + " utilities for " +
                        std::to_string(aspects.size()) + " aspects");
  if (sims.size() != aspects.size())
    throw CoverageError("similarity matrix covers " + std::to_string(sims.size()) +
                        " aspects, want " + std::to_string(aspects.size()));
  double score = 0.0;
  for (std::size_t i = 0; i < aspects.size(); ++i) {
    double total_similarity = 0.0;
    for (std::size_t j = 0; j < aspects.size(); ++j) total_similarity += sims.at(i, j);
    score += utilities[i] / total_similarity;  // >= 1 via the unit diagonal
  }
  return score;
}

double serendipity_score(const std::vector<std::string>& aspects,
                         const std::map<std::string, double>& utilities_by_surface,
                         const SimilarityMatrix& sims) {
  if (utilities_by_surface.size() != aspects.size())
    throw CoverageError("utility assignment must cover the aspect list exactly");
  std::vector<double> utilities;
  utilities.reserve(aspects.size());
  for (const auto& a : aspects) {
    auto it = utilities_by_surface.find(text::surface_key(a));
    if (it == utilities_by_surface.end())
      throw CoverageError("no utility for aspect \"" + a + "\"");
    utilities.push_back(it->second);
  }
  return serendipity_score(aspects, utilities, sims);
}

double surprise_score(const std::vector<std::string>& aspects, const SimilarityMatrix& sims) {
  return serendipity_score(aspects, std::vector<double>(aspects.size(), 1.0), sims);
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::PlainSeren: return "PlainSeren";
    case Strategy::PlainSur: return "PlainSur";
    case Strategy::StarSeren: return "StarSeren";
    case Strategy::StarSur: return "StarSur";
    case Strategy::StarOnly: return "StarOnly";
  }
  return "PlainSeren";
}

Strategy strategy_from_string(std::string_view s) {
  std::string k = text::casefold(s);
  if (k == "plainseren" || k == "plain-seren") return Strategy::PlainSeren;
  if (k == "plainsur" || k == "plain-sur") return Strategy::PlainSur;
  if (k == "starseren" || k == "star-seren") return Strategy::StarSeren;
  if (k == "starsur" || k == "star-sur") return Strategy::StarSur;
  if (k == "staronly" || k == "star-only") return Strategy::StarOnly;
  throw ConfigError("unknown ranking strategy \"" + std::string(s) + "\"");
}

bool strategy_uses_utilities(Strategy s) {
  return s == Strategy::PlainSeren || s == Strategy::StarSeren;
}

bool strategy_star_partitioned(Strategy s) {
  return s == Strategy::StarSeren || s == Strategy::StarSur;
}

std::vector<std::string> RankedList::item_ids() const {
  std::vector<std::string> ids;
  ids.reserve(entries.size());
  for (const auto& e : entries) ids.push_back(e.item_id);
  return ids;
}

int star_bucket(double star) {
  if (star >= 4.0) return 0;
  if (star >= 3.0) return 1;
  if (star >= 2.0) return 2;
  return 3;
}

namespace {

bool plain_less(const ScoredItem& a, const ScoredItem& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.star != b.star) return a.star > b.star;
  return a.item_id < b.item_id;
}

}  // namespace

RankedList rank_plain(std::vector<ScoredItem> items, Strategy tag) {
  std::sort(items.begin(), items.end(), plain_less);
  return RankedList{tag, std::move(items)};
}

RankedList rank_star_partitioned(std::vector<ScoredItem> items, Strategy tag) {
  std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
    int ba = star_bucket(a.star), bb = star_bucket(b.star);
    if (ba != bb) return ba < bb;
    return plain_less(a, b);
  });
  return RankedList{tag, std::move(items)};
}

RankedList rank_star_only(std::vector<ScoredItem> items) {
  std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.star != b.star) return a.star > b.star;
    return a.item_id < b.item_id;
  });
  return RankedList{Strategy::StarOnly, std::move(items)};
}

RankedList rank(std::vector<ScoredItem> items, Strategy strategy) {
  if (strategy == Strategy::StarOnly) return rank_star_only(std::move(items));
  if (strategy_star_partitioned(strategy)) return rank_star_partitioned(std::move(items), strategy);
  return rank_plain(std::move(items), strategy);
}

}  // namespace atars::scoring
