#pragma once

#include <map>
#include <string>
#include <vector>

#include "atars/gateway.hpp"

namespace atars::scoring {

// Normalized aspect-to-aspect similarity: exactly 1 for equal case-folded
// texts, otherwise the embedding cosine clamped to [0,1].
double aspect_similarity(std::string_view a, std::string_view b, gateway::Gateway& gateway);

// Symmetric, unit-diagonal, entries clamped to [0,1].
class SimilarityMatrix {
 public:
  static SimilarityMatrix build(const std::vector<std::string>& aspects,
                                gateway::Gateway& gateway);
  static SimilarityMatrix identity(std::size_t n);
  static SimilarityMatrix constant(std::size_t n, double off_diagonal);
  static SimilarityMatrix from_entries(std::vector<std::vector<double>> entries);

  std::size_t size() const { return entries_.size(); }
  double at(std::size_t i, std::size_t j) const { return entries_[i][j]; }

 private:
  std::vector<std::vector<double>> entries_;
};

// serendipity(u,i) = sum over aspects of utility(a) divided by the total
// similarity of a to all of the item's aspects (itself included). Empty
// aspect list scores 0. With all-identical aspects this is the mean
// utility; with mutually dissimilar aspects it is the sum.
double serendipity_score(const std::vector<std::string>& aspects,
                         const std::vector<double>& utilities, const SimilarityMatrix& sims);

// Convenience overload keyed by case-folded surface; the map must cover
// the aspect list exactly.
double serendipity_score(const std::vector<std::string>& aspects,
                         const std::map<std::string, double>& utilities_by_surface,
                         const SimilarityMatrix& sims);

// serendipity with every utility forced to 1: user-independent surprise.
double surprise_score(const std::vector<std::string>& aspects, const SimilarityMatrix& sims);

enum class Strategy { PlainSeren, PlainSur, StarSeren, StarSur, StarOnly };
std::string to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);
bool strategy_uses_utilities(Strategy s);
bool strategy_star_partitioned(Strategy s);

struct ScoredItem {
  std::string item_id;
  double score = 0.0;
  double star = 0.0;
};

struct RankedList {
  Strategy strategy = Strategy::PlainSeren;
  std::vector<ScoredItem> entries;
  std::vector<std::string> item_ids() const;
};

// Star range buckets [4,5] (3,4) (2,3) (1,2); anything below 1 joins the
// lowest bucket. Smaller index = better bucket.
int star_bucket(double star);

// Descending score; ties by descending star, then ascending item id.
RankedList rank_plain(std::vector<ScoredItem> items, Strategy tag);

// Items never cross star-bucket boundaries; inside a bucket the plain
// comparator applies.
RankedList rank_star_partitioned(std::vector<ScoredItem> items, Strategy tag);

// The original star-based ranking: descending star, ties by id.
RankedList rank_star_only(std::vector<ScoredItem> items);

// Dispatches on the strategy tag.
RankedList rank(std::vector<ScoredItem> items, Strategy strategy);

}  // namespace atars::scoring
