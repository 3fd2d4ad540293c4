#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "atars/corpus.hpp"
#include "atars/gateway.hpp"
#include "atars/scoring.hpp"

namespace atars::evaluation {

// A phrase is its word-token sequence: case-folded, punctuation-stripped,
// whitespace-split.
using Phrase = std::vector<std::string>;

class SpanSet {
 public:
  // Tokenizes each string; a phrase with no tokens is rejected.
  static SpanSet from_strings(const std::vector<std::string>& phrases);
  static SpanSet from_phrases(std::vector<Phrase> phrases);
  const std::vector<Phrase>& phrases() const { return phrases_; }
  std::size_t size() const { return phrases_.size(); }

 private:
  std::vector<Phrase> phrases_;
};

struct MatchScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

MatchScores scores_from_pr(double precision, double recall);

// Whole-phrase token equality. Conventions: empty extraction scores P=0,
// both-empty scores perfect.
MatchScores exact_match(const SpanSet& gold, const SpanSet& extracted);

// Greedy bipartite matching by maximum Jaccard word overlap with partial
// credit; each gold phrase consumes its best remaining extracted phrase
// (ties: first in input order), leftovers count as whole false positives.
MatchScores partial_match(const SpanSet& gold, const SpanSet& extracted);

using LabelPair = std::pair<corpus::UtilityLevel, corpus::UtilityLevel>;  // (gold, predicted)

// Symmetric label-confusion costs with zero diagonal.
class CostMatrix {
 public:
  // exact 0, adjacent 0.5, distant 1
  static CostMatrix four_way();
  // within {H,M} / {L,N} groups 0; (M,L) 0.25; distant 1
  static CostMatrix two_way();
  double cost(corpus::UtilityLevel gold, corpus::UtilityLevel predicted) const;

 private:
  double entries_[4][4] = {};
};

// 1 - mean cost over the pairs.
double utility_accuracy(const std::vector<LabelPair>& pairs, const CostMatrix& matrix);

// Collapse High/Medium to positive and Low/None to negative, then plain
// P/R/F1 of the positive class.
MatchScores binary_prf(const std::vector<LabelPair>& pairs);

// Kendall tau-a over two total orders of the same item set.
double kendall_tau(const std::vector<std::string>& ranking_a,
                   const std::vector<std::string>& ranking_b);

struct AgreementStats {
  double mean_sigma = 0.0;
  double median_sigma = 0.0;
  double max_sigma = 0.0;
};

enum class LabelEncoding {
  Rank0123,       // None=0, Low=1, Medium=2, High=3 (default)
  NumericUtility  // 0.0 / 0.5 / 0.75 / 1.0
};

// Per-HIT population standard deviation over the K=3 worker labels, then
// mean/median/max across the dataset.
AgreementStats agreement_stats(const std::vector<corpus::HitRecord>& hits,
                               LabelEncoding encoding = LabelEncoding::Rank0123);

// ---- ranking experiment ---------------------------------------------

// utility(u, a) lookup keyed by (user, review, case-folded surface);
// unannotated aspects default to None and are counted.
class UtilityLookup {
 public:
  void set(const std::string& user_id, const std::string& review_id, std::string_view surface,
           double value);
  double get(const std::string& user_id, const std::string& review_id,
             std::string_view surface) const;
  bool contains(const std::string& user_id, const std::string& review_id,
                std::string_view surface) const;
  std::size_t size() const { return values_.size(); }

 private:
  std::map<std::string, double> values_;
};

// Consensus utilities of the accepted HITs.
UtilityLookup gold_utilities(const corpus::Corpus& corpus);

struct ExperimentConfig {
  scoring::Strategy system_strategy = scoring::Strategy::PlainSeren;
  scoring::Strategy reference_strategy = scoring::Strategy::PlainSeren;
  corpus::Provenance system_aspects = corpus::Provenance::System;
  std::set<corpus::AspectLayer> layers{corpus::AspectLayer::Primary,
                                       corpus::AspectLayer::Secondary};
  std::size_t min_positive_items = 3;  // cell validity rule
};

struct CellResult {
  std::size_t query_index = 0;
  std::string user_id;
  double tau = 0.0;
  bool skipped = false;
  std::string skip_reason;
};

struct ExperimentReport {
  std::vector<std::string> query_labels;
  std::vector<double> per_query_tau;  // mean over that query's users
  double mean_tau = 0.0;              // mean of the per-query means
  std::vector<CellResult> cells;
  std::size_t skipped_cells = 0;
  std::size_t missing_utilities = 0;  // aspect-user pairs defaulted to None

  nlohmann::json to_json() const;
  std::string to_csv() const;  // header q1..qN,Mean plus one value row
};

// Scores every item matching each query for each user, ranks with both
// strategies and correlates system against reference. Reference rankings
// always come from gold aspects and gold consensus utilities.
ExperimentReport run_ranking_experiment(const corpus::Corpus& corpus,
                                        const std::vector<corpus::UserProfile>& users,
                                        const std::vector<corpus::Query>& queries,
                                        const UtilityLookup& system_utilities,
                                        const ExperimentConfig& config,
                                        gateway::Gateway& gateway);

// Score one item for one user under a strategy.
double item_score(const corpus::Corpus& corpus, const std::string& item_id,
                  const std::string& user_id, corpus::Provenance provenance,
                  const std::set<corpus::AspectLayer>& layers, const UtilityLookup& utilities,
                  bool use_utilities, gateway::Gateway& gateway,
                  std::size_t* missing_utility_count = nullptr);

}  // namespace atars::evaluation
