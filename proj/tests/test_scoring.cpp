#include <doctest.h>

#include <algorithm>
#include <random>

#include "atars/errors.hpp"
#include "atars/scoring.hpp"
#include "paths.hpp"

using namespace atars;
using scoring::ScoredItem;
using scoring::SimilarityMatrix;
using scoring::Strategy;

namespace {

gateway::Gateway hash_gateway(std::uint64_t seed = 21) {
  return gateway::Gateway(std::make_shared<gateway::HashTextBackend>(seed),
                          std::make_shared<gateway::HashEmbedBackend>(seed), 1);
}

}  // namespace

TEST_CASE("aspect_similarity: identity clause, clamping, range") {
  auto gw = hash_gateway();
  CHECK(scoring::aspect_similarity("pool table", "pool table", gw) == 1.0);
  CHECK(scoring::aspect_similarity("Pool  Table", "pool table", gw) == 1.0);

  std::mt19937 rng(5);
  const char* words[] = {"garden", "mural", "cat", "pond", "organ", "stage", "pier", "arcade"};
  for (int i = 0; i < 100; ++i) {
    std::string a = std::string(words[rng() % 8]) + " " + words[rng() % 8];
    std::string b = std::string(words[rng() % 8]) + " " + words[rng() % 8];
    double s = scoring::aspect_similarity(a, b, gw);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
  CHECK_THROWS_AS(scoring::aspect_similarity("", "x", gw), EmptyText);
}

TEST_CASE("similarity matrix construction and validation") {
  auto gw = hash_gateway();
  auto m = SimilarityMatrix::build({"garden", "mural", "garden"}, gw);
  CHECK(m.size() == 3);
  CHECK(m.at(0, 0) == 1.0);
  CHECK(m.at(0, 2) == 1.0);  // equal strings forced to 1
  CHECK(m.at(1, 2) == m.at(2, 1));

  CHECK_THROWS_AS(SimilarityMatrix::from_entries({{1.0, 0.5}, {0.4, 1.0}}), DomainError);
  CHECK_THROWS_AS(SimilarityMatrix::from_entries({{0.9, 0.5}, {0.5, 1.0}}), DomainError);
  CHECK_THROWS_AS(SimilarityMatrix::from_entries({{1.0, 1.5}, {1.5, 1.0}}), DomainError);
}

TEST_CASE("serendipity: three identical aspects produce the mean utility") {
  std::vector<std::string> aspects{"a", "a", "a"};
  auto all_similar = SimilarityMatrix::constant(3, 1.0);
  CHECK(scoring::serendipity_score(aspects, std::vector<double>{0.75, 0.75, 0.75}, all_similar) ==
        doctest::Approx(0.75).epsilon(1e-12));
  // surprise over identical aspects: mean of ones = 1
  CHECK(scoring::surprise_score(aspects, all_similar) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("serendipity: mutually dissimilar aspects produce the sum of utilities") {
  std::vector<std::string> aspects{"a", "b"};
  auto identity = SimilarityMatrix::identity(2);
  CHECK(scoring::serendipity_score(aspects, std::vector<double>{0.5, 1.0}, identity) ==
        doctest::Approx(1.5).epsilon(1e-12));
  // three mutually dissimilar aspects: surprise = 3
  CHECK(scoring::surprise_score({"a", "b", "c"}, SimilarityMatrix::identity(3)) ==
        doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("serendipity: hand-evaluated two-aspect case") {
  // sim(a,b) = 1 between distinct aspects: each term divided by 2
  auto m = SimilarityMatrix::constant(2, 1.0);
  CHECK(scoring::serendipity_score({"a", "b"}, std::vector<double>{1.0, 0.5}, m) ==
        doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("serendipity: empty aspect list scores zero, coverage enforced") {
  CHECK(scoring::serendipity_score({}, std::vector<double>{}, SimilarityMatrix::identity(0)) ==
        0.0);
  CHECK(scoring::surprise_score({}, SimilarityMatrix::identity(0)) == 0.0);
  CHECK_THROWS_AS(
      scoring::serendipity_score({"a", "b"}, std::vector<double>{1.0}, SimilarityMatrix::identity(2)),
      CoverageError);
  CHECK_THROWS_AS(scoring::serendipity_score({"a"}, std::vector<double>{1.0},
                                             SimilarityMatrix::identity(2)),
                  CoverageError);
  std::map<std::string, double> wrong{{"other", 1.0}};
  CHECK_THROWS_AS(scoring::serendipity_score({"a"}, wrong, SimilarityMatrix::identity(1)),
                  CoverageError);
}

TEST_CASE("0 <= serendipity <= surprise on random assignments") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double utilities[] = {0.0, 0.5, 0.75, 1.0};
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng() % 6;
    std::vector<std::string> aspects;
    std::vector<double> values;
    std::vector<std::vector<double>> entries(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      aspects.push_back("aspect-" + std::to_string(i));
      values.push_back(utilities[rng() % 4]);
      entries[i][i] = 1.0;
      for (std::size_t j = 0; j < i; ++j) {
        double s = u01(rng);
        entries[i][j] = s;
        entries[j][i] = s;
      }
    }
    auto m = SimilarityMatrix::from_entries(entries);
    double seren = scoring::serendipity_score(aspects, values, m);
    double sur = scoring::surprise_score(aspects, m);
    CHECK(seren >= 0.0);
    CHECK(seren <= sur + 1e-12);
  }
}

TEST_CASE("rank_plain: score order, star tie-break, id tie-break") {
  std::vector<ScoredItem> items{{"c", 0.1, 5.0}, {"a", 2.0, 1.0}, {"b", 0.0, 3.0}};
  auto ranked = scoring::rank_plain(items, Strategy::PlainSeren);
  CHECK(ranked.item_ids() == std::vector<std::string>{"a", "c", "b"});

  // equal scores: higher star first
  auto tie = scoring::rank_plain({{"x", 1.0, 3.0}, {"y", 1.0, 4.5}}, Strategy::PlainSeren);
  CHECK(tie.item_ids() == std::vector<std::string>{"y", "x"});

  // equal scores and stars: id ascending
  auto tie2 = scoring::rank_plain({{"n", 1.0, 3.0}, {"m", 1.0, 3.0}}, Strategy::PlainSur);
  CHECK(tie2.item_ids() == std::vector<std::string>{"m", "n"});
}

TEST_CASE("rank_plain: permutation invariance and scale freedom") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ScoredItem> items;
    std::size_t n = 2 + rng() % 8;
    for (std::size_t i = 0; i < n; ++i)
      items.push_back({"i" + std::to_string(i), u(rng), u(rng)});
    auto baseline = scoring::rank_plain(items, Strategy::PlainSeren).item_ids();

    std::shuffle(items.begin(), items.end(), rng);
    CHECK(scoring::rank_plain(items, Strategy::PlainSeren).item_ids() == baseline);

    // multiplying every score by the same positive constant keeps the order
    std::vector<ScoredItem> scaled = items;
    for (auto& it : scaled) it.score *= 7.25;
    CHECK(scoring::rank_plain(scaled, Strategy::PlainSeren).item_ids() == baseline);
  }
}

TEST_CASE("star buckets and the boundary convention") {
  CHECK(scoring::star_bucket(5.0) == 0);
  CHECK(scoring::star_bucket(4.0) == 0);       // 4.0 lands in [4.0, 5.0]
  CHECK(scoring::star_bucket(3.999) == 1);     // 3.999 lands in [3.0, 4.0)
  CHECK(scoring::star_bucket(3.0) == 1);
  CHECK(scoring::star_bucket(2.5) == 2);
  CHECK(scoring::star_bucket(1.0) == 3);
  CHECK(scoring::star_bucket(0.5) == 3);  // below 1.0 joins the lowest bucket
}

TEST_CASE("rank_star_partitioned: hand-applied bucket rule") {
  // A(4.2 star, 0.1) B(4.8, 2.0) C(3.5, 5.0) -> B A C
  auto ranked = scoring::rank_star_partitioned(
      {{"A", 0.1, 4.2}, {"B", 2.0, 4.8}, {"C", 5.0, 3.5}}, Strategy::StarSeren);
  CHECK(ranked.item_ids() == std::vector<std::string>{"B", "A", "C"});
}

TEST_CASE("rank_star_partitioned: one bucket degenerates to rank_plain") {
  std::vector<ScoredItem> items{{"a", 0.3, 4.1}, {"b", 2.0, 4.9}, {"c", 1.0, 4.5}};
  CHECK(scoring::rank_star_partitioned(items, Strategy::StarSeren).item_ids() ==
        scoring::rank_plain(items, Strategy::PlainSeren).item_ids());
}

TEST_CASE("rank_star_partitioned: bucket dominance on random inputs") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> star(0.0, 5.0), score(0.0, 4.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredItem> items;
    std::size_t n = 1 + rng() % 12;
    for (std::size_t i = 0; i < n; ++i)
      items.push_back({"i" + std::to_string(i), score(rng), star(rng)});
    auto ranked = scoring::rank_star_partitioned(items, Strategy::StarSur);
    for (std::size_t i = 1; i < ranked.entries.size(); ++i) {
      CHECK(scoring::star_bucket(ranked.entries[i - 1].star) <=
            scoring::star_bucket(ranked.entries[i].star));
      if (scoring::star_bucket(ranked.entries[i - 1].star) ==
          scoring::star_bucket(ranked.entries[i].star))
        CHECK(ranked.entries[i - 1].score >= ranked.entries[i].score);
    }
  }
}

TEST_CASE("rank_star_only: the original star-based ranking") {
  auto ranked = scoring::rank_star_only({{"a", 9.0, 2.0}, {"b", 0.0, 4.5}, {"c", 0.0, 4.5}});
  CHECK(ranked.item_ids() == std::vector<std::string>{"b", "c", "a"});
  CHECK(ranked.strategy == Strategy::StarOnly);
}

TEST_CASE("strategy parsing round trip") {
  for (auto s : {Strategy::PlainSeren, Strategy::PlainSur, Strategy::StarSeren, Strategy::StarSur,
                 Strategy::StarOnly})
    CHECK(scoring::strategy_from_string(scoring::to_string(s)) == s);
  CHECK(scoring::strategy_from_string("star-seren") == Strategy::StarSeren);
  CHECK_THROWS_AS(scoring::strategy_from_string("bogus"), ConfigError);
}
