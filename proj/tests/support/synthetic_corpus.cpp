#include "synthetic_corpus.hpp"

#include <iomanip>
#include <sstream>

#include "atars/jsonl.hpp"

namespace testsupport {

using namespace atars;
using jsonl::json;

namespace {

std::string padded(const char* prefix, std::size_t n) {
  std::ostringstream out;
  out << prefix << std::setw(5) << std::setfill('0') << n;
  return out.str();
}

}  // namespace

void generate_descriptor_corpus(const corpus::DatasetDescriptor& d,
                                const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string domain = corpus::to_string(d.domain);
  const corpus::CorpusStats& s = d.train_test;

  const std::size_t items = std::max<std::size_t>(1, s.reviews / 5);
  {
    jsonl::Writer out(out_dir / "items.jsonl");
    for (std::size_t i = 0; i < items; ++i)
      out.write(json{{"id", padded("syn-i", i)},
                     {"domain", domain},
                     {"name", "Synthetic " + std::to_string(i)},
                     {"star", 3.5},
                     {"categories", std::vector<std::string>{"Synthetic"}}});
  }
  {
    jsonl::Writer out(out_dir / "reviews.jsonl");
    for (std::size_t r = 0; r < s.reviews; ++r)
      out.write(json{{"id", padded("syn-r", r)},
                     {"item_id", padded("syn-i", r % items)},
                     {"domain", domain},
                     {"text", "Synthetic review " + std::to_string(r) + "."}});
  }
  {
    // primary aspects spread over the first atypical_reviews_primary
    // reviews; the extra +secondary reviews carry one secondary aspect
    // each; leftover secondary aspects round-robin over the primary block
    jsonl::Writer out(out_dir / "aspects.jsonl");
    auto aspect = [&](std::size_t review, std::size_t k, const char* layer) {
      return json{{"review_id", padded("syn-r", review)},
                  {"surface", "aspect " + std::to_string(review) + "-" + std::to_string(k)},
                  {"form", "extractive"},
                  {"layer", layer},
                  {"provenance", "gold"}};
    };
    const std::size_t prim_reviews = s.atypical_reviews_primary;
    const std::size_t base = s.aspects_primary / prim_reviews;
    const std::size_t extra = s.aspects_primary % prim_reviews;
    std::size_t k = 0;
    for (std::size_t r = 0; r < prim_reviews; ++r) {
      std::size_t count = base + (r < extra ? 1 : 0);
      for (std::size_t j = 0; j < count; ++j) out.write(aspect(r, k++, "primary"));
    }
    const std::size_t secondary_total = s.aspects_with_secondary - s.aspects_primary;
    const std::size_t secondary_only_reviews =
        s.atypical_reviews_with_secondary - s.atypical_reviews_primary;
    for (std::size_t r = 0; r < secondary_only_reviews; ++r)
      out.write(aspect(prim_reviews + r, k++, "secondary"));
    for (std::size_t j = 0; j < secondary_total - secondary_only_reviews; ++j)
      out.write(aspect(j % prim_reviews, k++, "secondary"));
  }
  {
    // accepted hits carry a 2-1 majority, rejected ones three distinct
    // labels; an ITA mix in the descriptor shapes the label spreads so the
    // published agreement statistics come out as well
    std::vector<std::vector<std::string>> labels;
    labels.reserve(d.hits_total);
    auto repeat = [&](std::size_t n, std::vector<std::string> pattern) {
      for (std::size_t i = 0; i < n; ++i) labels.push_back(pattern);
    };
    if (d.ita_mix) {
      repeat(d.ita_mix->unanimous, {"High", "High", "High"});
      repeat(d.ita_mix->adjacent, {"High", "High", "Medium"});
      repeat(d.ita_mix->skip, {"High", "High", "Low"});
      repeat(d.ita_mix->extreme, {"None", "None", "High"});
      repeat(d.ita_mix->near, {"High", "Medium", "Low"});
      repeat(d.ita_mix->far, {"None", "Low", "High"});
    } else {
      repeat(d.hits_accepted, {"High", "High", "Low"});
      repeat(d.hits_total - d.hits_accepted, {"High", "Medium", "Low"});
    }
    jsonl::Writer out(out_dir / "hits.jsonl");
    for (std::size_t h = 0; h < labels.size(); ++h)
      out.write(json{{"user_id", padded("syn-u", h % 25)},
                     {"review_id", padded("syn-r", h % s.reviews)},
                     {"aspect_surface", "hit aspect " + std::to_string(h)},
                     {"worker_labels", labels[h]}});
  }
}

}  // namespace testsupport
