// atars: command-line front end for the review-mining and serendipity
// re-ranking pipeline. One subcommand per stage; every run writes its
// artifacts plus a manifest into --out.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "atars/corpus.hpp"
#include "atars/errors.hpp"
#include "atars/evaluation.hpp"
#include "atars/extraction.hpp"
#include "atars/gateway.hpp"
#include "atars/jsonl.hpp"
#include "atars/personalization.hpp"
#include "atars/scoring.hpp"
#include "atars/text.hpp"

namespace fs = std::filesystem;
using atars::jsonl::json;
using namespace atars;

namespace {

struct CommonOptions {
  std::string domain = "restaurants";
  std::string backend = "hash";
  std::string cassette;
  std::string endpoint;
  std::string model;
  std::string api_key_env = "ATARS_API_KEY";
  std::string prompts = "fixtures/prompts";
  std::string mode = "fixed";
  std::uint64_t seed = 1;
  int max_inflight = 1;
  std::string out = "out";
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool wants_backend = true) {
  cmd->add_option("--domain", opt.domain, "restaurants | hotels | hair_salons");
  cmd->add_option("--seed", opt.seed, "deterministic seed");
  cmd->add_option("--out", opt.out, "run output directory");
  cmd->add_option("--max-inflight", opt.max_inflight, "max concurrent backend requests");
  if (wants_backend) {
    cmd->add_option("--backend", opt.backend, "live | scripted | hash");
    cmd->add_option("--cassette", opt.cassette, "cassette file for the scripted backend");
    cmd->add_option("--endpoint", opt.endpoint, "live backend base URL");
    cmd->add_option("--model", opt.model, "live backend model name");
    cmd->add_option("--api-key-env", opt.api_key_env, "env var holding the API key");
    cmd->add_option("--prompts", opt.prompts, "prompt fixture root");
  }
}

corpus::Domain domain_of(const CommonOptions& opt) {
  return corpus::domain_from_string(opt.domain);
}

std::set<corpus::AspectLayer> layers_of(const std::string& value) {
  std::string k = text::casefold(value);
  if (k == "primary") return {corpus::AspectLayer::Primary};
  if (k == "primary+secondary" || k == "both")
    return {corpus::AspectLayer::Primary, corpus::AspectLayer::Secondary};
  throw ConfigError("unknown --layers value \"" + value + "\"");
}

gateway::Gateway make_gateway(const CommonOptions& opt) {
  std::shared_ptr<gateway::TextGenBackend> text_backend;
  if (opt.backend == "hash") {
    text_backend = std::make_shared<gateway::HashTextBackend>(opt.seed);
  } else if (opt.backend == "scripted") {
    if (opt.cassette.empty()) throw ConfigError("--backend scripted requires --cassette");
    text_backend = std::make_shared<gateway::ScriptedTextBackend>(
        gateway::ScriptedTextBackend::from_cassette(opt.cassette));
  } else if (opt.backend == "live") {
    gateway::LiveBackendConfig config;
    config.endpoint = opt.endpoint;
    config.model = opt.model;
    config.api_key_env = opt.api_key_env;
    text_backend = std::make_shared<gateway::LiveTextBackend>(config);
  } else {
    throw ConfigError("unknown --backend \"" + opt.backend + "\"");
  }
  auto embed_backend = std::make_shared<gateway::HashEmbedBackend>(opt.seed);
  return gateway::Gateway(std::move(text_backend), std::move(embed_backend), opt.max_inflight);
}

std::string hash_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return text::sha256_hex(buf.str());
}

// one hash over every fixture file of a prompt family/domain, sorted
std::string hash_template_dir(const fs::path& prompts_root, gateway::PromptFamily family,
                              corpus::Domain domain) {
  fs::path dir = prompts_root / gateway::to_string(family) / corpus::to_string(domain);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::string material;
  for (const auto& f : files) material += f.filename().string() + hash_file(f);
  return text::sha256_hex(material);
}

// Run manifest: resolved config, input hashes, and a run id derived from
// them. No wall-clock fields, so identical runs write identical bytes.
struct Manifest {
  std::string command;
  json config = json::object();
  std::map<std::string, std::string> input_hashes;
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
  bool partial = false;

  void add_input(const fs::path& p) { input_hashes[p.filename().string()] = hash_file(p); }

  std::string run_id() const {
    std::string material = command + config.dump();
    for (const auto& [name, hash] : input_hashes) material += name + hash;
    return text::sha256_hex(material).substr(0, 12);
  }

  void write(const fs::path& out_dir) const {
    json j{{"run_id", run_id()},     {"command", command},   {"config", config},
           {"inputs", input_hashes}, {"outputs", outputs},   {"partial", partial},
           {"warnings", warnings}};
    std::ofstream out(out_dir / "manifest.json");
    out << j.dump(2) << "\n";
  }
};

json base_config(const CommonOptions& opt, bool wants_backend = true) {
  json j{{"domain", opt.domain}, {"seed", opt.seed}, {"max_inflight", opt.max_inflight}};
  if (wants_backend) {
    j["backend"] = opt.backend;
    if (opt.backend == "live") {
      j["endpoint"] = opt.endpoint;
      j["model"] = opt.model;  // the key itself never enters a manifest
    }
    j["prompts"] = opt.prompts;
    j["temperature_default"] = 0.0;
    j["max_tokens_default"] = 1024;
  }
  return j;
}

void ensure_out(const CommonOptions& opt) { fs::create_directories(opt.out); }

// ---- ingest -----------------------------------------------------------

int cmd_ingest(const CommonOptions& opt, const std::string& in_dir) {
  corpus::Domain domain = domain_of(opt);
  corpus::Corpus c = corpus::load_corpus(in_dir, domain);
  ensure_out(opt);

  Manifest manifest;
  manifest.command = "ingest";
  manifest.config = base_config(opt, false);
  manifest.config["in"] = in_dir;

  {
    jsonl::Writer items(fs::path(opt.out) / "items.jsonl");
    for (const auto& [id, item] : c.items())
      items.write(json{{"id", item.id},
                       {"domain", corpus::to_string(item.domain)},
                       {"name", item.name},
                       {"star", item.star},
                       {"categories", std::vector<std::string>(item.categories.begin(),
                                                               item.categories.end())}});
  }
  {
    jsonl::Writer reviews(fs::path(opt.out) / "reviews.jsonl");
    for (const auto& [id, review] : c.reviews())
      reviews.write(json{{"id", review.id},
                         {"item_id", review.item_id},
                         {"domain", corpus::to_string(review.domain)},
                         {"text", review.text}});
  }
  {
    jsonl::Writer aspects(fs::path(opt.out) / "aspects.jsonl");
    for (const auto& [review_id, review] : c.reviews())
      for (const auto& a : c.aspects_of_review(review_id))
        aspects.write(json{{"review_id", a.review_id},
                           {"surface", a.surface},
                           {"form", corpus::to_string(a.form)},
                           {"layer", corpus::to_string(a.layer)},
                           {"provenance", corpus::to_string(a.provenance)}});
  }
  {
    jsonl::Writer profiles(fs::path(opt.out) / "profiles.jsonl");
    std::vector<corpus::UserProfile> sorted = c.profiles();
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    for (const auto& p : sorted)
      profiles.write(json{{"id", p.id},
                          {"domain", corpus::to_string(p.domain)},
                          {"biography", p.biography},
                          {"seed_topics", p.seed_topics}});
  }
  {
    jsonl::Writer hits(fs::path(opt.out) / "hits.jsonl");
    std::vector<corpus::HitRecord> sorted = c.hits();
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      return std::tie(a.user_id, a.review_id, a.aspect_surface) <
             std::tie(b.user_id, b.review_id, b.aspect_surface);
    });
    for (const auto& h : sorted) {
      std::vector<std::string> labels;
      for (auto l : h.worker_labels) labels.push_back(corpus::to_string(l));
      hits.write(json{{"user_id", h.user_id},
                      {"review_id", h.review_id},
                      {"aspect_surface", h.aspect_surface},
                      {"worker_labels", labels}});
    }
  }
  {
    jsonl::Writer queries(fs::path(opt.out) / "queries.jsonl");
    std::vector<corpus::Query> sorted = c.queries();
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.category < b.category; });
    for (const auto& q : sorted)
      queries.write(json{{"text", q.text},
                         {"category", q.category},
                         {"domain", corpus::to_string(q.domain)}});
  }

  for (const char* name : {"items.jsonl", "reviews.jsonl"})
    manifest.add_input(fs::path(in_dir) / name);
  manifest.outputs = {"items.jsonl",    "reviews.jsonl", "aspects.jsonl",
                      "profiles.jsonl", "hits.jsonl",    "queries.jsonl"};
  manifest.write(opt.out);

  std::cout << "items: " << c.items().size() << "\n"
            << "reviews: " << c.reviews().size() << "\n"
            << "aspects: " << c.aspect_count() << "\n"
            << "profiles: " << c.profiles().size() << "\n"
            << "hits: " << c.hits().size() << "\n"
            << "queries: " << c.queries().size() << "\n";
  return 0;
}

// ---- extract ----------------------------------------------------------

int cmd_extract(const CommonOptions& opt, const std::string& in_dir, const std::string& bank_path,
                const std::string& layers) {
  corpus::Domain domain = domain_of(opt);
  corpus::Corpus c = corpus::load_corpus(in_dir, domain);
  gateway::Gateway gw = make_gateway(opt);

  extraction::StepTemplates templates{
      gateway::load_template(opt.prompts, gateway::PromptFamily::Step1Reformulate, domain),
      gateway::load_template(opt.prompts, gateway::PromptFamily::Step2Extract, domain)};

  extraction::ExtractionConfig config;
  config.mode = extraction::extraction_mode_from_string(opt.mode);
  config.layers = layers_of(layers);

  std::unique_ptr<extraction::ExampleBank> bank;
  if (config.mode == extraction::Mode::Dynamic8) {
    if (bank_path.empty()) throw ConfigError("--mode dynamic requires --bank");
    bank = std::make_unique<extraction::ExampleBank>(
        extraction::load_example_bank(bank_path, gw));
  }

  ensure_out(opt);
  Manifest manifest;
  manifest.command = "extract";
  manifest.config = base_config(opt);
  manifest.config["mode"] = opt.mode;
  manifest.config["layers"] = layers;
  manifest.config["in"] = in_dir;
  manifest.config["backend_id"] = gw.text_backend_id();
  manifest.config["prompt_fixture_hashes"] =
      json{{"step1_reformulate", hash_template_dir(opt.prompts,
                                                   gateway::PromptFamily::Step1Reformulate, domain)},
           {"step2_extract",
            hash_template_dir(opt.prompts, gateway::PromptFamily::Step2Extract, domain)}};
  manifest.add_input(fs::path(in_dir) / "reviews.jsonl");
  if (!opt.cassette.empty()) manifest.add_input(opt.cassette);
  if (!bank_path.empty()) manifest.add_input(bank_path);

  std::size_t failed_reviews = 0;
  {
    jsonl::Writer out(fs::path(opt.out) / "aspects.jsonl");
    for (const auto& [review_id, review] : c.reviews()) {
      try {
        auto result = extraction::extract_review(review, config, gw, templates, bank.get());
        manifest.partial |= result.partial;
        for (const auto& w : result.warnings) manifest.warnings.push_back(w);
        for (const auto& a : result.aspects)
          out.write(json{{"review_id", a.review_id},
                         {"surface", a.surface},
                         {"form", corpus::to_string(a.form)},
                         {"layer", corpus::to_string(a.layer)},
                         {"provenance", corpus::to_string(a.provenance)}});
      } catch (const Error& e) {
        ++failed_reviews;
        manifest.partial = true;
        manifest.warnings.push_back("review " + review_id + " failed: " + e.what());
      }
    }
  }
  manifest.outputs = {"aspects.jsonl"};
  manifest.write(opt.out);
  for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << "\n";

  if (failed_reviews == c.reviews().size() && failed_reviews > 0)
    throw BackendUnavailable("every review failed extraction");
  std::cout << "reviews processed: " << c.reviews().size() - failed_reviews << "/"
            << c.reviews().size() << "\n";
  return 0;
}

// ---- classify-utility --------------------------------------------------

std::vector<corpus::AtypicalAspect> load_aspect_file(const fs::path& path) {
  std::vector<corpus::AtypicalAspect> aspects;
  jsonl::for_each_record(path, [&](const json& rec, int lineno) {
    const std::string ctx = path.filename().string() + ":" + std::to_string(lineno);
    corpus::AtypicalAspect a;
    a.review_id = jsonl::require_field<std::string>(rec, "review_id", ctx);
    a.surface = jsonl::require_field<std::string>(rec, "surface", ctx);
    a.form = corpus::aspect_form_from_string(jsonl::require_field<std::string>(rec, "form", ctx));
    a.layer =
        corpus::aspect_layer_from_string(jsonl::require_field<std::string>(rec, "layer", ctx));
    a.provenance =
        corpus::provenance_from_string(jsonl::require_field<std::string>(rec, "provenance", ctx));
    aspects.push_back(std::move(a));
  });
  return aspects;
}

int cmd_classify_utility(const CommonOptions& opt, const std::string& in_dir,
                         const std::string& aspects_path, const std::string& bank_path) {
  corpus::Domain domain = domain_of(opt);
  corpus::Corpus c = corpus::load_corpus(in_dir, domain);
  gateway::Gateway gw = make_gateway(opt);
  auto tpl = gateway::load_template(opt.prompts, gateway::PromptFamily::UtilityClassify, domain);

  personalization::UtilityMode mode = personalization::utility_mode_from_string(opt.mode);
  std::unique_ptr<personalization::UtilityExampleBank> bank;
  if (mode == personalization::UtilityMode::Dynamic4) {
    if (bank_path.empty()) throw ConfigError("--mode dynamic requires --bank");
    bank = std::make_unique<personalization::UtilityExampleBank>(
        personalization::load_utility_bank(bank_path, gw));
  }

  // gold aspects from the corpus, or a system aspects.jsonl from a prior run
  std::vector<corpus::AtypicalAspect> aspects;
  if (aspects_path == "gold") {
    for (const auto& [review_id, review] : c.reviews())
      for (const auto& a : c.aspects_of_review(review_id))
        if (a.provenance == corpus::Provenance::Gold) aspects.push_back(a);
  } else {
    aspects = load_aspect_file(aspects_path);
  }

  ensure_out(opt);
  Manifest manifest;
  manifest.command = "classify-utility";
  manifest.config = base_config(opt);
  manifest.config["mode"] = opt.mode;
  manifest.config["aspects"] = aspects_path;
  manifest.config["in"] = in_dir;
  manifest.config["backend_id"] = gw.text_backend_id();
  manifest.config["prompt_fixture_hashes"] = json{
      {"utility_classify",
       hash_template_dir(opt.prompts, gateway::PromptFamily::UtilityClassify, domain)}};
  if (!opt.cassette.empty()) manifest.add_input(opt.cassette);
  manifest.add_input(fs::path(in_dir) / "reviews.jsonl");
  manifest.add_input(fs::path(in_dir) / "profiles.jsonl");
  if (aspects_path != "gold") manifest.add_input(aspects_path);
  if (!bank_path.empty()) manifest.add_input(bank_path);
  const std::string run_id = manifest.run_id();

  std::size_t failures = 0;
  {
    jsonl::Writer out(fs::path(opt.out) / "utility_labels.jsonl");
    for (const auto& profile : c.profiles()) {
      for (const auto& aspect : aspects) {
        const corpus::Review& review = c.review(aspect.review_id);
        std::string tagged;
        for (const auto& sentence : text::split_sentences(review.text)) {
          if (text::contains_casefold(sentence, aspect.surface)) {
            tagged = personalization::tag_aspect_in_sentence(sentence, aspect.surface, domain);
            break;
          }
        }
        if (tagged.empty())
          tagged = personalization::tag_aspect_in_sentence("", aspect.surface, domain);
        try {
          auto query = personalization::UtilityQuery::make(profile, tagged, review.item_id);
          corpus::UtilityLevel label =
              personalization::classify_utility(query, mode, gw, tpl, bank.get());
          out.write(json{{"user_id", profile.id},
                         {"review_id", aspect.review_id},
                         {"aspect_surface", aspect.surface},
                         {"label", corpus::to_string(label)},
                         {"mode", opt.mode},
                         {"run_id", run_id}});
        } catch (const Error& e) {
          ++failures;
          manifest.partial = true;
          manifest.warnings.push_back("(" + profile.id + ", " + aspect.review_id + ", " +
                                      aspect.surface + "): " + e.what());
        }
      }
    }
  }
  manifest.outputs = {"utility_labels.jsonl"};
  manifest.write(opt.out);
  for (const auto& w : manifest.warnings) std::cerr << "warning: " << w << "\n";
  if (!aspects.empty() && !c.profiles().empty() &&
      failures == aspects.size() * c.profiles().size())
    throw BackendUnavailable("every utility classification failed");
  std::cout << "labels written: " << aspects.size() * c.profiles().size() - failures << "\n";
  return 0;
}

// ---- gen-profiles -----------------------------------------------------

int cmd_gen_profiles(const CommonOptions& opt, const std::string& pool_path, int count) {
  corpus::Domain domain = domain_of(opt);
  gateway::Gateway gw = make_gateway(opt);
  auto tpl = gateway::load_template(opt.prompts, gateway::PromptFamily::ProfileGenerate, domain);

  personalization::ProfileGenSpec spec;
  std::ifstream pool(pool_path);
  if (!pool) throw ConfigError("cannot read aspect pool " + pool_path);
  std::string line;
  while (std::getline(pool, line)) {
    std::string aspect = text::trim(line);
    if (!aspect.empty()) spec.aspect_pool.push_back(aspect);
  }

  ensure_out(opt);
  Manifest manifest;
  manifest.command = "gen-profiles";
  manifest.config = base_config(opt);
  manifest.config["pool"] = pool_path;
  manifest.config["count"] = count;
  manifest.config["temperature"] = spec.temperature;
  manifest.config["backend_id"] = gw.text_backend_id();
  manifest.config["prompt_fixture_hashes"] = json{
      {"profile_generate",
       hash_template_dir(opt.prompts, gateway::PromptFamily::ProfileGenerate, domain)}};
  if (!opt.cassette.empty()) manifest.add_input(opt.cassette);
  manifest.add_input(pool_path);

  personalization::Rng rng(opt.seed);
  {
    jsonl::Writer out(fs::path(opt.out) / "profiles.jsonl");
    for (int i = 0; i < count; ++i) {
      std::ostringstream id;
      id << "gen-" << corpus::to_string(domain) << "-" << std::setw(4) << std::setfill('0')
         << (i + 1);
      auto profile = personalization::generate_profile(spec, domain, gw, tpl, rng, id.str());
      out.write(json{{"id", profile.id},
                     {"domain", corpus::to_string(profile.domain)},
                     {"biography", profile.biography},
                     {"seed_topics", profile.seed_topics}});
    }
  }
  manifest.outputs = {"profiles.jsonl"};
  manifest.write(opt.out);
  std::cout << "profiles written: " << count << "\n";
  return 0;
}

// ---- rank -------------------------------------------------------------

evaluation::UtilityLookup load_utility_labels(const fs::path& path) {
  evaluation::UtilityLookup lookup;
  jsonl::for_each_record(path, [&](const json& rec, int lineno) {
    const std::string ctx = path.filename().string() + ":" + std::to_string(lineno);
    lookup.set(jsonl::require_field<std::string>(rec, "user_id", ctx),
               jsonl::require_field<std::string>(rec, "review_id", ctx),
               jsonl::require_field<std::string>(rec, "aspect_surface", ctx),
               corpus::utility_numeric(corpus::utility_from_string(
                   jsonl::require_field<std::string>(rec, "label", ctx))));
  });
  return lookup;
}

// system aspect files are merged into the corpus so aspects_of_item sees them
corpus::Corpus with_system_aspects(const corpus::Corpus& base,
                                   const std::vector<corpus::AtypicalAspect>& aspects) {
  corpus::CorpusBuilder builder(base.domain());
  for (const auto& [id, item] : base.items()) {
    corpus::Item copy = item;
    copy.review_ids.clear();
    builder.add_item(copy);
  }
  for (const auto& [id, review] : base.reviews()) builder.add_review(review);
  for (const auto& [review_id, review] : base.reviews())
    for (const auto& a : base.aspects_of_review(review_id)) builder.add_aspect(a);
  for (const auto& a : aspects) builder.add_aspect(a);
  for (const auto& p : base.profiles()) builder.add_profile(p);
  for (const auto& h : base.hits()) builder.add_hit(h);
  for (const auto& q : base.queries()) builder.add_query(q);
  return builder.build();
}

int cmd_rank(const CommonOptions& opt, const std::string& in_dir, const std::string& strategy_name,
             const std::string& source, const std::string& aspects_path,
             const std::string& utilities_path, const std::string& layers) {
  corpus::Domain domain = domain_of(opt);
  corpus::Corpus c = corpus::load_corpus(in_dir, domain);
  gateway::Gateway gw = make_gateway(opt);
  scoring::Strategy strategy = scoring::strategy_from_string(strategy_name);

  corpus::Provenance provenance = corpus::Provenance::Gold;
  evaluation::UtilityLookup utilities;
  if (source == "gold") {
    utilities = evaluation::gold_utilities(c);
  } else if (source == "system") {
    if (aspects_path.empty() || utilities_path.empty())
      throw ConfigError("--source system requires --aspects and --utilities");
    c = with_system_aspects(c, load_aspect_file(aspects_path));
    utilities = load_utility_labels(utilities_path);
    provenance = corpus::Provenance::System;
  } else {
    throw ConfigError("unknown --source \"" + source + "\"");
  }

  ensure_out(opt);
  Manifest manifest;
  manifest.command = "rank";
  manifest.config = base_config(opt);
  manifest.config["strategy"] = scoring::to_string(strategy);
  manifest.config["source"] = source;
  manifest.config["layers"] = layers;
  manifest.config["in"] = in_dir;
  manifest.add_input(fs::path(in_dir) / "items.jsonl");
  manifest.add_input(fs::path(in_dir) / "reviews.jsonl");
  if (!aspects_path.empty()) manifest.add_input(aspects_path);
  if (!utilities_path.empty()) manifest.add_input(utilities_path);
  const std::string run_id = manifest.run_id();

  const auto layer_set = layers_of(layers);
  std::size_t rankings_written = 0;
  {
    jsonl::Writer out(fs::path(opt.out) / "rankings.jsonl");
    for (const auto& query : c.queries()) {
      auto matched = corpus::items_matching(c, query);
      for (const auto& user : c.profiles()) {
        std::vector<scoring::ScoredItem> scored;
        for (const auto& item : matched) {
          double score = evaluation::item_score(
              c, item.id, user.id, provenance, layer_set, utilities,
              scoring::strategy_uses_utilities(strategy), gw, nullptr);
          scored.push_back({item.id, score, item.star});
        }
        auto ranked = scoring::rank(std::move(scored), strategy);
        json entries = json::array();
        for (const auto& e : ranked.entries)
          entries.push_back(json{{"item_id", e.item_id}, {"score", e.score}, {"star", e.star}});
        out.write(json{{"query", query.category},
                       {"user_id", user.id},
                       {"strategy", scoring::to_string(strategy)},
                       {"ranking", entries},
                       {"run_id", run_id}});
        ++rankings_written;
      }
    }
  }
  manifest.outputs = {"rankings.jsonl"};
  manifest.write(opt.out);
  std::cout << "rankings written: " << rankings_written << "\n";
  return 0;
}

// ---- evaluate ---------------------------------------------------------

struct RankingRow {
  std::string query;
  std::string user_id;
  std::vector<std::string> item_ids;
};

std::vector<RankingRow> load_rankings(const fs::path& path) {
  std::vector<RankingRow> rows;
  jsonl::for_each_record(path, [&](const json& rec, int lineno) {
    const std::string ctx = path.filename().string() + ":" + std::to_string(lineno);
    RankingRow row;
    row.query = jsonl::require_field<std::string>(rec, "query", ctx);
    row.user_id = jsonl::require_field<std::string>(rec, "user_id", ctx);
    if (!rec.contains("ranking")) throw ParseError(ctx + ": missing field \"ranking\"");
    for (const auto& entry : rec.at("ranking"))
      row.item_ids.push_back(entry.at("item_id").get<std::string>());
    rows.push_back(std::move(row));
  });
  return rows;
}

int cmd_evaluate_rankings(const CommonOptions& opt, const std::string& sys_path,
                          const std::string& ref_path) {
  auto sys_rows = load_rankings(sys_path);
  auto ref_rows = load_rankings(ref_path);

  std::map<std::pair<std::string, std::string>, const RankingRow*> reference;
  for (const auto& row : ref_rows) reference[{row.query, row.user_id}] = &row;

  std::map<std::string, std::pair<double, std::size_t>> per_query;  // sum, count
  std::vector<json> cells;
  for (const auto& row : sys_rows) {
    auto it = reference.find({row.query, row.user_id});
    if (it == reference.end())
      throw SetMismatch("no reference ranking for (" + row.query + ", " + row.user_id + ")");
    double tau = evaluation::kendall_tau(row.item_ids, it->second->item_ids);
    per_query[row.query].first += tau;
    per_query[row.query].second += 1;
    cells.push_back(json{{"query", row.query}, {"user_id", row.user_id}, {"tau", tau}});
  }
  if (per_query.empty()) throw EmptyInput("no rankings to compare");

  std::vector<std::string> labels;
  std::vector<double> taus;
  double total = 0.0;
  for (const auto& [query, acc] : per_query) {
    labels.push_back(query);
    taus.push_back(acc.first / acc.second);
    total += taus.back();
  }
  double mean = total / taus.size();

  ensure_out(opt);
  Manifest manifest;
  manifest.command = "evaluate";
  manifest.config = base_config(opt, false);
  manifest.config["sys_rankings"] = sys_path;
  manifest.config["ref_rankings"] = ref_path;
  manifest.add_input(sys_path);
  manifest.add_input(ref_path);

  json report{{"domain", opt.domain},
              {"mode", "rankings"},
              {"tau_grid", json{{"query_labels", labels}, {"per_query_tau", taus}, {"Mean", mean}}},
              {"cells", cells},
              {"metrics", json{{"mean_tau", mean}}}};
  {
    std::ofstream out(fs::path(opt.out) / "eval_report.json");
    out << report.dump(2) << "\n";
  }
  {
    std::ofstream csv(fs::path(opt.out) / "eval_report.csv");
    for (std::size_t i = 0; i < taus.size(); ++i) csv << "q" << (i + 1) << ",";
    csv << "Mean\n";
    for (double t : taus) csv << t << ",";
    csv << mean << "\n";
  }
  manifest.outputs = {"eval_report.json", "eval_report.csv"};
  manifest.write(opt.out);
  std::cout << "mean tau: " << mean << "\n";
  return 0;
}

int cmd_evaluate_experiment(const CommonOptions& opt, const std::string& in_dir,
                            const std::string& sys_aspects_path,
                            const std::string& sys_utilities_path,
                            const std::string& system_strategy,
                            const std::string& reference_strategy, const std::string& layers) {
  corpus::Domain domain = domain_of(opt);
  corpus::Corpus c = corpus::load_corpus(in_dir, domain);
  gateway::Gateway gw = make_gateway(opt);

  evaluation::ExperimentConfig config;
  config.system_strategy = scoring::strategy_from_string(system_strategy);
  config.reference_strategy = scoring::strategy_from_string(reference_strategy);
  config.layers = layers_of(layers);

  evaluation::UtilityLookup system_utilities;
  std::vector<corpus::AtypicalAspect> system_aspects;
  if (!sys_aspects_path.empty()) {
    system_aspects = load_aspect_file(sys_aspects_path);
    c = with_system_aspects(c, system_aspects);
    config.system_aspects = corpus::Provenance::System;
    if (sys_utilities_path.empty() &&
        scoring::strategy_uses_utilities(config.system_strategy))
      throw ConfigError("--system-strategy with utilities requires --sys-utilities");
    if (!sys_utilities_path.empty()) system_utilities = load_utility_labels(sys_utilities_path);
  } else {
    // self-comparison: the system side reuses the gold data
    config.system_aspects = corpus::Provenance::Gold;
    system_utilities = evaluation::gold_utilities(c);
  }

  auto report = evaluation::run_ranking_experiment(c, c.profiles(), c.queries(),
                                                   system_utilities, config, gw);

  // span metrics of system vs gold extraction, macro-averaged over reviews
  json extraction_metrics;
  if (!sys_aspects_path.empty()) {
    std::map<std::string, std::vector<std::string>> system_by_review;
    for (const auto& a : system_aspects) system_by_review[a.review_id].push_back(a.surface);
    double exact_p = 0, exact_r = 0, exact_f = 0, partial_p = 0, partial_r = 0, partial_f = 0;
    std::size_t n = 0;
    for (const auto& [review_id, review] : c.reviews()) {
      std::vector<std::string> gold;
      for (const auto& a : c.aspects_of_review(review_id))
        if (a.provenance == corpus::Provenance::Gold && config.layers.count(a.layer))
          gold.push_back(a.surface);
      auto sys_it = system_by_review.find(review_id);
      std::vector<std::string> system =
          sys_it == system_by_review.end() ? std::vector<std::string>{} : sys_it->second;
      if (gold.empty() && system.empty()) continue;
      auto gp = evaluation::SpanSet::from_strings(gold);
      auto ep = evaluation::SpanSet::from_strings(system);
      auto exact = evaluation::exact_match(gp, ep);
      auto partial = evaluation::partial_match(gp, ep);
      exact_p += exact.precision;
      exact_r += exact.recall;
      exact_f += exact.f1;
      partial_p += partial.precision;
      partial_r += partial.recall;
      partial_f += partial.f1;
      ++n;
    }
    if (n > 0)
      extraction_metrics = json{
          {"reviews_scored", n},
          {"exact",
           json{{"precision", exact_p / n}, {"recall", exact_r / n}, {"f1", exact_f / n}}},
          {"partial", json{{"precision", partial_p / n},
                           {"recall", partial_r / n},
                           {"f1", partial_f / n}}}};
  }

  // utility metrics of system labels vs gold consensus
  json utility_metrics;
  if (!sys_utilities_path.empty()) {
    std::vector<evaluation::LabelPair> pairs;
    auto level_of = [](double v) {
      if (v >= 1.0) return corpus::UtilityLevel::High;
      if (v >= 0.75) return corpus::UtilityLevel::Medium;
      if (v >= 0.5) return corpus::UtilityLevel::Low;
      return corpus::UtilityLevel::None;
    };
    for (const auto& hit : corpus::accept_hits(c.hits()).accepted) {
      if (!system_utilities.contains(hit.user_id, hit.review_id, hit.aspect_surface)) continue;
      pairs.push_back({*hit.consensus, level_of(system_utilities.get(hit.user_id, hit.review_id,
                                                                     hit.aspect_surface))});
    }
    if (!pairs.empty()) {
      auto binary = evaluation::binary_prf(pairs);
      utility_metrics =
          json{{"pairs", pairs.size()},
               {"accuracy_4way",
                evaluation::utility_accuracy(pairs, evaluation::CostMatrix::four_way())},
               {"accuracy_2way",
                evaluation::utility_accuracy(pairs, evaluation::CostMatrix::two_way())},
               {"binary", json{{"precision", binary.precision},
                               {"recall", binary.recall},
                               {"f1", binary.f1}}}};
    }
  }

  json agreement;
  if (!c.hits().empty()) {
    auto acceptance = corpus::accept_hits(c.hits());
    auto stats_all = evaluation::agreement_stats(c.hits());
    json all{{"count", acceptance.total},
             {"mean_sigma", stats_all.mean_sigma},
             {"median_sigma", stats_all.median_sigma},
             {"max_sigma", stats_all.max_sigma}};
    json accepted;
    if (!acceptance.accepted.empty()) {
      auto stats_accepted = evaluation::agreement_stats(acceptance.accepted);
      accepted = json{{"count", acceptance.accepted_count},
                      {"mean_sigma", stats_accepted.mean_sigma},
                      {"median_sigma", stats_accepted.median_sigma},
                      {"max_sigma", stats_accepted.max_sigma}};
    }
    agreement = json{{"all", all}, {"accepted", accepted}};
  }

  ensure_out(opt);
  Manifest manifest;
  manifest.command = "evaluate";
  manifest.config = base_config(opt);
  manifest.config["system_strategy"] = system_strategy;
  manifest.config["reference_strategy"] = reference_strategy;
  manifest.config["layers"] = layers;
  manifest.config["tau_aggregation"] = "mean over users per query, then mean over queries";
  manifest.config["in"] = in_dir;
  manifest.add_input(fs::path(in_dir) / "items.jsonl");
  manifest.add_input(fs::path(in_dir) / "reviews.jsonl");
  if (!sys_aspects_path.empty()) manifest.add_input(sys_aspects_path);
  if (!sys_utilities_path.empty()) manifest.add_input(sys_utilities_path);

  json report_json{{"domain", opt.domain},
                   {"mode", "experiment"},
                   {"system_strategy", system_strategy},
                   {"reference_strategy", reference_strategy},
                   {"tau_grid", report.to_json()},
                   {"metrics", json{{"mean_tau", report.mean_tau}}},
                   {"extraction", extraction_metrics},
                   {"utility", utility_metrics},
                   {"agreement", agreement}};
  {
    std::ofstream out(fs::path(opt.out) / "eval_report.json");
    out << report_json.dump(2) << "\n";
  }
  {
    std::ofstream csv(fs::path(opt.out) / "eval_report.csv");
    csv << report.to_csv();
  }
  manifest.outputs = {"eval_report.json", "eval_report.csv"};
  manifest.write(opt.out);
  std::cout << "mean tau: " << report.mean_tau << " (skipped cells: " << report.skipped_cells
            << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"atypical-aspect serendipity re-ranking pipeline"};
  // INI config with one [subcommand] section per stage; flags override it
  app.set_config("--config");
  app.require_subcommand(1);

  CommonOptions ingest_opt, extract_opt, utility_opt, profiles_opt, rank_opt, eval_opt;

  std::string ingest_in;
  auto* ingest = app.add_subcommand("ingest", "validate and normalize corpus files");
  add_common(ingest, ingest_opt, false);
  ingest->add_option("--in", ingest_in, "raw corpus directory")->required();

  std::string extract_in, extract_bank, extract_layers = "primary+secondary";
  auto* extract = app.add_subcommand("extract", "extract atypical aspects from reviews");
  add_common(extract, extract_opt);
  extract->add_option("--in", extract_in, "corpus directory")->required();
  extract->add_option("--mode", extract_opt.mode, "0shot | fixed | dynamic");
  extract->add_option("--bank", extract_bank, "sentences.jsonl example bank");
  extract->add_option("--layers", extract_layers, "primary | primary+secondary");

  std::string utility_in, utility_aspects = "gold", utility_bank;
  auto* utility = app.add_subcommand("classify-utility", "classify aspect utility per user");
  add_common(utility, utility_opt);
  utility->add_option("--in", utility_in, "corpus directory")->required();
  utility->add_option("--mode", utility_opt.mode, "0shot | fixed | dynamic");
  utility->add_option("--aspects", utility_aspects, "\"gold\" or a system aspects.jsonl");
  utility->add_option("--bank", utility_bank, "triplets.jsonl example bank");

  std::string profiles_pool;
  int profiles_count = 10;
  auto* profiles = app.add_subcommand("gen-profiles", "generate synthetic user profiles");
  add_common(profiles, profiles_opt);
  profiles->add_option("--pool", profiles_pool, "aspect pool file, one aspect per line")
      ->required();
  profiles->add_option("--count", profiles_count, "number of profiles");

  std::string rank_in, rank_strategy = "star-seren", rank_source = "gold";
  std::string rank_aspects, rank_utilities, rank_layers = "primary+secondary";
  auto* rank = app.add_subcommand("rank", "rank items per query and user");
  add_common(rank, rank_opt);
  rank->add_option("--in", rank_in, "corpus directory")->required();
  rank->add_option("--strategy", rank_strategy,
                   "plain-seren | plain-sur | star-seren | star-sur | star-only");
  rank->add_option("--source", rank_source, "gold | system");
  rank->add_option("--aspects", rank_aspects, "system aspects.jsonl");
  rank->add_option("--utilities", rank_utilities, "utility_labels.jsonl");
  rank->add_option("--layers", rank_layers, "primary | primary+secondary");

  std::string eval_in, eval_sys_rankings, eval_ref_rankings;
  std::string eval_sys_aspects, eval_sys_utilities;
  std::string eval_system_strategy = "plain-seren", eval_reference_strategy = "plain-seren";
  std::string eval_layers = "primary+secondary";
  auto* evaluate = app.add_subcommand("evaluate", "correlate system rankings with ground truth");
  add_common(evaluate, eval_opt);
  evaluate->add_option("--in", eval_in, "corpus directory (experiment mode)");
  evaluate->add_option("--sys-rankings", eval_sys_rankings, "rankings.jsonl to evaluate");
  evaluate->add_option("--ref-rankings", eval_ref_rankings, "reference rankings.jsonl");
  evaluate->add_option("--sys-aspects", eval_sys_aspects, "system aspects.jsonl");
  evaluate->add_option("--sys-utilities", eval_sys_utilities, "system utility_labels.jsonl");
  evaluate->add_option("--system-strategy", eval_system_strategy, "system ranking strategy");
  evaluate->add_option("--reference-strategy", eval_reference_strategy,
                       "ground-truth ranking strategy");
  evaluate->add_option("--layers", eval_layers, "primary | primary+secondary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 3;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_opt, ingest_in);
    if (*extract) return cmd_extract(extract_opt, extract_in, extract_bank, extract_layers);
    if (*utility)
      return cmd_classify_utility(utility_opt, utility_in, utility_aspects, utility_bank);
    if (*profiles) return cmd_gen_profiles(profiles_opt, profiles_pool, profiles_count);
    if (*rank)
      return cmd_rank(rank_opt, rank_in, rank_strategy, rank_source, rank_aspects,
                      rank_utilities, rank_layers);
    if (*evaluate) {
      if (!eval_sys_rankings.empty()) {
        std::string ref = eval_ref_rankings.empty() ? eval_sys_rankings : eval_ref_rankings;
        return cmd_evaluate_rankings(eval_opt, eval_sys_rankings, ref);
      }
      if (eval_in.empty())
        throw ConfigError("evaluate needs --in (experiment mode) or --sys-rankings");
      return cmd_evaluate_experiment(eval_opt, eval_in, eval_sys_aspects, eval_sys_utilities,
                                     eval_system_strategy, eval_reference_strategy, eval_layers);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Data: return 1;
      case ErrorKind::Backend: return 2;
      case ErrorKind::Config: return 3;
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
