#include <doctest.h>

#include <random>
#include <set>
#include <fstream>
#include <sstream>

#include "atars/errors.hpp"
#include "atars/gateway.hpp"
#include "atars/text.hpp"
#include "paths.hpp"

using namespace atars;
using corpus::Domain;
using corpus::UtilityLevel;
using gateway::PromptFamily;

TEST_CASE("scripted backend is a prompt table") {
  gateway::ScriptedTextBackend backend;
  backend.add("p", "<pos> garden");
  CHECK(backend.generate({"p"}) == "<pos> garden");
  CHECK_THROWS_AS(backend.generate({"unknown"}), BackendUnavailable);
  CHECK_THROWS_AS(backend.generate({""}), EmptyText);
}

TEST_CASE("cassette round trip") {
  auto dir = testsupport::scratch_dir("cassette");
  gateway::ScriptedTextBackend backend;
  backend.add("prompt one", "answer one");
  backend.add("prompt two", "answer two");
  backend.save_cassette(dir / "c.jsonl");
  auto replayed = gateway::ScriptedTextBackend::from_cassette(dir / "c.jsonl");
  CHECK(replayed.generate({"prompt one"}) == "answer one");
  CHECK(replayed.generate({"prompt two"}) == "answer two");
}

TEST_CASE("hash text backend: deterministic per (prompt, seed)") {
  gateway::HashTextBackend a(7), b(7), c(8);
  CHECK(a.generate({"same prompt"}) == b.generate({"same prompt"}));
  CHECK(a.generate({"same prompt"}) != c.generate({"same prompt"}));
  CHECK(a.generate({"x"}) != a.generate({"y"}));
}

TEST_CASE("hash embeddings: unit norm, deterministic, distinct") {
  gateway::HashEmbedBackend backend(42);
  auto v1 = backend.embed("a garden behind the patio");
  auto v2 = backend.embed("a garden behind the patio");
  CHECK(v1.values == v2.values);
  CHECK(v1.norm() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(backend.embed("   "), EmptyText);

  // distinct strings should not collapse to the same direction
  std::mt19937 rng(1);
  const char* words[] = {"garden", "mural", "cat", "pond", "organ", "stage", "pier", "shirt"};
  int below_one = 0, pairs = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::string s1, s2;
    for (int w = 0; w < 4; ++w) {
      s1 += std::string(words[rng() % 8]) + " ";
      s2 += std::string(words[rng() % 8]) + " ";
    }
    if (s1 == s2) continue;
    ++pairs;
    if (gateway::cosine(backend.embed(s1), backend.embed(s2)) < 1.0 - 1e-12) ++below_one;
  }
  CHECK(below_one == pairs);
}

TEST_CASE("gateway enforces the request contract") {
  auto text_backend = std::make_shared<gateway::HashTextBackend>(1);
  auto embed_backend = std::make_shared<gateway::HashEmbedBackend>(1);
  gateway::Gateway gw(text_backend, embed_backend, 4);
  CHECK_FALSE(gw.generate({"hello"}).empty());
  CHECK(gw.embed("hello").norm() == doctest::Approx(1.0));
  CHECK_THROWS_AS(gateway::Gateway(text_backend, embed_backend, 0), ConfigError);
}

TEST_CASE("template loading enforces the family example capacity") {
  for (auto family : {PromptFamily::Step1Reformulate, PromptFamily::Step2Extract,
                      PromptFamily::UtilityClassify, PromptFamily::ProfileGenerate}) {
    for (auto domain : {Domain::Restaurants, Domain::Hotels, Domain::HairSalons}) {
      auto tpl = gateway::load_template(testsupport::prompts_dir(), family, domain);
      CHECK(tpl.examples.size() == gateway::example_capacity(family));
      CHECK_FALSE(tpl.instruction_text.empty());
      CHECK_FALSE(tpl.query_format.empty());
    }
  }
}

TEST_CASE("step1 restaurant template carries the sushi example verbatim") {
  auto tpl = gateway::load_template(testsupport::prompts_dir(), PromptFamily::Step1Reformulate,
                                    Domain::Restaurants);
  gateway::SlotValues slots;
  slots.review = "Some review text.";
  std::string prompt = gateway::render_prompt_fixed(tpl, slots);
  CHECK(prompt.find("Really good sushi - in a strip mall in Bristol.") != std::string::npos);
  CHECK(prompt.find("Example 1: ") != std::string::npos);
  CHECK(prompt.find("Output 3: ") != std::string::npos);
  CHECK(prompt.rfind("Now, read and process the following review: Some review text.") !=
        std::string::npos);
}

TEST_CASE("step2 rendering: 8 blocks in order, sentence last") {
  auto tpl = gateway::load_template(testsupport::prompts_dir(), PromptFamily::Step2Extract,
                                    Domain::Restaurants);
  gateway::SlotValues slots;
  slots.sentence = "The bar has a telescope on the roof.";
  std::string prompt = gateway::render_prompt_fixed(tpl, slots);

  std::size_t last = 0;
  for (int i = 1; i <= 8; ++i) {
    std::size_t at = prompt.find("Example " + std::to_string(i) + ": ");
    REQUIRE(at != std::string::npos);
    CHECK(at > last);
    last = at;
  }
  // fixed-8 includes the polaroids example
  CHECK(prompt.find("polaroids, geometric shapes, synthetic materials") != std::string::npos);
  std::size_t query = prompt.find("Now, read and process the following review sentence: The bar");
  REQUIRE(query != std::string::npos);
  CHECK(query > last);

  // zero-shot renders no example blocks
  std::string zero = gateway::render_prompt_zero_shot(tpl, slots);
  CHECK(zero.find("Example 1") == std::string::npos);
  CHECK(zero.find("<pos>") != std::string::npos);  // the instructions mention the tags

  // any other count is a slot mismatch
  std::vector<gateway::PromptExample> three(tpl.examples.begin(), tpl.examples.begin() + 3);
  CHECK_THROWS_AS(gateway::render_prompt(tpl, three, slots), SlotMismatch);
}

TEST_CASE("rendering is byte-deterministic and grows with filled slots") {
  auto tpl = gateway::load_template(testsupport::prompts_dir(), PromptFamily::UtilityClassify,
                                    Domain::Hotels);
  gateway::SlotValues slots;
  slots.profile = "A profile.";
  slots.sentence = "A sentence with a <ata>koi pond</ata>.";
  CHECK(gateway::render_prompt_fixed(tpl, slots) == gateway::render_prompt_fixed(tpl, slots));
  CHECK(gateway::render_prompt_fixed(tpl, slots).size() >
        gateway::render_prompt_zero_shot(tpl, slots).size());
}

TEST_CASE("parse_step1") {
  auto two = gateway::parse_step1("The restaurant has a pool table. They sell hats.");
  REQUIRE(two.size() == 2);
  CHECK(two[0] == "The restaurant has a pool table.");

  CHECK_THROWS_AS(gateway::parse_step1(""), EmptyOutput);
  CHECK_THROWS_AS(gateway::parse_step1("   \n "), EmptyOutput);

  // the sushi example output splits into exactly 5 aspect sentences
  auto five = gateway::parse_step1(
      "The restaurant has really good sushi. The restaurant is in a strip mall in Bristol. "
      "The restaurant has hibachi. This is a mom-and-pop type restaurant with a friendly "
      "atmosphere. If you're there for a special occasion, they'll take a polaroid and add it "
      "to their wall.");
  CHECK(five.size() == 5);
}

TEST_CASE("parse_step2: documented formats") {
  auto pos = gateway::parse_step2("Classification: <pos> Atypical Aspects: garden, art");
  CHECK(pos.positive);
  CHECK(pos.aspects == std::vector<std::string>{"garden", "art"});

  auto neg = gateway::parse_step2("Classification: <neg> Atypical Aspects: <None>");
  CHECK_FALSE(neg.positive);
  CHECK(neg.aspects.empty());

  // label on its own line
  auto multiline = gateway::parse_step2("Classification: <pos>\nAtypical Aspects: koi pond");
  CHECK(multiline.aspects == std::vector<std::string>{"koi pond"});

  // bare neg without the label
  CHECK_FALSE(gateway::parse_step2("<neg> <None>").positive);

  CHECK_THROWS_AS(gateway::parse_step2("no tags here"), UnparseableResponse);
  CHECK_THROWS_AS(gateway::parse_step2("Classification: <pos> Atypical Aspects: <None>"),
                  InconsistentResponse);
  CHECK_THROWS_AS(gateway::parse_step2("Classification: <neg> Atypical Aspects: garden"),
                  InconsistentResponse);
  CHECK_THROWS_AS(gateway::parse_step2("Classification: <pos> Atypical Aspects:"),
                  InconsistentResponse);
}

TEST_CASE("parse_utility: documented formats") {
  auto high = gateway::parse_utility(
      "A' = [(\"yoga & meditation\", \"High\")]\nExplanation: close match to the profile.");
  CHECK(high.aspect == "yoga & meditation");
  CHECK(high.label == UtilityLevel::High);
  CHECK(high.explanation == "close match to the profile.");

  // unbracketed variant
  auto none = gateway::parse_utility("A' = (\"piano room\", \"None\")");
  CHECK(none.aspect == "piano room");
  CHECK(none.label == UtilityLevel::None);

  CHECK_THROWS_AS(gateway::parse_utility("A' = [(\"x\", \"Highest\")]"), UnknownLabel);
  CHECK_THROWS_AS(gateway::parse_utility("nothing here"), UnparseableResponse);
}

TEST_CASE("rendered prompts byte-match the golden snapshots") {
  gateway::SlotValues slots;
  slots.review = "The restaurant has a small rooftop observatory. The pasta is handmade.";
  slots.sentence = "The restaurant has a small rooftop observatory.";
  slots.profile = "Casey is a librarian in Boise who restores antique telescopes and hosts a "
                  "stargazing club on weekends.";
  slots.topics = "rooftop observatory, antique telescopes";

  for (auto family : {PromptFamily::Step1Reformulate, PromptFamily::Step2Extract,
                      PromptFamily::UtilityClassify, PromptFamily::ProfileGenerate}) {
    for (auto domain : {Domain::Restaurants, Domain::Hotels, Domain::HairSalons}) {
      auto tpl = gateway::load_template(testsupport::prompts_dir(), family, domain);
      gateway::SlotValues s = slots;
      if (family == PromptFamily::UtilityClassify)
        s.sentence = "The restaurant has a small <ata>rooftop observatory</ata>.";
      std::string name =
          gateway::to_string(family) + "_" + corpus::to_string(domain) + ".txt";
      std::ifstream golden(testsupport::golden_dir() / name, std::ios::binary);
      REQUIRE(golden.good());
      std::ostringstream expected;
      expected << golden.rdbuf();
      CAPTURE(name);
      CHECK(gateway::render_prompt_fixed(tpl, s) == expected.str());
    }
  }
}

TEST_CASE("live backend construction validates config") {
  gateway::LiveBackendConfig config;
  CHECK_THROWS_AS(gateway::LiveTextBackend{config}, ConfigError);  // no endpoint
  config.endpoint = "https://example.invalid";
  config.model = "test-model";
  config.api_key_env = "ATARS_TEST_KEY_UNSET";
  CHECK_THROWS_AS(gateway::LiveTextBackend{config}, ConfigError);  // no key in env
}

TEST_CASE("recorded live smoke fixture replays offline") {
  // one recorded exchange for the step 1 prompt, replayed through the
  // cassette path that live-run recordings share
  auto tpl = gateway::load_template(testsupport::prompts_dir(), PromptFamily::Step1Reformulate,
                                    Domain::Restaurants);
  gateway::SlotValues slots;
  slots.review =
      "Really good sushi - in a strip mall in Bristol. This is a mom-and-pop type restaurant "
      "with a friendly atmosphere.";
  std::string prompt = gateway::render_prompt_fixed(tpl, slots);

  auto dir = testsupport::scratch_dir("live-smoke");
  {
    gateway::ScriptedTextBackend recorder;
    recorder.add(prompt,
                 "The restaurant has really good sushi. The restaurant is in a strip mall in "
                 "Bristol. This is a mom-and-pop type restaurant with a friendly atmosphere.");
    recorder.save_cassette(dir / "smoke.jsonl");
  }
  auto replay = gateway::ScriptedTextBackend::from_cassette(dir / "smoke.jsonl");
  std::string response = replay.generate({prompt});
  CHECK_FALSE(response.empty());
  CHECK(gateway::parse_step1(response).size() == 3);
}
