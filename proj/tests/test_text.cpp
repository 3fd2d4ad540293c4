#include <doctest.h>

#include "atars/errors.hpp"
#include "atars/text.hpp"

using namespace atars;

TEST_CASE("casefold and surface keys") {
  CHECK(text::casefold("Pool Table") == "pool table");
  CHECK(text::surface_key("  Pool   Table ") == "pool table");
  CHECK(text::surface_key("pool table") == text::surface_key("Pool Table"));
}

TEST_CASE("sentence splitting keeps terminators and order") {
  auto s = text::split_sentences("The restaurant has a pool table. They sell hats.");
  REQUIRE(s.size() == 2);
  CHECK(s[0] == "The restaurant has a pool table.");
  CHECK(s[1] == "They sell hats.");

  CHECK(text::split_sentences("Wow! Really? Yes.").size() == 3);
  CHECK(text::split_sentences("no terminator at all").size() == 1);
  CHECK(text::split_sentences("...").empty());
  CHECK(text::split_sentences("").empty());
}

TEST_CASE("word tokenization strips punctuation and case") {
  auto t = text::tokenize_words("Goose Creek Park, behind the restaurant!");
  REQUIRE(t.size() == 6);
  CHECK(t[0] == "goose");
  CHECK(t[5] == "restaurant");
  CHECK(text::tokenize_words("!!!").empty());
}

TEST_CASE("sha256 matches the published test vector") {
  CHECK(text::sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(text::sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("placeholder substitution") {
  CHECK(text::substitute_placeholders("a {x} b", {{"x", "1"}}) == "a 1 b");
  CHECK_THROWS_AS(text::substitute_placeholders("a {y} b", {{"x", "1"}}), SlotMismatch);
}
