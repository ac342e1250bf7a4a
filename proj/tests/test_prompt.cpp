#include <set>
#include <tuple>

#include "adelta/prompt.hpp"
#include "adelta/prompt_set_io.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adelta;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::IoError;
}

ContrastivePromptSet make_set(std::vector<std::string> prefixes,
                              std::vector<std::tuple<std::string, std::string, std::string>> tuples) {
  ContrastivePromptSet s;
  s.attribute_name = "test";
  s.prefixes = std::move(prefixes);
  for (auto& [n, z, p] : tuples)
    s.tuples.push_back({MarkedPhrase::parse(n), MarkedPhrase::parse(z), MarkedPhrase::parse(p)});
  return s;
}

}  // namespace

TEST_CASE("locate_subject on a whitespace prompt") {
  auto enc = testing::toy_encoder(false);
  const auto tp = enc->encode("a photo of a woman");
  const auto span = locate_subject(tp, "woman");
  CHECK(span.start == 5);
  CHECK(span.end == 6);
  CHECK(span_text(tp, span) == "woman");
  CHECK(locate_subject(tp, "WOMAN").start == 5);
  CHECK(code_of([&] { locate_subject(tp, "unicorn"); }) == ErrorCode::SubjectNotFound);
  CHECK(code_of([&] { locate_subject(tp, "woman", 1); }) == ErrorCode::SubjectNotFound);
}

TEST_CASE("matches inside larger words are rejected") {
  auto enc = testing::toy_encoder(false);
  const auto tp = enc->encode("a photo of a woman");
  CHECK(code_of([&] { locate_subject(tp, "man"); }) == ErrorCode::AmbiguousSubword);
  // With a whole-word match present the partial one is ignored.
  const auto tp2 = enc->encode("a woman and a man");
  CHECK(locate_subject(tp2, "man").start == 5);
}

TEST_CASE("subword subjects span several tokens") {
  auto enc = testing::toy_encoder(false);
  const auto tp = enc->encode("a photo of a firefighter");
  REQUIRE(tp.size() == 8);
  const auto span = locate_subject(tp, "firefighter");
  CHECK(span.start == 5);
  CHECK(span.end == 7);
  CHECK(span.length() == 2);
  CHECK(span_text(tp, span) == "firefighter");
  CHECK(code_of([&] { locate_subject(tp, "fire"); }) == ErrorCode::AmbiguousSubword);
}

TEST_CASE("occurrences and the all flag") {
  auto enc = testing::toy_encoder(false);
  const auto tp = enc->encode("a man next to a man, and a Man");
  const auto all = locate_all(tp, "man");
  REQUIRE(all.size() == 3);
  CHECK(locate_subject(tp, "man", 1) == all[1]);
  CHECK(all[2].occurrence == 2);
  CHECK(resolve_spans(tp, "man", Occurrence::every()).size() == 3);
  CHECK(resolve_spans(tp, "man", Occurrence::nth(2)).front() == all[2]);
  CHECK(code_of([&] { locate_subject(tp, "man", 3); }) == ErrorCode::SubjectNotFound);
}

TEST_CASE("multi-word subjects") {
  auto enc = testing::toy_encoder(false);
  const auto tp = enc->encode("a red sports car on a street");
  const auto span = locate_subject(tp, "sports car");
  CHECK(span.start == 3);
  CHECK(span.end == 5);
}

TEST_CASE("tokens tile the text left to right") {
  auto enc = testing::toy_encoder(false);
  const auto tp = enc->encode("A photo, of an old-ish firefighter!");
  std::size_t prev_end = 0;
  for (const auto& t : tp.tokens) {
    if (t.special) continue;
    CHECK(t.char_begin >= prev_end);
    CHECK(t.char_end > t.char_begin);
    prev_end = t.char_end;
  }
  CHECK(prev_end <= tp.text.size());
}

TEST_CASE("marked phrases") {
  const auto p = MarkedPhrase::parse("an old [person] smiling");
  CHECK(p.text == "an old person smiling");
  CHECK(p.subject == "person");
  CHECK(p.before_subject() == "an old ");
  CHECK(p.after_subject() == " smiling");
  CHECK(p.authored() == "an old [person] smiling");
  CHECK(code_of([] { MarkedPhrase::parse("no marker"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { MarkedPhrase::parse("[a] and [b]"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { MarkedPhrase::parse("empty []"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("article fix-up") {
  CHECK(join_prefix("a photo of a", "old person", true) == "a photo of an old person");
  CHECK(join_prefix("a photo of an", "young person", true) == "a photo of a young person");
  CHECK(join_prefix("a photo of a", "old person", false) == "a photo of a old person");
  CHECK(join_prefix("", "old person", true) == "old person");
  CHECK(join_prefix("A", "elderly man", true) == "An elderly man");
  CHECK(join_prefix("a photo of", "old person", true) == "a photo of old person");
}

TEST_CASE("expansion is the prefix-major product") {
  const auto one = make_set({"a photo of a"}, {{"young [person]", "[person]", "old [person]"}});
  const auto t = expand_prompt_set(one);
  REQUIRE(t.size() == 1);
  CHECK(t[0].minus == "a photo of a young person");
  CHECK(t[0].neutral == "a photo of a person");
  CHECK(t[0].plus == "a photo of an old person");
  CHECK(t[0].subject == "person");

  std::vector<std::string> prefixes;
  for (int i = 0; i < 10; ++i) prefixes.push_back("prefix" + std::to_string(i) + " of a");
  std::vector<std::tuple<std::string, std::string, std::string>> tuples;
  for (int j = 0; j < 9; ++j) {
    const std::string n = "noun" + std::to_string(j);
    tuples.emplace_back("young [" + n + "]", "[" + n + "]", "old [" + n + "]");
  }
  const auto big = expand_prompt_set(make_set(prefixes, tuples));
  CHECK(big.size() == 10 * 9);
  CHECK(big[8].plus.rfind("prefix0", 0) == 0);
  CHECK(big[9].plus.rfind("prefix1", 0) == 0);
  std::set<std::tuple<std::string, std::string, std::string>> unique;
  for (const auto& x : big) unique.emplace(x.minus, x.neutral, x.plus);
  CHECK(unique.size() == big.size());
}

TEST_CASE("prompt-set validation") {
  CHECK(code_of([] { expand_prompt_set(make_set({}, {{"a [x]", "[x]", "b [x]"}})); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([] { expand_prompt_set(make_set({""}, {})); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { expand_prompt_set(make_set({""}, {{"a [x]", "[y]", "b [x]"}})); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("causal-order warnings") {
  const auto ok = make_set({""}, {{"young [person]", "[person]", "old [person]"}});
  CHECK(causal_order_warnings(ok).empty());
  const auto late = make_set({""}, {{"[person] who is young", "[person]", "[person] who is old"}});
  CHECK(causal_order_warnings(late).size() == 1);
}

TEST_CASE("prompt-set documents round-trip") {
  testing::ScratchDir dir("promptset");
  const auto set = builtin_prompt_set("age");
  save_prompt_set(set, dir.path() / "age.json");
  const auto back = load_prompt_set(dir.path() / "age.json");
  CHECK(prompt_set_to_json(back) == prompt_set_to_json(set));
  CHECK(resolve_prompt_set((dir.path() / "age.json").string()).attribute_name == "age");
  CHECK(code_of([] { builtin_prompt_set("nope"); }) == ErrorCode::NotFound);
  CHECK(code_of([] { prompt_set_from_json(nlohmann::json{{"attribute_name", 3}}); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] { load_prompt_set(dir.path() / "missing.json"); }) == ErrorCode::IoError);
}

TEST_CASE("built-in sets cover the canonical attributes") {
  const auto names = builtin_prompt_set_names();
  for (const char* n : {"age", "width", "smile", "elegance", "makeup", "muscularity", "curly_hair", "long_hair"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
}

TEST_CASE("located spans read back their word over the built-in corpus") {
  auto enc = testing::toy_encoder(true);
  std::size_t checked = 0;
  for (const auto& name : builtin_prompt_set_names()) {
    for (const auto& t : expand_prompt_set(builtin_prompt_set(name))) {
      for (const auto* text : {&t.minus, &t.neutral, &t.plus}) {
        const auto tp = enc->encode(*text);
        const auto span = locate_subject(tp, t.subject);
        CHECK(span_text(tp, span) == to_lower(t.subject));
        for (std::size_t r = span.start; r < span.end; ++r) CHECK(!tp.tokens[r].special);
        ++checked;
      }
    }
  }
  CHECK(checked > 500);
}
