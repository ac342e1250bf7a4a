#include <fstream>
#include <thread>

#include "adelta/delta_file.hpp"
#include "adelta/registry.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adelta;

namespace {

AttributeDelta delta(const std::string& name, const std::string& encoder = "toy-aggregating", float v = 1.0f) {
  AttributeDelta d;
  d.attribute_name = name;
  d.encoder_id = encoder;
  d.vector = std::vector<float>(16, v);
  return d;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("missing or empty root is an empty registry") {
  Registry missing("/nonexistent/adelta-registry");
  CHECK(missing.list().empty());
  testing::ScratchDir dir("registry");
  Registry empty(dir.path());
  CHECK(empty.list().empty());
  CHECK(empty.warnings().empty());
}

TEST_CASE("save, list and lookup") {
  testing::ScratchDir dir("registry");
  Registry reg(dir.path());
  for (const char* n : {"smile", "age", "width"}) reg.save(delta(n));
  reg.save(delta("age", "toy-whitespace", 2.0f));
  CHECK(reg.path_for("age", "toy-aggregating") == dir.path() / "toy-aggregating" / "age.adlt");
  CHECK(std::filesystem::exists(dir.path() / "toy-whitespace" / "age.adlt"));

  const auto list = reg.list();
  REQUIRE(list.size() == 4);
  CHECK(list[0].name == "age");
  CHECK(list[0].encoder_id == "toy-aggregating");
  CHECK(list[1].name == "age");
  CHECK(list[1].encoder_id == "toy-whitespace");
  CHECK(list[2].name == "smile");
  CHECK(list[3].name == "width");

  CHECK(reg.get("age", "toy-whitespace")->vector[0] == 2.0f);
  CHECK(reg.get("smile")->attribute_name == "smile");
  CHECK(code_of([&] { reg.get("age"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { reg.get("nope"); }) == ErrorCode::NotFound);
  CHECK(code_of([&] { reg.get("smile", "toy-whitespace"); }) == ErrorCode::NotFound);

  Registry fresh(dir.path());
  CHECK(fresh.list().size() == 4);
}

TEST_CASE("corrupt, misplaced and duplicate files are skipped with warnings") {
  testing::ScratchDir dir("registry");
  Registry reg(dir.path());
  reg.save(delta("age"));
  reg.save(delta("smile"));
  {
    std::ofstream(dir.path() / "toy-aggregating" / "broken.adlt") << "garbage";
  }
  save_delta(delta("width", "toy-whitespace"), dir.path() / "toy-aggregating" / "width.adlt");
  save_delta(delta("age"), dir.path() / "toy-aggregating" / "age-copy.adlt");
  {
    std::ofstream(dir.path() / "toy-aggregating" / "notes.txt") << "ignored";
  }
  reg.reload();
  const auto list = reg.list();
  REQUIRE(list.size() == 2);
  CHECK(list[0].name == "age");
  CHECK(list[1].name == "smile");
  CHECK(reg.warnings().size() == 3);
}

TEST_CASE("path components are validated") {
  testing::ScratchDir dir("registry");
  Registry reg(dir.path());
  for (const char* bad : {"", ".", "..", "a/b", "a\\b"}) {
    CHECK(code_of([&] { reg.path_for(bad, "toy"); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { reg.path_for("age", bad); }) == ErrorCode::InvalidArgument);
  }
  CHECK(code_of([&] { reg.save(delta("../escape")); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("readers see a consistent snapshot during reloads") {
  testing::ScratchDir dir("registry");
  Registry reg(dir.path());
  for (int i = 0; i < 5; ++i) reg.save(delta("d" + std::to_string(i)));
  std::atomic<bool> stop{false};
  std::atomic<int> bad{0};
  std::thread reader([&] {
    while (!stop) {
      const auto l = reg.list();
      if (l.size() != 5) ++bad;
      for (const auto& e : l)
        if (!e.delta || e.delta->dim() != 16) ++bad;
    }
  });
  for (int i = 0; i < 50; ++i) reg.reload();
  stop = true;
  reader.join();
  CHECK(bad == 0);
}
