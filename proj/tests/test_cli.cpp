#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run run(const testing::ScratchDir& dir, const std::string& args) {
  const auto err_path = dir.path() / "stderr.txt";
  const std::string cmd = std::string("'") + ADELTA_CLI_PATH + "' --registry '" + (dir.path() / "reg").string() +
                          "' " + args + " 2>'" + err_path.string() + "'";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_path);
  return r;
}

std::string p(const testing::ScratchDir& dir, const std::string& name) { return (dir.path() / name).string(); }

}  // namespace

TEST_CASE("train without a prompt set prints the defaults") {
  testing::ScratchDir dir("cli");
  const Run r = run(dir, "train");
  CHECK(r.code == 0);
  CHECK(r.out.find("steps=1000") != std::string::npos);
  CHECK(r.out.find("lr=0.1") != std::string::npos);
  CHECK(r.out.find("betas=0.5,0.8") != std::string::npos);
  CHECK(r.out.find("weight_decay=0.333") != std::string::npos);
  CHECK(r.out.find("alpha_range=-5:5") != std::string::npos);
  CHECK(r.out.find("alpha_exclusion=-0.1:0.1") != std::string::npos);
}

TEST_CASE("usage errors exit with 1") {
  testing::ScratchDir dir("cli");
  CHECK(run(dir, "bogus").code == 1);
  CHECK(run(dir, "").code == 1);
  CHECK(run(dir, "apply --prompt x").code == 1);
  CHECK(run(dir, "--help").code == 0);
}

TEST_CASE("extract, list, apply") {
  testing::ScratchDir dir("cli");
  const Run ex = run(dir, "extract --prompt-set smile");
  REQUIRE_MESSAGE(ex.code == 0, ex.err);
  const json exj = json::parse(ex.out);
  CHECK(exj["attribute_name"] == "smile");
  CHECK(exj["pair_count"].get<int>() > 0);
  CHECK(std::filesystem::exists(dir.path() / "reg" / "toy-aggregating" / "smile.adlt"));

  const Run ls = run(dir, "ls --json");
  REQUIRE(ls.code == 0);
  const json lsj = json::parse(ls.out);
  REQUIRE(lsj.size() == 1);
  CHECK(lsj[0]["name"] == "smile");
  CHECK(lsj[0]["method"] == "clip_diff");
  CHECK(lsj[0]["embedding_dim"] == 16);

  const std::string prompt = "--prompt 'a photo of a woman' --seed 9";
  REQUIRE(run(dir, "apply " + prompt + " --out " + p(dir, "base.png")).code == 0);
  REQUIRE(run(dir, "apply " + prompt + " --delta smile --subject woman --scale 0 --out " + p(dir, "zero.png")).code ==
          0);
  REQUIRE(run(dir, "apply " + prompt + " --delta smile --subject woman --scale 3 --out " + p(dir, "a.png")).code == 0);
  const Run again =
      run(dir, "apply " + prompt + " --delta smile --subject woman --scale 3 --out " + p(dir, "b.png"));
  REQUIRE(again.code == 0);
  CHECK(json::parse(again.out)["provenance"]["applications"][0]["delta"] == "smile");

  const std::string base = slurp(dir.path() / "base.png");
  CHECK(base.size() > 8);
  CHECK(slurp(dir.path() / "zero.png") == base);
  CHECK(slurp(dir.path() / "a.png") == slurp(dir.path() / "b.png"));
  CHECK(slurp(dir.path() / "a.png") != base);

  // The delta can also be named by path.
  const std::string file = (dir.path() / "reg" / "toy-aggregating" / "smile.adlt").string();
  REQUIRE(run(dir, "apply " + prompt + " --delta '" + file + "' --subject woman --scale 3 --out " + p(dir, "c.png"))
              .code == 0);
  CHECK(slurp(dir.path() / "c.png") == slurp(dir.path() / "a.png"));
}

TEST_CASE("runtime errors exit with 2 and a JSON line") {
  testing::ScratchDir dir("cli");
  REQUIRE(run(dir, "extract --prompt-set age").code == 0);
  const Run bad = run(dir, "apply --prompt 'a photo of a woman' --delta age --subject dog --scale 1 --out " +
                               p(dir, "x.png"));
  CHECK(bad.code == 2);
  const json err = json::parse(bad.err.substr(0, bad.err.find('\n')));
  CHECK(err["error"]["code"] == "SubjectNotFound");
  CHECK(!err["error"]["message"].get<std::string>().empty());
  CHECK_FALSE(std::filesystem::exists(dir.path() / "x.png"));

  const Run missing = run(dir, "apply --prompt 'a photo of a woman' --delta nope --subject woman --out " +
                                   p(dir, "y.png"));
  CHECK(missing.code == 2);
  CHECK(json::parse(missing.err.substr(0, missing.err.find('\n')))["error"]["code"] == "NotFound");

  const Run delay = run(dir, "apply --prompt 'a photo of a woman' --delta age --subject woman --scale 1 --delay 60 "
                             "--out " + p(dir, "z.png"));
  CHECK(delay.code == 2);
  CHECK(json::parse(delay.err.substr(0, delay.err.find('\n')))["error"]["code"] == "DelayExceedsSteps");
}

TEST_CASE("sweep writes a manifest") {
  testing::ScratchDir dir("cli");
  REQUIRE(run(dir, "extract --prompt-set width").code == 0);
  REQUIRE(run(dir, "extract --prompt-set smile").code == 0);
  const Run r = run(dir, "sweep --prompt 'a photo of a woman' --seed 1 --axis width:woman:-2:2:5 "
                         "--axis2 smile:woman:0:1:2 --out " + p(dir, "grid"));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const json m = json::parse(slurp(dir.path() / "grid" / "manifest.json"));
  CHECK(m["rows"] == 5);
  CHECK(m["cols"] == 2);
  REQUIRE(m["cells"].size() == 10);
  int unmodified = 0;
  for (const auto& c : m["cells"]) {
    CHECK(std::filesystem::exists(dir.path() / "grid" / c["image"].get<std::string>()));
    unmodified += c["unmodified"].get<bool>();
  }
  CHECK(unmodified == 1);
  CHECK(m["cells"][4]["unmodified"] == true);
}

TEST_CASE("eval writes a CSV and an SVG") {
  testing::ScratchDir dir("cli");
  REQUIRE(run(dir, "extract --prompt-set smile").code == 0);
  const Run r = run(dir, "eval --delta smile --nouns woman,man --scales -1,0,1 --seeds 3 --steps 10 --out " +
                             p(dir, "eval.csv") + " --svg " + p(dir, "eval.svg"));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string csv = slurp(dir.path() / "eval.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 3 * 3);
  CHECK(slurp(dir.path() / "eval.svg").find("<svg") != std::string::npos);
  CHECK(json::parse(r.out)["rows"] == 18);
}

TEST_CASE("train and invert-pair produce deltas") {
  testing::ScratchDir dir("cli");
  const Run t = run(dir, "train --prompt-set age --steps 20 --log " + p(dir, "log.jsonl"));
  REQUIRE_MESSAGE(t.code == 0, t.err);
  CHECK(std::filesystem::exists(dir.path() / "reg" / "toy-aggregating" / "age.adlt"));
  const std::string log = slurp(dir.path() / "log.jsonl");
  CHECK(std::count(log.begin(), log.end(), '\n') == 20);

  REQUIRE(run(dir, "apply --prompt 'a photo of an old smiling woman' --seed 0 --out " + p(dir, "t.png")).code == 0);
  const Run iv = run(dir, "invert-pair --image " + p(dir, "t.png") + " --caption 'a photo of a woman' --steps 50 --lr "
                          "0.001 --out " + p(dir, "pair.json") + " --subject woman --name oldsmile");
  REQUIRE_MESSAGE(iv.code == 0, iv.err);
  const json ivj = json::parse(iv.out);
  CHECK(ivj["final_loss"].get<double>() < ivj["initial_loss"].get<double>());
  CHECK(std::filesystem::exists(dir.path() / "reg" / "toy-aggregating" / "oldsmile.adlt"));
  CHECK(std::filesystem::exists(dir.path() / "pair.json"));
}
