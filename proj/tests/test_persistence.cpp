#include <bit>
#include <cstring>
#include <fstream>

#include "adelta/delta_file.hpp"
#include "adelta/random.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adelta;

namespace {

AttributeDelta random_delta(std::uint64_t seed, std::size_t dim) {
  CounterRng rng(seed);
  AttributeDelta d;
  d.attribute_name = "attr" + std::to_string(seed);
  d.encoder_id = "toy-aggregating";
  d.method = static_cast<DeltaMethod>(seed % 3);
  d.training_nouns = {"person", "dog"};
  d.config_digest = "0123456789abcdef";
  d.created_at = "2026-01-02T03:04:05Z";
  d.vector.resize(dim);
  // Arbitrary bit patterns, NaN payloads and denormals included.
  for (auto& v : d.vector) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next_u64()));
  return d;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

ErrorCode parse_code(const std::vector<std::uint8_t>& bytes) {
  try {
    parse_delta(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

std::uint32_t u32_at(const std::vector<std::uint8_t>& b, std::size_t off) {
  return b[off] | (b[off + 1] << 8) | (b[off + 2] << 16) | (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

}  // namespace

TEST_CASE("wire layout") {
  AttributeDelta d = random_delta(1, 3);
  d.vector = {1.0f, -2.0f, 0.5f};
  const auto bytes = serialize_delta(d);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "ADLT");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  const std::uint32_t hlen = u32_at(bytes, 6);
  REQUIRE(bytes.size() == 10 + hlen + 12);
  const auto header = nlohmann::json::parse(std::string(bytes.begin() + 10, bytes.begin() + 10 + hlen));
  CHECK(header["embedding_dim"] == 3);
  CHECK(header["attribute_name"] == d.attribute_name);
  CHECK(header["encoder_id"] == "toy-aggregating");
  CHECK(header["training_nouns"] == nlohmann::json::array({"person", "dog"}));
  for (const char* k : {"method", "config_digest", "created_at"}) CHECK(header.contains(k));
  // 1.0f = 0x3f800000 little-endian.
  CHECK(u32_at(bytes, 10 + hlen) == 0x3f800000u);
  CHECK(u32_at(bytes, 10 + hlen + 4) == 0xc0000000u);
}

TEST_CASE("round-trip over 100 random vectors") {
  testing::ScratchDir dir("persist");
  CounterRng rng(77);
  for (std::uint64_t i = 0; i < 100; ++i) {
    const std::size_t dim = 1 + rng.below(3000);
    const auto d = random_delta(i, dim);
    const auto back = parse_delta(serialize_delta(d));
    CHECK(same_bits(back.vector, d.vector));
    CHECK(back.attribute_name == d.attribute_name);
    CHECK(back.method == d.method);
    CHECK(back.training_nouns == d.training_nouns);
    CHECK(back.config_digest == d.config_digest);
    CHECK(back.created_at == d.created_at);
    if (i % 10 == 0) {
      const auto path = dir.path() / ("d" + std::to_string(i) + ".adlt");
      save_delta(d, path);
      CHECK(same_bits(load_delta(path).vector, d.vector));
    }
  }
}

TEST_CASE("2048-wide deltas round-trip") {
  testing::ScratchDir dir("persist");
  const auto d = random_delta(5, 2048);
  save_delta(d, dir.path() / "wide.adlt");
  const auto back = load_delta(dir.path() / "wide.adlt");
  CHECK(back.dim() == 2048);
  CHECK(same_bits(back.vector, d.vector));
  CHECK(delta_header(back) == delta_header(d));
}

TEST_CASE("corrupted-file taxonomy") {
  const auto good = serialize_delta(random_delta(2, 16));
  const std::uint32_t hlen = u32_at(good, 6);

  auto magic = good;
  std::memcpy(magic.data(), "XXXX", 4);
  CHECK(parse_code(magic) == ErrorCode::BadMagic);
  CHECK(parse_code({'A', 'D'}) == ErrorCode::BadMagic);
  CHECK(parse_code({}) == ErrorCode::BadMagic);

  CHECK(parse_code({'A', 'D', 'L', 'T', 1, 0, 0}) == ErrorCode::CorruptHeader);

  auto version = good;
  version[4] = 2;
  CHECK(parse_code(version) == ErrorCode::UnsupportedVersion);

  auto long_header = good;
  long_header[9] = 0x7f;
  CHECK(parse_code(long_header) == ErrorCode::CorruptHeader);

  auto bad_json = good;
  bad_json[10] = '!';
  CHECK(parse_code(bad_json) == ErrorCode::CorruptHeader);

  auto truncated = good;
  truncated.resize(truncated.size() - 4);
  CHECK(parse_code(truncated) == ErrorCode::DimMismatchOnLoad);
  auto extra = good;
  extra.push_back(0);
  CHECK(parse_code(extra) == ErrorCode::DimMismatchOnLoad);

  // Header without a required field.
  auto header = nlohmann::json::parse(std::string(good.begin() + 10, good.begin() + 10 + hlen));
  header.erase("encoder_id");
  const std::string h = header.dump();
  std::vector<std::uint8_t> missing{'A', 'D', 'L', 'T', 1, 0};
  for (int s = 0; s < 32; s += 8) missing.push_back(static_cast<std::uint8_t>(h.size() >> s));
  missing.insert(missing.end(), h.begin(), h.end());
  missing.insert(missing.end(), good.begin() + 10 + hlen, good.end());
  CHECK(parse_code(missing) == ErrorCode::CorruptHeader);

  auto method = nlohmann::json::parse(std::string(good.begin() + 10, good.begin() + 10 + hlen));
  method["method"] = "magic";
  const std::string hm = method.dump();
  std::vector<std::uint8_t> bad_method{'A', 'D', 'L', 'T', 1, 0};
  for (int s = 0; s < 32; s += 8) bad_method.push_back(static_cast<std::uint8_t>(hm.size() >> s));
  bad_method.insert(bad_method.end(), hm.begin(), hm.end());
  bad_method.insert(bad_method.end(), good.begin() + 10 + hlen, good.end());
  CHECK(parse_code(bad_method) == ErrorCode::CorruptHeader);

  try {
    load_delta("/nonexistent/x.adlt");
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
}

TEST_CASE("saving leaves no temporary files behind") {
  testing::ScratchDir dir("persist");
  save_delta(random_delta(3, 8), dir.path() / "a.adlt");
  save_delta(random_delta(4, 8), dir.path() / "a.adlt");
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    (void)e;
    ++n;
  }
  CHECK(n == 1);
  CHECK(load_delta(dir.path() / "a.adlt").attribute_name == "attr4");
}

TEST_CASE("delta method names") {
  for (auto m : {DeltaMethod::ClipDiff, DeltaMethod::Learned, DeltaMethod::PairInversionMasked})
    CHECK(parse_delta_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_delta_method("other"), Error);
}
