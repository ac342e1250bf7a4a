#include "adelta/delta_file.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "adelta/image.hpp"

namespace adelta {
namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

nlohmann::json delta_header(const AttributeDelta& delta) {
  return {{"attribute_name", delta.attribute_name},
          {"method", std::string(to_string(delta.method))},
          {"encoder_id", delta.encoder_id},
          {"embedding_dim", delta.dim()},
          {"training_nouns", delta.training_nouns},
          {"config_digest", delta.config_digest},
          {"created_at", delta.created_at}};
}

std::vector<std::uint8_t> serialize_delta(const AttributeDelta& delta) {
  const std::string header = delta_header(delta).dump();
  std::vector<std::uint8_t> out{'A', 'D', 'L', 'T'};
  put_u16(out, kDeltaFileVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.reserve(out.size() + 4 * delta.dim());
  for (float f : delta.vector) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

AttributeDelta parse_delta(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ADLT", 4) != 0)
    throw Error(ErrorCode::BadMagic, "not a delta file (magic mismatch)");
  if (bytes.size() < 10) throw Error(ErrorCode::CorruptHeader, "truncated preamble");
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kDeltaFileVersion)
    throw Error(ErrorCode::UnsupportedVersion, "delta file version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(bytes.data() + 6);
  if (header_len > bytes.size() - 10) throw Error(ErrorCode::CorruptHeader, "header length exceeds file size");

  const std::string header_text(bytes.begin() + 10, bytes.begin() + 10 + header_len);
  AttributeDelta d;
  std::size_t dim = 0;
  try {
    const auto h = nlohmann::json::parse(header_text);
    d.attribute_name = h.at("attribute_name").get<std::string>();
    d.method = parse_delta_method(h.at("method").get<std::string>());
    d.encoder_id = h.at("encoder_id").get<std::string>();
    dim = h.at("embedding_dim").get<std::size_t>();
    d.training_nouns = h.at("training_nouns").get<std::vector<std::string>>();
    d.config_digest = h.at("config_digest").get<std::string>();
    d.created_at = h.at("created_at").get<std::string>();
  } catch (const Error&) {
    throw Error(ErrorCode::CorruptHeader, "unknown delta method in header");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptHeader, e.what());
  }

  const std::size_t payload = bytes.size() - 10 - header_len;
  if (payload != 4 * dim)
    throw Error(ErrorCode::DimMismatchOnLoad, "header declares " + std::to_string(dim) + " values, payload has " +
                                                  std::to_string(payload) + " bytes");
  d.vector.resize(dim);
  const std::uint8_t* p = bytes.data() + 10 + header_len;
  for (std::size_t i = 0; i < dim; ++i) d.vector[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  return d;
}

void save_delta(const AttributeDelta& delta, const std::filesystem::path& path) {
  static std::atomic<unsigned> counter{0};
  const auto bytes = serialize_delta(delta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1));
  write_file(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::IoError, "cannot rename into " + path.string() + ": " + ec.message());
  }
}

AttributeDelta load_delta(const std::filesystem::path& path) { return parse_delta(read_file(path)); }

}  // namespace adelta
