#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "adelta/error.hpp"
#include "json.hpp"

namespace adelta {

enum class DeltaMethod { ClipDiff, Learned, PairInversionMasked };

std::string_view to_string(DeltaMethod m);
DeltaMethod parse_delta_method(std::string_view s);

// A single 1 x d edit direction in tokenwise embedding space.
struct AttributeDelta {
  std::string attribute_name;
  std::vector<float> vector;
  std::string encoder_id;
  DeltaMethod method = DeltaMethod::ClipDiff;
  std::vector<std::string> training_nouns;
  std::string config_digest;
  std::string created_at;  // ISO-8601 UTC

  std::size_t dim() const noexcept { return vector.size(); }
  double norm() const;
  bool operator==(const AttributeDelta&) const = default;
};

// Stable hex digest of a JSON document (keys sorted, compact form).
std::string json_digest(const nlohmann::json& doc);

std::string utc_timestamp_now();

}  // namespace adelta
