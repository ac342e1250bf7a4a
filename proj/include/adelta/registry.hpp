#pragma once

// On-disk catalog of delta files laid out as <root>/<encoder_id>/<name>.adlt.

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "adelta/delta.hpp"

namespace adelta {

struct RegistryEntry {
  std::string name;
  std::string encoder_id;
  std::filesystem::path path;
  std::shared_ptr<const AttributeDelta> delta;
};

class Registry {
 public:
  // Scans the root; a missing root is an empty registry.
  explicit Registry(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  // Re-scans the root. Unreadable or corrupt files are skipped and reported
  // through warnings().
  void reload();

  // Sorted by (name, encoder_id).
  std::vector<RegistryEntry> list() const;
  std::vector<std::string> warnings() const;

  // Throws NotFound.
  std::shared_ptr<const AttributeDelta> get(std::string_view name, std::string_view encoder_id) const;
  // Name lookup across encoders; throws NotFound, or InvalidArgument when
  // the name exists for several encoders.
  std::shared_ptr<const AttributeDelta> get(std::string_view name) const;

  std::filesystem::path path_for(std::string_view name, std::string_view encoder_id) const;

  // Writes the delta file and adds it to the index.
  std::filesystem::path save(const AttributeDelta& delta);

 private:
  struct Snapshot {
    std::vector<RegistryEntry> entries;
    std::vector<std::string> warnings;
  };
  std::shared_ptr<const Snapshot> snapshot() const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
};

}  // namespace adelta
