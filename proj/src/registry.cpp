#include "adelta/registry.hpp"

#include <algorithm>
#include <tuple>

#include "adelta/delta_file.hpp"

namespace adelta {
namespace fs = std::filesystem;

namespace {

void check_component(std::string_view s, const char* what) {
  if (s.empty() || s == "." || s == ".." || s.find_first_of("/\\") != std::string_view::npos)
    throw Error(ErrorCode::InvalidArgument, std::string("invalid ") + what + " '" + std::string(s) + "'");
}

}  // namespace

Registry::Registry(fs::path root) : root_(std::move(root)) { reload(); }

void Registry::reload() {
  auto snap = std::make_shared<Snapshot>();
  std::error_code ec;
  if (fs::is_directory(root_, ec)) {
    std::vector<fs::path> files;
    for (const auto& enc_dir : fs::directory_iterator(root_)) {
      if (!enc_dir.is_directory()) continue;
      for (const auto& f : fs::directory_iterator(enc_dir.path()))
        if (f.is_regular_file() && f.path().extension() == ".adlt") files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
      const std::string encoder_dir = path.parent_path().filename().string();
      try {
        auto delta = std::make_shared<AttributeDelta>(load_delta(path));
        if (delta->encoder_id != encoder_dir) {
          snap->warnings.push_back(path.string() + ": encoder " + delta->encoder_id +
                                   " does not match its directory");
          continue;
        }
        const bool dup = std::any_of(snap->entries.begin(), snap->entries.end(), [&](const RegistryEntry& e) {
          return e.name == delta->attribute_name && e.encoder_id == delta->encoder_id;
        });
        if (dup) {
          snap->warnings.push_back(path.string() + ": duplicate delta '" + delta->attribute_name + "'");
          continue;
        }
        snap->entries.push_back({delta->attribute_name, delta->encoder_id, path, delta});
      } catch (const std::exception& e) {
        snap->warnings.push_back(path.string() + ": " + e.what());
      }
    }
  }
  std::sort(snap->entries.begin(), snap->entries.end(), [](const RegistryEntry& a, const RegistryEntry& b) {
    return std::tie(a.name, a.encoder_id) < std::tie(b.name, b.encoder_id);
  });
  std::lock_guard lock(mutex_);
  snapshot_ = std::move(snap);
}

std::shared_ptr<const Registry::Snapshot> Registry::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_;
}

std::vector<RegistryEntry> Registry::list() const { return snapshot()->entries; }

std::vector<std::string> Registry::warnings() const { return snapshot()->warnings; }

std::shared_ptr<const AttributeDelta> Registry::get(std::string_view name, std::string_view encoder_id) const {
  const auto snap = snapshot();
  for (const auto& e : snap->entries)
    if (e.name == name && e.encoder_id == encoder_id) return e.delta;
  throw Error(ErrorCode::NotFound,
              "no delta '" + std::string(name) + "' for encoder " + std::string(encoder_id));
}

std::shared_ptr<const AttributeDelta> Registry::get(std::string_view name) const {
  const auto snap = snapshot();
  std::shared_ptr<const AttributeDelta> found;
  for (const auto& e : snap->entries) {
    if (e.name != name) continue;
    if (found)
      throw Error(ErrorCode::InvalidArgument,
                  "delta '" + std::string(name) + "' exists for several encoders; name one");
    found = e.delta;
  }
  if (!found) throw Error(ErrorCode::NotFound, "no delta named '" + std::string(name) + "'");
  return found;
}

fs::path Registry::path_for(std::string_view name, std::string_view encoder_id) const {
  check_component(name, "delta name");
  check_component(encoder_id, "encoder id");
  return root_ / std::string(encoder_id) / (std::string(name) + ".adlt");
}

fs::path Registry::save(const AttributeDelta& delta) {
  const auto path = path_for(delta.attribute_name, delta.encoder_id);
  save_delta(delta, path);
  reload();
  return path;
}

}  // namespace adelta
