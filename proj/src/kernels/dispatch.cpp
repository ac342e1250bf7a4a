#include <cstdlib>
#include <string_view>

#include "adelta/kernels.hpp"

namespace adelta::kernels {
namespace {

const KernelTable& select() {
  if (const char* env = std::getenv("ADELTA_SIMD")) {
    const std::string_view want(env);
    if (want == "scalar") return scalar_table();
    if (want == "avx2" && avx2_table()) return *avx2_table();
    if (want == "neon" && neon_table()) return *neon_table();
  }
  if (const auto* t = avx2_table()) return *t;
  if (const auto* t = neon_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace adelta::kernels
