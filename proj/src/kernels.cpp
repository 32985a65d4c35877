#include "trafficloc/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace trafficloc::kernels {

#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif
#if defined(__aarch64__)
const KernelTable& neon_table();
#endif

namespace {

struct Dispatch {
  const KernelTable* table;
  std::string_view name;
};

Dispatch resolve() {
  const char* force = std::getenv("TRAFFICLOC_KERNELS");
  const std::string_view want = force ? std::string_view(force) : std::string_view();
  if (want == "scalar") return {&scalar_table(), "scalar"};
#if defined(__x86_64__) || defined(_M_X64)
  const bool have_avx2 = __builtin_cpu_supports("avx2");
  if (want == "avx2") {
    if (have_avx2) return {&avx2_table(), "avx2"};
    return {&scalar_table(), "scalar"};
  }
  if (want.empty() && have_avx2) return {&avx2_table(), "avx2"};
#endif
#if defined(__aarch64__)
  if (want == "neon" || want.empty()) return {&neon_table(), "neon"};
#endif
  return {&scalar_table(), "scalar"};
}

const Dispatch& dispatch() {
  static const Dispatch d = resolve();
  return d;
}

}  // namespace

const KernelTable& active() { return *dispatch().table; }

std::string_view active_name() { return dispatch().name; }

}  // namespace trafficloc::kernels
