#include <atomic>
#include <cstdlib>
#include <string>

#include "dmpad/kernels/kernels.hpp"

namespace dmpad::kernels {

#if !defined(DMPAD_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_has_avx2() {
#if defined(DMPAD_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa best_isa() {
  if (const char* env = std::getenv("DMPAD_ISA"); env && std::string(env) == "scalar") {
    return Isa::scalar;
  }
  return cpu_has_avx2() && avx2_table() ? Isa::avx2 : Isa::scalar;
}

const KernelTable& table_for(Isa isa) {
  if (isa == Isa::avx2 && avx2_table() && cpu_has_avx2()) return *avx2_table();
  return scalar_table();
}

namespace {
std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table_for(best_isa())};
  return slot;
}
}  // namespace

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) { active_slot().store(&table_for(isa), std::memory_order_relaxed); }

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace dmpad::kernels
