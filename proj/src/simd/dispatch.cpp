#include <atomic>

#include "advbench/simd/kernels.hpp"

namespace advbench::simd {
namespace {

const Kernels* widest() {
  if (const Kernels* k = avx2_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const Kernels*>& slot() {
  static std::atomic<const Kernels*> current{widest()};
  return current;
}

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

const Kernels& active() { return *slot().load(std::memory_order_acquire); }

bool select(Isa isa) {
  const Kernels* k = nullptr;
  switch (isa) {
    case Isa::scalar: k = &scalar_kernels(); break;
    case Isa::avx2: k = avx2_kernels(); break;
  }
  if (k == nullptr) return false;
  slot().store(k, std::memory_order_release);
  return true;
}

}  // namespace advbench::simd
