#include <atomic>
#include <cstdlib>
#include <string>

#include "scalar.hpp"

namespace exion::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

const Kernels& scalar_kernels() {
  static const Kernels k{Isa::Scalar, &scalar::dot_i16, &scalar::log_dot};
  return k;
}

const Kernels* avx2_kernels() {
#if defined(EXION_HAVE_AVX2)
  static const Kernels k{Isa::Avx2, &avx2::dot_i16, &avx2::log_dot};
  static const bool ok = __builtin_cpu_supports("avx2");
  return ok ? &k : nullptr;
#else
  return nullptr;
#endif
}

const Kernels* neon_kernels() {
#if defined(EXION_HAVE_NEON)
  static const Kernels k{Isa::Neon, &neon::dot_i16, &neon::log_dot};
  return &k;
#else
  return nullptr;
#endif
}

namespace {

const Kernels* lookup(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return &scalar_kernels();
    case Isa::Avx2: return avx2_kernels();
    case Isa::Neon: return neon_kernels();
  }
  return nullptr;
}

const Kernels* pick_default() {
  if (const char* env = std::getenv("EXION_SIMD")) {
    const std::string want(env);
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
      if (want == isa_name(isa)) {
        if (const Kernels* k = lookup(isa)) return k;
      }
    }
  }
  if (const Kernels* k = avx2_kernels()) return k;
  if (const Kernels* k = neon_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const Kernels*> g_active{nullptr};

}  // namespace

bool available(Isa isa) { return lookup(isa) != nullptr; }

const Kernels& kernels() {
  const Kernels* k = g_active.load(std::memory_order_acquire);
  if (k == nullptr) {
    const Kernels* chosen = pick_default();
    g_active.compare_exchange_strong(k, chosen, std::memory_order_acq_rel);
    k = g_active.load(std::memory_order_acquire);
  }
  return *k;
}

bool select(Isa isa) {
  const Kernels* k = lookup(isa);
  if (k == nullptr) return false;
  g_active.store(k, std::memory_order_release);
  return true;
}

}  // namespace exion::simd
