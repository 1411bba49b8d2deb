#include <algorithm>
#include <cstring>
#include <vector>

#include "yolo4/ops.hpp"
#include "yolo4/parallel.hpp"

namespace yolo4 {

namespace {

// Register tile: kMr rows of A against kNr columns of B. Tiles are packed so
// the inner loop streams both operands contiguously.
constexpr int kMr = 6;
constexpr int kNr = 32;
constexpr int kKc = 256;
constexpr int kMc = kMr * 24;
constexpr int kNc = kNr * 64;

typedef float v16 __attribute__((vector_size(64)));

inline v16 load16(const float* p) {
  v16 v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store16(float* p, v16 v) { std::memcpy(p, &v, sizeof(v)); }

// packed_b: kc rows of kNr floats. packed_a: kc groups of kMr floats.
void micro_kernel(int kc, const float* packed_a, const float* packed_b, float* tile) {
  v16 acc[kMr][2];
  for (auto& row : acc) {
    row[0] = v16{};
    row[1] = v16{};
  }
  for (int p = 0; p < kc; ++p) {
    const v16 b0 = load16(packed_b + p * kNr);
    const v16 b1 = load16(packed_b + p * kNr + 16);
    const float* a = packed_a + p * kMr;
    for (int r = 0; r < kMr; ++r) {
      const float av = a[r];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (int r = 0; r < kMr; ++r) {
    store16(tile + r * kNr, acc[r][0]);
    store16(tile + r * kNr + 16, acc[r][1]);
  }
}

void pack_b(int kc, int nc, const float* b, int ldb, float* out) {
  for (int j0 = 0; j0 < nc; j0 += kNr) {
    const int cols = std::min(kNr, nc - j0);
    for (int p = 0; p < kc; ++p) {
      const float* src = b + static_cast<std::ptrdiff_t>(p) * ldb + j0;
      float* dst = out + static_cast<std::ptrdiff_t>(j0) * kc + p * kNr;
      int j = 0;
      for (; j < cols; ++j) dst[j] = src[j];
      for (; j < kNr; ++j) dst[j] = 0.0f;
    }
  }
}

void pack_a(int mc, int kc, const float* a, int lda, float* out) {
  for (int i0 = 0; i0 < mc; i0 += kMr) {
    const int rows = std::min(kMr, mc - i0);
    float* dst = out + static_cast<std::ptrdiff_t>(i0) * kc;
    for (int p = 0; p < kc; ++p) {
      int r = 0;
      for (; r < rows; ++r) dst[p * kMr + r] = a[static_cast<std::ptrdiff_t>(i0 + r) * lda + p];
      for (; r < kMr; ++r) dst[p * kMr + r] = 0.0f;
    }
  }
}

}  // namespace

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
          int ldc, bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::fill_n(c + static_cast<std::ptrdiff_t>(i) * ldc, n, 0.0f);
    }
    return;
  }
  std::vector<float> packed_b(static_cast<std::size_t>(kKc) * kNc);
  const int m_blocks = (m + kMc - 1) / kMc;

  for (int jc = 0; jc < n; jc += kNc) {
    const int nc = std::min(kNc, n - jc);
    for (int pc = 0; pc < k; pc += kKc) {
      const int kc = std::min(kKc, k - pc);
      const bool overwrite = (pc == 0) && !accumulate;
      pack_b(kc, nc, b + static_cast<std::ptrdiff_t>(pc) * ldb + jc, ldb, packed_b.data());

      parallel_for(static_cast<std::size_t>(m_blocks), [&](std::size_t block) {
        const int ic = static_cast<int>(block) * kMc;
        const int mc = std::min(kMc, m - ic);
        std::vector<float> packed_a(static_cast<std::size_t>(kMc) * kKc);
        alignas(64) float tile[kMr * kNr];
        pack_a(mc, kc, a + static_cast<std::ptrdiff_t>(ic) * lda + pc, lda, packed_a.data());
        for (int jr = 0; jr < nc; jr += kNr) {
          const int cols = std::min(kNr, nc - jr);
          for (int ir = 0; ir < mc; ir += kMr) {
            const int rows = std::min(kMr, mc - ir);
            micro_kernel(kc, packed_a.data() + static_cast<std::ptrdiff_t>(ir) * kc,
                         packed_b.data() + static_cast<std::ptrdiff_t>(jr) * kc, tile);
            for (int r = 0; r < rows; ++r) {
              float* dst = c + static_cast<std::ptrdiff_t>(ic + ir + r) * ldc + jc + jr;
              const float* src = tile + r * kNr;
              if (overwrite) {
                for (int j = 0; j < cols; ++j) dst[j] = src[j];
              } else {
                for (int j = 0; j < cols; ++j) dst[j] += src[j];
              }
            }
          }
        }
      });
    }
  }
}

}  // namespace yolo4
