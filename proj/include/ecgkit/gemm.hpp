#pragma once

#include <cstddef>
#include <cstring>
#include <vector>

namespace ecgkit {
namespace gemm {

// Serial kernels; callers parallelize over independent work (batch
// samples). Every output element is one fixed-order k reduction, so
// results are bitwise reproducible for any thread count.

inline constexpr std::size_t kJT = 8;  // column tile
inline constexpr std::size_t kIT = 6;   // row tile

#if defined(__GNUC__) || defined(__clang__)
#define ECGKIT_SIMD_KERNELS 1
#endif

#ifdef ECGKIT_SIMD_KERNELS

typedef double v4d __attribute__((vector_size(32)));
// Under-aligned view for loads/stores; the value type keeps natural
// alignment so it lives in registers.
typedef double v4d_u __attribute__((vector_size(32), aligned(8)));

namespace detail {

inline v4d v4load(const double* p) {
  return *reinterpret_cast<const v4d_u*>(p);
}
inline void v4store(double* p, v4d v) { *reinterpret_cast<v4d_u*>(p) = v; }
inline v4d v4splat(double a) { return (v4d){a, a, a, a}; }

// C block [i0..i0+ROWS) x [j0..j0+16) += Ablock * Bpack.
// Ablock is K rows of kIT interleaved weights (row r at ablock[k*kIT+r]),
// Bpack is K rows of 16 contiguous values.
template <std::size_t ROWS>
void kernel(double* C, std::size_t ldc, const double* ablock, const double* bpack,
            std::size_t K, std::size_t i0, std::size_t j0) {
  v4d acc[ROWS][2];
  for (std::size_t r = 0; r < ROWS; ++r)
    for (std::size_t q = 0; q < 2; ++q)
      acc[r][q] = v4load(C + (i0 + r) * ldc + j0 + 4 * q);
  for (std::size_t k = 0; k < K; ++k) {
    const v4d b0 = v4load(bpack + k * kJT);
    const v4d b1 = v4load(bpack + k * kJT + 4);
    const double* ak = ablock + k * kIT;
    for (std::size_t r = 0; r < ROWS; ++r) {
      const v4d a = v4splat(ak[r]);
      acc[r][0] += a * b0;
      acc[r][1] += a * b1;
    }
  }
  for (std::size_t r = 0; r < ROWS; ++r)
    for (std::size_t q = 0; q < 2; ++q)
      v4store(C + (i0 + r) * ldc + j0 + 4 * q, acc[r][q]);
}

}  // namespace detail

#endif  // ECGKIT_SIMD_KERNELS

// A in row-blocked interleaved layout: for each block of kIT rows, K
// columns of kIT values (zero padded past M). Reusable across many accum
// calls against the same A.
struct PackedA {
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<double> data;  // n_blocks * K * kIT
};

inline PackedA pack_a(const double* A, std::size_t lda, std::size_t M, std::size_t K) {
  PackedA packed;
  packed.m = M;
  packed.k = K;
  const std::size_t n_blocks = (M + kIT - 1) / kIT;
  packed.data.assign(n_blocks * K * kIT, 0.0);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    double* dst = packed.data.data() + b * K * kIT;
    const std::size_t rows = (b * kIT + kIT <= M) ? kIT : M - b * kIT;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t r = 0; r < rows; ++r)
        dst[k * kIT + r] = A[(b * kIT + r) * lda + k];
  }
  return packed;
}

// C[M x N] += A * B[K x N] with A prepacked.
inline void accum_packed(double* C, std::size_t ldc, const PackedA& A, const double* B,
                         std::size_t ldb, std::size_t N) {
  const std::size_t M = A.m;
  const std::size_t K = A.k;
  std::vector<double> bpack(K * kJT);

  for (std::size_t j0 = 0; j0 < N; j0 += kJT) {
    const std::size_t jw = (j0 + kJT <= N) ? kJT : N - j0;
    for (std::size_t k = 0; k < K; ++k) {
      const double* src = B + k * ldb + j0;
      double* dst = bpack.data() + k * kJT;
      std::memcpy(dst, src, jw * sizeof(double));
      for (std::size_t j = jw; j < kJT; ++j) dst[j] = 0.0;
    }

    for (std::size_t b = 0; b * kIT < M; ++b) {
      const std::size_t i0 = b * kIT;
      const std::size_t rows = (i0 + kIT <= M) ? kIT : M - i0;
      const double* ablock = A.data.data() + b * K * kIT;
#ifdef ECGKIT_SIMD_KERNELS
      if (jw == kJT) {
        switch (rows) {
          case 6: detail::kernel<6>(C, ldc, ablock, bpack.data(), K, i0, j0); break;
          case 5: detail::kernel<5>(C, ldc, ablock, bpack.data(), K, i0, j0); break;
          case 4: detail::kernel<4>(C, ldc, ablock, bpack.data(), K, i0, j0); break;
          case 3: detail::kernel<3>(C, ldc, ablock, bpack.data(), K, i0, j0); break;
          case 2: detail::kernel<2>(C, ldc, ablock, bpack.data(), K, i0, j0); break;
          default: detail::kernel<1>(C, ldc, ablock, bpack.data(), K, i0, j0); break;
        }
        continue;
      }
#endif
      // Edge tile (and the portable fallback): plain accumulation.
      for (std::size_t r = 0; r < rows; ++r) {
        double acc[kJT];
        for (std::size_t j = 0; j < jw; ++j) acc[j] = C[(i0 + r) * ldc + j0 + j];
        for (std::size_t k = 0; k < K; ++k) {
          const double a = ablock[k * kIT + r];
          const double* bk = bpack.data() + k * kJT;
          for (std::size_t j = 0; j < jw; ++j) acc[j] += a * bk[j];
        }
        for (std::size_t j = 0; j < jw; ++j) C[(i0 + r) * ldc + j0 + j] = acc[j];
      }
    }
  }
}

// Convenience wrapper packing A on the fly.
inline void accum(double* C, std::size_t ldc, const double* A, std::size_t lda,
                  const double* B, std::size_t ldb, std::size_t M, std::size_t N,
                  std::size_t K) {
  accum_packed(C, ldc, pack_a(A, lda, M, K), B, ldb, N);
}

// C[M x N] += A[M x K] * B[N x K]^T, i.e. C[i][j] += dot(A row i, B row j).
// The dot accumulates in 8 independent lanes (fixed order, reproducible)
// which vectorizes without reassociation.
inline void accum_abt(double* C, std::size_t ldc, const double* A, std::size_t lda,
                      const double* B, std::size_t ldb, std::size_t M, std::size_t N,
                      std::size_t K) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * lda;
    for (std::size_t j = 0; j < N; ++j) {
      const double* b = B + j * ldb;
      std::size_t k = 0;
      double s;
#ifdef ECGKIT_SIMD_KERNELS
      v4d l0 = detail::v4splat(0.0);
      v4d l1 = detail::v4splat(0.0);
      v4d l2 = detail::v4splat(0.0);
      v4d l3 = detail::v4splat(0.0);
      for (; k + 16 <= K; k += 16) {
        l0 += detail::v4load(a + k) * detail::v4load(b + k);
        l1 += detail::v4load(a + k + 4) * detail::v4load(b + k + 4);
        l2 += detail::v4load(a + k + 8) * detail::v4load(b + k + 8);
        l3 += detail::v4load(a + k + 12) * detail::v4load(b + k + 12);
      }
      const v4d l = (l0 + l1) + (l2 + l3);
      s = (l[0] + l[1]) + (l[2] + l[3]);
#else
      double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      for (; k + 8 <= K; k += 8)
        for (std::size_t l = 0; l < 8; ++l) lane[l] += a[k + l] * b[k + l];
      s = ((lane[0] + lane[1]) + (lane[2] + lane[3])) +
          ((lane[4] + lane[5]) + (lane[6] + lane[7]));
#endif
      for (; k < K; ++k) s += a[k] * b[k];
      C[i * ldc + j] += s;
    }
  }
}

inline std::vector<double> transpose(const double* A, std::size_t rows,
                                     std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = A[i * cols + j];
  return out;
}

}  // namespace gemm
}  // namespace ecgkit
