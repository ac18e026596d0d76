#ifndef AMC_GEMM_HPP
#define AMC_GEMM_HPP

#include <algorithm>
#include <cstdint>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

// Row-major matrix kernels used by the convolution and correlation layers.
// Three layouts cover every product the model needs:
//   gemm_nn: C[M,N] (+)= A[M,K] * B[K,N]
//   gemm_nt: C[M,N] (+)= A[M,K] * B[N,K]^T
//   gemm_tn: C[M,N] (+)= A[K,M]^T * B[K,N]
// Reduction order is fixed by the code path, so results are bitwise
// reproducible run to run for a given build.

namespace amc {

namespace gemm_detail {

// ---- generic scalar path (any scalar type; also the float fallback) ----

template <typename S>
void nn_scalar(int M, int N, int K, const S* A, const S* B, S* C, bool accumulate) {
    for (int m = 0; m < M; ++m) {
        S* c = C + static_cast<std::int64_t>(m) * N;
        if (!accumulate)
            for (int n = 0; n < N; ++n) c[n] = S(0);
        const S* a = A + static_cast<std::int64_t>(m) * K;
        for (int k = 0; k < K; ++k) {
            const S av = a[k];
            const S* b = B + static_cast<std::int64_t>(k) * N;
            for (int n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

template <typename S>
void nt_scalar(int M, int N, int K, const S* A, const S* B, S* C, bool accumulate) {
    for (int m = 0; m < M; ++m) {
        const S* a = A + static_cast<std::int64_t>(m) * K;
        S* c = C + static_cast<std::int64_t>(m) * N;
        for (int n = 0; n < N; ++n) {
            const S* b = B + static_cast<std::int64_t>(n) * K;
            S acc = S(0);
            for (int k = 0; k < K; ++k) acc += a[k] * b[k];
            c[n] = accumulate ? c[n] + acc : acc;
        }
    }
}

template <typename S>
void tn_scalar(int M, int N, int K, const S* A, const S* B, S* C, bool accumulate) {
    for (int m = 0; m < M; ++m) {
        S* c = C + static_cast<std::int64_t>(m) * N;
        if (!accumulate)
            for (int n = 0; n < N; ++n) c[n] = S(0);
        for (int k = 0; k < K; ++k) {
            const S av = A[static_cast<std::int64_t>(k) * M + m];
            const S* b = B + static_cast<std::int64_t>(k) * N;
            for (int n = 0; n < N; ++n) c[n] += av * b[n];
        }
    }
}

#if defined(__AVX512F__)

// Broadcast-A kernel shared by nn and tn; A element at A[r*a_row + k*a_col].
template <int MR, int VC>
inline void kern_bcast_f32(int K, const float* A, std::int64_t a_row, std::int64_t a_col, const float* B,
                           std::int64_t ldb, float* C, std::int64_t ldc, __mmask16 tail, bool accumulate) {
    __m512 acc[MR][VC];
    for (int r = 0; r < MR; ++r)
        for (int v = 0; v < VC; ++v) acc[r][v] = _mm512_setzero_ps();
    for (int k = 0; k < K; ++k) {
        __m512 b[VC];
        const float* brow = B + static_cast<std::int64_t>(k) * ldb;
        for (int v = 0; v < VC; ++v)
            b[v] = (v == VC - 1) ? _mm512_maskz_loadu_ps(tail, brow + 16 * v) : _mm512_loadu_ps(brow + 16 * v);
        for (int r = 0; r < MR; ++r) {
            const __m512 a = _mm512_set1_ps(A[r * a_row + k * a_col]);
            for (int v = 0; v < VC; ++v) acc[r][v] = _mm512_fmadd_ps(a, b[v], acc[r][v]);
        }
    }
    for (int r = 0; r < MR; ++r) {
        float* crow = C + static_cast<std::int64_t>(r) * ldc;
        for (int v = 0; v < VC; ++v) {
            float* c = crow + 16 * v;
            const bool last = (v == VC - 1);
            __m512 prev = _mm512_setzero_ps();
            if (accumulate) prev = last ? _mm512_maskz_loadu_ps(tail, c) : _mm512_loadu_ps(c);
            const __m512 sum = _mm512_add_ps(prev, acc[r][v]);
            if (last)
                _mm512_mask_storeu_ps(c, tail, sum);
            else
                _mm512_storeu_ps(c, sum);
        }
    }
}

inline void bcast_dispatch_f32(int M, int N, int K, const float* A, std::int64_t a_row, std::int64_t a_col,
                               const float* B, float* C, bool accumulate) {
    const auto run_rows = [&](int m, int mr) {
        int n = 0;
        while (n < N) {
            const int nb = std::min(64, N - n);
            const int vc = (nb + 15) / 16;
            const int rem = nb - (vc - 1) * 16;
            const __mmask16 tail = static_cast<__mmask16>((1u << rem) - 1u);
            const float* a = A + static_cast<std::int64_t>(m) * a_row;
            const float* b = B + n;
            float* c = C + static_cast<std::int64_t>(m) * N + n;
            if (mr == 4) {
                switch (vc) {
                    case 1: kern_bcast_f32<4, 1>(K, a, a_row, a_col, b, N, c, N, tail, accumulate); break;
                    case 2: kern_bcast_f32<4, 2>(K, a, a_row, a_col, b, N, c, N, tail, accumulate); break;
                    case 3: kern_bcast_f32<4, 3>(K, a, a_row, a_col, b, N, c, N, tail, accumulate); break;
                    default: kern_bcast_f32<4, 4>(K, a, a_row, a_col, b, N, c, N, tail, accumulate); break;
                }
            } else {
                switch (vc) {
                    case 1: kern_bcast_f32<1, 1>(K, a, a_row, a_col, b, N, c, N, tail, accumulate); break;
                    case 2: kern_bcast_f32<1, 2>(K, a, a_row, a_col, b, N, c, N, tail, accumulate); break;
                    case 3: kern_bcast_f32<1, 3>(K, a, a_row, a_col, b, N, c, N, tail, accumulate); break;
                    default: kern_bcast_f32<1, 4>(K, a, a_row, a_col, b, N, c, N, tail, accumulate); break;
                }
            }
            n += nb;
        }
    };
    int m = 0;
    for (; m + 4 <= M; m += 4) run_rows(m, 4);
    for (; m < M; ++m) run_rows(m, 1);
}

// Dot-product kernel for nt.
template <int MR, int NR>
inline void kern_nt_f32(int K, const float* A, std::int64_t lda, const float* B, std::int64_t ldb, float* C,
                        std::int64_t ldc, bool accumulate) {
    __m512 acc[MR][NR];
    for (int r = 0; r < MR; ++r)
        for (int j = 0; j < NR; ++j) acc[r][j] = _mm512_setzero_ps();
    int k = 0;
    for (; k + 16 <= K; k += 16) {
        __m512 a[MR], b[NR];
        for (int r = 0; r < MR; ++r) a[r] = _mm512_loadu_ps(A + r * lda + k);
        for (int j = 0; j < NR; ++j) b[j] = _mm512_loadu_ps(B + j * ldb + k);
        for (int r = 0; r < MR; ++r)
            for (int j = 0; j < NR; ++j) acc[r][j] = _mm512_fmadd_ps(a[r], b[j], acc[r][j]);
    }
    if (k < K) {
        const __mmask16 tail = static_cast<__mmask16>((1u << (K - k)) - 1u);
        __m512 a[MR], b[NR];
        for (int r = 0; r < MR; ++r) a[r] = _mm512_maskz_loadu_ps(tail, A + r * lda + k);
        for (int j = 0; j < NR; ++j) b[j] = _mm512_maskz_loadu_ps(tail, B + j * ldb + k);
        for (int r = 0; r < MR; ++r)
            for (int j = 0; j < NR; ++j) acc[r][j] = _mm512_fmadd_ps(a[r], b[j], acc[r][j]);
    }
    for (int r = 0; r < MR; ++r)
        for (int j = 0; j < NR; ++j) {
            const float s = _mm512_reduce_add_ps(acc[r][j]);
            float* c = C + r * ldc + j;
            *c = accumulate ? *c + s : s;
        }
}

inline void nt_dispatch_f32(int M, int N, int K, const float* A, const float* B, float* C, bool accumulate) {
    const auto run = [&](int m, int mr) {
        int n = 0;
        for (; n + 4 <= N; n += 4) {
            if (mr == 2)
                kern_nt_f32<2, 4>(K, A + static_cast<std::int64_t>(m) * K, K, B + static_cast<std::int64_t>(n) * K, K,
                                  C + static_cast<std::int64_t>(m) * N + n, N, accumulate);
            else
                kern_nt_f32<1, 4>(K, A + static_cast<std::int64_t>(m) * K, K, B + static_cast<std::int64_t>(n) * K, K,
                                  C + static_cast<std::int64_t>(m) * N + n, N, accumulate);
        }
        for (; n < N; ++n) {
            if (mr == 2)
                kern_nt_f32<2, 1>(K, A + static_cast<std::int64_t>(m) * K, K, B + static_cast<std::int64_t>(n) * K, K,
                                  C + static_cast<std::int64_t>(m) * N + n, N, accumulate);
            else
                kern_nt_f32<1, 1>(K, A + static_cast<std::int64_t>(m) * K, K, B + static_cast<std::int64_t>(n) * K, K,
                                  C + static_cast<std::int64_t>(m) * N + n, N, accumulate);
        }
    };
    int m = 0;
    for (; m + 2 <= M; m += 2) run(m, 2);
    for (; m < M; ++m) run(m, 1);
}

#endif  // __AVX512F__

}  // namespace gemm_detail

template <typename S>
void gemm_nn(int M, int N, int K, const S* A, const S* B, S* C, bool accumulate = false) {
    gemm_detail::nn_scalar(M, N, K, A, B, C, accumulate);
}

template <typename S>
void gemm_nt(int M, int N, int K, const S* A, const S* B, S* C, bool accumulate = false) {
    gemm_detail::nt_scalar(M, N, K, A, B, C, accumulate);
}

template <typename S>
void gemm_tn(int M, int N, int K, const S* A, const S* B, S* C, bool accumulate = false) {
    gemm_detail::tn_scalar(M, N, K, A, B, C, accumulate);
}

#if defined(__AVX512F__)
template <>
inline void gemm_nn<float>(int M, int N, int K, const float* A, const float* B, float* C, bool accumulate) {
    gemm_detail::bcast_dispatch_f32(M, N, K, A, /*a_row=*/K, /*a_col=*/1, B, C, accumulate);
}

template <>
inline void gemm_tn<float>(int M, int N, int K, const float* A, const float* B, float* C, bool accumulate) {
    gemm_detail::bcast_dispatch_f32(M, N, K, A, /*a_row=*/1, /*a_col=*/M, B, C, accumulate);
}

template <>
inline void gemm_nt<float>(int M, int N, int K, const float* A, const float* B, float* C, bool accumulate) {
    gemm_detail::nt_dispatch_f32(M, N, K, A, B, C, accumulate);
}
#endif

}  // namespace amc

#endif
