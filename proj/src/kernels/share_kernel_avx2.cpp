#include "demand/share_batch.hpp"

#include <cmath>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define DEMAND_HAVE_AVX2 1
#endif

namespace demand::kernels {

#if DEMAND_HAVE_AVX2

namespace {
// Wider systems fall back to the scalar path; this keeps the kernel free of
// heap allocation (and of out-of-line std:: template instances).
constexpr std::size_t kMaxGoods = 32;
} // namespace

void share_batch_avx2(const ShareBatch &b) {
    const std::size_t n = b.n_obs;
    const std::size_t N = b.n_goods;
    if (N > kMaxGoods) {
        share_batch_scalar(b);
        return;
    }
    const std::size_t blocked = n - n % 4;

    __m256d lp[kMaxGoods];
    __m256d gl[kMaxGoods];
    const __m256d half = _mm256_set1_pd(0.5);
    const __m256d alpha0 = _mm256_set1_pd(b.alpha0);

    for (std::size_t o = 0; o < blocked; o += 4) {
        for (std::size_t k = 0; k < N; ++k) lp[k] = _mm256_loadu_pd(b.log_prices + k * n + o);

        for (std::size_t i = 0; i < N; ++i) {
            __m256d s = _mm256_setzero_pd();
            for (std::size_t j = 0; j < N; ++j) s = _mm256_fmadd_pd(_mm256_set1_pd(b.gamma[j * N + i]), lp[j], s);
            gl[i] = s;
        }
        __m256d lin = _mm256_setzero_pd();
        __m256d quad = _mm256_setzero_pd();
        for (std::size_t k = 0; k < N; ++k) {
            lin = _mm256_fmadd_pd(_mm256_set1_pd(b.alpha[k]), lp[k], lin);
            quad = _mm256_fmadd_pd(lp[k], gl[k], quad);
        }
        const __m256d log_a = _mm256_add_pd(alpha0, _mm256_fmadd_pd(half, quad, lin));
        const __m256d real_exp = _mm256_sub_pd(_mm256_loadu_pd(b.log_y + o), log_a);

        __m256d curvature = _mm256_setzero_pd();
        if (b.quadratic) {
            __m256d lnb = _mm256_setzero_pd();
            for (std::size_t k = 0; k < N; ++k) lnb = _mm256_fmadd_pd(_mm256_set1_pd(b.beta[k]), lp[k], lnb);
            alignas(32) double tmp[4];
            _mm256_store_pd(tmp, lnb);
            for (double &t : tmp) t = std::exp(t);
            curvature = _mm256_div_pd(_mm256_mul_pd(real_exp, real_exp), _mm256_load_pd(tmp));
        }
        for (std::size_t i = 0; i < N; ++i) {
            __m256d w = _mm256_fmadd_pd(_mm256_set1_pd(b.beta[i]), real_exp,
                                        _mm256_add_pd(_mm256_set1_pd(b.alpha[i]), gl[i]));
            if (b.quadratic) w = _mm256_fmadd_pd(_mm256_set1_pd(b.lambda[i]), curvature, w);
            _mm256_storeu_pd(b.shares + i * n + o, w);
        }
    }

    if (blocked < n) {
        // Remainder rows, same arithmetic as the scalar reference.
        for (std::size_t o = blocked; o < n; ++o) {
            double lpr[kMaxGoods];
            double glr[kMaxGoods];
            for (std::size_t k = 0; k < N; ++k) lpr[k] = b.log_prices[k * n + o];
            double lin = 0.0, quad = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < N; ++j) s += b.gamma[j * N + i] * lpr[j];
                glr[i] = s;
            }
            for (std::size_t k = 0; k < N; ++k) {
                lin += b.alpha[k] * lpr[k];
                quad += lpr[k] * glr[k];
            }
            const double real_exp = b.log_y[o] - (b.alpha0 + lin + 0.5 * quad);
            double curvature = 0.0;
            if (b.quadratic) {
                double lnb = 0.0;
                for (std::size_t k = 0; k < N; ++k) lnb += b.beta[k] * lpr[k];
                curvature = real_exp * real_exp / std::exp(lnb);
            }
            for (std::size_t i = 0; i < N; ++i) {
                double w = b.alpha[i] + glr[i] + b.beta[i] * real_exp;
                if (b.quadratic) w += b.lambda[i] * curvature;
                b.shares[i * n + o] = w;
            }
        }
    }
}

#else

void share_batch_avx2(const ShareBatch &b) { share_batch_scalar(b); }

#endif

} // namespace demand::kernels
