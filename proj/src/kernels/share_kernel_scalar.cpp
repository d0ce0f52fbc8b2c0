#include "demand/share_batch.hpp"

#include <cmath>
#include <vector>

namespace demand::kernels {

void share_batch_scalar(const ShareBatch &b) {
    const std::size_t n = b.n_obs;
    const std::size_t N = b.n_goods;
    std::vector<double> lp(N), gl(N);
    for (std::size_t o = 0; o < n; ++o) {
        for (std::size_t k = 0; k < N; ++k) lp[k] = b.log_prices[k * n + o];
        double lin = 0.0;
        double quad = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < N; ++j) s += b.gamma[j * N + i] * lp[j];
            gl[i] = s;
        }
        for (std::size_t k = 0; k < N; ++k) {
            lin += b.alpha[k] * lp[k];
            quad += lp[k] * gl[k];
        }
        const double real_exp = b.log_y[o] - (b.alpha0 + lin + 0.5 * quad);
        double curvature = 0.0;
        if (b.quadratic) {
            double lnb = 0.0;
            for (std::size_t k = 0; k < N; ++k) lnb += b.beta[k] * lp[k];
            curvature = real_exp * real_exp / std::exp(lnb);
        }
        for (std::size_t i = 0; i < N; ++i) {
            double w = b.alpha[i] + gl[i] + b.beta[i] * real_exp;
            if (b.quadratic) w += b.lambda[i] * curvature;
            b.shares[i * n + o] = w;
        }
    }
}

} // namespace demand::kernels
