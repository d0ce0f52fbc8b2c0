#pragma once

// Free of Eigen and other inline-heavy headers: this is the only header the
// AVX2 translation unit includes, so no AVX-compiled copies of shared inline
// code can be linked into the rest of the library.

#include <cstddef>

namespace demand::kernels {

/// Raw view of a batch share evaluation. All matrices are column-major with
/// leading dimension n_obs (Eigen's default layout), so column k holds one
/// good across observations and four observations load as one AVX2 vector.
struct ShareBatch {
    std::size_t n_obs = 0;
    std::size_t n_goods = 0;
    const double *log_prices = nullptr;  // n_obs x n_goods
    const double *log_y = nullptr;       // n_obs
    const double *alpha = nullptr;       // n_goods
    const double *gamma = nullptr;       // n_goods x n_goods, column-major
    const double *beta = nullptr;        // n_goods
    const double *lambda = nullptr;      // n_goods, null unless quadratic
    double alpha0 = 0.0;
    bool quadratic = false;
    double *shares = nullptr;            // n_obs x n_goods output
};

enum class Isa { Scalar, Avx2 };

/// Reference implementation; defines the expected output of every variant.
void share_batch_scalar(const ShareBatch &batch);
/// Four observations per iteration with FMA; remainder handled by the scalar
/// path. Must only be called when avx2_supported() is true.
void share_batch_avx2(const ShareBatch &batch);

} // namespace demand::kernels
