#pragma once

#include "demand/models.hpp"
#include "demand/share_batch.hpp"

#include <Eigen/Core>

#include <optional>
#include <string_view>

namespace demand::kernels {

std::string_view to_string(Isa isa) noexcept;

bool avx2_supported() noexcept;
/// Variant chosen by `share_batch`: AVX2 when the CPU supports it unless
/// overridden by `force_isa` or the DEMANDSYS_FORCE_SCALAR environment variable.
Isa active_isa() noexcept;
void force_isa(std::optional<Isa> isa) noexcept;

void share_batch(const ShareBatch &batch);

/// Convenience wrapper: shares for every row of `log_prices`.
Eigen::MatrixXd evaluate_shares(const ModelSpec &spec, const ParamSet &params, const Eigen::MatrixXd &log_prices,
                                const Eigen::VectorXd &log_y);
Eigen::MatrixXd evaluate_shares(const ModelSpec &spec, const ParamSet &params, const Eigen::MatrixXd &log_prices,
                                const Eigen::VectorXd &log_y, Isa isa);

} // namespace demand::kernels
