#pragma once

#include "demand/data.hpp"
#include "demand/models.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace demand {

/// Known-truth panel generator. Log prices and log expenditure follow
/// unit-specific Gaussian random walks started from a common level plus a
/// unit offset.
struct SynthConfig {
    ModelSpec spec;
    ParamSet truth;
    std::size_t n_units = 31;
    std::size_t n_periods = 13;
    Eigen::VectorXd log_price_start;  // default zeros
    Eigen::VectorXd log_price_drift;  // default zeros
    double log_price_sd = 0.05;
    double log_y_start = 0.0;
    double log_y_drift = 0.02;
    double log_y_sd = 0.05;
    /// Standard deviation of the per-unit offsets of the starting levels.
    double unit_dispersion = 0.1;
    double share_noise_sd = 0.0;
    /// Rotterdam only: shares in every unit's first period (default alpha).
    Eigen::VectorXd initial_shares;
    std::uint64_t seed = 1;
    std::vector<std::string> goods;  // default good_1 .. good_N

    void validate() const;
};

struct SynthOutput {
    PanelDataset data;
    /// Observations whose shares left (0, 1) and were clipped and renormalized.
    std::size_t clipped = 0;
};

/// Throws DegenerateShares when more than 5% of observations need clipping.
SynthOutput generate_with_report(const SynthConfig &cfg);
PanelDataset generate(const SynthConfig &cfg);

nlohmann::json synth_config_to_json(const SynthConfig &cfg);
/// Parameters use the same document layout as params_from_json, nested
/// under "truth"; every other field is optional.
SynthConfig synth_config_from_json(const nlohmann::json &doc);

} // namespace demand
