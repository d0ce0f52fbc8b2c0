#pragma once

#include "demand/data.hpp"
#include "demand/models.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace demand {

struct EstimationOptions {
    /// Iterate FGLS to convergence; false gives two-step (OLS, then one GLS stage).
    bool iterate = true;
    double step_tol = 1e-8;   // infinity norm of the parameter change between Sigma updates
    double sigma_tol = 1e-8;  // Frobenius norm of the residual-covariance change
    int max_outer = 100;
    int max_inner = 200;
    /// Central-difference step is fd_step * max(1, |theta_k|).
    double fd_step = 1e-6;
    /// Rotterdam only: subtract per-unit means (within transformation).
    bool demean_by_unit = false;
};

/// Fitted system. `params` is always unpack(theta_hat); covariance and
/// residual covariance are over the N-1 retained equations.
struct EstimationResult {
    ModelSpec spec;
    Eigen::VectorXd theta_hat;
    ParamSet params;
    Eigen::MatrixXd cov_theta;
    Eigen::MatrixXd sigma_hat;
    std::size_t n_obs = 0;
    int iterations = 0;
    bool converged = false;
    /// Generalized SSR sum_t e_t' Sigma^-1 e_t with the final weighting matrix.
    double objective = 0.0;
    /// log det of the residual covariance (concentrated likelihood criterion).
    double log_det_sigma = 0.0;
    /// Ridge added to the residual covariance when it was numerically singular.
    double ridge = 0.0;
    std::vector<std::string> notes;
    /// Objective after each accepted step, one list per Sigma update.
    std::vector<std::vector<double>> objective_trace;

    bool fitted() const;
    Eigen::VectorXd standard_errors() const;
};

EstimationResult estimate_rotterdam(const RotterdamTransform &t, const EstimationOptions &options = {});

EstimationResult estimate_nonlinear(const PanelDataset &data, const ModelSpec &spec, const Eigen::VectorXd &init,
                                    const EstimationOptions &options = {});

/// AIDS/QUAIDS: alpha at mean shares, everything else zero. Rotterdam:
/// restricted least squares with identity weighting on the stacked system.
Eigen::VectorXd default_init(const PanelDataset &data, const ModelSpec &spec);

/// Dispatches on spec.form; `init` overrides default_init for the nonlinear forms.
EstimationResult estimate(const PanelDataset &data, const ModelSpec &spec, const EstimationOptions &options = {},
                          const std::optional<Eigen::VectorXd> &init = std::nullopt);

nlohmann::json result_to_json(const EstimationResult &result);
/// Reads a result (or a bare parameter document) for warm starts and audits.
EstimationResult result_from_json(const nlohmann::json &doc);

} // namespace demand
