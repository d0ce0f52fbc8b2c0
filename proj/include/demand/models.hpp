#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace demand {

enum class Form { Rotterdam, AIDS, QUAIDS };

std::string_view to_string(Form form) noexcept;
Form parse_form(std::string_view name);

/// Functional form plus the constants that are fixed rather than estimated.
/// `alpha0` enters ln a(p) for AIDS/QUAIDS. The QUAIDS b(p) normalization is
/// b(p) = prod_k p_k^beta_k (beta0 = 1).
struct ModelSpec {
    Form form = Form::AIDS;
    std::size_t n_goods = 3;
    double alpha0 = 0.0;

    void validate() const;
};

/// Full (restricted) parameter set. gamma is stored symmetrized; beta and
/// lambda are empty when the form does not use them.
struct ParamSet {
    Eigen::VectorXd alpha;
    Eigen::MatrixXd gamma;
    Eigen::VectorXd beta;
    Eigen::VectorXd lambda;

    std::size_t n_goods() const { return static_cast<std::size_t>(alpha.size()); }
};

/// Maximum absolute residual of each imposed restriction set.
struct RestrictionResiduals {
    double adding_up = 0.0;
    double homogeneity = 0.0;
    double symmetry = 0.0;
};

RestrictionResiduals restriction_residuals(const ParamSet &params, Form form);

/// Free-parameter layout (version "theta-v1"); N goods, m = N - 1:
///   [0, m)                alpha_1 .. alpha_m
///   [m, 2m)               beta_1 .. beta_m              (AIDS, QUAIDS)
///   [2m, 3m)              lambda_1 .. lambda_m          (QUAIDS)
///   then N(N-1)/2 entries gamma_ij for i < j, row-major over the strict
///   upper triangle: (1,2), (1,3), .., (1,N), (2,3), .., (N-1,N).
/// Diagonals follow from homogeneity (row sums zero), the lower triangle from
/// symmetry; column sums are then zero as well. alpha_N = 1 - sum alpha_i,
/// beta_N = -sum beta_i, lambda_N = -sum lambda_i.
class ThetaLayout {
public:
    static constexpr std::string_view kVersion = "theta-v1";

    ThetaLayout(Form form, std::size_t n_goods);

    Form form() const { return form_; }
    std::size_t n_goods() const { return n_; }
    std::size_t size() const;
    std::size_t alpha_offset() const { return 0; }
    std::size_t beta_offset() const;
    std::size_t lambda_offset() const;
    std::size_t gamma_offset() const;
    /// Index of gamma_ij (i < j, zero-based) within theta.
    std::size_t gamma_index(std::size_t i, std::size_t j) const;
    /// Human-readable names ("alpha_1", "gamma_1_2", ...), one-based goods.
    std::vector<std::string> names() const;

private:
    Form form_;
    std::size_t n_;
};

ParamSet unpack(const Eigen::VectorXd &theta, const ModelSpec &spec);
/// Inverse of unpack for parameters that satisfy the restrictions; for
/// parameters that do not, it reads the free entries and ignores the rest.
Eigen::VectorXd pack(const ParamSet &params, const ModelSpec &spec);

/// ln a(p) = alpha0 + sum_k alpha_k ln p_k + 1/2 sum_k sum_j gamma_kj ln p_k ln p_j.
double aids_price_index(const Eigen::VectorXd &prices, const ParamSet &params, double alpha0);
/// Same, from log prices (no positivity check).
double aids_log_price_index(const Eigen::VectorXd &log_prices, const ParamSet &params, double alpha0);
/// ln b(p) = sum_k beta_k ln p_k.
double quaids_log_b(const Eigen::VectorXd &log_prices, const ParamSet &params);

/// Budget shares of the AIDS / QUAIDS share equations at (p, y).
Eigen::VectorXd share_eval(const ModelSpec &spec, const ParamSet &params, const Eigen::VectorXd &prices, double y);
/// Same from log prices and log expenditure.
Eigen::VectorXd share_eval_log(const ModelSpec &spec, const ParamSet &params, const Eigen::VectorXd &log_prices,
                               double log_y);

/// Model-implied wbar_i * dlnq_i = alpha_i dlnQ + sum_k gamma_ik dlnp_k.
Eigen::VectorXd rotterdam_rhs(const ParamSet &params, const Eigen::VectorXd &dlnp, double dlnQ);

nlohmann::json params_to_json(const ModelSpec &spec, const ParamSet &params);
/// Parses and validates a parameter document; schema errors name the field path.
void params_from_json(const nlohmann::json &doc, ModelSpec &spec, ParamSet &params);

} // namespace demand
