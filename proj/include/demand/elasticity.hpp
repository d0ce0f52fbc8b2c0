#pragma once

#include "demand/data.hpp"
#include "demand/models.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace demand {

struct EstimationResult;

/// Point at which elasticities (and the curvature matrix) are evaluated.
/// Rotterdam formulas use only the shares.
struct EvaluationPoint {
    Eigen::VectorXd shares;
    Eigen::VectorXd prices;
    double expenditure = 1.0;

    /// Arithmetic mean shares, geometric mean prices and expenditure.
    static EvaluationPoint sample_mean(const PanelDataset &data);
    /// Shares taken from the model itself at (p, y).
    static EvaluationPoint at_model(const ModelSpec &spec, const ParamSet &params, const Eigen::VectorXd &prices,
                                    double expenditure);

    std::size_t n_goods() const { return static_cast<std::size_t>(shares.size()); }
    void validate(std::size_t n_goods) const;
};

nlohmann::json point_to_json(const EvaluationPoint &pt);
/// Accepts "shares" plus either "prices" or "log_prices" and either
/// "expenditure" or "log_expenditure"; prices default to ones, expenditure to 1.
EvaluationPoint point_from_json(const nlohmann::json &doc, std::size_t n_goods);

struct ElasticityTable {
    Form form = Form::AIDS;
    Eigen::VectorXd e_exp;   // e_i
    Eigen::MatrixXd e_unc;   // e^u_ij
    Eigen::MatrixXd e_comp;  // e^c_ij = e^u_ij + e_i w_j
    bool has_se = false;
    Eigen::VectorXd se_exp;
    Eigen::MatrixXd se_unc;
    Eigen::MatrixXd se_comp;
};

ElasticityTable elasticities_rotterdam(const ParamSet &params, const EvaluationPoint &pt);
ElasticityTable elasticities_aids(const ParamSet &params, const EvaluationPoint &pt, double alpha0);
ElasticityTable elasticities_quaids(const ParamSet &params, const EvaluationPoint &pt, double alpha0);
/// Dispatches on spec.form.
ElasticityTable elasticities(const ModelSpec &spec, const ParamSet &params, const EvaluationPoint &pt);

using TableProducer = std::function<ElasticityTable(const Eigen::VectorXd &theta)>;

/// Delta-method standard errors of every entry of `producer(theta)`, with the
/// gradient taken by central differences (step fd_step * max(1, |theta_k|)).
/// Fills the se_* members of the returned table.
ElasticityTable delta_method_se(const TableProducer &producer, const Eigen::VectorXd &theta,
                                const Eigen::MatrixXd &cov_theta, double fd_step = 1e-6);

/// Elasticities of a fitted model at `pt` with delta-method standard errors.
ElasticityTable elasticities_with_se(const EstimationResult &result, const EvaluationPoint &pt);

nlohmann::json elasticity_to_json(const ElasticityTable &table, const std::vector<std::string> &goods);
/// Aligned text: one row per good with e_i, then e^u_ij, then e^c_ij, SEs in parentheses.
std::string elasticity_to_text(const ElasticityTable &table, const std::vector<std::string> &goods);

} // namespace demand
