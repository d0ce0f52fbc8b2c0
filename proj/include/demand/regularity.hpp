#pragma once

#include "demand/data.hpp"
#include "demand/elasticity.hpp"
#include "demand/estimation.hpp"
#include "demand/models.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace demand {

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// descending. Only the lower triangle is read. Deterministic: fixed sweep
/// order, fixed rotation formula.
Eigen::VectorXd jacobi_eigenvalues(const Eigen::MatrixXd &symmetric, int max_sweeps = 100);

struct EigenTestResult {
    Eigen::VectorXd eigenvalues;  // descending
    bool satisfied = false;       // max eigenvalue <= tolerance + roundoff
    double tolerance = 0.0;
    /// Backward-error allowance of the solver, 4 N eps ||M||_F.
    double roundoff = 0.0;
};

/// Negative semidefiniteness test on 1/2 (M + M').
EigenTestResult eigen_test(const Eigen::MatrixXd &m, double tolerance = 0.0);

struct ViolationCount {
    std::size_t violations = 0;
    std::size_t total = 0;
    bool satisfied() const { return violations == 0; }
};

ViolationCount check_positivity(const EstimationResult &result, const PanelDataset &data);
ViolationCount check_monotonicity(const EstimationResult &result, const PanelDataset &data);
/// Both checks at a single point, for audits without data.
ViolationCount check_positivity(const ModelSpec &spec, const ParamSet &params, const EvaluationPoint &pt);
ViolationCount check_monotonicity(const ModelSpec &spec, const ParamSet &params, const EvaluationPoint &pt);

/// Rotterdam: gamma. AIDS: k_ij = gamma_ij + beta_i beta_j ln(y/a) - w_i delta_ij + w_i w_j.
/// QUAIDS: w_i e^c_ij from the Slutsky-derived compensated elasticities.
Eigen::MatrixXd negativity_matrix(const ModelSpec &spec, const ParamSet &params, const EvaluationPoint &pt);
Eigen::MatrixXd negativity_matrix(const EstimationResult &result, const EvaluationPoint &pt);

struct ImposedCheck {
    double residual = 0.0;
    bool satisfied = true;
};

struct RegularityOptions {
    double curvature_tol = 0.0;
    /// Printed parameters satisfy the restrictions only to their rounding.
    double restriction_tol = 1e-8;
    bool per_observation = false;
};

struct PointwiseNegativity {
    std::size_t violations = 0;
    std::size_t total = 0;
    double max_eigenvalue = 0.0;
};

struct RegularityReport {
    std::string model;
    Form form = Form::AIDS;
    ViolationCount positivity;
    ViolationCount monotonicity;
    Eigen::MatrixXd negativity_matrix;
    EigenTestResult negativity;
    ImposedCheck adding_up;
    ImposedCheck homogeneity;
    ImposedCheck symmetry;
    double restriction_tol = 1e-8;
    std::optional<PointwiseNegativity> per_observation;
    /// Fit criteria used when ranking regular models (zero for audits).
    double objective = 0.0;
    double log_det_sigma = 0.0;
    /// Observations times retained equations; the objective is divided by it.
    std::size_t equations = 0;
    std::size_t n_obs = 0;
    std::size_t n_params = 0;
    bool fitted = false;

    /// Names of the failed conditions, in the fixed order positivity,
    /// monotonicity, negativity, adding-up, homogeneity, symmetry.
    std::vector<std::string> violated() const;
    bool verdict() const { return violated().empty(); }
};

/// Full report for a fitted model. `data` may be null, in which case
/// positivity and monotonicity are evaluated at `pt` only.
RegularityReport regularity_report(const EstimationResult &result, const PanelDataset *data,
                                   const EvaluationPoint &pt, const RegularityOptions &options = {});
/// Audit of externally supplied parameters.
RegularityReport regularity_report(const ModelSpec &spec, const ParamSet &params, const EvaluationPoint &pt,
                                   const RegularityOptions &options = {});

struct SelectionEntry {
    std::string model;
    std::vector<std::string> violated;
    double objective = 0.0;  // per observation-equation
    double log_det_sigma = 0.0;
    /// log det Sigma + K ln(n) / n, the tie-break (Schwarz penalty per observation).
    double criterion = 0.0;
};

struct Selection {
    std::vector<SelectionEntry> regular;    // best first
    std::vector<SelectionEntry> violating;  // input order
    std::optional<std::string> best() const;
};

/// Fully regular models ranked by generalized SSR per observation-equation;
/// values within a relative 1e-6 of each other (the usual case after FGLS,
/// where it is 1 by construction) are ordered by the penalized log det.
Selection select_model(const std::vector<RegularityReport> &reports);

nlohmann::json regularity_to_json(const RegularityReport &report);
nlohmann::json selection_to_json(const Selection &selection);
/// Grid of the six conditions (rows) by model (columns) with check marks.
std::string regularity_table_text(const std::vector<RegularityReport> &reports);
std::string selection_to_text(const Selection &selection);

} // namespace demand
