#include "demand/regularity.hpp"

#include "demand/errors.hpp"
#include "demand/format.hpp"
#include "demand/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace demand {

namespace {

void require_fitted(const EstimationResult &r) {
    if (!r.fitted()) throw DemandError(ErrorCode::ModelNotFitted, "regularity checks need a fitted model");
}

bool all_positive(const Eigen::VectorXd &v) { return (v.array() > 0.0).all(); }

/// ln C(u, p) with u recovered from the indirect utility at (p, y). For an
/// exact inversion this returns ln y; non-finite values flag a failure of the
/// cost function (overflowing price index, undefined utility).
double fitted_log_cost(const ModelSpec &spec, const ParamSet &p, const Eigen::VectorXd &lp, double log_y) {
    const double lna = aids_log_price_index(lp, p, spec.alpha0);
    const double b = std::exp(quaids_log_b(lp, p));
    if (!std::isfinite(lna) || !std::isfinite(b) || !(b > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    if (spec.form == Form::AIDS) {
        const double u = (log_y - lna) / b;
        return lna + u * b;
    }
    // ln V = [ (b / ln(y/a)) + lambda(p) ]^-1 with lambda(p) = sum lambda_k ln p_k.
    const double lam = p.lambda.dot(lp);
    const double real = log_y - lna;
    const double lnv = 1.0 / (b / real + lam);
    return lna + b / (1.0 / lnv - lam);
}

/// Fitted (not observed) quantities and shares implied by the Rotterdam
/// equations one period ahead of the lagged observation.
struct RotterdamFit {
    bool positive_quantities;
    bool positive_shares;
};

RotterdamFit rotterdam_fit(const ParamSet &p, const Eigen::VectorXd &w_lag, const Eigen::VectorXd &wbar,
                           const Eigen::VectorXd &dlnp, double dlny, double dlnQ) {
    const Eigen::VectorXd rhs = rotterdam_rhs(p, dlnp, dlnQ);
    // Linearized fitted quantity relative to last period: 1 + dlnq_hat.
    const Eigen::VectorXd qrel = (1.0 + rhs.array() / wbar.array()).matrix();
    // dw = wbar (dlnq + dlnp - dlny) to first order.
    const Eigen::VectorXd w_hat = w_lag + rhs + (wbar.array() * (dlnp.array() - dlny)).matrix();
    return {all_positive(qrel), all_positive(w_hat)};
}

} // namespace

ViolationCount check_positivity(const EstimationResult &result, const PanelDataset &data) {
    require_fitted(result);
    const ModelSpec &spec = result.spec;
    ViolationCount vc;
    if (spec.form == Form::Rotterdam) {
        const auto t = rotterdam_transform(data);
        vc.total = t.n_obs();
        for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(t.n_obs()); ++r) {
            const Eigen::VectorXd w_lag = data.share.row(static_cast<Eigen::Index>(t.lag_row[static_cast<std::size_t>(r)])).transpose();
            const auto fit = rotterdam_fit(result.params, w_lag, t.wbar.row(r).transpose(), t.dlnp.row(r).transpose(),
                                           t.dlny(r), t.dlnQ(r));
            if (!fit.positive_quantities) ++vc.violations;
        }
        return vc;
    }
    vc.total = data.n_obs();
    for (Eigen::Index o = 0; o < static_cast<Eigen::Index>(data.n_obs()); ++o) {
        const Eigen::VectorXd lp = data.price.row(o).array().log().transpose();
        const double lnc = fitted_log_cost(spec, result.params, lp, std::log(data.total(o)));
        // exp of a finite log cost is positive; underflow is not a violation.
        if (!std::isfinite(lnc)) ++vc.violations;
    }
    return vc;
}

ViolationCount check_monotonicity(const EstimationResult &result, const PanelDataset &data) {
    require_fitted(result);
    const ModelSpec &spec = result.spec;
    ViolationCount vc;
    if (spec.form == Form::Rotterdam) {
        const auto t = rotterdam_transform(data);
        vc.total = t.n_obs();
        for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(t.n_obs()); ++r) {
            const Eigen::VectorXd w_lag = data.share.row(static_cast<Eigen::Index>(t.lag_row[static_cast<std::size_t>(r)])).transpose();
            const auto fit = rotterdam_fit(result.params, w_lag, t.wbar.row(r).transpose(), t.dlnp.row(r).transpose(),
                                           t.dlny(r), t.dlnQ(r));
            if (!fit.positive_shares) ++vc.violations;
        }
        return vc;
    }
    const Eigen::MatrixXd lp = data.price.array().log();
    const Eigen::VectorXd ly = data.total.array().log();
    const Eigen::MatrixXd w = kernels::evaluate_shares(spec, result.params, lp, ly);
    vc.total = data.n_obs();
    for (Eigen::Index o = 0; o < w.rows(); ++o)
        if (!((w.row(o).array() > 0.0).all())) ++vc.violations;
    return vc;
}

ViolationCount check_positivity(const ModelSpec &spec, const ParamSet &params, const EvaluationPoint &pt) {
    ViolationCount vc{0, 1};
    if (spec.form == Form::Rotterdam) {
        // No change from the evaluation point: fitted quantities equal last period's.
        const auto n = pt.shares.size();
        const auto fit = rotterdam_fit(params, pt.shares, pt.shares, Eigen::VectorXd::Zero(n), 0.0, 0.0);
        vc.violations = fit.positive_quantities ? 0 : 1;
        return vc;
    }
    const Eigen::VectorXd lp = pt.prices.array().log();
    const double lnc = fitted_log_cost(spec, params, lp, std::log(pt.expenditure));
    vc.violations = std::isfinite(lnc) ? 0 : 1;
    return vc;
}

ViolationCount check_monotonicity(const ModelSpec &spec, const ParamSet &params, const EvaluationPoint &pt) {
    ViolationCount vc{0, 1};
    if (spec.form == Form::Rotterdam) {
        const auto n = pt.shares.size();
        const auto fit = rotterdam_fit(params, pt.shares, pt.shares, Eigen::VectorXd::Zero(n), 0.0, 0.0);
        vc.violations = fit.positive_shares ? 0 : 1;
        return vc;
    }
    const Eigen::VectorXd w = share_eval(spec, params, pt.prices, pt.expenditure);
    vc.violations = all_positive(w) ? 0 : 1;
    return vc;
}

Eigen::MatrixXd negativity_matrix(const ModelSpec &spec, const ParamSet &params, const EvaluationPoint &pt) {
    const auto N = static_cast<Eigen::Index>(spec.n_goods);
    if (params.alpha.size() != N || params.gamma.rows() != N)
        throw DemandError(ErrorCode::ModelNotFitted, "parameters do not match the model");
    switch (spec.form) {
    case Form::Rotterdam: return params.gamma;
    case Form::AIDS: {
        pt.validate(spec.n_goods);
        const Eigen::VectorXd lp = pt.prices.array().log();
        const double L = std::log(pt.expenditure) - aids_log_price_index(lp, params, spec.alpha0);
        const Eigen::VectorXd &w = pt.shares;
        Eigen::MatrixXd k = params.gamma + params.beta * params.beta.transpose() * L + w * w.transpose();
        k.diagonal() -= w;
        return k;
    }
    case Form::QUAIDS: {
        const ElasticityTable t = elasticities_quaids(params, pt, spec.alpha0);
        return pt.shares.asDiagonal() * t.e_comp;
    }
    }
    throw DemandError(ErrorCode::WrongForm, "unknown model form");
}

Eigen::MatrixXd negativity_matrix(const EstimationResult &result, const EvaluationPoint &pt) {
    require_fitted(result);
    return negativity_matrix(result.spec, result.params, pt);
}

namespace {

void fill_imposed(RegularityReport &r, const ParamSet &params, double tol) {
    const auto res = restriction_residuals(params, r.form);
    r.restriction_tol = tol;
    r.adding_up = {res.adding_up, res.adding_up <= tol};
    r.homogeneity = {res.homogeneity, res.homogeneity <= tol};
    r.symmetry = {res.symmetry, res.symmetry <= tol};
}

PointwiseNegativity pointwise(const ModelSpec &spec, const ParamSet &params, const PanelDataset &data, double tol) {
    PointwiseNegativity pw;
    pw.max_eigenvalue = -std::numeric_limits<double>::infinity();
    pw.total = data.n_obs();
    for (Eigen::Index o = 0; o < static_cast<Eigen::Index>(data.n_obs()); ++o) {
        EvaluationPoint pt;
        pt.prices = data.price.row(o).transpose();
        pt.expenditure = data.total(o);
        if (spec.form == Form::Rotterdam)
            pt.shares = data.share.row(o).transpose();
        else
            pt.shares = share_eval(spec, params, pt.prices, pt.expenditure);
        if (!all_positive(pt.shares)) {
            ++pw.violations;
            continue;
        }
        const auto et = eigen_test(negativity_matrix(spec, params, pt), tol);
        pw.max_eigenvalue = std::max(pw.max_eigenvalue, et.eigenvalues(0));
        if (!et.satisfied) ++pw.violations;
    }
    return pw;
}

} // namespace

RegularityReport regularity_report(const EstimationResult &result, const PanelDataset *data,
                                   const EvaluationPoint &pt, const RegularityOptions &options) {
    require_fitted(result);
    RegularityReport r;
    r.model = std::string(to_string(result.spec.form));
    r.form = result.spec.form;
    r.fitted = true;
    r.objective = result.objective;
    r.log_det_sigma = result.log_det_sigma;
    r.equations = result.n_obs * (result.spec.n_goods > 0 ? result.spec.n_goods - 1 : 0);
    r.n_obs = result.n_obs;
    r.n_params = static_cast<std::size_t>(result.theta_hat.size());
    if (data != nullptr) {
        r.positivity = check_positivity(result, *data);
        r.monotonicity = check_monotonicity(result, *data);
    } else {
        r.positivity = check_positivity(result.spec, result.params, pt);
        r.monotonicity = check_monotonicity(result.spec, result.params, pt);
    }
    r.negativity_matrix = negativity_matrix(result, pt);
    r.negativity = eigen_test(r.negativity_matrix, options.curvature_tol);
    fill_imposed(r, result.params, options.restriction_tol);
    if (options.per_observation && data != nullptr)
        r.per_observation = pointwise(result.spec, result.params, *data, options.curvature_tol);
    return r;
}

RegularityReport regularity_report(const ModelSpec &spec, const ParamSet &params, const EvaluationPoint &pt,
                                   const RegularityOptions &options) {
    RegularityReport r;
    r.model = std::string(to_string(spec.form));
    r.form = spec.form;
    r.positivity = check_positivity(spec, params, pt);
    r.monotonicity = check_monotonicity(spec, params, pt);
    r.negativity_matrix = negativity_matrix(spec, params, pt);
    r.negativity = eigen_test(r.negativity_matrix, options.curvature_tol);
    fill_imposed(r, params, options.restriction_tol);
    return r;
}

std::vector<std::string> RegularityReport::violated() const {
    std::vector<std::string> v;
    if (!positivity.satisfied()) v.emplace_back("positivity");
    if (!monotonicity.satisfied()) v.emplace_back("monotonicity");
    if (!negativity.satisfied || (per_observation && per_observation->violations > 0)) v.emplace_back("negativity");
    if (!adding_up.satisfied) v.emplace_back("adding-up");
    if (!homogeneity.satisfied) v.emplace_back("homogeneity");
    if (!symmetry.satisfied) v.emplace_back("symmetry");
    return v;
}

std::optional<std::string> Selection::best() const {
    if (regular.empty()) return std::nullopt;
    return regular.front().model;
}

Selection select_model(const std::vector<RegularityReport> &reports) {
    Selection s;
    for (const auto &r : reports) {
        const double per_eq = r.equations > 0 ? r.objective / static_cast<double>(r.equations) : r.objective;
        double crit = r.log_det_sigma;
        if (r.n_obs > 0)
            crit += static_cast<double>(r.n_params) * std::log(static_cast<double>(r.n_obs)) / static_cast<double>(r.n_obs);
        SelectionEntry e{r.model, r.violated(), per_eq, r.log_det_sigma, crit};
        (e.violated.empty() ? s.regular : s.violating).push_back(std::move(e));
    }
    std::stable_sort(s.regular.begin(), s.regular.end(), [](const SelectionEntry &a, const SelectionEntry &b) {
        const double scale = std::max({1.0, std::abs(a.objective), std::abs(b.objective)});
        if (std::abs(a.objective - b.objective) > 1e-6 * scale) return a.objective < b.objective;
        return a.criterion < b.criterion;
    });
    return s;
}

namespace {

nlohmann::json rounded(const Eigen::MatrixXd &m) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(round_sig(m(i, j)));
        a.push_back(row);
    }
    return a;
}

nlohmann::json counts(const ViolationCount &v) {
    return {{"violations", v.violations}, {"total", v.total}, {"satisfied", v.satisfied()}};
}

nlohmann::json imposed(const ImposedCheck &c) {
    return {{"max_residual", round_sig(c.residual)}, {"satisfied", c.satisfied}};
}

nlohmann::json entry_json(const SelectionEntry &e) {
    return {{"model", e.model},
            {"violated", e.violated},
            {"objective", round_sig(e.objective)},
            {"log_det_sigma", round_sig(e.log_det_sigma)},
            {"criterion", round_sig(e.criterion)}};
}

} // namespace

nlohmann::json regularity_to_json(const RegularityReport &r) {
    nlohmann::json doc;
    doc["model"] = r.model;
    doc["positivity"] = counts(r.positivity);
    doc["monotonicity"] = counts(r.monotonicity);
    nlohmann::json neg;
    neg["matrix"] = rounded(r.negativity_matrix);
    nlohmann::json ev = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.negativity.eigenvalues.size(); ++i) ev.push_back(round_sig(r.negativity.eigenvalues(i)));
    neg["eigenvalues"] = ev;
    neg["tolerance"] = r.negativity.tolerance;
    neg["roundoff"] = round_sig(r.negativity.roundoff);
    neg["satisfied"] = r.negativity.satisfied;
    if (r.per_observation) {
        neg["per_observation"] = {{"violations", r.per_observation->violations},
                                  {"total", r.per_observation->total},
                                  {"max_eigenvalue", round_sig(r.per_observation->max_eigenvalue)}};
    }
    doc["negativity"] = neg;
    doc["imposed"] = {{"tolerance", r.restriction_tol},
                      {"adding_up", imposed(r.adding_up)},
                      {"homogeneity", imposed(r.homogeneity)},
                      {"symmetry", imposed(r.symmetry)}};
    doc["violated"] = r.violated();
    doc["verdict"] = r.verdict();
    return doc;
}

nlohmann::json selection_to_json(const Selection &s) {
    nlohmann::json doc;
    doc["regular"] = nlohmann::json::array();
    for (const auto &e : s.regular) doc["regular"].push_back(entry_json(e));
    doc["violating"] = nlohmann::json::array();
    for (const auto &e : s.violating) doc["violating"].push_back(entry_json(e));
    const auto best = s.best();
    doc["selected"] = best ? nlohmann::json(*best) : nlohmann::json(nullptr);
    return doc;
}

std::string regularity_table_text(const std::vector<RegularityReport> &reports) {
    const char *conditions[] = {"positivity", "monotonicity", "negativity", "adding-up", "homogeneity", "symmetry"};
    std::vector<std::string> top;
    for (const auto &r : reports)
        top.push_back(r.negativity.eigenvalues.size() ? format_sig(r.negativity.eigenvalues(0)) : "-");
    std::size_t col = 8;
    for (const auto &r : reports) col = std::max(col, r.model.size() + 2);
    for (const auto &e : top) col = std::max(col, e.size() + 2);
    std::ostringstream out;
    out << "condition     ";
    for (const auto &r : reports) out << r.model << std::string(col - r.model.size(), ' ');
    out << '\n';
    for (const char *c : conditions) {
        const std::string name(c);
        out << name << std::string(14 - name.size(), ' ');
        for (const auto &r : reports) {
            const auto v = r.violated();
            const bool ok = std::find(v.begin(), v.end(), name) == v.end();
            // Check marks are three bytes but one column wide.
            out << (ok ? "✓" : "✗") << std::string(col - 1, ' ');
        }
        out << '\n';
    }
    out << "max eigen     ";
    for (const auto &e : top) out << e << std::string(col - e.size(), ' ');
    out << '\n';
    return out.str();
}

std::string selection_to_text(const Selection &s) {
    std::ostringstream out;
    const auto best = s.best();
    out << "selected: " << (best ? *best : std::string("none")) << '\n';
    for (const auto &e : s.regular)
        out << "  regular    " << e.model << "  objective " << format_sig(e.objective) << "  log det sigma "
            << format_sig(e.log_det_sigma) << "  criterion " << format_sig(e.criterion) << '\n';
    for (const auto &e : s.violating) {
        out << "  violating  " << e.model << "  fails";
        for (const auto &v : e.violated) out << ' ' << v;
        out << '\n';
    }
    return out.str();
}

} // namespace demand
