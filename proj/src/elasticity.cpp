#include "demand/elasticity.hpp"

#include "demand/errors.hpp"
#include "demand/estimation.hpp"
#include "demand/format.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace demand {

EvaluationPoint EvaluationPoint::sample_mean(const PanelDataset &data) {
    if (data.n_obs() == 0) throw DemandError(ErrorCode::InsufficientPeriods, "cannot evaluate at the mean of an empty panel");
    EvaluationPoint pt;
    pt.shares = data.share.colwise().mean().transpose();
    pt.shares /= pt.shares.sum();
    pt.prices = data.price.array().log().colwise().mean().exp().transpose();
    pt.expenditure = std::exp(data.total.array().log().mean());
    return pt;
}

EvaluationPoint EvaluationPoint::at_model(const ModelSpec &spec, const ParamSet &params,
                                          const Eigen::VectorXd &prices, double expenditure) {
    EvaluationPoint pt;
    pt.prices = prices;
    pt.expenditure = expenditure;
    pt.shares = share_eval(spec, params, prices, expenditure);
    return pt;
}

void EvaluationPoint::validate(std::size_t n) const {
    const auto N = static_cast<Eigen::Index>(n);
    if (shares.size() != N || prices.size() != N)
        throw DemandError(ErrorCode::DimensionMismatch, "evaluation point has " + std::to_string(shares.size()) +
                                                            " shares and " + std::to_string(prices.size()) +
                                                            " prices for " + std::to_string(n) + " goods");
    for (Eigen::Index i = 0; i < N; ++i) {
        if (!(shares(i) > 0.0)) throw DemandError(ErrorCode::ZeroShare, "share of good " + std::to_string(i + 1) + " is not positive");
        if (!(prices(i) > 0.0)) throw DemandError(ErrorCode::NonPositivePrice, "price of good " + std::to_string(i + 1) + " is not positive");
    }
    if (!(expenditure > 0.0)) throw DemandError(ErrorCode::NonPositiveExpenditure, "evaluation expenditure is not positive");
}

nlohmann::json point_to_json(const EvaluationPoint &pt) {
    nlohmann::json doc;
    doc["shares"] = std::vector<double>(pt.shares.data(), pt.shares.data() + pt.shares.size());
    doc["prices"] = std::vector<double>(pt.prices.data(), pt.prices.data() + pt.prices.size());
    doc["expenditure"] = pt.expenditure;
    return doc;
}

namespace {

Eigen::VectorXd json_vector(const nlohmann::json &doc, const char *key, std::size_t n) {
    const auto &v = doc.at(key);
    if (!v.is_array() || v.size() != n)
        throw DemandError(ErrorCode::SchemaError, std::string("/") + key + ": expected an array of " +
                                                      std::to_string(n) + " numbers");
    Eigen::VectorXd out(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (!v[i].is_number())
            throw DemandError(ErrorCode::SchemaError, std::string("/") + key + "/" + std::to_string(i) + ": not a number");
        out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    }
    return out;
}

} // namespace

EvaluationPoint point_from_json(const nlohmann::json &doc, std::size_t n) {
    if (!doc.is_object()) throw DemandError(ErrorCode::SchemaError, "/: evaluation point must be an object");
    if (!doc.contains("shares")) throw DemandError(ErrorCode::SchemaError, "/shares: missing");
    EvaluationPoint pt;
    pt.shares = json_vector(doc, "shares", n);
    if (doc.contains("prices"))
        pt.prices = json_vector(doc, "prices", n);
    else if (doc.contains("log_prices"))
        pt.prices = json_vector(doc, "log_prices", n).array().exp();
    else
        pt.prices = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    if (doc.contains("expenditure"))
        pt.expenditure = doc["expenditure"].get<double>();
    else if (doc.contains("log_expenditure"))
        pt.expenditure = std::exp(doc["log_expenditure"].get<double>());
    pt.validate(n);
    return pt;
}

namespace {

void finish_slutsky(ElasticityTable &t, const Eigen::VectorXd &w) {
    t.e_comp = t.e_unc + t.e_exp * w.transpose();
}

void check_shares(const EvaluationPoint &pt, std::size_t n) {
    if (static_cast<std::size_t>(pt.shares.size()) != n)
        throw DemandError(ErrorCode::DimensionMismatch, "evaluation point and parameters disagree on N");
    for (Eigen::Index i = 0; i < pt.shares.size(); ++i)
        if (!(pt.shares(i) > 0.0))
            throw DemandError(ErrorCode::ZeroShare, "share of good " + std::to_string(i + 1) + " is not positive");
}

// AIDS is QUAIDS with lambda = 0; sharing one code path makes the reduction exact.
ElasticityTable aids_family(const ParamSet &p, const EvaluationPoint &pt, double alpha0, bool quadratic, Form form) {
    const auto N = static_cast<Eigen::Index>(p.n_goods());
    check_shares(pt, p.n_goods());
    pt.validate(p.n_goods());
    const Eigen::VectorXd &w = pt.shares;
    const Eigen::VectorXd lp = pt.prices.array().log();
    const double L = std::log(pt.expenditure) - aids_log_price_index(lp, p, alpha0);
    const Eigen::VectorXd lambda = quadratic ? p.lambda : Eigen::VectorXd::Zero(N);
    const double b = quadratic ? std::exp(quaids_log_b(lp, p)) : 1.0;
    const double l2b = L * L / b;

    // d ln a / d ln p_j = alpha_j + sum_k gamma_jk ln p_k
    const Eigen::VectorXd dlna = p.alpha + p.gamma * lp;
    const Eigen::VectorXd mu = p.beta + (2.0 * L / b) * lambda;

    ElasticityTable t;
    t.form = form;
    t.e_exp = (1.0 + mu.array() / w.array()).matrix();
    t.e_unc.resize(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < N; ++j)
            t.e_unc(i, j) = (p.gamma(i, j) - mu(i) * dlna(j) - lambda(i) * p.beta(j) * l2b) / w(i) - (i == j ? 1.0 : 0.0);
    finish_slutsky(t, w);
    return t;
}

} // namespace

ElasticityTable elasticities_rotterdam(const ParamSet &p, const EvaluationPoint &pt) {
    const auto N = static_cast<Eigen::Index>(p.n_goods());
    check_shares(pt, p.n_goods());
    const Eigen::VectorXd &w = pt.shares;
    ElasticityTable t;
    t.form = Form::Rotterdam;
    t.e_exp = (p.alpha.array() / w.array()).matrix();
    // The Slutsky terms are estimated directly; Marshallian ones follow.
    Eigen::MatrixXd comp(N, N);
    for (Eigen::Index i = 0; i < N; ++i) comp.row(i) = p.gamma.row(i) / w(i);
    t.e_unc = comp - t.e_exp * w.transpose();
    finish_slutsky(t, w);
    return t;
}

ElasticityTable elasticities_aids(const ParamSet &params, const EvaluationPoint &pt, double alpha0) {
    return aids_family(params, pt, alpha0, false, Form::AIDS);
}

ElasticityTable elasticities_quaids(const ParamSet &params, const EvaluationPoint &pt, double alpha0) {
    if (params.lambda.size() != params.alpha.size())
        throw DemandError(ErrorCode::DimensionMismatch, "QUAIDS parameters need lambda");
    return aids_family(params, pt, alpha0, true, Form::QUAIDS);
}

ElasticityTable elasticities(const ModelSpec &spec, const ParamSet &params, const EvaluationPoint &pt) {
    switch (spec.form) {
    case Form::Rotterdam: return elasticities_rotterdam(params, pt);
    case Form::AIDS: return elasticities_aids(params, pt, spec.alpha0);
    case Form::QUAIDS: return elasticities_quaids(params, pt, spec.alpha0);
    }
    throw DemandError(ErrorCode::WrongForm, "unknown model form");
}

namespace {

/// All entries of a table as one vector: e_exp, then e_unc and e_comp column-major.
Eigen::VectorXd flatten(const ElasticityTable &t) {
    const auto N = t.e_exp.size();
    Eigen::VectorXd v(N + 2 * N * N);
    v.head(N) = t.e_exp;
    v.segment(N, N * N) = Eigen::Map<const Eigen::VectorXd>(t.e_unc.data(), N * N);
    v.tail(N * N) = Eigen::Map<const Eigen::VectorXd>(t.e_comp.data(), N * N);
    return v;
}

} // namespace

ElasticityTable delta_method_se(const TableProducer &producer, const Eigen::VectorXd &theta,
                                const Eigen::MatrixXd &cov, double fd_step) {
    const auto K = theta.size();
    if (cov.rows() != K || cov.cols() != K)
        throw DemandError(ErrorCode::DimensionMismatch, "covariance does not match the parameter vector");
    ElasticityTable table = producer(theta);
    const auto N = table.e_exp.size();
    const auto M = N + 2 * N * N;
    Eigen::MatrixXd grad(M, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const double h = fd_step * std::max(1.0, std::abs(theta(k)));
        Eigen::VectorXd up = theta, down = theta;
        up(k) += h;
        down(k) -= h;
        grad.col(k) = (flatten(producer(up)) - flatten(producer(down))) / (up(k) - down(k));
    }
    const Eigen::MatrixXd gc = grad * cov;
    const Eigen::MatrixXd abs_gc = grad.cwiseAbs() * cov.cwiseAbs();
    Eigen::VectorXd se(M);
    for (Eigen::Index r = 0; r < M; ++r) {
        const double var = gc.row(r).dot(grad.row(r));
        // Round-off allowance relative to the size of the terms being summed.
        const double scale = abs_gc.row(r).dot(grad.row(r).cwiseAbs());
        if (var < -1e-12 * scale || !std::isfinite(var))
            throw DemandError(ErrorCode::NegativeVariance, "delta-method variance " + format_sig(var) +
                                                               " for elasticity entry " + std::to_string(r));
        se(r) = std::sqrt(std::max(var, 0.0));
    }
    table.has_se = true;
    table.se_exp = se.head(N);
    table.se_unc = Eigen::Map<const Eigen::MatrixXd>(se.data() + N, N, N);
    table.se_comp = Eigen::Map<const Eigen::MatrixXd>(se.data() + N + N * N, N, N);
    return table;
}

ElasticityTable elasticities_with_se(const EstimationResult &result, const EvaluationPoint &pt) {
    if (!result.fitted()) throw DemandError(ErrorCode::ModelNotFitted, "no fitted parameters to evaluate");
    const ModelSpec spec = result.spec;
    if (result.cov_theta.size() == 0) return elasticities(spec, result.params, pt);
    const TableProducer producer = [&](const Eigen::VectorXd &theta) {
        return elasticities(spec, unpack(theta, spec), pt);
    };
    return delta_method_se(producer, result.theta_hat, result.cov_theta);
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

nlohmann::json rounded(const Eigen::VectorXd &v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(round_sig(v(i)));
    return a;
}

std::string cell(double v, bool has_se, double se) {
    std::string s = format_sig(v);
    if (has_se) s += " (" + format_sig(se) + ")";
    return s;
}

} // namespace

nlohmann::json elasticity_to_json(const ElasticityTable &t, const std::vector<std::string> &goods) {
    nlohmann::json doc;
    doc["model"] = std::string(to_string(t.form));
    doc["goods"] = goods;
    doc["expenditure"] = rounded(t.e_exp);
    doc["uncompensated"] = rounded(t.e_unc);
    doc["compensated"] = rounded(t.e_comp);
    if (t.has_se) {
        doc["se_expenditure"] = rounded(t.se_exp);
        doc["se_uncompensated"] = rounded(t.se_unc);
        doc["se_compensated"] = rounded(t.se_comp);
    }
    return doc;
}

std::string elasticity_to_text(const ElasticityTable &t, const std::vector<std::string> &goods) {
    const auto N = t.e_exp.size();
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"good", "e_i"};
    for (Eigen::Index j = 0; j < N; ++j) header.push_back("e^u_i" + std::to_string(j + 1));
    for (Eigen::Index j = 0; j < N; ++j) header.push_back("e^c_i" + std::to_string(j + 1));
    rows.push_back(header);
    for (Eigen::Index i = 0; i < N; ++i) {
        std::vector<std::string> r;
        r.push_back(static_cast<std::size_t>(i) < goods.size() ? goods[static_cast<std::size_t>(i)]
                                                                : "good_" + std::to_string(i + 1));
        r.push_back(cell(t.e_exp(i), t.has_se, t.has_se ? t.se_exp(i) : 0.0));
        for (Eigen::Index j = 0; j < N; ++j) r.push_back(cell(t.e_unc(i, j), t.has_se, t.has_se ? t.se_unc(i, j) : 0.0));
        for (Eigen::Index j = 0; j < N; ++j)
            r.push_back(cell(t.e_comp(i, j), t.has_se, t.has_se ? t.se_comp(i, j) : 0.0));
        rows.push_back(std::move(r));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto &r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    std::ostringstream out;
    out << to_string(t.form) << " elasticities\n";
    for (const auto &r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            out << r[c];
            if (c + 1 < r.size()) out << std::string(width[c] - r[c].size() + 2, ' ');
        }
        out << '\n';
    }
    return out.str();
}

} // namespace demand
