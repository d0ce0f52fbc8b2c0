#include "demand/models.hpp"

#include "demand/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace demand {

std::string_view to_string(Form form) noexcept {
    switch (form) {
    case Form::Rotterdam: return "rotterdam";
    case Form::AIDS: return "aids";
    case Form::QUAIDS: return "quaids";
    }
    return "unknown";
}

Form parse_form(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "rotterdam") return Form::Rotterdam;
    if (lower == "aids") return Form::AIDS;
    if (lower == "quaids") return Form::QUAIDS;
    throw DemandError(ErrorCode::SchemaError, "unknown model form '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
    if (n_goods < 2) throw DemandError(ErrorCode::DimensionMismatch, "at least two goods are required");
    if (!std::isfinite(alpha0)) throw DemandError(ErrorCode::SchemaError, "alpha0 must be finite");
}

RestrictionResiduals restriction_residuals(const ParamSet &p, Form form) {
    RestrictionResiduals r;
    const auto N = p.alpha.size();
    r.adding_up = std::abs(p.alpha.sum() - 1.0);
    if (p.gamma.rows() == N && p.gamma.cols() == N) {
        r.adding_up = std::max(r.adding_up, p.gamma.colwise().sum().cwiseAbs().maxCoeff());
        r.homogeneity = p.gamma.rowwise().sum().cwiseAbs().maxCoeff();
        r.symmetry = (p.gamma - p.gamma.transpose()).cwiseAbs().maxCoeff();
    } else {
        r.adding_up = r.homogeneity = r.symmetry = INFINITY;
    }
    if (form != Form::Rotterdam) r.adding_up = std::max(r.adding_up, std::abs(p.beta.sum()));
    if (form == Form::QUAIDS) r.adding_up = std::max(r.adding_up, std::abs(p.lambda.sum()));
    return r;
}

ThetaLayout::ThetaLayout(Form form, std::size_t n_goods) : form_(form), n_(n_goods) {
    if (n_goods < 2) throw DemandError(ErrorCode::DimensionMismatch, "at least two goods are required");
}

std::size_t ThetaLayout::beta_offset() const { return n_ - 1; }

std::size_t ThetaLayout::lambda_offset() const { return 2 * (n_ - 1); }

std::size_t ThetaLayout::gamma_offset() const {
    switch (form_) {
    case Form::Rotterdam: return n_ - 1;
    case Form::AIDS: return 2 * (n_ - 1);
    case Form::QUAIDS: return 3 * (n_ - 1);
    }
    return 0;
}

std::size_t ThetaLayout::size() const { return gamma_offset() + n_ * (n_ - 1) / 2; }

std::size_t ThetaLayout::gamma_index(std::size_t i, std::size_t j) const {
    // Row i of the strict upper triangle starts after sum_{r<i} (n - 1 - r) entries.
    return gamma_offset() + i * (2 * n_ - i - 1) / 2 + (j - i - 1);
}

std::vector<std::string> ThetaLayout::names() const {
    std::vector<std::string> out(size());
    for (std::size_t i = 0; i + 1 < n_; ++i) {
        out[alpha_offset() + i] = "alpha_" + std::to_string(i + 1);
        if (form_ != Form::Rotterdam) out[beta_offset() + i] = "beta_" + std::to_string(i + 1);
        if (form_ == Form::QUAIDS) out[lambda_offset() + i] = "lambda_" + std::to_string(i + 1);
    }
    for (std::size_t i = 0; i < n_; ++i)
        for (std::size_t j = i + 1; j < n_; ++j)
            out[gamma_index(i, j)] = "gamma_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
    return out;
}

ParamSet unpack(const Eigen::VectorXd &theta, const ModelSpec &spec) {
    spec.validate();
    const ThetaLayout layout(spec.form, spec.n_goods);
    if (static_cast<std::size_t>(theta.size()) != layout.size())
        throw DemandError(ErrorCode::DimensionMismatch, "theta has " + std::to_string(theta.size()) +
                                                            " entries, layout expects " +
                                                            std::to_string(layout.size()));
    const auto N = static_cast<Eigen::Index>(spec.n_goods);
    const auto m = N - 1;
    ParamSet p;

    auto tail_closed = [&](std::size_t offset, double total) {
        Eigen::VectorXd v(N);
        v.head(m) = theta.segment(static_cast<Eigen::Index>(offset), m);
        v(m) = total - v.head(m).sum();
        return v;
    };
    p.alpha = tail_closed(layout.alpha_offset(), 1.0);
    if (spec.form != Form::Rotterdam) p.beta = tail_closed(layout.beta_offset(), 0.0);
    if (spec.form == Form::QUAIDS) p.lambda = tail_closed(layout.lambda_offset(), 0.0);

    p.gamma = Eigen::MatrixXd::Zero(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = i + 1; j < N; ++j) {
            const double g = theta(static_cast<Eigen::Index>(
                layout.gamma_index(static_cast<std::size_t>(i), static_cast<std::size_t>(j))));
            p.gamma(i, j) = g;
            p.gamma(j, i) = g;
        }
    for (Eigen::Index i = 0; i < N; ++i) {
        double off = 0.0;
        for (Eigen::Index j = 0; j < N; ++j)
            if (j != i) off += p.gamma(i, j);
        p.gamma(i, i) = -off;
    }
    return p;
}

Eigen::VectorXd pack(const ParamSet &params, const ModelSpec &spec) {
    spec.validate();
    const ThetaLayout layout(spec.form, spec.n_goods);
    const auto N = static_cast<Eigen::Index>(spec.n_goods);
    const auto m = N - 1;
    if (params.alpha.size() != N || params.gamma.rows() != N || params.gamma.cols() != N)
        throw DemandError(ErrorCode::DimensionMismatch, "parameter set does not match the number of goods");
    Eigen::VectorXd theta(static_cast<Eigen::Index>(layout.size()));
    theta.segment(static_cast<Eigen::Index>(layout.alpha_offset()), m) = params.alpha.head(m);
    if (spec.form != Form::Rotterdam) {
        if (params.beta.size() != N) throw DemandError(ErrorCode::DimensionMismatch, "beta has the wrong size");
        theta.segment(static_cast<Eigen::Index>(layout.beta_offset()), m) = params.beta.head(m);
    }
    if (spec.form == Form::QUAIDS) {
        if (params.lambda.size() != N) throw DemandError(ErrorCode::DimensionMismatch, "lambda has the wrong size");
        theta.segment(static_cast<Eigen::Index>(layout.lambda_offset()), m) = params.lambda.head(m);
    }
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = i + 1; j < N; ++j)
            theta(static_cast<Eigen::Index>(
                layout.gamma_index(static_cast<std::size_t>(i), static_cast<std::size_t>(j)))) = params.gamma(i, j);
    return theta;
}

double aids_log_price_index(const Eigen::VectorXd &log_prices, const ParamSet &params, double alpha0) {
    return alpha0 + params.alpha.dot(log_prices) + 0.5 * log_prices.dot(params.gamma * log_prices);
}

namespace {

Eigen::VectorXd checked_log_prices(const Eigen::VectorXd &prices, std::size_t n_goods) {
    if (static_cast<std::size_t>(prices.size()) != n_goods)
        throw DemandError(ErrorCode::DimensionMismatch, "price vector has the wrong length");
    for (Eigen::Index k = 0; k < prices.size(); ++k)
        if (!(prices(k) > 0.0) || !std::isfinite(prices(k)))
            throw DemandError(ErrorCode::NonPositivePrice, "price " + std::to_string(k + 1) + " is not positive");
    return prices.array().log().matrix();
}

} // namespace

double aids_price_index(const Eigen::VectorXd &prices, const ParamSet &params, double alpha0) {
    return aids_log_price_index(checked_log_prices(prices, params.n_goods()), params, alpha0);
}

double quaids_log_b(const Eigen::VectorXd &log_prices, const ParamSet &params) {
    return params.beta.dot(log_prices);
}

Eigen::VectorXd share_eval_log(const ModelSpec &spec, const ParamSet &params, const Eigen::VectorXd &log_prices,
                               double log_y) {
    if (spec.form == Form::Rotterdam)
        throw DemandError(ErrorCode::WrongForm, "the Rotterdam model has no share equation; use rotterdam_rhs");
    const double real_exp = log_y - aids_log_price_index(log_prices, params, spec.alpha0);
    Eigen::VectorXd w = params.alpha + params.gamma * log_prices + params.beta * real_exp;
    if (spec.form == Form::QUAIDS) {
        const double b = std::exp(quaids_log_b(log_prices, params));
        w += params.lambda * (real_exp * real_exp / b);
    }
    return w;
}

Eigen::VectorXd share_eval(const ModelSpec &spec, const ParamSet &params, const Eigen::VectorXd &prices, double y) {
    if (spec.form == Form::Rotterdam)
        throw DemandError(ErrorCode::WrongForm, "the Rotterdam model has no share equation; use rotterdam_rhs");
    const auto lp = checked_log_prices(prices, spec.n_goods);
    if (!(y > 0.0) || !std::isfinite(y))
        throw DemandError(ErrorCode::NonPositiveExpenditure, "total expenditure must be positive");
    return share_eval_log(spec, params, lp, std::log(y));
}

Eigen::VectorXd rotterdam_rhs(const ParamSet &params, const Eigen::VectorXd &dlnp, double dlnQ) {
    if (dlnp.size() != params.alpha.size() || params.gamma.rows() != params.alpha.size())
        throw DemandError(ErrorCode::DimensionMismatch, "price change vector has the wrong length");
    return params.alpha * dlnQ + params.gamma * dlnp;
}

nlohmann::json params_to_json(const ModelSpec &spec, const ParamSet &params) {
    using nlohmann::json;
    auto vec = [](const Eigen::VectorXd &v) {
        json a = json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
        return a;
    };
    json gamma = json::array();
    for (Eigen::Index i = 0; i < params.gamma.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < params.gamma.cols(); ++j) row.push_back(params.gamma(i, j));
        gamma.push_back(row);
    }
    json doc = {{"form", std::string(to_string(spec.form))},
                {"n_goods", spec.n_goods},
                {"alpha0", spec.alpha0},
                {"alpha", vec(params.alpha)},
                {"gamma", gamma}};
    if (spec.form != Form::Rotterdam) doc["beta"] = vec(params.beta);
    if (spec.form == Form::QUAIDS) doc["lambda"] = vec(params.lambda);
    return doc;
}

namespace {

[[noreturn]] void schema_error(const std::string &path, const std::string &msg) {
    throw DemandError(ErrorCode::SchemaError, path + ": " + msg);
}

Eigen::VectorXd read_vector(const nlohmann::json &doc, const std::string &key, std::size_t n) {
    const std::string path = "/" + key;
    if (!doc.contains(key)) schema_error(path, "missing");
    const auto &a = doc.at(key);
    if (!a.is_array()) schema_error(path, "expected an array");
    if (a.size() != n) schema_error(path, "expected " + std::to_string(n) + " entries, got " + std::to_string(a.size()));
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (!a[i].is_number()) schema_error(path + "/" + std::to_string(i), "expected a number");
        v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
        if (!std::isfinite(v(static_cast<Eigen::Index>(i)))) schema_error(path + "/" + std::to_string(i), "not finite");
    }
    return v;
}

} // namespace

void params_from_json(const nlohmann::json &doc, ModelSpec &spec, ParamSet &params) {
    if (!doc.is_object()) schema_error("", "parameter document must be a JSON object");
    if (!doc.contains("form") || !doc["form"].is_string()) schema_error("/form", "missing or not a string");
    ModelSpec s;
    try {
        s.form = parse_form(doc["form"].get<std::string>());
    } catch (const DemandError &) {
        schema_error("/form", "unknown form '" + doc["form"].get<std::string>() + "'");
    }
    if (!doc.contains("alpha") || !doc["alpha"].is_array()) schema_error("/alpha", "missing or not an array");
    std::size_t n = doc["alpha"].size();
    if (doc.contains("n_goods")) {
        if (!doc["n_goods"].is_number_unsigned()) schema_error("/n_goods", "expected a positive integer");
        n = doc["n_goods"].get<std::size_t>();
    }
    if (n < 2) schema_error("/n_goods", "at least two goods are required");
    s.n_goods = n;
    if (doc.contains("alpha0")) {
        if (!doc["alpha0"].is_number()) schema_error("/alpha0", "expected a number");
        s.alpha0 = doc["alpha0"].get<double>();
    }

    ParamSet p;
    p.alpha = read_vector(doc, "alpha", n);
    if (s.form != Form::Rotterdam) p.beta = read_vector(doc, "beta", n);
    if (s.form == Form::QUAIDS) p.lambda = read_vector(doc, "lambda", n);

    if (!doc.contains("gamma")) schema_error("/gamma", "missing");
    const auto &g = doc["gamma"];
    if (!g.is_array()) schema_error("/gamma", "expected an array");
    const auto Ni = static_cast<Eigen::Index>(n);
    p.gamma.resize(Ni, Ni);
    const bool nested = !g.empty() && g[0].is_array();
    if (nested) {
        if (g.size() != n) schema_error("/gamma", "expected " + std::to_string(n) + " rows, got " + std::to_string(g.size()));
        for (std::size_t i = 0; i < n; ++i) {
            const std::string row_path = "/gamma/" + std::to_string(i);
            if (!g[i].is_array()) schema_error(row_path, "expected an array");
            if (g[i].size() != n)
                schema_error(row_path, "matrix is not square: row has " + std::to_string(g[i].size()) + " entries");
            for (std::size_t j = 0; j < n; ++j) {
                if (!g[i][j].is_number()) schema_error(row_path + "/" + std::to_string(j), "expected a number");
                p.gamma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g[i][j].get<double>();
            }
        }
    } else {
        if (g.size() != n * n)
            schema_error("/gamma", "row-major gamma must have " + std::to_string(n * n) + " entries, got " +
                                       std::to_string(g.size()));
        for (std::size_t k = 0; k < n * n; ++k) {
            if (!g[k].is_number()) schema_error("/gamma/" + std::to_string(k), "expected a number");
            p.gamma(static_cast<Eigen::Index>(k / n), static_cast<Eigen::Index>(k % n)) = g[k].get<double>();
        }
    }
    if (!p.gamma.allFinite()) schema_error("/gamma", "entries must be finite");
    spec = s;
    params = std::move(p);
}

} // namespace demand
