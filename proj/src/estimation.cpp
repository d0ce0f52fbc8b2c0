#include "demand/estimation.hpp"

#include "demand/errors.hpp"
#include "demand/kernels.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <limits>

namespace demand {

bool EstimationResult::fitted() const {
    if (spec.n_goods < 2) return false;
    const auto N = static_cast<Eigen::Index>(spec.n_goods);
    if (params.alpha.size() != N || params.gamma.rows() != N || params.gamma.cols() != N) return false;
    if (spec.form != Form::Rotterdam && params.beta.size() != N) return false;
    if (spec.form == Form::QUAIDS && params.lambda.size() != N) return false;
    return true;
}

Eigen::VectorXd EstimationResult::standard_errors() const {
    if (cov_theta.size() == 0) return Eigen::VectorXd::Zero(theta_hat.size());
    return cov_theta.diagonal().cwiseMax(0.0).cwiseSqrt();
}

namespace {

struct Weighting {
    Eigen::MatrixXd sigma;        // regularized covariance actually used
    Eigen::MatrixXd inv_chol;     // L^-1 with sigma = L L'
    double ridge = 0.0;
};

/// Residual covariance ready for whitening. A numerically singular estimate
/// (min eigenvalue below 1e-10 of the max) gets a ridge of that size; an
/// exactly zero estimate falls back to the identity.
Weighting make_weighting(const Eigen::MatrixXd &sigma_hat) {
    const auto m = sigma_hat.rows();
    Weighting w;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_hat, Eigen::EigenvaluesOnly);
    const double max_ev = es.eigenvalues().maxCoeff();
    const double min_ev = es.eigenvalues().minCoeff();
    if (!(max_ev > std::numeric_limits<double>::min() * 1e10) || !std::isfinite(max_ev)) {
        w.sigma = Eigen::MatrixXd::Identity(m, m);
        w.ridge = 1.0;
    } else if (min_ev < 1e-10 * max_ev) {
        w.ridge = 1e-10 * max_ev - std::min(min_ev, 0.0);
        w.sigma = sigma_hat + w.ridge * Eigen::MatrixXd::Identity(m, m);
    } else {
        w.sigma = sigma_hat;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(w.sigma);
    if (llt.info() != Eigen::Success)
        throw DemandError(ErrorCode::SingularResidualCovariance, "residual covariance is not positive definite");
    const Eigen::MatrixXd L = llt.matrixL();
    w.inv_chol = L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(m, m));
    return w;
}

double log_det(const Eigen::MatrixXd &s) {
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd L = llt.matrixL();
    return 2.0 * L.diagonal().array().log().sum();
}

/// Whitened residuals stacked observation-major: entry t*m + i.
Eigen::VectorXd whiten(const Eigen::MatrixXd &resid, const Eigen::MatrixXd &inv_chol) {
    const Eigen::MatrixXd w = resid * inv_chol.transpose();  // row t = (L^-1 e_t)'
    Eigen::VectorXd out(w.size());
    const auto m = w.cols();
    for (Eigen::Index t = 0; t < w.rows(); ++t) out.segment(t * m, m) = w.row(t).transpose();
    return out;
}

double frobenius_change(const Eigen::MatrixXd &a, const Eigen::MatrixXd &b) { return (a - b).norm(); }

void check_enough_observations(std::size_t n_obs, std::size_t m, std::size_t k, ErrorCode code) {
    if (n_obs * m < 2 * k)
        throw DemandError(code, std::to_string(n_obs) + " observations x " + std::to_string(m) +
                                    " equations are fewer than two per free parameter (" + std::to_string(k) + ")");
}

// ---------------------------------------------------------------------------
// Rotterdam: linear restricted SUR.

struct LinearSystem {
    Eigen::MatrixXd y;                 // n x m
    std::vector<Eigen::MatrixXd> x;    // n blocks of m x K
};

LinearSystem rotterdam_system(const RotterdamTransform &t, std::size_t K, const ModelSpec &spec,
                              bool demean_by_unit) {
    const auto n = static_cast<Eigen::Index>(t.n_obs());
    const auto m = static_cast<Eigen::Index>(t.n_goods()) - 1;
    // Each free parameter's regressor is the model response to a unit theta
    // entry, which keeps the design exactly consistent with rotterdam_rhs.
    std::vector<ParamSet> basis;
    for (std::size_t k = 0; k < K; ++k) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
        e(static_cast<Eigen::Index>(k)) = 1.0;
        basis.push_back(unpack(e, spec));
    }
    LinearSystem sys;
    sys.y = t.lhs().leftCols(m);
    sys.x.assign(static_cast<std::size_t>(n), Eigen::MatrixXd(m, static_cast<Eigen::Index>(K)));
    for (Eigen::Index r = 0; r < n; ++r) {
        const Eigen::VectorXd dlnp = t.dlnp.row(r).transpose();
        for (std::size_t k = 0; k < K; ++k)
            sys.x[static_cast<std::size_t>(r)].col(static_cast<Eigen::Index>(k)) =
                rotterdam_rhs(basis[k], dlnp, t.dlnQ(r)).head(m);
    }
    if (demean_by_unit) {
        std::map<std::size_t, std::vector<Eigen::Index>> rows;
        for (Eigen::Index r = 0; r < n; ++r) rows[t.obs_unit[static_cast<std::size_t>(r)]].push_back(r);
        for (const auto &[unit, idx] : rows) {
            Eigen::RowVectorXd ym = Eigen::RowVectorXd::Zero(m);
            Eigen::MatrixXd xm = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(K));
            for (auto r : idx) {
                ym += sys.y.row(r);
                xm += sys.x[static_cast<std::size_t>(r)];
            }
            ym /= static_cast<double>(idx.size());
            xm /= static_cast<double>(idx.size());
            for (auto r : idx) {
                sys.y.row(r) -= ym;
                sys.x[static_cast<std::size_t>(r)] -= xm;
            }
        }
    }
    return sys;
}

struct GlsSolution {
    Eigen::VectorXd theta;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd resid;
};

GlsSolution solve_gls(const LinearSystem &sys, const Eigen::MatrixXd &inv_chol) {
    const auto n = sys.y.rows();
    const auto m = sys.y.cols();
    const auto K = sys.x.front().cols();
    Eigen::MatrixXd xw(n * m, K);
    Eigen::VectorXd yw(n * m);
    for (Eigen::Index t = 0; t < n; ++t) {
        xw.middleRows(t * m, m) = inv_chol * sys.x[static_cast<std::size_t>(t)];
        yw.segment(t * m, m) = inv_chol * sys.y.row(t).transpose();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
    qr.setThreshold(1e-10);
    if (qr.rank() < K)
        throw DemandError(ErrorCode::RankDeficientDesign, "design matrix has rank " + std::to_string(qr.rank()) +
                                                              " < " + std::to_string(K) + " free parameters");
    GlsSolution s;
    s.theta = qr.solve(yw);
    const Eigen::MatrixXd xtx = xw.transpose() * xw;
    s.cov = xtx.ldlt().solve(Eigen::MatrixXd::Identity(K, K));
    s.cov = 0.5 * (s.cov + s.cov.transpose());
    s.resid.resize(n, m);
    for (Eigen::Index t = 0; t < n; ++t)
        s.resid.row(t) = sys.y.row(t) - (sys.x[static_cast<std::size_t>(t)] * s.theta).transpose();
    return s;
}

double generalized_ssr(const Eigen::MatrixXd &resid, const Eigen::MatrixXd &inv_chol) {
    return (resid * inv_chol.transpose()).squaredNorm();
}

// ---------------------------------------------------------------------------
// AIDS / QUAIDS: nonlinear SUR.

class ShareResiduals {
public:
    ShareResiduals(const PanelDataset &data, const ModelSpec &spec)
        : spec_(spec), log_prices_(data.price.array().log().matrix()),
          log_y_(data.total.array().log().matrix()), observed_(data.share.leftCols(data.share.cols() - 1)) {}

    Eigen::MatrixXd operator()(const Eigen::VectorXd &theta) const {
        const auto p = unpack(theta, spec_);
        const Eigen::MatrixXd fitted = kernels::evaluate_shares(spec_, p, log_prices_, log_y_);
        return observed_ - fitted.leftCols(observed_.cols());
    }

    Eigen::Index n_obs() const { return observed_.rows(); }
    Eigen::Index n_eq() const { return observed_.cols(); }

private:
    ModelSpec spec_;
    Eigen::MatrixXd log_prices_;
    Eigen::VectorXd log_y_;
    Eigen::MatrixXd observed_;
};

/// Whitened Jacobian of the stacked residual vector, columns in theta order.
Eigen::MatrixXd whitened_jacobian(const ShareResiduals &f, const Eigen::VectorXd &theta,
                                  const Eigen::MatrixXd &inv_chol, double fd_step) {
    const auto K = theta.size();
    Eigen::MatrixXd jac(f.n_obs() * f.n_eq(), K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const double h = fd_step * std::max(1.0, std::abs(theta(k)));
        Eigen::VectorXd up = theta, down = theta;
        up(k) += h;
        down(k) -= h;
        const double step = up(k) - down(k);
        jac.col(k) = (whiten(f(up), inv_chol) - whiten(f(down), inv_chol)) / step;
    }
    return jac;
}

struct InnerOutcome {
    Eigen::VectorXd theta;
    double objective;
    bool converged;
    std::vector<double> trace;
};

/// Levenberg-Marquardt on sum_t e_t' Sigma^-1 e_t with Sigma fixed.
InnerOutcome minimize_fixed_sigma(const ShareResiduals &f, Eigen::VectorXd theta, const Eigen::MatrixXd &inv_chol,
                                  const EstimationOptions &opt) {
    InnerOutcome out;
    Eigen::VectorXd r = whiten(f(theta), inv_chol);
    double obj = r.squaredNorm();
    double mu = 1e-3;
    const double inner_tol = 1e-2 * opt.step_tol;
    out.converged = false;
    for (int it = 0; it < opt.max_inner; ++it) {
        const Eigen::MatrixXd jac = whitened_jacobian(f, theta, inv_chol, opt.fd_step);
        // r = w - w_hat(theta); J = dr/dtheta. Gauss-Newton step solves min |r + J d|.
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        Eigen::VectorXd diag = a.diagonal();
        const double floor = 1e-12 * std::max(1.0, diag.maxCoeff());
        diag = diag.cwiseMax(floor);

        bool accepted = false;
        Eigen::VectorXd step;
        while (mu <= 1e12) {
            Eigen::MatrixXd damped = a;
            damped.diagonal() += mu * diag;
            step = -damped.ldlt().solve(g);
            if (!step.allFinite()) {
                mu *= 10.0;
                continue;
            }
            const Eigen::VectorXd cand = theta + step;
            const Eigen::VectorXd rc = whiten(f(cand), inv_chol);
            const double oc = rc.squaredNorm();
            if (std::isfinite(oc) && oc <= obj) {
                theta = cand;
                r = rc;
                obj = oc;
                accepted = true;
                mu = std::max(mu * 0.1, 1e-12);
                break;
            }
            mu *= 10.0;
        }
        if (!accepted) {
            // No descent direction left at working precision.
            out.converged = true;
            break;
        }
        out.trace.push_back(obj);
        const double scale = std::max(1.0, theta.cwiseAbs().maxCoeff());
        if (step.cwiseAbs().maxCoeff() < inner_tol * scale) {
            out.converged = true;
            break;
        }
    }
    out.theta = std::move(theta);
    out.objective = obj;
    return out;
}

} // namespace

EstimationResult estimate_rotterdam(const RotterdamTransform &t, const EstimationOptions &options) {
    ModelSpec spec;
    spec.form = Form::Rotterdam;
    spec.n_goods = t.n_goods();
    spec.validate();
    const ThetaLayout layout(spec.form, spec.n_goods);
    const std::size_t K = layout.size();
    const auto m = static_cast<Eigen::Index>(spec.n_goods) - 1;
    check_enough_observations(t.n_obs(), static_cast<std::size_t>(m), K, ErrorCode::RankDeficientDesign);

    const LinearSystem sys = rotterdam_system(t, K, spec, options.demean_by_unit);
    EstimationResult res;
    res.spec = spec;
    res.n_obs = t.n_obs();
    if (options.demean_by_unit) res.notes.push_back("per-unit demeaning applied");

    Weighting w = make_weighting(Eigen::MatrixXd::Identity(m, m));
    GlsSolution sol = solve_gls(sys, w.inv_chol);
    Eigen::MatrixXd sigma_prev = Eigen::MatrixXd::Identity(m, m);
    res.iterations = 1;
    res.converged = false;
    const int max_outer = options.iterate ? options.max_outer : 2;
    for (int outer = 1; outer < max_outer; ++outer) {
        const Eigen::MatrixXd sigma = sol.resid.transpose() * sol.resid / static_cast<double>(sol.resid.rows());
        const double change = frobenius_change(sigma, sigma_prev);
        sigma_prev = sigma;
        w = make_weighting(sigma);
        const Eigen::VectorXd theta_prev = sol.theta;
        sol = solve_gls(sys, w.inv_chol);
        ++res.iterations;
        const double step = (sol.theta - theta_prev).cwiseAbs().maxCoeff();
        res.objective_trace.push_back({generalized_ssr(sol.resid, w.inv_chol)});
        if (change < options.sigma_tol && step < options.step_tol) {
            res.converged = true;
            break;
        }
    }
    if (!options.iterate) res.converged = true;

    res.theta_hat = sol.theta;
    res.params = unpack(sol.theta, spec);
    res.cov_theta = sol.cov;
    res.sigma_hat = sol.resid.transpose() * sol.resid / static_cast<double>(sol.resid.rows());
    const Weighting final_w = make_weighting(res.sigma_hat);
    res.ridge = final_w.ridge;
    if (final_w.ridge > 0.0) res.notes.push_back("residual covariance singular; ridge " + std::to_string(final_w.ridge) + " added");
    res.objective = generalized_ssr(sol.resid, w.inv_chol);
    res.log_det_sigma = log_det(final_w.sigma);
    if (!res.converged) res.notes.push_back("FGLS did not converge within the iteration cap");
    return res;
}

EstimationResult estimate_nonlinear(const PanelDataset &data, const ModelSpec &spec, const Eigen::VectorXd &init,
                                    const EstimationOptions &options) {
    spec.validate();
    if (spec.form == Form::Rotterdam)
        throw DemandError(ErrorCode::WrongForm, "estimate_nonlinear handles AIDS and QUAIDS only");
    if (spec.n_goods != data.n_goods())
        throw DemandError(ErrorCode::DimensionMismatch, "model and data disagree on the number of goods");
    for (Eigen::Index o = 0; o < data.total.size(); ++o)
        if (!(data.total(o) > 0.0))
            throw DemandError(ErrorCode::NonPositiveExpenditure, "observation " + std::to_string(o) +
                                                                     " has non-positive total expenditure");
    const ThetaLayout layout(spec.form, spec.n_goods);
    if (static_cast<std::size_t>(init.size()) != layout.size())
        throw DemandError(ErrorCode::DimensionMismatch, "initial theta does not match the layout");
    const auto m = static_cast<Eigen::Index>(spec.n_goods) - 1;
    check_enough_observations(data.n_obs(), static_cast<std::size_t>(m), layout.size(),
                              ErrorCode::RankDeficientJacobian);

    const ShareResiduals f(data, spec);
    EstimationResult res;
    res.spec = spec;
    res.n_obs = data.n_obs();

    Eigen::VectorXd theta = init;
    Weighting w = make_weighting(Eigen::MatrixXd::Identity(m, m));
    Eigen::MatrixXd sigma_prev = Eigen::MatrixXd::Identity(m, m);
    const int max_outer = options.iterate ? options.max_outer : 2;
    res.converged = false;
    bool inner_ok = true;
    for (int outer = 0; outer < max_outer; ++outer) {
        const Eigen::VectorXd theta_start = theta;
        InnerOutcome inner = minimize_fixed_sigma(f, theta, w.inv_chol, options);
        theta = inner.theta;
        inner_ok = inner.converged;
        res.objective_trace.push_back(std::move(inner.trace));
        ++res.iterations;

        const Eigen::MatrixXd resid = f(theta);
        const Eigen::MatrixXd sigma = resid.transpose() * resid / static_cast<double>(resid.rows());
        const double change = frobenius_change(sigma, sigma_prev);
        const double step = (theta - theta_start).cwiseAbs().maxCoeff();
        sigma_prev = sigma;
        if (!sigma.allFinite())
            throw DemandError(ErrorCode::SingularResidualCovariance, "residual covariance is not finite");
        if (options.iterate && inner_ok && step < options.step_tol && change < options.sigma_tol) {
            res.converged = true;
            break;
        }
        if (!options.iterate && outer == max_outer - 1) {
            res.converged = inner_ok;
            break;
        }
        w = make_weighting(sigma);
    }

    res.theta_hat = theta;
    res.params = unpack(theta, spec);
    const Eigen::MatrixXd resid = f(theta);
    res.sigma_hat = resid.transpose() * resid / static_cast<double>(resid.rows());
    const Weighting final_w = make_weighting(res.sigma_hat);
    res.ridge = final_w.ridge;
    if (final_w.ridge > 0.0)
        res.notes.push_back("residual covariance singular; ridge " + std::to_string(final_w.ridge) + " added");
    res.objective = (resid * w.inv_chol.transpose()).squaredNorm();
    res.log_det_sigma = log_det(final_w.sigma);

    const Eigen::MatrixXd jac = whitened_jacobian(f, theta, final_w.inv_chol, options.fd_step);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jac);
    qr.setThreshold(1e-10);
    const auto K = static_cast<Eigen::Index>(layout.size());
    if (qr.rank() < K)
        throw DemandError(ErrorCode::RankDeficientJacobian, "Jacobian has rank " + std::to_string(qr.rank()) + " < " +
                                                                std::to_string(K) + " at the optimum");
    const Eigen::MatrixXd info = jac.transpose() * jac;
    res.cov_theta = info.ldlt().solve(Eigen::MatrixXd::Identity(K, K));
    res.cov_theta = 0.5 * (res.cov_theta + res.cov_theta.transpose());
    if (!res.converged) res.notes.push_back("nonlinear FGLS did not converge; best iterate returned");
    return res;
}

Eigen::VectorXd default_init(const PanelDataset &data, const ModelSpec &spec) {
    const ThetaLayout layout(spec.form, spec.n_goods);
    if (spec.form == Form::Rotterdam) {
        const auto t = rotterdam_transform(data);
        const auto m = static_cast<Eigen::Index>(spec.n_goods) - 1;
        const LinearSystem sys = rotterdam_system(t, layout.size(), spec, false);
        return solve_gls(sys, Eigen::MatrixXd::Identity(m, m)).theta;
    }
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
    const Eigen::VectorXd mean_share = data.share.colwise().mean().transpose();
    theta.head(static_cast<Eigen::Index>(spec.n_goods) - 1) = mean_share.head(static_cast<Eigen::Index>(spec.n_goods) - 1);
    return theta;
}

EstimationResult estimate(const PanelDataset &data, const ModelSpec &spec, const EstimationOptions &options,
                          const std::optional<Eigen::VectorXd> &init) {
    if (spec.form == Form::Rotterdam) return estimate_rotterdam(rotterdam_transform(data), options);
    if (options.demean_by_unit)
        throw DemandError(ErrorCode::WrongForm, "per-unit demeaning applies to the Rotterdam model only");
    return estimate_nonlinear(data, spec, init ? *init : default_init(data, spec), options);
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd &m) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(row);
    }
    return a;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json &a, const std::string &path) {
    if (!a.is_array()) throw DemandError(ErrorCode::SchemaError, path + ": expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(a.size());
    const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(a[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto &row = a[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw DemandError(ErrorCode::SchemaError, path + "/" + std::to_string(i) + ": ragged matrix row");
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
    }
    return m;
}

} // namespace

nlohmann::json result_to_json(const EstimationResult &r) {
    nlohmann::json doc = params_to_json(r.spec, r.params);
    doc["layout_version"] = std::string(ThetaLayout::kVersion);
    doc["theta_names"] = ThetaLayout(r.spec.form, r.spec.n_goods).names();
    doc["theta"] = std::vector<double>(r.theta_hat.data(), r.theta_hat.data() + r.theta_hat.size());
    const Eigen::VectorXd se = r.standard_errors();
    doc["theta_se"] = std::vector<double>(se.data(), se.data() + se.size());
    doc["cov_theta"] = matrix_json(r.cov_theta);
    doc["sigma_hat"] = matrix_json(r.sigma_hat);
    doc["n_obs"] = r.n_obs;
    doc["iterations"] = r.iterations;
    doc["converged"] = r.converged;
    doc["objective"] = r.objective;
    doc["log_det_sigma"] = r.log_det_sigma;
    doc["ridge"] = r.ridge;
    doc["notes"] = r.notes;
    return doc;
}

EstimationResult result_from_json(const nlohmann::json &doc) {
    EstimationResult r;
    params_from_json(doc, r.spec, r.params);
    const ThetaLayout layout(r.spec.form, r.spec.n_goods);
    if (doc.contains("theta")) {
        if (!doc.contains("layout_version") || doc["layout_version"] != ThetaLayout::kVersion)
            throw DemandError(ErrorCode::SchemaError, "/layout_version: expected '" +
                                                          std::string(ThetaLayout::kVersion) + "'");
        const auto theta = doc["theta"].get<std::vector<double>>();
        if (theta.size() != layout.size())
            throw DemandError(ErrorCode::SchemaError, "/theta: expected " + std::to_string(layout.size()) + " entries");
        r.theta_hat = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    } else {
        r.theta_hat = pack(r.params, r.spec);
    }
    if (doc.contains("cov_theta")) {
        r.cov_theta = matrix_from_json(doc["cov_theta"], "/cov_theta");
        const auto K = static_cast<Eigen::Index>(layout.size());
        if (r.cov_theta.size() != 0 && (r.cov_theta.rows() != K || r.cov_theta.cols() != K))
            throw DemandError(ErrorCode::SchemaError, "/cov_theta: expected a " + std::to_string(K) + "x" +
                                                          std::to_string(K) + " matrix");
    }
    if (doc.contains("sigma_hat")) r.sigma_hat = matrix_from_json(doc["sigma_hat"], "/sigma_hat");
    r.n_obs = doc.value("n_obs", std::size_t{0});
    r.iterations = doc.value("iterations", 0);
    r.converged = doc.value("converged", true);
    r.objective = doc.value("objective", 0.0);
    r.log_det_sigma = doc.value("log_det_sigma", 0.0);
    r.ridge = doc.value("ridge", 0.0);
    return r;
}

} // namespace demand
