#include "demand/synth.hpp"

#include "demand/errors.hpp"

#include <Eigen/LU>

#include <cmath>
#include <random>

namespace demand {

void SynthConfig::validate() const {
    spec.validate();
    const auto N = static_cast<Eigen::Index>(spec.n_goods);
    if (truth.alpha.size() != N || truth.gamma.rows() != N || truth.gamma.cols() != N)
        throw DemandError(ErrorCode::DimensionMismatch, "true parameters do not match the number of goods");
    if (spec.form != Form::Rotterdam && truth.beta.size() != N)
        throw DemandError(ErrorCode::DimensionMismatch, "true parameters need beta");
    if (spec.form == Form::QUAIDS && truth.lambda.size() != N)
        throw DemandError(ErrorCode::DimensionMismatch, "true parameters need lambda");
    const auto res = restriction_residuals(truth, spec.form);
    if (std::max({res.adding_up, res.homogeneity, res.symmetry}) > 1e-10)
        throw DemandError(ErrorCode::SchemaError, "true parameters violate the imposed restrictions");
    if (log_price_sd < 0 || log_y_sd < 0 || share_noise_sd < 0 || unit_dispersion < 0)
        throw DemandError(ErrorCode::SchemaError, "standard deviations must be nonnegative");
    if (n_units == 0 || n_periods == 0) throw DemandError(ErrorCode::SchemaError, "panel dimensions must be positive");
    if (spec.form == Form::Rotterdam && n_periods < 2)
        throw DemandError(ErrorCode::InsufficientPeriods, "a Rotterdam panel needs two periods per unit");
    if (log_price_start.size() != 0 && log_price_start.size() != N)
        throw DemandError(ErrorCode::DimensionMismatch, "log_price_start has the wrong length");
    if (log_price_drift.size() != 0 && log_price_drift.size() != N)
        throw DemandError(ErrorCode::DimensionMismatch, "log_price_drift has the wrong length");
    if (initial_shares.size() != 0 && initial_shares.size() != N)
        throw DemandError(ErrorCode::DimensionMismatch, "initial_shares has the wrong length");
    if (!goods.empty() && goods.size() != spec.n_goods)
        throw DemandError(ErrorCode::DimensionMismatch, "goods list has the wrong length");
}

namespace {

constexpr double kClip = 1e-6;

/// Residuals of the first N-1 Rotterdam equations for candidate shares w
/// (first m entries; the last closes the budget).
Eigen::VectorXd rotterdam_residual(const ParamSet &p, const Eigen::VectorXd &wm, const Eigen::VectorXd &w_lag,
                                   const Eigen::VectorXd &logq_lag, const Eigen::VectorXd &lp,
                                   const Eigen::VectorXd &dlnp, double log_y, const Eigen::VectorXd &noise) {
    const auto N = w_lag.size();
    const auto m = N - 1;
    Eigen::VectorXd w(N);
    w.head(m) = wm;
    w(m) = 1.0 - wm.sum();
    const Eigen::VectorXd dlnq = (w.array().log() + log_y - lp.array()).matrix() - logq_lag;
    const Eigen::VectorXd wbar = 0.5 * (w + w_lag);
    const double dlnQ = wbar.dot(dlnq);
    const Eigen::VectorXd rhs = rotterdam_rhs(p, dlnp, dlnQ);
    return (wbar.array() * dlnq.array()).matrix().head(m) - rhs.head(m) - noise;
}

bool interior(const Eigen::VectorXd &wm) { return (wm.array() > 0.0).all() && wm.sum() < 1.0; }

/// Newton iteration on the current-period shares; steps are halved to stay
/// inside the simplex.
Eigen::VectorXd solve_rotterdam_period(const ParamSet &p, const Eigen::VectorXd &w_lag, const Eigen::VectorXd &logq_lag,
                                       const Eigen::VectorXd &lp, const Eigen::VectorXd &dlnp, double log_y,
                                       const Eigen::VectorXd &noise) {
    const auto N = w_lag.size();
    const auto m = N - 1;
    Eigen::VectorXd wm = w_lag.head(m);
    auto f = [&](const Eigen::VectorXd &x) { return rotterdam_residual(p, x, w_lag, logq_lag, lp, dlnp, log_y, noise); };
    Eigen::VectorXd r = f(wm);
    for (int it = 0; it < 100 && r.cwiseAbs().maxCoeff() > 1e-15; ++it) {
        Eigen::MatrixXd jac(m, m);
        for (Eigen::Index k = 0; k < m; ++k) {
            const double h = 1e-7 * std::max(wm(k), 1e-3);
            Eigen::VectorXd up = wm, down = wm;
            up(k) += h;
            down(k) -= h;
            jac.col(k) = (f(up) - f(down)) / (2.0 * h);
        }
        const Eigen::VectorXd step = jac.partialPivLu().solve(-r);
        double t = 1.0;
        Eigen::VectorXd cand = wm + step;
        while (!interior(cand) && t > 1e-12) {
            t *= 0.5;
            cand = wm + t * step;
        }
        if (!interior(cand)) break;
        const Eigen::VectorXd rc = f(cand);
        if (!rc.allFinite()) break;
        wm = cand;
        r = rc;
    }
    if (!interior(wm) || r.cwiseAbs().maxCoeff() > 1e-10)
        throw DemandError(ErrorCode::DegenerateShares,
                          "Rotterdam generation left the simplex; reduce noise or price volatility");
    Eigen::VectorXd w(N);
    w.head(m) = wm;
    w(m) = 1.0 - wm.sum();
    return w;
}

/// Clips shares into (0, 1) and renormalizes; returns whether it had to.
bool clip_shares(Eigen::VectorXd &w) {
    if ((w.array() > 0.0).all() && (w.array() < 1.0).all()) return false;
    w = w.cwiseMax(kClip).cwiseMin(1.0 - kClip);
    w /= w.sum();
    return true;
}

std::string unit_name(std::size_t u, std::size_t n_units) {
    const auto width = std::to_string(n_units).size();
    std::string s = std::to_string(u + 1);
    return "u" + std::string(width - s.size(), '0') + s;
}

} // namespace

SynthOutput generate_with_report(const SynthConfig &cfg) {
    cfg.validate();
    const auto N = static_cast<Eigen::Index>(cfg.spec.n_goods);
    const auto m = N - 1;
    const Eigen::VectorXd lp0 = cfg.log_price_start.size() ? cfg.log_price_start : Eigen::VectorXd::Zero(N);
    const Eigen::VectorXd drift = cfg.log_price_drift.size() ? cfg.log_price_drift : Eigen::VectorXd::Zero(N);
    std::vector<std::string> goods = cfg.goods;
    if (goods.empty())
        for (Eigen::Index i = 0; i < N; ++i) goods.push_back("good_" + std::to_string(i + 1));

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> z(0.0, 1.0);

    std::vector<GoodRecord> records;
    records.reserve(cfg.n_units * cfg.n_periods * static_cast<std::size_t>(N));
    std::size_t clipped = 0;
    for (std::size_t u = 0; u < cfg.n_units; ++u) {
        Eigen::VectorXd lp(N);
        for (Eigen::Index k = 0; k < N; ++k) lp(k) = lp0(k) + cfg.unit_dispersion * z(rng);
        double ly = cfg.log_y_start + cfg.unit_dispersion * z(rng);
        Eigen::VectorXd w_prev, logq_prev, lp_prev;
        for (std::size_t t = 0; t < cfg.n_periods; ++t) {
            if (t > 0) {
                for (Eigen::Index k = 0; k < N; ++k) lp(k) += drift(k) + cfg.log_price_sd * z(rng);
                ly += cfg.log_y_drift + cfg.log_y_sd * z(rng);
            }
            Eigen::VectorXd noise(m);
            for (Eigen::Index k = 0; k < m; ++k) noise(k) = cfg.share_noise_sd * z(rng);

            Eigen::VectorXd w(N);
            if (cfg.spec.form == Form::Rotterdam) {
                if (t == 0) {
                    w = cfg.initial_shares.size() ? cfg.initial_shares : cfg.truth.alpha;
                    if (!((w.array() > 0.0).all()))
                        throw DemandError(ErrorCode::DegenerateShares,
                                          "Rotterdam initial shares must be positive; set initial_shares");
                    w /= w.sum();
                } else {
                    w = solve_rotterdam_period(cfg.truth, w_prev, logq_prev, lp, lp - lp_prev, ly, noise);
                }
            } else {
                w = share_eval_log(cfg.spec, cfg.truth, lp, ly);
                w.head(m) += noise;
                w(m) = 1.0 - w.head(m).sum();
                if (!w.allFinite())
                    throw DemandError(ErrorCode::DegenerateShares, "generated shares are not finite");
            }
            if (clip_shares(w)) ++clipped;
            for (Eigen::Index k = 0; k < N; ++k) {
                GoodRecord r;
                r.unit = unit_name(u, cfg.n_units);
                r.period = static_cast<int>(t + 1);
                r.good = goods[static_cast<std::size_t>(k)];
                r.price = std::exp(lp(k));
                r.expenditure = w(k) * std::exp(ly);
                records.push_back(std::move(r));
            }
            w_prev = w;
            logq_prev = (w.array().log() + ly - lp.array()).matrix();
            lp_prev = lp;
        }
    }
    const std::size_t n_obs = cfg.n_units * cfg.n_periods;
    if (static_cast<double>(clipped) > 0.05 * static_cast<double>(n_obs))
        throw DemandError(ErrorCode::DegenerateShares,
                          std::to_string(clipped) + " of " + std::to_string(n_obs) +
                              " observations had shares outside (0, 1); lower share_noise_sd or move the truth "
                              "away from the simplex boundary");
    SynthOutput out;
    out.data = assemble_panel(std::move(records), {}, goods);
    out.clipped = clipped;
    return out;
}

PanelDataset generate(const SynthConfig &cfg) { return generate_with_report(cfg).data; }

namespace {

std::vector<double> to_std(const Eigen::VectorXd &v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_json_vector(const nlohmann::json &doc, const char *key) {
    const auto &v = doc.at(key);
    if (!v.is_array()) throw DemandError(ErrorCode::SchemaError, std::string("/") + key + ": expected an array");
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number())
            throw DemandError(ErrorCode::SchemaError, std::string("/") + key + "/" + std::to_string(i) + ": not a number");
        out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
    }
    return out;
}

} // namespace

nlohmann::json synth_config_to_json(const SynthConfig &cfg) {
    nlohmann::json doc;
    doc["truth"] = params_to_json(cfg.spec, cfg.truth);
    doc["n_units"] = cfg.n_units;
    doc["n_periods"] = cfg.n_periods;
    if (cfg.log_price_start.size()) doc["log_price_start"] = to_std(cfg.log_price_start);
    if (cfg.log_price_drift.size()) doc["log_price_drift"] = to_std(cfg.log_price_drift);
    doc["log_price_sd"] = cfg.log_price_sd;
    doc["log_y_start"] = cfg.log_y_start;
    doc["log_y_drift"] = cfg.log_y_drift;
    doc["log_y_sd"] = cfg.log_y_sd;
    doc["unit_dispersion"] = cfg.unit_dispersion;
    doc["share_noise_sd"] = cfg.share_noise_sd;
    if (cfg.initial_shares.size()) doc["initial_shares"] = to_std(cfg.initial_shares);
    doc["seed"] = cfg.seed;
    if (!cfg.goods.empty()) doc["goods"] = cfg.goods;
    return doc;
}

SynthConfig synth_config_from_json(const nlohmann::json &doc) {
    if (!doc.is_object() || !doc.contains("truth"))
        throw DemandError(ErrorCode::SchemaError, "/truth: missing true parameter document");
    SynthConfig cfg;
    try {
        params_from_json(doc["truth"], cfg.spec, cfg.truth);
    } catch (const DemandError &e) {
        throw DemandError(e.code(), std::string("/truth") + e.message());
    }
    cfg.n_units = doc.value("n_units", cfg.n_units);
    cfg.n_periods = doc.value("n_periods", cfg.n_periods);
    if (doc.contains("log_price_start")) cfg.log_price_start = from_json_vector(doc, "log_price_start");
    if (doc.contains("log_price_drift")) cfg.log_price_drift = from_json_vector(doc, "log_price_drift");
    cfg.log_price_sd = doc.value("log_price_sd", cfg.log_price_sd);
    cfg.log_y_start = doc.value("log_y_start", cfg.log_y_start);
    cfg.log_y_drift = doc.value("log_y_drift", cfg.log_y_drift);
    cfg.log_y_sd = doc.value("log_y_sd", cfg.log_y_sd);
    cfg.unit_dispersion = doc.value("unit_dispersion", cfg.unit_dispersion);
    cfg.share_noise_sd = doc.value("share_noise_sd", cfg.share_noise_sd);
    if (doc.contains("initial_shares")) cfg.initial_shares = from_json_vector(doc, "initial_shares");
    cfg.seed = doc.value("seed", cfg.seed);
    if (doc.contains("goods")) cfg.goods = doc["goods"].get<std::vector<std::string>>();
    cfg.validate();
    return cfg;
}

} // namespace demand
