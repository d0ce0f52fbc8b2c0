#pragma once

#include "demand/models.hpp"

#include <Eigen/Core>

#include <random>
#include <string>

namespace testutil {

inline std::string data_path(const std::string &name) { return std::string(DEMAND_DATA_DIR) + "/" + name; }

/// Restricted parameters with interior shares near log p = 0, log y = 0.
inline demand::ParamSet random_params(demand::Form form, std::size_t n, std::mt19937_64 &rng) {
    using namespace demand;
    ModelSpec spec;
    spec.form = form;
    spec.n_goods = n;
    const ThetaLayout layout(form, n);
    Eigen::VectorXd theta(static_cast<Eigen::Index>(layout.size()));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double base = 1.0 / static_cast<double>(n);
    const std::size_t m = n - 1;
    for (std::size_t i = 0; i < m; ++i) theta(static_cast<Eigen::Index>(i)) = base * (1.0 + 0.3 * u(rng));
    if (form != Form::Rotterdam)
        for (std::size_t i = 0; i < m; ++i) theta(static_cast<Eigen::Index>(layout.beta_offset() + i)) = 0.08 * u(rng);
    if (form == Form::QUAIDS)
        for (std::size_t i = 0; i < m; ++i) theta(static_cast<Eigen::Index>(layout.lambda_offset() + i)) = 0.03 * u(rng);
    for (std::size_t k = layout.gamma_offset(); k < layout.size(); ++k) theta(static_cast<Eigen::Index>(k)) = 0.05 * u(rng);
    return unpack(theta, spec);
}

inline demand::ModelSpec spec_of(demand::Form form, std::size_t n = 3, double alpha0 = 0.0) {
    demand::ModelSpec s;
    s.form = form;
    s.n_goods = n;
    s.alpha0 = alpha0;
    return s;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

inline Eigen::MatrixXd sym3(double a11, double a21, double a22, double a31, double a32, double a33) {
    Eigen::MatrixXd m(3, 3);
    m << a11, a21, a31, a21, a22, a32, a31, a32, a33;
    return m;
}

/// Printed parameter estimates (3 goods: private, local, intercity).
inline demand::ParamSet published(demand::Form form) {
    demand::ParamSet p;
    switch (form) {
    case demand::Form::Rotterdam:
        p.alpha = vec({0.880, 0.030, 0.090});
        p.gamma = sym3(-0.430, 0.118, -0.213, 0.312, 0.095, -0.407);
        break;
    case demand::Form::AIDS:
        p.alpha = vec({1.879, -0.278, -0.601});
        p.gamma = sym3(0.330, -0.125, 0.090, -0.206, 0.035, 0.171);
        p.beta = vec({0.211, -0.066, -0.145});
        break;
    case demand::Form::QUAIDS:
        p.alpha = vec({0.406, 0.182, 0.412});
        p.gamma = sym3(-0.143, 0.029, 0.037, 0.115, -0.066, -0.049);
        p.beta = vec({0.131, -0.041, -0.090});
        p.lambda = vec({-0.007, 0.002, 0.005});
        break;
    }
    return p;
}

} // namespace testutil
