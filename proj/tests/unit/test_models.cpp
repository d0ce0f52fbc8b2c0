#include "demand/errors.hpp"
#include "demand/models.hpp"

#include "helpers.hpp"

#include <cmath>

#include "doctest.h"

using namespace demand;
using testutil::spec_of;
using testutil::vec;

namespace {

ErrorCode code_of(auto &&fn) {
    try {
        fn();
    } catch (const DemandError &e) {
        return e.code();
    }
    FAIL("expected a DemandError");
    return ErrorCode::IoError;
}

} // namespace

TEST_SUITE("models") {

TEST_CASE("zero theta") {
    const auto p = unpack(Eigen::VectorXd::Zero(7), spec_of(Form::AIDS));
    CHECK(p.alpha == vec({0, 0, 1}));
    CHECK(p.gamma.isZero(0));
    CHECK(p.beta.isZero(0));
    const auto r = restriction_residuals(p, Form::AIDS);
    CHECK(r.adding_up == 0.0);
    CHECK(r.homogeneity == 0.0);
    CHECK(r.symmetry == 0.0);
}

TEST_CASE("layout sizes and names") {
    CHECK(ThetaLayout(Form::Rotterdam, 3).size() == 5);
    CHECK(ThetaLayout(Form::AIDS, 3).size() == 7);
    CHECK(ThetaLayout(Form::QUAIDS, 3).size() == 9);
    CHECK(ThetaLayout(Form::QUAIDS, 4).size() == 15);
    const ThetaLayout l(Form::QUAIDS, 4);
    CHECK(l.gamma_index(0, 1) == 9);
    CHECK(l.gamma_index(2, 3) == 14);
    const auto names = l.names();
    CHECK(names.front() == "alpha_1");
    CHECK(names[6] == "lambda_1");
    CHECK(names.back() == "gamma_3_4");
}

TEST_CASE("unpack satisfies the restrictions exactly and pack inverts it") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> z;
    for (Form f : {Form::Rotterdam, Form::AIDS, Form::QUAIDS}) {
        for (std::size_t n : {2u, 3u, 5u}) {
            const auto spec = spec_of(f, n);
            for (int rep = 0; rep < 20; ++rep) {
                Eigen::VectorXd theta(static_cast<Eigen::Index>(ThetaLayout(f, n).size()));
                for (auto &x : theta) x = z(rng);
                const auto p = unpack(theta, spec);
                const auto r = restriction_residuals(p, f);
                CHECK(r.adding_up < 1e-13);
                CHECK(r.homogeneity < 1e-13);
                CHECK(r.symmetry == 0.0);
                CHECK((pack(p, spec) - theta).cwiseAbs().maxCoeff() == 0.0);
            }
        }
    }
}

TEST_CASE("unpack rejects a wrong theta length") {
    CHECK(code_of([] { unpack(Eigen::VectorXd::Zero(6), spec_of(Form::AIDS)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("printed estimates survive pack and unpack to their rounding") {
    for (Form f : {Form::Rotterdam, Form::AIDS, Form::QUAIDS}) {
        CAPTURE(to_string(f));
        const auto printed = testutil::published(f);
        const auto spec = spec_of(f);
        const auto p = unpack(pack(printed, spec), spec);
        CHECK((p.alpha - printed.alpha).cwiseAbs().maxCoeff() < 1.5e-3);
        CHECK((p.gamma - printed.gamma).cwiseAbs().maxCoeff() < 1.5e-3);
        if (f != Form::Rotterdam) CHECK((p.beta - printed.beta).cwiseAbs().maxCoeff() < 1.5e-3);
        if (f == Form::QUAIDS) CHECK((p.lambda - printed.lambda).cwiseAbs().maxCoeff() < 1.5e-3);
        CHECK(std::abs(printed.alpha.sum() - 1.0) < 1.5e-3);
    }
}

TEST_CASE("price index") {
    std::mt19937_64 rng(3);
    auto p = testutil::random_params(Form::AIDS, 4, rng);
    CHECK(aids_price_index(Eigen::VectorXd::Ones(4), p, 0.7) == 0.7);

    ParamSet one;
    one.alpha = vec({1, 0, 0});
    one.gamma = Eigen::MatrixXd::Zero(3, 3);
    CHECK(aids_price_index(vec({std::exp(1.0), 1, 1}), one, 0.0) == doctest::Approx(1.0).epsilon(1e-15));

    std::uniform_real_distribution<double> u(0.5, 2.0);
    for (int rep = 0; rep < 50; ++rep) {
        Eigen::VectorXd prices(4);
        for (auto &x : prices) x = u(rng);
        double brute = 0.3;
        for (int k = 0; k < 4; ++k) {
            brute += p.alpha(k) * std::log(prices(k));
            for (int j = 0; j < 4; ++j) brute += 0.5 * p.gamma(k, j) * std::log(prices(k)) * std::log(prices(j));
        }
        CHECK(std::abs(aids_price_index(prices, p, 0.3) - brute) < 1e-12);
    }
    CHECK(code_of([&] { aids_price_index(vec({1, 0, 1, 1}), p, 0.0); }) == ErrorCode::NonPositivePrice);
}

TEST_CASE("share equations") {
    std::mt19937_64 rng(11);
    const auto aids = testutil::random_params(Form::AIDS, 3, rng);
    const auto s = share_eval(spec_of(Form::AIDS, 3, 0.4), aids, Eigen::VectorXd::Ones(3), std::exp(0.4));
    CHECK((s - aids.alpha).cwiseAbs().maxCoeff() < 1e-15);

    ParamSet q = aids;
    q.lambda = Eigen::VectorXd::Zero(3);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int rep = 0; rep < 100; ++rep) {
        Eigen::VectorXd lp(3);
        for (auto &x : lp) x = u(rng);
        const double ly = u(rng);
        const auto wa = share_eval_log(spec_of(Form::AIDS), aids, lp, ly);
        const auto wq = share_eval_log(spec_of(Form::QUAIDS), q, lp, ly);
        CHECK(wa == wq);
        const auto r = testutil::random_params(Form::QUAIDS, 3, rng);
        CHECK(std::abs(share_eval_log(spec_of(Form::QUAIDS), r, lp, ly).sum() - 1.0) < 1e-12);
    }
    CHECK(code_of([&] { share_eval(spec_of(Form::Rotterdam), aids, Eigen::VectorXd::Ones(3), 1.0); }) ==
          ErrorCode::WrongForm);
    CHECK(code_of([&] { share_eval(spec_of(Form::AIDS), aids, Eigen::VectorXd::Ones(3), 0.0); }) ==
          ErrorCode::NonPositiveExpenditure);
    CHECK(code_of([&] { share_eval(spec_of(Form::AIDS), aids, vec({1, -1, 1}), 1.0); }) == ErrorCode::NonPositivePrice);
}

TEST_CASE("quaids b(p) is the product of p_k^beta_k") {
    std::mt19937_64 rng(5);
    const auto p = testutil::random_params(Form::QUAIDS, 3, rng);
    const auto lp = vec({0.2, -0.1, 0.3});
    CHECK(quaids_log_b(lp, p) == doctest::Approx(p.beta.dot(lp)).epsilon(1e-15));
}

TEST_CASE("rotterdam right-hand side") {
    auto p = testutil::published(Form::Rotterdam);
    CHECK(rotterdam_rhs(p, Eigen::VectorXd::Zero(3), 0.0).isZero(0));
    const auto rhs = rotterdam_rhs(p, Eigen::VectorXd::Zero(3), 0.1);
    CHECK((rhs - vec({0.088, 0.003, 0.009})).cwiseAbs().maxCoeff() < 1e-15);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> z(0.0, 0.1);
    const auto r = testutil::random_params(Form::Rotterdam, 4, rng);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::VectorXd dlnp(4);
        for (auto &x : dlnp) x = z(rng);
        const double dQ = z(rng);
        CHECK(std::abs(rotterdam_rhs(r, dlnp, dQ).sum() - dQ) < 1e-15);
    }
}

TEST_CASE("parameter documents") {
    std::mt19937_64 rng(9);
    const auto spec = spec_of(Form::QUAIDS, 3, 0.25);
    const auto p = testutil::random_params(Form::QUAIDS, 3, rng);
    ModelSpec s2;
    ParamSet p2;
    params_from_json(params_to_json(spec, p), s2, p2);
    CHECK(s2.form == Form::QUAIDS);
    CHECK(s2.alpha0 == 0.25);
    CHECK(p2.gamma == p.gamma);
    CHECK(p2.lambda == p.lambda);

    auto bad = params_to_json(spec, p);
    bad["gamma"] = {{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}};
    try {
        params_from_json(bad, s2, p2);
        FAIL("accepted a non-square gamma");
    } catch (const DemandError &e) {
        CHECK(e.code() == ErrorCode::SchemaError);
        CHECK(std::string(e.what()).find("/gamma") != std::string::npos);
    }
    auto nobeta = params_to_json(spec, p);
    nobeta.erase("beta");
    CHECK(code_of([&] { params_from_json(nobeta, s2, p2); }) == ErrorCode::SchemaError);
}

TEST_CASE("form names") {
    CHECK(parse_form("rotterdam") == Form::Rotterdam);
    CHECK(parse_form("AIDS") == Form::AIDS);
    CHECK(to_string(Form::QUAIDS) == "quaids");
    CHECK(code_of([] { parse_form("translog"); }) == ErrorCode::SchemaError);
}

} // TEST_SUITE
