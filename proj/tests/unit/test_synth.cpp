#include "demand/errors.hpp"
#include "demand/synth.hpp"

#include "helpers.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"

using namespace demand;
using testutil::spec_of;

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

SynthConfig basic(Form f) {
    std::mt19937_64 rng(17);
    SynthConfig c;
    c.spec = spec_of(f);
    c.truth = testutil::random_params(f, 3, rng);
    c.share_noise_sd = 0.01;
    return c;
}

} // namespace

TEST_SUITE("synth") {

TEST_CASE("fixed seed gives identical panels") {
    for (Form f : {Form::Rotterdam, Form::AIDS, Form::QUAIDS}) {
        const auto c = basic(f);
        const auto a = generate(c);
        const auto b = generate(c);
        CHECK(a.share == b.share);
        CHECK(a.price == b.price);
        CHECK(a.total == b.total);
        auto c2 = c;
        c2.seed = 2;
        CHECK(generate(c2).share != a.share);
    }
}

TEST_CASE("panel shape and adding-up") {
    const auto d = generate(basic(Form::QUAIDS));
    CHECK(d.n_obs() == 31 * 13);
    CHECK(d.units.size() == 31);
    CHECK(d.units.front() == "u01");
    CHECK(d.goods == std::vector<std::string>{"good_1", "good_2", "good_3"});
    CHECK((d.share.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-14);
    CHECK(d.share.minCoeff() > 0.0);
}

TEST_CASE("noiseless shares follow the model exactly") {
    auto c = basic(Form::AIDS);
    c.share_noise_sd = 0.0;
    const auto d = generate(c);
    for (Eigen::Index o = 0; o < 20; ++o) {
        const auto w = share_eval(c.spec, c.truth, d.price.row(o).transpose(), d.total(o));
        CHECK((w - d.share.row(o).transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("noiseless rotterdam panels satisfy the differenced equations") {
    auto c = basic(Form::Rotterdam);
    c.share_noise_sd = 0.0;
    const auto d = generate(c);
    CHECK((d.share.row(0).transpose() - c.truth.alpha).cwiseAbs().maxCoeff() < 1e-12);
    const auto t = rotterdam_transform(d);
    const Eigen::MatrixXd lhs = t.lhs();
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(t.n_obs()); ++r) {
        const auto rhs = rotterdam_rhs(c.truth, t.dlnp.row(r).transpose(), t.dlnQ(r));
        CHECK((lhs.row(r).transpose() - rhs).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("csv round trip") {
    const auto d = generate(basic(Form::AIDS));
    std::ostringstream out;
    write_panel_csv(d, out);
    const auto back = parse_panel_csv(out.str(), {});
    CHECK(back.share == d.share);
    CHECK(back.price == d.price);
}

TEST_CASE("printed aids truth centred at its mean point reproduces the mean shares") {
    SynthConfig c;
    c.spec = spec_of(Form::AIDS);
    c.truth = unpack(pack(testutil::published(Form::AIDS), c.spec), c.spec);
    // w = alpha + beta L at unit prices gives (0.698, 0.090, 0.212) near L = -5.6.
    c.log_y_start = -5.597;
    c.log_y_drift = 0.0;
    c.log_y_sd = 0.02;
    c.unit_dispersion = 0.05;
    c.share_noise_sd = 0.005;
    const auto d = generate(c);
    const Eigen::VectorXd mean = d.share.colwise().mean().transpose();
    CHECK((mean - testutil::vec({0.698, 0.090, 0.212})).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("invalid configurations") {
    SynthConfig c;
    c.spec = spec_of(Form::AIDS);
    c.truth = testutil::published(Form::AIDS);  // rounded, so homogeneity is off by 1e-3
    CHECK(code_of([&] { generate(c); }) == ErrorCode::SchemaError);

    auto noisy = basic(Form::AIDS);
    noisy.share_noise_sd = 0.5;
    CHECK(code_of([&] { generate(noisy); }) == ErrorCode::DegenerateShares);

    auto wrong = basic(Form::AIDS);
    wrong.goods = {"a", "b"};
    CHECK(code_of([&] { generate(wrong); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("config documents round trip") {
    auto c = basic(Form::QUAIDS);
    c.seed = 99;
    c.goods = {"private", "local", "intercity"};
    c.log_price_drift = testutil::vec({0.01, 0.02, 0.0});
    const auto back = synth_config_from_json(synth_config_to_json(c));
    CHECK(back.seed == 99);
    CHECK(back.goods == c.goods);
    CHECK(back.truth.lambda == c.truth.lambda);
    CHECK(back.log_price_drift == c.log_price_drift);
    CHECK(generate(back).share == generate(c).share);
}

TEST_CASE("shipped scenario loads") {
    std::ifstream in(testutil::data_path("e2e_synth.json"));
    REQUIRE(in);
    const auto c = synth_config_from_json(nlohmann::json::parse(in));
    const auto out = generate_with_report(c);
    CHECK(out.clipped == 0);
    CHECK(out.data.goods.front() == "private");
}

} // TEST_SUITE
