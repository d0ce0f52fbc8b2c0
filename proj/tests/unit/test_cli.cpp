#include "helpers.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() / ("demandsys_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string operator/(const std::string &name) const { return (dir / name).string(); }
};

int run(const std::string &args, const std::string &log) {
    const std::string cmd = std::string(DEMANDSYS_EXE) + " " + args + " >" + log + ".out 2>" + log + ".err";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

nlohmann::json read_json(const std::string &path) { return nlohmann::json::parse(slurp(path)); }

void write(const std::string &path, const std::string &text) { std::ofstream(path) << text; }

constexpr const char *kAidsTruth = R"({"truth": {"form": "aids", "n_goods": 3, "alpha": [0.4, 0.35, 0.25],
  "beta": [0.1, -0.05, -0.05],
  "gamma": [[0.08, -0.05, -0.03], [-0.05, 0.09, -0.04], [-0.03, -0.04, 0.07]]},
  "share_noise_sd": 0.01, "seed": 5})";

} // namespace

TEST_SUITE("cli") {

TEST_CASE("synth then fit") {
    Scratch s;
    write(s / "truth.json", kAidsTruth);
    REQUIRE(run("synth " + s / "truth.json" + " --out " + s / "a.csv", s / "synth") == 0);
    REQUIRE(run("synth " + s / "truth.json" + " --out " + s / "b.csv", s / "synth2") == 0);
    CHECK(slurp(s / "a.csv") == slurp(s / "b.csv"));
    REQUIRE(run("synth " + s / "truth.json" + " --seed 6 --out " + s / "c.csv", s / "synth3") == 0);
    CHECK(slurp(s / "a.csv") != slurp(s / "c.csv"));

    SUBCASE("all models, aids data: aids is the selected regular model") {
        REQUIRE(run("fit " + s / "a.csv" + " --model all --format json --out " + s / "fit", s / "fit") == 0);
        const auto sel = read_json(s / "fit/selection.json");
        CHECK(sel["selected"] == "aids");
        for (const char *f : {"aids_params.json", "aids_params.txt", "quaids_elasticities.json", "rotterdam_regularity.txt",
                              "regularity.txt", "selection.txt", "manifest.json"})
            CHECK(fs::exists(s.dir / "fit" / f));
        const auto stdout_doc = nlohmann::json::parse(slurp(s / "fit.out"));
        CHECK(stdout_doc.contains("selection"));
        const auto manifest = read_json(s / "fit/manifest.json");
        CHECK(manifest["command"] == "fit");
        CHECK(manifest["inputs"][0]["fnv1a64"].get<std::string>().size() == 16);
    }
    SUBCASE("one model writes one model's artifacts") {
        REQUIRE(run("fit " + s / "a.csv" + " --model aids --out " + s / "one", s / "one") == 0);
        CHECK(fs::exists(s.dir / "one/aids_params.json"));
        CHECK_FALSE(fs::exists(s.dir / "one/quaids_params.json"));
        CHECK_FALSE(fs::exists(s.dir / "one/rotterdam_params.json"));
        CHECK(slurp(s / "one.out").find("selected: aids") != std::string::npos);
    }
    SUBCASE("text and json carry the same rounded numbers") {
        REQUIRE(run("fit " + s / "a.csv" + " --model aids --out " + s / "r", s / "r") == 0);
        const auto el = read_json(s / "r/aids_elasticities.json");
        const double e1 = el["expenditure"][0].get<double>();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", e1);
        CHECK(slurp(s / "r/aids_elasticities.txt").find(buf) != std::string::npos);
    }
    SUBCASE("elasticity subcommand reuses fitted parameters") {
        REQUIRE(run("fit " + s / "a.csv" + " --model aids --out " + s / "e", s / "e") == 0);
        REQUIRE(run("elasticity " + s / "e/aids_params.json" + " --format json", s / "el") == 0);
        const auto doc = nlohmann::json::parse(slurp(s / "el.out"));
        const auto fitted = read_json(s / "e/aids_elasticities.json");
        CHECK(doc["elasticities"]["expenditure"] == fitted["expenditure"]);
    }
}

TEST_CASE("noiseless recovery report") {
    Scratch s;
    auto truth = nlohmann::json::parse(kAidsTruth);
    truth["share_noise_sd"] = 0.0;
    write(s / "truth.json", truth.dump());
    REQUIRE(run("synth " + s / "truth.json" + " --out " + s / "d.csv", s / "synth") == 0);
    REQUIRE(run("fit " + s / "d.csv" + " --model aids --truth " + s / "truth.json" + " --out " + s / "fit", s / "fit") == 0);
    const auto rec = read_json(s / "fit/recovery.json");
    CHECK(rec["recovery"][0]["max_abs_error"].get<double>() < 1e-6);
}

TEST_CASE("exit codes") {
    Scratch s;
    SUBCASE("missing column is exit 2 and names the column") {
        write(s / "bad.csv", "unit,period,good,expenditure\nu,1,x,1\nu,1,y,2\n");
        CHECK(run("fit " + s / "bad.csv" + " --out " + s / "o", s / "bad") == 2);
        const auto err = nlohmann::json::parse(slurp(s / "bad.err"));
        CHECK(err["error"]["code"] == "MissingColumn");
        CHECK(err["error"]["message"].get<std::string>().find("price") != std::string::npos);
        CHECK(read_json(s / "o/error.json")["error"]["code"] == "MissingColumn");
    }
    SUBCASE("non-convergence is exit 3") {
        write(s / "truth.json", kAidsTruth);
        REQUIRE(run("synth " + s / "truth.json" + " --out " + s / "d.csv", s / "synth") == 0);
        CHECK(run("fit " + s / "d.csv" + " --model quaids --max-iterations 1 --out " + s / "nc", s / "nc") == 3);
        CHECK(read_json(s / "nc/error.json")["error"]["code"] == "NonConvergence");
        CHECK(fs::exists(s.dir / "nc/quaids_params.json"));
    }
    SUBCASE("bad arguments are exit 2") {
        CHECK(run("fit", s / "noargs") == 2);
        CHECK(run("fit x.csv --format yaml", s / "fmt") == 2);
    }
    SUBCASE("malformed parameters name the field") {
        write(s / "p.json", R"({"form": "aids", "alpha": [0.5, 0.5], "beta": [0, 0], "gamma": [[0, 0, 0]]})");
        CHECK(run("audit " + s / "p.json" + " --point x", s / "audit") == 2);
        const auto err = nlohmann::json::parse(slurp(s / "audit.err"));
        CHECK(err["error"]["code"] == "SchemaError");
        CHECK(err["error"]["message"].get<std::string>().find("/gamma") != std::string::npos);
    }
}

TEST_CASE("audit of the printed estimates") {
    Scratch s;
    REQUIRE(run("audit " + testutil::data_path("published_models.json") +
                    " --restriction-tol 2e-3 --format json --out " + s / "a",
                s / "audit") == 0);
    const auto doc = read_json(s / "a/audit.json");
    REQUIRE(doc["reports"].size() == 3);
    CHECK(doc["reports"][0]["model"] == "rotterdam");
    CHECK(doc["reports"][0]["negativity"]["satisfied"] == false);
    CHECK(doc["reports"][0]["negativity"]["eigenvalues"][0].get<double>() == doctest::Approx(3.333e-8).epsilon(0.01));
    CHECK(doc["reports"][1]["negativity"]["satisfied"] == true);
    CHECK(doc["selection"]["selected"] == "aids");
    CHECK(fs::exists(s.dir / "a/audit.txt"));
}

TEST_CASE("vehicle panels through the config file") {
    Scratch s;
    std::ostringstream csv;
    csv << "province,year,class,stock,fuel_price\n";
    const char *classes[] = {"MNPV", "SPV", "PB", "Taxi", "MPV", "LPV"};
    for (int unit = 0; unit < 4; ++unit)
        for (int year = 2002; year <= 2009; ++year)
            for (int c = 0; c < 6; ++c)
                csv << "p" << unit << ',' << year << ',' << classes[c] << ','
                    << 100 + 7 * unit + 3 * c + (year - 2002) * (c + 1) << ',' << 5.0 + 0.1 * (year - 2002) + 0.05 * c
                    << '\n';
    write(s / "veh.csv", csv.str());
    const std::string env = "DEMANDSYS_CONFIG=" + testutil::data_path("config.json") + " ";
    const std::string cmd = env + DEMANDSYS_EXE + " fit " + s / "veh.csv" + " --vehicles --model rotterdam --format json --out " +
                            s / "v" + " >" + s / "v.out 2>" + s / "v.err";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) != 2);
    const auto params = read_json(s / "v/rotterdam_params.json");
    CHECK(params["goods"] == nlohmann::json({"private", "local", "intercity"}));
}

} // TEST_SUITE
