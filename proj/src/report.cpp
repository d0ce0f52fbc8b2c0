#include "demand/format.hpp"
#include "demand/kernels.hpp"
#include "demand/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace demand {

std::string format_sig(double value, int digits) {
    if (!std::isfinite(value)) return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, value);
    std::string s(buf);
    if (s == "-0") s = "0";
    return s;
}

double round_sig(double value, int digits) {
    if (!std::isfinite(value)) return value;
    return std::strtod(format_sig(value, digits).c_str(), nullptr);
}

std::string file_digest(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DemandError(ErrorCode::IoError, "cannot open '" + path + "'");
    std::uint64_t h = 1469598103934665603ULL;
    char buf[1 << 14];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

nlohmann::json make_manifest(const std::string &command, const nlohmann::json &config,
                             const std::vector<std::string> &inputs) {
    nlohmann::json m;
    m["tool"] = "demandsys";
    m["version"] = std::string(kToolVersion);
    m["command"] = command;
    m["kernel"] = std::string(kernels::to_string(kernels::active_isa()));
    m["theta_layout"] = std::string(ThetaLayout::kVersion);
    m["config"] = config;
    nlohmann::json files = nlohmann::json::array();
    for (const auto &p : inputs) files.push_back({{"path", p}, {"fnv1a64", file_digest(p)}});
    m["inputs"] = files;
    return m;
}

int exit_code_for(ErrorCode code) { return code == ErrorCode::NonConvergence ? 3 : 2; }

nlohmann::json error_json(ErrorCode code, const std::string &message) {
    return {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

namespace {

/// Standard errors of every full parameter. unpack is affine in theta, so
/// a unit-step difference gives its exact Jacobian.
ParamSet full_param_se(const EstimationResult &r) {
    const auto K = r.theta_hat.size();
    const ParamSet base = unpack(Eigen::VectorXd::Zero(K), r.spec);
    std::vector<ParamSet> cols;
    for (Eigen::Index k = 0; k < K; ++k) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(K);
        e(k) = 1.0;
        cols.push_back(unpack(e, r.spec));
    }
    auto se_of = [&](auto pick) {
        Eigen::VectorXd g(K);
        for (Eigen::Index k = 0; k < K; ++k) g(k) = pick(cols[static_cast<std::size_t>(k)]) - pick(base);
        const double v = g.dot(r.cov_theta * g);
        return std::sqrt(std::max(v, 0.0));
    };
    ParamSet se = r.params;
    if (r.cov_theta.rows() != K) {
        se.alpha.setZero();
        se.gamma.setZero();
        se.beta.setZero();
        se.lambda.setZero();
        return se;
    }
    const auto N = se.alpha.size();
    for (Eigen::Index i = 0; i < N; ++i) {
        se.alpha(i) = se_of([i](const ParamSet &p) { return p.alpha(i); });
        if (se.beta.size()) se.beta(i) = se_of([i](const ParamSet &p) { return p.beta(i); });
        if (se.lambda.size()) se.lambda(i) = se_of([i](const ParamSet &p) { return p.lambda(i); });
        for (Eigen::Index j = 0; j < N; ++j) se.gamma(i, j) = se_of([i, j](const ParamSet &p) { return p.gamma(i, j); });
    }
    return se;
}

std::string aligned(const std::vector<std::vector<std::string>> &rows) {
    std::vector<std::size_t> width;
    for (const auto &r : rows) {
        if (width.size() < r.size()) width.resize(r.size(), 0);
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    std::ostringstream out;
    for (const auto &r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            out << r[c];
            if (c + 1 < r.size()) out << std::string(width[c] - r[c].size() + 2, ' ');
        }
        out << '\n';
    }
    return out.str();
}

std::string with_se(double v, double se) { return format_sig(v) + " (" + format_sig(se) + ")"; }

} // namespace

std::string params_to_text(const EstimationResult &r, const std::vector<std::string> &goods) {
    const ParamSet se = full_param_se(r);
    const auto N = r.params.alpha.size();
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"parameter"};
    for (Eigen::Index i = 0; i < N; ++i)
        header.push_back(static_cast<std::size_t>(i) < goods.size() ? goods[static_cast<std::size_t>(i)]
                                                                     : "good_" + std::to_string(i + 1));
    rows.push_back(header);
    auto vec_row = [&](const std::string &name, const Eigen::VectorXd &v, const Eigen::VectorXd &s) {
        std::vector<std::string> row{name};
        for (Eigen::Index i = 0; i < N; ++i) row.push_back(with_se(v(i), s(i)));
        rows.push_back(std::move(row));
    };
    vec_row("alpha", r.params.alpha, se.alpha);
    if (r.params.beta.size()) vec_row("beta", r.params.beta, se.beta);
    if (r.params.lambda.size()) vec_row("lambda", r.params.lambda, se.lambda);
    for (Eigen::Index i = 0; i < N; ++i)
        vec_row("gamma_" + std::to_string(i + 1) + "j", r.params.gamma.row(i).transpose(), se.gamma.row(i).transpose());

    std::ostringstream out;
    out << to_string(r.spec.form) << " parameters: " << r.n_obs << " observations, " << r.iterations
        << " iterations, " << (r.converged ? "converged" : "NOT converged") << ", objective " << format_sig(r.objective)
        << ", log det sigma " << format_sig(r.log_det_sigma) << '\n';
    out << aligned(rows);
    for (const auto &n : r.notes) out << "note: " << n << '\n';
    return out.str();
}

Artifacts fit_artifacts(const FitOutcome &outcome, const RunConfig &, const nlohmann::json &manifest) {
    Artifacts a;
    std::vector<RegularityReport> reports;
    for (const auto &run : outcome.runs) {
        const std::string m(to_string(run.result.spec.form));
        nlohmann::json params = result_to_json(run.result);
        params["goods"] = outcome.goods;
        params["evaluation_point"] = point_to_json(run.point);
        a[m + "_params.json"] = params.dump(2) + "\n";
        a[m + "_params.txt"] = params_to_text(run.result, outcome.goods);
        a[m + "_elasticities.json"] = elasticity_to_json(run.elasticities, outcome.goods).dump(2) + "\n";
        a[m + "_elasticities.txt"] = elasticity_to_text(run.elasticities, outcome.goods);
        a[m + "_regularity.json"] = regularity_to_json(run.regularity).dump(2) + "\n";
        a[m + "_regularity.txt"] = regularity_table_text({run.regularity});
        reports.push_back(run.regularity);
    }
    a["regularity.txt"] = regularity_table_text(reports);
    a["selection.json"] = selection_to_json(outcome.selection).dump(2) + "\n";
    a["selection.txt"] = selection_to_text(outcome.selection);
    a["manifest.json"] = manifest.dump(2) + "\n";
    return a;
}

Artifacts audit_artifacts(const AuditOutcome &outcome, OutputFormat, const nlohmann::json &manifest) {
    Artifacts a;
    nlohmann::json reports = nlohmann::json::array();
    for (const auto &r : outcome.reports) reports.push_back(regularity_to_json(r));
    nlohmann::json doc;
    doc["reports"] = reports;
    doc["selection"] = selection_to_json(outcome.selection);
    a["audit.json"] = doc.dump(2) + "\n";
    a["audit.txt"] = regularity_table_text(outcome.reports) + selection_to_text(outcome.selection);
    a["manifest.json"] = manifest.dump(2) + "\n";
    return a;
}

void write_artifacts(const Artifacts &artifacts, const std::string &dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DemandError(ErrorCode::IoError, "cannot create '" + dir + "': " + ec.message());
    for (const auto &[name, content] : artifacts) {
        const auto path = std::filesystem::path(dir) / name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DemandError(ErrorCode::IoError, "cannot write '" + path.string() + "'");
        out << content;
    }
}

} // namespace demand
