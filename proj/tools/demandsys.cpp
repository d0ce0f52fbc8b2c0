// demandsys: estimate Rotterdam / AIDS / QUAIDS systems, audit their
// regularity and print elasticity tables.

#include "demand/format.hpp"
#include "demand/pipeline.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace demand;

namespace {

struct Common {
    std::string config_path;
    std::string format = "text";
    std::string out;
    double curvature_tol = 0.0;
    double restriction_tol = 1e-8;
    bool per_observation = false;
    bool allow_unbalanced = false;
};

nlohmann::json read_json_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DemandError(ErrorCode::IoError, "cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error &e) {
        throw DemandError(ErrorCode::SchemaError, path + ": " + e.what());
    }
}

IngestConfig load_ingest(const std::string &path) {
    if (path.empty()) return {};
    return ingest_config_from_json(read_json_file(path));
}

std::vector<Form> parse_models(const std::vector<std::string> &names) {
    std::vector<Form> out;
    auto add = [&](Form f) {
        if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
    };
    for (const auto &arg : names) {
        std::stringstream ss(arg);
        std::string name;
        while (std::getline(ss, name, ',')) {
            if (name.empty()) continue;
            if (name == "all") {
                add(Form::Rotterdam);
                add(Form::AIDS);
                add(Form::QUAIDS);
            } else {
                add(parse_form(name));
            }
        }
    }
    if (out.empty()) throw DemandError(ErrorCode::SchemaError, "--model selects no model");
    return out;
}

OutputFormat parse_format(const std::string &s) {
    if (s == "json") return OutputFormat::Json;
    if (s == "text") return OutputFormat::Text;
    throw DemandError(ErrorCode::SchemaError, "--format must be 'json' or 'text'");
}

void emit(const Artifacts &a, const std::string &out_dir, OutputFormat format, const std::vector<std::string> &order) {
    if (!out_dir.empty()) write_artifacts(a, out_dir);
    const std::string ext = format == OutputFormat::Json ? ".json" : ".txt";
    if (format == OutputFormat::Json) {
        nlohmann::json doc;
        for (const auto &stem : order)
            if (auto it = a.find(stem + ext); it != a.end()) doc[stem] = nlohmann::json::parse(it->second);
        std::cout << doc.dump(2) << '\n';
        return;
    }
    for (const auto &stem : order)
        if (auto it = a.find(stem + ext); it != a.end()) std::cout << it->second << '\n';
}

nlohmann::json run_config_json(const RunConfig &cfg) {
    nlohmann::json models = nlohmann::json::array();
    for (Form f : cfg.models) models.push_back(std::string(to_string(f)));
    return {{"input", cfg.input},
            {"vehicles", cfg.vehicles},
            {"models", models},
            {"alpha0", cfg.alpha0},
            {"curvature_tol", cfg.curvature_tol},
            {"restriction_tol", cfg.restriction_tol},
            {"allow_unbalanced", cfg.allow_unbalanced},
            {"per_observation", cfg.per_observation},
            {"single_step", cfg.single_step},
            {"demean_by_unit", cfg.demean},
            {"max_iterations", cfg.max_iterations},
            {"config", cfg.config_path},
            {"ingest", ingest_config_to_json(cfg.ingest)}};
}

int cmd_fit(RunConfig cfg, const Common &c, const std::vector<std::string> &models, const std::string &truth_path) {
    cfg.models = parse_models(models);
    cfg.format = parse_format(c.format);
    cfg.out_dir = c.out;
    cfg.curvature_tol = c.curvature_tol;
    cfg.restriction_tol = c.restriction_tol;
    cfg.per_observation = c.per_observation;
    cfg.allow_unbalanced = c.allow_unbalanced;
    cfg.config_path = c.config_path;
    cfg.ingest = load_ingest(c.config_path);

    const PanelDataset data = load_input(cfg);
    const FitOutcome outcome = run_fit(data, cfg);
    std::vector<std::string> inputs{cfg.input};
    if (!truth_path.empty()) inputs.push_back(truth_path);
    Artifacts a = fit_artifacts(outcome, cfg, make_manifest("fit", run_config_json(cfg), inputs));

    std::vector<std::string> order;
    for (const auto &run : outcome.runs) {
        const std::string m(to_string(run.result.spec.form));
        order.insert(order.end(), {m + "_params", m + "_elasticities"});
    }
    order.insert(order.end(), {"regularity", "selection"});

    if (!truth_path.empty()) {
        ModelSpec tspec;
        ParamSet tparams;
        const auto doc = read_json_file(truth_path);
        params_from_json(doc.contains("truth") ? doc["truth"] : doc, tspec, tparams);
        nlohmann::json rec = nlohmann::json::array();
        std::ostringstream txt;
        for (const auto &run : outcome.runs) {
            if (run.result.spec.form != tspec.form) continue;
            const Eigen::VectorXd truth = pack(tparams, run.result.spec);
            const double err = (run.result.theta_hat - truth).cwiseAbs().maxCoeff();
            rec.push_back({{"model", std::string(to_string(tspec.form))}, {"max_abs_error", round_sig(err)}});
            txt << to_string(tspec.form) << " recovery: max |theta_hat - theta| = " << format_sig(err) << '\n';
        }
        a["recovery.json"] = nlohmann::json{{"recovery", rec}}.dump(2) + "\n";
        a["recovery.txt"] = txt.str();
        order.push_back("recovery");
    }
    emit(a, cfg.out_dir, cfg.format, order);
    if (!outcome.all_converged) {
        const auto err = error_json(ErrorCode::NonConvergence, "at least one estimation did not converge");
        std::cerr << err.dump() << '\n';
        if (!cfg.out_dir.empty()) write_artifacts({{"error.json", err.dump(2) + "\n"}}, cfg.out_dir);
        return 3;
    }
    return 0;
}

int cmd_audit(const std::vector<std::string> &param_files, const std::string &point_path, const std::string &data_path,
              const Common &c) {
    const OutputFormat format = parse_format(c.format);
    std::vector<AuditInput> inputs;
    for (const auto &p : param_files) {
        auto more = read_audit_inputs(p);
        inputs.insert(inputs.end(), more.begin(), more.end());
    }
    std::optional<EvaluationPoint> point;
    std::vector<std::string> files = param_files;
    if (!point_path.empty()) {
        point = point_from_json(read_json_file(point_path), inputs.front().spec.n_goods);
        files.push_back(point_path);
    }
    std::optional<PanelDataset> data;
    if (!data_path.empty()) {
        RunConfig rc;
        rc.input = data_path;
        rc.allow_unbalanced = c.allow_unbalanced;
        rc.ingest = load_ingest(c.config_path);
        data = load_input(rc);
        files.push_back(data_path);
    }
    RegularityOptions opt;
    opt.curvature_tol = c.curvature_tol;
    opt.restriction_tol = c.restriction_tol;
    opt.per_observation = c.per_observation;
    const AuditOutcome outcome = run_audit(inputs, point, data ? &*data : nullptr, opt);
    const nlohmann::json config = {{"curvature_tol", c.curvature_tol},
                                   {"restriction_tol", c.restriction_tol},
                                   {"per_observation", c.per_observation},
                                   {"config", c.config_path}};
    emit(audit_artifacts(outcome, format, make_manifest("audit", config, files)), c.out, format, {"audit"});
    return 0;
}

int cmd_elasticity(const std::string &params_path, const std::string &point_path, const std::string &data_path,
                   double alpha0_override, bool alpha0_set, const Common &c) {
    const OutputFormat format = parse_format(c.format);
    const auto doc = read_json_file(params_path);
    EstimationResult result = result_from_json(doc);
    if (alpha0_set) result.spec.alpha0 = alpha0_override;
    EvaluationPoint pt;
    std::vector<std::string> files{params_path};
    if (!point_path.empty()) {
        pt = point_from_json(read_json_file(point_path), result.spec.n_goods);
        files.push_back(point_path);
    } else if (!data_path.empty()) {
        RunConfig rc;
        rc.input = data_path;
        rc.allow_unbalanced = c.allow_unbalanced;
        rc.ingest = load_ingest(c.config_path);
        pt = EvaluationPoint::sample_mean(load_input(rc));
        files.push_back(data_path);
    } else if (doc.contains("evaluation_point")) {
        pt = point_from_json(doc["evaluation_point"], result.spec.n_goods);
    } else {
        throw DemandError(ErrorCode::SchemaError, "elasticity needs --point, --data or an embedded evaluation_point");
    }
    std::vector<std::string> goods;
    if (doc.contains("goods")) goods = doc["goods"].get<std::vector<std::string>>();
    const ElasticityTable t = run_elasticity(result, pt);
    Artifacts a;
    a["elasticities.json"] = elasticity_to_json(t, goods).dump(2) + "\n";
    a["elasticities.txt"] = elasticity_to_text(t, goods);
    a["manifest.json"] = make_manifest("elasticity", {{"alpha0", result.spec.alpha0}}, files).dump(2) + "\n";
    emit(a, c.out, format, {"elasticities"});
    return 0;
}

int cmd_synth(const std::string &truth_path, const std::string &out_path, std::optional<std::uint64_t> seed,
              std::optional<double> noise) {
    const auto doc = read_json_file(truth_path);
    SynthConfig cfg;
    if (doc.contains("truth")) {
        cfg = synth_config_from_json(doc);
    } else {
        params_from_json(doc, cfg.spec, cfg.truth);
    }
    if (seed) cfg.seed = *seed;
    if (noise) cfg.share_noise_sd = *noise;
    const SynthOutput s = generate_with_report(cfg);
    std::ostringstream csv;
    write_panel_csv(s.data, csv);
    if (out_path.empty() || out_path == "-") {
        std::cout << csv.str();
    } else {
        std::ofstream f(out_path, std::ios::binary);
        if (!f) throw DemandError(ErrorCode::IoError, "cannot write '" + out_path + "'");
        f << csv.str();
        std::cerr << "wrote " << s.data.n_obs() << " observations to " << out_path << " (" << s.clipped
                  << " clipped)\n";
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Demand-system estimation and regularity audit"};
    app.require_subcommand(1);

    Common common;
    const char *env_config = std::getenv("DEMANDSYS_CONFIG");
    if (env_config != nullptr) common.config_path = env_config;

    auto add_common = [&](CLI::App *sub) {
        sub->add_option("--config", common.config_path, "Ingestion config JSON (default: $DEMANDSYS_CONFIG)");
        sub->add_option("--format", common.format, "Output format")->check(CLI::IsMember({"json", "text"}));
        sub->add_option("--out", common.out, "Directory for report files");
        sub->add_option("--curvature-tol", common.curvature_tol, "Largest eigenvalue accepted as negative semidefinite");
        sub->add_option("--restriction-tol", common.restriction_tol, "Tolerance for the imposed restrictions");
        sub->add_flag("--per-observation", common.per_observation, "Also test negativity at every observation");
        sub->add_flag("--allow-unbalanced", common.allow_unbalanced, "Drop incomplete (unit, period) cells");
    };

    RunConfig fit_cfg;
    std::vector<std::string> models{"all"};
    std::string truth_path;
    auto *fit = app.add_subcommand("fit", "Estimate models, compute elasticities and regularity, select a model");
    fit->add_option("input", fit_cfg.input, "Panel CSV")->required();
    fit->add_option("--model", models, "rotterdam, aids, quaids or all (repeatable, comma separated)");
    fit->add_option("--alpha0", fit_cfg.alpha0, "Fixed alpha_0 of the AIDS/QUAIDS price index");
    fit->add_flag("--vehicles", fit_cfg.vehicles, "Input is a vehicle-stock panel; build expenditures first");
    fit->add_flag("--single-step", fit_cfg.single_step, "Two-step instead of iterated FGLS");
    fit->add_flag("--demean", fit_cfg.demean, "Rotterdam: subtract per-unit means");
    fit->add_option("--max-iterations", fit_cfg.max_iterations, "Cap on residual-covariance updates")
        ->check(CLI::PositiveNumber);
    fit->add_option("--truth", truth_path, "True parameters; adds a recovery report");
    fit->add_option("--seed", fit_cfg.seed, "Recorded in the manifest");
    add_common(fit);

    std::vector<std::string> param_files;
    std::string point_path, data_path;
    auto *audit = app.add_subcommand("audit", "Regularity audit of supplied parameters");
    audit->add_option("params", param_files, "Parameter JSON files")->required();
    audit->add_option("--point", point_path, "Evaluation point JSON");
    audit->add_option("--data", data_path, "Panel CSV for observation-level checks");
    add_common(audit);

    std::string el_params, el_point, el_data;
    double el_alpha0 = 0.0;
    auto *elast = app.add_subcommand("elasticity", "Elasticity table from parameters without refitting");
    elast->add_option("params", el_params, "Parameter or estimation-result JSON")->required();
    elast->add_option("--point", el_point, "Evaluation point JSON");
    elast->add_option("--data", el_data, "Panel CSV; evaluate at its sample mean");
    auto *alpha_opt = elast->add_option("--alpha0", el_alpha0, "Override alpha_0");
    add_common(elast);

    std::string synth_truth, synth_out;
    std::uint64_t synth_seed = 0;
    double synth_noise = 0.0;
    auto *synth = app.add_subcommand("synth", "Simulate a panel from known parameters");
    synth->add_option("truth", synth_truth, "Synth config or parameter JSON")->required();
    synth->add_option("--out", synth_out, "CSV path (default stdout)");
    auto *seed_opt = synth->add_option("--seed", synth_seed, "Random seed");
    auto *noise_opt = synth->add_option("--noise", synth_noise, "Share noise sd");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*fit) return cmd_fit(fit_cfg, common, models, truth_path);
        if (*audit) return cmd_audit(param_files, point_path, data_path, common);
        if (*elast) return cmd_elasticity(el_params, el_point, el_data, el_alpha0, alpha_opt->count() > 0, common);
        if (*synth)
            return cmd_synth(synth_truth, synth_out,
                             seed_opt->count() ? std::optional<std::uint64_t>(synth_seed) : std::nullopt,
                             noise_opt->count() ? std::optional<double>(synth_noise) : std::nullopt);
    } catch (const DemandError &e) {
        const auto doc = error_json(e.code(), e.message());
        std::cerr << doc.dump() << '\n';
        if (!common.out.empty()) {
            try {
                write_artifacts({{"error.json", doc.dump(2) + "\n"}}, common.out);
            } catch (const DemandError &) {
            }
        }
        return exit_code_for(e.code());
    } catch (const nlohmann::json::exception &e) {
        std::cerr << error_json(ErrorCode::SchemaError, e.what()).dump() << '\n';
        return 2;
    }
    return 0;
}
