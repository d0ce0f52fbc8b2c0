#include "demand/pipeline.hpp"

#include <fstream>

namespace demand {

namespace {

std::string str_or(const nlohmann::json &doc, const char *key, const std::string &fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc[key].is_string()) throw DemandError(ErrorCode::SchemaError, std::string("/") + key + ": expected a string");
    return doc[key].get<std::string>();
}

nlohmann::json read_json(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DemandError(ErrorCode::IoError, "cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error &e) {
        throw DemandError(ErrorCode::SchemaError, path + ": " + e.what());
    }
}

} // namespace

IngestConfig ingest_config_from_json(const nlohmann::json &doc) {
    IngestConfig cfg;
    if (!doc.is_object()) throw DemandError(ErrorCode::SchemaError, "/: config must be an object");
    if (doc.contains("schema")) {
        const auto &s = doc["schema"];
        cfg.schema.unit = str_or(s, "unit", cfg.schema.unit);
        cfg.schema.period = str_or(s, "period", cfg.schema.period);
        cfg.schema.good = str_or(s, "good", cfg.schema.good);
        cfg.schema.price = str_or(s, "price", cfg.schema.price);
        cfg.schema.expenditure = str_or(s, "expenditure", cfg.schema.expenditure);
        cfg.schema.quantity = str_or(s, "quantity", cfg.schema.quantity);
        const auto mode = str_or(s, "price_mode", "level");
        if (mode == "level")
            cfg.schema.price_mode = PriceMode::Level;
        else if (mode == "chained_index")
            cfg.schema.price_mode = PriceMode::ChainedIndex;
        else
            throw DemandError(ErrorCode::SchemaError, "/schema/price_mode: expected 'level' or 'chained_index'");
    }
    if (doc.contains("vehicles")) {
        const auto &v = doc["vehicles"];
        if (v.contains("schema")) {
            const auto &s = v["schema"];
            cfg.vehicles.unit = str_or(s, "unit", cfg.vehicles.unit);
            cfg.vehicles.period = str_or(s, "period", cfg.vehicles.period);
            cfg.vehicles.vehicle_class = str_or(s, "class", cfg.vehicles.vehicle_class);
            cfg.vehicles.quantity = str_or(s, "quantity", cfg.vehicles.quantity);
            cfg.vehicles.vmt = str_or(s, "vmt", cfg.vehicles.vmt);
            cfg.vehicles.fuel_economy = str_or(s, "fuel_economy", cfg.vehicles.fuel_economy);
            cfg.vehicles.fuel_price = str_or(s, "fuel_price", cfg.vehicles.fuel_price);
        }
        if (v.contains("classes")) {
            if (!v["classes"].is_object())
                throw DemandError(ErrorCode::SchemaError, "/vehicles/classes: expected an object");
            for (const auto &[name, c] : v["classes"].items()) {
                const std::string path = "/vehicles/classes/" + name;
                if (!c.contains("good")) throw DemandError(ErrorCode::SchemaError, path + "/good: missing");
                VehicleClassDefaults d;
                d.good = c["good"].get<std::string>();
                d.vmt = c.value("vmt", 0.0);
                d.fuel_economy = c.value("fuel_economy", 0.0);
                cfg.vehicles.classes[name] = d;
                cfg.aggregation[name] = d.good;
            }
        }
        if (v.contains("goods_order")) cfg.goods_order = v["goods_order"].get<std::vector<std::string>>();
        if (v.contains("units")) {
            const auto &u = v["units"];
            cfg.units.vmt_km_per_unit = u.value("vmt_km_per_unit", cfg.units.vmt_km_per_unit);
            cfg.units.fe_distance_km = u.value("fe_distance_km", cfg.units.fe_distance_km);
            cfg.units.override_acknowledged = u.value("override_acknowledged", false);
        }
    }
    return cfg;
}

nlohmann::json ingest_config_to_json(const IngestConfig &cfg) {
    nlohmann::json doc;
    doc["schema"] = {{"unit", cfg.schema.unit},
                     {"period", cfg.schema.period},
                     {"good", cfg.schema.good},
                     {"price", cfg.schema.price},
                     {"expenditure", cfg.schema.expenditure},
                     {"quantity", cfg.schema.quantity},
                     {"price_mode", cfg.schema.price_mode == PriceMode::Level ? "level" : "chained_index"}};
    nlohmann::json classes = nlohmann::json::object();
    for (const auto &[name, d] : cfg.vehicles.classes)
        classes[name] = {{"good", d.good}, {"vmt", d.vmt}, {"fuel_economy", d.fuel_economy}};
    doc["vehicles"] = {{"schema",
                        {{"unit", cfg.vehicles.unit},
                         {"period", cfg.vehicles.period},
                         {"class", cfg.vehicles.vehicle_class},
                         {"quantity", cfg.vehicles.quantity},
                         {"vmt", cfg.vehicles.vmt},
                         {"fuel_economy", cfg.vehicles.fuel_economy},
                         {"fuel_price", cfg.vehicles.fuel_price}}},
                       {"classes", classes},
                       {"goods_order", cfg.goods_order},
                       {"units",
                        {{"vmt_km_per_unit", cfg.units.vmt_km_per_unit},
                         {"fe_distance_km", cfg.units.fe_distance_km},
                         {"override_acknowledged", cfg.units.override_acknowledged}}}};
    return doc;
}

PanelDataset load_input(const RunConfig &cfg) {
    LoadOptions load;
    load.allow_unbalanced = cfg.allow_unbalanced;
    if (!cfg.vehicles) return load_panel_csv(cfg.input, cfg.ingest.schema, load);
    const auto raw = load_vehicle_csv(cfg.input, cfg.ingest.vehicles);
    ExpenditureOptions opt;
    opt.units = cfg.ingest.units;
    opt.goods_order = cfg.ingest.goods_order;
    opt.load = load;
    return build_expenditure(raw, cfg.ingest.aggregation, opt);
}

FitOutcome run_fit(const PanelDataset &data, const RunConfig &cfg) {
    if (cfg.models.empty()) throw DemandError(ErrorCode::SchemaError, "no models requested");
    FitOutcome out;
    out.goods = data.goods;
    EstimationOptions est;
    est.iterate = !cfg.single_step;
    est.max_outer = cfg.max_iterations;
    RegularityOptions reg;
    reg.curvature_tol = cfg.curvature_tol;
    reg.restriction_tol = cfg.restriction_tol;
    reg.per_observation = cfg.per_observation;
    const EvaluationPoint pt = EvaluationPoint::sample_mean(data);

    std::vector<RegularityReport> reports;
    for (Form form : cfg.models) {
        ModelSpec spec;
        spec.form = form;
        spec.n_goods = data.n_goods();
        spec.alpha0 = cfg.alpha0;
        ModelRun run;
        est.demean_by_unit = cfg.demean && form == Form::Rotterdam;
        run.result = estimate(data, spec, est);
        run.point = pt;
        run.elasticities = elasticities_with_se(run.result, pt);
        run.regularity = regularity_report(run.result, &data, pt, reg);
        if (!run.result.converged) out.all_converged = false;
        reports.push_back(run.regularity);
        out.runs.push_back(std::move(run));
    }
    out.selection = select_model(reports);
    return out;
}

std::vector<AuditInput> read_audit_inputs(const std::string &path) {
    const nlohmann::json doc = read_json(path);
    std::vector<nlohmann::json> docs;
    std::string prefix;
    if (doc.is_array()) {
        docs.assign(doc.begin(), doc.end());
    } else if (doc.is_object() && doc.contains("models")) {
        if (!doc["models"].is_array()) throw DemandError(ErrorCode::SchemaError, "/models: expected an array");
        docs.assign(doc["models"].begin(), doc["models"].end());
        prefix = "/models";
    } else {
        docs.push_back(doc);
    }
    std::vector<AuditInput> inputs;
    for (std::size_t k = 0; k < docs.size(); ++k) {
        const std::string where = (doc.is_object() && !doc.contains("models")) ? "" : prefix + "/" + std::to_string(k);
        AuditInput in;
        in.source = path;
        try {
            params_from_json(docs[k], in.spec, in.params);
            if (docs[k].contains("evaluation_point"))
                in.point = point_from_json(docs[k]["evaluation_point"], in.spec.n_goods);
        } catch (const DemandError &e) {
            throw DemandError(e.code(), where + e.message());
        }
        inputs.push_back(std::move(in));
    }
    if (inputs.empty()) throw DemandError(ErrorCode::SchemaError, path + ": no parameter documents");
    return inputs;
}

AuditOutcome run_audit(const std::vector<AuditInput> &inputs, const std::optional<EvaluationPoint> &point,
                       const PanelDataset *data, const RegularityOptions &options) {
    AuditOutcome out;
    for (const auto &in : inputs) {
        EvaluationPoint pt;
        if (in.point)
            pt = *in.point;
        else if (point)
            pt = *point;
        else if (data)
            pt = EvaluationPoint::sample_mean(*data);
        else
            throw DemandError(ErrorCode::SchemaError,
                              std::string(to_string(in.spec.form)) + ": no evaluation point (embed one or pass --point)");
        if (data != nullptr) {
            EstimationResult r;
            r.spec = in.spec;
            r.params = in.params;
            r.theta_hat = pack(in.params, in.spec);
            r.converged = true;
            out.reports.push_back(regularity_report(r, data, pt, options));
        } else {
            out.reports.push_back(regularity_report(in.spec, in.params, pt, options));
        }
    }
    out.selection = select_model(out.reports);
    return out;
}

ElasticityTable run_elasticity(const EstimationResult &result, const EvaluationPoint &pt) {
    return elasticities_with_se(result, pt);
}

} // namespace demand
