#pragma once

#include "demand/data.hpp"
#include "demand/elasticity.hpp"
#include "demand/errors.hpp"
#include "demand/estimation.hpp"
#include "demand/regularity.hpp"
#include "demand/synth.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace demand {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum class OutputFormat { Json, Text };

/// Ingestion settings read from the config file (`--config` or the
/// DEMANDSYS_CONFIG environment variable).
struct IngestConfig {
    CsvSchema schema;
    VehicleSchema vehicles;
    std::map<std::string, std::string> aggregation;  // vehicle class -> good
    std::vector<std::string> goods_order;
    UnitConvention units;
};

IngestConfig ingest_config_from_json(const nlohmann::json &doc);
nlohmann::json ingest_config_to_json(const IngestConfig &cfg);

struct RunConfig {
    std::string input;
    bool vehicles = false;  // input is a vehicle-stock panel
    std::vector<Form> models{Form::Rotterdam, Form::AIDS, Form::QUAIDS};
    double alpha0 = 0.0;
    double curvature_tol = 0.0;
    double restriction_tol = 1e-8;
    std::string out_dir;
    OutputFormat format = OutputFormat::Text;
    std::uint64_t seed = 1;
    bool allow_unbalanced = false;
    bool per_observation = false;
    bool single_step = false;
    bool demean = false;
    int max_iterations = 100;  // cap on residual-covariance updates
    IngestConfig ingest;
    std::string config_path;
};

/// Reads the panel named by cfg.input (direct expenditures or vehicle stocks).
PanelDataset load_input(const RunConfig &cfg);

struct ModelRun {
    EstimationResult result;
    EvaluationPoint point;
    ElasticityTable elasticities;
    RegularityReport regularity;
};

struct FitOutcome {
    std::vector<ModelRun> runs;
    Selection selection;
    std::vector<std::string> goods;
    bool all_converged = true;
};

FitOutcome run_fit(const PanelDataset &data, const RunConfig &cfg);

struct AuditInput {
    ModelSpec spec;
    ParamSet params;
    std::optional<EvaluationPoint> point;  // from the parameter document, if embedded
    std::string source;
};

/// A parameter file holds one parameter document, a list of them, or an
/// object with a "models" list. Each may carry an "evaluation_point".
std::vector<AuditInput> read_audit_inputs(const std::string &path);

struct AuditOutcome {
    std::vector<RegularityReport> reports;
    Selection selection;
};

/// `data` (optional) supplies observations for positivity and monotonicity
/// and the sample-mean point; otherwise each input needs a point, either
/// embedded or `point`.
AuditOutcome run_audit(const std::vector<AuditInput> &inputs, const std::optional<EvaluationPoint> &point,
                       const PanelDataset *data, const RegularityOptions &options);

/// Elasticities of one parameter or estimation-result document.
ElasticityTable run_elasticity(const EstimationResult &result, const EvaluationPoint &pt);

/// Serialized artifacts, file name -> content; written by write_artifacts.
using Artifacts = std::map<std::string, std::string>;

Artifacts fit_artifacts(const FitOutcome &outcome, const RunConfig &cfg, const nlohmann::json &manifest);
Artifacts audit_artifacts(const AuditOutcome &outcome, OutputFormat format, const nlohmann::json &manifest);
void write_artifacts(const Artifacts &artifacts, const std::string &dir);

/// Reproduction record: tool version, kernel variant, config, input digest.
nlohmann::json make_manifest(const std::string &command, const nlohmann::json &config,
                             const std::vector<std::string> &inputs);
/// FNV-1a 64-bit digest of a file, as 16 hex digits.
std::string file_digest(const std::string &path);

/// Exit status for an error: 3 for non-convergence, 2 otherwise.
int exit_code_for(ErrorCode code);
nlohmann::json error_json(ErrorCode code, const std::string &message);

/// Parameter listing with standard errors beneath each estimate.
std::string params_to_text(const EstimationResult &result, const std::vector<std::string> &goods);

} // namespace demand
