#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace demand {

/// One row of a vehicle-stock panel: the stock Q of one vehicle class in one
/// unit and year together with its annual mileage, fuel economy and fuel
/// price per litre.
struct VehicleRecord {
    std::string unit;
    int period = 0;
    std::string vehicle_class;
    double quantity = 0.0;      // vehicles
    double vmt = 0.0;           // 1000 km per vehicle per year
    double fuel_economy = 0.0;  // L / 100 km
    double fuel_price = 0.0;    // currency / L
};

struct RawVehiclePanel {
    std::vector<VehicleRecord> rows;
};

/// Mileage and fuel-economy units of a vehicle panel. Litres consumed per
/// vehicle are vmt * vmt_km_per_unit * fuel_economy / fe_distance_km.
struct UnitConvention {
    double vmt_km_per_unit = 1000.0;
    double fe_distance_km = 100.0;
    /// Must be set when either scale differs from the default convention.
    bool override_acknowledged = false;
};

/// Long-format observation: expenditure on one good in one unit and period.
struct GoodRecord {
    std::string unit;
    int period = 0;
    std::string good;
    double price = 0.0;
    double expenditure = 0.0;
    std::size_t source_line = 0;
};

/// Balanced (or explicitly flagged unbalanced) panel of prices, expenditures
/// and budget shares. Observations are ordered by unit, then by period; row
/// `o` of every matrix refers to the same (unit, period) pair.
struct PanelDataset {
    std::vector<std::string> units;
    std::vector<int> periods;            // sorted, union over units
    std::vector<std::string> goods;      // column order; the last good is the dropped equation
    std::vector<std::size_t> obs_unit;   // index into `units`
    std::vector<int> obs_period;
    Eigen::MatrixXd price;        // n_obs x N, strictly positive
    Eigen::MatrixXd expenditure;  // n_obs x N
    Eigen::VectorXd total;        // n_obs, strictly positive
    Eigen::MatrixXd share;        // n_obs x N, rows sum to one
    bool balanced = true;

    std::size_t n_obs() const { return static_cast<std::size_t>(price.rows()); }
    std::size_t n_goods() const { return goods.size(); }

    /// Quantities recovered as expenditure / price.
    Eigen::MatrixXd quantity() const;

    /// Returns a copy with goods reordered so that new column j is old column perm[j].
    PanelDataset reorder_goods(std::span<const std::size_t> perm) const;

    /// Throws DemandError if any documented invariant is violated.
    void validate() const;
};

enum class PriceMode {
    Level,
    /// Year-on-year index with previous period = 100; chained to a level
    /// series per unit before use, first period of each unit = 1.
    ChainedIndex,
};

/// Maps canonical fields to CSV column names. Either `expenditure` or
/// `quantity` must name a column; quantity columns are valued at `price`.
struct CsvSchema {
    std::string unit = "unit";
    std::string period = "period";
    std::string good = "good";
    std::string price = "price";
    std::string expenditure = "expenditure";
    std::string quantity;
    PriceMode price_mode = PriceMode::Level;
};

struct LoadOptions {
    /// Listwise-delete incomplete (unit, period) cells instead of failing.
    bool allow_unbalanced = false;
};

PanelDataset load_panel_csv(const std::string &path, const CsvSchema &schema, const LoadOptions &options = {});
PanelDataset parse_panel_csv(std::string_view text, const CsvSchema &schema, const LoadOptions &options = {});

/// Builds and validates a panel from long-format records. Goods keep their
/// first-appearance order unless `goods_order` is given.
PanelDataset assemble_panel(std::vector<GoodRecord> records, const LoadOptions &options = {},
                            const std::vector<std::string> &goods_order = {});

/// Writes the canonical long CSV schema (unit,period,good,price,expenditure)
/// with round-trip precision.
void write_panel_csv(const PanelDataset &data, std::ostream &out);

struct ExpenditureOptions {
    UnitConvention units;
    /// Aggregate-good price per (unit, period, good). When absent the unit
    /// value (expenditure per litre of fuel) of the aggregate is used.
    std::map<std::tuple<std::string, int, std::string>, double> good_prices;
    std::vector<std::string> goods_order;
    LoadOptions load;
};

/// Litres per vehicle per year for one vehicle class under `units`.
double litres_per_vehicle(double vmt, double fuel_economy, const UnitConvention &units);

/// Annual fuel expenditure y = Q * VMT * FE * P aggregated over the vehicle
/// classes mapped to each good.
PanelDataset build_expenditure(const RawVehiclePanel &raw,
                               const std::map<std::string, std::string> &aggregation,
                               const ExpenditureOptions &options = {});

/// Per-class defaults used when a vehicle CSV omits the vmt / fuel economy columns.
struct VehicleClassDefaults {
    std::string good;
    double vmt = 0.0;
    double fuel_economy = 0.0;
};

struct VehicleSchema {
    std::string unit = "unit";
    std::string period = "period";
    std::string vehicle_class = "class";
    std::string quantity = "quantity";
    std::string vmt = "vmt";
    std::string fuel_economy = "fuel_economy";
    std::string fuel_price = "fuel_price";
    std::map<std::string, VehicleClassDefaults> classes;
};

RawVehiclePanel load_vehicle_csv(const std::string &path, const VehicleSchema &schema);
RawVehiclePanel parse_vehicle_csv(std::string_view text, const VehicleSchema &schema);

/// Discrete Rotterdam variables: log first differences within each unit and
/// two-period average shares. Row r refers to the later period of the pair.
struct RotterdamTransform {
    std::vector<std::string> goods;
    std::vector<std::size_t> obs_unit;
    std::vector<int> obs_period;
    /// Row in the source PanelDataset of the later / earlier observation.
    std::vector<std::size_t> source_row;
    std::vector<std::size_t> lag_row;
    Eigen::MatrixXd dlnq;
    Eigen::MatrixXd dlnp;
    Eigen::MatrixXd wbar;
    Eigen::VectorXd dlny;
    /// Quantity-based Divisia volume index, sum_k wbar_k dlnq_k.
    Eigen::VectorXd dlnQ;
    /// Expenditure-based form, dlny - sum_k wbar_k dlnp_k.
    Eigen::VectorXd dlnQ_expenditure;

    std::size_t n_obs() const { return static_cast<std::size_t>(dlnq.rows()); }
    std::size_t n_goods() const { return goods.size(); }
    /// Left-hand side wbar_i * dlnq_i.
    Eigen::MatrixXd lhs() const { return wbar.cwiseProduct(dlnq); }
};

RotterdamTransform rotterdam_transform(const PanelDataset &data);

} // namespace demand
