#include "demand/data.hpp"

#include "demand/csv.hpp"
#include "demand/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

namespace demand {

namespace {

constexpr double kShareSumTolerance = 1e-10;

std::string row_ref(const std::string &unit, int period, std::string_view good, std::size_t line) {
    std::string s = "(unit=" + unit + ", period=" + std::to_string(period);
    if (!good.empty()) s += ", good=" + std::string(good);
    s += ")";
    if (line != 0) s += " at line " + std::to_string(line);
    return s;
}

std::size_t require_column(const csv::Table &table, const std::string &name, std::string_view field) {
    auto idx = table.column(name);
    if (!idx)
        throw DemandError(ErrorCode::MissingColumn,
                          "column '" + name + "' (field " + std::string(field) + ") not found in CSV header");
    return *idx;
}

double require_number(const csv::Table &table, std::size_t row, std::size_t col, std::string_view what) {
    const auto &cells = table.rows[row];
    if (col >= cells.size())
        throw DemandError(ErrorCode::SchemaError, "line " + std::to_string(table.line_numbers[row]) + ": missing " +
                                                      std::string(what) + " value");
    auto v = csv::to_double(cells[col]);
    if (!v || !std::isfinite(*v))
        throw DemandError(ErrorCode::SchemaError, "line " + std::to_string(table.line_numbers[row]) + ": invalid " +
                                                      std::string(what) + " '" + cells[col] + "'");
    return *v;
}

int require_period(const csv::Table &table, std::size_t row, std::size_t col) {
    const auto &cells = table.rows[row];
    auto v = col < cells.size() ? csv::to_integer(cells[col]) : std::nullopt;
    if (!v)
        throw DemandError(ErrorCode::SchemaError,
                          "line " + std::to_string(table.line_numbers[row]) + ": period must be an integer");
    return static_cast<int>(*v);
}

const std::string &require_text(const csv::Table &table, std::size_t row, std::size_t col, std::string_view what) {
    const auto &cells = table.rows[row];
    if (col >= cells.size() || cells[col].empty())
        throw DemandError(ErrorCode::SchemaError, "line " + std::to_string(table.line_numbers[row]) + ": empty " +
                                                      std::string(what));
    return cells[col];
}

void chain_price_indices(std::vector<GoodRecord> &records) {
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> series;
    for (std::size_t i = 0; i < records.size(); ++i) series[{records[i].unit, records[i].good}].push_back(i);
    for (auto &[key, idx] : series) {
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return records[a].period < records[b].period; });
        double level = 1.0;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto &r = records[idx[k]];
            if (k > 0) level *= r.price / 100.0;
            r.price = level;
        }
    }
}

} // namespace

Eigen::MatrixXd PanelDataset::quantity() const { return expenditure.cwiseQuotient(price); }

PanelDataset PanelDataset::reorder_goods(std::span<const std::size_t> perm) const {
    const std::size_t n = n_goods();
    if (perm.size() != n) throw DemandError(ErrorCode::DimensionMismatch, "permutation length differs from goods");
    std::vector<bool> seen(n, false);
    for (auto p : perm) {
        if (p >= n || seen[p]) throw DemandError(ErrorCode::DimensionMismatch, "not a permutation of the goods");
        seen[p] = true;
    }
    PanelDataset out = *this;
    for (std::size_t j = 0; j < n; ++j) {
        const auto src = static_cast<Eigen::Index>(perm[j]);
        const auto dst = static_cast<Eigen::Index>(j);
        out.goods[j] = goods[perm[j]];
        out.price.col(dst) = price.col(src);
        out.expenditure.col(dst) = expenditure.col(src);
        out.share.col(dst) = share.col(src);
    }
    return out;
}

void PanelDataset::validate() const {
    const auto n = static_cast<Eigen::Index>(n_obs());
    const auto N = static_cast<Eigen::Index>(n_goods());
    if (N < 1) throw DemandError(ErrorCode::DimensionMismatch, "panel has no goods");
    if (price.cols() != N || expenditure.cols() != N || share.cols() != N || expenditure.rows() != n ||
        share.rows() != n || total.size() != n || obs_unit.size() != n_obs() || obs_period.size() != n_obs())
        throw DemandError(ErrorCode::DimensionMismatch, "panel arrays have inconsistent shapes");
    for (Eigen::Index o = 0; o < n; ++o) {
        const auto &unit = units.at(obs_unit[o]);
        if (!(total(o) > 0.0) || !std::isfinite(total(o)))
            throw DemandError(ErrorCode::NonPositiveValue,
                              "total expenditure not positive " + row_ref(unit, obs_period[o], {}, 0));
        for (Eigen::Index i = 0; i < N; ++i) {
            if (!(price(o, i) > 0.0) || !std::isfinite(price(o, i)))
                throw DemandError(ErrorCode::NonPositiveValue,
                                  "price not positive " + row_ref(unit, obs_period[o], goods[i], 0));
        }
        if (std::abs(share.row(o).sum() - 1.0) > kShareSumTolerance)
            throw DemandError(ErrorCode::DimensionMismatch,
                              "shares do not sum to one " + row_ref(unit, obs_period[o], {}, 0));
    }
}

PanelDataset assemble_panel(std::vector<GoodRecord> records, const LoadOptions &options,
                            const std::vector<std::string> &goods_order) {
    if (records.empty()) throw DemandError(ErrorCode::SchemaError, "panel has no rows");

    std::vector<std::string> goods = goods_order;
    std::vector<std::string> units;
    {
        std::set<std::string> seen_goods(goods.begin(), goods.end());
        std::set<std::string> seen_units;
        for (const auto &r : records) {
            if (seen_units.insert(r.unit).second) units.push_back(r.unit);
            if (seen_goods.insert(r.good).second) {
                if (!goods_order.empty())
                    throw DemandError(ErrorCode::SchemaError, "good '" + r.good + "' not in the declared goods order");
                goods.push_back(r.good);
            }
        }
    }
    std::map<std::string, std::size_t> good_index;
    for (std::size_t i = 0; i < goods.size(); ++i) good_index[goods[i]] = i;
    std::map<std::string, std::size_t> unit_index;
    for (std::size_t u = 0; u < units.size(); ++u) unit_index[units[u]] = u;

    struct Cell {
        std::vector<double> price, expenditure;
        std::vector<bool> present;
    };
    std::map<std::pair<std::size_t, int>, Cell> cells;
    const std::size_t N = goods.size();

    for (const auto &r : records) {
        if (!(r.price > 0.0))
            throw DemandError(ErrorCode::NonPositiveValue,
                              "price must be positive " + row_ref(r.unit, r.period, r.good, r.source_line));
        if (!(r.expenditure > 0.0))
            throw DemandError(ErrorCode::NonPositiveValue,
                              "expenditure must be positive " + row_ref(r.unit, r.period, r.good, r.source_line));
        auto &cell = cells[{unit_index[r.unit], r.period}];
        if (cell.present.empty()) {
            cell.price.assign(N, 0.0);
            cell.expenditure.assign(N, 0.0);
            cell.present.assign(N, false);
        }
        const auto g = good_index[r.good];
        if (cell.present[g])
            throw DemandError(ErrorCode::DuplicateKey, "duplicate row " + row_ref(r.unit, r.period, r.good, r.source_line));
        cell.present[g] = true;
        cell.price[g] = r.price;
        cell.expenditure[g] = r.expenditure;
    }

    // Incomplete cells: fail, or listwise-delete under allow_unbalanced.
    for (auto it = cells.begin(); it != cells.end();) {
        const auto &present = it->second.present;
        auto missing = std::find(present.begin(), present.end(), false);
        if (missing != present.end()) {
            if (!options.allow_unbalanced)
                throw DemandError(ErrorCode::UnbalancedPanel,
                                  "missing good '" + goods[static_cast<std::size_t>(missing - present.begin())] +
                                      "' " + row_ref(units[it->first.first], it->first.second, {}, 0));
            it = cells.erase(it);
        } else {
            ++it;
        }
    }
    if (cells.empty()) throw DemandError(ErrorCode::UnbalancedPanel, "no complete (unit, period) observations");

    std::vector<std::set<int>> unit_periods(units.size());
    std::set<int> all_periods;
    for (const auto &[key, cell] : cells) {
        unit_periods[key.first].insert(key.second);
        all_periods.insert(key.second);
    }
    bool balanced = true;
    for (const auto &ps : unit_periods)
        if (ps != all_periods) balanced = false;
    if (!balanced && !options.allow_unbalanced)
        throw DemandError(ErrorCode::UnbalancedPanel, "units do not share the same periods");

    PanelDataset out;
    out.goods = goods;
    out.periods.assign(all_periods.begin(), all_periods.end());
    out.balanced = balanced;
    // Units that lost every observation are dropped from the unit list.
    std::vector<std::size_t> remap(units.size(), 0);
    for (std::size_t u = 0; u < units.size(); ++u) {
        if (unit_periods[u].empty()) continue;
        remap[u] = out.units.size();
        out.units.push_back(units[u]);
    }

    std::vector<std::pair<std::size_t, int>> order;
    order.reserve(cells.size());
    for (const auto &[key, cell] : cells) order.push_back(key);
    std::sort(order.begin(), order.end());

    const auto n = static_cast<Eigen::Index>(order.size());
    const auto Ni = static_cast<Eigen::Index>(N);
    out.price.resize(n, Ni);
    out.expenditure.resize(n, Ni);
    out.share.resize(n, Ni);
    out.total.resize(n);
    for (Eigen::Index o = 0; o < n; ++o) {
        const auto &key = order[static_cast<std::size_t>(o)];
        const auto &cell = cells.at(key);
        out.obs_unit.push_back(remap[key.first]);
        out.obs_period.push_back(key.second);
        double total = 0.0;
        for (Eigen::Index i = 0; i < Ni; ++i) {
            out.price(o, i) = cell.price[static_cast<std::size_t>(i)];
            out.expenditure(o, i) = cell.expenditure[static_cast<std::size_t>(i)];
            total += cell.expenditure[static_cast<std::size_t>(i)];
        }
        out.total(o) = total;
        for (Eigen::Index i = 0; i < Ni; ++i) out.share(o, i) = out.expenditure(o, i) / total;
    }
    out.validate();
    return out;
}

PanelDataset parse_panel_csv(std::string_view text, const CsvSchema &schema, const LoadOptions &options) {
    const auto table = csv::parse(text);
    const auto c_unit = require_column(table, schema.unit, "unit");
    const auto c_period = require_column(table, schema.period, "period");
    const auto c_good = require_column(table, schema.good, "good");
    const auto c_price = require_column(table, schema.price, "price");

    std::optional<std::size_t> c_exp, c_qty;
    if (!schema.expenditure.empty()) c_exp = table.column(schema.expenditure);
    if (!schema.quantity.empty()) c_qty = table.column(schema.quantity);
    if (!c_exp && !c_qty) {
        const auto &name = schema.expenditure.empty() ? schema.quantity : schema.expenditure;
        throw DemandError(ErrorCode::MissingColumn,
                          "column '" + (name.empty() ? std::string("expenditure") : name) +
                              "' (field expenditure or quantity) not found in CSV header");
    }

    std::vector<GoodRecord> records;
    records.reserve(table.rows.size());
    std::vector<double> quantities;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        GoodRecord rec;
        rec.unit = require_text(table, r, c_unit, "unit");
        rec.period = require_period(table, r, c_period);
        rec.good = require_text(table, r, c_good, "good");
        rec.price = require_number(table, r, c_price, "price");
        rec.source_line = table.line_numbers[r];
        if (!(rec.price > 0.0))
            throw DemandError(ErrorCode::NonPositiveValue,
                              "price must be positive " + row_ref(rec.unit, rec.period, rec.good, rec.source_line));
        if (c_exp) {
            rec.expenditure = require_number(table, r, *c_exp, "expenditure");
        } else {
            quantities.push_back(require_number(table, r, *c_qty, "quantity"));
        }
        records.push_back(std::move(rec));
    }
    if (schema.price_mode == PriceMode::ChainedIndex) chain_price_indices(records);
    if (!c_exp)
        for (std::size_t r = 0; r < records.size(); ++r) records[r].expenditure = quantities[r] * records[r].price;
    return assemble_panel(std::move(records), options);
}

PanelDataset load_panel_csv(const std::string &path, const CsvSchema &schema, const LoadOptions &options) {
    std::ifstream probe(path);
    if (!probe) throw DemandError(ErrorCode::IoError, "cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(probe)), std::istreambuf_iterator<char>());
    return parse_panel_csv(text, schema, options);
}

void write_panel_csv(const PanelDataset &data, std::ostream &out) {
    out << "unit,period,good,price,expenditure\n";
    char buf[64];
    for (std::size_t o = 0; o < data.n_obs(); ++o) {
        for (std::size_t i = 0; i < data.n_goods(); ++i) {
            const auto oi = static_cast<Eigen::Index>(o);
            const auto ii = static_cast<Eigen::Index>(i);
            out << data.units[data.obs_unit[o]] << ',' << data.obs_period[o] << ',' << data.goods[i] << ',';
            std::snprintf(buf, sizeof buf, "%.17g", data.price(oi, ii));
            out << buf << ',';
            std::snprintf(buf, sizeof buf, "%.17g", data.expenditure(oi, ii));
            out << buf << '\n';
        }
    }
}

double litres_per_vehicle(double vmt, double fuel_economy, const UnitConvention &units) {
    return vmt * units.vmt_km_per_unit * fuel_economy / units.fe_distance_km;
}

PanelDataset build_expenditure(const RawVehiclePanel &raw, const std::map<std::string, std::string> &aggregation,
                               const ExpenditureOptions &options) {
    const auto &uc = options.units;
    if ((uc.vmt_km_per_unit != 1000.0 || uc.fe_distance_km != 100.0) && !uc.override_acknowledged)
        throw DemandError(ErrorCode::UnitMismatch,
                          "unit convention differs from VMT in 1000 km and FE in L/100km; set override_acknowledged");
    if (!(uc.vmt_km_per_unit > 0.0) || !(uc.fe_distance_km > 0.0))
        throw DemandError(ErrorCode::UnitMismatch, "unit scales must be positive");

    struct Acc {
        double expenditure = 0.0;
        double litres = 0.0;
        std::size_t line = 0;
    };
    std::map<std::tuple<std::string, int, std::string>, Acc> acc;
    std::vector<std::tuple<std::string, int, std::string>> first_seen;
    std::set<std::tuple<std::string, int, std::string>> class_keys;

    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
        const auto &row = raw.rows[r];
        auto it = aggregation.find(row.vehicle_class);
        if (it == aggregation.end())
            throw DemandError(ErrorCode::UnmappedVehicleClass,
                              "vehicle class '" + row.vehicle_class + "' has no aggregate good");
        const auto ref = row_ref(row.unit, row.period, row.vehicle_class, 0);
        if (!(row.quantity >= 0.0)) throw DemandError(ErrorCode::NonPositiveValue, "negative vehicle count " + ref);
        if (!(row.vmt > 0.0)) throw DemandError(ErrorCode::NonPositiveValue, "VMT must be positive " + ref);
        if (!(row.fuel_economy > 0.0))
            throw DemandError(ErrorCode::NonPositiveValue, "fuel economy must be positive " + ref);
        if (!(row.fuel_price > 0.0)) throw DemandError(ErrorCode::NonPositiveValue, "fuel price must be positive " + ref);
        if (!class_keys.insert({row.unit, row.period, row.vehicle_class}).second)
            throw DemandError(ErrorCode::DuplicateKey, "duplicate vehicle row " + ref);

        const double litres = row.quantity * litres_per_vehicle(row.vmt, row.fuel_economy, uc);
        std::tuple<std::string, int, std::string> key{row.unit, row.period, it->second};
        auto [slot, inserted] = acc.try_emplace(key);
        if (inserted) first_seen.push_back(key);
        slot->second.expenditure += litres * row.fuel_price;
        slot->second.litres += litres;
    }

    std::vector<GoodRecord> records;
    records.reserve(first_seen.size());
    for (const auto &key : first_seen) {
        const auto &a = acc.at(key);
        GoodRecord rec;
        rec.unit = std::get<0>(key);
        rec.period = std::get<1>(key);
        rec.good = std::get<2>(key);
        rec.expenditure = a.expenditure;
        if (auto p = options.good_prices.find(key); p != options.good_prices.end()) {
            rec.price = p->second;
        } else {
            rec.price = a.litres > 0.0 ? a.expenditure / a.litres : 0.0;
        }
        records.push_back(std::move(rec));
    }
    return assemble_panel(std::move(records), options.load, options.goods_order);
}

RawVehiclePanel parse_vehicle_csv(std::string_view text, const VehicleSchema &schema) {
    const auto table = csv::parse(text);
    const auto c_unit = require_column(table, schema.unit, "unit");
    const auto c_period = require_column(table, schema.period, "period");
    const auto c_class = require_column(table, schema.vehicle_class, "vehicle_class");
    const auto c_qty = require_column(table, schema.quantity, "quantity");
    const auto c_price = require_column(table, schema.fuel_price, "fuel_price");
    const auto c_vmt = table.column(schema.vmt);
    const auto c_fe = table.column(schema.fuel_economy);

    RawVehiclePanel panel;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        VehicleRecord rec;
        rec.unit = require_text(table, r, c_unit, "unit");
        rec.period = require_period(table, r, c_period);
        rec.vehicle_class = require_text(table, r, c_class, "vehicle class");
        rec.quantity = require_number(table, r, c_qty, "quantity");
        rec.fuel_price = require_number(table, r, c_price, "fuel price");
        auto defaults = schema.classes.find(rec.vehicle_class);
        auto from_defaults = [&](std::optional<std::size_t> col, double VehicleClassDefaults::*field,
                                 const std::string &name) {
            if (col && *col < table.rows[r].size() && !table.rows[r][*col].empty())
                return require_number(table, r, *col, name);
            if (defaults == schema.classes.end())
                throw DemandError(ErrorCode::MissingColumn,
                                  "column '" + name + "' absent and no default for class '" + rec.vehicle_class + "'");
            return defaults->second.*field;
        };
        rec.vmt = from_defaults(c_vmt, &VehicleClassDefaults::vmt, schema.vmt);
        rec.fuel_economy = from_defaults(c_fe, &VehicleClassDefaults::fuel_economy, schema.fuel_economy);
        panel.rows.push_back(std::move(rec));
    }
    return panel;
}

RawVehiclePanel load_vehicle_csv(const std::string &path, const VehicleSchema &schema) {
    std::ifstream in(path);
    if (!in) throw DemandError(ErrorCode::IoError, "cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_vehicle_csv(text, schema);
}

RotterdamTransform rotterdam_transform(const PanelDataset &data) {
    const auto N = static_cast<Eigen::Index>(data.n_goods());
    const Eigen::MatrixXd logq = data.quantity().array().log().matrix();
    const Eigen::MatrixXd logp = data.price.array().log().matrix();

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> count(data.units.size(), 0);
    for (std::size_t o = 0; o < data.n_obs(); ++o) {
        ++count[data.obs_unit[o]];
        // Observations are sorted by (unit, period); pair consecutive rows of a unit.
        if (o > 0 && data.obs_unit[o] == data.obs_unit[o - 1]) pairs.emplace_back(o, o - 1);
    }
    for (std::size_t u = 0; u < count.size(); ++u)
        if (count[u] < 2)
            throw DemandError(ErrorCode::InsufficientPeriods,
                              "unit '" + data.units[u] + "' has fewer than two periods");

    RotterdamTransform t;
    t.goods = data.goods;
    const auto n = static_cast<Eigen::Index>(pairs.size());
    t.dlnq.resize(n, N);
    t.dlnp.resize(n, N);
    t.wbar.resize(n, N);
    t.dlny.resize(n);
    t.dlnQ.resize(n);
    t.dlnQ_expenditure.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto [cur, lag] = pairs[static_cast<std::size_t>(r)];
        const auto c = static_cast<Eigen::Index>(cur);
        const auto l = static_cast<Eigen::Index>(lag);
        t.obs_unit.push_back(data.obs_unit[cur]);
        t.obs_period.push_back(data.obs_period[cur]);
        t.source_row.push_back(cur);
        t.lag_row.push_back(lag);
        t.dlnq.row(r) = logq.row(c) - logq.row(l);
        t.dlnp.row(r) = logp.row(c) - logp.row(l);
        t.wbar.row(r) = 0.5 * (data.share.row(c) + data.share.row(l));
        t.dlny(r) = std::log(data.total(c)) - std::log(data.total(l));
        t.dlnQ(r) = t.wbar.row(r).dot(t.dlnq.row(r));
        t.dlnQ_expenditure(r) = t.dlny(r) - t.wbar.row(r).dot(t.dlnp.row(r));
    }
    return t;
}

} // namespace demand
