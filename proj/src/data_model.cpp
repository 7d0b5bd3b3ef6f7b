#include "icc/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "icc/errors.hpp"

namespace icc {

namespace {

const std::pair<const char*, VariableRole> kRoleNames[] = {
    {"outcome", VariableRole::outcome},
    {"treatment", VariableRole::treatment},
    {"instrument", VariableRole::instrument},
    {"outcome_proxy", VariableRole::outcome_proxy},
    {"proxy_w0", VariableRole::proxy_w0},
    {"proxy_w1", VariableRole::proxy_w1},
    {"covariate", VariableRole::covariate},
    {"latent_confounder", VariableRole::latent_confounder},
    {"latent_disturbance", VariableRole::latent_disturbance},
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

const char* role_name(VariableRole role) {
    for (const auto& [name, r] : kRoleNames)
        if (r == role) return name;
    return "unknown";
}

VariableRole role_from_name(const std::string& name) {
    for (const auto& [n, r] : kRoleNames)
        if (name == n) return r;
    throw schema_error("unknown variable role: " + name);
}

bool is_latent(VariableRole role) {
    return role == VariableRole::latent_confounder || role == VariableRole::latent_disturbance;
}

const Column* Dataset::find(const std::string& name) const {
    for (const auto& c : columns)
        if (c.name == name) return &c;
    return nullptr;
}

const Column& Dataset::at(const std::string& name) const {
    const Column* c = find(name);
    if (!c) throw schema_error("no column named '" + name + "'");
    return *c;
}

std::vector<const Column*> Dataset::by_role(VariableRole role) const {
    std::vector<const Column*> out;
    for (const auto& c : columns)
        if (c.role == role) out.push_back(&c);
    return out;
}

void validate_roles(const Dataset& ds, bool require_instrument) {
    std::size_t outcomes = ds.by_role(VariableRole::outcome).size();
    std::size_t treatments = ds.by_role(VariableRole::treatment).size();
    if (outcomes != 1)
        throw schema_error("dataset must have exactly one outcome column, found " +
                           std::to_string(outcomes));
    if (treatments != 1)
        throw schema_error("dataset must have exactly one treatment column, found " +
                           std::to_string(treatments));
    if (require_instrument && ds.by_role(VariableRole::instrument).empty())
        throw schema_error("at least one instrument column is required");
    if (!ds.simulated) {
        for (const auto& c : ds.columns)
            if (is_latent(c.role))
                throw schema_error("latent role on non-simulated column '" + c.name + "'");
    }
    for (const auto& c : ds.columns)
        if (c.values.size() != ds.n())
            throw schema_error("column '" + c.name + "' has inconsistent length");
}

Dataset load_csv(const std::string& path, const std::map<std::string, RoleSpec>& role_map) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw parse_error("empty file: " + path);
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trim(h);

    for (const auto& [name, spec] : role_map) {
        (void)spec;
        if (std::find(header.begin(), header.end(), name) == header.end())
            throw schema_error("mapped column '" + name + "' not present in header of " + path);
    }

    Dataset ds;
    std::vector<int> keep(header.size(), -1);
    for (std::size_t j = 0; j < header.size(); ++j) {
        auto it = role_map.find(header[j]);
        if (it == role_map.end()) {
            ds.warnings.push_back("dropping unmapped column '" + header[j] + "'");
            continue;
        }
        Column c;
        c.name = header[j];
        c.role = it->second.role;
        c.kind = it->second.kind;
        keep[j] = static_cast<int>(ds.columns.size());
        ds.columns.push_back(std::move(c));
    }

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw parse_error(path + ": row " + std::to_string(row) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(header.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (keep[j] < 0) continue;
            std::string cell = trim(cells[j]);
            std::size_t pos = 0;
            double value = 0.0;
            bool ok = !cell.empty();
            if (ok) {
                try {
                    value = std::stod(cell, &pos);
                } catch (const std::exception&) {
                    ok = false;
                }
            }
            if (!ok || pos != cell.size() || !std::isfinite(value))
                throw parse_error(path + ": row " + std::to_string(row) + ", column '" +
                                  header[j] + "': cannot parse '" + cell + "' as a number");
            ds.columns[static_cast<std::size_t>(keep[j])].values.push_back(value);
        }
    }
    for (const auto& c : ds.columns)
        if (c.values.size() != ds.n())
            throw parse_error(path + ": ragged column '" + c.name + "'");
    for (const auto& c : ds.columns)
        if (is_latent(c.role)) ds.simulated = true;
    return ds;
}

void write_csv(std::ostream& os, const Dataset& ds) {
    for (std::size_t j = 0; j < ds.columns.size(); ++j)
        os << (j ? "," : "") << ds.columns[j].name;
    os << "\n";
    char buf[40];
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < ds.columns.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.columns[j].values[i]);
            os << (j ? "," : "") << buf;
        }
        os << "\n";
    }
}

Dataset encode_categorical(const Dataset& ds) {
    Dataset out = ds;
    for (auto& c : out.columns) {
        if (c.kind != ColumnKind::categorical) continue;
        std::vector<double> levels;
        if (!c.codebook.empty()) {
            // Already encoded: codes are positions into the codebook.
            continue;
        }
        levels = c.values;
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
        for (auto& v : c.values) {
            auto it = std::lower_bound(levels.begin(), levels.end(), v);
            v = static_cast<double>(it - levels.begin());
        }
        c.codebook = std::move(levels);
    }
    return out;
}

std::vector<double> ContrastSpec::measure() const {
    std::vector<double> mu(support.size(), 1.0);
    if (kind == Kind::grid_weights && support.size() > 1) {
        for (std::size_t j = 0; j < support.size(); ++j) {
            double left = j == 0 ? support[0] : support[j - 1];
            double right = j + 1 == support.size() ? support.back() : support[j + 1];
            mu[j] = 0.5 * (right - left);
        }
    }
    return mu;
}

double ContrastSpec::weight_at(double a) const {
    for (std::size_t j = 0; j < support.size(); ++j)
        if (support[j] == a) return weights[j];
    return 0.0;
}

bool ContrastSpec::is_zero() const {
    for (double w : weights)
        if (w != 0.0) return false;
    return true;
}

ContrastSpec ate_contrast(double a1, double a0) {
    if (a1 == a0) throw schema_error("ate_contrast: a1 and a0 must differ");
    ContrastSpec c;
    c.kind = ContrastSpec::Kind::discrete_weights;
    if (a0 < a1) {
        c.support = {a0, a1};
        c.weights = {-1.0, 1.0};
    } else {
        c.support = {a1, a0};
        c.weights = {1.0, -1.0};
    }
    return c;
}

}  // namespace icc
