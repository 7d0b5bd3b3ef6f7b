#ifndef ICC_DATA_MODEL_HPP
#define ICC_DATA_MODEL_HPP

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace icc {

enum class VariableRole {
    outcome,
    treatment,
    instrument,
    outcome_proxy,
    proxy_w0,
    proxy_w1,
    covariate,
    latent_confounder,
    latent_disturbance,
};

const char* role_name(VariableRole role);
VariableRole role_from_name(const std::string& name);

// Latent roles are only legal on simulated data.
bool is_latent(VariableRole role);

enum class ColumnKind { continuous, categorical };

struct Column {
    std::string name;
    VariableRole role = VariableRole::covariate;
    ColumnKind kind = ColumnKind::continuous;
    std::vector<double> values;
    // For categorical columns: original value per contiguous code.
    std::vector<double> codebook;
};

struct RoleSpec {
    VariableRole role = VariableRole::covariate;
    ColumnKind kind = ColumnKind::continuous;
};

// Immutable after construction; all mutation happens through free functions
// that return a new Dataset.
struct Dataset {
    std::vector<Column> columns;
    std::vector<std::string> warnings;
    bool simulated = false;

    std::size_t n() const { return columns.empty() ? 0 : columns.front().values.size(); }
    const Column* find(const std::string& name) const;
    const Column& at(const std::string& name) const;
    std::vector<const Column*> by_role(VariableRole role) const;
};

// Checks the v1 role invariants: exactly one outcome, exactly one treatment,
// and (when require_instrument) at least one instrument. Latent roles are
// rejected on non-simulated data. Throws schema_error on violation.
void validate_roles(const Dataset& ds, bool require_instrument);

Dataset load_csv(const std::string& path, const std::map<std::string, RoleSpec>& role_map);

// Plain CSV with a header row; numbers written with full round-trip
// precision so rewrites are byte-stable.
void write_csv(std::ostream& os, const Dataset& ds);

// Recode categorical columns to contiguous 0..k-1 codes (rank order of the
// original values); idempotent.
Dataset encode_categorical(const Dataset& ds);

struct ContrastSpec {
    enum class Kind { discrete_weights, grid_weights };
    Kind kind = Kind::discrete_weights;
    std::vector<double> support;  // strictly increasing
    std::vector<double> weights;  // pi(a_j)

    // Base-measure weight per support point: 1 for counting measure,
    // trapezoid weights for a grid.
    std::vector<double> measure() const;
    // pi(a) at an exact support match, 0 elsewhere.
    double weight_at(double a) const;
    bool is_zero() const;
};

ContrastSpec ate_contrast(double a1, double a0);

}  // namespace icc

#endif
