#ifndef ICC_CONTROL_FUNCTION_HPP
#define ICC_CONTROL_FUNCTION_HPP

#include <optional>
#include <string>
#include <vector>

#include "icc/data_model.hpp"
#include "icc/linalg.hpp"

namespace icc::control {

enum class ControlKind { empirical_no_u, oracle_vu, control_quantity };

struct ControlColumn {
    std::vector<double> values;  // in [0, 1]
    ControlKind kind = ControlKind::empirical_no_u;
    std::vector<double> bin_edges;  // interior edges, set by bin_control
    std::vector<int> bins;          // per-row bin index, set by bin_control
    int n_bins = 0;
    double clip_total = 0.0;  // accumulated clipping from control-quantity lookups
};

// Within-cell midrank conditional CDF: V_i = (rank_i - 0.5) / n_cell with
// average ranks for ties. Cells of size one are rejected.
ControlColumn empirical_cdf_control(const std::vector<double>& a,
                                    const std::vector<int>& z_cell);

// Same construction on (z, u) cells; the oracle control for simulated data.
ControlColumn oracle_control(const std::vector<double>& a, const std::vector<int>& z_cell,
                             const std::vector<int>& u_cell);

// Row-wise lookup of a precomputed control-quantity table V(a, z).
// Throws support_error when a row's (a, z) pair has no table entry.
struct ControlQuantityTable {
    std::vector<double> a_values;  // sorted
    linalg::Matrix v;              // a_values.size() x n_z
    std::vector<double> clip;      // same shape, flattened clip magnitudes
};

ControlColumn control_quantity(const std::vector<double>& a, const std::vector<int>& z_cell,
                               const ControlQuantityTable& table);

// Equal-mass bins by pooled midpoint-CDF: bin(x) = floor(n_bins * F_mid(x)).
// Ties share a bin. Weights default to uniform.
struct BinAssignment {
    std::vector<int> bins;
    std::vector<double> edges;  // interior boundaries (left-closed)
};

BinAssignment assign_equal_mass_bins(const std::vector<double>& values,
                                     const std::vector<double>& weights, std::size_t n_bins);

ControlColumn bin_control(const ControlColumn& v, std::size_t n_bins);

struct SupportFlag {
    double arm = 0.0;
    int bin = 0;
};

struct SupportReport {
    std::size_t n_bins = 0;
    std::vector<SupportFlag> flagged;  // (arm, bin) combinations with no mass
    bool ok() const { return flagged.empty(); }
};

// For each contrast arm, flags control bins that carry no observations of
// that arm. Diagnostic only; never throws.
SupportReport check_common_support(const std::vector<double>& a, const ControlColumn& v,
                                   const ContrastSpec& c, std::size_t n_bins = 10);

}  // namespace icc::control

#endif
