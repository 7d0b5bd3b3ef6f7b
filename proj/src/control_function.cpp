#include "icc/control_function.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "icc/errors.hpp"

namespace icc::control {

namespace {

ControlColumn midrank_control(const std::vector<double>& a, const std::vector<long>& cell,
                              ControlKind kind, const char* cell_desc) {
    if (a.size() != cell.size()) throw schema_error("control: column length mismatch");
    std::map<long, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < a.size(); ++i) groups[cell[i]].push_back(i);

    ControlColumn out;
    out.kind = kind;
    out.values.assign(a.size(), 0.0);
    for (auto& [key, idx] : groups) {
        (void)key;
        if (idx.size() < 2)
            throw schema_error(std::string("control: ") + cell_desc +
                               " cell with fewer than 2 observations");
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
        double n_cell = static_cast<double>(idx.size());
        std::size_t pos = 0;
        while (pos < idx.size()) {
            std::size_t end = pos;
            while (end + 1 < idx.size() && a[idx[end + 1]] == a[idx[pos]]) ++end;
            // Average 1-based rank of the tie group.
            double midrank = 0.5 * (static_cast<double>(pos + 1) + static_cast<double>(end + 1));
            double v = (midrank - 0.5) / n_cell;
            for (std::size_t k = pos; k <= end; ++k) out.values[idx[k]] = v;
            pos = end + 1;
        }
    }
    return out;
}

}  // namespace

ControlColumn empirical_cdf_control(const std::vector<double>& a,
                                    const std::vector<int>& z_cell) {
    std::vector<long> cell(z_cell.begin(), z_cell.end());
    return midrank_control(a, cell, ControlKind::empirical_no_u, "z");
}

ControlColumn oracle_control(const std::vector<double>& a, const std::vector<int>& z_cell,
                             const std::vector<int>& u_cell) {
    if (z_cell.size() != u_cell.size()) throw schema_error("control: column length mismatch");
    long n_u = 0;
    for (int u : u_cell) n_u = std::max<long>(n_u, u + 1);
    std::vector<long> cell(z_cell.size());
    for (std::size_t i = 0; i < cell.size(); ++i)
        cell[i] = static_cast<long>(z_cell[i]) * n_u + u_cell[i];
    return midrank_control(a, cell, ControlKind::oracle_vu, "(z,u)");
}

ControlColumn control_quantity(const std::vector<double>& a, const std::vector<int>& z_cell,
                               const ControlQuantityTable& table) {
    if (a.size() != z_cell.size()) throw schema_error("control: column length mismatch");
    ControlColumn out;
    out.kind = ControlKind::control_quantity;
    out.values.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto it = std::lower_bound(table.a_values.begin(), table.a_values.end(), a[i]);
        if (it == table.a_values.end() || *it != a[i])
            throw support_error("control quantity: treatment value " + std::to_string(a[i]) +
                                " has no bridge solution");
        auto ai = static_cast<std::size_t>(it - table.a_values.begin());
        auto z = static_cast<std::size_t>(z_cell[i]);
        if (z >= table.v.cols)
            throw support_error("control quantity: instrument cell out of range");
        out.values.push_back(table.v(ai, z));
        if (!table.clip.empty()) out.clip_total += table.clip[ai * table.v.cols + z];
    }
    return out;
}

BinAssignment assign_equal_mass_bins(const std::vector<double>& values,
                                     const std::vector<double>& weights, std::size_t n_bins) {
    if (n_bins < 2) throw schema_error("bin_control: need at least 2 bins");
    if (values.empty()) throw schema_error("bin_control: empty column");
    if (!weights.empty() && weights.size() != values.size())
        throw schema_error("bin_control: weight length mismatch");
    if (n_bins > values.size()) throw schema_error("bin_control: more bins than observations");

    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });

    double total = 0.0;
    if (weights.empty())
        total = static_cast<double>(values.size());
    else
        total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (total <= 0.0) throw schema_error("bin_control: nonpositive total weight");

    BinAssignment out;
    out.bins.assign(values.size(), 0);
    double below = 0.0;
    std::size_t pos = 0;
    int last_bin = -1;
    while (pos < order.size()) {
        std::size_t end = pos;
        double tie_mass = weights.empty() ? 1.0 : weights[order[pos]];
        while (end + 1 < order.size() && values[order[end + 1]] == values[order[pos]]) {
            ++end;
            tie_mass += weights.empty() ? 1.0 : weights[order[end]];
        }
        double f_mid = (below + 0.5 * tie_mass) / total;
        int bin = std::min<int>(static_cast<int>(n_bins) - 1,
                                static_cast<int>(std::floor(f_mid * static_cast<double>(n_bins))));
        bin = std::max(bin, last_bin < 0 ? 0 : last_bin);
        for (std::size_t k = pos; k <= end; ++k) out.bins[order[k]] = bin;
        if (bin != last_bin && last_bin >= 0)
            for (int b = last_bin; b < bin; ++b) out.edges.push_back(values[order[pos]]);
        if (last_bin < 0 && bin > 0)
            for (int b = 0; b < bin; ++b) out.edges.push_back(values[order[pos]]);
        last_bin = bin;
        below += tie_mass;
        pos = end + 1;
    }
    return out;
}

ControlColumn bin_control(const ControlColumn& v, std::size_t n_bins) {
    ControlColumn out = v;
    BinAssignment assign = assign_equal_mass_bins(v.values, {}, n_bins);
    out.bins = std::move(assign.bins);
    out.bin_edges = std::move(assign.edges);
    out.n_bins = static_cast<int>(n_bins);
    return out;
}

SupportReport check_common_support(const std::vector<double>& a, const ControlColumn& v,
                                   const ContrastSpec& c, std::size_t n_bins) {
    SupportReport report;
    report.n_bins = n_bins;
    std::vector<int> bins;
    if (!v.bins.empty() && v.n_bins == static_cast<int>(n_bins)) {
        bins = v.bins;
    } else {
        bins = assign_equal_mass_bins(v.values, {}, n_bins).bins;
    }
    for (std::size_t j = 0; j < c.support.size(); ++j) {
        if (c.weights[j] == 0.0) continue;
        std::vector<bool> seen(n_bins, false);
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] == c.support[j]) seen[static_cast<std::size_t>(bins[i])] = true;
        for (std::size_t b = 0; b < n_bins; ++b)
            if (!seen[b]) report.flagged.push_back({c.support[j], static_cast<int>(b)});
    }
    return report;
}

}  // namespace icc::control
