#include "icc/config_json.hpp"

#include <fstream>

#include "icc/errors.hpp"

namespace icc::config {

namespace {

linalg::Matrix parse_matrix(const json& j, const std::string& key, std::size_t rows,
                            std::size_t cols) {
    if (!j.is_array())
        throw config_error("config key '" + key + "' must be an array of rows");
    linalg::Matrix m(rows, cols);
    if (j.size() != rows)
        throw config_error("config key '" + key + "' has wrong row count");
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw config_error("config key '" + key + "' has wrong column count");
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

std::vector<double> parse_vector(const json& j, const std::string& key, std::size_t len) {
    if (!j.is_array() || j.size() != len)
        throw config_error("config key '" + key + "' must be an array of length " +
                           std::to_string(len));
    std::vector<double> v(len);
    for (std::size_t i = 0; i < len; ++i) v[i] = j[i].get<double>();
    return v;
}

}  // namespace

double get_or(const json& j, const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<double>();
}

std::size_t get_index(const json& j, const std::string& key, std::size_t fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<std::size_t>();
}

DgpSpec parse_dgp(const json& j) {
    if (!j.is_object() || !j.contains("kind"))
        throw config_error("dgp section must be an object with a 'kind' key");
    std::string kind = j.at("kind").get<std::string>();
    DgpSpec spec;
    if (kind == "linear") {
        spec.kind = DgpSpec::Kind::linear;
        if (j.value("preset", "") == "confounded" || !j.contains("beta")) {
            spec.linear = synth::LinearDGPSpec::confounded_example();
        } else {
            synth::LinearDGPSpec& s = spec.linear;
            s.d_a = get_index(j, "d_a", 1);
            s.d_u = get_index(j, "d_u", 1);
            s.d_z = get_index(j, "d_z", 2);
            s.d_w = get_index(j, "d_w", 1);
            s.beta = parse_vector(j.at("beta"), "beta", s.d_a);
            s.gamma_y = parse_vector(j.at("gamma_y"), "gamma_y", s.d_u);
            s.zeta = parse_vector(j.at("zeta"), "zeta", s.d_w);
            s.gamma_a = parse_matrix(j.at("gamma_a"), "gamma_a", s.d_u, s.d_a);
            s.gamma_w = parse_matrix(j.at("gamma_w"), "gamma_w", s.d_u, s.d_w);
            s.pi_fs = parse_matrix(j.at("pi_fs"), "pi_fs", s.d_z, s.d_a);
            s.gamma_tilde_z =
                parse_matrix(j.at("gamma_tilde_z"), "gamma_tilde_z", s.d_z, s.d_u);
            std::size_t ne = 1 + s.d_a + s.d_w + s.d_u;
            if (j.contains("sigma_z"))
                s.sigma_z = parse_matrix(j.at("sigma_z"), "sigma_z", s.d_z, s.d_z);
            else
                s.sigma_z = linalg::Matrix::identity(s.d_z);
            if (j.contains("noise_cov"))
                s.noise_cov = parse_matrix(j.at("noise_cov"), "noise_cov", ne, ne);
            else
                s.noise_cov = linalg::Matrix::identity(ne);
        }
        spec.linear.validate();
    } else if (kind == "discrete") {
        spec.kind = DgpSpec::Kind::discrete;
        spec.discrete.d_u = get_index(j, "d_u", 2);
        spec.discrete.d_z = get_index(j, "d_z", 5);
        spec.discrete.d_a = get_index(j, "d_a", 2);
        spec.discrete.d_w = get_index(j, "d_w", 3);
        spec.discrete.seed = j.value("seed", 7ULL);
        spec.discrete.support_floor = get_or(j, "support_floor", 1e-4);
        spec.discrete.y_noise_sd = get_or(j, "y_noise_sd", 0.0);
    } else if (kind == "monotone") {
        spec.kind = DgpSpec::Kind::monotone;
        synth::MonotoneFixtureSpec& m = spec.monotone;
        m.d_u = get_index(j, "d_u", 2);
        m.d_w0 = get_index(j, "d_w0", m.d_u + 1);
        m.d_w1 = get_index(j, "d_w1", m.d_u + 1);
        m.n_grid = get_index(j, "n_grid", 105);
        m.n_blocks = get_index(j, "n_blocks", 21);
        m.t_levels = get_index(j, "t_levels", 25);
        m.weight_amplitude = get_or(j, "weight_amplitude", 0.2);
        m.support_floor = get_or(j, "support_floor", 1e-3);
        m.y_noise_sd = get_or(j, "y_noise_sd", 0.0);
        m.seed = j.value("seed", 11ULL);
    } else {
        throw config_error("unknown dgp kind '" + kind + "'");
    }
    return spec;
}

json dgp_to_json(const DgpSpec& spec) {
    json j;
    switch (spec.kind) {
        case DgpSpec::Kind::linear: {
            j["kind"] = "linear";
            const auto& s = spec.linear;
            j["d_a"] = s.d_a;
            j["d_u"] = s.d_u;
            j["d_z"] = s.d_z;
            j["d_w"] = s.d_w;
            j["beta"] = s.beta;
            j["gamma_y"] = s.gamma_y;
            j["zeta"] = s.zeta;
            auto mat = [](const linalg::Matrix& m) {
                json rows = json::array();
                for (std::size_t i = 0; i < m.rows; ++i) {
                    json row = json::array();
                    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m(i, c));
                    rows.push_back(row);
                }
                return rows;
            };
            j["gamma_a"] = mat(s.gamma_a);
            j["gamma_w"] = mat(s.gamma_w);
            j["pi_fs"] = mat(s.pi_fs);
            j["gamma_tilde_z"] = mat(s.gamma_tilde_z);
            j["sigma_z"] = mat(s.sigma_z);
            j["noise_cov"] = mat(s.noise_cov);
            break;
        }
        case DgpSpec::Kind::discrete:
            j["kind"] = "discrete";
            j["d_u"] = spec.discrete.d_u;
            j["d_z"] = spec.discrete.d_z;
            j["d_a"] = spec.discrete.d_a;
            j["d_w"] = spec.discrete.d_w;
            j["seed"] = spec.discrete.seed;
            j["support_floor"] = spec.discrete.support_floor;
            j["y_noise_sd"] = spec.discrete.y_noise_sd;
            break;
        case DgpSpec::Kind::monotone:
            j["kind"] = "monotone";
            j["d_u"] = spec.monotone.d_u;
            j["d_w0"] = spec.monotone.d_w0;
            j["d_w1"] = spec.monotone.d_w1;
            j["n_grid"] = spec.monotone.n_grid;
            j["n_blocks"] = spec.monotone.n_blocks;
            j["t_levels"] = spec.monotone.t_levels;
            j["weight_amplitude"] = spec.monotone.weight_amplitude;
            j["support_floor"] = spec.monotone.support_floor;
            j["y_noise_sd"] = spec.monotone.y_noise_sd;
            j["seed"] = spec.monotone.seed;
            break;
    }
    return j;
}

std::map<std::string, RoleSpec> parse_role_map(const json& j) {
    if (!j.is_object()) throw config_error("'roles' must map column names to roles");
    std::map<std::string, RoleSpec> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        RoleSpec spec;
        if (it.value().is_string()) {
            spec.role = role_from_name(it.value().get<std::string>());
            spec.kind = ColumnKind::continuous;
        } else if (it.value().is_object()) {
            spec.role = role_from_name(it.value().at("role").get<std::string>());
            std::string kind = it.value().value("kind", "continuous");
            if (kind == "categorical")
                spec.kind = ColumnKind::categorical;
            else if (kind == "continuous")
                spec.kind = ColumnKind::continuous;
            else
                throw config_error("unknown column kind '" + kind + "'");
        } else {
            throw config_error("role entry for '" + it.key() + "' must be string or object");
        }
        out[it.key()] = spec;
    }
    return out;
}

ContrastSpec parse_contrast(const json& j) {
    if (j.is_null()) return ate_contrast(1.0, 0.0);
    if (!j.is_object() || !j.contains("a1") || !j.contains("a0"))
        throw config_error("'contrast' must be an object with keys a1 and a0");
    return ate_contrast(j.at("a1").get<double>(), j.at("a0").get<double>());
}

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw config_error(std::string("config parse failure in ") + path + ": " + e.what());
    }
    if (!j.is_object()) throw config_error("config root must be a JSON object");
    return j;
}

}  // namespace icc::config
