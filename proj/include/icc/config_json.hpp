#ifndef ICC_CONFIG_JSON_HPP
#define ICC_CONFIG_JSON_HPP

#include <map>
#include <string>

#include <json.hpp>

#include "icc/data_model.hpp"
#include "icc/synth.hpp"

namespace icc::config {

using json = nlohmann::json;

// DGP section of a config: {"kind": "linear"|"discrete"|"monotone", ...}.
// Discrete and monotone kinds are generator specs (dims + seed); the linear
// kind is either {"preset": "confounded"} or the full coefficient set.
struct DgpSpec {
    enum class Kind { linear, discrete, monotone };
    Kind kind = Kind::linear;
    synth::LinearDGPSpec linear;
    struct {
        std::size_t d_u = 2, d_z = 5, d_a = 2, d_w = 3;
        std::uint64_t seed = 7;
        double support_floor = 1e-4;
        double y_noise_sd = 0.0;
    } discrete;
    synth::MonotoneFixtureSpec monotone;
};

DgpSpec parse_dgp(const json& j);
json dgp_to_json(const DgpSpec& spec);

std::map<std::string, RoleSpec> parse_role_map(const json& j);

ContrastSpec parse_contrast(const json& j);

// Reads and parses a whole config file; throws config_error on problems,
// with the offending key in the message.
json load_config(const std::string& path);

double get_or(const json& j, const std::string& key, double fallback);
std::size_t get_index(const json& j, const std::string& key, std::size_t fallback);

}  // namespace icc::config

#endif
