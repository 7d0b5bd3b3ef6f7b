#ifndef ICC_ERRORS_HPP
#define ICC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace icc {

// Base class for all library errors.
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input: missing columns, misaligned labels, bad dimensions.
struct schema_error : error {
    explicit schema_error(const std::string& msg) : error(msg) {}
};

// Unparseable file content (non-numeric cells, bad headers).
struct parse_error : error {
    explicit parse_error(const std::string& msg) : error(msg) {}
};

// Invalid configuration supplied to the CLI or a generator spec.
struct config_error : error {
    explicit config_error(const std::string& msg) : error(msg) {}
};

// An identification requirement failed: invalid bridge solution,
// relevance/completeness failure, contrast outside the model.
struct identification_error : error {
    explicit identification_error(const std::string& msg) : error(msg) {}
};

// Common-support violation: an estimator needs mass in a cell that is empty.
struct support_error : error {
    explicit support_error(const std::string& msg) : error(msg) {}
};

}  // namespace icc

#endif
