#include "icc/rng.hpp"

#include <cmath>

#include "icc/errors.hpp"

namespace icc::rng {

double Rng::uniform() {
    // 53-bit mantissa draw; reject exact zero.
    for (;;) {
        double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        if (u > 0.0 && u < 1.0) return u;
    }
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    for (;;) {
        double u = 2.0 * uniform() - 1.0;
        double v = 2.0 * uniform() - 1.0;
        double s = u * u + v * v;
        if (s > 0.0 && s < 1.0) {
            double f = std::sqrt(-2.0 * std::log(s) / s);
            cached_ = v * f;
            has_cached_ = true;
            return u * f;
        }
    }
}

double Rng::gamma(double shape) {
    if (shape <= 0.0) throw schema_error("gamma: shape must be positive");
    if (shape < 1.0) {
        // Boost to shape+1 and scale back.
        double u = uniform();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        double u = uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

std::vector<double> Rng::dirichlet(std::size_t k, double alpha) {
    std::vector<double> g(k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        g[i] = gamma(alpha);
        sum += g[i];
    }
    for (std::size_t i = 0; i < k; ++i) g[i] /= sum;
    return g;
}

std::size_t Rng::categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) throw schema_error("categorical: weights sum to zero");
    double u = uniform() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        cum += weights[i];
        if (u <= cum) return i;
    }
    return weights.size() - 1;
}

}  // namespace icc::rng
