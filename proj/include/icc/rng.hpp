#ifndef ICC_RNG_HPP
#define ICC_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace icc::rng {

// Seeded generator with hand-rolled distribution transforms so that draws
// are reproducible across standard libraries (std distributions are only
// specified up to implementation).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform on (0, 1), never returns 0 or 1.
    double uniform();
    double uniform(double lo, double hi);
    // Standard normal via polar Box-Muller (cached second value).
    double normal();
    // Gamma(shape, 1) by Marsaglia-Tsang.
    double gamma(double shape);
    std::vector<double> dirichlet(std::size_t k, double alpha);
    // Index draw from unnormalized nonnegative weights.
    std::size_t categorical(const std::vector<double>& weights);
    std::uint64_t next_u64() { return gen_(); }

private:
    std::mt19937_64 gen_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace icc::rng

#endif
