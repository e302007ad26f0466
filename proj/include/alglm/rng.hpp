#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace alglm {

// Counter-based random stream. Each stream is keyed by (seed, purpose tag,
// index) and produces splitmix64 outputs of an incrementing counter, so any
// stream can be regenerated independently of the order in which streams are
// consumed. All samplers are implemented here rather than through <random>
// distributions so draws are bit-identical across standard libraries.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return next_u64(); }

    std::uint64_t next_u64();
    // Uniform on the open interval (0, 1).
    double uniform();
    double uniform(double lo, double hi);
    // Unbiased integer in [0, bound).
    std::uint64_t uniform_index(std::uint64_t bound);
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_tag(std::string_view tag);

// Derive a child seed from a parent seed, a purpose tag and an index.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

// Fisher-Yates shuffle of 0..n-1.
std::vector<std::size_t> random_permutation(std::size_t n, RngStream& rng);

}  // namespace alglm
