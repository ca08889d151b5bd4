#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace intentkit {

std::uint64_t fnv1a64(std::string_view bytes);
std::string to_hex(std::uint64_t value);

// Derives an independent stream seed for a named stage, e.g. derive_seed(master, "tgb.proposer").
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage);
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage, std::uint64_t index);

// Seeded generator with platform-stable draws. std::mt19937_64's output sequence is fixed by the
// standard, but the std distributions and std::shuffle are not, so bounded draws are done here.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniform(std::uint64_t bound);

    // Uniform real in [0, 1) with 53 bits of precision.
    double uniform01();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(uniform(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // k distinct indices from [0, n) in draw order (partial Fisher-Yates). k is clamped to n.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

  private:
    std::mt19937_64 engine_;
};

}  // namespace intentkit
