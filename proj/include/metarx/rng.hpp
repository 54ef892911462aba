#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace metarx {

// Derives independent stream seeds from (master seed, stage tag, index) so
// that changing one stage's draws never perturbs another stage.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stage,
                                 std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag bytes
    for (char c : stage) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    // splitmix64 finalizer mixes master/tag/index into one well-spread seed
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (h ^ (index + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic random stream. Uniform and normal variates are generated
// from raw mt19937_64 output (the engine sequence is pinned by the standard),
// so identical seeds give identical draws on every platform.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    RngStream(std::uint64_t master, std::string_view stage, std::uint64_t index = 0)
        : engine_(derive_seed(master, stage, index)) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform on (0, 1]; never returns 0 so log() is safe
    double uniform01() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    int uniform_int(int n) {  // in [0, n)
        return static_cast<int>(engine_() % static_cast<std::uint64_t>(n));
    }

    // Box-Muller with a cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Beta(a, b) for small integer parameters via order statistics:
    // the a-th smallest of a+b-1 uniforms.
    double beta_int(int a, int b) {
        const int n = a + b - 1;
        double u[16];
        for (int i = 0; i < n; ++i) u[i] = uniform01();
        // insertion sort; n <= 16
        for (int i = 1; i < n; ++i) {
            double v = u[i];
            int j = i - 1;
            while (j >= 0 && u[j] > v) {
                u[j + 1] = u[j];
                --j;
            }
            u[j + 1] = v;
        }
        return u[a - 1];
    }

    template <class It>
    void shuffle(It first, It last) {  // Fisher-Yates on this stream
        auto n = last - first;
        for (auto i = n - 1; i > 0; --i) {
            auto j = static_cast<decltype(i)>(engine_() % static_cast<std::uint64_t>(i + 1));
            std::swap(first[i], first[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace metarx
