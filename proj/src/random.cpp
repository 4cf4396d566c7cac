#include "blochwalk/random.hpp"

#include <random>

namespace blochwalk {

std::int64_t binomial_draw(KeyedStream& rng, std::int64_t n, double p) {
    if (n <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    std::binomial_distribution<std::int64_t> dist(n, p);
    return dist(rng);
}

}  // namespace blochwalk
