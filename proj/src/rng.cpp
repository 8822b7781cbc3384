#include "cascade/rng.hpp"

namespace cascade {

std::int64_t Rng::poisson(double lambda) {
    if (!(lambda > 0.0)) return 0;
    if (lambda < 50.0) {
        const double floor = std::exp(-lambda);
        double prod = 1.0;
        std::int64_t k = 0;
        do {
            ++k;
            prod *= uniform_pos();
        } while (prod > floor);
        return k - 1;
    }
    const double v = std::floor(lambda + std::sqrt(lambda) * gaussian() + 0.5);
    return v < 0.0 ? 0 : static_cast<std::int64_t>(v);
}

}  // namespace cascade
