#include "metarx/constellation.hpp"

#include <cmath>

namespace metarx {

Constellation Constellation::qam16() {
    const double s = 1.0 / std::sqrt(10.0);
    std::vector<std::complex<double>> pts;
    pts.reserve(16);
    const double levels[4] = {-3.0, -1.0, 1.0, 3.0};
    for (double re : levels)
        for (double im : levels) pts.emplace_back(s * re, s * im);
    return Constellation(ConstellationKind::Qam16, std::move(pts));
}

Constellation Constellation::pam4() {
    const double s = 1.0 / std::sqrt(5.0);
    std::vector<std::complex<double>> pts = {
        {-3.0 * s, 0.0}, {-1.0 * s, 0.0}, {1.0 * s, 0.0}, {3.0 * s, 0.0}};
    return Constellation(ConstellationKind::Pam4, std::move(pts));
}

double Constellation::average_energy() const {
    double e = 0.0;
    for (const auto& p : points_) e += std::norm(p);
    return e / static_cast<double>(points_.size());
}

}  // namespace metarx
