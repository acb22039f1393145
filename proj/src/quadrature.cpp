#include "degen/linalg.hpp"

#include <cmath>
#include <numbers>

namespace degen {

std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int points)
{
    std::vector<double> nodes(points), weights(points);
    for (int i = 0; i < points; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (points + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= points; ++k) {
                const double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            if (points == 1) p0 = 1.0;
            dp = points * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        nodes[i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {nodes, weights};
}

}  // namespace degen
