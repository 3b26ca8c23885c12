// Restricted products shared by the non-conformal tests and the acceptance run.
#pragma once

#include "fdecay/nonconformal.hpp"
#include "systems.hpp"

namespace fixtures {

// x -> 1 / (x + i), i = 1, 2, 3
inline std::shared_ptr<IFSSystem> gauss3() {
    return std::make_shared<IFSSystem>(1, std::vector<ConformalMap>{mob1(0, 1, -1), mob1(0, 1, -2), mob1(0, 1, -3)});
}

// (x, y) -> (1/(x+i), 1/(y+j)) over the six pairs with i != j.
inline RestrictedProductIFS gauss_six() {
    auto g = gauss3();
    return RestrictedProductIFS({g, g}, {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}}, ProbabilityVector::uniform(6));
}

inline std::shared_ptr<IFSSystem> two_inversions() {
    return std::make_shared<IFSSystem>(1, std::vector<ConformalMap>{mob1(0.3, 0.1, -1), mob1(0.7, 0.1, 2)});
}

inline RestrictedProductIFS inversion_product() {
    auto m = two_inversions();
    return RestrictedProductIFS({m, m}, {{0, 0}, {0, 1}, {1, 0}, {1, 1}}, ProbabilityVector::uniform(4));
}

// First coordinate: two similitudes and two inversions. The fibre over the
// first letter of the second coordinate is affine, over the second it is
// non-linear, over the third it mixes both.
inline RestrictedProductIFS mixed_product() {
    auto first = std::make_shared<IFSSystem>(
        1, std::vector<ConformalMap>{sim1(0.3, 0), sim1(0.3, 0.7), mob1(0.3, 0.1, -1), mob1(0.7, 0.1, 2)});
    auto second = std::make_shared<IFSSystem>(1, std::vector<ConformalMap>{sim1(0.3, 0), sim1(0.3, 0.35), sim1(0.3, 0.7)});
    return RestrictedProductIFS({first, second}, {{0, 0}, {1, 0}, {2, 1}, {3, 1}, {0, 2}, {1, 2}, {2, 2}, {3, 2}},
                                ProbabilityVector({0.15, 0.15, 0.1, 0.1, 0.125, 0.125, 0.125, 0.125}));
}

}  // namespace fixtures
