#pragma once

#include <cstdint>
#include <span>

#include "edima/ml.hpp"

namespace edima::detail {

ForestParams build_forest(std::span<const FeatureRow> x, std::span<const Label> y,
                          int trees, int max_features, std::uint64_t seed);

}  // namespace edima::detail
