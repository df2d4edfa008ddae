#ifndef SSM_SPLIT_HPP
#define SSM_SPLIT_HPP

#include "ssm/rng.hpp"

#include <cstddef>
#include <vector>

namespace ssm {

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Per-cluster sampling without replacement. Each cluster contributes
// round(train_fraction * cluster size) training samples, clamped so both
// subsets stay nonempty. Indices come back sorted; the union is exhaustive.
// Throws DataError when a cluster has fewer than 2 members (named in the
// message) or the fraction is outside (0, 1).
SplitIndices stratified_split(const std::vector<int>& labels, double train_fraction, Rng& rng);

} // namespace ssm

#endif
