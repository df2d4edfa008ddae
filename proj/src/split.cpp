#include "ssm/split.hpp"

#include "ssm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace ssm {

SplitIndices stratified_split(const std::vector<int>& labels, double train_fraction, Rng& rng) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DataError("stratified_split: train_fraction must lie in (0, 1)");
    }
    if (labels.empty()) {
        throw DataError("stratified_split: no samples");
    }
    std::map<int, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        clusters[labels[i]].push_back(i);
    }
    SplitIndices out;
    for (auto& [label, members] : clusters) {
        if (members.size() < 2) {
            std::ostringstream os;
            os << "stratified_split: cluster " << label << " has " << members.size()
               << " member(s); need at least 2 for a train/test split";
            throw DataError(os.str());
        }
        const auto size = static_cast<double>(members.size());
        auto n_train = static_cast<std::size_t>(std::llround(train_fraction * size));
        n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
        rng.shuffle(members);
        out.train.insert(out.train.end(), members.begin(),
                         members.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                        members.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

} // namespace ssm
