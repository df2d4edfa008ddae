#ifndef SSM_ALIGN_HPP
#define SSM_ALIGN_HPP

#include "ssm/geometry.hpp"

namespace ssm {

// Least-squares orthogonal (Kabsch/Umeyama) alignment of source onto target:
// minimizes sum_i || s*R*source_i + t - target_i ||^2 over proper rotations.
// Reflections are corrected by flipping the smallest singular direction.
// Throws DataError on size mismatch and NumericalError when the source
// configuration is degenerate (all points coincident).
SimilarityTransform rigid_align(const PointSet& source, const PointSet& target, bool allow_scale);

struct ProcrustesResult {
    CorrespondenceEnsemble aligned;
    std::vector<SimilarityTransform> transforms; // original -> aligned, per shape
    bool converged = false;
    int iterations = 0;
};

// Generalized Procrustes analysis: iteratively aligns every shape to the
// running mean until the mean moves less than tol (relative Frobenius).
// The mean of the aligned ensemble is centered at the origin on return.
ProcrustesResult generalized_procrustes(const CorrespondenceEnsemble& ens, bool allow_scale,
                                        double tol = 1e-10, int max_iters = 100);

} // namespace ssm

#endif
