#ifndef SSM_STATS_HPP
#define SSM_STATS_HPP

#include <vector>

namespace ssm {

struct TTestResult {
    double t = 0.0;
    int df = 0;
    double p = 1.0;   // two-sided
    bool degenerate = false; // zero-variance differences with nonzero mean
};

// Paired two-sided t-test: t = mean(d) / (sd(d)/sqrt(n)) with d = a - b and
// the n-1 standard deviation. All-zero differences give t = 0, p = 1;
// identical nonzero differences have no variance and are flagged with p = 0.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided tail probability of Student's t with df degrees of freedom,
// evaluated through the regularized incomplete beta function.
double t_distribution_two_sided_p(double t, int df);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

double mean(const std::vector<double>& v);
double sample_std(const std::vector<double>& v); // divisor n-1

} // namespace ssm

#endif
