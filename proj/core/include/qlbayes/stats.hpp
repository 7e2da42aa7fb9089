#pragma once

#include <functional>
#include <vector>

namespace qlbayes::stats {

double normal_cdf(double x);  // standard normal Phi

double mean(const std::vector<double>& xs);
double variance(const std::vector<double>& xs);     // unbiased (n-1)
double correlation(const std::vector<double>& xs, const std::vector<double>& ys);

// One-sample Kolmogorov-Smirnov distance sup_x |F_hat(x) - F(x)|.
double ks_distance(std::vector<double> sample,
                   const std::function<double(double)>& cdf);

// Two-sample KS distance between empirical CDFs.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

// E[Z^k] for Z ~ N(0, sd^2): 0 for odd k, sd^k (k-1)!! for even k.
double gaussian_moment(int k, double sd);

}  // namespace qlbayes::stats
