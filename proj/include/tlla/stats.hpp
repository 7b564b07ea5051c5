#pragma once

#include <vector>

namespace tlla::stats {

struct RankSumResult {
  double u_statistic;   // U for the first sample
  double z;             // normal approximation with tie correction
  double p_one_sided;   // P(first stochastically smaller), small when
                        // xs tends to lie below ys
  double p_two_sided;
};

// Mann-Whitney U with normal approximation and tie correction.
RankSumResult mann_whitney(const std::vector<double>& xs,
                           const std::vector<double>& ys);

// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// sup_t |F_xs(t) - F_ys(t)| (two-sample KS statistic).
double ecdf_gap(std::vector<double> xs, std::vector<double> ys);

double mean(const std::vector<double>& v);
double median(std::vector<double> v);

}  // namespace tlla::stats
