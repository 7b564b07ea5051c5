#include "tlla/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tlla/errors.hpp"

namespace tlla::stats {

namespace {

// Average ranks (1-based) over the concatenation, with tie averaging.
std::vector<double> ranks(const std::vector<double>& all) {
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return all[a] < all[b]; });
  std::vector<double> r(all.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && all[idx[j + 1]] == all[idx[i]]) ++j;
    double avg = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

RankSumResult mann_whitney(const std::vector<double>& xs,
                           const std::vector<double>& ys) {
  if (xs.empty() || ys.empty())
    throw InvalidValue("mann_whitney: empty sample");
  std::size_t n1 = xs.size(), n2 = ys.size();
  std::vector<double> all = xs;
  all.insert(all.end(), ys.begin(), ys.end());
  std::vector<double> r = ranks(all);

  double rank_sum_x = 0.0;
  for (std::size_t i = 0; i < n1; ++i) rank_sum_x += r[i];
  double u = rank_sum_x - double(n1) * double(n1 + 1) / 2.0;

  // Tie correction for the variance.
  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  std::size_t i = 0, n = sorted.size();
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
    double t = double(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  double mu = double(n1) * double(n2) / 2.0;
  double var = double(n1) * double(n2) / 12.0 *
               (double(n + 1) - tie_term / (double(n) * double(n - 1)));
  RankSumResult res;
  res.u_statistic = u;
  if (var <= 0.0) {
    res.z = 0.0;
    res.p_one_sided = 0.5;
    res.p_two_sided = 1.0;
    return res;
  }
  res.z = (u - mu) / std::sqrt(var);
  res.p_one_sided = std_normal_cdf(res.z);  // small when xs ranks low
  res.p_two_sided = 2.0 * std_normal_cdf(-std::abs(res.z));
  return res;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw InvalidValue("spearman: need two equal-length samples");
  std::vector<double> rx = ranks(xs), ry = ranks(ys);
  double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    double a = rx[i] - mx, b = ry[i] - my;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw InvalidValue("spearman: constant sample");
  return sxy / std::sqrt(sxx * syy);
}

double ecdf_gap(std::vector<double> xs, std::vector<double> ys) {
  if (xs.empty() || ys.empty()) throw InvalidValue("ecdf_gap: empty sample");
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double gap = 0.0;
  std::size_t i = 0, j = 0;
  while (i < xs.size() && j < ys.size()) {
    // Advance past every copy of the smaller value on both sides before
    // comparing the ecdfs, so ties contribute a single evaluation point.
    double t = std::min(xs[i], ys[j]);
    while (i < xs.size() && xs[i] == t) ++i;
    while (j < ys.size() && ys[j] == t) ++j;
    double fx = double(i) / double(xs.size());
    double fy = double(j) / double(ys.size());
    gap = std::max(gap, std::abs(fx - fy));
  }
  return gap;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidValue("median: empty sample");
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace tlla::stats
