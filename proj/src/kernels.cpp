#include "imap/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace imap::kernels {

namespace {

void attention_row(std::span<const float> q, std::span<const float> k, std::size_t n,
                   std::size_t d, double scale, std::span<const double> x, std::size_t i,
                   std::vector<double>& logits, std::span<double> y) {
  const auto qi = q.subspan(i * d, d);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    logits[j] = scale * dot(qi, k.subspan(j * d, d));
    peak = std::max(peak, logits[j]);
  }
  double mass = 0.0;
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double w = std::exp(logits[j] - peak);
    mass += w;
    acc += w * x[j];
  }
  y[i] = acc / mass;
}

void cluster_moment(std::span<const float> points, std::size_t d,
                    const std::vector<std::uint32_t>& idx, std::size_t c, ClusterMoments& out) {
  auto mean = std::span(out.means).subspan(c * d, d);
  std::fill(mean.begin(), mean.end(), 0.0);
  for (auto p : idx) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += points[p * d + j];
  }
  const double inv = idx.empty() ? 0.0 : 1.0 / static_cast<double>(idx.size());
  for (auto& m : mean) m *= inv;
  double ss = 0.0;
  double dist = 0.0;
  for (auto p : idx) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = points[p * d + j] - mean[j];
      sq += diff * diff;
    }
    ss += sq;
    dist += std::sqrt(sq);
  }
  out.sizes[c] = idx.size();
  out.within_ss[c] = ss;
  out.mean_dist[c] = dist * inv;
}

ClusterMoments make_moments(std::size_t clusters, std::size_t d) {
  ClusterMoments m;
  m.means.assign(clusters * d, 0.0);
  m.sizes.assign(clusters, 0);
  m.within_ss.assign(clusters, 0.0);
  m.mean_dist.assign(clusters, 0.0);
  return m;
}

}  // namespace

void attention_apply(std::span<const float> q, std::span<const float> k, std::size_t n,
                     std::size_t d, double scale, std::span<const double> x, std::span<double> y) {
#pragma omp parallel
  {
    std::vector<double> logits(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      attention_row(q, k, n, d, scale, x, static_cast<std::size_t>(i), logits, y);
    }
  }
}

void attention_apply_serial(std::span<const float> q, std::span<const float> k, std::size_t n,
                            std::size_t d, double scale, std::span<const double> x,
                            std::span<double> y) {
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) attention_row(q, k, n, d, scale, x, i, logits, y);
}

void row_dot(std::span<const float> rows, std::size_t d, std::span<const float> v,
             std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = dot(rows.subspan(static_cast<std::size_t>(i) * d, d), v);
  }
}

void row_dot_serial(std::span<const float> rows, std::size_t d, std::span<const float> v,
                    std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dot(rows.subspan(i * d, d), v);
}

void row_sq_norms(std::span<const float> rows, std::size_t d, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = rows.subspan(static_cast<std::size_t>(i) * d, d);
    out[i] = dot(r, r);
  }
}

void row_sq_norms_serial(std::span<const float> rows, std::size_t d, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto r = rows.subspan(i * d, d);
    out[i] = dot(r, r);
  }
}

ClusterMoments cluster_moments(std::span<const float> points, std::size_t d,
                               const std::vector<std::vector<std::uint32_t>>& members) {
  ClusterMoments out = make_moments(members.size(), d);
  const auto clusters = static_cast<std::ptrdiff_t>(members.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < clusters; ++c) {
    cluster_moment(points, d, members[c], static_cast<std::size_t>(c), out);
  }
  return out;
}

ClusterMoments cluster_moments_serial(std::span<const float> points, std::size_t d,
                                      const std::vector<std::vector<std::uint32_t>>& members) {
  ClusterMoments out = make_moments(members.size(), d);
  for (std::size_t c = 0; c < members.size(); ++c) cluster_moment(points, d, members[c], c, out);
  return out;
}

}  // namespace imap::kernels
