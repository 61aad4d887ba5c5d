#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP version and a serial
// reference; both compute every output element with the same sequence of
// floating-point operations, so their results are bitwise equal at any
// thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace imap::kernels {

inline double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

// y = A x with A_ij = softmax_j(scale * <q_i, k_j>). q and k are [n, d]
// row-major. A is never materialized.
void attention_apply(std::span<const float> q, std::span<const float> k, std::size_t n,
                     std::size_t d, double scale, std::span<const double> x, std::span<double> y);
void attention_apply_serial(std::span<const float> q, std::span<const float> k, std::size_t n,
                            std::size_t d, double scale, std::span<const double> x,
                            std::span<double> y);

// out[i] = <rows_i, v> for every row of a [n, d] matrix.
void row_dot(std::span<const float> rows, std::size_t d, std::span<const float> v,
             std::span<double> out);
void row_dot_serial(std::span<const float> rows, std::size_t d, std::span<const float> v,
                    std::span<double> out);

// out[i] = ||rows_i||^2.
void row_sq_norms(std::span<const float> rows, std::size_t d, std::span<double> out);
void row_sq_norms_serial(std::span<const float> rows, std::size_t d, std::span<double> out);

// Per-cluster first and second moments of a point set.
struct ClusterMoments {
  std::vector<double> means;       // [clusters, d]
  std::vector<std::size_t> sizes;  // [clusters]
  std::vector<double> within_ss;   // sum of squared distances to the cluster mean
  std::vector<double> mean_dist;   // mean Euclidean distance to the cluster mean
};

// `members[c]` lists the point indices of cluster c in ascending order.
ClusterMoments cluster_moments(std::span<const float> points, std::size_t d,
                               const std::vector<std::vector<std::uint32_t>>& members);
ClusterMoments cluster_moments_serial(std::span<const float> points, std::size_t d,
                                      const std::vector<std::vector<std::uint32_t>>& members);

}  // namespace imap::kernels
