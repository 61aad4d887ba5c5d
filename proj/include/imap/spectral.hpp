#pragma once

// Subdominant eigenvalue of row-stochastic attention matrices and the
// layer selection built on it.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "imap/dumpio.hpp"

namespace imap::spectral {

// Implicit A with A_ij = softmax_j(<q_i, k_j> / sqrt(d)). Joint dumps use the
// full visual+text sequence, cross dumps the visual self-attention block.
class AttentionOperator {
 public:
  AttentionOperator(const dumpio::LayerRecord& record, int head, dumpio::AttentionKind kind);
  // Direct construction from row-major [n, d] query/key matrices.
  AttentionOperator(std::vector<float> q, std::vector<float> k, std::size_t n, std::size_t d);

  std::size_t dim() const { return n_; }
  std::size_t head_dim() const { return d_; }
  void apply(std::span<const double> x, std::span<double> y) const;

  std::span<const float> queries() const { return q_; }
  std::span<const float> keys() const { return k_; }

 private:
  std::vector<float> q_;
  std::vector<float> k_;
  std::size_t n_ = 0;
  std::size_t d_ = 0;
};

struct Lambda2Options {
  double tol = 1e-6;
  int max_iter = 1000;
  std::uint64_t seed = 0;
  // Called with each deflated, normalized iterate. Test hook.
  std::function<void(std::span<const double>)> observer;
};

struct Lambda2Result {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

// |lambda_2| of a row-stochastic operator. The known eigenpair (1, ones) is
// projected out of every iterate, then restarted Arnoldi runs on the deflated
// operator B = (I - 11^T/n) A; the answer is the largest-modulus Ritz value.
// Converged once that Ritz pair's residual drops below `tol`. `max_iter` caps
// operator applications; `iterations` counts them.
Lambda2Result second_eigenvalue(const AttentionOperator& op, const Lambda2Options& options = {});

struct HeadLambda {
  int layer = 0;
  int head = 0;
  double lambda2 = 0.0;
  bool converged = true;
};

struct LayerLambdaProfile {
  std::map<int, double> per_layer;
  std::vector<HeadLambda> per_head;  // ascending (layer, head)
  std::vector<int> timesteps_used;
};

// per_head: lambda2 averaged over `timesteps`; per_layer: mean over heads.
LayerLambdaProfile layer_lambda2_profile(const dumpio::RecordSource& source,
                                         const std::vector<int>& timesteps,
                                         const Lambda2Options& options = {});

struct LayerSelection {
  std::vector<int> layers;
  double threshold = 0.0;
  bool empty_warning = false;
};

inline constexpr double kDefaultThreshold = 0.7;
inline constexpr double kHunyuanThreshold = 0.75;

// Layers whose mean lambda2 is strictly greater than `threshold`, ascending.
LayerSelection select_layers(const LayerLambdaProfile& profile, double threshold);

std::string profile_to_json(const LayerLambdaProfile& profile, const LayerSelection& selection);

}  // namespace imap::spectral
