#include "imap/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <json.hpp>

#include "imap/error.hpp"
#include "imap/kernels.hpp"
#include "imap/rng.hpp"

namespace imap::spectral {

namespace {

void deflate(std::span<double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (auto& x : v) x -= mean;
}

double inner(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(inner(a, a)); }

bool normalize(std::span<double> v) {
  const double vn = norm(v);
  if (vn == 0.0) return false;
  for (auto& x : v) x /= vn;
  return true;
}

constexpr std::size_t kKrylovDim = 24;
constexpr int kRestartVectors = 3;
constexpr double kBreakdown = 1e-12;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}


}  // namespace

AttentionOperator::AttentionOperator(const dumpio::LayerRecord& record, int head,
                                     dumpio::AttentionKind kind) {
  if (head < 0 || static_cast<std::size_t>(head) >= record.q_vis.heads) {
    throw Error(ErrorCode::kHeadOutOfRange, "head " + std::to_string(head) + " out of range [0, " +
                                                std::to_string(record.q_vis.heads) + ")");
  }
  const auto h = static_cast<std::size_t>(head);
  d_ = record.q_vis.dim;
  const auto qv = record.q_vis.head(h);
  const auto kv = record.k_vis.head(h);
  q_.assign(qv.begin(), qv.end());
  k_.assign(kv.begin(), kv.end());
  n_ = record.q_vis.rows;
  if (kind == dumpio::AttentionKind::kJoint) {
    const auto qt = record.q_txt.head(h);
    const auto kt = record.k_txt.head(h);
    q_.insert(q_.end(), qt.begin(), qt.end());
    k_.insert(k_.end(), kt.begin(), kt.end());
    n_ += record.q_txt.rows;
  }
}

AttentionOperator::AttentionOperator(std::vector<float> q, std::vector<float> k, std::size_t n,
                                     std::size_t d)
    : q_(std::move(q)), k_(std::move(k)), n_(n), d_(d) {
  if (q_.size() != n * d || k_.size() != n * d) {
    throw Error(ErrorCode::kShapeMismatch, "attention operator q/k must be [n, d]");
  }
}

void AttentionOperator::apply(std::span<const double> x, std::span<double> y) const {
  kernels::attention_apply(q_, k_, n_, d_, 1.0 / std::sqrt(static_cast<double>(d_)), x, y);
}

Lambda2Result second_eigenvalue(const AttentionOperator& op, const Lambda2Options& options) {
  const std::size_t n = op.dim();
  Lambda2Result result;
  if (n <= 1) {
    result.converged = true;
    return result;
  }

  // The deflated operator lives on an (n-1)-dimensional space.
  const std::size_t m = std::min(n - 1, kKrylovDim);
  std::vector<double> start(n), w(n);
  CounterRng rng(options.seed);
  for (auto& x : start) x = rng.normal();
  deflate(start);
  if (!normalize(start)) {
    result.converged = true;
    return result;
  }

  // B x = P A x with P the projector onto the complement of the ones vector.
  auto apply_b = [&](std::span<const double> in, std::span<double> out) {
    op.apply(in, out);
    deflate(out);
    if (!all_finite(out)) {
      throw Error(ErrorCode::kNumericalDivergence, "non-finite Krylov vector");
    }
  };

  std::vector<std::vector<double>> basis(m + 1, std::vector<double>(n));
  Eigen::MatrixXd hess(m + 1, m);
  while (true) {
    hess.setZero();
    basis[0] = start;
    const auto budget = static_cast<std::size_t>(std::max(1, options.max_iter - result.iterations));
    const std::size_t cycle = std::min(m, budget);
    std::size_t built = cycle;
    bool invariant = false;
    for (std::size_t j = 0; j < cycle; ++j) {
      if (options.observer) options.observer(basis[j]);
      apply_b(basis[j], w);
      ++result.iterations;
      const double wn = norm(w);
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i <= j; ++i) {
          const double h = inner(basis[i], w);
          hess(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += h;
          for (std::size_t t = 0; t < n; ++t) w[t] -= h * basis[i][t];
        }
      }
      deflate(w);
      const double hn = norm(w);
      hess(static_cast<Eigen::Index>(j + 1), static_cast<Eigen::Index>(j)) = hn;
      if (hn <= kBreakdown * wn || hn == 0.0) {
        built = j + 1;
        invariant = true;
        break;
      }
      for (std::size_t t = 0; t < n; ++t) basis[j + 1][t] = w[t] / hn;
    }

    const auto k = static_cast<Eigen::Index>(built);
    Eigen::EigenSolver<Eigen::MatrixXd> es(hess.topLeftCorner(k, k));
    if (es.info() != Eigen::Success) {
      throw Error(ErrorCode::kNumericalDivergence, "Ritz eigenproblem failed");
    }
    const auto values = es.eigenvalues();
    const auto vectors = es.eigenvectors();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return std::abs(values[a]) > std::abs(values[b]);
    });
    const Eigen::Index top = order.front();
    result.value = std::abs(values[top]);
    const double residual =
        invariant ? 0.0
                  : hess(k, k - 1) * std::abs(vectors(k - 1, top)) / vectors.col(top).norm();
    if (residual <= options.tol) {
      result.converged = true;
      return result;
    }
    if (result.iterations >= options.max_iter) return result;

    // Restart from the leading Ritz vectors; real and imaginary parts together
    // span the invariant plane of a conjugate pair.
    std::fill(start.begin(), start.end(), 0.0);
    int used = 0;
    for (auto idx : order) {
      if (used == kRestartVectors) break;
      if (values[idx].imag() < 0.0) continue;
      const auto y = vectors.col(idx) / vectors.col(idx).norm();
      for (Eigen::Index i = 0; i < k; ++i) {
        const double c = y[i].real() + y[i].imag();
        const auto& b = basis[static_cast<std::size_t>(i)];
        for (std::size_t t = 0; t < n; ++t) start[t] += c * b[t];
      }
      ++used;
    }
    deflate(start);
    if (!normalize(start)) {
      result.converged = true;
      return result;
    }
  }
}

LayerLambdaProfile layer_lambda2_profile(const dumpio::RecordSource& source,
                                         const std::vector<int>& timesteps,
                                         const Lambda2Options& options) {
  if (timesteps.empty()) {
    throw Error(ErrorCode::kEmptyTimestepSet, "lambda2 profile needs at least one timestep");
  }
  const auto& m = source.manifest();
  for (int t : timesteps) {
    if (std::find(m.timesteps.begin(), m.timesteps.end(), t) == m.timesteps.end()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "timestep " + std::to_string(t) + " is not in the dump");
    }
  }
  std::vector<int> ts = timesteps;
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

  const std::size_t heads = static_cast<std::size_t>(m.num_heads);
  LayerLambdaProfile profile;
  profile.timesteps_used = ts;

  for (int layer : m.layers) {
    std::vector<int> present;
    for (int t : ts) {
      if (m.records.count({t, layer})) present.push_back(t);
    }
    if (present.empty()) continue;

    // [timestep][head], filled in parallel, reduced in fixed order below.
    std::vector<std::vector<Lambda2Result>> values(present.size(),
                                                   std::vector<Lambda2Result>(heads));
    for (std::size_t ti = 0; ti < present.size(); ++ti) {
      const auto record = source.load(present[ti], layer);
      const auto n_heads = static_cast<std::ptrdiff_t>(heads);
      std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
      for (std::ptrdiff_t h = 0; h < n_heads; ++h) {
        try {
          AttentionOperator op(record, static_cast<int>(h), m.attention_kind);
          values[ti][static_cast<std::size_t>(h)] = second_eigenvalue(op, options);
        } catch (...) {
#pragma omp critical
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
    }

    double layer_sum = 0.0;
    for (std::size_t h = 0; h < heads; ++h) {
      double sum = 0.0;
      bool converged = true;
      for (std::size_t ti = 0; ti < present.size(); ++ti) {
        sum += values[ti][h].value;
        converged = converged && values[ti][h].converged;
      }
      const double mean = sum / static_cast<double>(present.size());
      profile.per_head.push_back({layer, static_cast<int>(h), mean, converged});
      layer_sum += mean;
    }
    profile.per_layer[layer] = layer_sum / static_cast<double>(heads);
  }
  return profile;
}

LayerSelection select_layers(const LayerLambdaProfile& profile, double threshold) {
  LayerSelection sel;
  sel.threshold = threshold;
  for (const auto& [layer, value] : profile.per_layer) {
    if (value > threshold) sel.layers.push_back(layer);
  }
  sel.empty_warning = sel.layers.empty();
  return sel;
}

std::string profile_to_json(const LayerLambdaProfile& profile, const LayerSelection& selection) {
  using nlohmann::json;
  json doc;
  json layers = json::array();
  for (const auto& [layer, value] : profile.per_layer) {
    layers.push_back({{"layer", layer}, {"lambda2", value}});
  }
  json heads = json::array();
  for (const auto& h : profile.per_head) {
    heads.push_back(
        {{"layer", h.layer}, {"head", h.head}, {"lambda2", h.lambda2}, {"converged", h.converged}});
  }
  doc["per_layer"] = layers;
  doc["per_head"] = heads;
  doc["timesteps_used"] = profile.timesteps_used;
  doc["threshold"] = selection.threshold;
  doc["selected"] = selection.layers;
  doc["empty_selection"] = selection.empty_warning;
  return doc.dump(2) + "\n";
}

}  // namespace imap::spectral
