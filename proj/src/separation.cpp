#include "imap/separation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "imap/error.hpp"
#include "imap/kernels.hpp"
#include "imap/rng.hpp"

namespace imap::separation {

namespace {

using Members = std::vector<std::vector<std::uint32_t>>;

Members group(std::span<const std::uint32_t> labels, std::size_t clusters) {
  Members members(clusters);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= clusters) {
      throw Error(ErrorCode::kInvalidArgument, "cluster label out of range");
    }
    members[labels[i]].push_back(static_cast<std::uint32_t>(i));
  }
  for (const auto& m : members) {
    if (m.empty()) throw Error(ErrorCode::kInvalidArgument, "every cluster needs at least one point");
  }
  return members;
}

struct Scatter {
  double between = 0.0;  // tr(S_B)
  double within = 0.0;   // tr(S_W)
};

Scatter scatter(const kernels::ClusterMoments& mom, std::size_t d, std::size_t n) {
  const std::size_t clusters = mom.sizes.size();
  std::vector<double> global(d, 0.0);
  for (std::size_t c = 0; c < clusters; ++c) {
    for (std::size_t j = 0; j < d; ++j) global[j] += mom.sizes[c] * mom.means[c * d + j];
  }
  for (auto& g : global) g /= static_cast<double>(n);
  Scatter s;
  for (std::size_t c = 0; c < clusters; ++c) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = mom.means[c * d + j] - global[j];
      sq += diff * diff;
    }
    s.between += mom.sizes[c] * sq;
    s.within += mom.within_ss[c];
  }
  return s;
}

double davies_bouldin(const kernels::ClusterMoments& mom, std::size_t d) {
  const std::size_t clusters = mom.sizes.size();
  double total = 0.0;
  for (std::size_t i = 0; i < clusters; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < clusters; ++j) {
      if (i == j) continue;
      double sq = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = mom.means[i * d + t] - mom.means[j * d + t];
        sq += diff * diff;
      }
      const double spread = mom.mean_dist[i] + mom.mean_dist[j];
      double ratio;
      if (spread == 0.0) {
        ratio = 0.0;
      } else if (sq == 0.0) {
        ratio = std::numeric_limits<double>::infinity();
      } else {
        ratio = spread / std::sqrt(sq);
      }
      worst = std::max(worst, ratio);
    }
    total += worst;
  }
  return total / static_cast<double>(clusters);
}

double distance(std::span<const float> points, std::size_t d, std::uint32_t a, std::uint32_t b) {
  double sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = static_cast<double>(points[a * d + j]) - points[b * d + j];
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

// Deterministic stratified subsample; clusters at or below the cap are kept
// whole.
Members subsample(const Members& members, std::size_t cap) {
  Members out(members.size());
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto idx = members[c];
    if (idx.size() > cap) {
      CounterRng rng(stream_key(0, "silhouette/" + std::to_string(c)));
      for (std::size_t i = 0; i < cap; ++i) {
        const auto j = i + rng.below(idx.size() - i);
        std::swap(idx[i], idx[j]);
      }
      idx.resize(cap);
      std::sort(idx.begin(), idx.end());
    }
    out[c] = std::move(idx);
  }
  return out;
}

double silhouette(std::span<const float> points, std::size_t d, const Members& members) {
  std::vector<std::uint32_t> order;
  std::vector<std::uint32_t> owner;
  for (std::size_t c = 0; c < members.size(); ++c) {
    for (auto p : members[c]) {
      order.push_back(p);
      owner.push_back(static_cast<std::uint32_t>(c));
    }
  }
  const auto n = static_cast<std::ptrdiff_t>(order.size());
  std::vector<double> s(order.size(), 0.0);
#pragma omp parallel
  {
    std::vector<double> sums(members.size());
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const std::uint32_t own = owner[i];
      if (members[own].size() < 2) continue;  // singleton scores 0
      std::fill(sums.begin(), sums.end(), 0.0);
      for (std::ptrdiff_t j = 0; j < n; ++j) {
        if (j == i) continue;
        sums[owner[j]] += distance(points, d, order[i], order[j]);
      }
      const double a = sums[own] / static_cast<double>(members[own].size() - 1);
      double b = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < members.size(); ++c) {
        if (c == own) continue;
        b = std::min(b, sums[c] / static_cast<double>(members[c].size()));
      }
      const double denom = std::max(a, b);
      s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
  }
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

}  // namespace

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::kChi: return "chi";
    case Metric::kDbi: return "dbi";
    case Metric::kFisher: return "fisher";
    case Metric::kSilhouette: return "silhouette";
  }
  return "chi";
}

std::optional<Metric> parse_metric(std::string_view name) {
  if (name == "chi") return Metric::kChi;
  if (name == "dbi") return Metric::kDbi;
  if (name == "fisher") return Metric::kFisher;
  if (name == "silhouette") return Metric::kSilhouette;
  return std::nullopt;
}

double separation_score(std::span<const float> points, std::size_t d,
                        std::span<const std::uint32_t> labels, std::size_t clusters,
                        Metric metric) {
  if (clusters < 2) {
    throw Error(ErrorCode::kSingleFrame, "separation needs at least two frames");
  }
  if (points.size() != labels.size() * d) {
    throw Error(ErrorCode::kShapeMismatch, "points and labels disagree");
  }
  const Members members = group(labels, clusters);
  const std::size_t n = labels.size();

  if (metric == Metric::kSilhouette) {
    const bool large = n > clusters * kSilhouettePointsPerCluster;
    return silhouette(points, d, large ? subsample(members, kSilhouettePointsPerCluster) : members);
  }

  const auto mom = kernels::cluster_moments(points, d, members);
  const Scatter s = scatter(mom, d, n);
  switch (metric) {
    case Metric::kChi:
      if (s.within == 0.0) return kPerfectSeparation;
      return (s.between / static_cast<double>(clusters - 1)) /
             (s.within / static_cast<double>(n - clusters));
    case Metric::kFisher:
      if (s.within == 0.0) return kPerfectSeparation;
      return s.between / s.within;
    case Metric::kDbi:
      if (s.within == 0.0) return 0.0;
      return davies_bouldin(mom, d);
    case Metric::kSilhouette:
      break;
  }
  return 0.0;
}

double frame_separation_score(std::span<const float> points, std::size_t d, std::size_t frames,
                              std::size_t frame_size, Metric metric) {
  std::vector<std::uint32_t> labels(frames * frame_size);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    labels[p] = static_cast<std::uint32_t>(p / frame_size);
  }
  return separation_score(points, d, labels, frames, metric);
}

std::vector<int> rank_heads(std::span<const double> scores, Metric metric) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  const bool desc = higher_is_better(metric);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return desc ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return order;
}

HeadSeparationReport select_motion_heads(const dumpio::LayerRecord& record, Metric metric, int k,
                                         int frames, int height, int width) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "top-k must be at least 1");
  if (frames < 2) throw Error(ErrorCode::kSingleFrame, "separation needs at least two frames");
  const auto& h = record.h_vis;
  const std::size_t frame_size = static_cast<std::size_t>(height) * width;
  if (h.rows != static_cast<std::size_t>(frames) * frame_size) {
    throw Error(ErrorCode::kShapeMismatch, "h_vis rows do not equal F*H*W");
  }

  HeadSeparationReport report;
  report.metric = metric;
  report.scores.assign(h.heads, 0.0);
  std::vector<std::uint32_t> labels(h.rows);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    labels[p] = static_cast<std::uint32_t>(p / frame_size);
  }
  const auto heads = static_cast<std::ptrdiff_t>(h.heads);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t head = 0; head < heads; ++head) {
    try {
      report.scores[static_cast<std::size_t>(head)] = separation_score(
          h.head(static_cast<std::size_t>(head)), h.dim, labels, static_cast<std::size_t>(frames),
          metric);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  report.selected = rank_heads(report.scores, metric);
  report.k = std::min<int>(k, static_cast<int>(h.heads));
  report.selected.resize(static_cast<std::size_t>(report.k));
  return report;
}

std::vector<int> random_heads(int num_heads, int k, std::uint64_t seed) {
  if (k < 0 || k > num_heads) {
    throw Error(ErrorCode::kInvalidArgument, "random head count must be in [0, num_heads]");
  }
  std::vector<int> pool(static_cast<std::size_t>(num_heads));
  std::iota(pool.begin(), pool.end(), 0);
  CounterRng rng(stream_key(seed, "random_heads"));
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(num_heads - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

std::string report_to_json(const HeadSeparationReport& report, int timestep, int layer) {
  using nlohmann::json;
  json scores = json::array();
  for (std::size_t h = 0; h < report.scores.size(); ++h) {
    const double s = report.scores[h];
    // JSON has no infinity; the sentinel is written as a string.
    scores.push_back({{"head", h}, {"score", std::isinf(s) ? json("inf") : json(s)}});
  }
  json doc{{"timestep", timestep},
           {"layer", layer},
           {"metric", metric_name(report.metric)},
           {"k", report.k},
           {"scores", scores},
           {"selected", report.selected}};
  return doc.dump(2) + "\n";
}

}  // namespace imap::separation
