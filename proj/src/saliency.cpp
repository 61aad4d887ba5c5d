#include "imap/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "imap/error.hpp"
#include "imap/kernels.hpp"
#include "imap/rng.hpp"

namespace imap::saliency {

namespace {

struct Plan {
  std::vector<int> timesteps;
  std::vector<int> layers;
  std::vector<std::size_t> concept_rows;  // row of each requested concept in k_con/h_con
  Provenance provenance;
};

std::size_t argmax_first(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Plan plan_request(const dumpio::RecordSource& source, const MapRequest& req) {
  const auto& m = source.manifest();
  Plan plan;
  if (req.concepts.empty()) {
    throw Error(ErrorCode::kEmptyConceptList, "at least one concept is required");
  }
  for (const auto& c : req.concepts) {
    auto idx = m.concept_index(c);
    if (!idx) throw Error(ErrorCode::kConceptNotInManifest, "concept '" + c + "' is not in the dump");
    plan.concept_rows.push_back(*idx);
  }
  if (req.mode == MapMode::kImap && req.top_k < 1) {
    throw Error(ErrorCode::kInvalidArgument, "imap mode requires top_k >= 1");
  }
  if (req.mode == MapMode::kConceptAttn && m.attention_kind != dumpio::AttentionKind::kJoint) {
    throw Error(ErrorCode::kConceptAttnUnavailable,
                "concept attention needs a joint-attention dump with h_con");
  }

  if (req.timesteps) {
    plan.timesteps = *req.timesteps;
    std::sort(plan.timesteps.begin(), plan.timesteps.end());
    plan.timesteps.erase(std::unique(plan.timesteps.begin(), plan.timesteps.end()),
                         plan.timesteps.end());
    for (int t : plan.timesteps) {
      if (!std::binary_search(m.timesteps.begin(), m.timesteps.end(), t)) {
        throw Error(ErrorCode::kInvalidArgument, "timestep " + std::to_string(t) + " is not in the dump");
      }
    }
  } else {
    plan.timesteps = default_timesteps(m.timesteps);
  }
  if (plan.timesteps.empty()) {
    throw Error(ErrorCode::kEmptyTimestepSet, "no timesteps selected");
  }

  Provenance& prov = plan.provenance;
  if (req.layers.automatic) {
    const auto profile = spectral::layer_lambda2_profile(source, plan.timesteps, req.lambda2);
    const auto sel = spectral::select_layers(profile, req.layers.threshold);
    plan.layers = sel.layers;
    prov.layer_threshold = req.layers.threshold;
    prov.layer_lambda2 = profile.per_layer;
  } else {
    plan.layers = req.layers.explicit_layers;
    std::sort(plan.layers.begin(), plan.layers.end());
    plan.layers.erase(std::unique(plan.layers.begin(), plan.layers.end()), plan.layers.end());
    for (int l : plan.layers) {
      if (!std::binary_search(m.layers.begin(), m.layers.end(), l)) {
        throw Error(ErrorCode::kInvalidArgument, "layer " + std::to_string(l) + " is not in the dump");
      }
    }
  }
  if (plan.layers.empty()) throw Error(ErrorCode::kEmptyLayerSet, "no layers selected");

  prov.mode = req.mode;
  prov.timesteps = plan.timesteps;
  prov.layers = plan.layers;
  prov.normalization = req.per_head_normalization;
  prov.assembly = req.assembly;
  prov.surrogate = req.surrogate;
  prov.head_strategy = req.mode == MapMode::kImap ? req.head_strategy : HeadStrategy::kAll;
  prov.metric = req.metric;
  prov.top_k = req.mode == MapMode::kImap ? req.top_k : 0;
  prov.softmax = req.apply_softmax_over_concepts;
  return plan;
}

std::vector<int> all_heads(int n) {
  std::vector<int> heads(static_cast<std::size_t>(n));
  for (int h = 0; h < n; ++h) heads[static_cast<std::size_t>(h)] = h;
  return heads;
}

std::vector<int> choose_heads(const dumpio::LayerRecord& record, const dumpio::DumpManifest& m,
                              const MapRequest& req, dumpio::RecordKey key) {
  std::vector<int> heads;
  if (req.mode != MapMode::kImap || req.head_strategy == HeadStrategy::kAll) {
    return all_heads(m.num_heads);
  }
  if (req.head_strategy == HeadStrategy::kSeparation) {
    heads = separation::select_motion_heads(record, req.metric, req.top_k, m.frames_F, m.height_H,
                                            m.width_W)
                .selected;
  } else {
    const std::uint64_t seed = mix64(req.random_seed ^ mix64(
        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(key.timestep)) << 32) |
        static_cast<std::uint32_t>(key.layer)));
    heads = separation::random_heads(m.num_heads, std::min(req.top_k, m.num_heads), seed);
  }
  std::sort(heads.begin(), heads.end());
  return heads;
}

std::vector<SaliencyVolume> finish(const Plan& plan, const MapRequest& req, const Geometry& geo,
                                   std::vector<std::vector<double>>& sums, std::size_t count) {
  std::vector<Volume> volumes;
  for (auto& sum : sums) {
    Volume v(geo.frames, geo.height, geo.width);
    for (std::size_t i = 0; i < sum.size(); ++i) {
      v.values[i] = static_cast<float>(sum[i] / static_cast<double>(count));
    }
    volumes.push_back(std::move(v));
  }
  if (req.apply_softmax_over_concepts) volumes = softmax_over_concepts(volumes);
  std::vector<SaliencyVolume> out;
  for (std::size_t c = 0; c < volumes.size(); ++c) {
    SaliencyVolume sv{req.concepts[c], std::move(volumes[c]), plan.provenance};
    sv.provenance.head_map_count = count;
    out.push_back(std::move(sv));
  }
  return out;
}

Volume head_map(const dumpio::LayerRecord& record, std::size_t head, std::size_t concept_row,
                const MapRequest& req, const Geometry& geo) {
  const std::size_t d = record.h_vis.dim;
  std::vector<std::uint32_t> surrogates;
  if (req.surrogate == SurrogateMode::kHiNorm) {
    surrogates = hinorm_surrogates(record.h_vis.head(head), d, geo);
  } else {
    surrogates = qk_match_surrogates(record.q_vis.head(head), d,
                                     record.k_con.row(head, concept_row), geo, req.surrogate);
  }
  return normalize_map(gram_column_map(record.h_vis.head(head), d, surrogates, geo, req.assembly),
                       req.per_head_normalization);
}

// Shared loop for the two baselines: score(record, head, concept_row, out)
// fills one per-token double buffer.
template <typename Score>
std::vector<SaliencyVolume> baseline_map(const dumpio::RecordSource& source,
                                         const MapRequest& req, Score score) {
  const auto& m = source.manifest();
  Plan plan = plan_request(source, req);
  const Geometry geo = geometry_of(m);
  std::vector<std::vector<double>> sums(req.concepts.size(), std::vector<double>(geo.tokens(), 0.0));
  std::vector<double> buffer(geo.tokens());
  std::size_t count = 0;
  for (int t : plan.timesteps) {
    for (int l : plan.layers) {
      const auto record = source.load(t, l);
      const auto heads = all_heads(m.num_heads);
      plan.provenance.heads[{t, l}] = heads;
      for (int h : heads) {
        for (std::size_t c = 0; c < req.concepts.size(); ++c) {
          score(record, static_cast<std::size_t>(h), plan.concept_rows[c], buffer);
          for (std::size_t p = 0; p < buffer.size(); ++p) sums[c][p] += buffer[p];
        }
        ++count;
      }
    }
  }
  return finish(plan, req, geo, sums, count);
}

}  // namespace

Geometry geometry_of(const dumpio::DumpManifest& m) {
  return {static_cast<std::size_t>(m.frames_F), static_cast<std::size_t>(m.height_H),
          static_cast<std::size_t>(m.width_W)};
}

std::string_view to_string(SurrogateMode m) {
  switch (m) {
    case SurrogateMode::kQkFrame: return "qk_frame";
    case SurrogateMode::kQkVideo: return "qk_video";
    case SurrogateMode::kHiNorm: return "hinorm";
  }
  return "";
}
std::string_view to_string(Assembly a) {
  return a == Assembly::kFrameSliced ? "frame_sliced" : "full_column";
}
std::string_view to_string(Normalization n) { return n == Normalization::kMinMax ? "minmax" : "none"; }
std::string_view to_string(MapMode m) {
  switch (m) {
    case MapMode::kAuto: return "auto";
    case MapMode::kImap: return "imap";
    case MapMode::kCrossAttn: return "cross_attn";
    case MapMode::kConceptAttn: return "concept_attn";
  }
  return "";
}
std::string_view to_string(HeadStrategy s) {
  switch (s) {
    case HeadStrategy::kSeparation: return "separation";
    case HeadStrategy::kRandom: return "random";
    case HeadStrategy::kAll: return "all";
  }
  return "";
}

std::vector<std::uint32_t> qk_match_surrogates(std::span<const float> q_vis, std::size_t d,
                                               std::span<const float> concept_key,
                                               const Geometry& geo, SurrogateMode mode) {
  if (concept_key.size() != d || q_vis.size() != geo.tokens() * d) {
    throw Error(ErrorCode::kShapeMismatch, "query/key shapes do not match the geometry");
  }
  std::vector<double> scores(geo.tokens());
  kernels::row_dot(q_vis, d, concept_key, scores);
  std::vector<std::uint32_t> out(geo.frames);
  if (mode == SurrogateMode::kQkVideo) {
    std::fill(out.begin(), out.end(), static_cast<std::uint32_t>(argmax_first(scores)));
    return out;
  }
  const std::size_t fs = geo.frame_size();
  for (std::size_t f = 0; f < geo.frames; ++f) {
    out[f] = static_cast<std::uint32_t>(f * fs + argmax_first(std::span(scores).subspan(f * fs, fs)));
  }
  return out;
}

std::vector<std::uint32_t> hinorm_surrogates(std::span<const float> h_vis, std::size_t d,
                                             const Geometry& geo) {
  if (h_vis.size() != geo.tokens() * d) {
    throw Error(ErrorCode::kShapeMismatch, "embedding shape does not match the geometry");
  }
  std::vector<double> norms(geo.tokens());
  kernels::row_sq_norms(h_vis, d, norms);
  std::vector<std::uint32_t> out(geo.frames);
  const std::size_t fs = geo.frame_size();
  for (std::size_t f = 0; f < geo.frames; ++f) {
    out[f] = static_cast<std::uint32_t>(f * fs + argmax_first(std::span(norms).subspan(f * fs, fs)));
  }
  return out;
}

Volume gram_column_map(std::span<const float> h_vis, std::size_t d,
                       std::span<const std::uint32_t> surrogates, const Geometry& geo,
                       Assembly assembly) {
  const std::size_t P = geo.tokens();
  const std::size_t fs = geo.frame_size();
  if (h_vis.size() != P * d || surrogates.size() != geo.frames) {
    throw Error(ErrorCode::kShapeMismatch, "gram column inputs do not match the geometry");
  }
  for (auto s : surrogates) {
    if (s >= P) throw Error(ErrorCode::kInvalidArgument, "surrogate index out of range");
  }
  Volume out(geo.frames, geo.height, geo.width);
  if (assembly == Assembly::kFrameSliced) {
    std::vector<double> col(fs);
    for (std::size_t f = 0; f < geo.frames; ++f) {
      const auto key = h_vis.subspan(surrogates[f] * d, d);
      kernels::row_dot(h_vis.subspan(f * fs * d, fs * d), d, key, col);
      for (std::size_t i = 0; i < fs; ++i) out.values[f * fs + i] = static_cast<float>(col[i]);
    }
  } else {
    std::vector<double> col(P), acc(P, 0.0);
    for (std::size_t f = 0; f < geo.frames; ++f) {
      kernels::row_dot(h_vis, d, h_vis.subspan(surrogates[f] * d, d), col);
      for (std::size_t p = 0; p < P; ++p) acc[p] += col[p];
    }
    for (std::size_t p = 0; p < P; ++p) {
      out.values[p] = static_cast<float>(acc[p] / static_cast<double>(geo.frames));
    }
  }
  return out;
}

Volume normalize_map(const Volume& volume, Normalization method) {
  if (method == Normalization::kNone || volume.values.empty()) return volume;
  const auto [lo_it, hi_it] = std::minmax_element(volume.values.begin(), volume.values.end());
  const double lo = *lo_it;
  const double range = static_cast<double>(*hi_it) - lo;
  Volume out = volume;
  for (auto& v : out.values) {
    v = range > 0.0 ? static_cast<float>((v - lo) / range) : 0.0f;
  }
  return out;
}

std::vector<Volume> softmax_over_concepts(const std::vector<Volume>& volumes) {
  if (volumes.empty()) return {};
  for (const auto& v : volumes) {
    if (!v.same_shape(volumes.front())) {
      throw Error(ErrorCode::kShapeMismatch, "softmax over concepts needs equal shapes");
    }
  }
  std::vector<Volume> out = volumes;
  const std::size_t n = volumes.front().size();
  std::vector<double> e(volumes.size());
  for (std::size_t i = 0; i < n; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (const auto& v : volumes) peak = std::max(peak, static_cast<double>(v.values[i]));
    double mass = 0.0;
    for (std::size_t c = 0; c < volumes.size(); ++c) {
      e[c] = std::exp(static_cast<double>(volumes[c].values[i]) - peak);
      mass += e[c];
    }
    for (std::size_t c = 0; c < volumes.size(); ++c) {
      out[c].values[i] = static_cast<float>(e[c] / mass);
    }
  }
  return out;
}

std::vector<int> default_timesteps(const std::vector<int>& timesteps) {
  if (timesteps.empty()) return {};
  std::size_t drop = (timesteps.size() * 3) / 10;
  drop = std::min(drop, timesteps.size() - 1);
  return {timesteps.begin() + static_cast<std::ptrdiff_t>(drop), timesteps.end()};
}

std::vector<SaliencyVolume> compute_map(const dumpio::RecordSource& source,
                                        const MapRequest& request) {
  if (request.mode == MapMode::kCrossAttn) return cross_attention_map(source, request);
  if (request.mode == MapMode::kConceptAttn) return concept_attention_map(source, request);

  const auto& m = source.manifest();
  Plan plan = plan_request(source, request);
  const Geometry geo = geometry_of(m);
  const std::size_t C = request.concepts.size();
  std::vector<std::vector<double>> sums(C, std::vector<double>(geo.tokens(), 0.0));
  std::size_t count = 0;

  for (int t : plan.timesteps) {
    for (int l : plan.layers) {
      const auto record = source.load(t, l);
      const auto heads = choose_heads(record, m, request, {t, l});
      plan.provenance.heads[{t, l}] = heads;

      // [head slot][concept] maps computed in parallel, reduced in head order.
      std::vector<std::vector<Volume>> maps(heads.size(), std::vector<Volume>(C));
      const auto jobs = static_cast<std::ptrdiff_t>(heads.size() * C);
      std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
      for (std::ptrdiff_t j = 0; j < jobs; ++j) {
        const auto slot = static_cast<std::size_t>(j) / C;
        const auto c = static_cast<std::size_t>(j) % C;
        try {
          maps[slot][c] = head_map(record, static_cast<std::size_t>(heads[slot]),
                                   plan.concept_rows[c], request, geo);
        } catch (...) {
#pragma omp critical
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);

      for (std::size_t slot = 0; slot < heads.size(); ++slot) {
        for (std::size_t c = 0; c < C; ++c) {
          const auto& v = maps[slot][c].values;
          for (std::size_t p = 0; p < v.size(); ++p) sums[c][p] += v[p];
        }
        ++count;
      }
    }
  }
  return finish(plan, request, geo, sums, count);
}

std::vector<SaliencyVolume> cross_attention_map(const dumpio::RecordSource& source,
                                                const MapRequest& request) {
  MapRequest req = request;
  req.mode = MapMode::kCrossAttn;
  return baseline_map(source, req,
                      [](const dumpio::LayerRecord& r, std::size_t head, std::size_t row,
                         std::vector<double>& out) {
                        const std::size_t d = r.q_vis.dim;
                        kernels::row_dot(r.q_vis.head(head), d, r.k_con.row(head, row), out);
                        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
                        for (auto& v : out) v *= scale;
                      });
}

std::vector<SaliencyVolume> concept_attention_map(const dumpio::RecordSource& source,
                                                  const MapRequest& request) {
  MapRequest req = request;
  req.mode = MapMode::kConceptAttn;
  return baseline_map(source, req,
                      [](const dumpio::LayerRecord& r, std::size_t head, std::size_t row,
                         std::vector<double>& out) {
                        if (!r.h_con) {
                          throw Error(ErrorCode::kConceptAttnUnavailable,
                                      "record has no h_con chunk");
                        }
                        kernels::row_dot(r.h_vis.head(head), r.h_vis.dim, r.h_con->row(head, row),
                                         out);
                      });
}

}  // namespace imap::saliency
