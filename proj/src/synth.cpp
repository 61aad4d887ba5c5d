#include "imap/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "imap/error.hpp"
#include "imap/half.hpp"
#include "imap/rng.hpp"

namespace imap::synth {

using nlohmann::json;

namespace {

std::string key_path(int t, int l, std::string_view tensor, int head) {
  return "t" + std::to_string(t) + "/l" + std::to_string(l) + "/" + std::string(tensor) + "/h" +
         std::to_string(head);
}

[[noreturn]] void spec_error(const std::string& msg) { throw Error(ErrorCode::kSpecError, msg); }

double draw_eps(const SynthSpec& spec, std::uint64_t seed, int layer, int head) {
  CounterRng rng(stream_key(seed, "eps/l" + std::to_string(layer) + "/h" + std::to_string(head)));
  const bool informative = is_informative_layer(spec, layer);
  const double lo = informative ? spec.eps_min : spec.eps_uninformative_min;
  const double hi = informative ? spec.eps_max : spec.eps_uninformative_max;
  return lo + (hi - lo) * rng.uniform();
}

std::vector<int> draw_motion_heads(const SynthSpec& spec, std::uint64_t seed, int t, int l) {
  std::vector<int> pool(static_cast<std::size_t>(spec.heads));
  std::iota(pool.begin(), pool.end(), 0);
  CounterRng rng(stream_key(seed, "t" + std::to_string(t) + "/l" + std::to_string(l) + "/motion_heads"));
  const int k = spec.motion_heads_per_record;
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(spec.heads - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

void fill_noise(std::span<float> out, std::size_t d, std::size_t begin, std::size_t end,
                double sigma, std::uint64_t key) {
  CounterRng rng(key);
  const std::size_t rows = out.size() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = begin; j < end; ++j) {
      out[r * d + j] = static_cast<float>(sigma * rng.normal());
    }
  }
}

void round_to_half(HeadTensor& t) {
  for (auto& v : t.data) v = half_to_float(float_to_half(v));
}

}  // namespace

SynthSpec preset_spec(std::string_view preset) {
  SynthSpec s;
  s.preset = std::string(preset);
  if (preset == "combined") return s;
  if (preset == "planted-spectrum") {
    s.plant_surrogate = false;
    s.plant_motion = false;
    s.frames = 2;
    s.head_dim = 48;
    s.heads = 4;
    s.layers = 2;
    s.timesteps = 2;
    s.eps_min = 0.1;
    s.eps_max = 0.9;
    return s;
  }
  if (preset == "planted-motion") {
    s.plant_spectrum = false;
    s.plant_surrogate = false;
    s.head_dim = 32;
    s.layers = 2;
    s.timesteps = 2;
    return s;
  }
  if (preset == "planted-surrogate") {
    s.plant_spectrum = false;
    s.plant_motion = false;
    s.head_dim = 32;
    s.heads = 4;
    s.layers = 2;
    s.timesteps = 2;
    return s;
  }
  spec_error("unknown preset '" + std::string(preset) + "'");
}

void apply_geometry(SynthSpec& spec, std::string_view geometry) {
  std::vector<int> values;
  std::size_t pos = 0;
  while (pos <= geometry.size()) {
    const std::size_t comma = std::min(geometry.find(',', pos), geometry.size());
    const std::string_view part = geometry.substr(pos, comma - pos);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size() || part.empty()) {
      spec_error("geometry must be F,H,W,d,heads,layers,timesteps; got '" + std::string(geometry) + "'");
    }
    values.push_back(v);
    pos = comma + 1;
  }
  if (values.size() != 7) spec_error("geometry needs exactly 7 integers");
  spec.frames = values[0];
  spec.height = values[1];
  spec.width = values[2];
  spec.head_dim = values[3];
  spec.heads = values[4];
  spec.layers = values[5];
  spec.timesteps = values[6];
}

bool is_informative_layer(const SynthSpec& spec, int layer) {
  return !(spec.plant_spectrum && spec.layers >= 3 && layer % 3 == 2);
}

void check_spec(const SynthSpec& spec) {
  for (auto [v, name] : {std::pair{spec.frames, "frames"}, {spec.height, "height"},
                         {spec.width, "width"}, {spec.head_dim, "head_dim"}, {spec.heads, "heads"},
                         {spec.layers, "layers"}, {spec.timesteps, "timesteps"},
                         {spec.temporal_compression, "temporal_compression"},
                         {spec.spatial_patch, "spatial_patch"}}) {
    if (v < 1) spec_error(std::string(name) + " must be positive");
  }
  if (spec.text_tokens < 0) spec_error("text_tokens must be non-negative");
  if (spec.concepts.empty()) spec_error("at least one concept is required");
  if (!(spec.spacing >= 0.0)) spec_error("spacing must be >= 0");
  if (!(spec.surrogate_margin > 0.0)) spec_error("surrogate margin must be positive");
  for (double e : {spec.eps_min, spec.eps_max, spec.eps_uninformative_min, spec.eps_uninformative_max}) {
    if (!(e > 0.0 && e < 1.0)) spec_error("planted eps must lie in (0, 1)");
  }
  if (spec.eps_min > spec.eps_max || spec.eps_uninformative_min > spec.eps_uninformative_max) {
    spec_error("eps range is inverted");
  }
  const int c = static_cast<int>(spec.concepts.size());
  const long n = static_cast<long>(spec.frames) * spec.height * spec.width + spec.text_tokens;
  if (spec.plant_spectrum && spec.head_dim < n + c) {
    spec_error("planted spectra need head_dim >= tokens + concepts (" + std::to_string(n + c) + ")");
  }
  if (spec.head_dim < c + 1) spec_error("head_dim too small for the concept directions");
  if (spec.plant_motion) {
    if (spec.frames < 2) spec_error("planted motion needs at least two frames");
    if (spec.head_dim < spec.frames + 2) spec_error("planted motion needs head_dim >= frames + 2");
    if (spec.motion_heads_per_record < 1 || spec.motion_heads_per_record > spec.heads) {
      spec_error("motion heads per record must be in [1, heads]");
    }
  }
}

MaskVolume moving_square(std::size_t frames, std::size_t height, std::size_t width) {
  MaskVolume m{frames, height, width, std::vector<std::uint8_t>(frames * height * width, 0)};
  const std::size_t sh = std::max<std::size_t>(1, height / 2);
  const std::size_t sw = std::max<std::size_t>(1, width / 2);
  const std::size_t y0 = (height - sh) / 2;
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t x0 =
        frames > 1 ? (f * (width - sw) + (frames - 1) / 2) / (frames - 1) : (width - sw) / 2;
    for (std::size_t y = y0; y < y0 + sh; ++y) {
      for (std::size_t x = x0; x < x0 + sw; ++x) m.cells[(f * height + y) * width + x] = 1;
    }
  }
  return m;
}

PlantedDump generate_planted_dump(const SynthSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  const auto F = static_cast<std::size_t>(spec.frames);
  const auto fs = static_cast<std::size_t>(spec.height) * spec.width;
  const std::size_t P = F * fs;
  const auto T = static_cast<std::size_t>(spec.text_tokens);
  const std::size_t N = P + T;
  const auto C = spec.concepts.size();
  const auto d = static_cast<std::size_t>(spec.head_dim);
  const std::size_t concept_dim0 = d - C;

  dumpio::DumpManifest manifest;
  manifest.attention_kind = dumpio::AttentionKind::kJoint;
  for (int i = 0; i < spec.timesteps; ++i) manifest.timesteps.push_back(10 * i);
  for (int l = 0; l < spec.layers; ++l) manifest.layers.push_back(l);
  manifest.num_heads = spec.heads;
  manifest.frames_F = spec.frames;
  manifest.height_H = spec.height;
  manifest.width_W = spec.width;
  manifest.head_dim_d = spec.head_dim;
  manifest.text_token_count = spec.text_tokens;
  manifest.concepts = spec.concepts;
  manifest.temporal_compression = spec.temporal_compression;
  manifest.spatial_patch = spec.spatial_patch;
  manifest.dtype = spec.dtype;

  PlantedTruth truth;
  truth.seed = seed;
  truth.num_heads = spec.heads;
  truth.frames = F;
  truth.height = static_cast<std::size_t>(spec.height);
  truth.width = static_cast<std::size_t>(spec.width);
  truth.motion_mask = moving_square(F, truth.height, truth.width);
  const MaskVolume& mask = truth.motion_mask;

  std::vector<std::vector<std::uint32_t>> mask_tokens(F);
  for (std::size_t p = 0; p < P; ++p) {
    if (mask.cells[p]) mask_tokens[p / fs].push_back(static_cast<std::uint32_t>(p));
  }

  if (spec.plant_spectrum) {
    for (int l = 0; l < spec.layers; ++l) {
      for (int h = 0; h < spec.heads; ++h) truth.planted_lambda2[{l, h}] = 1.0 - draw_eps(spec, seed, l, h);
    }
  }

  // Motion-head embedding layout: frame means on dims [0, F), the region
  // direction on dim F, isotropic noise on the rest.
  const std::size_t region_dim = F;
  const std::size_t noise_begin = spec.plant_motion ? F + 1 : 0;
  const double sigma = 1.0 / std::sqrt(static_cast<double>(d - noise_begin));
  const double frame_radius = spec.spacing * sigma / std::sqrt(2.0);

  std::map<dumpio::RecordKey, dumpio::LayerRecord> records;
  for (int t : manifest.timesteps) {
    for (int l : manifest.layers) {
      dumpio::LayerRecord rec = dumpio::make_empty_record(manifest);
      const std::string rp = "t" + std::to_string(t) + "/l" + std::to_string(l);

      // One planted surrogate per (frame, concept), shared by all heads.
      std::vector<std::vector<std::uint32_t>> surrogate(C, std::vector<std::uint32_t>(F));
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t f = 0; f < F; ++f) {
          CounterRng rng(stream_key(seed, rp + "/surrogate/f" + std::to_string(f) + "/c" + std::to_string(c)));
          if (spec.plant_motion) {
            const auto& cand = mask_tokens[f];
            surrogate[c][f] = cand[rng.below(cand.size())];
          } else {
            surrogate[c][f] = static_cast<std::uint32_t>(f * fs + rng.below(fs));
          }
        }
      }

      std::vector<int> motion;
      if (spec.plant_motion && is_informative_layer(spec, l)) {
        motion = draw_motion_heads(spec, seed, t, l);
        truth.motion_heads[{t, l}] = motion;
      }

      for (int h = 0; h < spec.heads; ++h) {
        const auto hh = static_cast<std::size_t>(h);
        auto q_vis = rec.q_vis.head(hh);
        auto k_vis = rec.k_vis.head(hh);
        auto q_txt = rec.q_txt.head(hh);
        auto k_txt = rec.k_txt.head(hh);

        if (spec.plant_spectrum) {
          // Diagonal logit L with zero off-diagonal gives the softmax rows
          // (1-eps)I + (eps/N)J.
          const double eps = 1.0 - truth.planted_lambda2.at({l, h});
          const double logit = std::log((1.0 - eps) * static_cast<double>(N) / eps + 1.0);
          const auto a = static_cast<float>(std::sqrt(logit * std::sqrt(static_cast<double>(d))));
          for (std::size_t i = 0; i < P; ++i) {
            q_vis[i * d + i] = a;
            k_vis[i * d + i] = a;
          }
          for (std::size_t j = 0; j < T; ++j) {
            q_txt[j * d + P + j] = a;
            k_txt[j * d + P + j] = a;
          }
        } else {
          fill_noise(q_vis, d, 0, concept_dim0, 1.0, stream_key(seed, key_path(t, l, "q_vis", h)));
          fill_noise(k_vis, d, 0, concept_dim0, 1.0, stream_key(seed, key_path(t, l, "k_vis", h)));
          fill_noise(q_txt, d, 0, concept_dim0, 1.0, stream_key(seed, key_path(t, l, "q_txt", h)));
          fill_noise(k_txt, d, 0, concept_dim0, 1.0, stream_key(seed, key_path(t, l, "k_txt", h)));
        }

        // Concept directions are unit vectors orthogonal to every visual and
        // text key, so they never disturb the attention matrix.
        for (std::size_t c = 0; c < C; ++c) {
          rec.k_con.row(hh, c)[concept_dim0 + c] = 1.0f;
          CounterRng rng(stream_key(seed, key_path(t, l, "q_concept", h) + "/c" + std::to_string(c)));
          for (std::size_t p = 0; p < P; ++p) {
            q_vis[p * d + concept_dim0 + c] = static_cast<float>(rng.uniform());
          }
          if (spec.plant_surrogate) {
            for (std::size_t f = 0; f < F; ++f) {
              q_vis[surrogate[c][f] * d + concept_dim0 + c] = static_cast<float>(1.0 + spec.surrogate_margin);
            }
          }
        }

        auto h_vis = rec.h_vis.head(hh);
        fill_noise(h_vis, d, noise_begin, d, sigma, stream_key(seed, key_path(t, l, "h_vis", h)));
        const bool is_motion = std::binary_search(motion.begin(), motion.end(), h);
        if (spec.plant_motion) {
          for (std::size_t p = 0; p < P; ++p) {
            const std::size_t f = p / fs;
            if (is_motion) {
              h_vis[p * d + f] = static_cast<float>(frame_radius);
              if (mask.cells[p]) h_vis[p * d + region_dim] = static_cast<float>(spec.mask_strength);
            } else if (mask.cells[p % fs]) {
              // Static distractor: the first frame's region, frozen in place.
              h_vis[p * d + region_dim] = static_cast<float>(spec.mask_strength);
            }
          }
        }
        fill_noise(rec.h_con->head(hh), d, 0, d, sigma, stream_key(seed, key_path(t, l, "h_con", h)));
      }

      if (spec.dtype == DType::kF16) {
        for (HeadTensor* ten : {&rec.q_vis, &rec.k_vis, &rec.q_txt, &rec.k_txt, &rec.k_con, &rec.h_vis}) {
          round_to_half(*ten);
        }
        round_to_half(*rec.h_con);
      }

      if (spec.plant_surrogate) {
        for (std::size_t c = 0; c < C; ++c) {
          for (int h = 0; h < spec.heads; ++h) {
            for (std::size_t f = 0; f < F; ++f) {
              truth.surrogate_index[{t, l, h, static_cast<int>(f), spec.concepts[c]}] = surrogate[c][f];
            }
          }
        }
      }
      records.emplace(dumpio::RecordKey{t, l}, std::move(rec));
    }
  }
  return PlantedDump{dumpio::MemorySource(std::move(manifest), std::move(records)), std::move(truth)};
}

void write_planted_dump(const std::filesystem::path& directory, const PlantedDump& dump) {
  dumpio::write_dump(directory, dump.source.manifest(), dump.source.records());
  write_truth(directory / kTruthName, dump.truth);
}

std::string truth_to_json(const PlantedTruth& truth) {
  json sur = json::array();
  for (const auto& [k, token] : truth.surrogate_index) {
    sur.push_back({{"timestep", k.timestep},
                   {"layer", k.layer},
                   {"head", k.head},
                   {"frame", k.frame},
                   {"concept", k.concept_name},
                   {"token", token}});
  }
  json heads = json::array();
  for (const auto& [k, hs] : truth.motion_heads) {
    heads.push_back({{"timestep", k.timestep}, {"layer", k.layer}, {"heads", hs}});
  }
  json lam = json::array();
  for (const auto& [k, v] : truth.planted_lambda2) {
    lam.push_back({{"layer", k.first}, {"head", k.second}, {"value", v}});
  }
  json doc{{"seed", truth.seed},
           {"num_heads", truth.num_heads},
           {"frames", truth.frames},
           {"height", truth.height},
           {"width", truth.width},
           {"surrogate_index", sur},
           {"motion_heads", heads},
           {"motion_mask", truth.motion_mask.cells},
           {"planted_lambda2", lam}};
  return doc.dump(2) + "\n";
}

PlantedTruth truth_from_json(const std::string& text) {
  PlantedTruth truth;
  try {
    const json doc = json::parse(text);
    truth.seed = doc.at("seed").get<std::uint64_t>();
    truth.num_heads = doc.at("num_heads").get<int>();
    truth.frames = doc.at("frames").get<std::size_t>();
    truth.height = doc.at("height").get<std::size_t>();
    truth.width = doc.at("width").get<std::size_t>();
    const std::size_t fs = truth.height * truth.width;
    const std::size_t tokens = truth.frames * fs;
    auto check_head = [&](int h) {
      if (h < 0 || h >= truth.num_heads) {
        throw Error(ErrorCode::kSchemaViolation, "truth references head " + std::to_string(h) +
                                                     " outside [0, " + std::to_string(truth.num_heads) + ")");
      }
    };
    for (const auto& e : doc.at("surrogate_index")) {
      SurrogateKey k{e.at("timestep").get<int>(), e.at("layer").get<int>(), e.at("head").get<int>(),
                     e.at("frame").get<int>(), e.at("concept").get<std::string>()};
      check_head(k.head);
      const auto token = e.at("token").get<std::uint32_t>();
      if (k.frame < 0 || static_cast<std::size_t>(k.frame) >= truth.frames || token / fs != static_cast<std::size_t>(k.frame) ||
          token >= tokens) {
        throw Error(ErrorCode::kSchemaViolation, "surrogate token outside its frame");
      }
      truth.surrogate_index[k] = token;
    }
    for (const auto& e : doc.at("motion_heads")) {
      auto hs = e.at("heads").get<std::vector<int>>();
      for (int h : hs) check_head(h);
      std::sort(hs.begin(), hs.end());
      truth.motion_heads[{e.at("timestep").get<int>(), e.at("layer").get<int>()}] = std::move(hs);
    }
    truth.motion_mask = {truth.frames, truth.height, truth.width,
                         doc.at("motion_mask").get<std::vector<std::uint8_t>>()};
    if (truth.motion_mask.cells.size() != tokens) {
      throw Error(ErrorCode::kSchemaViolation, "motion_mask size does not match frames*height*width");
    }
    for (const auto& e : doc.at("planted_lambda2")) {
      const int h = e.at("head").get<int>();
      check_head(h);
      truth.planted_lambda2[{e.at("layer").get<int>(), h}] = e.at("value").get<double>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("truth: ") + e.what());
  }
  if (!truth.motion_heads.empty() &&
      std::none_of(truth.motion_mask.cells.begin(), truth.motion_mask.cells.end(), [](auto c) { return c != 0; })) {
    throw Error(ErrorCode::kSchemaViolation, "motion heads planted but the motion mask is empty");
  }
  return truth;
}

void write_truth(const std::filesystem::path& path, const PlantedTruth& truth) {
  const std::string text = truth_to_json(truth);
  write_file_bytes(path, std::span(reinterpret_cast<const std::byte*>(text.data()), text.size()));
}

PlantedTruth read_truth(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return truth_from_json(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace imap::synth
