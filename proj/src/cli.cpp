#include "imap/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "imap/dumpio.hpp"
#include "imap/error.hpp"
#include "imap/mapio.hpp"
#include "imap/parallel.hpp"
#include "imap/render.hpp"
#include "imap/saliency.hpp"
#include "imap/segeval.hpp"
#include "imap/separation.hpp"
#include "imap/spectral.hpp"
#include "imap/synth.hpp"

namespace imap::cli {

using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<std::vector<int>> parse_int_list(std::string_view s) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = std::min(s.find(',', pos), s.size());
    auto v = parse_int(s.substr(pos, comma - pos));
    if (!v) return std::nullopt;
    out.push_back(*v);
    pos = comma + 1;
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  write_file_bytes(path, std::span(reinterpret_cast<const std::byte*>(text.data()), text.size()));
}

template <typename Enum>
Enum pick(const std::string& value, std::initializer_list<std::pair<const char*, Enum>> table,
          const char* flag) {
  for (const auto& [name, e] : table) {
    std::string alt = name;
    std::replace(alt.begin(), alt.end(), '_', '-');
    if (value == name || value == alt) return e;
  }
  throw UsageError(std::string("invalid value '") + value + "' for " + flag);
}

// ---- option bundles ----

struct Common {
  int threads = 0;
  bool verbose = false;
};

struct LayersArgs {
  std::string dump, out, timesteps = "default";
  double threshold = spectral::kDefaultThreshold;
  double tol = 1e-6;
  int max_iter = 1000;
};

struct HeadsArgs {
  std::string dump, out, timesteps = "all", layers = "all", metric = "chi";
  std::optional<int> timestep, layer;
  int top_k = separation::kDefaultTopK;
};

struct MapArgs {
  std::string dump, out, mode = "imap", layers = "auto", timesteps = "default";
  std::vector<std::string> concepts;
  int top_k = separation::kDefaultTopK;
  std::string head_strategy = "separation", metric = "chi", normalization = "minmax";
  std::string assembly = "frame", surrogate = "qk_frame";
  std::uint64_t seed = 0;
  bool softmax = false;
  double tol = 1e-6;
};

struct EvalArgs {
  std::vector<std::string> maps, labels;
  std::string out, interp = "bilinear", metrics = "miou,mvc8,mvc16,point";
};

struct RenderArgs {
  std::string frames, map, out, colormap = "fire";
  double strength = render::kDefaultStrength;
  bool grid = false;
};

struct SynthArgs {
  std::string preset, geometry, out, dtype = "f32";
  std::uint64_t seed = 0;
  std::optional<double> spacing, margin;
};

struct ValidateArgs {
  std::string dump, out;
};

// ---- subcommands ----

json layers_cmd(const LayersArgs& a) {
  if (!timestep_selector_valid(a.timesteps)) throw UsageError("bad --timesteps selector");
  dumpio::DirectorySource source(a.dump);
  const auto ts = resolve_timesteps(a.timesteps, source.manifest().timesteps);
  spectral::Lambda2Options opts;
  opts.tol = a.tol;
  opts.max_iter = a.max_iter;
  const auto profile = spectral::layer_lambda2_profile(source, ts, opts);
  const auto sel = spectral::select_layers(profile, a.threshold);
  write_text(a.out, spectral::profile_to_json(profile, sel));
  json s{{"subcommand", "layers"}, {"out", a.out}, {"selected", sel.layers}, {"timesteps", ts}};
  if (sel.empty_warning) s["warning"] = "no layer exceeds the threshold";
  return s;
}

std::vector<int> resolve_layers(const std::string& spec, const std::vector<int>& available) {
  if (spec == "all") return available;
  auto list = parse_int_list(spec);
  if (!list) throw UsageError("bad layer list '" + spec + "'");
  for (int l : *list) {
    if (!std::binary_search(available.begin(), available.end(), l)) {
      throw Error(ErrorCode::kInvalidArgument, "layer " + std::to_string(l) + " is not in the dump");
    }
  }
  return *list;
}

json heads_cmd(HeadsArgs a) {
  if (a.timestep) a.timesteps = std::to_string(*a.timestep);
  if (a.layer) a.layers = std::to_string(*a.layer);
  if (!timestep_selector_valid(a.timesteps)) throw UsageError("bad --timesteps selector");
  const auto metric = separation::parse_metric(a.metric);
  if (!metric) throw UsageError("unknown --metric '" + a.metric + "'");
  if (a.top_k < 1) throw UsageError("--top-k must be at least 1");
  if (a.layers != "all" && !parse_int_list(a.layers)) throw UsageError("bad --layers list");
  dumpio::DirectorySource source(a.dump);
  const auto& m = source.manifest();
  const auto ts = resolve_timesteps(a.timesteps, m.timesteps);
  const auto ls = resolve_layers(a.layers, m.layers);
  json records = json::array();
  for (int t : ts) {
    for (int l : ls) {
      const auto rec = source.load(t, l);
      const auto rep = separation::select_motion_heads(rec, *metric, a.top_k, m.frames_F, m.height_H, m.width_W);
      records.push_back(json::parse(separation::report_to_json(rep, t, l)));
    }
  }
  json doc{{"metric", separation::metric_name(*metric)},
           {"top_k", a.top_k},
           {"records", records}};
  write_text(a.out, doc.dump(2) + "\n");
  return {{"subcommand", "heads"}, {"out", a.out}, {"records", records.size()}};
}

json map_cmd(const MapArgs& a) {
  using namespace saliency;
  MapRequest req;
  req.concepts = a.concepts;
  req.mode = pick<MapMode>(a.mode, {{"auto", MapMode::kAuto}, {"imap", MapMode::kImap},
                                    {"cross-attn", MapMode::kCrossAttn},
                                    {"cross_attn", MapMode::kCrossAttn}, {"concept-attn", MapMode::kConceptAttn},
                                    {"concept_attn", MapMode::kConceptAttn}},
                           "--mode");
  std::string strategy = a.head_strategy;
  req.random_seed = a.seed;
  if (strategy.rfind("random:", 0) == 0) {
    const auto seed = parse_int(std::string_view(strategy).substr(7));
    if (!seed || *seed < 0) throw UsageError("bad seed in --heads '" + strategy + "'");
    req.random_seed = static_cast<std::uint64_t>(*seed);
    strategy = "random";
  }
  req.head_strategy = pick<HeadStrategy>(strategy, {{"separation", HeadStrategy::kSeparation},
                                                           {"random", HeadStrategy::kRandom},
                                                           {"all", HeadStrategy::kAll}},
                                         "--heads");
  req.per_head_normalization = pick<Normalization>(
      a.normalization, {{"minmax", Normalization::kMinMax}, {"none", Normalization::kNone}}, "--norm");
  req.assembly = pick<Assembly>(a.assembly, {{"frame", Assembly::kFrameSliced},
                                             {"column", Assembly::kFullColumn},
                                             {"frame_sliced", Assembly::kFrameSliced},
                                             {"full_column", Assembly::kFullColumn}},
                                "--assembly");
  req.surrogate = pick<SurrogateMode>(a.surrogate, {{"qk_frame", SurrogateMode::kQkFrame},
                                                    {"qk_video", SurrogateMode::kQkVideo},
                                                    {"hinorm", SurrogateMode::kHiNorm}},
                                      "--surrogate");
  const auto metric = separation::parse_metric(a.metric);
  if (!metric) throw UsageError("unknown --metric '" + a.metric + "'");
  req.metric = *metric;
  if (req.mode == MapMode::kImap && a.top_k < 1) throw UsageError("--top-k must be at least 1 in imap mode");
  req.top_k = a.top_k;
  req.apply_softmax_over_concepts = a.softmax;
  req.lambda2.tol = a.tol;
  if (a.layers == "auto" || a.layers.rfind("auto:", 0) == 0) {
    req.layers.automatic = true;
    if (a.layers.size() > 4) {
      try {
        std::size_t used = 0;
        req.layers.threshold = std::stod(a.layers.substr(5), &used);
        if (used != a.layers.size() - 5) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw UsageError("bad --layers threshold in '" + a.layers + "'");
      }
    }
  } else {
    auto list = parse_int_list(a.layers);
    if (!list) throw UsageError("bad --layers value '" + a.layers + "'");
    req.layers.automatic = false;
    req.layers.explicit_layers = *list;
  }
  if (!timestep_selector_valid(a.timesteps)) throw UsageError("bad --timesteps selector");

  dumpio::DirectorySource source(a.dump);
  if (a.timesteps != "default") req.timesteps = resolve_timesteps(a.timesteps, source.manifest().timesteps);
  const auto volumes = compute_map(source, req);
  const auto& m = source.manifest();
  mapio::write_map_file(a.out, volumes, m.temporal_compression, m.spatial_patch);
  const auto& prov = volumes.front().provenance;
  return {{"subcommand", "map"},
          {"out", a.out},
          {"mode", to_string(prov.mode)},
          {"concepts", a.concepts},
          {"timesteps", prov.timesteps},
          {"layers", prov.layers},
          {"head_map_count", prov.head_map_count}};
}

struct MetricSet {
  bool miou = false;
  bool point = false;
  std::vector<int> mvc;
};

MetricSet parse_metrics(const std::string& list) {
  MetricSet m;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "miou") {
      m.miou = true;
    } else if (item == "point") {
      m.point = true;
    } else if (item.rfind("mvc", 0) == 0) {
      const auto n = parse_int(std::string_view(item).substr(3));
      if (!n || *n < 1) throw UsageError("bad mVC window in '" + item + "'");
      m.mvc.push_back(*n);
    } else {
      throw UsageError("unknown metric '" + item + "'");
    }
  }
  if (!m.miou && !m.point && m.mvc.empty()) throw UsageError("--metrics selects nothing");
  return m;
}

struct EvalVideo {
  segeval::LabelVolume pred;
  segeval::LabelVolume gt;
  std::vector<segeval::PointQuery> queries;
  int temporal_compression = 1;
  int spatial_patch = 1;
};

EvalVideo load_video(const std::string& map_path, const std::string& labels_dir, segeval::Interp interp) {
  EvalVideo v;
  const auto map = mapio::read_map_file(map_path);
  v.gt = segeval::read_labels(labels_dir);
  v.temporal_compression = map.temporal_compression;
  v.spatial_patch = map.spatial_patch;
  const auto& gt = v.gt;

  std::vector<Volume> up;
  std::vector<std::string> names;
  for (const auto& m : map.volumes) {
    up.push_back(segeval::upsample(m.values, map.temporal_compression, map.spatial_patch, interp));
    names.push_back(m.concept_name);
  }
  if (up.empty()) throw Error(ErrorCode::kEmptyConceptList, "map file holds no volumes");
  if (up.front().frames != gt.frames || up.front().height != gt.height || up.front().width != gt.width) {
    throw Error(ErrorCode::kShapeMismatch, "upsampled map " + map_path + " does not match the ground-truth geometry");
  }
  std::vector<std::uint16_t> class_of;
  for (const auto& n : names) {
    auto it = std::find(gt.class_names.begin(), gt.class_names.end(), n);
    if (it == gt.class_names.end()) throw Error(ErrorCode::kMissingMask, "no ground-truth class for '" + n + "'");
    class_of.push_back(static_cast<std::uint16_t>(it - gt.class_names.begin()));
  }
  v.pred = segeval::predict_labels(up, names);
  for (auto& l : v.pred.labels) l = class_of[l];
  v.pred.class_names = gt.class_names;

  // Point queries only for frames where the concept is visible.
  const std::size_t fs = gt.frame_size();
  for (std::size_t c = 0; c < map.volumes.size(); ++c) {
    for (const auto& peak : segeval::frame_peaks(map.volumes[c].values)) {
      const auto px = segeval::latent_to_pixel(peak, map.temporal_compression, map.spatial_patch);
      const auto begin = gt.labels.begin() + static_cast<std::ptrdiff_t>(std::min(px.frame, gt.frames - 1) * fs);
      const auto end = begin + static_cast<std::ptrdiff_t>(fs);
      if (std::find(begin, end, class_of[c]) != end) v.queries.push_back({names[c], peak});
    }
  }
  return v;
}

json eval_cmd(const EvalArgs& a) {
  const auto interp = pick<segeval::Interp>(
      a.interp, {{"bilinear", segeval::Interp::kBilinear}, {"nearest", segeval::Interp::kNearest}}, "--interp");
  const auto metrics = parse_metrics(a.metrics);
  if (a.maps.size() != a.labels.size()) {
    throw UsageError("--maps and --labels need the same number of entries");
  }
  std::vector<EvalVideo> videos;
  for (std::size_t i = 0; i < a.maps.size(); ++i) videos.push_back(load_video(a.maps[i], a.labels[i], interp));
  std::vector<segeval::VideoPair> pairs;
  for (const auto& v : videos) pairs.push_back({&v.pred, &v.gt});

  segeval::MetricReport report;
  report.class_names = videos.front().gt.class_names;
  if (metrics.miou) report.iou = segeval::miou_videos(pairs);
  for (int n : metrics.mvc) report.mvc[n] = segeval::mvc_videos(pairs, n);
  if (metrics.point) {
    double hits = 0.0;
    std::size_t total = 0;
    for (const auto& v : videos) {
      if (v.queries.empty()) continue;
      hits += segeval::point_accuracy(v.queries, v.gt, v.temporal_compression, v.spatial_patch) *
              static_cast<double>(v.queries.size());
      total += v.queries.size();
    }
    if (total > 0) report.point_accuracy = hits / static_cast<double>(total);
  }
  write_text(a.out, report.to_json());
  json s{{"subcommand", "eval-seg"}, {"out", a.out}, {"videos", videos.size()}};
  if (report.iou) s["miou"] = report.iou->miou;
  for (const auto& [n, r] : report.mvc) s["mvc" + std::to_string(n)] = r.value;
  if (report.point_accuracy) s["point_accuracy"] = *report.point_accuracy;
  return s;
}

json render_cmd(const RenderArgs& a) {
  render::RenderOptions opts;
  opts.colormap = pick<render::Colormap>(
      a.colormap, {{"fire", render::Colormap::kFire}, {"gray", render::Colormap::kGray}}, "--colormap");
  if (!(a.strength >= 0.0 && a.strength <= 1.0)) throw UsageError("--strength must lie in [0, 1]");
  if (a.grid && a.frames.empty()) throw UsageError("--grid requires --frames");
  opts.strength = a.strength;
  opts.grid = a.grid;
  const auto map = mapio::read_map_file(a.map);
  std::vector<render::FrameImage> frames;
  if (!a.frames.empty()) frames = render::read_frame_directory(a.frames);
  std::vector<std::pair<std::string, Volume>> volumes;
  for (const auto& v : map.volumes) volumes.emplace_back(v.concept_name, v.values);
  const auto summary = render::render_volumes(volumes, map.temporal_compression, map.spatial_patch,
                                              frames, a.out, opts);
  return {{"subcommand", "render"}, {"out", a.out}, {"files", summary.files.size()}};
}

json synth_cmd(const SynthArgs& a) {
  synth::SynthSpec spec;
  try {
    spec = synth::preset_spec(a.preset);
  } catch (const Error&) {
    throw UsageError("unknown --preset '" + a.preset + "'");
  }
  if (!a.geometry.empty()) synth::apply_geometry(spec, a.geometry);
  spec.dtype = pick<DType>(a.dtype, {{"f32", DType::kF32}, {"f16", DType::kF16}}, "--dtype");
  if (a.spacing) spec.spacing = *a.spacing;
  if (a.margin) spec.surrogate_margin = *a.margin;
  const auto dump = synth::generate_planted_dump(spec, a.seed);
  synth::write_planted_dump(a.out, dump);
  return {{"subcommand", "synth"},
          {"out", a.out},
          {"preset", a.preset},
          {"seed", a.seed},
          {"records", dump.source.records().size()}};
}

json validate_cmd(const ValidateArgs& a, bool& failed) {
  const auto report = dumpio::validate_dump(a.dump);
  if (!a.out.empty()) write_text(a.out, report.to_json());
  failed = !report.ok;
  return {{"subcommand", "validate"},
          {"ok", report.ok},
          {"records", report.records.size()},
          {"failed_records", report.failed_records()},
          {"manifest_issues", report.manifest_issues.size()}};
}

}  // namespace

bool timestep_selector_valid(std::string_view s) {
  if (s == "default" || s == "all") return true;
  const auto dots = s.find("..");
  if (dots != std::string_view::npos) {
    return parse_int(s.substr(0, dots)) && parse_int(s.substr(dots + 2));
  }
  return parse_int_list(s).has_value();
}

std::vector<int> resolve_timesteps(std::string_view s, const std::vector<int>& available) {
  std::vector<int> out;
  if (s == "default") {
    out = saliency::default_timesteps(available);
  } else if (s == "all") {
    out = available;
  } else if (const auto dots = s.find(".."); dots != std::string_view::npos) {
    const auto lo = parse_int(s.substr(0, dots));
    const auto hi = parse_int(s.substr(dots + 2));
    if (!lo || !hi) throw Error(ErrorCode::kInvalidArgument, "bad timestep range");
    for (int t : available) {
      if (t >= *lo && t <= *hi) out.push_back(t);
    }
  } else {
    const auto list = parse_int_list(s);
    if (!list) throw Error(ErrorCode::kInvalidArgument, "bad timestep list");
    for (int t : *list) {
      if (std::find(available.begin(), available.end(), t) == available.end()) {
        throw Error(ErrorCode::kInvalidArgument, "timestep " + std::to_string(t) + " is not in the dump");
      }
    }
    out = *list;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  if (out.empty()) throw Error(ErrorCode::kEmptyTimestepSet, "timestep selector matched nothing");
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interpretable motion-attention saliency over attention dumps", "imap"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--threads", common.threads, "Cap on worker threads (default: IMAP_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("-v,--verbose", common.verbose, "Diagnostics on stderr");

  LayersArgs la;
  auto* layers = app.add_subcommand("layers", "Per-layer lambda2 profile and layer selection");
  layers->add_option("--dump", la.dump, "Dump directory")->required();
  layers->add_option("--out", la.out, "Output JSON")->required();
  layers->add_option("--timesteps", la.timesteps, "default | all | A..B | t1,t2,...");
  layers->add_option("--threshold", la.threshold, "Select layers with lambda2 above this");
  layers->add_option("--tol", la.tol, "Eigenvalue residual tolerance")->check(CLI::PositiveNumber);
  layers->add_option("--max-iter", la.max_iter, "Cap on operator applications")->check(CLI::PositiveNumber);

  HeadsArgs ha;
  auto* heads = app.add_subcommand("heads", "Per-head separation scores and top-k selection");
  heads->add_option("--dump", ha.dump)->required();
  heads->add_option("--out", ha.out)->required();
  heads->add_option("--timesteps", ha.timesteps, "default | all | A..B | t1,t2,...");
  heads->add_option("--layers", ha.layers, "all | l1,l2,...");
  heads->add_option("--timestep", ha.timestep, "Single timestep (overrides --timesteps)");
  heads->add_option("--layer", ha.layer, "Single layer (overrides --layers)");
  heads->add_option("--metric", ha.metric, "chi | dbi | fisher | silhouette");
  heads->add_option("--top-k", ha.top_k);

  MapArgs ma;
  auto* map = app.add_subcommand("map", "Concept saliency maps");
  map->add_option("--dump", ma.dump)->required();
  map->add_option("--out", ma.out, "Map file (sidecar written to <out>.json)")->required();
  map->add_option("--concept", ma.concepts, "Concept names, comma separated or repeated")
      ->required()
      ->delimiter(',');
  map->add_option("--mode", ma.mode, "auto | imap | cross-attn | concept-attn");
  map->add_option("--layers", ma.layers, "auto | auto:THRESHOLD | l1,l2,...");
  map->add_option("--timesteps", ma.timesteps, "default | all | A..B | t1,t2,...");
  map->add_option("--top-k", ma.top_k);
  map->add_option("--heads,--head-strategy", ma.head_strategy, "separation | random[:SEED] | all");
  map->add_option("--seed", ma.seed, "Seed for the random head strategy");
  map->add_option("--metric", ma.metric, "chi | dbi | fisher | silhouette");
  map->add_option("--norm,--normalization", ma.normalization, "minmax | none");
  map->add_flag("--softmax", ma.softmax, "Softmax across concepts");
  map->add_option("--assembly", ma.assembly, "frame | column");
  map->add_option("--surrogate", ma.surrogate, "qk_frame | qk_video | hinorm");
  map->add_option("--tol", ma.tol, "Eigenvalue tolerance for auto layers")->check(CLI::PositiveNumber);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval-seg", "Segmentation metrics against labels");
  eval->add_option("--maps,--map", ea.maps, "Map files, one per video")->required();
  eval->add_option("--labels,--gt", ea.labels, "Label directories (labels.json + labels.u16), one per map")
      ->required();
  eval->add_option("--out", ea.out)->required();
  eval->add_option("--metrics", ea.metrics, "Comma list of miou, mvcN, point");
  eval->add_option("--interp", ea.interp, "bilinear | nearest");

  RenderArgs ra;
  auto* rend = app.add_subcommand("render", "Heatmaps, overlays and the 12-frame grid");
  rend->add_option("--frames", ra.frames, "Directory of PPM frames");
  rend->add_option("--map", ra.map)->required();
  rend->add_option("--out", ra.out)->required();
  rend->add_flag("--grid", ra.grid);
  rend->add_option("--colormap", ra.colormap, "fire | gray");
  rend->add_option("--strength", ra.strength, "Overlay strength");

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "Synthetic dump with planted ground truth");
  syn->add_option("--preset", sa.preset, "planted-motion | planted-spectrum | planted-surrogate | combined")
      ->required();
  syn->add_option("--seed", sa.seed);
  syn->add_option("--geometry", sa.geometry, "F,H,W,d,heads,layers,timesteps");
  syn->add_option("--out", sa.out)->required();
  syn->add_option("--dtype", sa.dtype, "f32 | f16");
  syn->add_option("--spacing", sa.spacing);
  syn->add_option("--margin", sa.margin);

  ValidateArgs va;
  auto* val = app.add_subcommand("validate", "Check a dump chunk by chunk");
  val->add_option("--dump", va.dump)->required();
  val->add_option("--out", va.out, "Report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (common.threads > 0) {
      set_thread_count(common.threads);
    } else {
      set_thread_count(0);
    }
    json summary;
    bool failed = false;
    if (*layers) summary = layers_cmd(la);
    else if (*heads) summary = heads_cmd(ha);
    else if (*map) summary = map_cmd(ma);
    else if (*eval) summary = eval_cmd(ea);
    else if (*rend) summary = render_cmd(ra);
    else if (*syn) summary = synth_cmd(sa);
    else if (*val) summary = validate_cmd(va, failed);
    if (common.verbose) err << "threads: " << thread_count() << "\n";
    out << summary.dump() << "\n";
    if (failed) {
      err << "error[SchemaViolation]: dump failed validation\n";
      return kExitRuntime;
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error[" << e.category() << "]: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error[IoError]: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int run(const std::vector<std::string_view>& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> storage{"imap"};
  for (auto a : args) storage.emplace_back(a);
  std::vector<const char*> argv;
  for (const auto& s : storage) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace imap::cli
