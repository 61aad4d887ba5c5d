#include "imap/segeval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "imap/chunkio.hpp"
#include "imap/error.hpp"

namespace imap::segeval {

using nlohmann::json;

namespace {

void require_same_shape(const LabelVolume& a, const LabelVolume& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::kShapeMismatch, "label volumes differ in shape");
}

std::set<std::uint16_t> classes_in_frame(const LabelVolume& v, std::size_t f) {
  std::set<std::uint16_t> out;
  const std::size_t fs = v.frame_size();
  for (std::size_t i = 0; i < fs; ++i) {
    const auto c = v.labels[f * fs + i];
    if (c != v.ignore_index) out.insert(c);
  }
  return out;
}

// Per-video window average; windows with no valid class are skipped.
MvcResult mvc_one(const LabelVolume& pred, const LabelVolume& gt, std::size_t n) {
  const std::size_t fs = gt.frame_size();
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t start = 0; start + n <= gt.frames; ++start) {
    std::set<std::uint16_t> common = classes_in_frame(gt, start);
    for (std::size_t j = 1; j < n && !common.empty(); ++j) {
      const auto next = classes_in_frame(gt, start + j);
      std::set<std::uint16_t> keep;
      std::set_intersection(common.begin(), common.end(), next.begin(), next.end(),
                            std::inserter(keep, keep.begin()));
      common = std::move(keep);
    }
    double window_sum = 0.0;
    std::size_t counted = 0;
    for (auto c : common) {
      std::size_t stable = 0;
      std::size_t agree = 0;
      for (std::size_t i = 0; i < fs; ++i) {
        bool in_gt = true;
        bool in_pred = true;
        for (std::size_t j = 0; j < n; ++j) {
          in_gt = in_gt && gt.labels[(start + j) * fs + i] == c;
          in_pred = in_pred && pred.labels[(start + j) * fs + i] == c;
        }
        if (in_gt) {
          ++stable;
          if (in_pred) ++agree;
        }
      }
      if (stable == 0) continue;
      window_sum += static_cast<double>(agree) / static_cast<double>(stable);
      ++counted;
    }
    if (counted == 0) continue;
    total += window_sum / static_cast<double>(counted);
    ++windows;
  }
  MvcResult r;
  r.windows = windows;
  r.value = windows ? total / static_cast<double>(windows) : 0.0;
  return r;
}

}  // namespace

Volume upsample(const Volume& in, int temporal_compression, int spatial_patch, Interp interp) {
  if (temporal_compression < 1 || spatial_patch < 1) {
    throw Error(ErrorCode::kInvalidArgument, "upsampling factors must be positive");
  }
  const auto tc = static_cast<std::size_t>(temporal_compression);
  const auto sp = static_cast<std::size_t>(spatial_patch);
  Volume out(in.frames * tc, in.height * sp, in.width * sp);

  auto src_coord = [](std::size_t o, std::size_t out_n, std::size_t in_n) {
    if (out_n <= 1 || in_n <= 1) return 0.0;
    return static_cast<double>(o) * static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1);
  };

  for (std::size_t f = 0; f < out.frames; ++f) {
    const std::size_t sf = f / tc;
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t x = 0; x < out.width; ++x) {
        if (interp == Interp::kNearest) {
          out.at(f, y, x) = in.at(sf, y / sp, x / sp);
          continue;
        }
        const double sy = src_coord(y, out.height, in.height);
        const double sx = src_coord(x, out.width, in.width);
        const auto y0 = static_cast<std::size_t>(std::floor(sy));
        const auto x0 = static_cast<std::size_t>(std::floor(sx));
        const std::size_t y1 = std::min(y0 + 1, in.height - 1);
        const std::size_t x1 = std::min(x0 + 1, in.width - 1);
        const double fy = sy - static_cast<double>(y0);
        const double fx = sx - static_cast<double>(x0);
        const double top = (1.0 - fx) * in.at(sf, y0, x0) + fx * in.at(sf, y0, x1);
        const double bottom = (1.0 - fx) * in.at(sf, y1, x0) + fx * in.at(sf, y1, x1);
        out.at(f, y, x) = static_cast<float>((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

LabelVolume predict_labels(const std::vector<Volume>& volumes, std::vector<std::string> class_names) {
  if (volumes.empty()) throw Error(ErrorCode::kEmptyConceptList, "no concept volumes to label");
  const Volume& first = volumes.front();
  for (const auto& v : volumes) {
    if (!v.same_shape(first)) throw Error(ErrorCode::kShapeMismatch, "concept volumes differ in shape");
  }
  LabelVolume out(first.frames, first.height, first.width);
  for (std::size_t i = 0; i < first.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < volumes.size(); ++c) {
      if (volumes[c].values[i] > volumes[best].values[i]) best = c;
    }
    out.labels[i] = static_cast<std::uint16_t>(best);
  }
  if (class_names.empty()) {
    for (std::size_t c = 0; c < volumes.size(); ++c) class_names.push_back("class_" + std::to_string(c));
  }
  out.class_names = std::move(class_names);
  return out;
}

namespace {

using IouCounts = std::map<std::uint16_t, std::pair<std::size_t, std::size_t>>;  // inter, union

void count_iou(const LabelVolume& pred, const LabelVolume& gt, IouCounts& counts) {
  require_same_shape(pred, gt);
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const auto g = gt.labels[i];
    const auto p = pred.labels[i];
    if (g == gt.ignore_index || p == gt.ignore_index || p == pred.ignore_index) continue;
    if (g == p) {
      ++counts[g].first;
      ++counts[g].second;
    } else {
      ++counts[g].second;
      ++counts[p].second;
    }
  }
}

IouResult finish_iou(const IouCounts& counts) {
  IouResult r;
  double sum = 0.0;
  for (const auto& [c, iu] : counts) {
    if (iu.second == 0) continue;
    const double iou = static_cast<double>(iu.first) / static_cast<double>(iu.second);
    r.per_class[c] = iou;
    sum += iou;
  }
  r.miou = r.per_class.empty() ? 0.0 : sum / static_cast<double>(r.per_class.size());
  return r;
}

}  // namespace

IouResult miou(const LabelVolume& pred, const LabelVolume& gt) {
  IouCounts counts;
  count_iou(pred, gt, counts);
  return finish_iou(counts);
}

IouResult miou_videos(std::span<const VideoPair> videos) {
  IouCounts counts;
  for (const auto& v : videos) count_iou(*v.pred, *v.gt, counts);
  return finish_iou(counts);
}

MvcResult mvc(const LabelVolume& pred, const LabelVolume& gt, int window) {
  require_same_shape(pred, gt);
  if (window < 1) throw Error(ErrorCode::kInvalidArgument, "mVC window must be at least 1");
  if (static_cast<std::size_t>(window) > gt.frames) {
    throw Error(ErrorCode::kWindowTooLarge, "mVC window " + std::to_string(window) +
                                                " exceeds " + std::to_string(gt.frames) + " frames");
  }
  return mvc_one(pred, gt, static_cast<std::size_t>(window));
}

MvcResult mvc_videos(std::span<const VideoPair> videos, int window) {
  double total = 0.0;
  MvcResult out;
  std::size_t counted = 0;
  for (const auto& v : videos) {
    const auto r = mvc(*v.pred, *v.gt, window);
    if (r.windows == 0) continue;
    total += r.value;
    out.windows += r.windows;
    ++counted;
  }
  out.value = counted ? total / static_cast<double>(counted) : 0.0;
  return out;
}

LatentPoint latent_to_pixel(LatentPoint p, int temporal_compression, int spatial_patch) {
  const auto tc = static_cast<std::size_t>(temporal_compression);
  const auto sp = static_cast<std::size_t>(spatial_patch);
  return {p.frame * tc + tc / 2, p.y * sp + sp / 2, p.x * sp + sp / 2};
}

std::vector<LatentPoint> frame_peaks(const Volume& volume) {
  std::vector<LatentPoint> out;
  const std::size_t fs = volume.frame_size();
  for (std::size_t f = 0; f < volume.frames; ++f) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < fs; ++i) {
      if (volume.values[f * fs + i] > volume.values[f * fs + best]) best = i;
    }
    out.push_back({f, best / volume.width, best % volume.width});
  }
  return out;
}

double point_accuracy(std::span<const PointQuery> queries, const LabelVolume& gt,
                      int temporal_compression, int spatial_patch) {
  if (queries.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& q : queries) {
    auto it = std::find(gt.class_names.begin(), gt.class_names.end(), q.concept_name);
    if (it == gt.class_names.end()) {
      throw Error(ErrorCode::kMissingMask, "no ground-truth mask for concept '" + q.concept_name + "'");
    }
    const auto cls = static_cast<std::uint16_t>(it - gt.class_names.begin());
    LatentPoint px = latent_to_pixel(q.peak, temporal_compression, spatial_patch);
    px.frame = std::min(px.frame, gt.frames - 1);
    px.y = std::min(px.y, gt.height - 1);
    px.x = std::min(px.x, gt.width - 1);
    if (gt.at(px.frame, px.y, px.x) == cls) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

std::string MetricReport::to_json() const {
  json doc = json::object();
  if (iou) {
    doc["miou"] = iou->miou;
    json per = json::object();
    for (const auto& [c, v] : iou->per_class) {
      const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
      per[name] = v;
    }
    doc["per_class_iou"] = per;
  }
  if (!mvc.empty()) {
    json m = json::object();
    for (const auto& [n, r] : mvc) m["mvc" + std::to_string(n)] = {{"value", r.value}, {"windows", r.windows}};
    doc["mvc"] = m;
  }
  if (point_accuracy) doc["point_accuracy"] = *point_accuracy;
  return doc.dump(2) + "\n";
}

LabelVolume read_labels(const std::filesystem::path& dir) {
  const auto meta_bytes = read_file_bytes(dir / "labels.json");
  LabelVolume out;
  try {
    const json meta = json::parse(
        std::string(reinterpret_cast<const char*>(meta_bytes.data()), meta_bytes.size()));
    out.frames = meta.at("frames").get<std::size_t>();
    out.height = meta.at("height").get<std::size_t>();
    out.width = meta.at("width").get<std::size_t>();
    out.class_names = meta.at("class_names").get<std::vector<std::string>>();
    out.ignore_index = meta.value("ignore_index", kIgnoreIndex);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, "labels.json: " + std::string(e.what()));
  }
  const auto raw = read_file_bytes(dir / "labels.u16");
  const std::size_t n = out.frames * out.height * out.width;
  if (raw.size() != n * 2) {
    throw Error(ErrorCode::kCorruptPayload, "labels.u16 size does not match labels.json dims");
  }
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = static_cast<std::uint16_t>(std::to_integer<std::uint16_t>(raw[2 * i]) |
                                               (std::to_integer<std::uint16_t>(raw[2 * i + 1]) << 8));
  }
  for (auto l : out.labels) {
    if (l != out.ignore_index && l >= out.class_names.size()) {
      throw Error(ErrorCode::kSchemaViolation, "label " + std::to_string(l) + " has no class name");
    }
  }
  return out;
}

void write_labels(const std::filesystem::path& dir, const LabelVolume& labels) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  json meta{{"frames", labels.frames},
            {"height", labels.height},
            {"width", labels.width},
            {"class_names", labels.class_names},
            {"ignore_index", labels.ignore_index}};
  const std::string text = meta.dump(2) + "\n";
  write_file_bytes(dir / "labels.json",
                   std::span(reinterpret_cast<const std::byte*>(text.data()), text.size()));
  std::vector<std::byte> raw;
  raw.reserve(labels.labels.size() * 2);
  for (auto l : labels.labels) {
    raw.push_back(std::byte(l & 0xffu));
    raw.push_back(std::byte(l >> 8));
  }
  write_file_bytes(dir / "labels.u16", raw);
}

}  // namespace imap::segeval
