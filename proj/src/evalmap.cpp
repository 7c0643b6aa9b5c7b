#include "gridsight/evalmap.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gridsight/errors.hpp"

namespace gridsight {

std::vector<std::uint8_t> match_and_label(std::span<const Detection> dets,
                                          std::span<const GroundTruth> gts,
                                          const EvalConfig& cfg) {
  std::vector<std::uint8_t> labels(dets.size(), 0);
  std::vector<std::uint8_t> taken(gts.size(), 0);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].class_id != dets[d].class_id) continue;
      const double r = iou(dets[d].box, gts[g].box, IouVariant::Union);
      if (r > best) {
        best = r;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best > cfg.iou_match) {
      labels[d] = 1;
      taken[best_g] = 1;
    }
  }
  return labels;
}

PrCurve pr_curve(std::span<const std::uint8_t> labels, int n_gt) {
  PrCurve curve;
  int tp = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    tp += labels[k] ? 1 : 0;
    curve.recall.push_back(static_cast<double>(tp) / n_gt);
    curve.precision.push_back(static_cast<double>(tp) /
                              static_cast<double>(k + 1));
  }
  return curve;
}

double average_precision(std::span<const std::uint8_t> labels, int n_gt) {
  if (n_gt < 1) throw ConfigError("average_precision: n_gt must be >= 1");
  const PrCurve curve = pr_curve(labels, n_gt);
  // Envelope: running max of precision from the right, then sum the recall
  // increments.
  double ap = 0.0;
  double env = 0.0;
  for (std::size_t k = curve.recall.size(); k-- > 0;) {
    env = std::max(env, curve.precision[k]);
    const double prev = k == 0 ? 0.0 : curve.recall[k - 1];
    if (curve.recall[k] > prev) {
      ap += (curve.recall[k] - prev) * env;
    }
  }
  return ap;
}

MapReport map_report(const std::vector<std::vector<Detection>>& dets_per_image,
                     const std::vector<std::vector<GroundTruth>>& gts_per_image,
                     const EvalConfig& cfg) {
  if (dets_per_image.size() != gts_per_image.size()) {
    throw ConfigError("map_report: image counts differ (" +
                      std::to_string(dets_per_image.size()) + " vs " +
                      std::to_string(gts_per_image.size()) + ")");
  }
  MapReport report;
  // (score, label) per class, pooled across images in image order.
  std::array<std::vector<std::pair<double, std::uint8_t>>, kClasses> pooled;

  for (std::size_t img = 0; img < dets_per_image.size(); ++img) {
    std::vector<Detection> dets = dets_per_image[img];
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) {
                       return a.score > b.score;
                     });
    const auto labels = match_and_label(dets, gts_per_image[img], cfg);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const int c = dets[d].class_id;
      if (c < 0 || c >= kClasses) {
        throw DataError("map_report: detection class id out of range");
      }
      pooled[c].emplace_back(dets[d].score, labels[d]);
      report.det_count[c] += 1;
    }
    for (const auto& gt : gts_per_image[img]) {
      if (gt.class_id < 0 || gt.class_id >= kClasses) {
        throw DataError("map_report: ground-truth class id out of range");
      }
      report.gt_count[gt.class_id] += 1;
    }
  }

  double sum = 0.0;
  int evaluated = 0;
  for (int c = 0; c < kClasses; ++c) {
    auto& entries = pooled[c];
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) {
                       return a.first > b.first;
                     });
    std::vector<std::uint8_t> labels;
    labels.reserve(entries.size());
    for (const auto& e : entries) labels.push_back(e.second);
    if (report.gt_count[c] >= 1) {
      report.per_class_ap[c] = average_precision(labels, report.gt_count[c]);
      report.curves[c] = pr_curve(labels, report.gt_count[c]);
      sum += report.per_class_ap[c];
      evaluated += 1;
    } else {
      report.per_class_ap[c] = 0.0;
    }
  }
  report.map = evaluated > 0 ? sum / evaluated : 0.0;
  return report;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Column order of the report table.
constexpr std::array<int, kClasses> kTableOrder = {0, 2, 3, 1, 5, 4};
constexpr std::array<std::string_view, kClasses> kTableHeaders = {
    "Person", "Motor", "Car", "Bicycle", "Bus", "Truck"};
constexpr std::array<std::string_view, kClasses> kKeyNames = {
    "person", "bicycle", "motorcycle", "car", "truck", "bus"};

}  // namespace

std::string format_report(const MapReport& report, const std::string& method) {
  std::ostringstream os;
  char buf[64];
  os << "Method";
  for (std::size_t i = method.size(); i < 28; ++i) os << ' ';
  os << "mAP";
  for (auto h : kTableHeaders) {
    std::snprintf(buf, sizeof(buf), "%9s", std::string(h).c_str());
    os << buf;
  }
  os << '\n' << method;
  for (std::size_t i = method.size(); i < 28; ++i) os << ' ';
  std::snprintf(buf, sizeof(buf), "%5.2f", report.map * 100.0);
  os << buf;
  for (int col : kTableOrder) {
    std::snprintf(buf, sizeof(buf), "%9.2f", report.per_class_ap[col] * 100.0);
    os << buf;
  }
  os << "\n\n";

  os << "map=" << fmt17(report.map) << '\n';
  for (int c = 0; c < kClasses; ++c) {
    const std::string key(kKeyNames[c]);
    os << "ap_" << key << '=' << fmt17(report.per_class_ap[c]) << '\n';
    os << "gt_" << key << '=' << report.gt_count[c] << '\n';
    os << "det_" << key << '=' << report.det_count[c] << '\n';
  }
  return os.str();
}

void write_pr_csv(const PrCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "recall,precision\n";
  for (std::size_t i = 0; i < curve.recall.size(); ++i) {
    out << fmt17(curve.recall[i]) << ',' << fmt17(curve.precision[i]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

void write_detections(std::span<const ImageDetections> images,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& img : images) {
    out << "{\"id\":" << img.id << ",\"dets\":[";
    for (std::size_t d = 0; d < img.dets.size(); ++d) {
      const auto& det = img.dets[d];
      if (d) out << ',';
      out << "{\"cx\":" << fmt17(det.box.cx) << ",\"cy\":" << fmt17(det.box.cy)
          << ",\"w\":" << fmt17(det.box.w) << ",\"h\":" << fmt17(det.box.h)
          << ",\"class\":" << det.class_id
          << ",\"score\":" << fmt17(det.score) << '}';
    }
    out << "]}\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

std::vector<ImageDetections> read_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<ImageDetections> images;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("detections line " + std::to_string(lineno) + ": " +
                      e.what());
    }
    try {
      ImageDetections img;
      img.id = j.at("id").get<int>();
      for (const auto& d : j.at("dets")) {
        Detection det;
        det.box = BoxCWH{d.at("cx").get<double>(), d.at("cy").get<double>(),
                         d.at("w").get<double>(), d.at("h").get<double>()};
        det.class_id = d.at("class").get<int>();
        det.score = d.at("score").get<double>();
        if (det.class_id < 0 || det.class_id >= kClasses) {
          throw DataError("detections line " + std::to_string(lineno) +
                          ": class id " + std::to_string(det.class_id) +
                          " out of range");
        }
        img.dets.push_back(det);
      }
      images.push_back(std::move(img));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("detections line " + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  return images;
}

BenchReport bench_pipeline(const std::vector<PredictionTensor>& frames,
                           const GridConfig& grid, double conf_threshold,
                           const NmsConfig& nms_cfg, int repetitions) {
  if (frames.empty()) throw ConfigError("bench_pipeline: no frames");
  if (repetitions < 1) throw ConfigError("bench_pipeline: repetitions < 1");

  using clock = std::chrono::steady_clock;
  BenchReport report;
  report.frames = static_cast<int>(frames.size());
  report.repetitions = repetitions;

  std::vector<double> latencies;
  latencies.reserve(frames.size() * static_cast<std::size_t>(repetitions));
  for (int rep = 0; rep < repetitions; ++rep) {
    for (const auto& frame : frames) {
      const auto start = clock::now();
      auto dets = decode(frame, grid, conf_threshold);
      auto kept = nms_scale_synthesis(std::move(dets), nms_cfg);
      const auto stop = clock::now();
      report.total_detections += kept.size();
      latencies.push_back(std::chrono::duration<double>(stop - start).count());
    }
  }
  double sum = 0.0;
  for (double v : latencies) sum += v;
  report.mean_latency_s = sum / static_cast<double>(latencies.size());
  std::sort(latencies.begin(), latencies.end());
  report.median_latency_s = latencies[latencies.size() / 2];
  report.fps = report.mean_latency_s > 0.0 ? 1.0 / report.mean_latency_s : 0.0;
  return report;
}

}  // namespace gridsight
