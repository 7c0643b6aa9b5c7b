#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridsight/gridcodec.hpp"
#include "gridsight/nms.hpp"

namespace gridsight {

struct EvalConfig {
  // Strict inequality: an overlap of exactly iou_match is a miss.
  double iou_match = 0.5;
};

// Greedy TP/FP labelling of score-sorted detections: each detection takes
// the unmatched same-class GT with the highest union-IoU, provided that IoU
// strictly exceeds the threshold; each GT matches at most once.
std::vector<std::uint8_t> match_and_label(std::span<const Detection> dets,
                                          std::span<const GroundTruth> gts,
                                          const EvalConfig& cfg = {});

// All-points average precision: the precision envelope (running max from the
// right) integrated over recall. labels are 1 for TP in score order.
double average_precision(std::span<const std::uint8_t> labels, int n_gt);

struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
};

PrCurve pr_curve(std::span<const std::uint8_t> labels, int n_gt);

struct MapReport {
  std::array<double, kClasses> per_class_ap{};
  std::array<int, kClasses> gt_count{};
  std::array<int, kClasses> det_count{};
  std::array<PrCurve, kClasses> curves{};
  double map = 0.0; // mean over classes with at least one ground truth
};

MapReport map_report(const std::vector<std::vector<Detection>>& dets_per_image,
                     const std::vector<std::vector<GroundTruth>>& gts_per_image,
                     const EvalConfig& cfg = {});

// Plain-text report: one table row of per-class AP percentages plus a
// machine-readable key=value block in full precision.
std::string format_report(const MapReport& report, const std::string& method);

void write_pr_csv(const PrCurve& curve, const std::string& path);

// Detections file: one JSON record per line,
// {"id":..., "dets":[{"cx":...,"cy":...,"w":...,"h":...,"class":...,"score":...}]}
struct ImageDetections {
  int id = 0;
  std::vector<Detection> dets;
};

void write_detections(std::span<const ImageDetections> images,
                      const std::string& path);
std::vector<ImageDetections> read_detections(const std::string& path);

struct BenchReport {
  int frames = 0;
  int repetitions = 0;
  double mean_latency_s = 0.0;
  double median_latency_s = 0.0;
  double fps = 0.0;
  std::size_t total_detections = 0;
};

// Times the post-network stage (decode + suppression) over the given
// tensors, single-threaded. Latencies are per frame across all repetitions.
BenchReport bench_pipeline(const std::vector<PredictionTensor>& frames,
                           const GridConfig& grid, double conf_threshold,
                           const NmsConfig& nms_cfg, int repetitions);

}  // namespace gridsight
