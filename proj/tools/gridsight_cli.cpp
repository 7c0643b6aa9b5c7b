// gridsight command-line front end: gen -> train -> detect -> eval pipelines
// plus bench and nms-demo utilities. All stages are reproducible from --seed.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "gridsight/datagen.hpp"
#include "gridsight/errors.hpp"
#include "gridsight/evalmap.hpp"
#include "gridsight/gridcodec.hpp"
#include "gridsight/model.hpp"
#include "gridsight/nms.hpp"
#include "gridsight/rng.hpp"

namespace fs = std::filesystem;
using namespace gridsight;

namespace {

struct GlobalArgs {
  std::uint64_t seed = 0;
  int grid_n = 9;
  std::string out_dir = ".";
};

std::string out_path(const GlobalArgs& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / name).string();
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void add_global_flags(CLI::App* cmd, GlobalArgs& g) {
  cmd->add_option("--seed", g.seed, "Seed for all stochastic choices");
  cmd->add_option("--grid-n", g.grid_n, "Grid size")
      ->check(CLI::IsMember({9, 11, 13}));
  cmd->add_option("--out", g.out_dir, "Output directory");
}

int run_gen(const GlobalArgs& g, const SceneSpec& spec, int count) {
  SceneSpec s = spec;
  s.grid_n = g.grid_n;
  const auto scenes = generate_dataset(s, count, g.seed);
  const auto path = out_path(g, "annotations.jsonl");
  write_annotations(scenes, path);
  std::cout << "wrote " << scenes.size() << " scenes to " << path << "\n";
  return 0;
}

struct TrainArgs {
  std::string annotations;
  std::string init_model;
  TrainConfig cfg;
  bool freeze_layer1 = false;
  bool freeze_layer2 = false;
};

int run_train(const GlobalArgs& g, const TrainArgs& args) {
  const auto dataset = read_annotations(args.annotations);
  const GridConfig grid(g.grid_n);
  TrainConfig cfg = args.cfg;
  cfg.seed = g.seed;
  cfg.freeze.layer1 = args.freeze_layer1;
  cfg.freeze.layer2 = args.freeze_layer2;
  cfg.schedule.total_epochs = cfg.epochs;

  TrainResult result;
  if (!args.init_model.empty()) {
    const auto initial = load_params(args.init_model);
    result = train(dataset, grid, cfg, &initial);
  } else {
    result = train(dataset, grid, cfg);
  }

  const auto model_path = out_path(g, "model.bin");
  save_params(result.params, model_path);

  const auto history_path = out_path(g, "history.csv");
  std::ofstream hist(history_path);
  if (!hist) throw IoError("cannot open " + history_path + " for writing");
  hist << "epoch,l2_center,sqrt_wh,iou_obj,conf_obj,conf_noobj,class_term,"
          "total\n";
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    const auto& b = result.history[e];
    hist << e << ',' << fmt17(b.l2_center) << ',' << fmt17(b.sqrt_wh) << ','
         << fmt17(b.iou_obj) << ',' << fmt17(b.conf_obj) << ','
         << fmt17(b.conf_noobj) << ',' << fmt17(b.class_term) << ','
         << fmt17(b.total) << '\n';
  }
  std::cout << "trained " << cfg.epochs << " epochs over " << dataset.size()
            << " scenes; final loss " << result.history.back().total << "\n"
            << "wrote " << model_path << " and " << history_path << "\n";
  return 0;
}

int run_detect(const GlobalArgs& g, const std::string& model_path,
               const std::string& annotations, double conf_threshold,
               const NmsConfig& nms_cfg) {
  const auto params = load_params(model_path);
  const auto dataset = read_annotations(annotations);
  const GridConfig grid(g.grid_n);
  if (dataset.empty()) throw DataError("detect: no scenes in " + annotations);
  check_model_shape(params, grid, static_cast<int>(dataset[0].features.size()));

  std::vector<ImageDetections> images;
  images.reserve(dataset.size());
  for (const auto& scene : dataset) {
    const auto pred = forward(params, scene.features, grid.n);
    auto dets = decode(pred, grid, conf_threshold);
    ImageDetections img;
    img.id = scene.id;
    img.dets = nms_scale_synthesis(std::move(dets), nms_cfg);
    images.push_back(std::move(img));
  }
  const auto path = out_path(g, "detections.jsonl");
  write_detections(images, path);
  std::size_t total = 0;
  for (const auto& img : images) total += img.dets.size();
  std::cout << "wrote " << total << " detections over " << images.size()
            << " scenes to " << path << "\n";
  return 0;
}

int run_eval(const GlobalArgs& g, const std::string& detections,
             const std::string& annotations, double iou_match) {
  const auto dets = read_detections(detections);
  const auto scenes = read_annotations(annotations);

  std::vector<std::vector<Detection>> dets_per_image(scenes.size());
  std::vector<std::vector<GroundTruth>> gts_per_image(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    gts_per_image[i] = scenes[i].gts;
  }
  for (const auto& img : dets) {
    bool found = false;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      if (scenes[i].id == img.id) {
        dets_per_image[i] = img.dets;
        found = true;
        break;
      }
    }
    if (!found) {
      throw DataError("eval: detections reference unknown scene id " +
                      std::to_string(img.id));
    }
  }

  EvalConfig cfg;
  cfg.iou_match = iou_match;
  const auto report = map_report(dets_per_image, gts_per_image, cfg);
  const auto text = format_report(report, "gridsight synthetic");
  std::cout << text;

  const auto report_path = out_path(g, "report.txt");
  std::ofstream out(report_path);
  if (!out) throw IoError("cannot open " + report_path + " for writing");
  out << text;

  for (int c = 0; c < kClasses; ++c) {
    if (report.gt_count[c] < 1) continue;
    const auto csv =
        out_path(g, "pr_" + std::string(kClassNames[c]) + ".csv");
    write_pr_csv(report.curves[c], csv);
  }
  std::cout << "wrote " << report_path << " and per-class PR curves\n";
  return 0;
}

// Synthesizes tensors with a fixed number of active slots per frame.
std::vector<PredictionTensor> synth_frames(const GridConfig& grid, int frames,
                                           int active, std::uint64_t seed) {
  std::vector<PredictionTensor> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    Rng rng(Rng::mix(seed, 0xbe9c4 + static_cast<std::uint64_t>(i)));
    auto t = make_tensor(grid);
    for (int k = 0; k < active; ++k) {
      const int cell = rng.uniform_int(0, grid.cells() - 1);
      const int anchor = rng.uniform_int(0, kAnchorsPerCell - 1);
      const int cls = rng.uniform_int(0, kClasses - 1);
      t.values[class_index(cell, cls)] = 1.0;
      t.values[coord_index(cell, anchor, 0)] = rng.uniform(0.2, 0.8);
      t.values[coord_index(cell, anchor, 1)] = rng.uniform(0.2, 0.8);
      t.values[coord_index(cell, anchor, 2)] = rng.uniform(0.05, 0.3);
      t.values[coord_index(cell, anchor, 3)] = rng.uniform(0.05, 0.3);
      t.values[conf_index(cell, anchor)] = rng.uniform(0.75, 1.0);
    }
    out.push_back(std::move(t));
  }
  return out;
}

int run_bench(const GlobalArgs& g, const std::vector<std::string>& tensor_files,
              const std::string& model_path, const std::string& annotations,
              int frames, int active, int repetitions, double conf_threshold,
              const NmsConfig& nms_cfg) {
  const GridConfig grid(g.grid_n);
  std::vector<PredictionTensor> tensors;
  if (!tensor_files.empty()) {
    for (const auto& f : tensor_files) tensors.push_back(read_tensor(f));
  } else if (!model_path.empty()) {
    const auto params = load_params(model_path);
    const auto dataset = read_annotations(annotations);
    if (dataset.empty()) throw DataError("bench: no scenes in " + annotations);
    check_model_shape(params, grid,
                      static_cast<int>(dataset[0].features.size()));
    for (const auto& scene : dataset) {
      tensors.push_back(forward(params, scene.features, grid.n));
    }
  } else {
    tensors = synth_frames(grid, frames, active, g.seed);
  }
  for (const auto& t : tensors) {
    if (t.n != grid.n) {
      throw ConfigError("bench: tensor grid n=" + std::to_string(t.n) +
                        " does not match --grid-n " + std::to_string(grid.n));
    }
  }

  const auto report =
      bench_pipeline(tensors, grid, conf_threshold, nms_cfg, repetitions);
  std::printf("frames=%d repetitions=%d detections=%zu\n", report.frames,
              report.repetitions, report.total_detections);
  std::printf("mean_latency_us=%.3f median_latency_us=%.3f fps=%.1f\n",
              report.mean_latency_s * 1e6, report.median_latency_s * 1e6,
              report.fps);
  return 0;
}

int run_nms_demo(const std::string& detections, const NmsConfig& cfg) {
  const auto images = read_detections(detections);
  for (const auto& img : images) {
    std::cout << "scene " << img.id << ": " << img.dets.size() << " raw\n";
    for (const auto& d : img.dets) {
      std::printf("  in  class=%d score=%.4f box=(%.4f, %.4f, %.4f, %.4f)\n",
                  d.class_id, d.score, d.box.cx, d.box.cy, d.box.w, d.box.h);
    }
    const auto kept = nms_scale_synthesis(img.dets, cfg);
    std::cout << "  -> " << kept.size() << " kept\n";
    for (const auto& d : kept) {
      std::printf("  out class=%d score=%.4f box=(%.4f, %.4f, %.4f, %.4f)\n",
                  d.class_id, d.score, d.box.cx, d.box.cy, d.box.w, d.box.h);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridsight: grid/anchor detection numerics pipeline"};
  app.require_subcommand(1);

  GlobalArgs g;

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_global_flags(gen, g);
  SceneSpec spec;
  int gen_count = 100;
  gen->add_option("--count", gen_count, "Number of scenes")->required();
  gen->add_option("--objects-min", spec.objects_min, "Min objects per scene");
  gen->add_option("--objects-max", spec.objects_max, "Max objects per scene");
  gen->add_option("--occlusion-rate", spec.occlusion_rate,
                  "Probability of a nested pair");
  gen->add_option("--feature-res", spec.feature_resolution,
                  "Feature raster side length");

  // train
  auto* tr = app.add_subcommand("train", "Train the toy predictor");
  add_global_flags(tr, g);
  TrainArgs targs;
  tr->add_option("--annotations", targs.annotations, "Annotation file")
      ->required();
  tr->add_option("--epochs", targs.cfg.epochs, "Training epochs");
  tr->add_option("--batch-size", targs.cfg.batch_size, "Batch size");
  tr->add_option("--hidden", targs.cfg.hidden, "Hidden layer width");
  tr->add_option("--lr-start", targs.cfg.schedule.eta_start, "Initial rate");
  tr->add_option("--lr-end", targs.cfg.schedule.eta_end, "Final rate");
  tr->add_option("--lambda-obj", targs.cfg.loss.lambda_obj, "Object weight");
  tr->add_option("--lambda-noobj", targs.cfg.loss.lambda_noobj,
                 "No-object weight");
  tr->add_option("--neg-per-pos", targs.cfg.mining.neg_per_pos,
                 "Mined negatives per positive");
  std::string iou_variant = "union";
  tr->add_option("--iou-variant", iou_variant, "union or symdiff")
      ->check(CLI::IsMember({"union", "symdiff"}));
  tr->add_option("--init", targs.init_model, "Initial model for fine-tuning");
  tr->add_flag("--freeze-layer1", targs.freeze_layer1, "Freeze layer 1");
  tr->add_flag("--freeze-layer2", targs.freeze_layer2, "Freeze layer 2");

  // detect
  auto* de = app.add_subcommand("detect", "Run the model over annotations");
  add_global_flags(de, g);
  std::string detect_model, detect_annotations;
  double conf_threshold = 0.5;
  NmsConfig nms_cfg;
  de->add_option("--model", detect_model, "Model file")->required();
  de->add_option("--annotations", detect_annotations, "Annotation file")
      ->required();
  de->add_option("--conf-threshold", conf_threshold, "Score threshold");
  de->add_option("--nms-iou", nms_cfg.iou_suppress, "Suppression overlap");
  de->add_option("--nms-lambda", nms_cfg.lambda_containment,
                 "Containment score margin");

  // eval
  auto* ev = app.add_subcommand("eval", "Score detections against annotations");
  add_global_flags(ev, g);
  std::string eval_detections, eval_annotations;
  double iou_match = 0.5;
  ev->add_option("--detections", eval_detections, "Detections file")
      ->required();
  ev->add_option("--annotations", eval_annotations, "Annotation file")
      ->required();
  ev->add_option("--iou-match", iou_match, "Matching overlap threshold");

  // bench
  auto* be = app.add_subcommand("bench", "Time the decode+NMS stage");
  add_global_flags(be, g);
  std::vector<std::string> bench_tensors;
  std::string bench_model, bench_annotations;
  int bench_frames = 200;
  int bench_active = 20;
  int bench_reps = 5;
  double bench_threshold = 0.5;
  NmsConfig bench_nms;
  be->add_option("--tensor", bench_tensors, "Tensor files to replay");
  be->add_option("--model", bench_model, "Model producing the tensors");
  be->add_option("--annotations", bench_annotations,
                 "Scenes for --model mode");
  be->add_option("--frames", bench_frames, "Synthetic frame count");
  be->add_option("--active", bench_active, "Active slots per frame");
  be->add_option("--repetitions", bench_reps, "Timing repetitions");
  be->add_option("--conf-threshold", bench_threshold, "Score threshold");

  // nms-demo
  auto* nd = app.add_subcommand("nms-demo", "Show suppression before/after");
  add_global_flags(nd, g);
  std::string demo_detections;
  NmsConfig demo_cfg;
  nd->add_option("--detections", demo_detections, "Detections file")
      ->required();
  nd->add_option("--nms-iou", demo_cfg.iou_suppress, "Suppression overlap");
  nd->add_option("--nms-lambda", demo_cfg.lambda_containment,
                 "Containment score margin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) return run_gen(g, spec, gen_count);
    if (tr->parsed()) {
      targs.cfg.loss.iou_variant = iou_variant == "symdiff"
                                       ? IouVariant::SymmetricDifference
                                       : IouVariant::Union;
      return run_train(g, targs);
    }
    if (de->parsed()) {
      return run_detect(g, detect_model, detect_annotations, conf_threshold,
                        nms_cfg);
    }
    if (ev->parsed()) return run_eval(g, eval_detections, eval_annotations,
                                      iou_match);
    if (be->parsed()) {
      if (!bench_model.empty() && bench_annotations.empty()) {
        throw ConfigError("bench: --model requires --annotations");
      }
      return run_bench(g, bench_tensors, bench_model, bench_annotations,
                       bench_frames, bench_active, bench_reps, bench_threshold,
                       bench_nms);
    }
    if (nd->parsed()) return run_nms_demo(demo_detections, demo_cfg);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
