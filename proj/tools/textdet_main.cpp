// Command-line front end for the detection pipeline: ground-truth map dumps,
// synthetic-data training, multi-scale detection, ICDAR-style evaluation, and
// an NMS before/after comparison.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "textdet/errors.hpp"
#include "textdet/evalharness.hpp"
#include "textdet/inference.hpp"
#include "textdet/labelgen.hpp"
#include "textdet/network.hpp"
#include "textdet/parallel.hpp"
#include "textdet/postprocess.hpp"
#include "textdet/synthetic.hpp"
#include "textdet/trainer.hpp"

namespace fs = std::filesystem;
using namespace textdet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << content;
  if (!f) throw IoError("short write to " + path);
}

/// img_17.png -> "17", gt_img_17.txt -> "17"; otherwise the bare stem.
std::string image_id(const fs::path& p) {
  std::string stem = p.stem().string();
  for (const char* prefix : {"gt_img_", "det_img_", "img_"}) {
    if (stem.rfind(prefix, 0) == 0) return stem.substr(std::string(prefix).size());
  }
  return stem;
}

Image grayscale_map(const Tensor& map, int channel, float lo, float hi) {
  int h = map.dim(0), w = map.dim(1);
  Image img(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float v = map.rank() == 3 ? map.at({y, x, channel}) : map.at({y, x});
      float t = (v - lo) / (hi - lo);
      img.at(x, y, 0) = static_cast<uint8_t>(std::lround(std::clamp(t, 0.0f, 1.0f) * 255.0f));
    }
  }
  return img;
}

std::vector<Annotation> to_annotations(const GroundTruthFile& gt) {
  std::vector<Annotation> out;
  for (const GroundTruthEntry& e : gt.entries) {
    Annotation a;
    a.quad = e.quad.normalized();
    a.is_dont_care = e.dont_care;
    out.push_back(a);
  }
  return out;
}

int cmd_gen_gt(const std::string& image_path, const std::string& gt_path,
               const std::string& out_dir) {
  Image img = read_image(image_path);
  GroundTruthFile gt = parse_ground_truth(read_file(gt_path));
  std::vector<Annotation> anns = to_annotations(gt);
  int w = img.width - img.width % 4;
  int h = img.height - img.height % 4;
  LabelMaps maps = make_label_maps(w, h, anns, 4, {});
  fs::create_directories(out_dir);
  write_image(grayscale_map(maps.cls, 0, 0.0f, 1.0f), out_dir + "/cls.pgm");
  write_image(grayscale_map(maps.care, 0, 0.0f, 1.0f), out_dir + "/care.pgm");
  for (int ch = 0; ch < 8; ++ch) {
    write_image(grayscale_map(maps.loc, ch, -400.0f, 400.0f),
                out_dir + "/loc" + std::to_string(ch) + ".pgm");
  }
  std::cout << "wrote 10 label maps to " << out_dir << "\n";
  return 0;
}

struct SynthSpec {
  SceneConfig scene;
  int count = 200;
};

int cmd_synth(const SynthSpec& spec, uint64_t seed, const std::string& out_dir) {
  fs::create_directories(out_dir);
  Rng rng(seed);
  for (int i = 0; i < spec.count; ++i) {
    Rng scene_rng = rng.fork(static_cast<uint64_t>(i));
    SyntheticScene scene = generate_synthetic_scene(spec.scene, scene_rng);
    write_image(scene.image, out_dir + "/img_" + std::to_string(i) + ".ppm");
    GroundTruthFile gt;
    for (const Annotation& a : scene.annotations) {
      gt.entries.push_back({a.quad, a.is_dont_care ? "###" : "text", a.is_dont_care});
    }
    write_file(out_dir + "/gt_img_" + std::to_string(i) + ".txt", serialize_ground_truth(gt));
  }
  std::cout << "wrote " << spec.count << " scenes to " << out_dir << "\n";
  return 0;
}

struct TrainArgs {
  std::string data_dir;
  SynthSpec synth;
  bool use_synth = false;
  TrainSchedule sched;
  LossConfig loss;
  TileConfig tiles;
  NetworkConfig net;
  std::string out_stem = "model";
  std::string log_path;
};

int cmd_train(TrainArgs& args) {
  struct Scene {
    Image image;
    std::vector<Annotation> annotations;
  };
  std::vector<Scene> scenes;
  if (args.use_synth) {
    Rng rng(args.sched.seed);
    for (int i = 0; i < args.synth.count; ++i) {
      Rng scene_rng = rng.fork(1000 + static_cast<uint64_t>(i));
      SyntheticScene s = generate_synthetic_scene(args.synth.scene, scene_rng);
      scenes.push_back({std::move(s.image), std::move(s.annotations)});
    }
  } else {
    std::vector<fs::path> images;
    for (const auto& e : fs::directory_iterator(args.data_dir)) {
      std::string ext = e.path().extension().string();
      if (ext == ".ppm" || ext == ".png") images.push_back(e.path());
    }
    std::sort(images.begin(), images.end());
    if (images.empty()) throw IoError("no .ppm/.png images in " + args.data_dir);
    for (const fs::path& p : images) {
      fs::path gt_path = p.parent_path() / ("gt_img_" + image_id(p) + ".txt");
      GroundTruthFile gt = parse_ground_truth(read_file(gt_path.string()));
      scenes.push_back({read_image(p.string()), to_annotations(gt)});
    }
  }
  std::cout << "training on " << scenes.size() << " scenes\n";

  Rng build_rng(args.sched.seed);
  NetworkModel model = NetworkModel::build(args.net, build_rng);
  std::cout << "network parameters: " << model.parameter_count()
            << ", receptive field: " << NetworkModel::receptive_field(args.net) << "\n";

  TileConfig tiles = args.tiles;
  tiles.tile = args.net.input_size;
  SampleSource source = [&](int, int, Rng& rng) {
    const Scene& scene = scenes[static_cast<size_t>(rng.uniform_int(static_cast<int>(scenes.size())))];
    TrainingTile t = sample_training_tile(scene.image, scene.annotations, tiles, rng);
    TrainingSample sample;
    sample.tile = image_to_tensor(t.image);
    sample.labels = make_label_maps(tiles.tile, t.annotations, 4, {});
    return sample;
  };

  TrainResult result = train(model, source, args.sched, args.loss, [](const TrainLogRow& r) {
    std::printf("iter %6d  lr %.5f  total %.6f  cls %.6f  loc %.6f\n", r.iteration, r.lr, r.total,
                r.cls, r.loc);
  });
  model.save(args.out_stem);
  if (!args.log_path.empty()) write_file(args.log_path, train_log_csv(result.log));
  std::cout << "saved checkpoint " << args.out_stem << " (final loss " << result.final_loss
            << ")\n";
  return 0;
}

int cmd_detect(const std::string& checkpoint, const std::vector<std::string>& images,
               const std::string& out_dir, const DetectConfig& cfg, const std::string& nms_mode,
               double overlap) {
  NetworkModel model = NetworkModel::load(checkpoint);
  if (model.config().input_size != cfg.window) {
    throw ConfigError("window must equal the checkpoint input size " +
                      std::to_string(model.config().input_size));
  }
  fs::create_directories(out_dir);
  TileForward forward = model_forward(model);
  NmsConfig nms_cfg;
  nms_cfg.overlap_threshold = overlap;
  for (const std::string& path : images) {
    Image img = read_image(path);
    std::vector<DetectionCandidate> cands = detect_image(forward, img, cfg);
    std::vector<DetectionCandidate> final_dets;
    if (nms_mode == "traditional") {
      final_dets = traditional_nms(cands, nms_cfg);
    } else if (nms_mode == "recalled") {
      final_dets = recalled_nms(cands, nms_cfg);
    } else {
      final_dets = cands;
    }
    std::string out_path = out_dir + "/det_img_" + image_id(path) + ".txt";
    write_file(out_path, format_candidates(final_dets));
    std::cout << path << ": " << cands.size() << " candidates -> " << final_dets.size()
              << " detections\n";
  }
  return 0;
}

int cmd_eval(const std::string& det_dir, const std::string& gt_dir, double iou_threshold) {
  std::map<std::string, GroundTruthFile> gts;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.path().extension() != ".txt") continue;
    gts[image_id(e.path())] = parse_ground_truth(read_file(e.path().string()));
  }
  if (gts.empty()) throw IoError("no ground-truth .txt files in " + gt_dir);
  std::map<std::string, std::vector<DetectionCandidate>> dets;
  for (const auto& e : fs::directory_iterator(det_dir)) {
    if (e.path().extension() != ".txt") continue;
    dets[image_id(e.path())] = parse_candidates(read_file(e.path().string()));
  }
  EvalReport report = evaluate(dets, gts, iou_threshold);
  std::cout << report_text(report);
  return 0;
}

int cmd_nms_demo(const std::string& candidates_path, double overlap) {
  std::vector<DetectionCandidate> cands = parse_candidates(read_file(candidates_path));
  NmsConfig cfg;
  cfg.overlap_threshold = overlap;
  std::vector<DetectionCandidate> trad = traditional_nms(cands, cfg);
  std::vector<DetectionCandidate> rec = recalled_nms(cands, cfg);
  std::cout << "input: " << cands.size() << " candidates\n" << format_candidates(cands);
  std::cout << "traditional NMS: " << trad.size() << " detections\n" << format_candidates(trad);
  std::cout << "recalled NMS: " << rec.size() << " detections\n" << format_candidates(rec);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-oriented text detection pipeline"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0 = hardware)");

  // gen-gt
  auto* gen = app.add_subcommand("gen-gt", "dump label maps for an annotated image");
  std::string gen_image, gen_gt, gen_out = "gt_maps";
  gen->add_option("--image", gen_image, "input image")->required();
  gen->add_option("--gt", gen_gt, "ICDAR-style annotation file")->required();
  gen->add_option("--out", gen_out, "output directory");

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic scenes with ground truth");
  SynthSpec synth_spec;
  uint64_t synth_seed = 7;
  std::string synth_out = "synth";
  synth->add_option("--count", synth_spec.count, "number of scenes");
  synth->add_option("--size", synth_spec.scene.width, "scene side length")
      ->check(CLI::PositiveNumber);
  synth->add_option("--min-boxes", synth_spec.scene.min_boxes, "minimum boxes per scene");
  synth->add_option("--max-boxes", synth_spec.scene.max_boxes, "maximum boxes per scene");
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("--out", synth_out, "output directory");

  // train
  auto* tr = app.add_subcommand("train", "train a model from scratch");
  TrainArgs ta;
  tr->add_option("--data", ta.data_dir, "directory of images + gt_img_<id>.txt files");
  tr->add_flag("--synthetic", ta.use_synth, "train on generated scenes instead of --data");
  tr->add_option("--scenes", ta.synth.count, "synthetic scene count");
  tr->add_option("--scene-size", ta.synth.scene.width, "synthetic scene side");
  tr->add_option("--iterations", ta.sched.iterations, "SGD iterations");
  tr->add_option("--batch", ta.sched.batch_size, "batch size");
  tr->add_option("--lr", ta.sched.base_lr, "base learning rate");
  tr->add_option("--seed", ta.sched.seed, "random seed");
  tr->add_option("--lambda-switch", ta.loss.lambda_switch_iter,
                 "iteration at which lambda_loc rises to its main value (-1 = iterations/2)");
  tr->add_option("--hard-switch", ta.loss.hard_ratio_switch_iter,
                 "iteration at which the hard-negative ratio switches (-1 = 0.3*iterations)");
  tr->add_option("--out", ta.out_stem, "checkpoint stem");
  tr->add_option("--log", ta.log_path, "loss log CSV path");
  tr->add_option("--checkpoint-every", ta.sched.checkpoint_every, "periodic checkpoint interval");
  ta.loss.lambda_switch_iter = -1;
  ta.loss.hard_ratio_switch_iter = -1;

  // detect
  auto* det = app.add_subcommand("detect", "run multi-scale detection on images");
  std::string det_checkpoint, det_out = "detections", det_nms = "recalled";
  std::vector<std::string> det_images;
  DetectConfig det_cfg;
  double det_overlap = 0.5;
  det->add_option("--checkpoint", det_checkpoint, "checkpoint stem")->required();
  det->add_option("--images", det_images, "input images")->required();
  det->add_option("--out", det_out, "output directory");
  det->add_option("--nms", det_nms, "traditional | recalled | none")
      ->check(CLI::IsMember({"traditional", "recalled", "none"}));
  det->add_option("--threshold", det_cfg.cls_threshold, "classification score threshold");
  det->add_option("--overlap", det_overlap, "NMS overlap ratio");
  det->add_option("--window", det_cfg.window, "sliding window size");
  det->add_option("--stride", det_cfg.stride, "sliding window stride");
  det->add_option("--scales", det_cfg.scales, "multi-scale set");

  // eval
  auto* ev = app.add_subcommand("eval", "precision/recall/F against ground truth");
  std::string ev_dets, ev_gts;
  double ev_iou = 0.5;
  ev->add_option("--detections", ev_dets, "directory of det_img_<id>.txt files")->required();
  ev->add_option("--gt", ev_gts, "directory of gt_img_<id>.txt files")->required();
  ev->add_option("--iou", ev_iou, "match IoU threshold");

  // nms-demo
  auto* demo = app.add_subcommand("nms-demo", "before/after listing for both NMS variants");
  std::string demo_file;
  double demo_overlap = 0.5;
  demo->add_option("--candidates", demo_file, "candidate file (detection line format)")->required();
  demo->add_option("--overlap", demo_overlap, "NMS overlap ratio");

  CLI11_PARSE(app, argc, argv);
  set_thread_count(threads);

  try {
    if (gen->parsed()) return cmd_gen_gt(gen_image, gen_gt, gen_out);
    if (synth->parsed()) {
      synth_spec.scene.height = synth_spec.scene.width;
      return cmd_synth(synth_spec, synth_seed, synth_out);
    }
    if (tr->parsed()) {
      if (!ta.use_synth && ta.data_dir.empty()) {
        std::cerr << "train: need --data or --synthetic\n";
        return kExitUsage;
      }
      ta.synth.scene.height = ta.synth.scene.width;
      if (ta.loss.lambda_switch_iter < 0) ta.loss.lambda_switch_iter = ta.sched.iterations / 2;
      if (ta.loss.hard_ratio_switch_iter < 0) {
        ta.loss.hard_ratio_switch_iter =
            static_cast<int>(0.3 * static_cast<double>(ta.sched.iterations));
      }
      ta.sched.checkpoint_stem = ta.out_stem;
      return cmd_train(ta);
    }
    if (det->parsed()) return cmd_detect(det_checkpoint, det_images, det_out, det_cfg, det_nms,
                                         det_overlap);
    if (ev->parsed()) return cmd_eval(ev_dets, ev_gts, ev_iou);
    if (demo->parsed()) return cmd_nms_demo(demo_file, demo_overlap);
  } catch (const DivergenceDetected& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
