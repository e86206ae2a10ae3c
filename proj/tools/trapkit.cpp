#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "trapkit/cocoeval.hpp"
#include "trapkit/dataset_io.hpp"
#include "trapkit/fusenet.hpp"
#include "trapkit/motion.hpp"
#include "trapkit/report.hpp"
#include "trapkit/solar.hpp"
#include "trapkit/stereo.hpp"
#include "trapkit/synthgen.hpp"
#include "trapkit/trapd.hpp"

using namespace trapkit;
namespace fs = std::filesystem;

namespace {

bool parse_on_off(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw CLI::ValidationError("--depth", "expected on or off");
}

std::vector<TrainingSample> load_samples(const std::vector<DatasetFrame>& frames, const ModelConfig& cfg) {
  std::vector<TrainingSample> out;
  for (const auto& f : frames) out.push_back(make_sample(f.intensity, &f.depth, f.instances, cfg));
  return out;
}

std::vector<Detection> predict_split(const FuseNet& model, const std::vector<DatasetFrame>& frames) {
  std::vector<Detection> out;
  for (const auto& f : frames) {
    for (auto& inst : predict_instances(model, f.intensity, &f.depth)) {
      out.push_back({f.image_id, inst.class_id, inst.score.value_or(0.0), inst.bbox, std::move(inst.mask)});
    }
  }
  return out;
}

void print_report(const char* label, const EvalReport& r) {
  std::printf("%s: AP %.4f  AP50 %.4f  AP75 %.4f\n", label, r.ap_mean, r.ap50, r.ap75);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trapkit: RGB-D camera trap toolkit"};
  app.require_subcommand(1);

  // solar
  auto* solar = app.add_subcommand("solar", "Sunrise and sunset (UTC) for a location and date");
  double lat = 0, lon = 0;
  std::string date, at;
  solar->add_option("--lat", lat, "Latitude, degrees north")->required();
  solar->add_option("--lon", lon, "Longitude, degrees east")->required();
  solar->add_option("--date", date, "YYYY-MM-DD")->required();
  solar->add_option("--at", at, "Also print the trap mode at this ISO-8601 UTC instant");

  // motion
  auto* motion = app.add_subcommand("motion", "Image-based motion events over a frame directory");
  std::string motion_input, motion_roi, motion_out;
  DiffConfig diff_cfg;
  GmmConfig gmm_cfg;
  motion->add_option("--input", motion_input, "Directory of <unix_ms>.int.pgm frames")->required();
  motion->add_option("--roi", motion_roi, "ROI mask PGM (non-zero = monitored)");
  motion->add_option("--out", motion_out, "Output JSONL")->required();
  motion->add_option("--diff-threshold", diff_cfg.mean_change_threshold, "Mean absolute change, luminance units");
  motion->add_option("--fg-ratio", gmm_cfg.foreground_ratio_threshold, "GMM foreground ratio threshold");

  // stereo
  auto* stereo = app.add_subcommand("stereo", "Block-matching depth from a rectified pair");
  std::string left_path, right_path, depth_out, scene_depth_path;
  double focal = 600.0, baseline = 0.05;
  std::uint64_t pattern_seed = 1;
  double pattern_density = 0.0, pattern_amplitude = 60.0;
  StereoConfig stereo_cfg;
  stereo->add_option("--left", left_path)->required();
  stereo->add_option("--right", right_path, "Right view (omit to synthesise it from --scene-depth)");
  stereo->add_option("--focal", focal, "Focal length, pixels");
  stereo->add_option("--baseline", baseline, "Baseline, metres");
  stereo->add_option("--out", depth_out)->required();
  auto* seed_opt = stereo->add_option("--pattern-seed", pattern_seed);
  auto* density_opt = stereo->add_option("--pattern-density", pattern_density);
  stereo->add_option("--pattern-amplitude", pattern_amplitude, "Dot amplitude, luminance units");
  stereo->add_option("--scene-depth", scene_depth_path, "True depth PGM used to synthesise the right view");
  stereo->add_option("--block-size", stereo_cfg.block_size);
  stereo->add_option("--max-disparity", stereo_cfg.max_disparity);

  // synthgen
  auto* synth = app.add_subcommand("synthgen", "Generate a synthetic RGB-D dataset");
  GenerateOptions gen;
  double camouflage = 0.0;
  std::string synth_out;
  synth->add_option("--seed", gen.seed);
  synth->add_option("--frames", gen.frames)->required();
  synth->add_option("--split-ratio", gen.split_ratio, "Fraction of frames in the train split");
  synth->add_option("--camouflage", camouflage, "0 = natural luminance, 1 = background luminance");
  synth->add_option("--width", gen.ranges.image_width);
  synth->add_option("--height", gen.ranges.image_height);
  synth->add_option("--out", synth_out)->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the segmentation network");
  std::string dataset_dir, depth_flag = "on", model_out, weighting = "sqrt-inverse";
  ModelConfig model_cfg;
  train_cmd->add_option("--dataset", dataset_dir)->required();
  train_cmd->add_option("--depth", depth_flag, "on|off");
  train_cmd->add_option("--seed", model_cfg.seed);
  train_cmd->add_option("--epochs", model_cfg.epochs);
  train_cmd->add_option("--lr", model_cfg.learning_rate);
  train_cmd->add_option("--batch", model_cfg.batch_size);
  train_cmd->add_option("--weighting", weighting, "inverse|sqrt-inverse|uniform");
  train_cmd->add_option("--out", model_out)->required();

  // infer
  auto* infer = app.add_subcommand("infer", "Predict instances for a dataset split");
  std::string model_path, preds_out, split = "test";
  infer->add_option("--model", model_path)->required();
  infer->add_option("--dataset", dataset_dir)->required();
  infer->add_option("--split", split);
  infer->add_option("--out", preds_out)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "COCO-style AP of predictions against annotations");
  std::string preds_path, gt_path, kind = "mask", eval_out, pr_dir;
  eval->add_option("--preds", preds_path)->required();
  eval->add_option("--gt", gt_path)->required();
  eval->add_option("--kind", kind, "box|mask");
  eval->add_option("--out", eval_out)->required();
  eval->add_option("--pr-dir", pr_dir, "Directory for PR-curve SVGs (default: next to --out)");

  // run
  auto* run = app.add_subcommand("run", "Run the trap pipeline");
  std::string config_path;
  run->add_option("--config", config_path)->required();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train depth-on and depth-off models and compare them");
  std::string ablate_out;
  ablate->add_option("--dataset", dataset_dir)->required();
  ablate->add_option("--seed", model_cfg.seed);
  ablate->add_option("--epochs", model_cfg.epochs);
  ablate->add_option("--out", ablate_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solar) {
      const GeoLocation loc(lat, lon);
      const SolarEvents ev = solar_events(loc, parse_date(date));
      std::printf("sunrise %s\n", ev.sunrise ? format_iso8601(*ev.sunrise).c_str() : "none");
      std::printf("sunset %s\n", ev.sunset ? format_iso8601(*ev.sunset).c_str() : "none");
      std::printf("polar %s\n", to_string(ev.polar));
      if (!at.empty()) std::printf("mode %s\n", to_string(mode_at(loc, parse_iso8601(at))));
    } else if (*motion) {
      DirectorySource src(motion_input);
      std::optional<SourceFrame> first = src.next();
      if (!first) throw std::runtime_error("no frames in " + motion_input);
      RoiMask roi = motion_roi.empty() ? RoiMask(first->intensity.width(), first->intensity.height(), std::uint8_t{1})
                                       : read_mask_pgm(motion_roi);
      MotionDetector det(std::move(roi), diff_cfg, gmm_cfg);
      std::ofstream out(motion_out);
      if (!out) throw std::runtime_error("cannot write " + motion_out);
      long events = 0;
      for (auto f = std::move(first); f; f = src.next()) {
        if (auto ev = det.step(f->intensity, f->timestamp)) {
          out << motion_event_to_json(*ev).dump() << '\n';
          ++events;
        }
      }
      std::printf("%ld events\n", events);
    } else if (*stereo) {
      const bool patterned = seed_opt->count() > 0 || density_opt->count() > 0;
      RectifiedPair pair;
      pair.left = read_pgm(left_path);
      pair.baseline_m = baseline;
      pair.focal_px = focal;
      if (patterned) pair.left = project_dot_pattern(pair.left, pattern_seed, pattern_density, pattern_amplitude);
      if (!scene_depth_path.empty()) {
        pair.right = synthesize_right_view(pair.left, read_pgm(scene_depth_path), baseline, focal);
      } else {
        if (patterned) throw std::runtime_error("a projected pattern needs --scene-depth to re-synthesise the right view");
        if (right_path.empty()) throw std::runtime_error("--right or --scene-depth is required");
        pair.right = read_pgm(right_path);
      }
      const DisparityMap d = block_match(pair, stereo_cfg);
      write_pgm16(depth_out, disparity_to_depth(d, baseline, focal));
      std::printf("%zu of %zu pixels valid\n", d.valid.count(), d.valid.size());
    } else if (*synth) {
      gen.ranges.camouflage = {camouflage, camouflage};
      const Manifest m = generate_dataset(gen, synth_out);
      std::cout << manifest_to_json(m).dump(2) << '\n';
    } else if (*train_cmd) {
      model_cfg.depth_enabled = parse_on_off(depth_flag);
      model_cfg.weighting = class_weighting_from_string(weighting);
      FuseNet model(model_cfg);
      const auto samples = load_samples(read_dataset(dataset_dir, "train"), model_cfg);
      train(model, samples, [](int epoch, double loss) {
        log_message(LogLevel::Info, "epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
      });
      save_model(model, model_out);
      std::printf("trained on %zu frames, saved %s\n", samples.size(), model_out.c_str());
    } else if (*infer) {
      const FuseNet model = load_model(model_path);
      const auto dets = predict_split(model, read_dataset(dataset_dir, split));
      write_predictions(dets, preds_out);
      std::printf("%zu detections\n", dets.size());
    } else if (*eval) {
      EvalConfig cfg;
      cfg.iou_kind = iou_kind_from_string(kind);
      const EvalReport r = evaluate(read_predictions(preds_path), read_ground_truth(gt_path), cfg);
      write_eval_csv(r, eval_out);
      const fs::path dir = pr_dir.empty() ? fs::path(eval_out).parent_path() : fs::path(pr_dir);
      write_pr_curves(r, dir.empty() ? fs::path(".") : dir, std::string("pr_") + to_string(cfg.iou_kind));
      print_report(to_string(cfg.iou_kind), r);
    } else if (*run) {
      const TrapConfig cfg = load_trap_config(config_path);
      const RunSummary s = run_pipeline(cfg);
      std::printf("%ld frames (%ld day, %ld night), %ld motion events, %zu sequences\n", s.frames, s.day_frames,
                  s.night_frames, s.motion_events, s.sequences.size());
      for (const auto& r : s.sequences) {
        std::printf("%s %s..%s %s %s %zu frames\n", r.id.c_str(), format_iso8601(r.start).c_str(),
                    format_iso8601(r.end).c_str(), to_string(r.mode), to_string(r.trigger), r.frame_count);
      }
    } else if (*ablate) {
      const auto train_frames = read_dataset(dataset_dir, "train");
      const auto test_frames = read_dataset(dataset_dir, "test");
      const auto gts = to_ground_truth(test_frames);
      EvalReport reports[2][2];  // [depth on/off][box/mask]
      for (int d = 0; d < 2; ++d) {
        ModelConfig cfg = model_cfg;
        cfg.depth_enabled = d == 0;
        FuseNet model(cfg);
        train(model, load_samples(train_frames, cfg));
        const auto dets = predict_split(model, test_frames);
        for (int k = 0; k < 2; ++k) {
          EvalConfig ec;
          ec.iou_kind = k == 0 ? IouKind::Box : IouKind::Mask;
          reports[d][k] = evaluate(dets, gts, ec);
        }
        print_report(d == 0 ? "depth on, box" : "depth off, box", reports[d][0]);
        print_report(d == 0 ? "depth on, mask" : "depth off, mask", reports[d][1]);
      }
      const ReportFiles files = emit_report(reports[0][0], reports[1][0], reports[0][1], reports[1][1], ablate_out);
      std::printf("wrote %s\n", files.csv.c_str());
    }
  } catch (const std::exception& e) {
    std::cerr << "trapkit: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
