// geodiff command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "geodiff/config.hpp"
#include "geodiff/ensemble.hpp"
#include "geodiff/io.hpp"
#include "geodiff/metrics.hpp"
#include "geodiff/normalize.hpp"
#include "geodiff/tiling.hpp"
#include "geodiff/toy/oracles.hpp"
#include "geodiff/toy/scene.hpp"
#include "geodiff/toy/train.hpp"

namespace fs = std::filesystem;
using namespace geodiff;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

// Flags shared by every subcommand; they override the config file.
struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> spacing;
  std::optional<int> ensemble;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool out_required = true) {
  cmd->add_option("--config", f.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--steps", f.steps, "number of denoising steps");
  cmd->add_option("--spacing", f.spacing, "timestep spacing")->check(CLI::IsMember({"leading", "trailing"}));
  cmd->add_option("--ensemble", f.ensemble, "ensemble size");
  auto* out = cmd->add_option("--out", f.out, "output path");
  if (out_required) out->required();
}

RunConfig load_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = parse_config(read_file(f.config_path));
  if (f.seed) cfg.seed = *f.seed;
  if (f.steps) cfg.steps = *f.steps;
  if (f.spacing) cfg.spacing = parse_spacing(*f.spacing);
  if (f.ensemble) cfg.ensemble_size = *f.ensemble;
  return cfg;
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p += suffix;
  return p;
}

std::string format_trace(const std::vector<double>& trace) {
  std::string s;
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu %.17g\n", i, trace[i]);
    s += buf;
  }
  return s;
}

// --- ensemble -----------------------------------------------------------

int cmd_ensemble(const CommonFlags& flags, const std::vector<std::string>& inputs) {
  const RunConfig cfg = load_config(flags);
  require(cfg.ensemble_size >= 1, "ensemble size must be positive");
  // ensemble_size caps how many of the inputs are merged.
  const std::size_t n = std::min(inputs.size(), static_cast<std::size_t>(cfg.ensemble_size));
  std::vector<Field2D> members;
  for (std::size_t i = 0; i < n; ++i) {
    const PfmImage img = read_pfm(inputs[i]);
    if (img.kind != PfmKind::grayscale) throw IoError(inputs[i] + ": expected a grayscale depth map");
    members.push_back(from_pfm(img).plane(0));
    if (!members.back().same_shape(members.front())) throw IoError(inputs[i] + ": dimensions differ from the first input");
  }
  const EnsembleSolution sol = optimize_ensemble(members, ensemble_options(cfg), cfg.seed);

  char buf[128];
  std::string report;
  std::snprintf(buf, sizeof buf, "members = %zu\nobjective = %.17g\niterations = %d\n", n, sol.objective_value,
                sol.iterations_used);
  report += buf;
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "scale_%zu = %.17g\nshift_%zu = %.17g\n", i, sol.scales[i], i, sol.shifts[i]);
    report += buf;
  }
  write_pfm(flags.out, to_pfm(sol.merged));
  write_file_atomic(sibling(flags.out, ".report.txt"), report);
  if (sol.uncertainty) write_pfm(sibling(flags.out, ".uncertainty.pfm"), to_pfm(*sol.uncertainty));
  return kOk;
}

// --- evaluate -----------------------------------------------------------

int cmd_evaluate(const CommonFlags& flags, const std::string& pred_path, const std::string& gt_path,
                 const std::string& modality) {
  const RunConfig cfg = load_config(flags);
  const PfmImage pred_img = read_pfm(pred_path);
  const PfmImage gt_img = read_pfm(gt_path);
  if (pred_img.kind != gt_img.kind || pred_img.width != gt_img.width || pred_img.height != gt_img.height) {
    throw InvalidArgument("prediction and ground truth differ in kind or size");
  }
  const FieldStack pred = from_pfm(pred_img);
  const FieldStack gt = from_pfm(gt_img);
  const bool color = pred_img.kind == PfmKind::color;

  MetricsReport report;
  if (modality == "depth" || modality == "edges") {
    require(!color, modality + " evaluation expects grayscale maps");
    if (modality == "depth") {
      report = evaluate_depth(pred.plane(0), gt.plane(0), {cfg.min_depth});
    } else {
      report = evaluate_edges(pred.plane(0), gt.plane(0), {cfg.edge_threshold, cfg.dbe_truncation, cfg.match_radius});
    }
  } else if (modality == "normals") {
    require(color, "normals evaluation expects 3-channel maps");
    report = evaluate_normals(pred, gt);
  } else {
    ImageEvalOptions opts;
    opts.scale_align_first = modality == "shading";
    report = evaluate_image(pred, gt, opts);
  }
  report.config["modality"] = modality;
  write_file_atomic(flags.out, format_metrics(report));
  return kOk;
}

// --- tile-infer ---------------------------------------------------------

int cmd_tile_infer(const CommonFlags& flags, std::optional<std::uint64_t> scene_seed, const std::string& image_path) {
  const RunConfig cfg = load_config(flags);
  const DiffusionSchedule schedule = build_schedule(cfg);
  const TimestepSpacing spacing = build_spacing(cfg);
  HiresParams params;
  params.target_scale = cfg.target_scale;
  params.tile_h = params.tile_w = cfg.tile_size;
  params.overlap_fraction = cfg.tile_overlap;

  FieldStack image(3, 1, 1);
  if (scene_seed) {
    const toy::ToyScene scene = toy::gen_scene(*scene_seed, cfg.scene_height, cfg.scene_width);
    image = toy::make_training_sample(scene).cond;
    if (cfg.denoiser == "oracle") {
      // The oracle reads the answer from extra image channels holding the
      // normalized scene depth, so the pipeline must reproduce the scene.
      const NormalizedDepth nd = normalize_depth(scene.depth);
      params.output_norm = nd.norm;
      const FieldStack parts[] = {image, replicate_channels(nd.depth)};
      image = concat_channels(parts);
    }
  } else {
    image = from_pfm(read_pfm(image_path));
  }

  std::unique_ptr<Denoiser> base;
  std::unique_ptr<Denoiser> refiner;
  if (cfg.denoiser == "oracle") {
    require(scene_seed.has_value(), "the oracle denoiser needs --scene-seed");
    const int ic = image.channels();
    base = std::make_unique<toy::ConditioningOracle>(3, 3, ic, schedule);
    refiner = std::make_unique<toy::ConditioningOracle>(3 + 3, 3, 3 + ic, schedule);
  } else {
    base = std::make_unique<toy::ToyDenoiser>(decode_denoiser(read_file(cfg.denoiser)));
    // Conditioning passthrough: the refiner keeps the upsampled global prediction.
    refiner = std::make_unique<toy::ConditioningOracle>(0, 3, 3 + image.channels(), schedule);
  }
  const HiresResult result = hires_pipeline(image, *base, *refiner, params, spacing, schedule, cfg.seed);
  write_pfm(flags.out, to_pfm(result.depth));
  return kOk;
}

// --- distill-demo -------------------------------------------------------

int cmd_distill_demo(const CommonFlags& flags) {
  const RunConfig cfg = load_config(flags);
  const DiffusionSchedule schedule = build_schedule(cfg);
  const toy::ToyScene scene = toy::gen_scene(cfg.seed, cfg.scene_height, cfg.scene_width);
  const std::vector<toy::TrainingSample> samples{toy::make_training_sample(scene)};

  const fs::path out = flags.out;
  std::optional<toy::ToyDenoiser> teacher;
  if (cfg.denoiser == "oracle") {
    try {
      teacher = toy::train_denoiser(toy::ToyDenoiser::initialize(toy_arch(cfg), cfg.parameterization, cfg.seed), samples,
                                    train_config(cfg), schedule)
                    .model;
    } catch (const toy::TrainingDiverged& e) {
      write_file_atomic(sibling(out, ".teacher_trace.txt"), format_trace(e.trace()));
      throw;
    }
  } else {
    teacher = decode_denoiser(read_file(cfg.denoiser));
  }
  // Round through the file format so student and teacher files compare exactly.
  teacher = decode_denoiser(encode_denoiser(*teacher));
  write_file_atomic(sibling(out, ".teacher"), encode_denoiser(*teacher));

  const toy::DistillResult result = toy::distill_lcm(*teacher, distill_config(cfg), samples, schedule);
  write_file_atomic(sibling(out, ".trace.txt"), format_trace(result.loss_trace));
  write_file_atomic(out, encode_denoiser(result.student));
  return kOk;
}

// --- gen-scene / convert ------------------------------------------------

int cmd_gen_scene(const CommonFlags& flags) {
  const RunConfig cfg = load_config(flags);
  const toy::ToyScene scene = toy::gen_scene(cfg.seed, cfg.scene_height, cfg.scene_width);
  write_pfm(sibling(flags.out, "_rgb.pfm"), to_pfm(scene.rgb));
  write_pfm(sibling(flags.out, "_depth.pfm"), to_pfm(scene.depth));
  write_pfm(sibling(flags.out, "_normals.pfm"), to_pfm(scene.normals));
  return kOk;
}

int cmd_convert(const CommonFlags& flags, const std::string& input) {
  const PfmImage img = read_pfm(input);
  const fs::path out = flags.out;
  if (out.extension() == ".pgm") {
    require(img.kind == PfmKind::grayscale, "pgm previews need a grayscale input");
    const Field2D f = from_pfm(img).plane(0);
    const auto [lo, hi] = std::minmax_element(f.values().begin(), f.values().end());
    write_file_atomic(out, encode_pgm16(f, *lo, *hi > *lo ? *hi : *lo + 1.0));
  } else {
    write_file_atomic(out, encode_pfm(img));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geodiff: diffusion-based dense prediction toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::vector<std::string> inputs;
  std::string pred_path, gt_path, modality = "depth", image_path, convert_input;
  std::optional<std::uint64_t> scene_seed;

  auto* ens = app.add_subcommand("ensemble", "merge depth maps by affine-aligned median");
  add_common(ens, flags);
  ens->add_option("inputs", inputs, "input depth PFMs")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("evaluate", "compare a prediction against ground truth");
  add_common(eval, flags);
  eval->add_option("pred", pred_path)->required();
  eval->add_option("gt", gt_path)->required();
  eval->add_option("--modality", modality)
      ->check(CLI::IsMember({"depth", "normals", "image", "shading", "edges"}));

  auto* tile = app.add_subcommand("tile-infer", "high-resolution tiled inference");
  add_common(tile, flags);
  auto* scene_opt = tile->add_option("--scene-seed", scene_seed, "generate the input scene from this seed");
  auto* image_opt = tile->add_option("--image", image_path, "RGB PFM input");
  scene_opt->excludes(image_opt);
  image_opt->excludes(scene_opt);

  auto* distill = app.add_subcommand("distill-demo", "train a toy teacher and distill a 1-step student");
  add_common(distill, flags);

  auto* gen = app.add_subcommand("gen-scene", "write a synthetic scene as <out>_{rgb,depth,normals}.pfm");
  add_common(gen, flags);

  auto* conv = app.add_subcommand("convert", "re-encode a PFM, or write a 16-bit PGM preview for .pgm outputs");
  add_common(conv, flags);
  conv->add_option("input", convert_input)->required();

  auto* show = app.add_subcommand("show-config", "print the effective configuration");
  add_common(show, flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*ens) return cmd_ensemble(flags, inputs);
    if (*eval) return cmd_evaluate(flags, pred_path, gt_path, modality);
    if (*tile) {
      if (!scene_seed && image_path.empty()) throw InvalidArgument("tile-infer needs --scene-seed or --image");
      return cmd_tile_infer(flags, scene_seed, image_path);
    }
    if (*distill) return cmd_distill_demo(flags);
    if (*gen) return cmd_gen_scene(flags);
    if (*conv) return cmd_convert(flags, convert_input);
    if (*show) {
      std::fputs(format_config(load_config(flags)).c_str(), stdout);
      return kOk;
    }
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumerical;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
