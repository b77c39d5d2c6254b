#include "geodiff/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <set>
#include <vector>

namespace geodiff {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_value(std::string_view s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw InvalidArgument("bad number '" + std::string(s) + "'");
  return v;
}

template <>
bool parse_value<bool>(std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw InvalidArgument("bad boolean '" + std::string(s) + "'");
}

std::string show(double v) {
  char buf[64];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}
std::string show(int v) { return std::to_string(v); }
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(bool v) { return v ? "true" : "false"; }

struct Entry {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Entry number(std::string_view key, T RunConfig::*field) {
  return {key, [field](RunConfig& c, std::string_view v) { c.*field = parse_value<T>(v); },
          [field](const RunConfig& c) { return show(c.*field); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      number("timesteps", &RunConfig::timesteps),
      number("beta_start", &RunConfig::beta_start),
      number("beta_end", &RunConfig::beta_end),
      {"beta_schedule",
       [](RunConfig& c, std::string_view v) {
         if (v == "linear") {
           c.beta_schedule = BetaKind::linear;
         } else if (v == "scaled_linear") {
           c.beta_schedule = BetaKind::scaled_linear;
         } else {
           throw InvalidArgument("unknown beta schedule '" + std::string(v) + "'");
         }
       },
       [](const RunConfig& c) { return std::string(c.beta_schedule == BetaKind::linear ? "linear" : "scaled_linear"); }},
      number("zero_snr", &RunConfig::zero_snr),
      {"spacing", [](RunConfig& c, std::string_view v) { c.spacing = parse_spacing(v); },
       [](const RunConfig& c) { return std::string(to_string(c.spacing)); }},
      number("steps", &RunConfig::steps),
      {"parameterization", [](RunConfig& c, std::string_view v) { c.parameterization = parse_parameterization(v); },
       [](const RunConfig& c) { return std::string(to_string(c.parameterization)); }},
      number("seed", &RunConfig::seed),
      number("ensemble_size", &RunConfig::ensemble_size),
      number("ensemble_lambda", &RunConfig::ensemble_lambda),
      number("ensemble_max_iters", &RunConfig::ensemble_max_iters),
      number("ensemble_tol", &RunConfig::ensemble_tol),
      {"ensemble_reduction",
       [](RunConfig& c, std::string_view v) {
         if (v == "mean") {
           c.ensemble_reduction = PairReduction::mean;
         } else if (v == "sum") {
           c.ensemble_reduction = PairReduction::sum;
         } else {
           throw InvalidArgument("unknown ensemble reduction '" + std::string(v) + "'");
         }
       },
       [](const RunConfig& c) { return std::string(c.ensemble_reduction == PairReduction::mean ? "mean" : "sum"); }},
      number("target_scale", &RunConfig::target_scale),
      number("tile_size", &RunConfig::tile_size),
      number("tile_overlap", &RunConfig::tile_overlap),
      {"denoiser", [](RunConfig& c, std::string_view v) { c.denoiser = std::string(v); },
       [](const RunConfig& c) { return c.denoiser; }},
      number("min_depth", &RunConfig::min_depth),
      number("edge_threshold", &RunConfig::edge_threshold),
      number("dbe_truncation", &RunConfig::dbe_truncation),
      number("match_radius", &RunConfig::match_radius),
      number("scene_height", &RunConfig::scene_height),
      number("scene_width", &RunConfig::scene_width),
      number("network_width", &RunConfig::network_width),
      number("hidden_layers", &RunConfig::hidden_layers),
      number("time_features", &RunConfig::time_features),
      number("train_iterations", &RunConfig::train_iterations),
      number("train_batch", &RunConfig::train_batch),
      number("train_learning_rate", &RunConfig::train_learning_rate),
      number("distill_iterations", &RunConfig::distill_iterations),
      number("distill_batch", &RunConfig::distill_batch),
      number("distill_learning_rate", &RunConfig::distill_learning_rate),
      number("skip_k", &RunConfig::skip_k),
      number("huber_c", &RunConfig::huber_c),
      number("ema_mu", &RunConfig::ema_mu),
      number("sigma_data", &RunConfig::sigma_data),
  };
  return table;
}

}  // namespace

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    // Everything after '#' is a comment.
    const std::string_view line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw InvalidArgument(where + "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& table = entries();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Entry& e) { return e.key == key; });
    if (it == table.end()) throw InvalidArgument(where + "unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) throw InvalidArgument(where + "duplicate key '" + std::string(key) + "'");
    try {
      it->set(base, value);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(where + std::string(key) + ": " + e.what());
    }
  }
  return base;
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const Entry& e : entries()) out += std::string(e.key) + " = " + e.get(cfg) + "\n";
  return out;
}

DiffusionSchedule build_schedule(const RunConfig& cfg) {
  DiffusionSchedule s = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end, cfg.beta_schedule);
  return cfg.zero_snr ? rescale_zero_snr(s) : s;
}

TimestepSpacing build_spacing(const RunConfig& cfg) { return make_spacing(cfg.timesteps, cfg.steps, cfg.spacing); }

EnsembleOptions ensemble_options(const RunConfig& cfg) {
  EnsembleOptions o;
  o.lambda = cfg.ensemble_lambda;
  o.max_iters = cfg.ensemble_max_iters;
  o.tol = cfg.ensemble_tol;
  o.reduction = cfg.ensemble_reduction;
  return o;
}

toy::ToyArch toy_arch(const RunConfig& cfg, int cond_channels) {
  toy::ToyArch a;
  a.target_channels = 3;
  a.cond_channels = cond_channels;
  a.width = cfg.network_width;
  a.hidden_layers = cfg.hidden_layers;
  a.time_features = cfg.time_features;
  a.timesteps = cfg.timesteps;
  return a;
}

toy::TrainConfig train_config(const RunConfig& cfg) {
  return {cfg.train_iterations, cfg.train_batch, cfg.train_learning_rate, cfg.seed};
}

toy::DistillConfig distill_config(const RunConfig& cfg) {
  toy::DistillConfig d;
  d.lcm.sigma_data = cfg.sigma_data;
  d.lcm.skip_k = cfg.skip_k;
  d.lcm.huber_c = cfg.huber_c;
  d.lcm.ema_mu = cfg.ema_mu;
  d.iterations = cfg.distill_iterations;
  d.batch = cfg.distill_batch;
  d.learning_rate = cfg.distill_learning_rate;
  d.seed = cfg.seed;
  return d;
}

}  // namespace geodiff
