#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coopsim/coopsim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

int resolve_workers(int workers) {
  if (workers > 0) return workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

json load_config(const std::string& path, const char* section) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw coopsim::DataError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw coopsim::DataError("bad config file " + path + ": " + e.what());
  }
  if (!j.is_object())
    throw coopsim::DataError("config file must hold a JSON object: " + path);
  return j.value(section, json::object());
}

template <typename T>
void config_set(const json& sec, const char* key, T& target) {
  if (!sec.contains(key)) return;
  try {
    target = sec.at(key).get<T>();
  } catch (const json::exception& e) {
    throw coopsim::DataError(std::string("bad config value for '") + key +
                             "': " + e.what());
  }
}

// Explicit command-line flags win; otherwise the config section fills in.
template <typename T>
void config_fill(const CLI::App& cmd, const std::string& flag, const json& sec,
                 const char* key, T& target) {
  if (cmd.count(flag) > 0) return;
  config_set(sec, key, target);
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw coopsim::DataError("cannot write " + path.string());
  out << content;
  if (!out) throw coopsim::DataError("write failed: " + path.string());
}

struct GenArgs {
  std::string out;
  std::string suite = "sampled";
  int scenarios = 5;
  std::uint64_t seed = 42;
  int frames = 0;  // 0 keeps each suite's own duration
  int workers = 0;
  std::string config;
};

int cmd_gen(const GenArgs& a) {
  const int workers = resolve_workers(a.workers);
  std::vector<coopsim::ScenarioConfig> configs;
  if (a.suite == "sampled") {
    for (int i = 0; i < a.scenarios; ++i) {
      auto cfg = coopsim::sample_config(a.seed, static_cast<std::uint64_t>(i));
      if (a.frames > 0) cfg.duration_frames = a.frames;
      configs.push_back(cfg);
    }
  } else if (a.suite == "benchmark") {
    configs = coopsim::make_benchmark_suite(a.seed, a.scenarios,
                                            a.frames > 0 ? a.frames : 10);
  } else if (a.suite == "cavsweep") {
    for (int i = 0; i < a.scenarios; ++i)
      configs.push_back(coopsim::make_cav_sweep_config(
          coopsim::derive_seed(a.seed, coopsim::kStreamScenarioSeed,
                               static_cast<std::uint64_t>(i)),
          a.frames > 0 ? a.frames : 6));
  } else {
    throw coopsim::UsageError("unknown suite '" + a.suite +
                              "' (sampled, benchmark, cavsweep)");
  }

  std::vector<coopsim::Scenario> scenarios;
  scenarios.reserve(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    scenarios.push_back(coopsim::generate_scenario(configs[i], workers));
    const auto& cfg = configs[i];
    std::fprintf(stderr, "generated scenario_%02zu: %s, %d vehicles, %d cavs, %d frames\n",
                 i, coopsim::road_type_name(cfg.road_type), cfg.n_vehicles,
                 cfg.n_cavs, cfg.duration_frames);
  }
  coopsim::write_dataset(scenarios, a.out);
  std::fputs(coopsim::dataset_stats(std::span<const coopsim::Scenario>(scenarios))
                 .to_string()
                 .c_str(),
             stdout);
  std::printf("wrote %zu scenarios to %s\n", scenarios.size(), a.out.c_str());
  return coopsim::kExitOk;
}

struct RunArgs {
  std::string dataset;
  std::string out;
  std::string strategies = "no_fusion,early,late,intermediate";
  int workers = 0;
  std::string config;
  coopsim::PipelineConfig pipeline;
  coopsim::EvalConfig eval;
};

std::vector<coopsim::Strategy> parse_strategies(const std::string& csv) {
  std::vector<coopsim::Strategy> out;
  std::string token;
  for (std::size_t i = 0; i <= csv.size(); ++i) {
    if (i == csv.size() || csv[i] == ',') {
      if (!token.empty()) out.push_back(coopsim::strategy_from_name(token));
      token.clear();
    } else {
      token += csv[i];
    }
  }
  if (out.empty()) throw coopsim::UsageError("no strategies given");
  return out;
}

void apply_pipeline_config(const json& sec, coopsim::PipelineConfig& cfg) {
  config_set(sec, "broadcast_range_m", cfg.broadcast_range_m);
  config_set(sec, "nms_iou", cfg.nms_iou);
  config_set(sec, "mask_empty", cfg.mask_empty);
  config_set(sec, "min_mass", cfg.detector.min_mass);
  config_set(sec, "prior_length", cfg.detector.prior_length);
  config_set(sec, "prior_width", cfg.detector.prior_width);
  config_set(sec, "kappa", cfg.detector.kappa);
  config_set(sec, "self_exclusion_m", cfg.self_exclusion_m);
  long long rate = 0;
  config_set(sec, "codec_rate", rate);
  if (rate > 0) cfg.codec = coopsim::codec_for_rate(rate);
}

int cmd_run(const RunArgs& a) {
  const int workers = resolve_workers(a.workers);
  const auto scenarios = coopsim::read_dataset(a.dataset);
  const auto strategies = parse_strategies(a.strategies);
  const std::vector<double> thresholds{0.5, 0.7};

  const auto suite = coopsim::evaluate_suite(
      scenarios, strategies, a.pipeline, a.eval, thresholds, workers);

  fs::create_directories(fs::path(a.out) / "plots");

  std::string csv = "scenario,frame,strategy,iou,tp,fp,n_gt,bytes,transmit_s\n";
  for (const auto& r : suite.records) {
    csv += std::to_string(r.scenario) + "," + std::to_string(r.frame) + "," +
           coopsim::strategy_name(r.strategy) + "," + fmt9(r.iou_threshold) +
           "," + std::to_string(r.tp) + "," + std::to_string(r.fp) + "," +
           std::to_string(r.n_gt) + "," + std::to_string(r.bytes) + "," +
           fmt9(r.transmit_s) + "\n";
  }
  write_text(fs::path(a.out) / "results.csv", csv);

  json summary;
  summary["n_frames"] = suite.n_frames;
  summary["n_gt"] = suite.n_gt;
  summary["strategies"] = json::object();
  for (const auto& agg : suite.strategies) {
    json s;
    for (const auto& [thr, ap] : agg.ap) {
      char key[16];
      std::snprintf(key, sizeof(key), "%.2f", thr);
      s["ap"][key] = ap;
    }
    s["total_bytes"] = agg.total_bytes;
    s["total_transmit_s"] = agg.total_transmit_s;
    s["messages"] = agg.n_messages;
    summary["strategies"][coopsim::strategy_name(agg.strategy)] = s;
  }
  write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");

  std::vector<coopsim::svg::Series> series;
  for (double thr : thresholds) {
    coopsim::svg::Series s;
    char label[24];
    std::snprintf(label, sizeof(label), "AP@%.2f", thr);
    s.label = label;
    for (std::size_t i = 0; i < suite.strategies.size(); ++i) {
      s.x.push_back(static_cast<double>(i + 1));
      s.y.push_back(suite.strategies[i].ap.at(thr));
    }
    series.push_back(std::move(s));
  }
  coopsim::svg::ChartOptions opt;
  opt.title = "detection accuracy by fusion strategy";
  std::string xl = "strategy (";
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    if (i) xl += ", ";
    xl += std::to_string(i + 1) + "=" + coopsim::strategy_name(strategies[i]);
  }
  xl += ")";
  opt.x_label = xl;
  opt.y_label = "average precision";
  opt.y_min = 0.0;
  opt.y_max = 1.0;
  write_text(fs::path(a.out) / "plots" / "ap_by_strategy.svg",
             coopsim::svg::line_chart(series, opt));

  std::printf("%-14s %8s %8s %12s %12s\n", "strategy", "ap@0.5", "ap@0.7",
              "bytes", "transmit_s");
  for (const auto& agg : suite.strategies)
    std::printf("%-14s %8.4f %8.4f %12zu %12.4f\n",
                coopsim::strategy_name(agg.strategy), agg.ap.at(0.5),
                agg.ap.at(0.7), agg.total_bytes, agg.total_transmit_s);
  std::printf("frames %lld, ground-truth boxes %lld\n", suite.n_frames,
              suite.n_gt);
  std::printf("wrote results to %s\n", a.out.c_str());
  return coopsim::kExitOk;
}

struct SweepArgs {
  std::string dataset;
  std::string out;
  std::string mode;
  std::string strategy = "intermediate";
  std::string ladder;  // comma-separated nominal rates
  int workers = 0;
  std::string config;
  coopsim::PipelineConfig pipeline;
  coopsim::EvalConfig eval;
};

int cmd_sweep(const SweepArgs& a) {
  const int workers = resolve_workers(a.workers);
  const auto scenarios = coopsim::read_dataset(a.dataset);
  fs::create_directories(fs::path(a.out) / "plots");

  if (a.mode == "cav") {
    const auto strategy = coopsim::strategy_from_name(a.strategy);
    const auto points = coopsim::sweep_cav_count(scenarios, strategy,
                                                 a.pipeline, a.eval, 0.7,
                                                 workers);
    std::string csv = "n_cavs,ap70,mean_bytes,mean_gt\n";
    coopsim::svg::Series s;
    s.label = a.strategy;
    for (const auto& p : points) {
      csv += std::to_string(p.n_cavs) + "," + fmt9(p.ap) + "," +
             fmt9(p.mean_bytes) + "," + fmt9(p.mean_gt) + "\n";
      s.x.push_back(p.n_cavs);
      s.y.push_back(p.ap);
    }
    write_text(fs::path(a.out) / "sweep_cav.csv", csv);
    coopsim::svg::ChartOptions opt;
    opt.title = "accuracy by connected-vehicle count";
    opt.x_label = "connected vehicles";
    opt.y_label = "AP@0.70";
    opt.y_min = 0.0;
    opt.y_max = 1.0;
    const std::vector<coopsim::svg::Series> series{s};
    write_text(fs::path(a.out) / "plots" / "ap_by_cav_count.svg",
               coopsim::svg::line_chart(series, opt));
    std::printf("%8s %8s %14s %10s\n", "cavs", "ap@0.7", "mean_bytes",
                "mean_gt");
    for (const auto& p : points)
      std::printf("%8d %8.4f %14.1f %10.2f\n", p.n_cavs, p.ap, p.mean_bytes,
                  p.mean_gt);
  } else if (a.mode == "compression") {
    std::vector<coopsim::CodecSpec> ladder;
    if (a.ladder.empty()) {
      ladder = coopsim::default_codec_ladder();
    } else {
      std::string token;
      for (std::size_t i = 0; i <= a.ladder.size(); ++i) {
        if (i == a.ladder.size() || a.ladder[i] == ',') {
          if (!token.empty()) {
            try {
              ladder.push_back(coopsim::codec_for_rate(std::stoll(token)));
            } catch (const std::invalid_argument&) {
              throw coopsim::UsageError("bad codec rate '" + token + "'");
            } catch (const std::out_of_range&) {
              throw coopsim::UsageError("bad codec rate '" + token + "'");
            }
          }
          token.clear();
        } else {
          token += a.ladder[i];
        }
      }
      if (ladder.empty()) throw coopsim::UsageError("empty codec ladder");
    }
    const auto points = coopsim::sweep_compression(scenarios, ladder,
                                                   a.pipeline, a.eval, workers);
    std::string csv =
        "nominal_rate,measured_rate,pool_h,pool_w,bits,ap50,ap70,"
        "total_bytes,total_early_bytes,mean_transmit_s,n_messages\n";
    coopsim::svg::Series s50{"AP@0.50", {}, {}}, s70{"AP@0.70", {}, {}};
    for (const auto& p : points) {
      csv += fmt9(p.nominal_rate) + "," + fmt9(p.measured_rate) + "," +
             std::to_string(p.codec.pool_h) + "," +
             std::to_string(p.codec.pool_w) + "," +
             std::to_string(p.codec.bits) + "," + fmt9(p.ap50) + "," +
             fmt9(p.ap70) + "," + std::to_string(p.total_bytes) + "," +
             std::to_string(p.total_early_bytes) + "," +
             fmt9(p.mean_transmit_s) + "," + std::to_string(p.n_messages) +
             "\n";
      s50.x.push_back(p.nominal_rate);
      s50.y.push_back(p.ap50);
      s70.x.push_back(p.nominal_rate);
      s70.y.push_back(p.ap70);
    }
    write_text(fs::path(a.out) / "sweep_compression.csv", csv);
    coopsim::svg::ChartOptions opt;
    opt.title = "accuracy by feature compression rate";
    opt.x_label = "nominal compression rate";
    opt.y_label = "average precision";
    opt.log_x = true;
    opt.y_min = 0.0;
    opt.y_max = 1.0;
    const std::vector<coopsim::svg::Series> series{s70, s50};
    write_text(fs::path(a.out) / "plots" / "ap_by_compression.svg",
               coopsim::svg::line_chart(series, opt));
    std::printf("%10s %10s %8s %8s %14s %14s\n", "rate", "measured", "ap@0.5",
                "ap@0.7", "int_bytes", "early_bytes");
    for (const auto& p : points)
      std::printf("%10.0f %10.1f %8.4f %8.4f %14zu %14zu\n", p.nominal_rate,
                  p.measured_rate, p.ap50, p.ap70, p.total_bytes,
                  p.total_early_bytes);
  } else {
    throw coopsim::UsageError("unknown sweep mode '" + a.mode +
                              "' (cav, compression)");
  }
  std::printf("wrote sweep results to %s\n", a.out.c_str());
  return coopsim::kExitOk;
}

struct StatsArgs {
  std::string dataset;
  std::string out;
  int workers = 0;
  std::string config;
  coopsim::EvalConfig eval;
};

int cmd_stats(const StatsArgs& a) {
  const auto scenarios = coopsim::read_dataset(a.dataset);
  fs::create_directories(fs::path(a.out) / "plots");

  std::vector<coopsim::OrientedBox> gts;
  for (const auto& sc : scenarios)
    for (const auto& frame : sc.frames)
      for (const auto& box : coopsim::filter_gt(frame, sc.ego_id, a.eval))
        gts.push_back(box);
  const auto polar = coopsim::polar_density(gts);

  std::string csv = "radius_bin,angle_bin,count\n";
  for (int r = 0; r < polar.n_radius; ++r)
    for (int ang = 0; ang < polar.n_angle; ++ang)
      csv += std::to_string(r) + "," + std::to_string(ang) + "," +
             std::to_string(polar.at(r, ang)) + "\n";
  write_text(fs::path(a.out) / "gt_polar.csv", csv);
  write_text(fs::path(a.out) / "plots" / "gt_polar.svg",
             coopsim::svg::polar_heatmap(
                 polar, "ground-truth density around the ego"));

  const int n_bins = 14;
  const double max_radius = 140.0;
  std::vector<long long> boxes(n_bins, 0);
  std::vector<double> single_sum(n_bins, 0.0), fused_sum(n_bins, 0.0);
  for (const auto& sc : scenarios) {
    const auto st = coopsim::points_per_box_stats(sc, a.eval, n_bins, max_radius);
    for (int b = 0; b < n_bins; ++b) {
      boxes[b] += st.boxes[b];
      single_sum[b] += st.single_mean[b] * static_cast<double>(st.boxes[b]);
      fused_sum[b] += st.fused_mean[b] * static_cast<double>(st.boxes[b]);
    }
  }
  std::string pcsv = "distance_m,boxes,single_mean_points,fused_mean_points\n";
  coopsim::svg::Series single{"ego only", {}, {}}, fused{"all in range", {}, {}};
  for (int b = 0; b < n_bins; ++b) {
    const double center = max_radius * (b + 0.5) / n_bins;
    const double sm = boxes[b] > 0 ? single_sum[b] / boxes[b] : 0.0;
    const double fm = boxes[b] > 0 ? fused_sum[b] / boxes[b] : 0.0;
    pcsv += fmt9(center) + "," + std::to_string(boxes[b]) + "," + fmt9(sm) +
            "," + fmt9(fm) + "\n";
    single.x.push_back(center);
    single.y.push_back(sm);
    fused.x.push_back(center);
    fused.y.push_back(fm);
  }
  write_text(fs::path(a.out) / "points_per_box.csv", pcsv);
  coopsim::svg::ChartOptions opt;
  opt.title = "lidar points per ground-truth box";
  opt.x_label = "distance from ego (m)";
  opt.y_label = "mean points per box";
  const std::vector<coopsim::svg::Series> series{single, fused};
  write_text(fs::path(a.out) / "plots" / "points_per_box.svg",
             coopsim::svg::line_chart(series, opt));

  std::fputs(coopsim::dataset_stats(std::span<const coopsim::Scenario>(scenarios))
                 .to_string()
                 .c_str(),
             stdout);
  std::printf("ground-truth boxes: %lld within %g m\n", polar.total,
              polar.max_radius);
  std::printf("wrote stats to %s\n", a.out.c_str());
  return coopsim::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cooperative perception simulation and benchmark toolkit"};
  app.require_subcommand(1);

  GenArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen", "generate a scenario dataset");
  gen->add_option("--out", gen_args.out, "output dataset directory")->required();
  gen->add_option("--suite", gen_args.suite,
                  "sampled | benchmark | cavsweep (default sampled)");
  gen->add_option("--scenarios", gen_args.scenarios, "number of scenarios");
  gen->add_option("--seed", gen_args.seed, "master seed");
  gen->add_option("--frames", gen_args.frames,
                  "frames per scenario (0 keeps the suite default)");
  gen->add_option("--workers", gen_args.workers, "worker threads (0 = auto)");
  gen->add_option("--config", gen_args.config, "JSON config file");

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "evaluate fusion strategies");
  run->add_option("--dataset", run_args.dataset, "dataset directory")->required();
  run->add_option("--out", run_args.out, "output directory")->required();
  run->add_option("--strategies", run_args.strategies,
                  "comma-separated strategies");
  run->add_option("--workers", run_args.workers, "worker threads (0 = auto)");
  run->add_option("--config", run_args.config, "JSON config file");

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "vary one axis of the system");
  sweep->add_option("--dataset", sweep_args.dataset, "dataset directory")
      ->required();
  sweep->add_option("--out", sweep_args.out, "output directory")->required();
  sweep->add_option("--mode", sweep_args.mode, "cav | compression")->required();
  sweep->add_option("--strategy", sweep_args.strategy,
                    "strategy for the cav sweep");
  sweep->add_option("--codec-ladder", sweep_args.ladder,
                    "comma-separated nominal rates for the compression sweep");
  sweep->add_option("--workers", sweep_args.workers, "worker threads (0 = auto)");
  sweep->add_option("--config", sweep_args.config, "JSON config file");

  StatsArgs stats_args;
  CLI::App* stats = app.add_subcommand("stats", "describe a dataset");
  stats->add_option("--dataset", stats_args.dataset, "dataset directory")
      ->required();
  stats->add_option("--out", stats_args.out, "output directory")->required();
  stats->add_option("--workers", stats_args.workers, "worker threads (0 = auto)");
  stats->add_option("--config", stats_args.config, "JSON config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? coopsim::kExitOk : coopsim::kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const json sec = load_config(gen_args.config, "gen");
      config_fill(*gen, "--suite", sec, "suite", gen_args.suite);
      config_fill(*gen, "--scenarios", sec, "scenarios", gen_args.scenarios);
      config_fill(*gen, "--seed", sec, "seed", gen_args.seed);
      config_fill(*gen, "--frames", sec, "frames", gen_args.frames);
      config_fill(*gen, "--workers", sec, "workers", gen_args.workers);
      return cmd_gen(gen_args);
    }
    if (run->parsed()) {
      const json sec = load_config(run_args.config, "run");
      config_fill(*run, "--strategies", sec, "strategies", run_args.strategies);
      config_fill(*run, "--workers", sec, "workers", run_args.workers);
      apply_pipeline_config(sec, run_args.pipeline);
      return cmd_run(run_args);
    }
    if (sweep->parsed()) {
      const json sec = load_config(sweep_args.config, "sweep");
      config_fill(*sweep, "--strategy", sec, "strategy", sweep_args.strategy);
      config_fill(*sweep, "--codec-ladder", sec, "codec_ladder",
                  sweep_args.ladder);
      config_fill(*sweep, "--workers", sec, "workers", sweep_args.workers);
      apply_pipeline_config(sec, sweep_args.pipeline);
      return cmd_sweep(sweep_args);
    }
    if (stats->parsed()) {
      const json sec = load_config(stats_args.config, "stats");
      config_fill(*stats, "--workers", sec, "workers", stats_args.workers);
      return cmd_stats(stats_args);
    }
  } catch (const coopsim::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return coopsim::kExitUsage;
  } catch (const coopsim::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return coopsim::kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return coopsim::kExitInternal;
  }
  return coopsim::kExitUsage;
}
