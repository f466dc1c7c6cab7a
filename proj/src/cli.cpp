#include "spherecal/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

#include "spherecal/assessment.hpp"
#include "spherecal/errors.hpp"
#include "spherecal/io.hpp"
#include "spherecal/pipeline.hpp"
#include "spherecal/presets.hpp"

namespace spherecal {

namespace {

namespace fs = std::filesystem;

// Named command settings bound to variables: serialised into every output
// header and loaded back by --config-from.
class Settings {
 public:
  void bind(const std::string& key, std::string* v) {
    add(key, [v] { return *v; }, [v](const std::string& s) { *v = s; });
  }
  void bind(const std::string& key, double* v) {
    add(key, [v] { return format_double(*v); },
        [v, key](const std::string& s) { *v = parse_value(s, key); });
  }
  void bind(const std::string& key, int* v) {
    add(key, [v] { return std::to_string(*v); },
        [v, key](const std::string& s) { *v = static_cast<int>(parse_integer(s, key)); });
  }
  void bind(const std::string& key, std::uint64_t* v) {
    add(key, [v] { return std::to_string(*v); },
        [v, key](const std::string& s) {
          *v = static_cast<std::uint64_t>(std::stoull(check_digits(s, key)));
        });
  }
  void bind(const std::string& key, bool* v) {
    add(key, [v] { return std::string(*v ? "1" : "0"); },
        [v, key](const std::string& s) {
          if (s != "0" && s != "1") throw ConfigError("config " + key + " must be 0 or 1");
          *v = s == "1";
        });
  }

  RunConfig serialize() const {
    RunConfig c;
    for (const auto& f : fields_) c[f.key] = f.get();
    return c;
  }

  void load(const RunConfig& c) {
    for (const auto& [k, v] : c) {
      const Field* f = find(k);
      if (!f) throw ConfigError("unknown config entry '" + k + "'");
      f->set(v);
    }
    for (const auto& f : fields_)
      if (!c.count(f.key)) throw ConfigError("config lacks entry '" + f.key + "'");
  }

 private:
  struct Field {
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
  };

  static double parse_value(const std::string& s, const std::string& key) {
    try {
      return parse_double(s, "config " + key);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
  }
  static std::string check_digits(const std::string& s, const std::string& key) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("bad config " + key + " '" + s + "'");
    return s;
  }
  static long parse_integer(const std::string& s, const std::string& key) {
    const std::string body = !s.empty() && s[0] == '-' ? s.substr(1) : s;
    check_digits(body, key);
    return std::stol(s);
  }

  void add(const std::string& key, std::function<std::string()> get,
           std::function<void(const std::string&)> set) {
    fields_.push_back({key, std::move(get), std::move(set)});
  }
  const Field* find(const std::string& key) const {
    for (const auto& f : fields_)
      if (f.key == key) return &f;
    return nullptr;
  }

  std::vector<Field> fields_;
};

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

// Writes through a string so a failed command leaves no half-written file.
void write_file(const fs::path& p, const std::function<void(std::ostream&)>& body) {
  std::ostringstream ss;
  body(ss);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << ss.str();
  if (!out) throw DataError("cannot write " + p.string());
}

template <class T>
T read_file(const fs::path& p, T (*reader)(std::istream&)) {
  std::ifstream in = open_in(p);
  try {
    return reader(in);
  } catch (const DataError& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

fs::path output_dir(const std::string& flag) {
  const char* env = std::getenv(kOutputDirEnv);
  fs::path dir = env && *env ? fs::path(env) : fs::path(flag);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string());
  return dir;
}

// Loads --config-from and checks it belongs to this command.
void load_config(Settings& s, const std::string& path, const std::string& command) {
  std::ifstream in = open_in(path);
  RunConfig c = read_config(in);
  const auto it = c.find("command");
  if (it == c.end() || it->second != command)
    throw ConfigError("--config-from " + path + " was not written by '" + command + "'");
  s.load(c);
}

std::string run_file(const char* stem, std::size_t i) {
  return std::string(stem) + "_" + std::to_string(i + 1) + ".txt";
}

// simulate ---------------------------------------------------------------------

struct SimulateOptions {
  std::string command = "simulate";
  std::string preset = "gopro150";
  std::uint64_t seed = 1;
  std::string model = "preset";
  double fov_deg = 0.0;
  int exposures = 0;
  double noise = 0.5;
  double outlier_rate = 0.0;
  double outlier_magnitude = 50.0;
  double survey_sigma = 0.0005;

  void bind(Settings& s) {
    s.bind("command", &command);
    s.bind("preset", &preset);
    s.bind("seed", &seed);
    s.bind("model", &model);
    s.bind("fov_deg", &fov_deg);
    s.bind("exposures", &exposures);
    s.bind("noise", &noise);
    s.bind("outlier_rate", &outlier_rate);
    s.bind("outlier_magnitude", &outlier_magnitude);
    s.bind("survey_sigma", &survey_sigma);
  }
};

Preset build_preset(const SimulateOptions& o) {
  Preset p = make_preset(o.preset, o.seed);
  if (o.model != "preset") {
    try {
      p.model.kind = parse_projection(o.model);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("--model: ") + e.what());
    }
  }
  if (o.fov_deg != 0.0) {
    constexpr double deg = std::numbers::pi / 180.0;
    const double half = 0.5 * o.fov_deg * deg;
    if (!(half > 0.0) || !(half < mapping_limit(p.model.kind)))
      throw ConfigError("--fov " + format_double(o.fov_deg) + " is outside the range of the " +
                        projection_name(p.model.kind) + " model");
    // Scale c so that the field circle touches the short side of the sensor.
    const double short_half = 0.5 * std::min(p.model.sensor_width, p.model.sensor_height);
    const double c = short_half / radial_mapping(p.model.kind, 1.0, half);
    // Keep the radial distortion the same at the image border.
    const double ratio = c / p.model.iop.c;
    p.model.brown[BrownTerm::K1] /= std::pow(ratio, 2);
    p.model.brown[BrownTerm::K2] /= std::pow(ratio, 4);
    p.model.brown[BrownTerm::K3] /= std::pow(ratio, 6);
    p.model.iop.c = c;
    p.model.half_fov = half;
    p.nominal.c = std::round(c);
  } else if (p.model.half_fov == 0.0 || p.model.half_fov >= mapping_limit(p.model.kind)) {
    p.model.half_fov = 0.0;
  }
  if (o.exposures < 0) throw ConfigError("--exposures must be positive");
  if (o.exposures > 0) p.rig.exposures = o.exposures;
  if (!(o.noise >= 0.0)) throw ConfigError("--noise must be non-negative");
  if (!(o.outlier_rate >= 0.0 && o.outlier_rate < 1.0))
    throw ConfigError("--outlier-rate must lie in [0, 1)");
  if (!(o.outlier_magnitude >= 0.0)) throw ConfigError("--outlier-magnitude must be non-negative");
  if (!(o.survey_sigma >= 0.0)) throw ConfigError("--survey-sigma must be non-negative");
  p.noise.sigma = o.noise;
  p.noise.outlier_rate = o.outlier_rate;
  p.noise.outlier_magnitude = o.outlier_magnitude;
  p.noise.survey_sigma = o.survey_sigma;
  return p;
}

void cmd_simulate(const SimulateOptions& o, const fs::path& dir, const RunConfig& config) {
  const SimulatedDataset d = simulate(build_preset(o));
  ObservationSet obs;
  obs.units = d.preset.units;
  obs.nominal = d.preset.nominal;
  obs.label = d.preset.name;
  obs.rows = d.sim.observations;
  std::vector<TargetRow> targets;
  for (const auto& p : d.sim.approx_targets) targets.push_back({p, false, Vec3::Zero(), false});
  write_file(dir / "observations.txt", [&](std::ostream& out) { write_observations(out, obs, config); });
  write_file(dir / "targets.txt", [&](std::ostream& out) { write_targets(out, targets, config); });
  write_file(dir / "truth.txt",
             [&](std::ostream& out) { write_truth(out, truth_set(d.sim), config); });
  std::printf("%zu observations of %zu targets in %zu exposures written to %s\n",
              obs.rows.size(), targets.size(), d.sim.truth.rig.exposures.size(),
              dir.string().c_str());
}

// calibrate --------------------------------------------------------------------

struct CalibrateOptions {
  std::string command = "calibrate";
  std::string observations;
  std::string targets;
  std::string mode = "ladder";
  std::string mask = "K1K2";
  std::string datum = "free";
  double huber = kHuberDefault;
  bool no_robust = false;
  int max_iterations = 200;
  double cost_tolerance = 1e-10;
  double step_tolerance = 1e-8;
  double gate_deg = 5.0;
  double max_radius_fraction = 0.8;
  int max_outer = 20;
  double knn_tolerance = 1e-3;
  std::string k_ladder = "1,2,4,8,16,32,64";
  std::uint64_t cv_seed = kDefaultCvSeed;
  double outlier_weight = 0.5;
  int trend_k = 8;

  void bind(Settings& s) {
    s.bind("command", &command);
    s.bind("observations", &observations);
    s.bind("targets", &targets);
    s.bind("mode", &mode);
    s.bind("mask", &mask);
    s.bind("datum", &datum);
    s.bind("huber", &huber);
    s.bind("no_robust", &no_robust);
    s.bind("max_iterations", &max_iterations);
    s.bind("cost_tolerance", &cost_tolerance);
    s.bind("step_tolerance", &step_tolerance);
    s.bind("gate_deg", &gate_deg);
    s.bind("max_radius_fraction", &max_radius_fraction);
    s.bind("knn_max_outer", &max_outer);
    s.bind("knn_tolerance", &knn_tolerance);
    s.bind("knn_k_ladder", &k_ladder);
    s.bind("knn_cv_seed", &cv_seed);
    s.bind("knn_outlier_weight", &outlier_weight);
    s.bind("knn_trend_k", &trend_k);
  }
};

std::vector<std::size_t> parse_k_ladder(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos ||
        std::stoul(item) == 0)
      throw ConfigError("--k-ladder: bad entry '" + item + "'");
    ks.push_back(std::stoul(item));
  }
  if (ks.empty()) throw ConfigError("--k-ladder is empty");
  return ks;
}

PipelineConfig pipeline_config(const CalibrateOptions& o, const std::vector<TargetRow>& targets) {
  PipelineConfig cfg;
  AdjustmentConfig& a = cfg.adjustment;
  if (!(o.huber > 0.0)) throw ConfigError("--huber must be positive");
  if (o.max_iterations < 1) throw ConfigError("--max-iterations must be positive");
  a.huber_k = o.huber;
  a.robust = !o.no_robust;
  a.max_iterations = o.max_iterations;
  a.cost_tolerance = o.cost_tolerance;
  a.step_tolerance = o.step_tolerance;
  if (o.datum == "control") {
    a.datum.kind = DatumKind::ControlPoints;
    for (const auto& t : targets)
      if (t.control) a.datum.control_points.push_back(t.point.id);
  } else if (o.datum != "free") {
    throw ConfigError("--datum must be free or control");
  }
  cfg.initialization.gate_deg = o.gate_deg;
  cfg.initialization.max_radius_fraction = o.max_radius_fraction;
  if (o.max_outer < 1) throw ConfigError("--max-outer must be positive");
  if (o.trend_k < 1) throw ConfigError("--trend-k must be positive");
  cfg.knn.max_outer = o.max_outer;
  cfg.knn.stability_tolerance = o.knn_tolerance;
  cfg.knn.k_ladder = parse_k_ladder(o.k_ladder);
  cfg.knn.cv_seed = o.cv_seed;
  cfg.knn.outlier_weight = o.outlier_weight;
  cfg.knn.trend_k = static_cast<std::size_t>(o.trend_k);
  return cfg;
}

struct BundleRun {
  CalibrationRun run;
  std::vector<Vec2> corrections;
};

void write_summary(std::ostream& out, const std::vector<BundleRun>& runs) {
  std::size_t w = 5;
  for (const auto& r : runs) w = std::max(w, r.run.label.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %17s  %8s  %10s  %5s  %9s\n", static_cast<int>(w), "Model",
                "Image space error", "vf", "redundancy", "iter", "converged");
  out << buf;
  for (const auto& r : runs) {
    const AdjustmentResult& a = r.run.result;
    std::snprintf(buf, sizeof buf, "%-*s  %17.1E  %8.3f  %10ld  %5d  %9s\n", static_cast<int>(w),
                  r.run.label.c_str(), a.cost, a.variance_factor, a.redundancy, a.iterations,
                  a.converged ? "yes" : "no");
    out << buf;
  }
}

void cmd_calibrate(const CalibrateOptions& o, const fs::path& dir, const RunConfig& config) {
  if (o.mode != "conventional" && o.mode != "ladder" && o.mode != "knn" && o.mode != "all")
    throw ConfigError("--mode must be conventional, ladder, knn or all");
  BrownMask mask;
  try {
    mask = BrownMask::parse(o.mask);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("--mask: ") + e.what());
  }
  if (o.observations.empty() || o.targets.empty())
    throw ConfigError("--observations and --targets are required");
  const ObservationSet obs = read_file(o.observations, read_observations);
  const std::vector<TargetRow> targets = read_file(o.targets, read_targets);
  const PipelineConfig cfg = pipeline_config(o, targets);
  const std::vector<ObjectPoint> points = target_points(targets);

  std::vector<BundleRun> runs;
  std::vector<ExclusionEntry> excluded;
  std::optional<KnnRun> knn;
  if (o.mode == "conventional") {
    CalibrationRun r = calibrate_conventional(obs.rows, points, obs.nominal, mask, cfg);
    excluded = r.excluded;
    runs.push_back({std::move(r), {}});
  }
  if (o.mode == "ladder" || o.mode == "all") {
    for (auto& r : calibrate_ladder(obs.rows, points, obs.nominal, cfg)) {
      excluded = r.excluded;
      runs.push_back({std::move(r), {}});
    }
  }
  if (o.mode == "knn" || o.mode == "all") {
    knn = calibrate_knn(obs.rows, points, obs.nominal, cfg);
    excluded = knn->run.excluded;
    runs.push_back({knn->run, knn->corrections});
  }

  std::vector<std::string> labels;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const CalibrationRun& r = runs[i].run;
    labels.push_back(r.label);
    write_file(dir / run_file("network", i), [&](std::ostream& out) {
      write_network(out, result_run(r.label, r.result), config);
    });
    write_file(dir / run_file("residuals", i), [&](std::ostream& out) {
      write_residuals(out, residual_rows(r.observations, r.result, runs[i].corrections), config);
    });
    write_file(dir / run_file("trace", i), [&](std::ostream& out) {
      write_header(out, "spherecal-trace", config);
      write_trace(out, r.result.trace);
    });
  }
  write_file(dir / "runs.txt", [&](std::ostream& out) { write_run_list(out, labels, config); });
  write_file(dir / "excluded.txt",
             [&](std::ostream& out) { write_exclusions(out, excluded, config); });
  write_file(dir / "summary.txt", [&](std::ostream& out) {
    write_header(out, "spherecal-summary", config);
    write_summary(out, runs);
  });
  if (knn) {
    write_file(dir / "correction_map.txt",
               [&](std::ostream& out) { write_correction_map(out, knn->map, config); });
    write_file(dir / "outer_trace.txt", [&](std::ostream& out) {
      write_header(out, "spherecal-outer-trace", config);
      out << "# best_outer=" << knn->best_outer << "\n# oscillation=" << (knn->oscillation ? 1 : 0)
          << '\n';
      write_outer_trace(out, knn->trace);
    });
  }
  write_summary(std::cout, runs);
}

// assess and report ------------------------------------------------------------

struct AssessOptions {
  std::string command = "assess";
  std::string results;  // comma-separated bundle directories
  std::string truth;
  double bin_width = 0.1;
  bool similarity = false;

  void bind(Settings& s) {
    s.bind("command", &command);
    s.bind("results", &results);
    s.bind("truth", &truth);
    s.bind("bin_width", &bin_width);
    s.bind("similarity", &similarity);
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) items.push_back(item);
  return items;
}

struct AssessedRun {
  AssessmentReport report;
  std::vector<Vec2> residuals;
  std::vector<double> radius;
};

std::vector<AssessedRun> assess_bundle(const fs::path& bundle, const TruthSet& truth,
                                       const AssessmentConfig& cfg) {
  const std::vector<std::string> labels = read_file(bundle / "runs.txt", read_run_list);
  std::vector<AssessedRun> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ResultRun run = read_file(bundle / run_file("network", i), read_network);
    const std::vector<ResidualRow> rows = read_file(bundle / run_file("residuals", i), read_residuals);
    AssessmentInput in;
    in.label = run.label;
    in.estimated = run.network.points;
    in.iop = run.network.iop;
    in.cost = run.cost;
    in.variance_factor = run.variance_factor;
    AssessedRun a;
    for (const auto& r : rows) {
      in.observations.push_back(r.observation);
      in.residuals.push_back(r.residual);
      a.radius.push_back(std::hypot(r.observation.x - in.iop.xp, r.observation.y - in.iop.yp));
    }
    a.residuals = in.residuals;
    a.report = assess(in, truth.points, cfg);
    out.push_back(std::move(a));
  }
  return out;
}

void cmd_assess(const AssessOptions& o, const fs::path& dir, const RunConfig& config,
                bool per_run_files) {
  if (!(o.bin_width > 0.0)) throw ConfigError("--bin-width must be positive");
  const std::vector<std::string> bundles = split_list(o.results);
  if (bundles.empty() || o.truth.empty()) throw ConfigError("--result and --truth are required");
  const TruthSet truth = read_file(o.truth, read_truth);
  AssessmentConfig cfg;
  cfg.bin_width = o.bin_width;
  cfg.with_scale = o.similarity;

  std::vector<AssessedRun> runs;
  for (const auto& b : bundles)
    for (auto& r : assess_bundle(b, truth, cfg)) runs.push_back(std::move(r));
  std::vector<AssessmentReport> reports;
  for (const auto& r : runs) reports.push_back(r.report);

  const std::string stem = per_run_files ? "assessment" : "report";
  write_file(dir / (stem + ".txt"), [&](std::ostream& out) {
    write_header(out, "spherecal-table", config);
    write_table(out, reports);
  });
  write_file(dir / (stem + ".csv"), [&](std::ostream& out) {
    write_header(out, "spherecal-table-csv", config);
    write_table_csv(out, reports);
  });
  if (per_run_files) {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const AssessmentReport& r = runs[i].report;
      write_file(dir / run_file("hist_x", i), [&](std::ostream& out) {
        write_header(out, "spherecal-histogram", config);
        write_histogram(out, r.hist_x);
      });
      write_file(dir / run_file("hist_y", i), [&](std::ostream& out) {
        write_header(out, "spherecal-histogram", config);
        write_histogram(out, r.hist_y);
      });
      for (int axis = 0; axis < 2; ++axis) {
        const char* name = axis == 0 ? "radial_x" : "radial_y";
        const Line& line = axis == 0 ? r.trend.x : r.trend.y;
        write_file(dir / run_file(name, i), [&](std::ostream& out) {
          write_header(out, "spherecal-radial", config);
          out << "# slope=" << format_double(line.slope)
              << "\n# intercept=" << format_double(line.intercept) << '\n';
          write_residual_radius(out, runs[i].residuals, runs[i].radius, axis);
        });
      }
    }
  }
  write_table(std::cout, reports);
}

// Exceptions to exit codes -----------------------------------------------------

int report_error(const char* kind, const std::exception& e, int code) {
  std::fprintf(stderr, "spherecal: %s: %s\n", kind, e.what());
  return code;
}

template <class F>
int guarded(F&& f) {
  try {
    f();
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error("usage error", e, kExitUsage);
  } catch (const SolverError& e) {
    return report_error("solver failure", e, kExitSolver);
  } catch (const DataError& e) {
    return report_error("data error", e, kExitData);
  } catch (const DegenerateInput& e) {
    return report_error("data error", e, kExitData);
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Spherical-image camera self-calibration"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");
  std::string out_dir = ".";
  std::string config_from;
  const std::string out_help =
      std::string("Output directory (replaced by $") + kOutputDirEnv + " when set)";

  SimulateOptions sim;
  CLI::App* s = app.add_subcommand("simulate", "Generate a synthetic calibration dataset");
  s->add_option("--preset", sim.preset, "nikon75, gopro150, fisheye250 or ortho160")
      ->capture_default_str();
  s->add_option("--seed", sim.seed, "Master seed of all generators")->capture_default_str();
  s->add_option("--model", sim.model,
                "Projection: preset, pinhole, equidistant, equisolid, stereographic, orthographic")
      ->capture_default_str();
  s->add_option("--fov", sim.fov_deg,
                "Full field of view in degrees; rescales c to fit the sensor (0 keeps the preset)")
      ->capture_default_str();
  s->add_option("--exposures", sim.exposures, "Number of exposures (0 keeps the preset)")
      ->capture_default_str();
  s->add_option("--noise", sim.noise, "Image noise per coordinate, image units")
      ->capture_default_str();
  s->add_option("--outlier-rate", sim.outlier_rate, "Fraction of gross errors")
      ->capture_default_str();
  s->add_option("--outlier-magnitude", sim.outlier_magnitude, "Gross error offset, image units")
      ->capture_default_str();
  s->add_option("--survey-sigma", sim.survey_sigma, "Perturbation of approximate targets, metres")
      ->capture_default_str();
  s->add_option("--out", out_dir, out_help)->capture_default_str();
  s->add_option("--config-from", config_from, "Re-run with the settings stored in a file header");

  CalibrateOptions cal;
  CLI::App* c = app.add_subcommand("calibrate", "Calibrate from observation and target files");
  c->add_option("--observations", cal.observations, "Observation file");
  c->add_option("--targets", cal.targets, "Target file");
  c->add_option("--mode", cal.mode, "conventional, ladder, knn or all")->capture_default_str();
  c->add_option("--mask", cal.mask, "Brown terms for conventional mode, e.g. K1K2P1P2 or none")
      ->capture_default_str();
  c->add_option("--datum", cal.datum, "free (inner constraints) or control (fix control targets)")
      ->capture_default_str();
  c->add_option("--huber", cal.huber, "Huber constant")->capture_default_str();
  c->add_flag("--no-robust", cal.no_robust, "Force all observation weights to one");
  c->add_option("--max-iterations", cal.max_iterations, "Solver iteration limit")
      ->capture_default_str();
  c->add_option("--cost-tolerance", cal.cost_tolerance, "Relative objective decrease to stop")
      ->capture_default_str();
  c->add_option("--step-tolerance", cal.step_tolerance, "Relative step size to stop")
      ->capture_default_str();
  c->add_option("--gate", cal.gate_deg, "Initial pose gate, median angular error in degrees")
      ->capture_default_str();
  c->add_option("--max-radius-fraction", cal.max_radius_fraction,
                "Observations beyond this fraction of c are not used for initial poses")
      ->capture_default_str();
  c->add_option("--max-outer", cal.max_outer, "kNN outer iteration limit")->capture_default_str();
  c->add_option("--knn-tolerance", cal.knn_tolerance,
                "Relative change of cost and CV score that counts as stable")
      ->capture_default_str();
  c->add_option("--k-ladder", cal.k_ladder, "Candidate neighbour counts")->capture_default_str();
  c->add_option("--cv-seed", cal.cv_seed, "Cross-validation fold seed")->capture_default_str();
  c->add_option("--outlier-weight", cal.outlier_weight,
                "Huber weight below which residuals are not learned")
      ->capture_default_str();
  c->add_option("--trend-k", cal.trend_k, "Neighbours of the local trend used for screening")
      ->capture_default_str();
  c->add_option("--out", out_dir, out_help)->capture_default_str();
  c->add_option("--config-from", config_from, "Re-run with the settings stored in a file header");

  AssessOptions as;
  std::vector<std::string> result_dirs;
  CLI::App* a = app.add_subcommand("assess", "Compare a result bundle with the truth file");
  a->add_option("--result", result_dirs, "Result bundle directory")->expected(1);
  a->add_option("--truth", as.truth, "Truth file written by simulate");
  a->add_option("--bin-width", as.bin_width, "Residual histogram bin width")
      ->capture_default_str();
  a->add_flag("--similarity", as.similarity, "Also estimate a scale in the alignment");
  a->add_option("--out", out_dir, out_help)->capture_default_str();
  a->add_option("--config-from", config_from, "Re-run with the settings stored in a file header");

  AssessOptions rep;
  rep.command = "report";
  CLI::App* r = app.add_subcommand("report", "One table for several result bundles");
  r->add_option("--result", result_dirs, "Result bundle directories")->expected(1, 1000);
  r->add_option("--truth", rep.truth, "Truth file written by simulate");
  r->add_option("--bin-width", rep.bin_width, "Residual histogram bin width")
      ->capture_default_str();
  r->add_flag("--similarity", rep.similarity, "Also estimate a scale in the alignment");
  r->add_option("--out", out_dir, out_help)->capture_default_str();
  r->add_option("--config-from", config_from, "Re-run with the settings stored in a file header");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  return guarded([&] {
    Settings settings;
    std::function<void(const fs::path&, const RunConfig&)> run;
    if (s->parsed()) {
      sim.bind(settings);
      run = [&](const fs::path& d, const RunConfig& cfg) { cmd_simulate(sim, d, cfg); };
    } else if (c->parsed()) {
      cal.bind(settings);
      run = [&](const fs::path& d, const RunConfig& cfg) { cmd_calibrate(cal, d, cfg); };
    } else {
      AssessOptions& o = a->parsed() ? as : rep;
      for (const auto& d : result_dirs) {
        if (d.find(',') != std::string::npos)
          throw ConfigError("--result directory names must not contain ','");
        o.results += (o.results.empty() ? "" : ",") + d;
      }
      o.bind(settings);
      const bool per_run = a->parsed();
      run = [&o, per_run](const fs::path& d, const RunConfig& cfg) { cmd_assess(o, d, cfg, per_run); };
    }
    if (!config_from.empty()) {
      const std::string command = s->parsed() ? "simulate" : c->parsed() ? "calibrate"
                                  : a->parsed() ? "assess" : "report";
      load_config(settings, config_from, command);
    }
    run(output_dir(out_dir), settings.serialize());
  });
}

}  // namespace spherecal
