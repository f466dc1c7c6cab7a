#include "spherecal/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "spherecal/errors.hpp"

namespace spherecal {

namespace {

// Line-oriented reader: collects "# key=value" comments, splits data rows
// into whitespace-separated fields and reports errors with line numbers.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::vector<std::string>& fields) {
    std::string text;
    while (std::getline(in_, text)) {
      ++line_;
      if (!text.empty() && text.back() == '\r') text.pop_back();
      if (text.empty()) continue;
      if (text[0] == '#') {
        comment(text);
        continue;
      }
      raw_ = text;
      fields.clear();
      std::istringstream ss(text);
      std::string f;
      while (ss >> f) fields.push_back(f);
      if (!fields.empty()) return true;
    }
    return false;
  }

  // Remainder of the current row after the first `skip` fields.
  std::string rest(std::size_t skip) const {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < skip; ++i) {
      pos = raw_.find_first_not_of(" \t", pos);
      pos = raw_.find_first_of(" \t", pos);
      if (pos == std::string::npos) return {};
    }
    pos = raw_.find_first_not_of(" \t", pos);
    return pos == std::string::npos ? std::string() : raw_.substr(pos);
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("line " + std::to_string(line_) + ": " + what);
  }

  double number(const std::string& text, const char* what) const {
    const char* begin = text.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || errno == ERANGE)
      fail(std::string("bad ") + what + " '" + text + "'");
    return v;
  }

  long integer(const std::string& text, const char* what) const {
    const char* begin = text.c_str();
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0' || errno == ERANGE)
      fail(std::string("bad ") + what + " '" + text + "'");
    return v;
  }

  void expect_fields(const std::vector<std::string>& f, std::size_t n) const {
    if (f.size() != n)
      fail("expected " + std::to_string(n) + " fields, found " + std::to_string(f.size()));
  }

  const std::string* header(const std::string& key) const {
    for (const auto& [k, v] : header_)
      if (k == key) return &v;
    return nullptr;
  }

  std::string require(const std::string& key) const {
    const std::string* v = header(key);
    if (!v) throw DataError("missing header entry '" + key + "'");
    return *v;
  }

  void require_format(const std::string& format) const {
    const std::string* v = header("format");
    if (!v || *v != format)
      throw DataError("not a " + format + " file" + (v ? " (format=" + *v + ")" : ""));
  }

  const Header& entries() const { return header_; }
  const RunConfig& config() const { return config_; }
  int line() const { return line_; }

 private:
  void comment(const std::string& text) {
    std::size_t start = text.find_first_not_of(" \t", 1);
    if (start == std::string::npos) return;
    const std::size_t eq = text.find('=', start);
    if (eq == std::string::npos) return;
    const std::string key = text.substr(start, eq - start);
    if (key.empty() || key.find_first_of(" \t") != std::string::npos) return;
    const std::string value = text.substr(eq + 1);
    if (key.rfind("config.", 0) == 0)
      config_[key.substr(7)] = value;
    else
      header_.emplace_back(key, value);
  }

  std::istream& in_;
  int line_ = 0;
  std::string raw_;
  Header header_;
  RunConfig config_;
};

void check_id(const std::string& id, const char* what) {
  if (id.empty() || id.find_first_of(" \t\r\n#") != std::string::npos || id == "-")
    throw DataError(std::string("invalid ") + what + " id '" + id + "'");
}

void put_header(std::ostream& out, const std::string& key, const std::string& value) {
  if (value.find('\n') != std::string::npos)
    throw ConfigError("header value for '" + key + "' contains a newline");
  out << "# " << key << '=' << value << '\n';
}

void put_config(std::ostream& out, const RunConfig& config) {
  for (const auto& [k, v] : config) put_header(out, "config." + k, v);
}

std::string join(std::initializer_list<double> values) {
  std::string s;
  for (double v : values) {
    if (!s.empty()) s += ' ';
    s += format_double(v);
  }
  return s;
}

void put_pose(std::ostream& out, const std::string& id, const CameraPose& p) {
  const Quat& q = p.orientation;
  out << "pose " << id << ' '
      << join({q.w(), q.x(), q.y(), q.z(), p.position.x(), p.position.y(), p.position.z()})
      << '\n';
}

CameraPose get_pose(const LineReader& r, const std::vector<std::string>& f) {
  r.expect_fields(f, 9);
  CameraPose p;
  p.orientation = Quat(r.number(f[2], "qw"), r.number(f[3], "qx"), r.number(f[4], "qy"),
                       r.number(f[5], "qz"));
  p.position = Vec3(r.number(f[6], "X"), r.number(f[7], "Y"), r.number(f[8], "Z"));
  return p;
}

Header model_header(const ProjectionModel& m) {
  Header h;
  h.emplace_back("model.kind", projection_name(m.kind));
  h.emplace_back("model.c", format_double(m.iop.c));
  h.emplace_back("model.xp", format_double(m.iop.xp));
  h.emplace_back("model.yp", format_double(m.iop.yp));
  h.emplace_back("model.brown", m.brown.mask.str());
  for (int t = 0; t < kBrownTermCount; ++t)
    h.emplace_back(std::string("model.") + brown_term_name(static_cast<BrownTerm>(t)),
                   format_double(m.brown.value[t]));
  h.emplace_back("model.ripple_amplitude", format_double(m.warp.ripple_amplitude));
  h.emplace_back("model.ripple_period", format_double(m.warp.ripple_period));
  h.emplace_back("model.trend_slope", format_double(m.warp.trend_slope));
  h.emplace_back("model.trend_r0", format_double(m.warp.trend_r0));
  h.emplace_back("model.half_fov", format_double(m.half_fov));
  h.emplace_back("model.sensor_width", format_double(m.sensor_width));
  h.emplace_back("model.sensor_height", format_double(m.sensor_height));
  return h;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& text, const std::string& what) {
  const char* begin = text.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE)
    throw DataError("bad " + what + " '" + text + "'");
  return v;
}

RunConfig read_config(std::istream& in) {
  LineReader r(in);
  std::vector<std::string> f;
  while (r.next(f)) {
  }
  return r.config();
}

void write_header(std::ostream& out, const std::string& format, const RunConfig& config) {
  put_header(out, "format", format);
  put_config(out, config);
}

void write_run_list(std::ostream& out, const std::vector<std::string>& labels,
                    const RunConfig& config) {
  write_header(out, "spherecal-runs", config);
  out << "# index label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty() || labels[i].find('\n') != std::string::npos)
      throw DataError("invalid run label");
    out << i + 1 << ' ' << labels[i] << '\n';
  }
}

std::vector<std::string> read_run_list(std::istream& in) {
  LineReader r(in);
  std::vector<std::string> labels;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (r.integer(f[0], "run index") != static_cast<long>(labels.size()) + 1)
      r.fail("runs out of order");
    const std::string label = r.rest(1);
    if (label.empty()) r.fail("missing run label");
    labels.push_back(label);
  }
  r.require_format("spherecal-runs");
  return labels;
}

// Observations ---------------------------------------------------------------

void write_observations(std::ostream& out, const ObservationSet& set, const RunConfig& config) {
  if (set.units != "px" && set.units != "mm") throw ConfigError("units must be px or mm");
  put_header(out, "format", "spherecal-observations");
  put_header(out, "units", set.units);
  put_header(out, "label", set.label);
  put_header(out, "nominal_c", format_double(set.nominal.c));
  put_header(out, "nominal_xp", format_double(set.nominal.xp));
  put_header(out, "nominal_yp", format_double(set.nominal.yp));
  put_config(out, config);
  out << "# exposure target x y sigma [sigma_y]\n";
  for (const auto& o : set.rows) {
    check_id(o.exposure, "exposure");
    check_id(o.target, "target");
    out << o.exposure << ' ' << o.target << ' ' << join({o.x, o.y, o.sigma_x});
    if (o.sigma_y != o.sigma_x) out << ' ' << format_double(o.sigma_y);
    out << '\n';
  }
}

ObservationSet read_observations(std::istream& in) {
  LineReader r(in);
  ObservationSet set;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != 5 && f.size() != 6)
      r.fail("expected 5 or 6 fields, found " + std::to_string(f.size()));
    ImageObservation o;
    o.exposure = f[0];
    o.target = f[1];
    o.x = r.number(f[2], "x");
    o.y = r.number(f[3], "y");
    o.sigma_x = r.number(f[4], "sigma");
    o.sigma_y = f.size() == 6 ? r.number(f[5], "sigma_y") : o.sigma_x;
    if (!(o.sigma_x > 0.0) || !(o.sigma_y > 0.0)) r.fail("sigma must be positive");
    set.rows.push_back(o);
  }
  r.require_format("spherecal-observations");
  set.units = r.require("units");
  if (set.units != "px" && set.units != "mm") throw DataError("units must be px or mm");
  set.label = r.require("label");
  set.nominal.c = parse_double(r.require("nominal_c"), "nominal_c");
  set.nominal.xp = parse_double(r.require("nominal_xp"), "nominal_xp");
  set.nominal.yp = parse_double(r.require("nominal_yp"), "nominal_yp");
  return set;
}

// Targets --------------------------------------------------------------------

void write_targets(std::ostream& out, const std::vector<TargetRow>& rows, const RunConfig& config) {
  put_header(out, "format", "spherecal-targets");
  put_header(out, "units", "m");
  put_config(out, config);
  out << "# id X Y Z [sigma_X sigma_Y sigma_Z] control\n";
  for (const auto& t : rows) {
    check_id(t.point.id, "target");
    if (t.control && !t.has_sigma) throw DataError("control target " + t.point.id + " has no sigma");
    const Vec3& p = t.point.coords;
    out << t.point.id << ' ' << join({p.x(), p.y(), p.z()});
    if (t.has_sigma) out << ' ' << join({t.sigma.x(), t.sigma.y(), t.sigma.z()});
    out << ' ' << (t.control ? 1 : 0) << '\n';
  }
}

std::vector<TargetRow> read_targets(std::istream& in) {
  LineReader r(in);
  std::vector<TargetRow> rows;
  std::unordered_set<std::string> seen;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != 5 && f.size() != 8)
      r.fail("expected 5 or 8 fields, found " + std::to_string(f.size()));
    TargetRow t;
    t.point.id = f[0];
    if (!seen.insert(t.point.id).second) r.fail("duplicate target id " + t.point.id);
    t.point.coords = Vec3(r.number(f[1], "X"), r.number(f[2], "Y"), r.number(f[3], "Z"));
    if (f.size() == 8) {
      t.has_sigma = true;
      t.sigma = Vec3(r.number(f[4], "sigma_X"), r.number(f[5], "sigma_Y"), r.number(f[6], "sigma_Z"));
    }
    const long flag = r.integer(f.back(), "control flag");
    if (flag != 0 && flag != 1) r.fail("control flag must be 0 or 1");
    t.control = flag == 1;
    if (t.control && !t.has_sigma) r.fail("control target " + t.point.id + " has no sigma");
    rows.push_back(t);
  }
  r.require_format("spherecal-targets");
  return rows;
}

std::vector<ObjectPoint> target_points(const std::vector<TargetRow>& rows) {
  std::vector<ObjectPoint> pts;
  pts.reserve(rows.size());
  for (const auto& t : rows) pts.push_back(t.point);
  return pts;
}

// Truth ----------------------------------------------------------------------

TruthSet truth_set(const Simulation& sim) {
  TruthSet t;
  t.model = model_header(sim.truth.model);
  t.points = sim.truth.scene.points;
  t.exposures = sim.truth.rig.exposures;
  t.poses = sim.truth.rig.poses;
  for (std::size_t k = 0; k < sim.observations.size(); ++k)
    t.observations.push_back({sim.observations[k].exposure, sim.observations[k].target,
                              static_cast<bool>(sim.truth.outlier[k]), sim.truth.hemisphere[k],
                              sim.truth.incidence[k]});
  return t;
}

void write_truth(std::ostream& out, const TruthSet& truth, const RunConfig& config) {
  put_header(out, "format", "spherecal-truth");
  put_header(out, "source", "oracle");
  for (const auto& [k, v] : truth.model) put_header(out, k, v);
  put_config(out, config);
  out << "# point id X Y Z | pose id qw qx qy qz X Y Z | obs exposure target outlier sign incidence\n";
  for (const auto& p : truth.points) {
    check_id(p.id, "target");
    out << "point " << p.id << ' ' << join({p.coords.x(), p.coords.y(), p.coords.z()}) << '\n';
  }
  if (truth.exposures.size() != truth.poses.size()) throw DataError("truth pose count mismatch");
  for (std::size_t j = 0; j < truth.poses.size(); ++j) {
    check_id(truth.exposures[j], "exposure");
    put_pose(out, truth.exposures[j], truth.poses[j]);
  }
  for (const auto& o : truth.observations)
    out << "obs " << o.exposure << ' ' << o.target << ' ' << (o.outlier ? 1 : 0) << ' '
        << (o.hemisphere < 0.0 ? -1 : 1) << ' ' << format_double(o.incidence) << '\n';
}

TruthSet read_truth(std::istream& in) {
  LineReader r(in);
  TruthSet t;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f[0] == "point") {
      r.expect_fields(f, 5);
      t.points.push_back({f[1], Vec3(r.number(f[2], "X"), r.number(f[3], "Y"), r.number(f[4], "Z"))});
    } else if (f[0] == "pose") {
      t.exposures.push_back(f[1]);
      t.poses.push_back(get_pose(r, f));
    } else if (f[0] == "obs") {
      r.expect_fields(f, 6);
      TruthObservation o;
      o.exposure = f[1];
      o.target = f[2];
      const long flag = r.integer(f[3], "outlier flag");
      const long sign = r.integer(f[4], "hemisphere sign");
      if ((flag != 0 && flag != 1) || (sign != 1 && sign != -1)) r.fail("bad observation flags");
      o.outlier = flag == 1;
      o.hemisphere = static_cast<double>(sign);
      o.incidence = r.number(f[5], "incidence");
      t.observations.push_back(o);
    } else {
      r.fail("unknown row type '" + f[0] + "'");
    }
  }
  r.require_format("spherecal-truth");
  for (const auto& [k, v] : r.entries())
    if (k.rfind("model.", 0) == 0) t.model.emplace_back(k, v);
  return t;
}

// Adjusted network -----------------------------------------------------------

ResultRun result_run(const std::string& label, const AdjustmentResult& r) {
  ResultRun run;
  run.label = label;
  run.network = r.network;
  run.cost = r.cost;
  run.raw_cost = r.raw_cost;
  run.objective = r.objective;
  run.variance_factor = r.variance_factor;
  run.redundancy = r.redundancy;
  run.iterations = r.iterations;
  run.converged = r.converged;
  run.sigma_c = r.sigma_c;
  run.sigma_xp = r.sigma_xp;
  run.sigma_yp = r.sigma_yp;
  run.sigma_brown = r.sigma_brown;
  return run;
}

void write_network(std::ostream& out, const ResultRun& run, const RunConfig& config) {
  put_header(out, "format", "spherecal-network");
  put_header(out, "label", run.label);
  put_header(out, "cost", format_double(run.cost));
  put_header(out, "raw_cost", format_double(run.raw_cost));
  put_header(out, "objective", format_double(run.objective));
  put_header(out, "variance_factor", format_double(run.variance_factor));
  put_header(out, "redundancy", std::to_string(run.redundancy));
  put_header(out, "iterations", std::to_string(run.iterations));
  put_header(out, "converged", run.converged ? "1" : "0");
  put_header(out, "sigma_c", format_double(run.sigma_c));
  put_header(out, "sigma_xp", format_double(run.sigma_xp));
  put_header(out, "sigma_yp", format_double(run.sigma_yp));
  for (int t = 0; t < kBrownTermCount; ++t)
    put_header(out, std::string("sigma_") + brown_term_name(static_cast<BrownTerm>(t)),
               format_double(run.sigma_brown[t]));
  put_config(out, config);
  const Network& n = run.network;
  out << "iop " << join({n.iop.c, n.iop.xp, n.iop.yp}) << '\n';
  out << "brown " << n.brown.mask.str();
  for (double v : n.brown.value) out << ' ' << format_double(v);
  out << '\n';
  for (std::size_t j = 0; j < n.poses.size(); ++j) {
    check_id(n.exposures[j], "exposure");
    put_pose(out, n.exposures[j], n.poses[j]);
  }
  for (const auto& p : n.points) {
    check_id(p.id, "target");
    out << "point " << p.id << ' ' << join({p.coords.x(), p.coords.y(), p.coords.z()}) << '\n';
  }
}

ResultRun read_network(std::istream& in) {
  LineReader r(in);
  ResultRun run;
  bool have_iop = false, have_brown = false;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f[0] == "iop") {
      r.expect_fields(f, 4);
      run.network.iop = {r.number(f[1], "c"), r.number(f[2], "xp"), r.number(f[3], "yp")};
      have_iop = true;
    } else if (f[0] == "brown") {
      r.expect_fields(f, 2 + kBrownTermCount);
      try {
        run.network.brown.mask = BrownMask::parse(f[1]);
      } catch (const ConfigError& e) {
        r.fail(e.what());
      }
      for (int t = 0; t < kBrownTermCount; ++t)
        run.network.brown.value[t] = r.number(f[2 + t], "Brown coefficient");
      have_brown = true;
    } else if (f[0] == "pose") {
      run.network.exposures.push_back(f[1]);
      run.network.poses.push_back(get_pose(r, f));
    } else if (f[0] == "point") {
      r.expect_fields(f, 5);
      run.network.points.push_back(
          {f[1], Vec3(r.number(f[2], "X"), r.number(f[3], "Y"), r.number(f[4], "Z"))});
    } else {
      r.fail("unknown row type '" + f[0] + "'");
    }
  }
  r.require_format("spherecal-network");
  if (!have_iop || !have_brown) throw DataError("network file lacks iop or brown row");
  run.label = r.require("label");
  run.cost = parse_double(r.require("cost"), "cost");
  run.raw_cost = parse_double(r.require("raw_cost"), "raw_cost");
  run.objective = parse_double(r.require("objective"), "objective");
  run.variance_factor = parse_double(r.require("variance_factor"), "variance_factor");
  run.redundancy = static_cast<long>(parse_double(r.require("redundancy"), "redundancy"));
  run.iterations = static_cast<int>(parse_double(r.require("iterations"), "iterations"));
  run.converged = r.require("converged") == "1";
  run.sigma_c = parse_double(r.require("sigma_c"), "sigma_c");
  run.sigma_xp = parse_double(r.require("sigma_xp"), "sigma_xp");
  run.sigma_yp = parse_double(r.require("sigma_yp"), "sigma_yp");
  for (int t = 0; t < kBrownTermCount; ++t) {
    const std::string key = std::string("sigma_") + brown_term_name(static_cast<BrownTerm>(t));
    run.sigma_brown[t] = parse_double(r.require(key), key);
  }
  return run;
}

// Residuals ------------------------------------------------------------------

std::vector<ResidualRow> residual_rows(const std::vector<ImageObservation>& obs,
                                       const AdjustmentResult& r,
                                       const std::vector<Vec2>& corrections) {
  if (r.residuals.size() != obs.size()) throw DataError("residual count mismatch");
  std::vector<ResidualRow> rows(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) {
    rows[k].observation = obs[k];
    rows[k].residual = r.residuals[k];
    rows[k].weight = r.weights[k];
    if (!corrections.empty()) rows[k].correction = corrections[k];
  }
  return rows;
}

void write_residuals(std::ostream& out, const std::vector<ResidualRow>& rows,
                     const RunConfig& config) {
  put_header(out, "format", "spherecal-residuals");
  put_config(out, config);
  out << "# exposure target x y sigma_x sigma_y vx vy weight dx dy\n";
  for (const auto& row : rows) {
    const auto& o = row.observation;
    check_id(o.exposure, "exposure");
    check_id(o.target, "target");
    out << o.exposure << ' ' << o.target << ' '
        << join({o.x, o.y, o.sigma_x, o.sigma_y, row.residual.x(), row.residual.y(), row.weight,
                 row.correction.x(), row.correction.y()})
        << '\n';
  }
}

std::vector<ResidualRow> read_residuals(std::istream& in) {
  LineReader r(in);
  std::vector<ResidualRow> rows;
  std::vector<std::string> f;
  while (r.next(f)) {
    r.expect_fields(f, 11);
    ResidualRow row;
    row.observation.exposure = f[0];
    row.observation.target = f[1];
    row.observation.x = r.number(f[2], "x");
    row.observation.y = r.number(f[3], "y");
    row.observation.sigma_x = r.number(f[4], "sigma_x");
    row.observation.sigma_y = r.number(f[5], "sigma_y");
    row.residual = Vec2(r.number(f[6], "vx"), r.number(f[7], "vy"));
    row.weight = r.number(f[8], "weight");
    row.correction = Vec2(r.number(f[9], "dx"), r.number(f[10], "dy"));
    rows.push_back(row);
  }
  r.require_format("spherecal-residuals");
  return rows;
}

// Exclusions -----------------------------------------------------------------

void write_exclusions(std::ostream& out, const std::vector<ExclusionEntry>& rows,
                      const RunConfig& config) {
  put_header(out, "format", "spherecal-exclusions");
  put_config(out, config);
  out << "# exposure reason\n";
  for (const auto& e : rows) {
    check_id(e.exposure, "exposure");
    if (e.reason.find('\n') != std::string::npos) throw DataError("reason contains a newline");
    out << e.exposure << ' ' << e.reason << '\n';
  }
}

std::vector<ExclusionEntry> read_exclusions(std::istream& in) {
  LineReader r(in);
  std::vector<ExclusionEntry> rows;
  std::vector<std::string> f;
  while (r.next(f)) rows.push_back({f[0], r.rest(1)});
  r.require_format("spherecal-exclusions");
  return rows;
}

// Correction map -------------------------------------------------------------

void write_correction_map(std::ostream& out, const CorrectionMap& map, const RunConfig& config) {
  put_header(out, "format", "spherecal-correction-map");
  put_header(out, "weighting", "inverse_distance");
  put_header(out, "layers", std::to_string(map.layer_count()));
  put_config(out, config);
  out << "# layer index k xp yp cv_score count\n";
  out << "# sample exposure target xbar ybar dx dy weight\n";
  for (std::size_t i = 0; i < map.layer_count(); ++i) {
    const CorrectionLayer& l = map.layer(i);
    const auto& samples = l.regressor.samples();
    out << "layer " << i + 1 << ' ' << l.regressor.k() << ' ' << join({l.xp, l.yp, l.cv_score})
        << ' ' << samples.size() << '\n';
    for (std::size_t s = 0; s < samples.size(); ++s) {
      std::string exposure = "-", target = "-";
      if (!l.keys.empty()) {
        const std::string& key = l.keys[s];
        const std::size_t sep = key.find('\x1f');
        if (sep == std::string::npos) throw DataError("malformed sample key");
        exposure = key.substr(0, sep);
        target = key.substr(sep + 1);
        check_id(exposure, "exposure");
        check_id(target, "target");
      }
      const auto& smp = samples[s];
      out << "sample " << exposure << ' ' << target << ' '
          << join({smp.feature.x(), smp.feature.y(), smp.label.x(), smp.label.y(), smp.weight})
          << '\n';
    }
  }
}

CorrectionMap read_correction_map(std::istream& in) {
  LineReader r(in);
  CorrectionMap map;
  struct Pending {
    CorrectionLayer layer;
    std::vector<KnnSample> samples;
    std::size_t k = 0, count = 0;
    int line = 0;
    bool keyed = false, unkeyed = false;
  };
  std::vector<Pending> layers;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f[0] == "layer") {
      r.expect_fields(f, 7);
      if (r.integer(f[1], "layer index") != static_cast<long>(layers.size()) + 1)
        r.fail("layers out of order");
      Pending p;
      const long k = r.integer(f[2], "k");
      const long count = r.integer(f[6], "count");
      if (k < 1 || count < 1) r.fail("k and count must be positive");
      p.k = static_cast<std::size_t>(k);
      p.count = static_cast<std::size_t>(count);
      p.layer.xp = r.number(f[3], "xp");
      p.layer.yp = r.number(f[4], "yp");
      p.layer.cv_score = r.number(f[5], "cv_score");
      p.line = r.line();
      layers.push_back(std::move(p));
    } else if (f[0] == "sample") {
      r.expect_fields(f, 8);
      if (layers.empty()) r.fail("sample before any layer");
      Pending& p = layers.back();
      KnnSample s;
      s.feature = Vec2(r.number(f[3], "xbar"), r.number(f[4], "ybar"));
      s.label = Vec2(r.number(f[5], "dx"), r.number(f[6], "dy"));
      s.weight = r.number(f[7], "weight");
      p.samples.push_back(s);
      if (f[1] == "-" && f[2] == "-") {
        p.unkeyed = true;
      } else {
        p.keyed = true;
        p.layer.keys.push_back(observation_key(f[1], f[2]));
      }
      if (p.keyed && p.unkeyed) r.fail("layer mixes keyed and unkeyed samples");
    } else {
      r.fail("unknown row type '" + f[0] + "'");
    }
  }
  r.require_format("spherecal-correction-map");
  for (auto& p : layers) {
    if (p.samples.size() != p.count)
      throw DataError("line " + std::to_string(p.line) + ": layer declares " +
                      std::to_string(p.count) + " samples, found " +
                      std::to_string(p.samples.size()));
    if (p.k > p.count)
      throw DataError("line " + std::to_string(p.line) + ": k exceeds sample count");
    p.layer.regressor = KnnRegressor(std::move(p.samples), p.k);
    try {
      map.add_layer(std::move(p.layer));
    } catch (const ConfigError& e) {
      throw DataError(e.what());
    }
  }
  const std::size_t declared =
      static_cast<std::size_t>(parse_double(r.require("layers"), "layers"));
  if (declared != map.layer_count()) throw DataError("layer count does not match header");
  return map;
}

}  // namespace spherecal
